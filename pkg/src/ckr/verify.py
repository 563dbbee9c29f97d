"""Empirical checks of every error and generalization bound over random instances.

Each suite maps a seed to a list of check rows. A row is one of three kinds:

* ``always``: must hold on every seed (deterministic bounds);
* ``event``:  must hold on every seed where the sandwich event occurred;
* ``rate``:   a probabilistic statement; the failure fraction over seeds must
  stay below ``delta + slack`` (binomial slack, 0.05 by default).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .kernels import KernelSpec, gram, perturb
from .learner import LearnerConfig, evaluate, schedule, train, verify_generalization
from .nystrom import LOWER_TOL, build_sketch
from .solver import decompose_errors
from .synth import TeacherNetwork, gen_dataset

SUITES = ("lemma1", "total-error", "compression", "sandwich", "bits", "generalization")
ROW_COLUMNS = ["suite", "seed", "eps", "m", "kernel", "check", "kind", "measured", "bound",
               "margin", "event", "holds"]
SUMMARY_COLUMNS = ["suite", "check", "kind", "instances", "applicable", "passed", "failed",
                   "event_rate", "fail_rate", "allowed_rate", "min_margin", "status"]
ABS_TOL = 1e-7


@dataclass(frozen=True)
class SuiteConfig:
    seeds: int = 50
    first_seed: int = 0
    eps_grid: tuple = (0.1, 0.25, 0.5)
    delta: float = 0.05
    slack: float = 0.05
    m_min: int = 20
    m_max: int = 120
    n: int = 5
    log2_B_grid: tuple = (2.0, 4.0, 6.0)
    oversampling: float = 8.0
    gen_m: int = 2000
    gen_eps: float = 0.5
    # the compression bound needs k <= m/2; a linear kernel with light oversampling keeps
    # |I| (and hence k) small enough at m = 2000 for the bound to apply
    gen_kernel: str = "linear"
    gen_oversampling: float = 1.0
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Instance:
    seed: int
    data: object
    kernel: KernelSpec
    log2_B: float
    teacher: TeacherNetwork


def make_instance(seed: int, cfg: SuiteConfig, m: int | None = None) -> Instance:
    """Random teacher-labelled sphere data with a randomly chosen kernel and budget."""
    rng = np.random.default_rng([seed, 7919])
    if m is None:
        m = int(rng.integers(cfg.m_min, cfg.m_max + 1))
    kernels = (KernelSpec.rbf(float(rng.uniform(0.5, 1.5))), KernelSpec.multinomial(2),
               KernelSpec.composed(1))
    kernel = kernels[int(rng.integers(len(kernels)))]
    intrinsic = int(rng.integers(2, cfg.n + 1))
    teacher = TeacherNetwork.random(cfg.n, 0, activation="relu", seed=int(rng.integers(2 ** 31)))
    data = gen_dataset(m, cfg.n, teacher, label_noise=0.05, seed=int(rng.integers(2 ** 31)),
                       intrinsic_dim=intrinsic)
    log2_B = float(cfg.log2_B_grid[int(rng.integers(len(cfg.log2_B_grid)))])
    return Instance(seed, data, kernel, log2_B, teacher)


def _row(suite, inst, eps, check, kind, measured, bound, event=True, holds=None):
    if holds is None:
        holds = measured <= bound + ABS_TOL
    return {"suite": suite, "seed": inst.seed, "eps": eps, "m": inst.data.m,
            "kernel": str(inst.kernel), "check": check, "kind": kind,
            "measured": float(measured), "bound": float(bound),
            "margin": float(bound - measured), "event": bool(event), "holds": bool(holds)}


def _chain_rows(inst: Instance, cfg: SuiteConfig, suite: str) -> list[dict]:
    K = gram(inst.data, inst.kernel)
    Y = inst.data.labels
    B = 2.0 ** inst.log2_B
    rows = []
    for eps in cfg.eps_grid:
        lc = LearnerConfig(eps, cfg.delta, inst.log2_B, inst.kernel, seed=inst.seed,
                           oversampling=cfg.oversampling)
        sch = schedule(lc, inst.data.m)
        Kg = perturb(K, sch.gamma)
        sk = build_sketch(Kg, sch.eta, cfg.delta / 4, inst.seed, cfg.oversampling, check=True)
        dec = decompose_errors(K, Y, sch.lam, sch.gamma, sch.eta, B, sk)
        ev = dec.sandwich_event
        if suite == "lemma1":
            rows.append(_row(suite, inst, eps, "relaxation", "always",
                             dec.r_lagrangian - dec.r_bounded, dec.bound_relaxation))
            rows.append(_row(suite, inst, eps, "precondition", "always",
                             dec.r_perturbed - dec.r_lagrangian, dec.bound_precondition))
            rows.append(_row(suite, inst, eps, "sparsify", "event",
                             dec.r_sketched - dec.r_perturbed, dec.bound_sparsify, ev))
        elif suite == "total-error":
            rows.append(_row(suite, inst, eps, "total", "event",
                             dec.loss_sparse - dec.loss_bounded, eps, ev))
        elif suite == "compression":
            h, rep = train(inst.data, lc)
            rows.append(_row(suite, inst, eps, "excess_loss", "event",
                             evaluate(h, inst.data) - dec.loss_bounded, eps,
                             bool(rep.sandwich_event)))
    return rows


def suite_lemma1(inst, cfg):
    return _chain_rows(inst, cfg, "lemma1")


def suite_total_error(inst, cfg):
    return _chain_rows(inst, cfg, "total-error")


def suite_compression(inst, cfg):
    return _chain_rows(inst, cfg, "compression")


def suite_sandwich(inst, cfg):
    eps = cfg.eps_grid[inst.seed % len(cfg.eps_grid)]
    lc = LearnerConfig(eps, cfg.delta, inst.log2_B, inst.kernel)
    sch = schedule(lc, inst.data.m)
    Kg = perturb(gram(inst.data, inst.kernel), sch.gamma)
    sk = build_sketch(Kg, sch.eta, cfg.delta, inst.seed, cfg.oversampling, check=True)
    sw = sk.sandwich
    return [
        _row("sandwich", inst, eps, "lower", "always", -sw.lower_min_eig, LOWER_TOL * sw.scale,
             holds=sw.lower_holds),
        _row("sandwich", inst, eps, "upper", "rate", sw.upper_gap, sw.eta_m, holds=sw.upper_holds),
    ]


def suite_bits(inst, cfg):
    rows = []
    for eps in cfg.eps_grid:
        lc = LearnerConfig(eps, cfg.delta, inst.log2_B, inst.kernel, seed=inst.seed,
                           oversampling=cfg.oversampling, check_sandwich=False)
        h, rep = train(inst.data, lc)
        b = rep.bits
        rows.append(_row("bits", inst, eps, "side_info_bits", "always",
                         b["side_info_bits_total"], b["envelope"]))
        rows.append(_row("bits", inst, eps, "alpha_star_norm", "always",
                         h.meta["alpha_star_norm"], b["norm_cap"]))
    return rows


def suite_generalization(inst, cfg):
    # one draw of 2m points from the instance's distribution, split into train and test
    rng = np.random.default_rng([inst.seed, 1299709])
    intrinsic = int(rng.integers(2, cfg.n + 1))
    full = gen_dataset(2 * cfg.gen_m, cfg.n, inst.teacher, 0.05, int(rng.integers(2 ** 31)),
                       intrinsic)
    tr, te = full.subset(slice(0, cfg.gen_m)), full.subset(slice(cfg.gen_m, None))
    kernel = KernelSpec.parse(cfg.gen_kernel)
    lc = LearnerConfig(cfg.gen_eps, cfg.delta, inst.log2_B, kernel, seed=inst.seed,
                       oversampling=cfg.gen_oversampling, check_sandwich=False)
    rep = verify_generalization(tr, te, lc, teacher=inst.teacher)
    g = Instance(inst.seed, tr, kernel, inst.log2_B, inst.teacher)
    if rep.status != "ok":
        return [_row("generalization", g, cfg.gen_eps, "gap", "rate", rep.gap, math.nan,
                     event=False, holds=True)]
    return [
        _row("generalization", g, cfg.gen_eps, "gap", "rate", rep.gap, rep.gap_bound),
        _row("generalization", g, cfg.gen_eps, "chain", "rate", rep.test_loss, rep.chain_rhs),
    ]


RUNNERS = {"lemma1": suite_lemma1, "total-error": suite_total_error,
           "compression": suite_compression, "sandwich": suite_sandwich,
           "bits": suite_bits, "generalization": suite_generalization}


def _run_one(args):
    suite, seed, cfg = args
    # the generalization suite draws its own large samples from the instance teacher
    inst = make_instance(seed, cfg, m=cfg.m_min if suite == "generalization" else None)
    return RUNNERS[suite](inst, cfg)


def run_suite(suite: str, cfg: SuiteConfig) -> list[dict]:
    """Rows for every seed, sorted by seed regardless of worker count."""
    names = SUITES if suite == "all" else (suite,)
    for s in names:
        if s not in RUNNERS:
            raise ValueError(f"unknown suite {s!r}; expected one of {SUITES + ('all',)}")
    jobs = [(s, seed, cfg) for s in names
            for seed in range(cfg.first_seed, cfg.first_seed + cfg.seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(_run_one, jobs))
    else:
        chunks = [_run_one(j) for j in jobs]
    rows = [r for c in chunks for r in c]
    order = {s: i for i, s in enumerate(SUITES)}
    rows.sort(key=lambda r: (order[r["suite"]], r["seed"]))
    return rows


def summarize(rows: list[dict], cfg: SuiteConfig) -> list[dict]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["suite"], r["check"], r["kind"]), []).append(r)
    out = []
    for (suite, check, kind), rs in groups.items():
        n = len(rs)
        events = sum(r["event"] for r in rs)
        app = rs if kind == "always" else [r for r in rs if r["event"]] if kind == "event" else rs
        failed = sum(not r["holds"] for r in app)
        margins = [r["margin"] for r in app if not math.isnan(r["margin"])]
        rate = failed / len(app) if app else 0.0
        allowed = cfg.delta + cfg.slack if kind == "rate" else 0.0
        ok = rate <= allowed if kind == "rate" else failed == 0
        out.append({"suite": suite, "check": check, "kind": kind, "instances": n,
                    "applicable": len(app), "passed": len(app) - failed, "failed": failed,
                    "event_rate": events / n if n else 0.0, "fail_rate": rate,
                    "allowed_rate": allowed, "min_margin": min(margins) if margins else math.nan,
                    "status": "PASS" if ok else "FAIL"})
    return out


def all_pass(summary: list[dict]) -> bool:
    return all(s["status"] == "PASS" for s in summary)
