"""Compressed kernel regression end to end.

Pipeline: Gram matrix -> K_gamma = K + gamma m I -> leverage-sampled Nystrom
sketch at ridge eta m -> sketched ridge solve -> sparse coefficients ->
truncation -> clipped kernel expansion.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import compression as cmp
from .kernels import Dataset, KernelSpec, gram, perturb
from .nystrom import OVERSAMPLING, build_sketch
from .solver import data_fit, solve_bounded_oracle, solve_sketched
from .spectral import Spectrum, effective_dimension, fit_decay, spectrum

# denominators of the published parameter schedule
LAMBDA_DENOM = 324.0
ETA_DENOM = 5832.0


class CompressionTooLarge(RuntimeError):
    """Compression size k exceeds m/2, so the sample-compression bound does not apply."""


@dataclass(frozen=True)
class LearnerConfig:
    eps: float
    delta: float
    log2_B: float
    kernel: KernelSpec
    M: float | None = None          # defaults to the kernel's bound
    seed: int = 0
    oversampling: float = OVERSAMPLING
    check_sandwich: bool = True
    strict: bool = False            # raise CompressionTooLarge when k > m/2
    timings: bool = False

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must be in (0, 1]")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0, 1)")
        if self.log2_B < 0:
            raise ValueError("B must be at least 1")
        if self.M is None:
            object.__setattr__(self, "M", self.kernel.bound())
        if self.M < 1:
            raise ValueError("M must be at least 1")

    @classmethod
    def with_B(cls, eps, delta, B, kernel, **kw) -> "LearnerConfig":
        return cls(eps, delta, math.log2(B), kernel, **kw)

    @property
    def B(self) -> float:
        return 2.0 ** self.log2_B if self.log2_B < 1024 else math.inf

    def to_dict(self) -> dict:
        return {"eps": self.eps, "delta": self.delta, "log2_B": self.log2_B,
                "kernel": self.kernel.to_dict(), "M": self.M, "seed": self.seed,
                "oversampling": self.oversampling}


@dataclass(frozen=True)
class ParameterSchedule:
    lam: float
    eta: float
    gamma: float
    m: int

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "eta": self.eta, "gamma": self.gamma, "m": self.m}


def _div_by_B(x: float, log2_B: float) -> float:
    # x / B computed in the log domain; B itself may not be representable
    out = math.ldexp(x, 0) * 2.0 ** (-log2_B) if log2_B < 1000 else math.exp(
        math.log(x) - log2_B * math.log(2))
    if out == 0.0:
        raise OverflowError(f"schedule underflows for log2 B = {log2_B}")
    return out


def schedule(cfg: LearnerConfig, m: int) -> ParameterSchedule:
    """lam = eps^2/(324 B), eta = eps^3/(5832 B), gamma = eta/m."""
    if m < 1:
        raise ValueError("m must be positive")
    lam = _div_by_B(cfg.eps ** 2 / LAMBDA_DENOM, cfg.log2_B)
    eta = _div_by_B(cfg.eps ** 3 / ETA_DENOM, cfg.log2_B)
    return ParameterSchedule(lam, eta, eta / m, m)


def evaluate(h: cmp.CompressedHypothesis, data: Dataset) -> float:
    """Mean square loss of h on a labelled dataset."""
    if data.labels is None:
        raise ValueError("dataset has no labels")
    r = h.predict(data.points) - data.labels
    return float(np.mean(r * r))


@dataclass
class TrainReport:
    config: dict
    schedule: dict
    m: int
    n: int
    subsample_size: int
    effective_dimension: float
    decay_profile: dict
    sandwich: dict | None
    empirical_loss: float
    sparse_fit: float               # (1/m)||K_gamma a* - Y||^2, before truncation
    bits: dict
    k_size: int
    applicable: bool
    compression_bound: float | None
    rademacher_bound: float
    timings: dict = field(default_factory=dict)

    @property
    def sandwich_event(self) -> bool | None:
        return None if self.sandwich is None else bool(self.sandwich["upper_holds"])

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if not d["timings"]:
            d.pop("timings")
        return d


def _rademacher(M: float, log2_B: float, m: int, delta: float) -> float:
    W = 2.0 ** (log2_B / 2) if log2_B < 2000 else math.inf
    return cmp.rademacher_baseline_bound(math.sqrt(M), W, 2.0, 1.0, m, delta)


def train(data: Dataset, cfg: LearnerConfig) -> tuple[cmp.CompressedHypothesis, TrainReport]:
    """Fit a compressed hypothesis; returns it with a run report.

    The Nystrom step receives delta/4, one tranche of the overall failure
    budget. A failed sandwich check is recorded, not raised.
    """
    if data.labels is None:
        raise ValueError("training data needs labels")
    m = data.m
    if m < 2:
        raise ValueError("need at least two samples")
    clock = {}
    t0 = time.perf_counter()
    sch = schedule(cfg, m)
    K = gram(data, cfg.kernel)
    Kg = perturb(K, sch.gamma)
    clock["gram"] = time.perf_counter() - t0

    t = time.perf_counter()
    sketch = build_sketch(Kg, sch.eta, cfg.delta / 4, cfg.seed, cfg.oversampling,
                          check=cfg.check_sandwich)
    clock["sketch"] = time.perf_counter() - t

    t = time.perf_counter()
    _, star = solve_sketched(sketch, Kg, data.labels, sch.lam)
    h = cmp.compress(star.alpha, data.points, sketch.selected, cfg.eps, cfg.M, sch.gamma,
                     cfg.kernel, meta={"eps": cfg.eps, "delta": cfg.delta, "log2_B": cfg.log2_B,
                                       "M": cfg.M, "seed": cfg.seed})
    clock["solve"] = time.perf_counter() - t

    t = time.perf_counter()
    spec = spectrum(K)
    # K_gamma shares eigenvectors with K; its eigenvalues shift by gamma m
    d_eff = effective_dimension(Spectrum(spec.eigenvalues + sch.gamma * m, False), sch.eta)
    prof = fit_decay(Spectrum(spec.eigenvalues / m, True), eta=sch.eta)
    clock["diagnostics"] = time.perf_counter() - t

    bits = cmp.bit_complexity(h)
    k = bits.k_size
    h.meta.update(k_size=k, side_info_bits=bits.side_info_bits_total)
    applicable = k <= m / 2
    if cfg.strict and not applicable:
        raise CompressionTooLarge(f"compression larger than sample: k = {k} > m/2 = {m / 2}")
    loss = evaluate(h, data)
    bound = cmp.compression_generalization_bound(k, m, cfg.delta / 4, loss) if applicable else None
    clock["total"] = time.perf_counter() - t0
    report = TrainReport(
        config=cfg.to_dict(), schedule=sch.to_dict(), m=m, n=data.n,
        subsample_size=sketch.size, effective_dimension=d_eff,
        decay_profile=prof.to_dict(),
        sandwich=None if sketch.sandwich is None else sketch.sandwich.to_dict(),
        empirical_loss=loss, sparse_fit=star.objective, bits=bits.to_dict(), k_size=k,
        applicable=applicable, compression_bound=bound,
        rademacher_bound=_rademacher(cfg.M, cfg.log2_B, m, cfg.delta),
        timings=clock if cfg.timings else {},
    )
    return h, report


def oracle_loss(data: Dataset, cfg: LearnerConfig, K: np.ndarray | None = None) -> float:
    """Empirical loss of the best norm-bounded kernel predictor (the comparison target)."""
    if K is None:
        K = gram(data, cfg.kernel)
    if not math.isfinite(cfg.B):
        raise OverflowError("B too large for the bounded oracle")
    sol = solve_bounded_oracle(K, data.labels, cfg.B)
    return data_fit(K, sol.alpha, data.labels)


@dataclass(frozen=True)
class GeneralizationReport:
    status: str                     # "ok" | "inapplicable"
    m: int
    train_loss: float
    test_loss: float
    k_size: int
    eps2: float
    eps3: float | None
    gap_bound: float | None         # 2 sqrt(eps3)
    gap_ok: bool | None
    vacuous: bool | None
    teacher_loss: float | None
    chain_rhs: float | None
    chain_ok: bool | None

    @property
    def gap(self) -> float:
        return abs(self.test_loss - self.train_loss)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["gap"] = self.gap
        return d


def verify_generalization(train_data: Dataset, test_data: Dataset, cfg: LearnerConfig,
                          teacher=None, approx_eps: float = 0.0) -> GeneralizationReport:
    """Train, then compare the train/test gap with the compression bound.

    ``eps3 = 50 (k log(m/k) + log(4/delta)) / m`` and ``eps2 = sqrt(log(4/delta)/(2m))``.
    With a ``teacher`` the full chain
    ``test <= teacher_test_loss + 2 approx_eps + eps + eps2 + 2 sqrt(eps3)`` is also checked.
    """
    h, rep = train(train_data, cfg)
    m = train_data.m
    tr, te = rep.empirical_loss, evaluate(h, test_data)
    k = rep.k_size
    eps2 = math.sqrt(math.log(4 / cfg.delta) / (2 * m))
    t_loss = None
    if teacher is not None:
        r = teacher(test_data.points) - test_data.labels
        t_loss = float(np.mean(r * r))
    if k > m / 2:
        return GeneralizationReport("inapplicable", m, tr, te, k, eps2, None, None, None, None,
                                    t_loss, None, None)
    eps3 = cmp.compression_epsilon(k, m, cfg.delta / 4)
    gap_bound = 2 * math.sqrt(eps3)
    rhs = ok = None
    if t_loss is not None:
        rhs = t_loss + 2 * approx_eps + cfg.eps + eps2 + gap_bound
        ok = te <= rhs
    return GeneralizationReport("ok", m, tr, te, k, eps2, eps3, gap_bound,
                                abs(te - tr) <= gap_bound, gap_bound > 1, t_loss, rhs, ok)
