"""ckr command line: gen, spectrum, train, predict, verify, report.

Exit codes: 0 success, 1 usage or input error, 2 a verification check
failed, 3 a precondition made the result inapplicable (k > m/2 under
``--strict``).
"""
from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .compression import CompressedHypothesis
from .kernels import KernelError, KernelSpec, gram
from .learner import CompressionTooLarge, LearnerConfig, train
from .spectral import (DecayProfile, Spectrum, effective_dimension, effective_dimension_bound,
                       effective_dimension_bound_safe, fit_decay, spectrum)
from .synth import (TEACHER_PRESETS, NetBoundParams, TeacherNetwork, gen_controlled_spectrum,
                    gen_dataset, net_bounds, preset_teacher)
from .verify import ROW_COLUMNS, SUITES, SUMMARY_COLUMNS, SuiteConfig, all_pass, run_suite, summarize

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_INAPPLICABLE = 0, 1, 2, 3
DEFAULT_ETA_GRID = (1e-1, 1e-2, 1e-3, 1e-4)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        fio.write_text(out, text)


def _seed(args) -> int:
    return fio.default_seed() if args.seed is None else args.seed


# -- gen ------------------------------------------------------------------------

def cmd_gen(args) -> int:
    seed = _seed(args)
    if Path(args.teacher).is_file():
        teacher = TeacherNetwork.from_dict(json.loads(Path(args.teacher).read_text()))
        inputs = [args.teacher]
    elif args.teacher in TEACHER_PRESETS:
        teacher = preset_teacher(args.teacher, args.n, seed=seed)
        inputs = []
    else:
        raise UsageError(f"--teacher must be a file or one of {TEACHER_PRESETS}")
    data = gen_dataset(args.m, args.n, teacher, args.noise, seed, args.decay_inducing,
                       args.noise_angle)
    config = {"m": args.m, "n": args.n, "teacher": args.teacher, "noise": args.noise,
              "decay_inducing": args.decay_inducing, "noise_angle": args.noise_angle}
    man = fio.RunManifest.for_inputs("gen", config, seed, inputs, [args.out] if args.out else [])
    _emit(fio.dataset_to_csv(data, man), args.out)
    if args.teacher_out:
        fio.write_text(args.teacher_out, teacher.dumps())
    return EXIT_OK


# -- spectrum -------------------------------------------------------------------

def _planted(text: str, seed: int):
    """``polynomial:C:p:m`` or ``exponential:C:m``."""
    parts = text.split(":")
    try:
        if parts[0] == "polynomial" and len(parts) == 4:
            prof, m = DecayProfile.polynomial(float(parts[1]), float(parts[2])), int(parts[3])
        elif parts[0] == "exponential" and len(parts) == 3:
            prof, m = DecayProfile.exponential(float(parts[1])), int(parts[2])
        else:
            raise ValueError
    except ValueError:
        raise UsageError("--planted expects polynomial:C:p:m or exponential:C:m") from None
    K, _ = gen_controlled_spectrum(m, prof, seed)
    return K


def cmd_spectrum(args) -> int:
    seed = _seed(args)
    if (args.data is None) == (args.planted is None):
        raise UsageError("give exactly one of --data and --planted")
    if args.data is not None:
        if args.kernel is None:
            raise UsageError("--kernel is required with --data")
        K = gram(fio.read_dataset(args.data), KernelSpec.parse(args.kernel))
        inputs = [args.data]
    else:
        K = _planted(args.planted, seed)
        inputs = []
    m = K.shape[0]
    s = spectrum(K)
    s_norm = Spectrum(s.eigenvalues / m, True)
    prof = fit_decay(s_norm)
    rows = []
    for eta in args.eta_grid:
        # gamma m = eta, so K_gamma's spectrum is K's shifted by eta
        d = effective_dimension(Spectrum(s.eigenvalues + eta, False), eta)
        row = {"eta": eta, "d_eff": d, "bound": math.nan, "bound_safe": math.nan, "holds": ""}
        if prof.kind != "none":
            row["bound"] = effective_dimension_bound(prof, eta)
            row["bound_safe"] = effective_dimension_bound_safe(prof, eta)
            row["holds"] = d <= row["bound"]
        rows.append(row)
    config = {"kernel": args.kernel, "planted": args.planted, "eta_grid": list(args.eta_grid)}
    man = fio.RunManifest.for_inputs("spectrum", config, seed, inputs)
    summary = {"m": m, "decay_profile": prof.to_dict(), "top_eigenvalue": s_norm.top,
               "effective_dimension": rows}
    if args.out:
        out = Path(args.out)
        fio.write_text(out / "eigenvalues.csv", man.header() + s_norm.to_csv())
        fio.write_text(out / "deff.csv", fio.table_to_csv(
            ["eta", "d_eff", "bound", "bound_safe", "holds"], rows, man))
        fio.write_text(out / "decay.json", fio.to_json(summary, man))
    else:
        sys.stdout.write(fio.to_json(summary))
    return EXIT_OK


# -- train ----------------------------------------------------------------------

NET_CLASS_FLAGS = {"single-relu": "single_relu", "relu-net": "relu_net", "sigmoid-net": "sigmoid_net"}


def _learner_config(args) -> LearnerConfig:
    M = args.M
    if args.net_class is not None:
        nb = net_bounds(NetBoundParams(NET_CLASS_FLAGS[args.net_class], args.eps, args.depth,
                                       args.W, args.T, args.tau))
        kernel, log2_B = nb.kernel, nb.log2_B
        M = nb.M if M is None else M
        if args.kernel is not None or args.B is not None or args.logB is not None:
            raise UsageError("--net-class supplies the kernel and B; drop --kernel/--B/--logB")
    else:
        if args.kernel is None:
            raise UsageError("give --kernel or --net-class")
        kernel = KernelSpec.parse(args.kernel)
        if (args.B is None) == (args.logB is None):
            raise UsageError("give exactly one of --B and --logB")
        if args.B is not None:
            if args.B < 1:
                raise UsageError("--B must be at least 1")
            log2_B = math.log2(args.B)
        else:
            log2_B = args.logB
    return LearnerConfig(args.eps, args.delta, log2_B, kernel, M=M, seed=_seed(args),
                         oversampling=args.oversampling, check_sandwich=not args.no_check,
                         strict=args.strict, timings=args.timings)


def cmd_train(args) -> int:
    cfg = _learner_config(args)
    data = fio.read_dataset(args.data)
    try:
        h, rep = train(data, cfg)
    except CompressionTooLarge as exc:
        print(f"ckr train: {exc}", file=sys.stderr)
        return EXIT_INAPPLICABLE
    report_path = args.report or (args.out + ".report.json" if args.out else None)
    outs = [p for p in (args.out, report_path) if p]
    man = fio.RunManifest.for_inputs("train", cfg.to_dict(), cfg.seed, [args.data], outs)
    _emit(h.dumps(man.to_dict()), args.out)
    if report_path:
        fio.write_text(report_path, fio.to_json(rep.to_dict(), man))
    if not rep.applicable:
        print(f"ckr train: note: k = {rep.k_size} > m/2 = {data.m / 2}; "
              "compression bound not applicable", file=sys.stderr)
    return EXIT_OK


# -- predict --------------------------------------------------------------------

def cmd_predict(args) -> int:
    h = CompressedHypothesis.loads(Path(args.model).read_text())
    data = fio.read_dataset(args.data)
    if h.points.shape[0] and data.n != h.points.shape[1]:
        raise UsageError(f"dimension mismatch: model has n={h.points.shape[1]}, data has n={data.n}")
    pred = h.predict(data.points)
    cols = ["prediction"]
    rows = [{"prediction": float(v)} for v in pred]
    if data.labels is not None:
        cols += ["y", "sq_loss"]
        for r, y in zip(rows, data.labels):
            r["y"] = float(y)
            r["sq_loss"] = (r["prediction"] - float(y)) ** 2
    man = fio.RunManifest.for_inputs("predict", {}, None, [args.model, args.data],
                                     [args.out] if args.out else [])
    _emit(fio.table_to_csv(cols, rows, man), args.out)
    if data.labels is not None:
        loss = float(np.mean((pred - data.labels) ** 2))
        print(f"mean square loss {loss:.17g}", file=sys.stderr)
    return EXIT_OK


# -- verify ---------------------------------------------------------------------

def cmd_verify(args) -> int:
    cfg = SuiteConfig(seeds=args.seeds, first_seed=args.first_seed, delta=args.delta,
                      slack=args.slack, m_max=args.m_max, workers=args.workers,
                      gen_m=args.gen_m)
    rows = run_suite(args.suite, cfg)
    summary = summarize(rows, cfg)
    man = fio.RunManifest("verify", dict(cfg.to_dict(), suite=args.suite, workers=None),
                          args.first_seed)
    table = fio.table_to_csv(SUMMARY_COLUMNS, summary, man)
    if args.out:
        out = Path(args.out)
        fio.write_text(out / "rows.csv", fio.table_to_csv(ROW_COLUMNS, rows, man))
        fio.write_text(out / "summary.csv", table)
    sys.stdout.write(table)
    return EXIT_OK if all_pass(summary) else EXIT_CHECK


# -- report ---------------------------------------------------------------------

RUN_COLUMNS = ["run", "kernel", "m", "eps", "log2_B", "seed", "eta", "subsample_size",
               "effective_dimension", "k_size", "applicable", "empirical_loss",
               "compression_bound", "rademacher_bound", "sandwich_event"]
SPARSITY_COLUMNS = ["kernel", "m", "eps", "eta", "runs", "median_subsample_size",
                    "median_effective_dimension"]
CURVE_COLUMNS = ["kernel", "eps", "m", "runs", "median_empirical_loss",
                 "median_compression_bound", "median_rademacher_bound"]


def _load_reports(runs: Path) -> list[dict]:
    if not runs.is_dir():
        raise UsageError(f"--runs {runs} is not a directory")
    found = []
    for p in sorted(runs.glob("*.report.json")):
        doc = json.loads(p.read_text())
        man = doc.get("manifest") or {}
        if man.get("command") != "train":
            raise UsageError(f"{p.name}: not a train report (manifest command {man.get('command')!r})")
        found.append((p.name[: -len(".report.json")], doc))
    if not found:
        raise UsageError(f"no *.report.json run reports in {runs}")
    return found


def _median(vals):
    vals = [v for v in vals if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return statistics.median(vals) if vals else math.nan


def cmd_report(args) -> int:
    runs = []
    for name, d in _load_reports(Path(args.runs)):
        c = d["config"]
        runs.append({"run": name, "kernel": str(KernelSpec.from_dict(c["kernel"])), "m": d["m"],
                     "eps": c["eps"], "log2_B": c["log2_B"], "seed": c["seed"],
                     "eta": d["schedule"]["eta"], "subsample_size": d["subsample_size"],
                     "effective_dimension": d["effective_dimension"], "k_size": d["k_size"],
                     "applicable": d["applicable"], "empirical_loss": d["empirical_loss"],
                     "compression_bound": d["compression_bound"],
                     "rademacher_bound": d["rademacher_bound"],
                     "sandwich_event": (d.get("sandwich") or {}).get("upper_holds")})
    runs.sort(key=lambda r: (r["kernel"], r["m"], r["eps"], r["seed"], r["run"]))

    def grouped(keys):
        g: dict = {}
        for r in runs:
            g.setdefault(tuple(r[k] for k in keys), []).append(r)
        return sorted(g.items())

    sparsity = [{"kernel": k, "m": m, "eps": e, "eta": rs[0]["eta"], "runs": len(rs),
                 "median_subsample_size": _median([r["subsample_size"] for r in rs]),
                 "median_effective_dimension": _median([r["effective_dimension"] for r in rs])}
                for (k, m, e), rs in grouped(("kernel", "m", "eps"))]
    curves = [{"kernel": k, "eps": e, "m": m, "runs": len(rs),
               "median_empirical_loss": _median([r["empirical_loss"] for r in rs]),
               "median_compression_bound": _median([r["compression_bound"] for r in rs]),
               "median_rademacher_bound": _median([r["rademacher_bound"] for r in rs])}
              for (k, e, m), rs in grouped(("kernel", "eps", "m"))]
    man = fio.RunManifest("report", {"runs": args.runs}, None)
    out = Path(args.out)
    fio.write_text(out / "runs.csv", fio.table_to_csv(RUN_COLUMNS, runs, man))
    fio.write_text(out / "sparsity_vs_eps.csv", fio.table_to_csv(SPARSITY_COLUMNS, sparsity, man))
    fio.write_text(out / "error_vs_m.csv", fio.table_to_csv(CURVE_COLUMNS, curves, man))
    print(f"{len(runs)} runs -> {out}/runs.csv, sparsity_vs_eps.csv, error_vs_m.csv")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> Parser:
    p = Parser(prog="ckr", description="Compressed kernel regression toolkit.")
    p.add_argument("--version", action="version", version=f"ckr {__version__}")
    p.add_argument("--config", help="JSON file of flag defaults (flags override it)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("gen", help="generate a labelled dataset on the sphere")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--teacher", default="zero", help=f"teacher JSON file or preset {TEACHER_PRESETS}")
    g.add_argument("--noise", type=float, default=0.0, help="label noise standard deviation")
    g.add_argument("--decay-inducing", type=int, default=None, metavar="DIM",
                   help="concentrate points near a random subsphere of this dimension")
    g.add_argument("--noise-angle", type=float, default=0.05)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out")
    g.add_argument("--teacher-out", help="also write the teacher network as JSON")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("spectrum", help="Gram spectrum, decay fit and effective dimension")
    s.add_argument("--data")
    s.add_argument("--kernel")
    s.add_argument("--planted", help="synthetic Gram: polynomial:C:p:m or exponential:C:m")
    s.add_argument("--eta-grid", type=_floats, default=DEFAULT_ETA_GRID)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", help="output directory (prints JSON summary if omitted)")
    s.set_defaults(func=cmd_spectrum)

    t = sub.add_parser("train", help="fit a compressed hypothesis")
    t.add_argument("--data", required=True)
    t.add_argument("--kernel")
    t.add_argument("--net-class", choices=sorted(NET_CLASS_FLAGS))
    t.add_argument("--depth", type=int, default=1)
    t.add_argument("--W", type=float, default=1.0)
    t.add_argument("--T", type=float, default=1.0)
    t.add_argument("--tau", type=float, default=1.0)
    t.add_argument("--eps", type=float, required=True)
    t.add_argument("--delta", type=float, default=0.1)
    t.add_argument("--B", type=float)
    t.add_argument("--logB", type=float, help="log2 of the norm budget")
    t.add_argument("--M", type=float, help="kernel bound (defaults to the kernel's)")
    t.add_argument("--oversampling", type=float, default=8.0)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--strict", action="store_true", help="exit 3 when k > m/2")
    t.add_argument("--no-check", action="store_true", help="skip the sandwich check")
    t.add_argument("--timings", action="store_true", help="record wall-clock timings (not reproducible)")
    t.add_argument("--out")
    t.add_argument("--report", help="run report path (default: <out>.report.json)")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="evaluate a model file on a dataset")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_predict)

    v = sub.add_parser("verify", help="run the bound-checking suites")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--seeds", type=int, default=50)
    v.add_argument("--first-seed", type=int, default=0)
    v.add_argument("--delta", type=float, default=0.05)
    v.add_argument("--slack", type=float, default=0.05, help="binomial slack for rate checks")
    v.add_argument("--m-max", type=int, default=120)
    v.add_argument("--gen-m", type=int, default=2000)
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--out", help="directory for rows.csv and summary.csv")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="aggregate train run reports into CSV tables")
    r.add_argument("--runs", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def parse_args(argv=None):
    """Parse with precedence flags > --config file > built-in defaults."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subs), None)
    if known.config and command is not None:
        try:
            conf = json.loads(Path(known.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        if not isinstance(conf, dict):
            parser.error("config file must hold a JSON object")
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
        sub = subs[command]
        known_dests = {a.dest for a in sub._actions}
        unknown = sorted(set(conf) - known_dests)
        if unknown:
            parser.error(f"unknown config keys for {command}: {', '.join(unknown)}")
        if "eta_grid" in conf and isinstance(conf["eta_grid"], list):
            conf["eta_grid"] = tuple(conf["eta_grid"])
        sub.set_defaults(**conf)
        for a in sub._actions:  # config values satisfy required flags
            if a.dest in conf:
                a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ckr {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KernelError, ValueError, OSError, OverflowError) as exc:
        print(f"ckr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
