#!/usr/bin/env python3
"""Train/test gap against sample size for teacher-labelled sphere data.

For each m the learner is trained on m points and tested on m fresh points
from the same draw. The compression bound 2 sqrt(eps3) and the Rademacher
baseline are reported next to the measured gap.

    python3 scripts/generalization_study.py --m 250 500 1000 2000 --trials 5
"""
import argparse
import statistics

from ckr import io as fio
from ckr.kernels import KernelSpec
from ckr.learner import LearnerConfig, train, evaluate
from ckr.compression import compression_epsilon
from ckr.synth import TeacherNetwork, gen_dataset

COLUMNS = ["m", "trials", "median_train", "median_test", "median_gap", "median_k",
           "median_gap_bound", "median_rademacher", "applicable"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, nargs="+", default=[250, 500, 1000, 2000])
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--logB", type=float, default=2.0)
    ap.add_argument("--kernel", default="linear")
    ap.add_argument("--oversampling", type=float, default=1.0)
    ap.add_argument("--out")
    a = ap.parse_args()
    kernel = KernelSpec.parse(a.kernel)
    rows = []
    for m in a.m:
        stats = []
        for t in range(a.trials):
            teacher = TeacherNetwork.random(a.n, 0, "relu", seed=t)
            full = gen_dataset(2 * m, a.n, teacher, 0.05, seed=[m, t], intrinsic_dim=2)
            tr, te = full.subset(slice(0, m)), full.subset(slice(m, None))
            cfg = LearnerConfig(a.eps, a.delta, a.logB, kernel, seed=t,
                                oversampling=a.oversampling, check_sandwich=False)
            h, rep = train(tr, cfg)
            test = evaluate(h, te)
            bound = (2 * compression_epsilon(rep.k_size, m, a.delta / 4) ** 0.5
                     if rep.applicable else float("nan"))
            stats.append((rep.empirical_loss, test, abs(test - rep.empirical_loss), rep.k_size,
                          bound, rep.rademacher_bound, rep.applicable))
        col = list(zip(*stats))
        med = statistics.median
        rows.append({"m": m, "trials": a.trials, "median_train": med(col[0]),
                     "median_test": med(col[1]), "median_gap": med(col[2]),
                     "median_k": med(col[3]), "median_gap_bound": med(col[4]),
                     "median_rademacher": med(col[5]), "applicable": sum(col[6])})
    man = fio.RunManifest("scripts/generalization_study", vars(a), 0)
    text = fio.table_to_csv(COLUMNS, rows, man)
    if a.out:
        fio.write_text(a.out, text)
    else:
        print(text, end="")


if __name__ == "__main__":
    main()
