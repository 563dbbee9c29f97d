import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckr import compression as cmp
from ckr.kernels import Dataset, KernelSpec, perturb
from ckr.learner import (CompressionTooLarge, LearnerConfig, evaluate, oracle_loss, schedule,
                         train, verify_generalization)
from ckr.nystrom import build_sketch
from ckr.solver import solve_sketched
from ckr.synth import TeacherNetwork, gen_dataset, preset_teacher

LIN = KernelSpec.linear()


def cfg(eps=0.25, log2_B=4.0, kernel=KernelSpec.multinomial(2), **kw):
    return LearnerConfig(eps, 0.1, log2_B, kernel, **kw)


def test_schedule_examples():
    s = schedule(LearnerConfig.with_B(0.1, 0.1, 100, LIN), 10)
    assert s.lam == pytest.approx(0.01 / 32400, rel=1e-12)
    assert s.lam == pytest.approx(3.0864e-7, rel=1e-4)
    s = schedule(LearnerConfig(1.0, 0.1, 0.0, LIN), 5832)
    assert s.eta == pytest.approx(1 / 5832) and s.gamma == pytest.approx(1 / 5832 ** 2)
    assert s.gamma * s.m == pytest.approx(s.eta, rel=1e-15)
    s = schedule(LearnerConfig(0.2, 0.1, 10.0, LIN), 1000)
    assert s.eta == pytest.approx(1.3396e-9, rel=1e-4)


def test_schedule_log_domain_for_huge_B():
    s = schedule(LearnerConfig(0.5, 0.1, 900.0, LIN), 10)
    assert s.lam > 0 and math.log2(s.lam) == pytest.approx(math.log2(0.25 / 324) - 900, abs=1e-9)
    with pytest.raises(OverflowError):
        schedule(LearnerConfig(0.5, 0.1, 1e6, LIN), 10)


@pytest.mark.parametrize("bad", [dict(eps=0.0), dict(eps=1.5), dict(delta=1.0), dict(log2_B=-1.0),
                                 dict(M=0.5)])
def test_config_validation(bad):
    kw = dict(eps=0.5, delta=0.1, log2_B=1.0, kernel=LIN)
    kw.update(bad)
    with pytest.raises(ValueError):
        LearnerConfig(**kw)


def test_config_defaults_M_to_kernel_bound():
    assert cfg().M == 3.0 and cfg(kernel=KernelSpec.composed(2)).M == 2.0


@pytest.mark.parametrize("c", [0.0, 0.3, 1.0])
def test_constant_labels_identity_gram(c):
    m, eps = 40, 0.5
    lc = LearnerConfig(eps, 0.1, 0.0, LIN)
    sch = schedule(lc, m)
    K = m * np.eye(m)
    Y = np.full(m, c)
    Kg = perturb(K, sch.gamma)
    sk = build_sketch(Kg, sch.eta, 0.025, seed=0)
    _, star = solve_sketched(sk, Kg, Y, sch.lam)
    mant, u = cmp.truncate(star.alpha[list(sk.selected)], eps, float(m), sk.size)
    a = np.zeros(m)
    a[list(sk.selected)] = np.array(mant) * u
    pred = cmp.clip01(Kg @ a)
    assert np.mean((pred - Y) ** 2) <= eps


def test_duplicated_point_pipeline():
    x = np.array([[1.0, 0.0, 0.0]] * 2)
    d = Dataset(x, [0.4, 0.4])
    lc = LearnerConfig(0.5, 0.1, 2.0, LIN)
    h, rep = train(d, lc)
    assert rep.m == 2 and not rep.applicable
    # ridge value on the duplicated point: 2 a / (2 a + lam*2) * y with a = 1 + gamma
    sch = schedule(lc, 2)
    ridge = 0.4 * (1 + sch.gamma * 2) / (1 + sch.gamma * 2 + sch.lam * 2)
    assert abs(cmp.reconstruct(h, x[0]) - ridge) <= lc.eps / 2


def test_strict_raises_when_compression_too_large():
    d = gen_dataset(8, 3, seed=0)
    with pytest.raises(CompressionTooLarge):
        train(d, cfg(strict=True))
    _, rep = train(d, cfg())
    assert rep.applicable is False and rep.compression_bound is None


def test_evaluate_examples():
    d0 = Dataset(np.eye(3), np.zeros(3))
    d1 = Dataset(np.eye(3), np.ones(3))
    zero = cmp.CompressedHypothesis(LIN, (0,), (), np.zeros((0, 3)), (), 0.1, 0.0, 3)
    assert evaluate(zero, d0) == 0.0
    assert evaluate(zero, d1) == 1.0
    with pytest.raises(ValueError):
        evaluate(zero, Dataset(np.eye(3)))


def test_evaluate_matches_pointwise_reconstruct():
    d = gen_dataset(40, 4, preset_teacher("relu", 4, 1), 0.05, seed=2)
    h, _ = train(d, cfg())
    ref = sum((cmp.reconstruct(h, x) - y) ** 2 for x, y in zip(d.points, d.labels)) / d.m
    assert abs(evaluate(h, d) - ref) <= 1e-12


def test_report_fields_consistent():
    d = gen_dataset(60, 4, preset_teacher("relu", 4, 1), 0.05, seed=3)
    h, rep = train(d, cfg(timings=True))
    assert rep.subsample_size == len(h.selected)
    assert rep.k_size == h.meta["k_size"] == rep.bits["k_size"]
    assert rep.sandwich_event in (True, False)
    assert set(rep.timings) >= {"gram", "sketch", "solve", "total"}
    assert 0 <= rep.empirical_loss <= 1
    _, rep2 = train(d, cfg(check_sandwich=False))
    assert rep2.sandwich is None and rep2.sandwich_event is None


def test_determinism():
    d = gen_dataset(50, 4, preset_teacher("relu", 4, 1), 0.05, seed=4)
    h1, r1 = train(d, cfg(seed=9))
    h2, r2 = train(d, cfg(seed=9))
    assert h1 == h2 and r1.to_dict() == r2.to_dict()


@pytest.mark.slow
def test_excess_loss_over_oracle_on_decay_dataset():
    teacher = preset_teacher("relu", 6, 0)
    ok = 0
    for seed in range(50):
        d = gen_dataset(80, 6, teacher, 0.05, seed=seed, intrinsic_dim=2)
        lc = LearnerConfig(0.25, 0.1, 4.0, KernelSpec.multinomial(2), seed=seed)
        h, _ = train(d, lc)
        ok += evaluate(h, d) <= oracle_loss(d, lc) + lc.eps
    assert ok >= 45


def test_median_subsample_nonincreasing_in_eta():
    d = gen_dataset(100, 5, preset_teacher("relu", 5, 0), 0.05, seed=5, intrinsic_dim=3)
    sizes = []
    for eps in (0.2, 0.4, 0.8):     # eta grows with eps
        sizes.append(np.median([train(d, cfg(eps=eps, seed=s, check_sandwich=False))[1].subsample_size
                                for s in range(15)]))
    assert sizes[0] >= sizes[1] >= sizes[2]


def test_generalization_inapplicable_when_compression_large():
    d = gen_dataset(10, 3, seed=0)
    rep = verify_generalization(d, d, cfg())
    assert rep.status == "inapplicable" and rep.eps3 is None and rep.gap_ok is None


def test_generalization_report_on_large_sample():
    teacher = TeacherNetwork.random(4, 0, "relu", seed=3)
    full = gen_dataset(1200, 4, teacher, 0.0, seed=7, intrinsic_dim=2)
    tr, te = full.subset(slice(0, 600)), full.subset(slice(600, None))
    lc = LearnerConfig(0.5, 0.1, 2.0, LIN, oversampling=1.0, check_sandwich=False)
    rep = verify_generalization(tr, te, lc, teacher=teacher)
    assert rep.status == "ok"
    assert rep.gap <= rep.gap_bound and rep.gap_ok
    assert rep.eps2 == pytest.approx(math.sqrt(math.log(40) / 1200))
    assert rep.teacher_loss == pytest.approx(0.0, abs=1e-12) and rep.chain_ok
    again = verify_generalization(tr, te, lc, teacher=teacher)
    assert again.to_dict() == rep.to_dict()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.2, 0.5, 1.0]))
def test_hypothesis_output_in_unit_interval(seed, eps):
    d = gen_dataset(30, 3, preset_teacher("relu", 3, 0), 0.1, seed=seed)
    h, rep = train(d, cfg(eps=eps, seed=seed, check_sandwich=False))
    p = h.predict(d.points)
    assert np.all((0 <= p) & (p <= 1))
    assert len(h.indices) <= rep.subsample_size <= d.m
