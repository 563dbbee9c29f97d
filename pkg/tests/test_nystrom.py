import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckr.nystrom import (OVERSAMPLING, build_sketch, check_sandwich, core_pseudoinverse,
                         inclusion_probabilities, ridge_leverage_scores, sample_columns, NystromSketch)
from ckr.spectral import DecayProfile, effective_dimension
from ckr.synth import gen_controlled_spectrum
from oracles import leverage_by_columns, random_psd


def test_scores_identity_and_rank_one():
    m, eta = 9, 0.25
    assert np.allclose(ridge_leverage_scores(m * np.eye(m), eta), 1 / (1 + eta), atol=1e-14)
    v = np.random.default_rng(0).standard_normal(m)
    v /= np.linalg.norm(v)
    s = ridge_leverage_scores(m * np.outer(v, v), eta)
    assert s.sum() == pytest.approx(1 / (1 + eta), rel=1e-12)


def test_scores_match_columnwise_solves():
    K = random_psd(40, np.random.default_rng(1))
    for eta in (1e-3, 0.05, 1.0):
        assert np.max(np.abs(ridge_leverage_scores(K, eta) - leverage_by_columns(K, eta))) <= 1e-9
        assert ridge_leverage_scores(K, eta).sum() == pytest.approx(effective_dimension(K, eta), abs=1e-8)


def test_sampling_examples():
    scores = np.zeros(20)
    scores[7] = 1.0
    for seed in range(20):
        assert 7 in sample_columns(scores, 0.1, seed)
    ones = np.ones(15)
    assert sample_columns(ones, 0.1, 3).tolist() == list(range(15))
    # nothing drawn: fallback to the top score
    tiny = np.full(30, 1e-12)
    tiny[4] = 2e-12
    assert sample_columns(tiny, 0.5, 0).tolist() == [4]


def test_inclusion_probabilities_formula():
    s = np.array([0.5, 0.2, 0.01])
    d = s.sum()
    expect = np.minimum(1, 8 * s * math.log(d / 0.01))
    assert np.allclose(inclusion_probabilities(s, 0.01), expect)


def test_sample_size_on_power_law():
    m, delta, eta = 500, 0.1, 1e-3
    K, _ = gen_controlled_spectrum(m, DecayProfile.polynomial(1.0, 2.0), seed=0)
    scores = ridge_leverage_scores(K, eta)
    d = scores.sum()
    sizes = [len(sample_columns(scores, delta, seed)) for seed in range(100)]
    assert d <= np.mean(sizes) <= 3 * OVERSAMPLING * d * math.log(d / delta)


def test_rank_one_single_column_is_exact():
    m = 12
    v = np.random.default_rng(2).standard_normal(m)
    K = np.outer(v, v)
    for j in range(m):
        C = K[:, [j]]
        Kbar = C @ core_pseudoinverse(C[[j], :]) @ C.T
        assert np.linalg.norm(K - Kbar, 2) <= 1e-9 * np.linalg.norm(K, 2)


def test_large_ridge_top_column_sandwich():
    K = random_psd(25, np.random.default_rng(3))
    m = K.shape[0]
    eta = np.linalg.eigvalsh(K)[-1] / m
    j = int(np.argmax(ridge_leverage_scores(K, eta)))
    C = K[:, [j]]
    Kbar = C @ core_pseudoinverse(C[[j], :]) @ C.T
    sw = check_sandwich(K, Kbar, eta)
    assert sw.lower_holds and sw.upper_holds


def test_sandwich_failure_rate_random_psd():
    K = random_psd(100, np.random.default_rng(4), rank=40)
    fails = 0
    for seed in range(50):
        sk = build_sketch(K, 0.05, 0.1, seed, check=True)
        assert sk.sandwich.lower_holds
        fails += not sk.sandwich.upper_holds
    assert fails / 50 <= 0.1 + 0.05


def test_sketch_reproducible_and_exports():
    K = random_psd(30, np.random.default_rng(5))
    a = build_sketch(K, 0.01, 0.1, seed=11)
    b = build_sketch(K, 0.01, 0.1, seed=11)
    assert np.array_equal(a.selected, b.selected)
    assert np.array_equal(a.core_pinv, b.core_pinv)
    d = a.to_dict()
    assert d["selected"] == sorted(d["selected"]) and d["seed"] == 11
    assert len(d["core_pinv"]) == a.size ** 2
    v = np.random.default_rng(0).standard_normal(30)
    assert np.allclose(a.apply(v), a.materialize() @ v)


def test_core_pinv_rejects_nonfinite():
    with pytest.raises(ArithmeticError):
        core_pseudoinverse(np.array([[np.inf]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(3, 60), st.floats(1e-4, 1.0))
def test_lower_sandwich_and_psd_always(seed, m, eta):
    rng = np.random.default_rng(seed)
    K = random_psd(m, rng, int(rng.integers(1, m + 1)))
    sk = build_sketch(K, eta, 0.1, seed, check=True)
    assert sk.size >= 1
    assert sk.sandwich.lower_holds
    Kbar = sk.materialize()
    scale = np.linalg.norm(K, 2)
    assert np.linalg.eigvalsh(Kbar)[0] >= -1e-7 * scale
    W = sk.core_pinv
    assert np.array_equal(W, W.T)
    assert np.linalg.eigvalsh(W)[0] >= -1e-7 * max(1.0, np.abs(W).max())
    assert np.all(np.diff(sk.selected) > 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0.01, 0.99),
       st.integers(0, 1000))
def test_sampling_valid_and_deterministic(scores, delta, seed):
    s = np.array(scores)
    a = sample_columns(s, delta, seed)
    assert a.size >= 1
    assert np.array_equal(a, sample_columns(s, delta, seed))
    assert np.all((0 <= a) & (a < len(s)))
    p = inclusion_probabilities(s, delta)
    assert np.all((0 <= p) & (p <= 1))


def test_schur_gap_matches_direct_difference():
    K = random_psd(30, np.random.default_rng(5))
    sel = np.array([0, 3, 7, 11, 20])
    C = K[:, sel]
    Kbar = C @ core_pseudoinverse(C[sel, :]) @ C.T
    direct = np.linalg.eigvalsh(K - Kbar)[-1]
    sw = check_sandwich(K, Kbar, 0.1, sel)
    assert sw.upper_gap == pytest.approx(direct, rel=1e-9)


def test_full_selection_has_zero_gap_despite_conditioning():
    # rank-3 Gram plus a tiny ridge: K (S^T K S)^+ K formed directly leaves rounding far above eta m
    rng = np.random.default_rng(6)
    m, eta = 80, 1e-8
    A = rng.standard_normal((m, 3))
    K = A @ A.T + eta * np.eye(m)
    naive = K @ core_pseudoinverse(K) @ K
    assert np.linalg.eigvalsh(K - naive)[-1] > eta * m
    sel = np.arange(m)
    sk = NystromSketch(sel, core_pseudoinverse(K), K.copy(), eta, 0.1, None, "", np.ones(m))
    Kbar = sk.materialize()
    assert np.max(np.abs(Kbar - K)) <= 1e-12 * np.abs(K).max()
    sw = check_sandwich(K, Kbar, eta, sel)
    assert sw.upper_gap == 0.0 and sw.upper_holds and sw.lower_holds
    v = rng.standard_normal(m)
    assert np.allclose(sk.apply(v), Kbar @ v, rtol=1e-10, atol=1e-12)
