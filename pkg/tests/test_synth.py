import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckr.kernels import KernelSpec, gram
from ckr.spectral import DecayProfile, Spectrum, effective_dimension, fit_decay, spectrum
from ckr.synth import (NetBoundParams, TeacherError, TeacherNetwork, decay_exponent_threshold,
                       eval_teacher, gen_controlled_spectrum, gen_dataset, net_bounds,
                       preset_teacher, TEACHER_PRESETS)


def e(n, i, sign=1.0):
    v = np.zeros(n)
    v[i] = sign
    return v


def test_teacher_examples():
    relu = TeacherNetwork("relu", (e(3, 0)[None, :],), 1.0, 1.0)
    assert eval_teacher(relu, e(3, 0)) == 1.0
    assert eval_teacher(relu, e(3, 0, -1)) == 0.0
    sig = TeacherNetwork.constant(3, 0.5)
    assert eval_teacher(sig, e(3, 1)) == 0.5


def test_teacher_caps_enforced():
    with pytest.raises(TeacherError):
        TeacherNetwork("relu", (2 * e(3, 0)[None, :],), 1.0, 1.0)
    with pytest.raises(TeacherError):
        TeacherNetwork("relu", (np.eye(3), np.full((1, 3), 0.5)), 1.0, 1.0)
    with pytest.raises(TeacherError):
        TeacherNetwork("tanh", (e(3, 0)[None, :],), 1.0, 1.0)
    with pytest.raises(TeacherError):
        TeacherNetwork("relu", (np.eye(3), np.eye(3)), 1.0, 1.0)


def test_preactivation_violation_counted():
    # the output preactivation relu(x0) + relu(x1) reaches sqrt(2) > T on the diagonal
    net = TeacherNetwork("relu", (np.eye(2), np.array([[1.0, 1.0]])), W=2.0, T=1.0)
    _, v = net.forward(np.array([[1.0, 1.0]]) / np.sqrt(2))
    assert v >= 1
    with pytest.raises(TeacherError):
        gen_dataset(20, 2, net, seed=0)


def test_teacher_dimension_mismatch_and_roundtrip():
    net = TeacherNetwork.random(4, 2, activation="sigmoid", seed=1)
    with pytest.raises(TeacherError):
        net(np.ones((1, 3)) / math.sqrt(3))
    back = TeacherNetwork.from_dict(net.to_dict())
    X = np.eye(4)
    assert np.array_equal(back(X), net(X))
    assert net.depth == 2


def test_net_bound_examples():
    b = net_bounds(NetBoundParams("single_relu", 0.5))
    assert (b.B, b.M, b.kernel) == (4.0, 3.0, KernelSpec.multinomial(2))
    r = net_bounds(NetBoundParams("relu_net", 0.1, D=1, W=1, T=1))
    assert r.log2_B == pytest.approx(10.0)
    assert r.B == pytest.approx(1024.0) and r.M == 2.0 and r.kernel == KernelSpec.composed(1)
    ell = 16.0
    s = net_bounds(NetBoundParams("sigmoid_net", 0.1, D=1, W=math.sqrt(ell), T=math.sqrt(ell)))
    assert s.log2_B == pytest.approx(math.sqrt(ell) * math.log(math.sqrt(ell) / 0.1))
    huge = net_bounds(NetBoundParams("single_relu", 0.0005))
    with pytest.raises(OverflowError):
        huge.B
    with pytest.raises(ValueError):
        NetBoundParams("relu_net", 1.5)


def test_decay_threshold_formula():
    assert decay_exponent_threshold(NetBoundParams("single_relu", 0.25), xi=2) == 8


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["relu_net", "sigmoid_net"]), st.floats(0.01, 0.9), st.integers(1, 3),
       st.floats(1, 4), st.floats(1, 4), st.floats(1.0, 1.5))
def test_net_bounds_monotone(cls, eps, D, W, T, f):
    base = net_bounds(NetBoundParams(cls, eps, D, W, T)).log2_B
    assert net_bounds(NetBoundParams(cls, eps, D, W * f, T)).log2_B >= base
    assert net_bounds(NetBoundParams(cls, eps, D, W, T * f)).log2_B >= base
    assert net_bounds(NetBoundParams(cls, eps / f, D, W, T)).log2_B >= base
    assert net_bounds(NetBoundParams(cls, eps, D + 1, W, T)).log2_B >= base


def test_controlled_spectrum_examples():
    m = 100
    K, planted = gen_controlled_spectrum(m, DecayProfile.polynomial(1.0, 2.0), seed=0)
    s = spectrum(K, normalize=True).eigenvalues
    assert np.max(np.abs(s - planted) / planted) <= 1e-9
    lam, eta = 0.3, 0.01
    Kc, _ = gen_controlled_spectrum(m, np.full(m, lam), seed=1)
    assert effective_dimension(Kc, eta) == pytest.approx(m * lam / (lam + eta), rel=1e-9)
    Ke, _ = gen_controlled_spectrum(30, DecayProfile.exponential(1.0), seed=2)
    assert fit_decay(spectrum(Ke, normalize=True)).kind == "exponential"


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(5, 120), st.floats(1.2, 3.5))
def test_planted_spectrum_certified(seed, m, p):
    prof = DecayProfile.polynomial(1.0, p)
    K, planted = gen_controlled_spectrum(m, prof, seed)
    s = spectrum(K, normalize=True)
    assert np.allclose(s.eigenvalues, planted, rtol=1e-9, atol=1e-12)
    fit = fit_decay(Spectrum(planted, True))
    assert fit.max_violation <= 1e-12


def test_dataset_examples():
    d = gen_dataset(50, 6, TeacherNetwork.constant(6, 0.5), 0.0, seed=1)
    assert np.all(d.labels == 0.5)
    assert np.max(np.abs(np.linalg.norm(d.points, axis=1) - 1)) <= 1e-12
    a = gen_dataset(30, 4, preset_teacher("relu", 4, 0), 0.1, seed=3)
    b = gen_dataset(30, 4, preset_teacher("relu", 4, 0), 0.1, seed=3)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)
    assert np.all((0 <= a.labels) & (a.labels <= 1))


def test_decay_inducing_sampler_speeds_decay():
    k = KernelSpec.multinomial(2)
    ps = []
    for intrinsic in (None, 3):
        d = gen_dataset(300, 10, seed=4, intrinsic_dim=intrinsic)
        lam = spectrum(gram(d, k), normalize=True).eigenvalues
        ps.append(fit_decay(Spectrum(lam, True)).p)
    assert ps[1] > ps[0]


@pytest.mark.parametrize("name", TEACHER_PRESETS)
def test_presets_valid_on_sphere(name):
    d = gen_dataset(200, 5, preset_teacher(name, 5, seed=2), 0.0, seed=5)
    assert d.m == 200
