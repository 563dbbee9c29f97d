"""Synthetic fixtures: teacher networks, planted Gram spectra and norm-bound calculators."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .kernels import Dataset, KernelSpec
from .spectral import DecayProfile

ACTIVATIONS = ("relu", "sigmoid")
NORM_TOL = 1e-12


class TeacherError(ValueError):
    pass


def relu(z):
    return np.maximum(0.0, z)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class TeacherNetwork:
    """Feed-forward net with D hidden layers; ``weights[0]`` reads the input.

    Caps: rows of ``weights[0]`` have 2-norm <= T, rows of later layers have
    1-norm <= W, and every preactivation must stay within [-T, T]. The last
    layer has a single row and its activation is the network output.
    """

    activation: str
    weights: tuple
    W: float
    T: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise TeacherError(f"activation must be one of {ACTIVATIONS}")
        ws = tuple(np.array(w, dtype=float, ndmin=2) for w in self.weights)
        if not ws:
            raise TeacherError("need at least one layer")
        for a, b in zip(ws, ws[1:]):
            if b.shape[1] != a.shape[0]:
                raise TeacherError("layer shapes do not chain")
        if ws[-1].shape[0] != 1:
            raise TeacherError("output layer must have one unit")
        if np.any(np.linalg.norm(ws[0], axis=1) > self.T + NORM_TOL):
            raise TeacherError("layer-0 weight vector exceeds 2-norm cap T")
        for w in ws[1:]:
            if np.any(np.abs(w).sum(axis=1) > self.W + NORM_TOL):
                raise TeacherError("hidden-layer weight vector exceeds 1-norm cap W")
        for w in ws:
            w.setflags(write=False)
        object.__setattr__(self, "weights", ws)

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @property
    def n(self) -> int:
        return self.weights[0].shape[1]

    def forward(self, X) -> tuple[np.ndarray, int]:
        """Raw outputs and the number of preactivations with |w.z| > T."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n:
            raise TeacherError(f"dimension mismatch: teacher expects n={self.n}, got {X.shape[1]}")
        sigma = relu if self.activation == "relu" else sigmoid
        z, violations = X, 0
        for w in self.weights:
            pre = z @ w.T
            violations += int(np.sum(np.abs(pre) > self.T + NORM_TOL))
            z = sigma(pre)
        return z[:, 0], violations

    def __call__(self, X) -> np.ndarray:
        out, _ = self.forward(X)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"activation": self.activation, "D": self.depth, "W": self.W, "T": self.T,
                "weights": [{"shape": list(w.shape), "values": [float(v) for v in w.ravel()]}
                            for w in self.weights]}

    @classmethod
    def from_dict(cls, d: dict) -> "TeacherNetwork":
        ws = [np.array(w["values"], dtype=float).reshape(w["shape"]) for w in d["weights"]]
        return cls(d["activation"], tuple(ws), float(d["W"]), float(d["T"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def random(cls, n: int, depth: int = 0, width: int = 8, activation: str = "relu",
               W: float = 1.0, T: float = 1.0, seed=None) -> "TeacherNetwork":
        """Random teacher inside the caps.

        Hidden rows get 1-norm ``min(W, T)`` (relu, scaled further by 1/T so that
        preactivations stay within T) which keeps every unit in range on the sphere.
        """
        rng = np.random.default_rng(seed)
        shapes = [(width, n)] * (depth > 0) + [(width, width)] * max(depth - 1, 0)
        shapes.append((1, width if depth > 0 else n))
        ws = []
        for layer, (r, c) in enumerate(shapes):
            w = rng.standard_normal((r, c))
            if layer == 0:
                w *= T / np.linalg.norm(w, axis=1, keepdims=True)
            else:
                # inputs are bounded by T (relu) or 1 (sigmoid)
                zmax = T if activation == "relu" else 1.0
                cap = min(W, T / zmax)
                w *= cap / np.abs(w).sum(axis=1, keepdims=True)
            ws.append(w)
        return cls(activation, tuple(ws), W, T)

    @classmethod
    def constant(cls, n: int, value: float) -> "TeacherNetwork":
        """Zero-weight unit: relu gives 0, sigmoid gives 1/2."""
        if value == 0.0:
            return cls("relu", (np.zeros((1, n)),), 1.0, 1.0)
        if value == 0.5:
            return cls("sigmoid", (np.zeros((1, n)),), 1.0, 1.0)
        raise TeacherError("constant teachers exist for 0 and 0.5 only")


def eval_teacher(net: TeacherNetwork, x) -> float:
    return float(net(np.asarray(x, dtype=float).reshape(1, -1))[0])


# -- norm bounds for network classes ----------------------------------------

NET_CLASSES = ("single_relu", "relu_net", "sigmoid_net")


@dataclass(frozen=True)
class NetBoundParams:
    net_class: str
    eps: float
    D: int = 1
    W: float = 1.0
    T: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if self.net_class not in NET_CLASSES:
            raise ValueError(f"net_class must be one of {NET_CLASSES}")
        if not 0 < self.eps < 1:
            raise ValueError("eps must be in (0, 1)")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


class NetBounds(NamedTuple):
    log2_B: float
    M: float
    kernel: KernelSpec

    @property
    def B(self) -> float:
        if self.log2_B >= 1024:
            raise OverflowError(f"B = 2^{self.log2_B:.6g} is not representable; use log2_B")
        return 2.0 ** self.log2_B


def net_bounds(params: NetBoundParams) -> NetBounds:
    """Norm budget, kernel bound and kernel for each network class.

    single ReLU: d = ceil(tau/eps), B = 2^(tau/eps), M = d + 1, multinomial(d)
    ReLU net:    B = 2^((tau W^D D T / eps)^D), M = 2, composed(D)
    sigmoid net: B = 2^((tau T log(W^D D / eps))^D), M = 2, composed(D)
    """
    p = params
    if p.net_class == "single_relu":
        d = math.ceil(p.tau / p.eps)
        return NetBounds(p.tau / p.eps, float(d + 1), KernelSpec.multinomial(d))
    if p.D < 1:
        raise ValueError("network classes need D >= 1")
    if p.net_class == "relu_net":
        log2_B = (p.tau * p.W ** p.D * p.D * p.T / p.eps) ** p.D
    else:
        inner = max(0.0, math.log(p.W ** p.D * p.D / p.eps))
        log2_B = (p.tau * p.T * inner) ** p.D
    return NetBounds(float(log2_B), 2.0, KernelSpec.composed(p.D))


def decay_exponent_threshold(params: NetBoundParams, xi: float = 1.0) -> float:
    """Polynomial decay exponent p needed for the class (xi is an unspecified constant)."""
    p = params
    if p.net_class == "single_relu":
        return xi / p.eps
    if p.net_class == "relu_net":
        return (xi * p.W ** p.D * p.D * p.T / p.eps) ** p.D
    return (xi * p.T * max(0.0, math.log(p.W ** p.D * p.D / p.eps))) ** p.D


# -- planted spectra and datasets ---------------------------------------------

def random_orthogonal(m: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((m, m)))
    return Q * np.sign(np.diag(R))


def gen_controlled_spectrum(m: int, profile: DecayProfile | Sequence[float], seed=None):
    """K = m Q diag(lam) Q^T with a seeded random rotation Q.

    ``profile`` is a decay profile (its envelope is planted) or explicit
    eigenvalues of K/m. Returns ``(K, planted)`` with ``planted`` sorted
    descending, the certificate for the spectrum of K/m.
    """
    if isinstance(profile, DecayProfile):
        lam = profile.values(m)
    else:
        lam = np.asarray(profile, dtype=float)
        if lam.shape != (m,):
            raise ValueError(f"need {m} eigenvalues, got {lam.shape}")
    if np.any(lam < 0):
        raise ValueError("planted eigenvalues must be nonnegative")
    lam = np.sort(lam)[::-1]
    Q = random_orthogonal(m, np.random.default_rng(seed))
    K = m * (Q * lam) @ Q.T
    return (K + K.T) / 2, lam


def sphere_points(m: int, n: int, rng: np.random.Generator, intrinsic_dim: int | None = None,
                  noise_angle: float = 0.05) -> np.ndarray:
    """Uniform on S^{n-1}, or concentrated near a random great subsphere of dimension k."""
    if intrinsic_dim is None:
        Z = rng.standard_normal((m, n))
    else:
        k = int(intrinsic_dim)
        if not 1 <= k <= n:
            raise ValueError("intrinsic dimension must be in [1, n]")
        basis = random_orthogonal(n, rng)[:, :k]
        core = rng.standard_normal((m, k))
        core /= np.linalg.norm(core, axis=1, keepdims=True)
        Z = core @ basis.T + noise_angle * rng.standard_normal((m, n)) / math.sqrt(n)
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def gen_dataset(m: int, n: int, teacher: TeacherNetwork | None = None, label_noise: float = 0.0,
                seed=None, intrinsic_dim: int | None = None, noise_angle: float = 0.05) -> Dataset:
    """Points on the sphere with labels clip(teacher(x) + noise) in [0, 1].

    Noise is Gaussian truncated at three standard deviations. A teacher whose
    preactivations leave [-T, T] on the drawn points is rejected.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    X = sphere_points(m, n, rng, intrinsic_dim, noise_angle)
    if teacher is None:
        teacher = TeacherNetwork.constant(n, 0.0)
    clean, violations = teacher.forward(X)
    if violations:
        raise TeacherError(f"{violations} preactivations exceed the cap T={teacher.T}")
    noise = np.zeros(m)
    if label_noise > 0:
        noise = np.clip(rng.standard_normal(m), -3, 3) * label_noise
    y = np.clip(np.clip(clean, 0, 1) + noise, 0.0, 1.0)
    return Dataset(X, y)


TEACHER_PRESETS = ("zero", "half", "relu", "relu-net", "sigmoid-net")


def preset_teacher(name: str, n: int, seed=None) -> TeacherNetwork:
    if name == "zero":
        return TeacherNetwork.constant(n, 0.0)
    if name == "half":
        return TeacherNetwork.constant(n, 0.5)
    if name == "relu":
        return TeacherNetwork.random(n, 0, activation="relu", seed=seed)
    if name == "relu-net":
        return TeacherNetwork.random(n, 1, activation="relu", seed=seed)
    if name == "sigmoid-net":
        return TeacherNetwork.random(n, 1, activation="sigmoid", seed=seed)
    raise TeacherError(f"unknown teacher preset {name!r}; expected one of {TEACHER_PRESETS}")
