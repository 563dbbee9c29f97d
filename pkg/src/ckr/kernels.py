"""Kernel functions, datasets and Gram matrices.

Four kernels are supported: ``linear``, ``rbf``, ``multinomial`` (sum of
powers of the inner product up to a degree) and ``composed`` (the
``1 / (2 - k)`` recursion). The last two are only defined on the unit
sphere; points off the sphere are rejected rather than renormalized.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial.distance import cdist

SPHERE_TOL = 1e-9
DENOM_TOL = 1e-12
KINDS = ("linear", "rbf", "multinomial", "composed")


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    bandwidth: float = 1.0
    degree: int = 1
    depth: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KernelError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbf" and not self.bandwidth > 0:
            raise KernelError("rbf bandwidth must be positive")
        if self.kind == "multinomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise KernelError("multinomial degree must be a positive integer")
        if self.kind == "composed" and (int(self.depth) != self.depth or self.depth < 1):
            raise KernelError("composed depth must be a positive integer")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def rbf(cls, bandwidth: float) -> "KernelSpec":
        return cls("rbf", bandwidth=float(bandwidth))

    @classmethod
    def multinomial(cls, degree: int) -> "KernelSpec":
        return cls("multinomial", degree=int(degree))

    @classmethod
    def composed(cls, depth: int) -> "KernelSpec":
        return cls("composed", depth=int(depth))

    @property
    def sphere_only(self) -> bool:
        return self.kind in ("multinomial", "composed")

    def bound(self) -> float:
        """Upper bound M on |k(x, x')| over the kernel's domain.

        Linear assumes inputs in the unit ball; rbf is bounded by 1 everywhere.
        Composed uses the value 2 quoted for the network classes even though
        the recursion stays in [1/3, 1] on the sphere.
        """
        if self.kind == "multinomial":
            return float(self.degree + 1)
        if self.kind == "composed":
            return 2.0
        return 1.0

    @property
    def params(self) -> dict[str, Any]:
        if self.kind == "rbf":
            return {"bandwidth": self.bandwidth}
        if self.kind == "multinomial":
            return {"degree": self.degree}
        if self.kind == "composed":
            return {"depth": self.depth}
        return {}

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": self.params}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "KernelSpec":
        return cls(d["kind"], **d.get("params", {}))

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse ``linear``, ``rbf:0.5``, ``multinomial:3`` or ``composed:2``."""
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        if kind == "linear":
            return cls.linear()
        if not arg:
            raise KernelError(f"kernel {kind!r} needs a parameter, e.g. {kind}:2")
        try:
            if kind == "rbf":
                return cls.rbf(float(arg))
            if kind == "multinomial":
                return cls.multinomial(int(arg))
            if kind == "composed":
                return cls.composed(int(arg))
        except ValueError as exc:
            raise KernelError(f"bad kernel parameter in {text!r}") from exc
        raise KernelError(f"unknown kernel kind {kind!r}")

    def __str__(self):
        p = self.params
        return self.kind if not p else f"{self.kind}:{next(iter(p.values()))}"


@dataclass(frozen=True)
class Dataset:
    """m labelled points; labels must lie in [0, 1]."""

    points: np.ndarray
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if X.ndim != 2:
            raise ValueError("points must be a 2-d array of shape (m, n)")
        if not np.all(np.isfinite(X)):
            raise ValueError("points contain non-finite values")
        X.setflags(write=False)
        object.__setattr__(self, "points", X)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=float).reshape(-1).copy()
            if y.shape[0] != X.shape[0]:
                raise ValueError(f"{X.shape[0]} points but {y.shape[0]} labels")
            if np.any(~np.isfinite(y)) or np.any(y < 0) or np.any(y > 1):
                raise ValueError("labels must lie in [0, 1]")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "Dataset":
        y = None if self.labels is None else self.labels[idx]
        return Dataset(self.points[idx], y)


def check_sphere(X: np.ndarray, tol: float = SPHERE_TOL) -> None:
    norms = np.linalg.norm(np.atleast_2d(X), axis=1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        i = int(np.argmax(bad))
        raise KernelError(f"point {i} has norm {norms[i]!r}; kernel requires the unit sphere")


def _of_inner(spec: KernelSpec, t):
    """Apply the dot-product kernels to an inner product (scalar or array)."""
    if spec.kind == "linear":
        return t
    if spec.kind == "multinomial":
        # Horner: 1 + t(1 + t(1 + ...))
        acc = np.ones_like(t, dtype=float)
        for _ in range(spec.degree):
            acc = 1.0 + t * acc
        return acc
    # composed
    k = t
    for _ in range(spec.depth):
        denom = 2.0 - k
        if np.any(denom <= DENOM_TOL):
            raise KernelError("composed kernel denominator vanished; input is degenerate")
        k = 1.0 / denom
    return k


def eval_kernel(spec: KernelSpec, x, xp) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    xp = np.asarray(xp, dtype=float).reshape(-1)
    if x.shape != xp.shape:
        raise KernelError(f"dimension mismatch: {x.shape[0]} vs {xp.shape[0]}")
    if spec.sphere_only:
        check_sphere(np.vstack([x, xp]))
    # canonical argument order makes symmetry exact
    if tuple(x) > tuple(xp):
        x, xp = xp, x
    if spec.kind == "rbf":
        d = x - xp
        return float(np.exp(-np.dot(d, d) / (2.0 * spec.bandwidth ** 2)))
    return float(_of_inner(spec, float(np.dot(x, xp))))


def cross_gram(spec: KernelSpec, X, Z) -> np.ndarray:
    """Kernel values k(X[i], Z[j]) as an (len(X), len(Z)) matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[1] != Z.shape[1]:
        raise KernelError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    if spec.sphere_only:
        check_sphere(X)
        check_sphere(Z)
    if spec.kind == "rbf":
        return np.exp(-cdist(X, Z, "sqeuclidean") / (2.0 * spec.bandwidth ** 2))
    return _of_inner(spec, X @ Z.T)


def gram(data: Dataset | np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Symmetric m x m Gram matrix; the upper triangle is mirrored."""
    X = data.points if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("dataset is empty")
    K = cross_gram(spec, X, X)
    iu = np.triu_indices(K.shape[0], 1)
    K[(iu[1], iu[0])] = K[iu]
    return K


def perturb(K: np.ndarray, gamma: float) -> np.ndarray:
    """K + gamma * m * I."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    m = K.shape[0]
    out = np.array(K, dtype=float, copy=True)
    out[np.diag_indices(m)] += gamma * m
    return out


def is_psd(K: np.ndarray, rel_tol: float = 1e-8) -> bool:
    w = np.linalg.eigvalsh(K)
    return bool(w[0] >= -rel_tol * max(w[-1], 0.0))
