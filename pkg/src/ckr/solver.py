"""Closed-form kernel ridge solutions and the norm-constrained oracle.

Problems, with K the Gram matrix and Y the labels:

* bounded:    min (1/m)||K a - Y||^2  s.t.  a^T K a <= B
* lagrangian: min (1/m)||K a - Y||^2 + lam a^T K a,      a = (K + lam m I)^-1 Y
* perturbed:  the same with K + gamma m I
* sketched:   the same with the Nystrom approximation of K + gamma m I
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .kernels import perturb
from .nystrom import NystromSketch, check_sandwich

BISECT_MAX_ITER = 200
KKT_REL_TOL = 1e-9


class SolverError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Solution:
    alpha: np.ndarray
    objective: float
    variant: str  # bounded | lagrangian | perturbed | sketched | sparse

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha)


def data_fit(K, alpha, Y) -> float:
    r = K @ alpha - Y
    return float(r @ r) / len(Y)


def ridge_objective(K, alpha, Y, lam) -> float:
    return data_fit(K, alpha, Y) + lam * float(alpha @ (K @ alpha))


def _check_labels(Y):
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if np.max(np.abs(Y), initial=0.0) > 1:
        raise ValueError("labels must satisfy ||Y||_inf <= 1")
    return Y


def _spd_solve(A, Y):
    try:
        return sla.solve(A, Y, assume_a="pos")
    except (sla.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SolverError("system is singular") from exc


def solve_lagrangian(K, Y, lam: float) -> Solution:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    K = np.asarray(K, dtype=float)
    Y = _check_labels(Y)
    m = len(Y)
    A = K.copy()
    A[np.diag_indices(m)] += lam * m
    alpha = _spd_solve(A, Y)
    return Solution(alpha, ridge_objective(K, alpha, Y, lam), "lagrangian")


def solve_perturbed(K, Y, lam: float, gamma: float) -> Solution:
    if lam + gamma <= 0:
        raise ValueError("lambda + gamma must be positive")
    Kg = perturb(K, gamma)
    sol = solve_lagrangian(K, Y, lam + gamma)
    return Solution(sol.alpha, ridge_objective(Kg, sol.alpha, Y, lam), "perturbed")


def solve_sketched(sketch: NystromSketch, Kg, Y, lam: float) -> tuple[Solution, Solution]:
    """Solve against Kbar_gamma and map back to the |I|-sparse coefficients.

    Returns ``(alpha_bar, alpha_star)`` where
    ``alpha_star = S (S^T Kg S)^+ S^T Kg alpha_bar`` so that
    ``Kg alpha_star = Kbar alpha_bar``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    Y = _check_labels(Y)
    m = len(Y)
    Kbar = sketch.materialize()
    A = Kbar.copy()
    A[np.diag_indices(m)] += lam * m
    alpha_bar = _spd_solve(A, Y)
    coeffs = sketch.core_solve(sketch.columns.T @ alpha_bar)
    alpha_star = np.zeros(m)
    alpha_star[sketch.selected] = coeffs
    bar = Solution(alpha_bar, ridge_objective(Kbar, alpha_bar, Y, lam), "sketched")
    star = Solution(alpha_star, data_fit(np.asarray(Kg, dtype=float), alpha_star, Y), "sparse")
    return bar, star


def _pinv_spectrum(K):
    w, V = np.linalg.eigh(np.asarray(K, dtype=float))
    cutoff = len(w) * np.finfo(float).eps * max(abs(w[-1]), abs(w[0]))
    w = np.where(w > cutoff, w, 0.0)
    return w, V


def solve_bounded_oracle(K, Y, B: float) -> Solution:
    """Exact solution of the norm-constrained problem via its scalar dual.

    If the pseudoinverse solution is feasible it is optimal. Otherwise the
    constraint is active and ``a(mu) = (K + mu m I)^-1 Y`` is bisected (in log
    mu) until ``|a^T K a - B| <= 1e-9 B``.
    """
    if B <= 0:
        raise ValueError("B must be positive")
    K = np.asarray(K, dtype=float)
    Y = _check_labels(Y)
    m = len(Y)
    w, V = _pinv_spectrum(K)
    c = V.T @ Y
    pos = w > 0

    def alpha_at(mu):
        if mu == 0.0:
            coef = np.where(pos, c / np.where(pos, w, 1.0), 0.0)
        else:
            coef = np.where(pos, c / (w + mu * m), 0.0)
        return V @ coef, float(np.sum(w * coef ** 2))

    a0, g0 = alpha_at(0.0)
    if g0 <= B:
        return Solution(a0, data_fit(K, a0, Y), "bounded")

    lo, hi = 1e-16, 1.0
    while alpha_at(lo)[1] <= B:
        lo *= 1e-8
        if lo < 1e-300:
            raise SolverError("could not bracket the constraint")
    while alpha_at(hi)[1] > B:
        hi *= 2.0
        if hi > 1e300:
            raise SolverError("could not bracket the constraint")
    for _ in range(BISECT_MAX_ITER):
        mid = math.sqrt(lo * hi)
        a, g = alpha_at(mid)
        if abs(g - B) <= KKT_REL_TOL * B:
            return Solution(a, data_fit(K, a, Y), "bounded")
        if g > B:
            lo = mid
        else:
            hi = mid
    raise SolverError("bisection did not converge; problem is ill-conditioned")


def lagrangian_gap(K, Y, lam: float, B: float) -> float:
    """||K a - Y|| - ||K a_B - Y||; bounded above by sqrt(lam m B)."""
    K = np.asarray(K, dtype=float)
    Y = _check_labels(Y)
    a = solve_lagrangian(K, Y, lam).alpha
    aB = solve_bounded_oracle(K, Y, B).alpha
    return float(np.linalg.norm(K @ a - Y) - np.linalg.norm(K @ aB - Y))


@dataclass(frozen=True)
class ErrorDecomposition:
    """Residual norms along the bounded -> lagrangian -> perturbed -> sketched chain."""

    r_bounded: float
    r_lagrangian: float
    r_perturbed: float
    r_sketched: float
    bound_relaxation: float     # sqrt(lam m B)
    bound_precondition: float   # gamma sqrt(m) / (lam + gamma)
    bound_sparsify: float       # eta sqrt(m) / (lam + gamma)
    sandwich_event: bool
    sparse_identity_residual: float
    loss_bounded: float         # (1/m)||K a_B - Y||^2
    loss_sparse: float          # (1/m)||Kg a* - Y||^2

    @property
    def relaxation_ok(self) -> bool:
        return self.r_lagrangian <= self.r_bounded + self.bound_relaxation + 1e-7

    @property
    def precondition_ok(self) -> bool:
        return self.r_perturbed <= self.r_lagrangian + self.bound_precondition + 1e-7

    @property
    def sparsify_ok(self) -> bool:
        return self.r_sketched <= self.r_perturbed + self.bound_sparsify + 1e-7

    def total_ok(self, eps: float) -> bool:
        return self.loss_sparse <= self.loss_bounded + eps

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(relaxation_ok=self.relaxation_ok, precondition_ok=self.precondition_ok,
                 sparsify_ok=self.sparsify_ok)
        return d


def decompose_errors(K, Y, lam: float, gamma: float, eta: float, B: float,
                     sketch: NystromSketch) -> ErrorDecomposition:
    """Measure every step of the error chain for one instance.

    ``sketch`` must be built from ``K + gamma m I`` with ridge ``eta``.
    """
    K = np.asarray(K, dtype=float)
    Y = _check_labels(Y)
    m = len(Y)
    Kg = perturb(K, gamma)
    aB = solve_bounded_oracle(K, Y, B).alpha
    a = solve_lagrangian(K, Y, lam).alpha
    ag = solve_perturbed(K, Y, lam, gamma).alpha
    bar, star = solve_sketched(sketch, Kg, Y, lam)
    Kbar_ab = sketch.apply(bar.alpha)
    sw = sketch.sandwich
    if sw is None:
        sw = check_sandwich(Kg, sketch.materialize(), eta, sketch.selected)
    ident = float(np.linalg.norm(Kg @ star.alpha - Kbar_ab) / max(np.linalg.norm(Kbar_ab), 1e-300))
    return ErrorDecomposition(
        r_bounded=float(np.linalg.norm(K @ aB - Y)),
        r_lagrangian=float(np.linalg.norm(K @ a - Y)),
        r_perturbed=float(np.linalg.norm(Kg @ ag - Y)),
        r_sketched=float(np.linalg.norm(Kbar_ab - Y)),
        bound_relaxation=math.sqrt(lam * m * B),
        bound_precondition=gamma * math.sqrt(m) / (lam + gamma),
        bound_sparsify=eta * math.sqrt(m) / (lam + gamma),
        sandwich_event=sw.upper_holds,
        sparse_identity_residual=ident,
        loss_bounded=data_fit(K, aB, Y),
        loss_sparse=data_fit(Kg, star.alpha, Y),
    )
