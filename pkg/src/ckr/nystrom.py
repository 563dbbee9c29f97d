"""Ridge-leverage-score column sampling and the Nystrom approximation.

The approximation is ``Kbar = K S (S^T K S)^+ S^T K`` for the column
selector S. Leverage scores are computed exactly with one Cholesky solve
instead of the recursive estimator; the sampling rule itself is the usual
independent Bernoulli draw with probability ``min(1, c * l_i * log(d/delta))``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

OVERSAMPLING = 8.0
LOWER_TOL = 1e-7   # relative to ||K||_2, for Kbar <= K
UPPER_TOL = 1e-9   # relative to ||K||_2, for K <= Kbar + eta m I


def fingerprint(K: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(K, dtype=float).tobytes()).hexdigest()[:16]


def ridge_leverage_scores(K: np.ndarray, eta: float) -> np.ndarray:
    """diag(K (K + eta m I)^-1), clipped to [0, 1]."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    K = np.asarray(K, dtype=float)
    m = K.shape[0]
    A = K.copy()
    A[np.diag_indices(m)] += eta * m
    cf = sla.cho_factor(A, lower=True, check_finite=True)
    scores = np.diag(sla.cho_solve(cf, K)).copy()
    return np.clip(scores, 0.0, 1.0)


def inclusion_probabilities(scores, delta: float, oversampling: float = OVERSAMPLING) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    d_eff = float(np.sum(scores))
    # log(d/delta) < 1 would undersample tiny problems; floor the factor at 1
    factor = max(1.0, math.log(d_eff / delta)) if d_eff > 0 else 1.0
    return np.minimum(1.0, oversampling * scores * factor)


def sample_columns(scores, delta: float, seed=None, oversampling: float = OVERSAMPLING) -> np.ndarray:
    """Include each column independently; falls back to the top score if nothing is drawn."""
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    scores = np.asarray(scores, dtype=float)
    probs = inclusion_probabilities(scores, delta, oversampling)
    rng = np.random.default_rng(seed)
    draws = rng.random(len(scores))
    selected = np.flatnonzero(draws < probs)
    if selected.size == 0:
        selected = np.array([int(np.argmax(scores))])
    return selected


@dataclass(frozen=True)
class SandwichCheck:
    lower_min_eig: float       # min eig of K - Kbar; >= -tol always
    upper_gap: float           # max eig of K - Kbar, compared against eta m
    eta_m: float
    scale: float               # ||K||_2

    @property
    def lower_holds(self) -> bool:
        return self.lower_min_eig >= -LOWER_TOL * self.scale

    @property
    def upper_holds(self) -> bool:
        return self.upper_gap <= self.eta_m + UPPER_TOL * self.scale

    @property
    def violation(self) -> float:
        return max(0.0, self.upper_gap - self.eta_m)

    def to_dict(self) -> dict:
        return {"lower_min_eig": self.lower_min_eig, "upper_gap": self.upper_gap,
                "eta_m": self.eta_m, "lower_holds": self.lower_holds,
                "upper_holds": self.upper_holds, "violation": self.violation}


@dataclass(frozen=True)
class NystromSketch:
    selected: np.ndarray        # sorted column indices I
    core_pinv: np.ndarray       # (S^T K S)^+
    columns: np.ndarray         # K S, shape (m, |I|)
    eta: float
    delta: float
    seed: object
    source_hash: str
    scores: np.ndarray = field(repr=False)
    sandwich: SandwichCheck | None = None

    @property
    def m(self) -> int:
        return self.columns.shape[0]

    @property
    def size(self) -> int:
        return len(self.selected)

    def _cholesky(self):
        try:
            return sla.cholesky(self.columns[self.selected, :], lower=True)
        except (np.linalg.LinAlgError, ValueError):
            return None

    def factor(self) -> np.ndarray:
        """F with F F^T = Kbar.

        F = C L^-T from a Cholesky factor of the core when it is positive
        definite; this avoids the cancellation of C (S^T K S)^-1 C^T when the
        core is ill-conditioned. Falls back to the pseudoinverse's eigenbasis.
        """
        L = self._cholesky()
        if L is not None:
            return sla.solve_triangular(L, self.columns.T, lower=True).T
        w, V = np.linalg.eigh(self.core_pinv)
        keep = w > 0
        return self.columns @ (V[:, keep] * np.sqrt(w[keep]))

    def core_solve(self, v) -> np.ndarray:
        """(S^T K S)^+ v, by Cholesky when possible."""
        L = self._cholesky()
        if L is not None:
            return sla.cho_solve((L, True), v)
        return self.core_pinv @ v

    def apply(self, v) -> np.ndarray:
        """Kbar @ v without forming Kbar."""
        F = self.factor()
        return F @ (F.T @ v)

    def materialize(self) -> np.ndarray:
        F = self.factor()
        return F @ F.T

    def to_dict(self) -> dict:
        return {"selected": [int(i) for i in self.selected],
                "core_pinv": [float(v) for v in self.core_pinv.ravel()],
                "eta": self.eta, "delta": self.delta,
                "seed": self.seed, "source_hash": self.source_hash}


def core_pseudoinverse(core: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(core)):
        raise ArithmeticError("Nystrom core matrix has non-finite entries")
    k = core.shape[0]
    P = np.linalg.pinv(core, rcond=k * np.finfo(float).eps, hermitian=True)
    return (P + P.T) / 2


def _schur_top(K: np.ndarray, selected) -> float | None:
    """Largest eigenvalue of K - Kbar via the Schur complement of K[S, S].

    K - Kbar vanishes on the selected rows and columns and equals
    K[R, R] - K[R, S] K[S, S]^-1 K[S, R] on the rest, which a Cholesky solve
    evaluates without the cancellation of forming Kbar. None when K[S, S] is
    not numerically positive definite.
    """
    S = np.asarray(selected, dtype=int)
    R = np.setdiff1d(np.arange(K.shape[0]), S)
    if len(R) == 0:
        return 0.0
    if len(S) == 0:
        return float(sla.eigvalsh(K, subset_by_index=[K.shape[0] - 1, K.shape[0] - 1])[0])
    try:
        cf = sla.cho_factor(K[np.ix_(S, S)])
    except np.linalg.LinAlgError:
        return None
    schur = K[np.ix_(R, R)] - K[np.ix_(R, S)] @ sla.cho_solve(cf, K[np.ix_(S, R)])
    return max(0.0, float(np.linalg.eigvalsh((schur + schur.T) / 2)[-1]))


def check_sandwich(K: np.ndarray, Kbar: np.ndarray, eta: float, selected=None) -> SandwichCheck:
    """Measure both sides of ``Kbar <= K <= Kbar + eta m I``.

    The lower side is read off the materialized difference. Given the
    ``selected`` columns, the upper side comes from the Schur complement,
    since rounding in ``Kbar`` can exceed a small ``eta m`` by itself.
    """
    K = np.asarray(K, dtype=float)
    w = np.linalg.eigvalsh(K - Kbar)
    m = K.shape[0]
    ends = sla.eigvalsh(K, subset_by_index=[0, 0]), sla.eigvalsh(K, subset_by_index=[m - 1, m - 1])
    scale = float(max(abs(ends[0][0]), abs(ends[1][0])))  # ||K||_2 for symmetric K
    top = _schur_top(K, selected) if selected is not None else None
    return SandwichCheck(float(w[0]), float(w[-1]) if top is None else top, eta * m, scale)


def build_sketch(K: np.ndarray, eta: float, delta: float, seed=None,
                 oversampling: float = OVERSAMPLING, check: bool = False) -> NystromSketch:
    """Sample columns by ridge leverage at ridge ``eta * m`` and build the core pseudoinverse.

    With ``check`` the full Kbar is formed and both sides of
    ``Kbar <= K <= Kbar + eta m I`` are measured.
    """
    K = np.asarray(K, dtype=float)
    scores = ridge_leverage_scores(K, eta)
    selected = np.sort(sample_columns(scores, delta, seed, oversampling))
    C = K[:, selected]
    W = core_pseudoinverse(C[selected, :])
    sketch = NystromSketch(selected, W, C, eta, delta, seed, fingerprint(K), scores)
    if check:
        sw = check_sandwich(K, sketch.materialize(), eta, selected)
        sketch = NystromSketch(selected, W, C, eta, delta, seed, sketch.source_hash, scores, sw)
    return sketch
