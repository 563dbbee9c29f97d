"""Gram spectra, eigenvalue-decay envelopes and effective dimension."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PSD_REL_TOL = 1e-8
LOG_FLOOR = 1e-14
EXP_SLOPE_TOL = 1e-6


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # descending
    normalized: bool = False
    eigenvectors: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    @property
    def top(self) -> float:
        return float(self.eigenvalues[0]) if self.m else 0.0

    @property
    def is_psd(self) -> bool:
        return bool(self.eigenvalues[-1] >= -PSD_REL_TOL * max(self.top, 0.0))

    @property
    def clamped(self) -> np.ndarray:
        return np.maximum(self.eigenvalues, 0.0)

    def to_csv(self) -> str:
        rows = ["i,lambda"]
        rows += [f"{i},{v:.17g}" for i, v in enumerate(self.eigenvalues, start=1)]
        return "\n".join(rows) + "\n"


def spectrum(K, normalize: bool = False, vectors: bool = False, debug: bool = False) -> Spectrum:
    """Full symmetric eigendecomposition of K (or K/m), eigenvalues descending.

    With ``debug`` the reconstruction error ``||K - V diag(w) V^T||_2`` is
    checked against ``1e-8 ||K||_2``.
    """
    K = np.asarray(K, dtype=float)
    if not np.all(np.isfinite(K)):
        raise ValueError("matrix has non-finite entries")
    A = K / K.shape[0] if normalize else K
    if vectors or debug:
        w, V = np.linalg.eigh(A)
        w, V = w[::-1], V[:, ::-1]
        if debug:
            err = np.linalg.norm(A - (V * w) @ V.T, 2)
            scale = max(abs(w[0]), abs(w[-1]))
            if err > 1e-8 * scale:
                raise ArithmeticError(f"eigendecomposition residual {err:.3g} exceeds tolerance")
        return Spectrum(w, normalize, V if vectors else None)
    return Spectrum(np.linalg.eigvalsh(A)[::-1].copy(), normalize)


@dataclass(frozen=True)
class DecayProfile:
    """Pointwise envelope ``lambda_i <= C i^-p`` or ``lambda_i <= C e^-i``, i >= tail_start."""

    kind: str  # "polynomial" | "exponential" | "none"
    C: float = 0.0
    p: float = 0.0
    tail_start: int = 1
    max_violation: float = 0.0

    @classmethod
    def polynomial(cls, C: float, p: float, tail_start: int = 1) -> "DecayProfile":
        return cls("polynomial", float(C), float(p), tail_start)

    @classmethod
    def exponential(cls, C: float, tail_start: int = 1) -> "DecayProfile":
        return cls("exponential", float(C), 0.0, tail_start)

    def envelope(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=float)
        if self.kind == "polynomial":
            return self.C * i ** (-self.p)
        if self.kind == "exponential":
            return self.C * np.exp(-i)
        raise ValueError("profile kind 'none' has no envelope")

    def values(self, m: int) -> np.ndarray:
        """The envelope itself as a length-m spectrum."""
        return self.envelope(np.arange(1, m + 1))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "C": self.C, "p": self.p,
                "tail_start": self.tail_start, "max_violation": self.max_violation}

    @classmethod
    def from_dict(cls, d: dict) -> "DecayProfile":
        return cls(d["kind"], float(d["C"]), float(d["p"]), int(d["tail_start"]),
                   float(d.get("max_violation", 0.0)))


def _eigs(s) -> np.ndarray:
    if isinstance(s, Spectrum):
        return s.clamped
    return np.maximum(np.asarray(s, dtype=float), 0.0)


def _fit_at(lam: np.ndarray, tail_start: int) -> DecayProfile:
    m = len(lam)
    floor = LOG_FLOOR * lam[0] if m else 0.0
    idx = np.arange(1, m + 1, dtype=float)
    keep = (idx >= tail_start) & (lam > floor)
    if not np.any(keep):
        return DecayProfile("none", tail_start=tail_start)
    i, logl = idx[keep], np.log(lam[keep])

    candidates = []
    if len(i) >= 2:
        slope, _ = np.polyfit(np.log(i), logl, 1)
        p = -slope
        logC = float(np.max(logl + p * np.log(i)))
        if p > 1 and logC < 709:  # representable C
            gap = float(np.mean(logC - p * np.log(i) - logl))
            candidates.append((gap, DecayProfile.polynomial(math.exp(logC), p, tail_start)))
    exp_ok = True
    if len(i) >= 2:
        slope, _ = np.polyfit(i, logl, 1)
        exp_ok = slope <= -1 + EXP_SLOPE_TOL
    if exp_ok:
        logC = float(np.max(logl + i))
        if logC < 709:  # representable C
            gap = float(np.mean(logC - i - logl))
            candidates.append((gap, DecayProfile.exponential(math.exp(logC), tail_start)))
    if not candidates:
        return DecayProfile("none", tail_start=tail_start)
    _, best = min(candidates, key=lambda c: c[0])
    env = best.envelope(i)
    viol = float(np.max(np.maximum(lam[keep] - env, 0.0) / env))
    return DecayProfile(best.kind, best.C, best.p, tail_start, viol)


def decay_threshold(profile: DecayProfile, eta: float) -> float:
    """Index j beyond which the decay must hold for the effective-dimension bound."""
    if profile.kind == "polynomial":
        return (profile.C / ((profile.p - 1) * eta)) ** (1 / profile.p)
    if profile.kind == "exponential":
        return math.log(profile.C / ((math.e - 1) * eta))
    raise ValueError("profile kind 'none' has no threshold")


def fit_decay(s, tail_start: int | None = None, eta: float | None = None,
              max_iter: int = 50) -> DecayProfile:
    """Fit a decay envelope to the (normalized) spectrum ``s``.

    Least squares in log space chooses the exponent, then C is inflated to the
    smallest value making the envelope hold for every tail eigenvalue above
    the numerical floor ``1e-14 * lambda_1``; floored eigenvalues count as zero.
    When ``tail_start`` is omitted and ``eta`` is given, the tail start is the
    fixed point of the threshold index j(C, p, eta), starting from a
    whole-spectrum fit. Without either, the whole spectrum is used.
    """
    lam = _eigs(s)
    m = len(lam)
    if tail_start is not None:
        if not 1 <= tail_start <= m:
            raise ValueError(f"tail_start must be in [1, {m}]")
        return _fit_at(lam, int(tail_start))
    prof = _fit_at(lam, 1)
    if eta is None:
        return prof
    seen = {1: prof}
    j = 1
    for _ in range(max_iter):
        if prof.kind == "none":
            break
        t = decay_threshold(prof, eta)    # inf when p is barely above 1
        jn = m if not t < m else max(1, math.floor(t))
        if jn in seen:
            j = min(jn, j)
            break
        j = jn
        prof = _fit_at(lam, j)
        seen[j] = prof
    return seen[j]


def effective_dimension(K, eta: float) -> float:
    """tr(K (K + eta m I)^-1) from the clamped spectrum of K.

    ``K`` may be a matrix or an unnormalized :class:`Spectrum`.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if isinstance(K, Spectrum):
        if K.normalized:
            raise ValueError("effective_dimension needs the spectrum of K, not K/m")
        lam = K.clamped
    else:
        lam = np.maximum(np.linalg.eigvalsh(np.asarray(K, dtype=float)), 0.0)
    m = len(lam)
    return float(np.sum(lam / (lam + eta * m)))


def _check_profile(profile: DecayProfile, eta: float):
    if eta <= 0:
        raise ValueError("eta must be positive")
    if profile.kind == "none":
        raise ValueError("no decay profile; bound undefined")
    if profile.kind == "polynomial" and profile.p <= 1:
        raise ValueError("polynomial bound needs p > 1")


def effective_dimension_bound(profile: DecayProfile, eta: float) -> float:
    """Closed-form cap on d_eta(K_gamma) for gamma m <= eta, as published.

    polynomial: (C / ((p - 1) eta))^(1/p) + 2
    exponential: log(C / ((e - 1) eta)) + 2

    The polynomial form bounds the tail sum by an integral starting one index
    too late and is exceeded by exact power-law spectra (roughly by the factor
    (pi/p)/sin(pi/p) for small eta); see :func:`effective_dimension_bound_safe`.
    """
    _check_profile(profile, eta)
    return decay_threshold(profile, eta) + 2.0


def effective_dimension_bound_safe(profile: DecayProfile, eta: float) -> float:
    """A cap that provably holds: k + 1 + tail(k) at k = ceil(j)."""
    _check_profile(profile, eta)
    j = decay_threshold(profile, eta)
    if profile.kind == "polynomial":
        k = max(1, math.ceil(j), profile.tail_start - 1)
        tail = profile.C * k ** (1 - profile.p) / ((profile.p - 1) * eta)
    else:
        k = max(0, math.ceil(j), profile.tail_start - 1)
        tail = profile.C * math.exp(-k) / ((math.e - 1) * eta)
    return k + 1 + tail
