"""Selection (truncate to a fixed precision) and reconstruction (clipped expansion).

A compressed hypothesis stores the selected subsample, one shared precision
unit ``u = eps / (4 M |I|)`` and an integer mantissa per index, so every
coefficient is exactly ``mantissa * u`` and the side information can be
counted literally.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, cross_gram

MODEL_FORMAT = "ckr-model/1"
# per-index slack in the bit envelope: sign bit, log2(a + 1) vs log2(a), rounding
ENVELOPE_SLACK_BITS = 3.0


def precision_unit(eps: float, M: float, size: int) -> float:
    return eps / (4.0 * M * size)


def truncate(alpha_star, eps: float, M: float, size: int) -> tuple[list[int], float]:
    """Round each entry to the nearest multiple of ``eps / (4 M size)``.

    Ties go to the even multiple. Returns ``(mantissas, unit)``.
    """
    if eps <= 0 or M <= 0 or size < 1:
        raise ValueError("need eps > 0, M > 0 and size >= 1")
    u = precision_unit(eps, M, size)
    a = np.asarray(alpha_star, dtype=float)
    return [int(v) for v in np.rint(a / u)], u


def clip01(z):
    return np.maximum(0.0, np.minimum(1.0, z))


@dataclass(frozen=True, eq=False)
class CompressedHypothesis:
    kernel: KernelSpec
    selected: tuple[int, ...]       # the full index set I
    indices: tuple[int, ...]        # indices with nonzero mantissa
    points: np.ndarray              # points for ``indices``
    mantissas: tuple[int, ...]
    unit: float
    gamma: float
    m: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            pts = pts.reshape(len(self.indices), -1) if pts.size else np.zeros((0, 0))
        if pts.shape[0] != len(self.indices):
            raise ValueError("one point per stored index")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(self.mantissas) != len(self.indices):
            raise ValueError("one mantissa per stored index")
        if any(int(k) == 0 for k in self.mantissas):
            raise ValueError("zero mantissas are not stored")

    def __eq__(self, other):
        if not isinstance(other, CompressedHypothesis):
            return NotImplemented
        return (self.kernel, self.selected, self.indices, self.mantissas, self.unit, self.gamma,
                self.m) == (other.kernel, other.selected, other.indices, other.mantissas,
                            other.unit, other.gamma, other.m) and \
            np.array_equal(self.points, other.points)

    __hash__ = None

    @property
    def size(self) -> int:
        return len(self.selected)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([float(k) for k in self.mantissas]) * self.unit

    def raw(self, X) -> np.ndarray:
        """Unclipped values sum_i (k(x_i, x) + gamma m [x == x_i]) c_i."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.indices:
            return np.zeros(X.shape[0])
        if X.shape[1] != self.points.shape[1]:
            raise ValueError(f"dimension mismatch: model has n={self.points.shape[1]}, data has {X.shape[1]}")
        W = cross_gram(self.kernel, X, self.points)
        keys = defaultdict(list)
        for j, p in enumerate(self.points):
            keys[p.tobytes()].append(j)
        shift = self.gamma * self.m
        for r, x in enumerate(X):
            for j in keys.get(x.tobytes(), ()):
                W[r, j] += shift
        return W @ self.coeffs

    def predict(self, X) -> np.ndarray:
        return clip01(self.raw(X))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "kernel": self.kernel.to_dict(),
            "gamma": self.gamma,
            "m": self.m,
            "precision_unit": self.unit,
            "selected": list(self.selected),
            "entries": [{"index": i, "point": [float(v) for v in p], "mantissa": k}
                        for i, p, k in zip(self.indices, self.points, self.mantissas)],
            "metadata": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompressedHypothesis":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a model file (format {d.get('format')!r})")
        entries = d["entries"]
        n = len(entries[0]["point"]) if entries else 0
        return cls(
            kernel=KernelSpec.from_dict(d["kernel"]),
            selected=tuple(int(i) for i in d["selected"]),
            indices=tuple(int(e["index"]) for e in entries),
            points=np.array([e["point"] for e in entries], dtype=float).reshape(len(entries), n),
            mantissas=tuple(int(e["mantissa"]) for e in entries),
            unit=float(d["precision_unit"]),
            gamma=float(d["gamma"]),
            m=int(d["m"]),
            meta=d.get("metadata", {}),
        )

    def dumps(self, manifest: dict | None = None) -> str:
        d = self.to_dict()
        if manifest is not None:
            d["manifest"] = manifest
        return json.dumps(d, sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "CompressedHypothesis":
        return cls.from_dict(json.loads(text))


def compress(alpha_star, points, selected, eps: float, M: float, gamma: float,
             kernel: KernelSpec, meta: dict | None = None) -> CompressedHypothesis:
    """Truncate the sparse solution and package the hypothesis."""
    selected = np.sort(np.asarray(selected, dtype=int))
    alpha_star = np.asarray(alpha_star, dtype=float)
    values = alpha_star[selected]
    mant, u = truncate(values, eps, M, len(selected))
    keep = [j for j, k in enumerate(mant) if k != 0]
    err = float(np.max(np.abs(np.array(mant, dtype=float) * u - values))) if len(values) else 0.0
    info = {"alpha_star_norm": float(np.linalg.norm(alpha_star)),
            "max_truncation_error": err}
    info.update(meta or {})
    X = np.asarray(points, dtype=float)
    return CompressedHypothesis(
        kernel=kernel,
        selected=tuple(int(i) for i in selected),
        indices=tuple(int(selected[j]) for j in keep),
        points=X[selected[keep]] if keep else np.zeros((0, X.shape[1])),
        mantissas=tuple(mant[j] for j in keep),
        unit=u, gamma=float(gamma), m=X.shape[0], meta=info,
    )


def reconstruct(h: CompressedHypothesis, x) -> float:
    return float(h.predict(np.asarray(x, dtype=float).reshape(1, -1))[0])


@dataclass(frozen=True)
class BitBudget:
    integer_bits: float
    sign_bits: int
    fractional_bits: float
    subsample: int
    envelope: float
    norm_cap: float

    @property
    def side_info_bits_total(self) -> float:
        return self.integer_bits + self.sign_bits + self.fractional_bits

    @property
    def k_size(self) -> int:
        return self.subsample + math.ceil(self.side_info_bits_total)

    @property
    def within_envelope(self) -> bool:
        return self.side_info_bits_total <= self.envelope

    def to_dict(self) -> dict:
        return {"integer_bits": self.integer_bits, "sign_bits": self.sign_bits,
                "fractional_bits": self.fractional_bits, "subsample": self.subsample,
                "side_info_bits_total": self.side_info_bits_total, "k_size": self.k_size,
                "envelope": self.envelope, "norm_cap": self.norm_cap,
                "within_envelope": self.within_envelope}


def bit_complexity(h: CompressedHypothesis) -> BitBudget:
    """Count the side information of a hypothesis.

    Integer part: ``sum log2|c_i|`` over coefficients of magnitude above one,
    plus a sign bit per nonzero coefficient. Fractional part: ``log2(1/u)``
    per selected index. The envelope is
    ``|I| (log2(1/(gamma sqrt m)) + log2(1/u)) + 3 |I|``.
    """
    c = np.abs(h.coeffs)
    integer = float(np.sum(np.log2(c[c > 1]))) if c.size else 0.0
    frac = h.size * math.log2(1.0 / h.unit)
    cap = 1.0 / (h.gamma * math.sqrt(h.m)) if h.gamma > 0 else math.inf
    env = h.size * (max(math.log2(cap), 0.0) + math.log2(1.0 / h.unit) + ENVELOPE_SLACK_BITS)
    return BitBudget(integer, len(h.mantissas), frac, h.size, env, cap)


def compression_epsilon(k: int, m: int, delta: float) -> float:
    """50 (k log(m/k) + log(1/delta)) / m, natural logs."""
    if k > m / 2:
        raise ValueError(f"compression size {k} exceeds m/2 = {m / 2}; bound inapplicable")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    body = (k * math.log(m / k) if k > 0 else 0.0) + math.log(1.0 / delta)
    return 50.0 * body / m


def compression_generalization_bound(k: int, m: int, delta: float, empirical_loss: float) -> float:
    """Cap on |population loss - empirical loss| for a size-k selection scheme.

    Values above 1 are vacuous for losses in [0, 1]; see :func:`is_vacuous`.
    """
    if not 0 <= empirical_loss <= 1:
        raise ValueError("empirical loss must be in [0, 1]")
    e = compression_epsilon(k, m, delta)
    return math.sqrt(e * empirical_loss) + e


def rademacher_baseline_bound(X_bound: float, W_bound: float, L: float, b: float,
                              m: int, delta: float) -> float:
    """4 L X W / sqrt(m) + 2 b sqrt(log(1/delta) / (2m))."""
    if min(X_bound, W_bound, L, b, m, delta) <= 0:
        raise ValueError("all arguments must be positive")
    return 4 * L * X_bound * W_bound / math.sqrt(m) + 2 * b * math.sqrt(math.log(1 / delta) / (2 * m))


def is_vacuous(bound: float) -> bool:
    return bound > 1.0
