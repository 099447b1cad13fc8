"""Numeric verification of softmax attention dispersion and the boundary
suppression effect, independent of any model.

Three facts are checkable in closed form:
  * softmax weights over N keys always normalize to 1;
  * a single relevant key's weight e^g / (e^g + N - 1) decays as the number
    of uniform distractors N grows (dispersion);
  * boosting one boundary slot's logit from s_sp to s_sep inflates only the
    normalization denominator, so every other position's weight shrinks by
    the factor Z_plain / Z_boosted < 1 (cross-segment suppression).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import UsageError


@dataclass(frozen=True)
class AttentionInput:
    """One query against N keys; the boundary slot marks the delimiter (or
    separator, when boosted=True) key position."""

    query: np.ndarray
    keys: np.ndarray
    boundary_index: int
    boosted: bool = False

    def __post_init__(self) -> None:
        query = np.asarray(self.query, dtype=float)
        keys = np.asarray(self.keys, dtype=float)
        object.__setattr__(self, "query", query)
        object.__setattr__(self, "keys", keys)
        if query.ndim != 1 or keys.ndim != 2 or keys.shape[1] != query.shape[0]:
            raise UsageError("query must be (d_k,), keys must be (N, d_k)")
        if keys.shape[0] < 2:
            raise UsageError("need at least two keys")
        if not (0 <= self.boundary_index < keys.shape[0]):
            raise UsageError("boundary_index out of range")

    @property
    def d_k(self) -> int:
        return int(self.query.shape[0])


@dataclass(frozen=True)
class AttentionWeights:
    """Normalized attention distribution; sums to 1 within 1e-12."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", weights)
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise UsageError("attention weights must sum to 1")
        if float(weights.min()) < 0.0 or float(weights.max()) > 1.0:
            raise UsageError("attention weights must lie in [0, 1]")


def stable_softmax(logits: Sequence[float] | np.ndarray) -> np.ndarray:
    """Softmax with max-subtraction; safe for logits up to +-500 and beyond."""
    arr = np.asarray(logits, dtype=float)
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise UsageError("logits must be a non-empty finite array")
    shifted = np.exp(arr - arr.max())
    return shifted / shifted.sum()


def softmax_attention(inp: AttentionInput) -> AttentionWeights:
    """Scaled dot-product attention weights for one query."""
    if not (np.all(np.isfinite(inp.query)) and np.all(np.isfinite(inp.keys))):
        raise UsageError("non-finite attention input")
    logits = inp.keys @ inp.query / np.sqrt(inp.d_k)
    return AttentionWeights(stable_softmax(logits))


def cross_segment_ratio(
    context_logits: Sequence[float] | np.ndarray, s_sp: float, s_sep: float
) -> float:
    """Weight ratio for any context position when the boundary slot's logit is
    raised from s_sp to s_sep.

    Both distributions share every context logit; only the boundary slot
    differs, so the ratio reduces to Z_plain / Z_boosted. It is < 1 whenever
    s_sep > s_sp, exactly 1 at equality, and > 1 if the boundary is demoted
    (the direction, not an error).
    """
    context = np.asarray(context_logits, dtype=float)
    if context.size == 0 or not np.all(np.isfinite(context)):
        raise UsageError("context logits must be non-empty and finite")
    if not (np.isfinite(s_sp) and np.isfinite(s_sep)):
        raise UsageError("boundary logits must be finite")
    if s_sep == s_sp:
        return 1.0
    shift = max(float(context.max()), s_sp, s_sep)
    body = float(np.exp(context - shift).sum())
    z_plain = body + float(np.exp(s_sp - shift))
    z_boosted = body + float(np.exp(s_sep - shift))
    return z_plain / z_boosted


def dispersion_curve(
    n_values: Iterable[int], relevance_gap: float = 0.0
) -> list[tuple[int, float]]:
    """Weight of one relevant key (logit gap g over N-1 uniform distractors)
    for each N: e^g / (e^g + N - 1), strictly decreasing in N."""
    if not np.isfinite(relevance_gap):
        raise UsageError("relevance gap must be finite")
    points: list[tuple[int, float]] = []
    for n in n_values:
        if n < 1:
            raise UsageError("N must be >= 1")
        # computed as 1 / (1 + (N-1) e^-g) to stay finite for large gaps
        weight = 1.0 / (1.0 + (n - 1) * np.exp(-relevance_gap))
        points.append((int(n), float(weight)))
    return points
