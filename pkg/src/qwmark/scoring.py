"""Per-parameter suitability scores and candidate pools.

A position's score combines a quality term (reciprocal weight magnitude:
large weights tolerate a +/-1 nudge best) and a robustness term derived
from the layer's activation profile (salient input channels score low, so
they are preferred). Lower is better. Positions where either term has no
finite value are excluded outright:

* weights at the extreme quantization levels (a +/-1 step could leave the
  representable range, and the quality term treats them as unusable),
* weights at level 0 (reciprocal undefined),
* channels whose activation equals the per-layer minimum (robustness term
  divides by zero there).

Exclusion rather than sentinel scores keeps every stored score finite and
guarantees inserted bits can never overflow the integer range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import ActivationProfile, QuantLayer, quant_range


class DegenerateProfileError(ValueError):
    """All channel activations equal; every position would be excluded."""


class PoolShortfallError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreMap:
    layer_name: str
    scores: np.ndarray  # float64; +inf marks excluded positions
    excluded: np.ndarray  # bool, same shape
    alpha: float
    beta: float

    @property
    def non_excluded(self) -> int:
        return int((~self.excluded).sum())


@dataclass(frozen=True)
class CandidatePool:
    """Lowest-score positions of one layer, ascending by (score, flat index)."""

    layer_name: str
    positions: tuple[tuple[int, int], ...]

    @property
    def pool_size(self) -> int:
        return len(self.positions)


def score_layer(
    layer: QuantLayer, profile: ActivationProfile, alpha: float, beta: float
) -> ScoreMap:
    if alpha < 0 or beta < 0 or alpha + beta <= 0:
        raise ValueError("coefficients must be non-negative with a positive sum")
    if profile.magnitudes.shape[0] != layer.cols:
        raise ValueError(
            f"layer {layer.name!r}: profile length {profile.magnitudes.shape[0]} != cols {layer.cols}"
        )
    a = profile.magnitudes.astype(np.float64)
    a_min = float(a.min())
    a_max = float(a.max())
    min_channel = a == a_min
    if bool(min_channel.all()):
        raise DegenerateProfileError(
            f"layer {layer.name!r}: degenerate activation profile (all channels equal)"
        )

    w = layer.weights.astype(np.int64)
    qmax = quant_range(layer.bit_width)
    excluded = (np.abs(w) == qmax) | (w == 0) | min_channel[None, :]

    # a zero coefficient times an infinite term yields nan; every such
    # position is in the excluded mask, so the sentinel overwrite below wins
    with np.errstate(divide="ignore", invalid="ignore"):
        s_quality = 1.0 / np.abs(w).astype(np.float64)
        s_robust = np.abs(a_max / (a - a_min))
        scores = alpha * s_quality + beta * s_robust[None, :]
    scores = np.where(excluded, np.inf, scores)
    return ScoreMap(layer.name, scores, excluded, float(alpha), float(beta))


def build_candidate_pool(score_map: ScoreMap, pool_size: int) -> CandidatePool:
    """The ``pool_size`` smallest-score positions, ties broken by flat index."""
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    available = score_map.non_excluded
    if pool_size > available:
        raise PoolShortfallError(
            f"layer {score_map.layer_name!r}: pool of {pool_size} requested but only "
            f"{available} usable positions (short by {pool_size - available})"
        )
    flat = score_map.scores.ravel(order="C")
    # stable sort keeps ascending flat index among equal scores
    order = np.argsort(flat, kind="stable")[:pool_size]
    cols = score_map.scores.shape[1]
    positions = tuple((int(i) // cols, int(i) % cols) for i in order)
    return CandidatePool(score_map.layer_name, positions)
