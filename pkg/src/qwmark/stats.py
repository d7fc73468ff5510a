"""Ownership statistics: binomial tail probability in log space.

The chance that an unrelated model matches k of n Rademacher signature
bits is the upper binomial tail at p = 1/2. Realistic signature lengths
push the probability far below double-precision range (300 bits per layer
across hundreds of layers), so everything is accumulated in log space and
callers combine layers by adding log10 values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_LN10 = math.log(10.0)


@dataclass(frozen=True)
class StrengthResult:
    matched: int
    total: int
    log10_p: float
    p_value: float  # 0.0 once the true value underflows; log10_p stays exact


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _log_tail(total: int, lo: int, hi: int) -> float:
    """ln of sum_{i=lo}^{hi} C(total, i) * 0.5^total via log-sum-exp."""
    logs = [_log_binom(total, i) for i in range(lo, hi + 1)]
    peak = max(logs)
    acc = math.fsum(math.exp(v - peak) for v in logs)
    return peak + math.log(acc) + total * math.log(0.5)


def watermark_strength(matched: int, total: int) -> StrengthResult:
    """P[X >= matched] for X ~ Binomial(total, 1/2) in the log10 domain.

    matched == total gives 2^-total; matched == 0 gives exactly 1. The sum
    runs over whichever tail carries less mass (the complement goes through
    log1p), so the relative error of log10_p stays small at both ends of
    the range instead of cancelling away when the probability is near 1.
    """
    if total < 1:
        raise ValueError("total must be >= 1")
    if matched < 0 or matched > total:
        raise ValueError(f"matched must be in [0, {total}], got {matched}")
    if matched == 0:
        return StrengthResult(matched, total, 0.0, 1.0)

    ln_upper = _log_tail(total, matched, total)
    ln_lower = _log_tail(total, 0, matched - 1)
    if ln_lower < ln_upper:
        ln_p = math.log1p(-math.exp(ln_lower))
    else:
        ln_p = ln_upper
    log10_p = min(ln_p / _LN10, 0.0)
    return StrengthResult(matched, total, log10_p, 10.0 ** log10_p)


def multi_layer_strength(per_layer_log10: list[float]) -> float:
    """Combined strength of independent layers: sum of per-layer log10 values."""
    if not per_layer_log10:
        raise ValueError("need at least one per-layer value")
    return math.fsum(per_layer_log10)
