"""Saliency-weighted damage proxy for bundle modifications.

Real model-quality metrics need inference; this proxy only needs the two
bundles. It weighs each changed weight by its dequantization step and by
how salient its input channel is, normalized against the same weighting of
the whole bundle, so numbers are comparable across shapes. It is a damage
*proxy*: monotone in the number and saliency of edits, not a perplexity
predictor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import ModelBundle


@dataclass(frozen=True)
class QualityProxy:
    modified_count: int
    max_abs_delta: int
    salient_hit_fraction: float  # share of edits landing in top-1% activation channels
    weighted_perturbation: float

    def to_dict(self) -> dict:
        return {
            "modified_count": self.modified_count,
            "max_abs_delta": self.max_abs_delta,
            "salient_hit_fraction": self.salient_hit_fraction,
            "weighted_perturbation": self.weighted_perturbation,
        }


def quality_proxy(original: ModelBundle, modified: ModelBundle) -> QualityProxy:
    if not original.same_shape(modified):
        raise ValueError("bundles have different shapes")

    modified_count = 0
    max_abs_delta = 0
    salient_hits = 0
    numerator = 0.0
    denominator = 0.0
    for lo, lm, prof in zip(original.layers, modified.layers, original.activations):
        a = prof.magnitudes.astype(np.float64)
        a_max = float(a.max())
        a_hat = a / a_max if a_max > 0 else np.zeros_like(a)

        delta = lm.weights.astype(np.int16) - lo.weights.astype(np.int16)
        changed = delta != 0
        modified_count += int(changed.sum())
        if changed.any():
            max_abs_delta = max(max_abs_delta, int(np.abs(delta).max()))

        weight_saliency = a_hat[None, :] * lo.step
        numerator += float((np.abs(delta) * weight_saliency)[changed].sum())
        denominator += float(
            (np.abs(lo.weights.astype(np.float64)) * weight_saliency).sum()
        )

        top_k = max(1, round(0.01 * lo.cols))
        top_channels = np.argsort(a, kind="stable")[-top_k:]
        salient_hits += int(changed[:, top_channels].sum())

    return QualityProxy(
        modified_count=modified_count,
        max_abs_delta=max_abs_delta,
        salient_hit_fraction=salient_hits / modified_count if modified_count else 0.0,
        weighted_perturbation=numerator / denominator if denominator > 0 else 0.0,
    )
