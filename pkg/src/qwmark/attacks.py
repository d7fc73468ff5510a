"""Adversarial evaluations against a watermarked bundle.

Three threat settings:

* overwrite: blind +1 nudges at uniformly sampled positions, hoping to
  land on watermark bits,
* re-watermark: the adversary knows the insertion algorithm but not the
  key, and re-runs scoring + selection with guessed coefficients and an
  activation proxy computed from the quantized weights themselves,
* forging: a fabricated key/original pair tries to claim ownership and is
  checked by re-deriving locations from the claimed original.

Attack randomness is domain-separated from owner key streams by fixed
tags and never touches the owner seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import ModelBundle, ActivationProfile, quant_range
from .quality import QualityProxy, quality_proxy
from .sampling import MASK64, SplitMix64, mix64, rademacher_bits, sample_indices
from .watermark import (
    VerificationReport,
    WatermarkKey,
    derive_locations,
    extract,
    map_layers,
)

_OVERWRITE_TAG = 0x6F766572_77726974  # "overwrit"
_REWM_TAG = 0x7265_7761_7465_726D  # "rewaterm"
_SIG_TAG = 0x6164767369670000  # adversary signature stream


@dataclass(frozen=True)
class RewatermarkConfig:
    alpha: float
    beta: float
    seed: int
    per_layer_count: int
    pool_ratio: int = 50
    use_quantized_activations: bool = True

    def __post_init__(self):
        if self.per_layer_count < 1:
            raise ValueError("per_layer_count must be >= 1")
        if self.pool_ratio < 1:
            raise ValueError("pool_ratio must be >= 1")


@dataclass(frozen=True)
class AttackOutcome:
    attacked: ModelBundle
    positions_touched: int
    watermark_positions_hit: int
    report: VerificationReport
    damage: QualityProxy


@dataclass(frozen=True)
class ForgeVerdict:
    accepted: bool
    reason: str
    wer: float
    log10_p_value: float

    def to_dict(self) -> dict:
        return {
            "verdict": "accept" if self.accepted else "reject",
            "reason": self.reason,
            "wer": self.wer,
            "log10_p_value": self.log10_p_value,
        }


def _attack_stream(tag: int, attack_seed: int, layer_index: int) -> SplitMix64:
    return SplitMix64(mix64((attack_seed & MASK64) ^ tag ^ mix64(layer_index)))


def _owner_positions(original: ModelBundle, key: WatermarkKey, threads: int) -> set:
    locs = derive_locations(
        original,
        seed=key.seed,
        alpha=key.alpha,
        beta=key.beta,
        pool_size=key.pool_size_per_layer,
        bits_per_layer=key.bits_per_layer,
        threads=threads,
    )
    return {(l.layer_name, r, c) for l in locs.layers for (r, c) in l.positions}


def overwrite_attack(
    wm_bundle: ModelBundle,
    original: ModelBundle,
    key: WatermarkKey,
    per_layer_count: int,
    attack_seed: int,
    *,
    threads: int = 1,
) -> AttackOutcome:
    """Add +1 (saturating) to ``per_layer_count`` uniform positions per layer."""
    if per_layer_count < 1:
        raise ValueError("per_layer_count must be >= 1")
    for layer in wm_bundle.layers:
        qmax = quant_range(layer.bit_width)
        capacity = int((np.abs(layer.weights.astype(np.int16)) != qmax).sum())
        if per_layer_count > capacity:
            raise ValueError(
                f"layer {layer.name!r}: {per_layer_count} overwrites exceed capacity {capacity}"
            )

    def one(index: int):
        layer = wm_bundle.layers[index]
        qmax = quant_range(layer.bit_width)
        total = layer.rows * layer.cols
        flat = sample_indices(total, per_layer_count, _attack_stream(_OVERWRITE_TAG, attack_seed, index))
        w = layer.weights.astype(np.int16).ravel()
        w[flat] = np.minimum(w[flat] + 1, qmax)
        touched = {(layer.name, i // layer.cols, i % layer.cols) for i in flat}
        return layer.name, w.reshape(layer.rows, layer.cols).astype(np.int8), touched

    results = map_layers(one, list(range(wm_bundle.n)), threads)
    new_weights = {name: w for name, w, _ in results}
    touched = set().union(*(t for _, _, t in results))
    attacked = wm_bundle.replace_weights(new_weights)
    return AttackOutcome(
        attacked=attacked,
        positions_touched=sum(len(t) for _, _, t in results),
        watermark_positions_hit=len(touched & _owner_positions(original, key, threads)),
        report=extract(attacked, original, key, threads=threads),
        damage=quality_proxy(wm_bundle, attacked),
    )


def quantized_activation_proxy(bundle: ModelBundle) -> tuple[ActivationProfile, ...]:
    """Per-channel mean |weight| as a stand-in for activations the adversary lacks.

    Correlated with, but not equal to, the owner's secret profile; this is
    the best per-channel saliency signal available from the deployed
    integer weights alone.
    """
    return tuple(
        ActivationProfile(
            layer.name,
            np.abs(layer.weights.astype(np.float64)).mean(axis=0).astype(np.float32),
        )
        for layer in bundle.layers
    )


def rewatermark_attack(
    wm_bundle: ModelBundle,
    original: ModelBundle,
    key: WatermarkKey,
    cfg: RewatermarkConfig,
    *,
    threads: int = 1,
) -> AttackOutcome:
    """Re-run scoring + selection with adversary parameters and insert +/-1 bits."""
    if cfg.use_quantized_activations:
        scoring_bundle = ModelBundle(wm_bundle.layers, quantized_activation_proxy(wm_bundle))
    else:
        scoring_bundle = wm_bundle

    adv_locations = derive_locations(
        scoring_bundle,
        seed=cfg.seed,
        alpha=cfg.alpha,
        beta=cfg.beta,
        pool_size=cfg.pool_ratio * cfg.per_layer_count,
        bits_per_layer=cfg.per_layer_count,
        threads=threads,
    )
    adv_bits = rademacher_bits((cfg.seed & MASK64) ^ _SIG_TAG, cfg.per_layer_count * wm_bundle.n)
    adv_locations = adv_locations.with_signature(adv_bits)

    new_weights = {}
    touched = set()
    for layer, loc in zip(wm_bundle.layers, adv_locations.layers):
        w = layer.weights.copy()
        assert loc.bits is not None
        for (r, c), b in zip(loc.positions, loc.bits):
            w[r, c] += b
            touched.add((layer.name, r, c))
        new_weights[layer.name] = w
    attacked = wm_bundle.replace_weights(new_weights)
    return AttackOutcome(
        attacked=attacked,
        positions_touched=len(touched),
        watermark_positions_hit=len(touched & _owner_positions(original, key, threads)),
        report=extract(attacked, original, key, threads=threads),
        damage=quality_proxy(wm_bundle, attacked),
    )


def forge_evaluate(
    wm_bundle: ModelBundle,
    claimed_key: WatermarkKey,
    claimed_original: ModelBundle,
    *,
    min_wer: float = 95.0,
    max_log10_p: float = -6.0,
    threads: int = 1,
) -> ForgeVerdict:
    """Validate an ownership claim by reproducing its locations.

    A claim is accepted only if (a) the claimed original hashes to the value
    recorded in the key and (b) locations re-derived from that original
    recover the claimed signature from ``wm_bundle`` at high confidence.
    Fabricated location lists fail (b) because locations are never taken
    from the claimant, only re-derived.
    """
    if claimed_original.content_hash != claimed_key.original_bundle_hash:
        return ForgeVerdict(
            accepted=False,
            reason="original bundle hash does not match the key",
            wer=0.0,
            log10_p_value=0.0,
        )
    if not wm_bundle.same_shape(claimed_original):
        return ForgeVerdict(
            accepted=False,
            reason="claimed original shape does not match the suspect bundle",
            wer=0.0,
            log10_p_value=0.0,
        )
    try:
        report = extract(wm_bundle, claimed_original, claimed_key, threads=threads)
    except ValueError as e:
        return ForgeVerdict(accepted=False, reason=str(e), wer=0.0, log10_p_value=0.0)
    ok = report.wer >= min_wer and report.log10_p_value <= max_log10_p
    return ForgeVerdict(
        accepted=ok,
        reason="signature reproduced from the claimed original"
        if ok
        else "locations not reproducible from the claimed original at the required confidence",
        wer=report.wer,
        log10_p_value=report.log10_p_value,
    )
