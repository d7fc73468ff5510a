"""Signature insertion, location derivation, extraction and the key format.

A watermark is a sequence of +/-1 bits added onto selected quantized
weights. Locations are never stored: they are re-derived from the key
parameters and the owner's original bundle, which is what makes forged
location lists worthless (see attacks.forge_evaluate).

Derivation contract, per layer index ``l`` (0-based, bundle order):

1. score the layer with the key's (alpha, beta) against its stored
   activation profile and take the ``pool_size`` lowest-score positions
   (ties by flat index),
2. draw ``bits_per_layer`` positions from that ordered pool by partial
   Fisher-Yates, using the stream ``layer_stream(seed, l)`` from
   ``sampling``,
3. signature bits are consumed in global order: layer 0 takes the first
   ``bits_per_layer`` bits in selection order, layer 1 continues.

Every step is pure integer/float64 arithmetic, so results are identical
across runs, platforms and thread counts.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, TypeVar

import numpy as np

from .bundle import ModelBundle
from .sampling import MASK64, layer_stream, partial_fisher_yates
from .scoring import build_candidate_pool, score_layer
from .stats import watermark_strength

KEY_VERSION = 1

T = TypeVar("T")
U = TypeVar("U")


class OriginalMismatchError(ValueError):
    """The supplied original bundle is not the one the key was created on."""


class ShapeMismatchError(ValueError):
    pass


class KeyFormatError(ValueError):
    pass


def check_signature(bits: Iterable[int]) -> tuple[int, ...]:
    sig = tuple(int(b) for b in bits)
    if not sig:
        raise ValueError("signature must be non-empty")
    if any(b not in (-1, 1) for b in sig):
        raise ValueError("signature bits must be +1 or -1")
    return sig


def map_layers(fn: Callable[[T], U], items: list[T], threads: int) -> list[U]:
    """Apply fn per layer, optionally in a thread pool, preserving order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class WatermarkKey:
    """Everything needed to re-derive locations and verify a signature."""

    seed: int
    alpha: float
    beta: float
    pool_size_per_layer: int
    bits_per_layer: int
    signature: tuple[int, ...]
    original_bundle_hash: str
    created_at: str
    version: int = KEY_VERSION

    def __post_init__(self):
        object.__setattr__(self, "seed", self.seed & MASK64)
        object.__setattr__(self, "signature", check_signature(self.signature))
        if self.pool_size_per_layer < self.bits_per_layer:
            raise ValueError("pool_size_per_layer must be >= bits_per_layer")
        if self.bits_per_layer < 1:
            raise ValueError("bits_per_layer must be >= 1")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "alpha": self.alpha,
            "beta": self.beta,
            "pool_size_per_layer": self.pool_size_per_layer,
            "bits_per_layer": self.bits_per_layer,
            "signature": list(self.signature),
            "original_bundle_hash": self.original_bundle_hash,
            "created_at": self.created_at,
        }


def save_key(key: WatermarkKey, path: str | Path) -> None:
    Path(path).write_text(json.dumps(key.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_key(path: str | Path) -> WatermarkKey:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return WatermarkKey(
            version=int(raw["version"]),
            seed=int(raw["seed"]),
            alpha=float(raw["alpha"]),
            beta=float(raw["beta"]),
            pool_size_per_layer=int(raw["pool_size_per_layer"]),
            bits_per_layer=int(raw["bits_per_layer"]),
            signature=raw["signature"],
            original_bundle_hash=str(raw["original_bundle_hash"]),
            created_at=str(raw["created_at"]),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise KeyFormatError(f"{path}: malformed key file ({e})") from None


@dataclass(frozen=True)
class LayerLocations:
    layer_name: str
    positions: tuple[tuple[int, int], ...]  # selection order
    bits: tuple[int, ...] | None = None  # aligned with positions once assigned


@dataclass(frozen=True)
class WatermarkLocations:
    layers: tuple[LayerLocations, ...]

    @property
    def total_bits(self) -> int:
        return sum(len(l.positions) for l in self.layers)

    def with_signature(self, signature: Iterable[int]) -> "WatermarkLocations":
        sig = check_signature(signature)
        if len(sig) != self.total_bits:
            raise ValueError(f"signature length {len(sig)} != {self.total_bits} locations")
        out = []
        cursor = 0
        for loc in self.layers:
            k = len(loc.positions)
            out.append(LayerLocations(loc.layer_name, loc.positions, sig[cursor : cursor + k]))
            cursor += k
        return WatermarkLocations(tuple(out))

    def flat_positions(self) -> list[tuple[str, int, int]]:
        return [
            (loc.layer_name, r, c) for loc in self.layers for (r, c) in loc.positions
        ]


@dataclass(frozen=True)
class VerificationReport:
    total_bits: int
    matched_bits: int
    wer: float  # percentage
    log10_p_value: float
    per_layer: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "total_bits": self.total_bits,
            "matched_bits": self.matched_bits,
            "wer": self.wer,
            "log10_p_value": self.log10_p_value,
            "per_layer": [dict(d) for d in self.per_layer],
        }


def save_report(report: VerificationReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")


def derive_locations(
    bundle: ModelBundle,
    *,
    seed: int,
    alpha: float,
    beta: float,
    pool_size: int,
    bits_per_layer: int,
    threads: int = 1,
) -> WatermarkLocations:
    """Re-derivable watermark positions for every layer of ``bundle``."""
    if bits_per_layer < 1:
        raise ValueError("bits_per_layer must be >= 1")
    if pool_size < bits_per_layer:
        raise ValueError(
            f"pool_size {pool_size} cannot be smaller than bits_per_layer {bits_per_layer}"
        )

    def one(index: int) -> LayerLocations:
        layer = bundle.layers[index]
        pool = build_candidate_pool(
            score_layer(layer, bundle.activations[index], alpha, beta), pool_size
        )
        picked = partial_fisher_yates(pool.positions, bits_per_layer, layer_stream(seed, index))
        return LayerLocations(layer.name, tuple(picked))

    return WatermarkLocations(tuple(map_layers(one, list(range(bundle.n)), threads)))


def insert(
    bundle: ModelBundle,
    signature: Iterable[int],
    *,
    seed: int,
    alpha: float,
    beta: float,
    pool_size: int,
    threads: int = 1,
    created_at: str | None = None,
) -> tuple[ModelBundle, WatermarkKey]:
    """Embed ``signature`` into a copy of ``bundle`` and mint the matching key."""
    sig = check_signature(signature)
    if len(sig) % bundle.n != 0:
        raise ValueError(
            f"signature length {len(sig)} is not divisible by the layer count {bundle.n}"
        )
    bits_per_layer = len(sig) // bundle.n
    locations = derive_locations(
        bundle,
        seed=seed,
        alpha=alpha,
        beta=beta,
        pool_size=pool_size,
        bits_per_layer=bits_per_layer,
        threads=threads,
    ).with_signature(sig)

    new_weights: dict[str, np.ndarray] = {}
    for layer, loc in zip(bundle.layers, locations.layers):
        w = layer.weights.copy()
        assert loc.bits is not None
        for (r, c), b in zip(loc.positions, loc.bits):
            w[r, c] += b
        new_weights[layer.name] = w
    marked = bundle.replace_weights(new_weights)

    key = WatermarkKey(
        seed=seed,
        alpha=float(alpha),
        beta=float(beta),
        pool_size_per_layer=pool_size,
        bits_per_layer=bits_per_layer,
        signature=sig,
        original_bundle_hash=bundle.content_hash,
        created_at=created_at
        if created_at is not None
        else datetime.now(timezone.utc).isoformat(),
    )
    return marked, key


def extract(
    suspect: ModelBundle,
    original: ModelBundle,
    key: WatermarkKey,
    *,
    threads: int = 1,
) -> VerificationReport:
    """Decode the key's signature from ``suspect`` against the owner's original.

    A bit matches only when the integer difference at its location equals the
    signature bit exactly; an untouched weight (difference 0) never matches.
    """
    if not suspect.same_shape(original):
        raise ShapeMismatchError("suspect and original bundles have different shapes")
    if original.content_hash != key.original_bundle_hash:
        raise OriginalMismatchError(
            "wrong original bundle: content hash does not match the key"
        )
    locations = derive_locations(
        original,
        seed=key.seed,
        alpha=key.alpha,
        beta=key.beta,
        pool_size=key.pool_size_per_layer,
        bits_per_layer=key.bits_per_layer,
        threads=threads,
    ).with_signature(key.signature)

    def one(index: int) -> dict:
        loc = locations.layers[index]
        w_orig = original.layers[index].weights.astype(np.int16)
        w_susp = suspect.layers[index].weights.astype(np.int16)
        assert loc.bits is not None
        matched = sum(
            1
            for (r, c), b in zip(loc.positions, loc.bits)
            if int(w_susp[r, c]) - int(w_orig[r, c]) == b
        )
        return {
            "layer_name": loc.layer_name,
            "inserted": len(loc.positions),
            "matched": matched,
        }

    per_layer = map_layers(one, list(range(original.n)), threads)
    matched = sum(d["matched"] for d in per_layer)
    total = locations.total_bits
    strength = watermark_strength(matched, total)
    return VerificationReport(
        total_bits=total,
        matched_bits=matched,
        wer=100.0 * matched / total,
        log10_p_value=strength.log10_p,
        per_layer=tuple(per_layer),
    )
