"""Watermarking toolkit for quantized weight bundles.

Embeds owner signatures as +/-1 nudges on strategically scored integer
weights, re-derives their locations from a compact key, and evaluates
robustness against overwrite, re-watermark and forging attacks.
"""

from .bundle import (
    ActivationProfile,
    BundleError,
    BundleHashError,
    BundleLayoutError,
    BundleMagicError,
    BundleTruncatedError,
    ModelBundle,
    QuantLayer,
    generate_synthetic_bundle,
    load_bundle,
    quant_range,
    quantize_tensor,
    save_bundle,
)
from .scoring import (
    CandidatePool,
    DegenerateProfileError,
    PoolShortfallError,
    ScoreMap,
    build_candidate_pool,
    score_layer,
)
from .stats import StrengthResult, multi_layer_strength, watermark_strength
from .watermark import (
    KeyFormatError,
    LayerLocations,
    OriginalMismatchError,
    ShapeMismatchError,
    VerificationReport,
    WatermarkKey,
    WatermarkLocations,
    derive_locations,
    extract,
    insert,
    load_key,
    save_key,
    save_report,
)
from .quality import QualityProxy, quality_proxy
from .attacks import (
    AttackOutcome,
    ForgeVerdict,
    RewatermarkConfig,
    forge_evaluate,
    overwrite_attack,
    quantized_activation_proxy,
    rewatermark_attack,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationProfile",
    "AttackOutcome",
    "BundleError",
    "BundleHashError",
    "BundleLayoutError",
    "BundleMagicError",
    "BundleTruncatedError",
    "CandidatePool",
    "DegenerateProfileError",
    "ForgeVerdict",
    "KeyFormatError",
    "LayerLocations",
    "ModelBundle",
    "OriginalMismatchError",
    "PoolShortfallError",
    "QualityProxy",
    "QuantLayer",
    "RewatermarkConfig",
    "ScoreMap",
    "ShapeMismatchError",
    "StrengthResult",
    "VerificationReport",
    "WatermarkKey",
    "WatermarkLocations",
    "build_candidate_pool",
    "derive_locations",
    "extract",
    "forge_evaluate",
    "generate_synthetic_bundle",
    "insert",
    "load_bundle",
    "load_key",
    "multi_layer_strength",
    "overwrite_attack",
    "quality_proxy",
    "quant_range",
    "quantize_tensor",
    "quantized_activation_proxy",
    "rewatermark_attack",
    "save_bundle",
    "save_key",
    "save_report",
    "score_layer",
    "watermark_strength",
]
