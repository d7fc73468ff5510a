"""Quantized weight bundle: container types, reference quantizer, binary I/O.

File layout (format version 1, all integers little-endian):

    magic   4 bytes  b"EMQB"
    version u16
    hlen    u32      byte length of the JSON header
    header  hlen bytes, UTF-8 JSON:
            {"content_hash": "<sha256 hex of payload>",
             "layers": [{"name", "rows", "cols", "bit_width",
                         "step",            # decimal string, repr() round-trip
                         "weight_offset",   # relative to payload start
                         "activation_offset"}, ...]}
    payload per layer, in header order:
            weights      rows*cols signed 8-bit, row-major
            activations  cols IEEE-754 float32

INT4 values are stored widened to one byte (range [-7, 7]); the watermark
arithmetic is value-level, not bit-level, so packing would only complicate
hashing. Quantization is symmetric (no zero point) and rounds half away
from zero so that two independent implementations byte-agree.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"EMQB"
FORMAT_VERSION = 1
SUPPORTED_BITS = (4, 8)


class BundleError(ValueError):
    """Base class for container violations."""


class BundleMagicError(BundleError):
    pass


class BundleTruncatedError(BundleError):
    pass


class BundleLayoutError(BundleError):
    """Shape, offset, range or header-structure mismatch."""


class BundleHashError(BundleError):
    pass


def quant_range(bit_width: int) -> int:
    """Largest representable magnitude for symmetric N-bit quantization."""
    if bit_width not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bit width {bit_width}, expected one of {SUPPORTED_BITS}")
    return (1 << (bit_width - 1)) - 1


def quantize_tensor(x: np.ndarray, bit_width: int) -> tuple[np.ndarray, float]:
    """Symmetric quantization of a real tensor to signed integers.

    step = max(|x|) / (2^(N-1) - 1); values are rounded half away from zero
    so every output lies in [-(2^(N-1)-1), 2^(N-1)-1].
    """
    qmax = quant_range(bit_width)
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty tensor")
    if not np.all(np.isfinite(x)):
        raise ValueError("tensor contains non-finite values")
    peak = float(np.abs(x).max())
    if peak == 0.0:
        raise ValueError("degenerate tensor: all entries are zero")
    step = peak / qmax
    q = np.copysign(np.floor(np.abs(x) / step + 0.5), x)
    return q.astype(np.int8), step


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QuantLayer:
    """One integer weight matrix plus its quantization metadata."""

    name: str
    bit_width: int
    step: float
    weights: np.ndarray  # int8, shape (rows, cols)

    def __post_init__(self):
        qmax = quant_range(self.bit_width)
        if not (isinstance(self.step, float) and np.isfinite(self.step) and self.step > 0):
            raise ValueError(f"layer {self.name!r}: step must be a positive finite float")
        w = np.asarray(self.weights)
        if w.ndim != 2 or w.size == 0:
            raise ValueError(f"layer {self.name!r}: weights must be a non-empty 2-D matrix")
        if w.dtype != np.int8:
            raise ValueError(f"layer {self.name!r}: weights must be int8")
        # abs() on int8 overflows at -128, so widen before the range check
        if int(np.abs(w.astype(np.int16)).max()) > qmax:
            raise ValueError(f"layer {self.name!r}: weight outside [-{qmax}, {qmax}]")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    def dequantized(self) -> np.ndarray:
        return self.weights.astype(np.float64) * self.step


@dataclass(frozen=True)
class ActivationProfile:
    """Per-input-channel activation magnitude for one layer."""

    layer_name: str
    magnitudes: np.ndarray  # float32, shape (cols,)

    def __post_init__(self):
        a = np.asarray(self.magnitudes)
        if a.ndim != 1 or a.size == 0:
            raise ValueError(f"profile {self.layer_name!r}: magnitudes must be a non-empty vector")
        if a.dtype != np.float32:
            raise ValueError(f"profile {self.layer_name!r}: magnitudes must be float32")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError(f"profile {self.layer_name!r}: magnitudes must be finite and >= 0")
        object.__setattr__(self, "magnitudes", _frozen(a))


@dataclass(frozen=True)
class ModelBundle:
    """Ordered quantized layers with one activation profile per layer.

    Immutable once constructed; content_hash is the SHA-256 of the canonical
    payload bytes (the exact region hashed on disk).
    """

    layers: tuple[QuantLayer, ...]
    activations: tuple[ActivationProfile, ...]
    content_hash: str = field(init=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        acts = tuple(self.activations)
        if not layers:
            raise ValueError("bundle must contain at least one layer")
        if len(layers) != len(acts):
            raise ValueError("layers and activation profiles must correspond one-to-one")
        names = [l.name for l in layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        for layer, prof in zip(layers, acts):
            if prof.layer_name != layer.name:
                raise ValueError(f"profile {prof.layer_name!r} does not match layer {layer.name!r}")
            if prof.magnitudes.shape[0] != layer.cols:
                raise ValueError(
                    f"layer {layer.name!r}: profile length {prof.magnitudes.shape[0]} != cols {layer.cols}"
                )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "content_hash", hashlib.sha256(self.payload_bytes()).hexdigest())

    @property
    def n(self) -> int:
        return len(self.layers)

    def payload_bytes(self) -> bytes:
        chunks = []
        for layer, prof in zip(self.layers, self.activations):
            chunks.append(layer.weights.astype("<i1").tobytes(order="C"))
            chunks.append(prof.magnitudes.astype("<f4").tobytes(order="C"))
        return b"".join(chunks)

    def same_shape(self, other: "ModelBundle") -> bool:
        return self.n == other.n and all(
            a.name == b.name and a.weights.shape == b.weights.shape and a.bit_width == b.bit_width
            for a, b in zip(self.layers, other.layers)
        )

    def structurally_equal(self, other: "ModelBundle") -> bool:
        if not self.same_shape(other):
            return False
        for a, b in zip(self.layers, other.layers):
            if a.step != b.step or not np.array_equal(a.weights, b.weights):
                return False
        for a, b in zip(self.activations, other.activations):
            if not np.array_equal(a.magnitudes, b.magnitudes):
                return False
        return True

    def layer(self, name: str) -> QuantLayer:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)

    def replace_weights(self, new_weights: dict[str, np.ndarray]) -> "ModelBundle":
        """Copy of the bundle with some layers' weights substituted."""
        layers = tuple(
            QuantLayer(l.name, l.bit_width, l.step, new_weights[l.name])
            if l.name in new_weights
            else l
            for l in self.layers
        )
        return ModelBundle(layers, self.activations)


# Weight synthesis: a clipped heavy-tailed body plus ~1% salient input
# channels whose weights span most of the integer range and whose activation
# magnitudes dwarf the rest. The clip mirrors the outlier suppression that
# integer PTQ pipelines apply, and the salient columns reproduce the
# high-magnitude weight channels seen in quantized transformer checkpoints.
_T_DOF = 5.0
_CLIP = 3.0 * float(np.sqrt(_T_DOF / (_T_DOF - 2.0)))


def generate_synthetic_bundle(
    n_layers: int, rows: int, cols: int, bit_width: int, gen_seed: int
) -> ModelBundle:
    """Deterministic synthetic bundle for experiments and tests."""
    if min(n_layers, rows, cols) < 1:
        raise ValueError("n_layers, rows and cols must all be >= 1")
    quant_range(bit_width)
    rng = np.random.default_rng(gen_seed)
    layers = []
    profiles = []
    for i in range(n_layers):
        n_out = max(1, round(0.01 * cols))
        out_idx = np.sort(rng.choice(cols, size=n_out, replace=False))
        x = np.clip(rng.standard_t(_T_DOF, size=(rows, cols)), -_CLIP, _CLIP)
        mag = rng.uniform(0.35 * _CLIP, _CLIP, size=(rows, n_out))
        sign = np.where(rng.random((rows, n_out)) < 0.5, -1.0, 1.0)
        x[:, out_idx] = sign * mag
        weights, step = quantize_tensor(x, bit_width)

        act = rng.lognormal(mean=0.0, sigma=0.4, size=cols)
        act[out_idx] = rng.uniform(8.0, 20.0, size=n_out) * float(np.exp(0.4))
        name = f"layer_{i:03d}"
        layers.append(QuantLayer(name, bit_width, step, weights))
        profiles.append(ActivationProfile(name, act.astype(np.float32)))
    return ModelBundle(tuple(layers), tuple(profiles))


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    payload_parts = []
    descs = []
    offset = 0
    for layer, prof in zip(bundle.layers, bundle.activations):
        wbytes = layer.weights.astype("<i1").tobytes(order="C")
        abytes = prof.magnitudes.astype("<f4").tobytes(order="C")
        descs.append(
            {
                "name": layer.name,
                "rows": layer.rows,
                "cols": layer.cols,
                "bit_width": layer.bit_width,
                "step": repr(layer.step),
                "weight_offset": offset,
                "activation_offset": offset + len(wbytes),
            }
        )
        payload_parts.append(wbytes)
        payload_parts.append(abytes)
        offset += len(wbytes) + len(abytes)
    payload = b"".join(payload_parts)
    header = json.dumps(
        {"content_hash": hashlib.sha256(payload).hexdigest(), "layers": descs}
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, len(header)))
        f.write(header)
        f.write(payload)


def load_bundle(path: str | Path) -> ModelBundle:
    raw = Path(path).read_bytes()
    if len(raw) < 10:
        raise BundleTruncatedError(f"{path}: file shorter than the fixed header")
    if raw[:4] != MAGIC:
        raise BundleMagicError(f"{path}: bad magic {raw[:4]!r}")
    version, hlen = struct.unpack("<HI", raw[4:10])
    if version != FORMAT_VERSION:
        raise BundleLayoutError(f"{path}: unsupported format version {version}")
    if len(raw) < 10 + hlen:
        raise BundleTruncatedError(f"{path}: header truncated")
    try:
        header = json.loads(raw[10 : 10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BundleLayoutError(f"{path}: malformed header JSON ({e})") from None
    if not isinstance(header, dict) or "layers" not in header or "content_hash" not in header:
        raise BundleLayoutError(f"{path}: header missing required fields")

    payload = raw[10 + hlen :]
    layers = []
    profiles = []
    expected_offset = 0
    for desc in header["layers"]:
        try:
            name = desc["name"]
            rows, cols = int(desc["rows"]), int(desc["cols"])
            bit_width = int(desc["bit_width"])
            step = float(desc["step"])
            woff, aoff = int(desc["weight_offset"]), int(desc["activation_offset"])
        except (KeyError, TypeError, ValueError) as e:
            raise BundleLayoutError(f"{path}: malformed layer descriptor ({e})") from None
        if rows < 1 or cols < 1:
            raise BundleLayoutError(f"{path}: layer {name!r}: non-positive shape {rows}x{cols}")
        wsize, asize = rows * cols, 4 * cols
        if woff != expected_offset or aoff != woff + wsize:
            raise BundleLayoutError(f"{path}: layer {name!r}: offset mismatch")
        if aoff + asize > len(payload):
            raise BundleTruncatedError(f"{path}: layer {name!r}: payload truncated")
        expected_offset = aoff + asize

        weights = (
            np.frombuffer(payload, dtype="<i1", count=wsize, offset=woff)
            .reshape(rows, cols)
            .copy()
        )
        try:
            qmax = quant_range(bit_width)
        except ValueError as e:
            raise BundleLayoutError(f"{path}: layer {name!r}: {e}") from None
        if int(np.abs(weights.astype(np.int16)).max()) > qmax:
            raise BundleLayoutError(
                f"{path}: layer {name!r}: weight outside the INT{bit_width} range"
            )
        magnitudes = np.frombuffer(payload, dtype="<f4", count=cols, offset=aoff).copy()
        try:
            layers.append(QuantLayer(name, bit_width, step, weights))
            profiles.append(ActivationProfile(name, magnitudes))
        except ValueError as e:
            raise BundleLayoutError(f"{path}: layer {name!r}: {e}") from None

    if expected_offset != len(payload):
        raise BundleTruncatedError(
            f"{path}: payload length {len(payload)} != expected {expected_offset}"
        )
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["content_hash"]:
        raise BundleHashError(f"{path}: payload hash mismatch (stored {header['content_hash']}, computed {digest})")
    try:
        return ModelBundle(tuple(layers), tuple(profiles))
    except ValueError as e:
        raise BundleLayoutError(f"{path}: {e}") from None
