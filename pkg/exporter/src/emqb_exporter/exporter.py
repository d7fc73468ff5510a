"""Convert a PyTorch model plus calibration inputs into an EMQB bundle.

The exporter walks every ``nn.Linear`` in the model, collects the mean
absolute input activation per input channel over a calibration set (forward
hooks, accumulated in float64), quantizes each float weight matrix to the
requested symmetric integer width, and writes the EMQB container that the
watermarking toolkit consumes. The container layout is reproduced here from
its documented byte layout; this package deliberately does not import the
toolkit, files are the interface.

EMQB layout (format version 1, little-endian):
    magic "EMQB" | version u16 | header-length u32 | JSON header | payload
    header: {"content_hash": sha256 hex of payload,
             "layers": [{name, rows, cols, bit_width, step (decimal string),
                         weight_offset, activation_offset}, ...]}
    payload per layer: row-major int8 weights, then float32 activations.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

MAGIC = b"EMQB"
FORMAT_VERSION = 1
AGGREGATION = "mean_abs_per_input_channel"


class ExportError(ValueError):
    pass


@dataclass
class ExportManifest:
    model_id: str
    bit_width: int
    calibration_id: str
    calibration_samples: int
    layers: list[str]
    activation_aggregation: str = AGGREGATION
    content_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "bit_width": self.bit_width,
            "calibration": {
                "id": self.calibration_id,
                "samples": self.calibration_samples,
            },
            "layers": self.layers,
            "activation_aggregation": self.activation_aggregation,
            "content_hash": self.content_hash,
        }


def quantize_symmetric(weight: np.ndarray, bit_width: int) -> tuple[np.ndarray, float]:
    """Symmetric round-half-away-from-zero quantization, step = max|w|/(2^(N-1)-1)."""
    if bit_width not in (4, 8):
        raise ExportError(f"unsupported bit width {bit_width}")
    qmax = (1 << (bit_width - 1)) - 1
    w = np.asarray(weight, dtype=np.float64)
    peak = float(np.abs(w).max())
    if peak == 0.0:
        raise ExportError("degenerate layer: all-zero weight matrix")
    step = peak / qmax
    q = np.copysign(np.floor(np.abs(w) / step + 0.5), w)
    return q.astype(np.int8), step


def _select_linears(model: nn.Module, layer_filter: str | None) -> list[tuple[str, nn.Linear]]:
    pattern = re.compile(layer_filter) if layer_filter else None
    picked = []
    for name, module in model.named_modules():
        if not isinstance(module, nn.Linear):
            continue
        if pattern and not pattern.search(name):
            continue
        if module.weight.dim() != 2:
            raise ExportError(f"layer {name!r}: unsupported weight shape {tuple(module.weight.shape)}")
        if not module.weight.is_floating_point():
            raise ExportError(
                f"layer {name!r}: integer weights without quantization metadata; "
                "cannot infer a step size"
            )
        picked.append((name, module))
    if not picked:
        raise ExportError("no linear layers matched")
    return picked


class _ActivationCollector:
    """Accumulates sum(|input|) per input channel for one linear layer."""

    def __init__(self, in_features: int):
        self.total = np.zeros(in_features, dtype=np.float64)
        self.count = 0

    def __call__(self, module, inputs, output):
        x = inputs[0].detach()
        flat = x.reshape(-1, x.shape[-1])
        self.total += flat.abs().sum(dim=0).to(torch.float64).cpu().numpy()
        self.count += flat.shape[0]

    def mean_abs(self, name: str) -> np.ndarray:
        if self.count == 0:
            raise ExportError(f"layer {name!r}: no calibration activations observed")
        out = (self.total / self.count).astype(np.float32)
        if not np.all(np.isfinite(out)):
            raise ExportError(f"layer {name!r}: non-finite calibration activations")
        return out


def collect_activations(
    model: nn.Module,
    calibration: torch.Tensor,
    names_and_modules: list[tuple[str, nn.Linear]],
    batch_size: int = 8,
) -> dict[str, np.ndarray]:
    collectors = {name: _ActivationCollector(mod.in_features) for name, mod in names_and_modules}
    handles = [mod.register_forward_hook(collectors[name]) for name, mod in names_and_modules]
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for start in range(0, calibration.shape[0], batch_size):
                model(calibration[start : start + batch_size])
    finally:
        for h in handles:
            h.remove()
        if was_training:
            model.train()
    return {name: collectors[name].mean_abs(name) for name, _ in names_and_modules}


def write_emqb(
    path: str | Path,
    records: list[tuple[str, np.ndarray, float, np.ndarray]],
    bit_width: int,
) -> str:
    """Write (name, int8 weights, step, float32 activations) records.

    Returns the sha256 hex digest of the payload region, which the reader
    side recomputes and checks on load.
    """
    qmax = (1 << (bit_width - 1)) - 1
    payload_parts = []
    descs = []
    offset = 0
    for name, weights, step, acts in records:
        if weights.dtype != np.int8 or weights.ndim != 2:
            raise ExportError(f"layer {name!r}: weights must be a 2-D int8 matrix")
        if int(np.abs(weights.astype(np.int16)).max()) > qmax:
            raise ExportError(f"layer {name!r}: weight outside the INT{bit_width} range")
        rows, cols = weights.shape
        if acts.shape != (cols,) or acts.dtype != np.float32:
            raise ExportError(f"layer {name!r}: activation vector must be float32 of length {cols}")
        wbytes = weights.astype("<i1").tobytes(order="C")
        abytes = acts.astype("<f4").tobytes(order="C")
        descs.append(
            {
                "name": name,
                "rows": rows,
                "cols": cols,
                "bit_width": bit_width,
                "step": repr(float(step)),
                "weight_offset": offset,
                "activation_offset": offset + len(wbytes),
            }
        )
        payload_parts.append(wbytes)
        payload_parts.append(abytes)
        offset += len(wbytes) + len(abytes)
    payload = b"".join(payload_parts)
    digest = hashlib.sha256(payload).hexdigest()
    header = json.dumps({"content_hash": digest, "layers": descs}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, len(header)))
        f.write(header)
        f.write(payload)
    return digest


def export(
    model: nn.Module,
    calibration: torch.Tensor,
    bit_width: int,
    out_path: str | Path,
    *,
    model_id: str = "model",
    calibration_id: str = "calibration",
    layer_filter: str | None = None,
    batch_size: int = 8,
    manifest_path: str | Path | None = None,
) -> ExportManifest:
    targets = _select_linears(model, layer_filter)
    activations = collect_activations(model, calibration, targets, batch_size=batch_size)

    records = []
    for name, module in targets:
        w = module.weight.detach().to(torch.float64).cpu().numpy()
        q, step = quantize_symmetric(w, bit_width)
        records.append((name, q, step, activations[name]))
    digest = write_emqb(out_path, records, bit_width)

    manifest = ExportManifest(
        model_id=model_id,
        bit_width=bit_width,
        calibration_id=calibration_id,
        calibration_samples=int(calibration.shape[0]),
        layers=[name for name, _ in targets],
        content_hash=digest,
    )
    if manifest_path is not None:
        Path(manifest_path).write_text(
            json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return manifest
