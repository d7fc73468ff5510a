"""Independent byte-level EMQB reader and toy models for exporter tests."""

import hashlib
import json
import struct

import numpy as np
from torch import nn


def read_emqb(path):
    """Minimal reader used to verify exported files against the documented layout."""
    raw = open(path, "rb").read()
    assert raw[:4] == b"EMQB", "bad magic"
    version, hlen = struct.unpack("<HI", raw[4:10])
    assert version == 1
    header = json.loads(raw[10 : 10 + hlen].decode("utf-8"))
    payload = raw[10 + hlen :]
    assert hashlib.sha256(payload).hexdigest() == header["content_hash"], "hash mismatch"
    layers = {}
    for desc in header["layers"]:
        rows, cols = desc["rows"], desc["cols"]
        w = np.frombuffer(payload, dtype="<i1", count=rows * cols,
                          offset=desc["weight_offset"]).reshape(rows, cols)
        a = np.frombuffer(payload, dtype="<f4", count=cols, offset=desc["activation_offset"])
        layers[desc["name"]] = {
            "weights": w,
            "activations": a,
            "step": float(desc["step"]),
            "bit_width": desc["bit_width"],
        }
    return header, layers


class TinyMlp(nn.Module):
    def __init__(self):
        super().__init__()
        self.fc1 = nn.Linear(16, 32)
        self.act = nn.ReLU()
        self.fc2 = nn.Linear(32, 8)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))
