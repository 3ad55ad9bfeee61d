"""Trained-model bundle and the RVLM file format.

A Model couples a Network with the normalization applied around it:
per-coefficient feature standardization and per-parameter target z-scoring,
both computed on the training split and stored so that predictions come
back in physical units (seconds and dB).

RVLM layout: magic "RVLM", u16 version, u32 header length, JSON header
(architecture, input shape, feature config, standardization statistics,
training provenance), u32 tensor count, then per tensor: u16 name length,
name bytes, u8 ndim, u32 dims..., float32 little-endian data.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelFormatError, ShapeError
from .network import ModelSpec, Network, build_network

RVLM_MAGIC = b"RVLM"
RVLM_VERSION = 1

STANDARDIZATION_NOTE = (
    "features standardized per coefficient and targets z-scored per parameter "
    "using training-split statistics"
)


@dataclass
class Model:
    network: Network
    feature_mean: np.ndarray  # (n_coeffs,)
    feature_std: np.ndarray
    target_mean: np.ndarray   # (4,)
    target_std: np.ndarray
    feature_config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def spec(self) -> ModelSpec:
        return self.network.spec

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return self.network.input_shape

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return ((features - self.feature_mean) / self.feature_std).astype(
            self.network.dtype)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Estimates in physical units for (frames, coeffs) or a batch of them."""
        feats = np.asarray(features)
        single = feats.ndim == 2
        if single:
            feats = feats[None]
        if feats.shape[1:] != self.input_shape[:2]:
            raise ShapeError(
                f"feature shape {feats.shape[1:]} != model input "
                f"{self.input_shape[:2]}")
        x = self.standardize(feats)[..., None]
        z = self.network.forward(x, train=False)
        out = z.astype(np.float64) * self.target_std + self.target_mean
        return out[0] if single else out


def _write_tensor(fh, name: str, array: np.ndarray):
    data = np.ascontiguousarray(array, dtype="<f4")
    encoded = name.encode()
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", data.ndim))
    fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
    fh.write(data.tobytes())


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", fh.read(2))
    name = fh.read(name_len).decode()
    (ndim,) = struct.unpack("<B", fh.read(1))
    shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
    return name, data.copy()


def save_model(path, model: Model):
    net = model.network
    header = {
        "spec": net.spec.to_dict(),
        "input_shape": list(net.input_shape),
        "parameter_count": net.parameter_count(),
        "feature_config": model.feature_config,
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
        "target_mean": model.target_mean.tolist(),
        "target_std": model.target_std.tolist(),
        "standardization_note": STANDARDIZATION_NOTE,
        "provenance": model.provenance,
    }
    blob = json.dumps(header, ensure_ascii=False).encode()
    tensors = dict(model.network.named_params())
    tensors.update(model.network.named_state())
    with open(path, "wb") as fh:
        fh.write(RVLM_MAGIC)
        fh.write(struct.pack("<H", RVLM_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            _write_tensor(fh, name, tensors[name])


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        if fh.read(4) != RVLM_MAGIC:
            raise ModelFormatError(f"{path}: not an RVLM model file")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != RVLM_VERSION:
            raise ModelFormatError(f"{path}: unsupported version {version}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode())
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors = dict(_read_tensor(fh) for _ in range(n_tensors))

    spec = ModelSpec.from_dict(header["spec"])
    net = build_network(spec, tuple(header["input_shape"]), seed=0,
                        dtype=np.float32)
    try:
        net.restore(tensors)
    except KeyError as exc:
        raise ModelFormatError(f"{path}: missing tensor {exc}") from exc
    return Model(
        network=net,
        feature_mean=np.asarray(header["feature_mean"], dtype=np.float64),
        feature_std=np.asarray(header["feature_std"], dtype=np.float64),
        target_mean=np.asarray(header["target_mean"], dtype=np.float64),
        target_std=np.asarray(header["target_std"], dtype=np.float64),
        feature_config=header.get("feature_config", {}),
        provenance=header.get("provenance", {}),
    )
