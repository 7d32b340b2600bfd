"""Model and sample files.

A model on disk is a JSON manifest plus a float64 little-endian blob of
parameters.  The manifest declares layers with byte offsets into the blob
and carries the blob's sha256; the loader verifies the hash, bounds-checks
every slice, requires the declared sizes to account for the whole blob,
lowers convolutions, and fuses adjacent linear layers.

Samples are either CSV rows ``label,v0,v1,...`` (values divided by 255, the
usual pixel convention) or big-endian idx/ubyte image+label files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelError
from .model import (
    ActivationLayer,
    ConvLayer,
    LinearLayer,
    ModelSpec,
    compile_layers,
    reference_infer,  # noqa: F401  (re-exported: the numeric oracle lives with the model types)
)

log = logging.getLogger("proud.model_io")

MANIFEST_VERSION = 1
WEIGHT_WARN_LIMIT = 8.0


@dataclass
class Sample:
    values: np.ndarray
    label: int | None = None


# -- model writing -----------------------------------------------------


def _emit_layers(layers) -> tuple[list[dict], bytes]:
    chunks: list[bytes] = []
    entries: list[dict] = []
    offset = 0

    def put(arr: np.ndarray) -> int:
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        chunks.append(raw)
        at = offset
        offset += len(raw)
        return at

    for layer in layers:
        if isinstance(layer, LinearLayer):
            entries.append(
                {
                    "type": "linear",
                    "rows": layer.rows,
                    "cols": layer.cols,
                    "weights_offset": put(layer.weights),
                    "bias_offset": put(layer.bias),
                }
            )
        elif isinstance(layer, ActivationLayer):
            entries.append({"type": "activation", "kind": layer.kind})
        elif isinstance(layer, ConvLayer):
            oc, ic, kh, kw = layer.kernels.shape
            entries.append(
                {
                    "type": "conv",
                    "out_channels": oc,
                    "in_channels": ic,
                    "kernel_h": kh,
                    "kernel_w": kw,
                    "stride": layer.stride,
                    "padding": layer.padding,
                    "weights_offset": put(layer.kernels),
                    "bias_offset": put(layer.bias),
                }
            )
        else:
            raise ModelError(f"cannot serialize layer type {type(layer).__name__}")
    return entries, b"".join(chunks)


def save_layers(layers, input_dim: int, path, input_shape=None):
    """Write any layer list (conv allowed) as manifest + blob."""
    path = Path(path)
    entries, blob = _emit_layers(layers)
    blob_name = path.stem + ".bin"
    manifest = {
        "version": MANIFEST_VERSION,
        "input_dim": int(input_dim),
        "blob": blob_name,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "layers": entries,
    }
    if input_shape is not None:
        manifest["input_shape"] = [int(x) for x in input_shape]
    (path.parent / blob_name).write_bytes(blob)
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def save_model(model: ModelSpec, path):
    """Write a compiled model (linear/activation chain)."""
    save_layers(model.layers, model.input_dim, path)


# -- model reading -----------------------------------------------------


def _slice_floats(blob: bytes, offset: int, count: int, what: str) -> np.ndarray:
    end = offset + 8 * count
    if offset < 0 or end > len(blob) or offset % 8:
        raise ModelError(f"{what}: slice [{offset}, {end}) outside blob of {len(blob)} bytes")
    return np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(np.float64)


def load_model(path) -> ModelSpec:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ModelError(f"cannot read manifest {path}: {e}") from e
    if manifest.get("version") != MANIFEST_VERSION:
        raise ModelError(f"unsupported manifest version {manifest.get('version')!r}")
    try:
        blob = (path.parent / manifest["blob"]).read_bytes()
        declared = manifest["blob_sha256"]
        input_dim = int(manifest["input_dim"])
        entries = manifest["layers"]
    except (OSError, KeyError, TypeError, ValueError) as e:
        raise ModelError(f"malformed manifest {path}: {e}") from e
    actual = hashlib.sha256(blob).hexdigest()
    if actual != declared:
        raise ModelError(f"blob hash mismatch: manifest says {declared[:12]}.., blob is {actual[:12]}..")

    layers = []
    used = 0
    for i, e in enumerate(entries):
        kind = e.get("type")
        try:
            if kind == "linear":
                r, c = int(e["rows"]), int(e["cols"])
                w = _slice_floats(blob, int(e["weights_offset"]), r * c, f"layer {i} weights")
                b = _slice_floats(blob, int(e["bias_offset"]), r, f"layer {i} bias")
                layers.append(LinearLayer(w.reshape(r, c), b))
                used += 8 * (r * c + r)
            elif kind == "activation":
                layers.append(ActivationLayer(e["kind"]))
            elif kind == "conv":
                oc, ic = int(e["out_channels"]), int(e["in_channels"])
                kh, kw = int(e["kernel_h"]), int(e["kernel_w"])
                k = _slice_floats(blob, int(e["weights_offset"]), oc * ic * kh * kw, f"layer {i} kernels")
                b = _slice_floats(blob, int(e["bias_offset"]), oc, f"layer {i} bias")
                layers.append(
                    ConvLayer(k.reshape(oc, ic, kh, kw), b, int(e["stride"]), int(e["padding"]))
                )
                used += 8 * (oc * ic * kh * kw + oc)
            else:
                raise ModelError(f"layer {i}: unknown type {kind!r}")
        except (KeyError, TypeError, ValueError) as err:
            raise ModelError(f"layer {i}: malformed entry: {err}") from err
    if used != len(blob):
        raise ModelError(f"blob has {len(blob)} bytes but layers declare {used}")

    for i, layer in enumerate(layers):
        arr = getattr(layer, "weights", getattr(layer, "kernels", None))
        if arr is not None and np.abs(arr).max(initial=0.0) > WEIGHT_WARN_LIMIT:
            log.warning("layer %d has |weights| up to %.3g; expect degraded encrypted accuracy", i, np.abs(arr).max())

    return compile_layers(layers, input_dim, manifest.get("input_shape"))


# -- samples -----------------------------------------------------------


def _load_csv_samples(path: Path, limit=None) -> list[Sample]:
    out: list[Sample] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                label = int(float(parts[0]))
                values = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError:
                if lineno == 0:  # tolerate a header line
                    continue
                raise ModelError(f"bad sample row in {path}: {line[:60]}")
            out.append(Sample(values / 255.0, label))
            if limit is not None and len(out) >= limit:
                break
    return out  # an empty file is just an empty dataset


def _load_idx_samples(path: Path, labels_path, limit=None) -> list[Sample]:
    raw = path.read_bytes()
    if len(raw) < 16:
        raise ModelError(f"{path} is not an idx image file")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != 2051:
        raise ModelError(f"{path}: bad image magic {magic}")
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise ModelError(f"{path}: truncated image data")
    if limit is not None:
        count = min(count, limit)
    images = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = images.reshape(count, rows * cols).astype(np.float64) / 255.0

    labels = [None] * count
    if labels_path is not None:
        lraw = Path(labels_path).read_bytes()
        lmagic, lcount = struct.unpack(">II", lraw[:8])
        if lmagic != 2049:
            raise ModelError(f"{labels_path}: bad label magic {lmagic}")
        if lcount < count:
            raise ModelError("fewer labels than images")
        labels = list(lraw[8 : 8 + count])
    return [Sample(images[i], labels[i]) for i in range(count)]


def load_samples(path, fmt=None, labels_path=None, limit=None) -> list[Sample]:
    """CSV or idx/ubyte samples, values scaled into [0, 1].

    fmt is "csv", "raw-idx", or None to pick by file extension.
    """
    path = Path(path)
    if not path.exists():
        raise ModelError(f"sample file {path} does not exist")
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "raw-idx"
    if fmt == "csv":
        return _load_csv_samples(path, limit)
    if fmt == "raw-idx":
        return _load_idx_samples(path, labels_path, limit)
    raise ModelError(f"unknown sample format {fmt!r}")


# -- generators (random-weight fixtures and demos) ---------------------


def make_mlp(dims, activation: str = "relu", seed: int = 0, spread: float = 0.3) -> ModelSpec:
    """Random MLP with the given layer widths, activations between."""
    if len(dims) < 2:
        raise ModelError("need at least input and output widths")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(dims) - 1):
        w = rng.uniform(-spread, spread, (dims[i + 1], dims[i]))
        b = rng.uniform(-spread, spread, dims[i + 1])
        layers.append(LinearLayer(w, b))
        if i < len(dims) - 2:
            layers.append(ActivationLayer(activation))
    return ModelSpec(layers, dims[0])


def avg_pool_conv(channels: int, k: int = 2) -> ConvLayer:
    """Average pooling expressed as a stride-k conv (a linear layer)."""
    kern = np.zeros((channels, channels, k, k))
    for c in range(channels):
        kern[c, c] = 1.0 / (k * k)
    return ConvLayer(kern, np.zeros(channels), stride=k, padding=0)


def make_convnet(seed: int = 0):
    """Small conv-pool-conv-fc stack on 12x12 inputs (compile fixture).

    Returns (raw_layers, input_dim, input_shape); pooling layers are linear,
    so compiling fuses pool into the following conv's lowered matrix.
    """
    rng = np.random.default_rng(seed)
    layers = [
        ConvLayer(rng.uniform(-0.5, 0.5, (4, 1, 3, 3)), rng.uniform(-0.2, 0.2, 4), 1, 1),
        ActivationLayer("relu"),
        avg_pool_conv(4),
        ConvLayer(rng.uniform(-0.5, 0.5, (8, 4, 3, 3)), rng.uniform(-0.2, 0.2, 8), 1, 0),
        ActivationLayer("relu"),
        LinearLayer(rng.uniform(-0.3, 0.3, (32, 128)), rng.uniform(-0.2, 0.2, 32)),
        ActivationLayer("relu"),
        LinearLayer(rng.uniform(-0.3, 0.3, (10, 32)), rng.uniform(-0.2, 0.2, 10)),
    ]
    return layers, 144, (1, 12, 12)


def make_lenet(seed: int = 0):
    """Random-weight LeNet-5 shape on 28x28 single-channel inputs.

    conv 6@5x5 (pad 2) / relu / pool 2 / conv 16@5x5 / relu / pool 2 /
    fc 120 / relu / fc 84 / relu / fc 10.  Returns (raw_layers, input_dim,
    input_shape).
    """
    rng = np.random.default_rng(seed)

    def u(shape, s):
        return rng.uniform(-s, s, shape)

    layers = [
        ConvLayer(u((6, 1, 5, 5), 0.3), u(6, 0.1), 1, 2),
        ActivationLayer("relu"),
        avg_pool_conv(6),
        ConvLayer(u((16, 6, 5, 5), 0.3), u(16, 0.1), 1, 0),
        ActivationLayer("relu"),
        avg_pool_conv(16),
        LinearLayer(u((120, 16 * 5 * 5), 0.2), u(120, 0.1)),
        ActivationLayer("relu"),
        LinearLayer(u((84, 120), 0.2), u(84, 0.1)),
        ActivationLayer("relu"),
        LinearLayer(u((10, 84), 0.2), u(10, 0.1)),
    ]
    return layers, 28 * 28, (1, 28, 28)
