#!/usr/bin/env python3
"""Regenerate the committed demo artifacts in models/.

Run from the repository root:  python3 scripts/gen_models.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from proud.model_io import (
    make_convnet,
    make_lenet,
    make_mlp,
    reference_infer,
    save_layers,
    save_model,
)

OUT = Path(__file__).resolve().parents[1] / "models"


def main():
    OUT.mkdir(exist_ok=True)

    mlp = make_mlp([64, 16, 10], activation="relu", seed=2024)
    save_model(mlp, OUT / "mlp_64x16x10.json")

    layers, input_dim, input_shape = make_convnet(seed=2024)
    save_layers(layers, input_dim, OUT / "convnet_12x12.json", input_shape=input_shape)

    layers, input_dim, input_shape = make_lenet(seed=2024)
    save_layers(layers, input_dim, OUT / "lenet5_28x28.json", input_shape=input_shape)

    # pixel-style samples for the MLP: values are 0..255 ints, loaders divide
    # by 255; labels are the model's own argmax on the normalized values
    rng = np.random.default_rng(7)
    rows = []
    for _ in range(20):
        pixels = rng.integers(0, 256, 64)
        logits = reference_infer(mlp, pixels / 255.0)
        rows.append(",".join([str(int(np.argmax(logits)))] + [str(int(p)) for p in pixels]))
    (OUT / "samples_64.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote artifacts into {OUT}")


if __name__ == "__main__":
    main()
