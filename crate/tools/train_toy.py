"""Regenerates the toy CNN fixture under fixtures/toy/.

Synthetic 10-class 16x16 glyph images, a conv-relu-pool block followed by a
dense-relu-dense block. Writes the FP32 weight blob + manifest, the model
description and the evaluation set in the formats read by emfisim.

    python3 tools/train_toy.py [out_dir]
"""
import json
import os
import struct
import sys

import numpy as np
import torch
from torch import nn

SIDE = 16
CLASSES = 10
EVAL_SEED = 21
EVAL_COUNT = 1024


def glyph_templates(rng):
    templates = np.zeros((CLASSES, SIDE, SIDE), dtype=np.float32)
    for c in range(CLASSES):
        for _ in range(3):
            x0, y0, x1, y1 = rng.integers(3, SIDE - 3, size=4)
            steps = max(abs(x1 - x0), abs(y1 - y0)) + 1
            for t in np.linspace(0.0, 1.0, steps * 2):
                x = int(round(x0 + t * (x1 - x0)))
                y = int(round(y0 + t * (y1 - y0)))
                templates[c, y, x] = 1.0
    return templates


def sample(rng, templates, n):
    labels = rng.integers(0, CLASSES, size=n)
    images = np.zeros((n, SIDE, SIDE), dtype=np.float32)
    for i, c in enumerate(labels):
        dx, dy = rng.integers(-2, 3, size=2)
        img = np.roll(np.roll(templates[c], dy, axis=0), dx, axis=1)
        img = img * rng.uniform(0.7, 1.3) + rng.normal(0.0, 0.35, size=img.shape)
        images[i] = img
    return images, labels


class Toy(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, 3, padding=1)
        self.fc1 = nn.Linear(8 * 8 * 8, 32)
        self.fc2 = nn.Linear(32, CLASSES)

    def forward(self, x):
        x = torch.max_pool2d(torch.relu(self.conv1(x)), 2)
        x = torch.relu(self.fc1(x.flatten(1)))
        return self.fc2(x)


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "fixtures", "toy")
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(1234)
    templates = glyph_templates(rng)
    train_x, train_y = sample(rng, templates, 20000)
    pool_x, pool_y = sample(np.random.default_rng(99), templates, 16384)
    mean, std = float(train_x.mean()), float(train_x.std())
    norm = lambda a: (a - mean) / std

    idx = np.sort(np.random.default_rng(EVAL_SEED).choice(len(pool_x), EVAL_COUNT, replace=False))
    eval_x, eval_y = norm(pool_x[idx]).astype(np.float32), pool_y[idx]

    torch.manual_seed(0)
    model = Toy()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3, weight_decay=1e-4)
    tx = torch.tensor(norm(train_x)).unsqueeze(1)
    ty = torch.tensor(train_y)
    for epoch in range(8):
        perm = torch.randperm(len(tx))
        for b in range(0, len(tx), 128):
            sel = perm[b:b + 128]
            loss = nn.functional.cross_entropy(model(tx[sel]), ty[sel])
            opt.zero_grad()
            loss.backward()
            opt.step()
        with torch.no_grad():
            acc = (model(torch.tensor(eval_x).unsqueeze(1)).argmax(1).numpy() == eval_y).mean()
        print(f"epoch {epoch} loss {loss.item():.4f} eval top1 {acc:.4f}")

    blob = bytearray()
    tensors = []
    for name, param in model.state_dict().items():
        arr = param.detach().numpy().astype("<f4")
        tensors.append({
            "name": name,
            "shape": list(arr.shape),
            "format": "fp32",
            "byte_offset": len(blob),
            "byte_length": arr.nbytes,
            "quant": None,
        })
        blob += arr.tobytes()
    with open(os.path.join(out, "weights.bin"), "wb") as f:
        f.write(blob)
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump({"tensors": tensors}, f, indent=2)

    layers = [
        {"kind": "conv2d", "weight": "conv1.weight", "bias": "conv1.bias", "stride": 1, "padding": 1},
        {"kind": "relu"},
        {"kind": "maxpool2d", "size": 2, "stride": 2},
        {"kind": "flatten"},
        {"kind": "dense", "weight": "fc1.weight", "bias": "fc1.bias"},
        {"kind": "relu"},
        {"kind": "dense", "weight": "fc2.weight", "bias": "fc2.bias"},
    ]
    with open(os.path.join(out, "model.json"), "w") as f:
        json.dump({"input_shape": [1, SIDE, SIDE], "num_classes": CLASSES, "layers": layers}, f, indent=2)

    with open(os.path.join(out, "eval.bin"), "wb") as f:
        f.write(eval_x.astype("<f4").tobytes())
    with open(os.path.join(out, "eval.json"), "w") as f:
        json.dump({"input_shape": [1, SIDE, SIDE], "data_file": "eval.bin", "seed": EVAL_SEED,
                   "labels": [int(v) for v in eval_y]}, f)


if __name__ == "__main__":
    main()
