#!/usr/bin/env python3
"""Build the MNIST test fixture used by the acceptance suite.

Reads the digit dumps shipped in the npm `mnist` package (10k MNIST digits as
float pixels in [0, 1]), keeps the last 100 digits of each class as a
1,000-sample test set, trains a 784-64-10 MLP with 4-bit weight / int8
activation fake quantization on the rest, and writes:

  tests/data/mnist-test-1k-images.idx   IDX3 uint8 images
  tests/data/mnist-test-1k-labels.idx   IDX1 uint8 labels
  tests/data/mnist-mlp-784x64x10.json   model in the simulator's JSON format

The script's own integer evaluation uses the simulator's requantization rule
(round half away from zero, clamp, relu at the output zero point).

    python3 tools/fixtures/make_mnist_fixture.py --digits /path/to/mnist/src/digits
"""

import argparse
import json
import pathlib
import struct

import numpy as np
import torch
from torch import nn

PIXELS = 28 * 28
TEST_PER_CLASS = 100
IN_ZP = -128
HID_ZP = -128


def load_digits(digits_dir):
    train_x, train_y, test_x, test_y = [], [], [], []
    for d in range(10):
        raw = json.loads((digits_dir / f"{d}.json").read_text())["data"]
        imgs = np.asarray(raw, dtype=np.float64).reshape(-1, PIXELS)
        imgs = np.clip(np.rint(imgs * 255.0), 0, 255).astype(np.uint8)
        train_x.append(imgs[:-TEST_PER_CLASS])
        train_y.append(np.full(len(imgs) - TEST_PER_CLASS, d, np.uint8))
        test_x.append(imgs[-TEST_PER_CLASS:])
        test_y.append(np.full(TEST_PER_CLASS, d, np.uint8))
    return (np.concatenate(train_x), np.concatenate(train_y),
            np.concatenate(test_x), np.concatenate(test_y))


def write_idx(path, array):
    if array.ndim == 3:
        header = struct.pack(">IIII", 0x00000803, *array.shape)
    else:
        header = struct.pack(">II", 0x00000801, array.shape[0])
    path.write_bytes(header + array.astype(np.uint8).tobytes())


def round_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


class FakeQuant4(torch.autograd.Function):
    """Symmetric per-output-channel 4-bit weights, straight-through gradient."""

    @staticmethod
    def forward(ctx, w):
        scale = w.abs().amax(dim=1, keepdim=True).clamp_min(1e-8) / 7.0
        return torch.clamp(torch.round(w / scale), -8, 7) * scale

    @staticmethod
    def backward(ctx, g):
        return g


class FakeQuantAct(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, scale, zp):
        q = torch.clamp(torch.round(x / scale) + zp, -128, 127)
        return (q - zp) * scale

    @staticmethod
    def backward(ctx, g):
        return g, None, None


class Mlp(nn.Module):
    def __init__(self, hidden):
        super().__init__()
        self.fc1 = nn.Linear(PIXELS, hidden)
        self.fc2 = nn.Linear(hidden, 10)
        self.hidden_max = 1.0

    def forward(self, x, quant):
        w1 = FakeQuant4.apply(self.fc1.weight) if quant else self.fc1.weight
        h = torch.relu(x @ w1.T + self.fc1.bias)
        if quant:
            h = FakeQuantAct.apply(h, self.hidden_max / 255.0, HID_ZP)
        w2 = FakeQuant4.apply(self.fc2.weight) if quant else self.fc2.weight
        return h @ w2.T + self.fc2.bias


def train(model, x, y, epochs, quant_from, seed):
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    loss_fn = nn.CrossEntropyLoss()
    for epoch in range(epochs):
        quant = epoch >= quant_from
        if quant:
            with torch.no_grad():
                h = torch.relu(x @ model.fc1.weight.T + model.fc1.bias)
                model.hidden_max = float(torch.quantile(h.flatten()[::7], 0.9995))
        perm = torch.randperm(len(x), generator=gen)
        for i in range(0, len(x), 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            loss_fn(model(x[idx], quant), y[idx]).backward()
            opt.step()


def quantize_layer(weight, bias, in_scale, out_scale):
    w = weight.astype(np.float64)
    w_scale = np.maximum(np.abs(w).max(axis=1), 1e-8) / 7.0
    wq = np.clip(np.rint(w / w_scale[:, None]), -8, 7).astype(np.int64)
    bq = round_away(bias / (in_scale * w_scale)).astype(np.int64)
    requant = in_scale * w_scale / out_scale
    return wq, bq, requant


def int_layer(x, in_zp, wq, bq, requant, out_zp, relu):
    acc = (x.astype(np.int64) - in_zp) @ wq.T + bq
    q = np.clip(out_zp + round_away(acc * requant), -128, 127)
    if relu:
        q = np.maximum(q, out_zp)
    return q.astype(np.int64)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", type=pathlib.Path, required=True)
    ap.add_argument("--out-dir", type=pathlib.Path,
                    default=pathlib.Path(__file__).resolve().parents[2] / "tests" / "data")
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    train_x, train_y, test_x, test_y = load_digits(args.digits)
    xt = torch.tensor(train_x, dtype=torch.float32) / 255.0
    yt = torch.tensor(train_y, dtype=torch.long)

    model = Mlp(args.hidden)
    train(model, xt, yt, args.epochs, quant_from=args.epochs // 3, seed=args.seed)

    in_scale = 1.0 / 255.0
    hid_scale = model.hidden_max / 255.0
    w1 = model.fc1.weight.detach().numpy().astype(np.float64)
    b1 = model.fc1.bias.detach().numpy().astype(np.float64)
    w2 = model.fc2.weight.detach().numpy().astype(np.float64)
    b2 = model.fc2.bias.detach().numpy().astype(np.float64)

    # Logit scale chosen so the largest training logit fits int8 with headroom.
    with torch.no_grad():
        logits = model(xt, True).numpy()
    out_scale = float(np.abs(logits).max()) / 100.0

    wq1, bq1, rq1 = quantize_layer(w1, b1, in_scale, hid_scale)
    wq2, bq2, rq2 = quantize_layer(w2, b2, hid_scale, out_scale)

    xq = test_x.astype(np.int64) + IN_ZP
    h = int_layer(xq, IN_ZP, wq1, bq1, rq1, HID_ZP, True)
    out = int_layer(h, HID_ZP, wq2, bq2, rq2, 0, False)
    acc = float((out.argmax(axis=1) == test_y).mean())
    print(f"int8 test accuracy on {len(test_y)} samples: {acc:.4f}")

    layers = [
        dict(**{"in": PIXELS, "out": args.hidden}, weights=wq1.flatten().tolist(), bias=bq1.tolist(),
             input_scale=in_scale, input_zp=IN_ZP, requant_scales=rq1.tolist(), output_zp=HID_ZP,
             activation="relu", output_scale=hid_scale),
        dict(**{"in": args.hidden, "out": 10}, weights=wq2.flatten().tolist(), bias=bq2.tolist(),
             input_scale=hid_scale, input_zp=HID_ZP, requant_scales=rq2.tolist(), output_zp=0,
             activation="none", output_scale=out_scale),
    ]
    doc = {"name": f"mnist-mlp-784x{args.hidden}x10", "task": "classify", "layers": layers}

    args.out_dir.mkdir(parents=True, exist_ok=True)
    # Interleave classes with a fixed permutation so truncated loads stay balanced.
    order = np.random.default_rng(args.seed).permutation(len(test_y))
    write_idx(args.out_dir / "mnist-test-1k-images.idx", test_x[order].reshape(-1, 28, 28))
    write_idx(args.out_dir / "mnist-test-1k-labels.idx", test_y[order])
    (args.out_dir / f"mnist-mlp-784x{args.hidden}x10.json").write_text(json.dumps(doc) + "\n")


if __name__ == "__main__":
    main()
