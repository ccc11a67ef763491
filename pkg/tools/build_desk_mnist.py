"""Repackage the digits shipped in the npm ``mnist`` package (v1.1.0) as IDX files.

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python tools/build_desk_mnist.py package/src/digits data/desk-mnist

The package stores about 1000 MNIST digits per class as JSON floats rounded to
three decimals; rounding ``value * 255`` recovers the original bytes exactly.
The last 200 digits of every class form the test split, the rest the training
split. Both splits are shuffled with a fixed Philox seed so classes interleave
like the canonical files.
"""

import json
import sys
from pathlib import Path

import numpy as np

from vaemhn.data import MNIST_FILES, write_idx
from vaemhn.numerics import make_rng

TEST_PER_CLASS = 200
SHUFFLE_SEED = 20240601


def main(digits_dir, out_dir):
    digits_dir, out_dir = Path(digits_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = {"train": ([], []), "test": ([], [])}
    for d in range(10):
        values = np.asarray(json.loads((digits_dir / f"{d}.json").read_text())["data"])
        scaled = values.reshape(-1, 28, 28) * 255.0
        pixels = np.round(scaled)
        assert np.abs(scaled - pixels).max() < 0.5
        pixels = pixels.astype(np.uint8)
        for name, part in (("train", pixels[:-TEST_PER_CLASS]), ("test", pixels[-TEST_PER_CLASS:])):
            splits[name][0].append(part)
            splits[name][1].append(np.full(len(part), d, dtype=np.uint8))
    rng = make_rng(SHUFFLE_SEED)
    for name, (imgs, labs) in splits.items():
        imgs, labs = np.concatenate(imgs), np.concatenate(labs)
        order = rng.permutation(len(labs))
        prefix = "train" if name == "train" else "test"
        write_idx(out_dir / f"{MNIST_FILES[prefix + '_images']}.gz", imgs[order])
        write_idx(out_dir / f"{MNIST_FILES[prefix + '_labels']}.gz", labs[order])
        print(name, len(labs), np.bincount(labs).tolist())


if __name__ == "__main__":
    main(*sys.argv[1:3])
