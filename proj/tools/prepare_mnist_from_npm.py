#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the npm `mnist` package into IDX files.

The package bundles 10000 MNIST digits as flat arrays of [0,1] floats grouped by
label. This script interleaves them with a fixed shuffle and writes a train/test
split in the standard big-endian IDX container so `tslab mnist --data-dir` can
read them like the canonical distribution.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/prepare_mnist_from_npm.py package/src/digits data/mnist
"""
import argparse
import json
import pathlib
import random
import struct

PIXELS = 28 * 28


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        flat = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        for k in range(len(flat) // PIXELS):
            px = flat[k * PIXELS:(k + 1) * PIXELS]
            samples.append(([min(255, max(0, round(v * 255))) for v in px], digit))

    random.Random(args.seed).shuffle(samples)
    test, train = samples[:args.test], samples[args.test:]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("t10k", test)):
        write_images(args.out_dir / f"{name}-images-idx3-ubyte", [s[0] for s in part])
        write_labels(args.out_dir / f"{name}-labels-idx1-ubyte", [s[1] for s in part])
    print(f"wrote {len(train)} train / {len(test)} test samples to {args.out_dir}")


if __name__ == "__main__":
    main()
