#!/usr/bin/env python3
"""Build an offline MNIST subset in IDX format.

The npm package `mnist` bundles 10,000 MNIST digits as JSON (pixel/255 rounded
to three decimals, which maps back to the original bytes exactly). This script
unpacks it and writes a 9,000 / 1,000 train/test split as standard IDX files.

Usage: scripts/make_mnist_subset.py [OUT_DIR] [PACKAGE_DIR]
"""
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

out_dir = sys.argv[1] if len(sys.argv) > 1 else "data/mnist"
pkg_dir = sys.argv[2] if len(sys.argv) > 2 else None

if pkg_dir is None:
    tmp = tempfile.mkdtemp()
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True, capture_output=True)
    with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tf:
        tf.extractall(tmp)
    pkg_dir = os.path.join(tmp, "package")

items = []
for digit in range(10):
    with open(os.path.join(pkg_dir, "src", "digits", f"{digit}.json")) as f:
        flat = json.load(f)["data"]
    assert len(flat) % 784 == 0
    for i in range(0, len(flat), 784):
        pixels = bytes(int(round(v * 255)) for v in flat[i:i + 784])
        items.append((pixels, digit))

random.Random(20200101).shuffle(items)
splits = {"train": items[:9000], "t10k": items[9000:]}

os.makedirs(out_dir, exist_ok=True)
for name, rows in splits.items():
    with open(os.path.join(out_dir, f"{name}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(pixels)
    with open(os.path.join(out_dir, f"{name}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 2049, len(rows)))
        f.write(bytes(label for _, label in rows))
    print(f"{name}: {len(rows)} images -> {out_dir}")
