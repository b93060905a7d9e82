#!/usr/bin/env python3
"""Convert the 10k-digit MNIST sample bundled in the `mnist` npm package to IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist

Writes gzip-compressed `train-images-idx3-ubyte.gz` and `train-labels-idx1-ubyte.gz`
(big-endian headers, raw unsigned bytes). Pixel values in the package are byte/255 rounded
to three decimals, so rounding value*255 recovers the original bytes exactly.
"""
import gzip
import json
import struct
import sys
from pathlib import Path


def main() -> None:
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    pixels, labels = bytearray(), bytearray()
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        pixels.extend(min(255, max(0, round(v * 255))) for v in data)
        labels.extend([digit] * (len(data) // 784))
    n = len(labels)
    with gzip.open(dst / "train-images-idx3-ubyte.gz", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels)
    with gzip.open(dst / "train-labels-idx1-ubyte.gz", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels)
    print(f"wrote {n} samples to {dst}")


if __name__ == "__main__":
    main()
