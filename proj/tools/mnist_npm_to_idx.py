#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into gzipped IDX files.

The package ships 10,000 MNIST digits as per-class JSON arrays of intensities
rounded to three decimals. Rounding v * 255 recovers the original bytes.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_npm_to_idx.py package/src/digits data/
"""
import argparse
import gzip
import json
import pathlib
import random
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--prefix", default="mnist10k")
    args = ap.parse_args()

    records = []
    for digit in range(10):
        flat = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            pixels = bytes(round(v * 255) for v in flat[i * 784:(i + 1) * 784])
            records.append((digit, pixels))

    # Mix the classes so the files do not read as ten contiguous blocks.
    random.Random(20201).shuffle(records)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    n = len(records)
    images = args.out_dir / f"{args.prefix}-images-idx3-ubyte.gz"
    labels = args.out_dir / f"{args.prefix}-labels-idx1-ubyte.gz"
    with gzip.GzipFile(images, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        for _, pixels in records:
            f.write(pixels)
    with gzip.GzipFile(labels, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(bytes(d for d, _ in records))
    print(f"wrote {n} samples to {images} and {labels}")


if __name__ == "__main__":
    main()
