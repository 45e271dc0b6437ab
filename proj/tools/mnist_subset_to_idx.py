#!/usr/bin/env python3
"""Write the 5k MNIST sample shipped inside the mlxtend wheel as gzipped IDX files.

Usage: mnist_subset_to_idx.py <mnist_5k.csv.gz> <out_dir> [--test 1000]

The CSV is sorted by label, so rows are split by stride: every
(N / test)-th row goes to t10k-images-idx3-ubyte.gz, the remainder to
train-images-idx3-ubyte.gz. Labels are written alongside (0x00000801).
"""
import argparse
import gzip
import struct
from pathlib import Path


def write_images(path, images, rows, cols):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("out")
    ap.add_argument("--test", type=int, default=1000)
    args = ap.parse_args()

    images, labels = [], []
    with gzip.open(args.csv, "rt") as f:
        for line in f:
            vals = [int(float(v)) for v in line.strip().split(",") if v]
            if len(vals) != 785:
                continue
            images.append(vals[:784])
            labels.append(vals[784])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stride = len(images) // args.test
    test_idx = [i for i in range(len(images)) if i % stride == stride - 1][: args.test]
    test_set = set(test_idx)
    train_idx = [i for i in range(len(images)) if i not in test_set]
    write_images(out / "train-images-idx3-ubyte.gz", [images[i] for i in train_idx], 28, 28)
    write_labels(out / "train-labels-idx1-ubyte.gz", [labels[i] for i in train_idx])
    write_images(out / "t10k-images-idx3-ubyte.gz", [images[i] for i in test_idx], 28, 28)
    write_labels(out / "t10k-labels-idx1-ubyte.gz", [labels[i] for i in test_idx])
    print(f"train={len(train_idx)} test={len(test_idx)}")


if __name__ == "__main__":
    main()
