"""Write a shuffled MNIST subset as IDX files.

Input is the 5000-image MNIST CSV bundled with the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz: 784 pixel columns then the label).

    python3 scripts/make_mnist_subset.py path/to/mnist_5k.csv.gz data/mnist-subset --count 2000
"""
import argparse
import gzip
import pathlib
import struct

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("out_dir")
    ap.add_argument("--count", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()

    with gzip.open(args.csv, "rt") as f:
        table = np.loadtxt(f, delimiter=",", dtype=np.int64)
    pixels = table[:, :784].astype(np.uint8)
    labels = table[:, 784].astype(np.uint8)

    order = np.random.default_rng(args.seed).permutation(len(labels))[: args.count]
    pixels, labels = pixels[order], labels[order]

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(labels), 28, 28))
        f.write(pixels.tobytes())
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())
    print(len(labels), "images;", "per class:", np.bincount(labels, minlength=10).tolist())


if __name__ == "__main__":
    main()
