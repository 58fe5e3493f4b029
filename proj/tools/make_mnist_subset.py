#!/usr/bin/env python3
"""Convert a CSV MNIST subset (784 pixel columns, label last) to gzipped IDX files.

The committed data/mnist-5k files were produced from the 5,000-image subset
shipped with mlxtend (mlxtend/data/data/mnist_5k.csv.gz):

    python3 tools/make_mnist_subset.py mnist_5k.csv.gz data/mnist-5k
"""
import argparse
import csv
import gzip
import io
import pathlib
import struct


def read_rows(path):
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt") as f:
        for row in csv.reader(f):
            if row:
                yield [int(float(v)) for v in row]


def write_gz(path, payload):
    # mtime=0 keeps the output byte-stable across runs.
    with open(path, "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0, compresslevel=9) as gz:
            gz.write(payload)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--side", type=int, default=28)
    args = parser.parse_args()

    pixels = io.BytesIO()
    labels = bytearray()
    count = 0
    for row in read_rows(args.csv):
        if len(row) != args.side * args.side + 1:
            raise SystemExit(f"row {count + 1}: expected {args.side * args.side + 1} columns, got {len(row)}")
        values = row[:-1]
        if min(values) < 0 or max(values) > 255:
            raise SystemExit(f"row {count + 1}: pixel outside 0..255")
        pixels.write(bytes(values))
        labels.append(row[-1])
        count += 1

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_gz(args.out_dir / "images-idx3-ubyte.gz",
             struct.pack(">IIII", 0x803, count, args.side, args.side) + pixels.getvalue())
    write_gz(args.out_dir / "labels-idx1-ubyte.gz", struct.pack(">II", 0x801, count) + bytes(labels))
    print(f"wrote {count} images to {args.out_dir}")


if __name__ == "__main__":
    main()
