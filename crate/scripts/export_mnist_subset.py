"""Convert the 5,000-image MNIST sample shipped with mlxtend into gzipped IDX files.

Usage: python3 scripts/export_mnist_subset.py <mlxtend wheel> <output dir>
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np


def main(wheel, out_dir):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",").astype(np.uint8)
    images, labels = table[:, :-1], table[:, -1]
    n = images.shape[0]
    with gzip.GzipFile(f"{out_dir}/images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(f"{out_dir}/labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
