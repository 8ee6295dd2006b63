"""Convert the 5000-digit MNIST sample shipped inside the mlxtend wheel to IDX files.

Usage: python3 scripts/mnist5k_to_idx.py path/to/mlxtend-*.whl data/mnist5k
"""

import gzip
import struct
import sys
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main(wheel: str, out_dir: str) -> None:
    with zipfile.ZipFile(wheel) as zf:
        text = gzip.decompress(zf.read(MEMBER)).decode()
    rows = [list(map(int, line.split(","))) for line in text.splitlines() if line.strip()]
    # 784 pixel columns followed by the label
    pixels = bytes(v for r in rows for v in r[:784])
    labels = bytes(r[784] for r in rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "images.idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, len(rows), 28, 28) + pixels)
    (out / "labels.idx1-ubyte").write_bytes(struct.pack(">II", 0x801, len(rows)) + labels)
    print(f"wrote {len(rows)} digits to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
