#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the npm `mnist` package (MIT) into
IDX image/label files.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_json_to_idx.py package/src/digits data/

The JSON stores intensities as value/255 rounded to three decimals, so
round(v * 255) recovers the original bytes.
"""
import json
import struct
import sys
from pathlib import Path


def main(src: Path, dst: Path) -> None:
    images = bytearray()
    labels = bytearray()
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for v in flat:
            images.append(max(0, min(255, round(v * 255))))
        labels.extend([digit] * (len(flat) // 784))
    n = len(labels)
    dst.mkdir(parents=True, exist_ok=True)
    (dst / "mnist10k-images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 0x803, n, 28, 28) + bytes(images)
    )
    (dst / "mnist10k-labels-idx1-ubyte").write_bytes(
        struct.pack(">II", 0x801, n) + bytes(labels)
    )
    print(f"wrote {n} images to {dst}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
