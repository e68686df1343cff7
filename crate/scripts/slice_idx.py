"""Copy the first N examples of an MNIST IDX image/label pair."""
import argparse
import struct
from pathlib import Path


def slice_file(src: Path, dst: Path, n: int) -> None:
    raw = src.read_bytes()
    magic, count = struct.unpack(">II", raw[:8])
    ndim = magic & 0xFF
    dims = struct.unpack(">" + "I" * ndim, raw[4 : 4 + 4 * ndim])
    if n > count:
        raise SystemExit(f"{src}: asked for {n} of {count}")
    item = 1
    for d in dims[1:]:
        item *= d
    header = struct.pack(">I", magic) + struct.pack(">" + "I" * ndim, n, *dims[1:])
    start = 4 + 4 * ndim
    dst.write_bytes(header + raw[start : start + n * item])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("src_dir", type=Path)
    ap.add_argument("dst_dir", type=Path)
    ap.add_argument("-n", type=int, default=12000)
    args = ap.parse_args()
    args.dst_dir.mkdir(parents=True, exist_ok=True)
    for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"):
        slice_file(args.src_dir / name, args.dst_dir / name, args.n)


if __name__ == "__main__":
    main()
