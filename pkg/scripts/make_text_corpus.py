"""Write a deterministic text corpus built from the Python standard library sources.

Used for desk-scale runs when enwik8 is not at hand. Files are visited in
sorted path order and concatenated until the requested size is reached.

    python scripts/make_text_corpus.py out.txt --bytes 1000000
"""
import argparse
import os
import sysconfig


def stdlib_text(n_bytes: int) -> bytes:
    root = sysconfig.get_paths()["stdlib"]
    chunks, total = [], 0
    for dirpath, dirnames, filenames in sorted(os.walk(root)):
        dirnames[:] = sorted(d for d in dirnames if d not in ("site-packages", "dist-packages", "__pycache__"))
        for name in sorted(filenames):
            if not name.endswith(".py"):
                continue
            with open(os.path.join(dirpath, name), "rb") as fh:
                data = fh.read()
            chunks.append(data)
            total += len(data)
            if total >= n_bytes:
                return b"".join(chunks)[:n_bytes]
    raise RuntimeError(f"standard library holds only {total} bytes of source")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--bytes", type=int, default=1_000_000)
    args = ap.parse_args()
    with open(args.out, "wb") as fh:
        fh.write(stdlib_text(args.bytes))


if __name__ == "__main__":
    main()
