"""Desk-scale sanity run: 1 MB of text, LSTM with feedback, N=128, S=100, B=32.

Builds the standard-library corpus when no --data is given, trains, and
reports the final smoothed training BPC together with wallclock time.

    python scripts/desk_run.py --steps 2000
"""
import argparse
import os
import tempfile

from make_text_corpus import stdlib_text
from paired_feedback_run import format_table, run_one


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default=None, help="1 MB byte corpus (default: stdlib sources)")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--feedback", choices=("on", "off"), default="on")
    ap.add_argument("--out", default=None)
    a = ap.parse_args()
    data = a.data
    if data is None:
        data = os.path.join(tempfile.mkdtemp(), "text1m.txt")
        with open(data, "wb") as fh:
            fh.write(stdlib_text(1_000_000))
    row = run_one(data, a.feedback == "on", a.steps, seed=a.seed, out_dir=a.out)
    print(format_table([row]))
    print("smoothed train BPC < 3.0:", "yes" if row.smoothed_train_bpc < 3.0 else "no")


if __name__ == "__main__":
    main()
