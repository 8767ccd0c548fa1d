"""Run the built-in example suite and print the summary table."""

import argparse
import sys

from markovarb.cli import main


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/paper_suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    return p.parse_args()


if __name__ == "__main__":
    a = parse_args()
    code = main(["paper-suite", "--out", a.out, "--seed", str(a.seed), "--threads", str(a.threads), "-q"])
    if code == 0:
        with open(f"{a.out}/paper_suite.csv") as fh:
            sys.stdout.write(fh.read())
    raise SystemExit(code)
