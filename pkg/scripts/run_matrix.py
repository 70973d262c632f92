#!/usr/bin/env python3
"""Derive the mechanism/property matrix from live probes and show the probe log."""
import argparse

from pisim.mechanisms import build_property_matrix, load_fixture
from pisim.probes import run_mechanism_probes
from pisim.report import render_table1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--log", action="store_true", help="print one line per probed cell")
    args = ap.parse_args()

    outcomes, log, forgeries = run_mechanism_probes(args.seed)
    matrix = build_property_matrix(outcomes)
    print(render_table1(matrix))
    if args.log:
        for row in log:
            mark = "held" if row["held"] else "FAILED"
            print(f"{row['mechanism']:<22} {row['property']:<18} {mark:<6} {row['note']}")
        print()
    diff = matrix.diff(load_fixture())
    print(f"impersonations accepted: {forgeries}")
    print("matches fixture" if not diff else "\n".join(diff))


if __name__ == "__main__":
    main()
