#!/usr/bin/env python3
"""Run both attack-success rows and write the JSON reports next to the table."""
import argparse
from pathlib import Path

from pisim.report import emit_report, render_table3
from pisim.scenarios import ScenarioSpec, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--outdir", type=Path, default=Path("results"))
    args = ap.parse_args()

    args.outdir.mkdir(parents=True, exist_ok=True)
    reports = []
    for name in ("table3_vulnerable", "table3_secure"):
        rep = run_scenario(ScenarioSpec(name, args.trials, args.seed))
        emit_report(rep, "json", args.outdir / f"{name}.json")
        reports.append(rep)
    table = render_table3(reports)
    (args.outdir / "table3.md").write_text(table, encoding="utf-8")
    print(table, end="")


if __name__ == "__main__":
    main()
