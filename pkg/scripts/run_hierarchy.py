#!/usr/bin/env python3
"""Run the full hierarchy suite and write per-experiment reports.

Equivalent to ``python3 -m nplab suite hierarchy --out OUT`` but handy when
you want the report objects in-process, e.g. under a profiler.
"""

import argparse
import sys

from nplab.lab import hierarchy_configs, run_suite, write_reports


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="reports", help="report directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--format", default="both",
                    choices=("json", "csv", "both"))
    args = ap.parse_args(argv)

    result = run_suite(hierarchy_configs(seed=args.seed), jobs=args.jobs)
    paths = write_reports(result["reports"], args.out, fmt=args.format)

    for rep in result["reports"]:
        verdict = "FAIL" if rep.failed else "pass"
        print(f"{rep.experiment_id:32s} {verdict}  "
              f"({rep.wall_time_ms:.0f} ms)")
    print(f"wrote {len(paths)} files to {args.out}")
    print("overall:", "pass" if result["overall_pass"] else "fail")
    return 0 if result["overall_pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
