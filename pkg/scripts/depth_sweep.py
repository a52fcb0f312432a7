#!/usr/bin/env python3
"""Sweep approximation degree against inverse-approximation error.

For each condition number the script tabulates, per degree, the true minimax
error of 1/x on [1/kappa, 1], the Chebyshev iteration bound, and the
degree-independent lower-bound constant, then reports the depths each
schedule needs to reach a target accuracy.  Output is a CSV on stdout or at
--out.
"""

import argparse
import csv
import sys

import numpy as np

from nplab import polyapprox


def sweep(kappa, degrees):
    a, b = 1.0 / kappa, 1.0
    rows = []
    for deg in degrees:
        oracle = polyapprox.minimax_oracle(a, b, deg)
        rows.append({
            "kappa": kappa,
            "degree": deg,
            "minimax_error": oracle.error,
            "chebyshev_bound": polyapprox.chebyshev_error_bound(a, b, deg),
            "barrier": polyapprox.chebyshev_barrier(a, b, deg),
        })
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappas", type=float, nargs="+",
                    default=[4.0, 16.0, 64.0])
    ap.add_argument("--degrees", type=int, nargs="+",
                    default=list(range(2, 25, 2)))
    ap.add_argument("--target", type=float, default=1e-6)
    ap.add_argument("--out", default=None, help="CSV path (default stdout)")
    args = ap.parse_args(argv)

    rows = []
    for kappa in args.kappas:
        rows.extend(sweep(kappa, args.degrees))
        dc = polyapprox.depth_to_target(polyapprox.CHEBYSHEV,
                                        1.0 / kappa, 1.0, args.target)
        dn = polyapprox.depth_to_target(polyapprox.NEUMANN,
                                        1.0 / kappa, 1.0, args.target)
        rho = polyapprox.chebyshev_rho(kappa)
        print(f"kappa={kappa:g}: rho={rho:.4f}, depth to {args.target:g}: "
              f"chebyshev {dc}, neumann {dn}", file=sys.stderr)

    fh = open(args.out, "w", newline="", encoding="utf-8") \
        if args.out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v)
                             for k, v in row.items()})
    finally:
        if args.out:
            fh.close()

    slopes_ok = True
    for kappa in args.kappas:
        sub = [r for r in rows if r["kappa"] == kappa]
        slope = float(np.polyfit([r["degree"] for r in sub],
                                 np.log([r["minimax_error"] for r in sub]),
                                 1)[0])
        log_rho = float(np.log(polyapprox.chebyshev_rho(kappa)))
        rel = abs(slope - log_rho) / abs(log_rho)
        slopes_ok &= rel <= 0.05
        print(f"kappa={kappa:g}: fitted slope {slope:.5f} vs log rho "
              f"{log_rho:.5f} (dev {rel:.2%})", file=sys.stderr)
    return 0 if slopes_ok else 1


if __name__ == "__main__":
    sys.exit(main())
