"""Bracket the largest solvable |H| for ellipses of growing aspect ratio and compare
with the isoperimetric bound.

    python scripts/hmax_table.py --h 0.05 --tol 0.01
"""

import argparse

from cmcflow import estimate_hmax, make_domain, triangulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.05)
    ap.add_argument("--tol", type=float, default=0.01)
    ap.add_argument("--ratios", type=float, nargs="+", default=[1.0, 1.5, 2.0, 3.0])
    args = ap.parse_args()
    print("a,b,H_lo,H_hi,bound")
    for a in args.ratios:
        mesh = triangulate(make_domain(("ellipse", (a, 1.0))), args.h)
        lo, hi = estimate_hmax(mesh, args.tol)
        print(f"{a},1.0,{lo:.5f},{hi:.5f},{mesh.domain.isoperimetric_bound:.5f}")


if __name__ == "__main__":
    main()
