"""Max-norm error of the discrete cap against the sphere, for a sequence of mesh sizes.

    python scripts/cap_convergence.py --H -0.5 --h 0.1 0.05 0.025
"""

import argparse

import numpy as np

from cmcflow import make_domain, solve_along, triangulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--H", type=float, default=-0.5)
    ap.add_argument("--h", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    args = ap.parse_args()
    if not -1 < args.H < 0:
        ap.error("H must lie in (-1, 0) on the unit disk")
    a = -1 / args.H
    prev = None
    print("h,n_nodes,max_error,ratio")
    for h in args.h:
        mesh = triangulate(make_domain("disk:1"), h)
        st = solve_along(mesh, args.H)
        r2 = (mesh.nodes ** 2).sum(1)
        err = np.abs(st.u.coef - (np.sqrt(a * a - r2) - np.sqrt(a * a - 1))).max()
        ratio = prev / err if prev else float("nan")
        print(f"{h},{mesh.n_nodes},{err:.6e},{ratio:.3f}")
        prev = err


if __name__ == "__main__":
    main()
