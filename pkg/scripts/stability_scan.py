"""Smallest margin of the second variation above the volume bound along a trace.

    python scripts/stability_scan.py --domain ellipse:2,1 --variations 200 --seed 1
"""

import argparse

from cmcflow import StopCriteria, continue_flow, make_domain, triangulate
from cmcflow.stability import first_eigenvalue, overstability_check, random_variations


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--domain", default="disk:1")
    ap.add_argument("--h", type=float, default=0.05)
    ap.add_argument("--dH", type=float, default=0.1)
    ap.add_argument("--variations", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    mesh = triangulate(make_domain(args.domain), args.h)
    tr = continue_flow(mesh, -1, args.dH, StopCriteria())
    print("H,lambda1,min_d2J,min_relative_margin")
    for st in tr.states:
        samples = overstability_check(st, random_variations(mesh, args.variations, args.seed,
                                                            st.udot))
        rel = min(s.margin / max(abs(s.d2J), abs(s.bound), 1e-300) for s in samples)
        print(f"{st.H:.4f},{first_eigenvalue(st.u)[0]:.6f},"
              f"{min(s.d2J for s in samples):.6e},{rel:.3e}")


if __name__ == "__main__":
    main()
