"""Continue the solution family on several domains and write one trace CSV per domain.

    python scripts/flow_sweep.py --out runs/sweep --h 0.05 --diagnostics
"""

import argparse
import os
from pathlib import Path

from cmcflow import StopCriteria, continue_flow, make_domain, triangulate
from cmcflow.io import write_trace

DOMAINS = ["disk:1", "ellipse:2,1", "superellipse:1,1,4", "fourier:1;0.05,0.3;0.02,1.1"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--h", type=float, default=0.05)
    ap.add_argument("--dH", type=float, default=0.05)
    ap.add_argument("--domains", nargs="+", default=DOMAINS)
    ap.add_argument("--diagnostics", action="store_true")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = int(os.environ.get("CMCFLOW_THREADS", "1"))
    for desc in args.domains:
        mesh = triangulate(make_domain(desc), args.h)
        tr = continue_flow(mesh, -1, args.dH, StopCriteria(), diagnostics=args.diagnostics,
                           threads=threads)
        name = desc.replace(":", "_").replace(",", "-").replace(";", "_")
        write_trace(out / f"trace_{name}.csv", tr)
        print(f"{desc}: {len(tr.rows)} rows, last H {tr.rows[-1].H:.4f}, "
              f"bound {mesh.domain.isoperimetric_bound:.4f}, stop {tr.termination}, "
              f"violations {tr.monotonicity_violations()}")


if __name__ == "__main__":
    main()
