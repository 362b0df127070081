"""u_reg of the radially truncated Froehlich coupling against Feynman's action.

On fixed Brownian paths in R^3 the regularized complex action of the coupling
cut at |k| <= K approaches Feynman's double integral as K grows. Prints max and mean
relative gaps over the paths for a ladder of K. The "riemann" reference uses
the same time grid as u_reg; the "cell" reference integrates the diagonal
cells exactly, which a finite time step cannot resolve.

    python scripts/froehlich_trend.py --paths 8 --K 5 10 20 40
"""
import argparse
import time

import numpy as np

from polaron_fk.coupling import FroehlichCoupling
from polaron_fk.processes import feynman_action_R3, regular_pass
from polaron_fk.stochastic import sample_paths


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=8)
    ap.add_argument("--t", type=float, default=0.5)
    ap.add_argument("--dt", type=float, default=0.02)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--K", type=float, nargs="+", default=[5.0, 10.0, 20.0, 40.0])
    ap.add_argument("--panel", type=float, default=5.0, help="radial panel width")
    ap.add_argument("--nodes", type=int, default=16, help="Gauss-Legendre nodes per panel")
    ap.add_argument("--order", type=int, default=131, help="Lebedev order on the sphere")
    args = ap.parse_args()

    batch = sample_paths(3, args.t, args.dt, args.seed, np.arange(args.paths))
    x = np.zeros(3)
    refs = {rule: np.array([feynman_action_R3(batch.path(i), x, 1.0, rule=rule) for i in range(args.paths)])
            for rule in ("riemann", "cell")}
    print(f"{'K':>6} {'modes':>8} {'max gap (riemann)':>18} {'mean gap (riemann)':>19} "
          f"{'max gap (cell)':>15} {'sec':>6}")
    for K in args.K:
        t0 = time.time()
        edges = np.linspace(0, K, int(np.ceil(K / args.panel)) + 1)
        c = FroehlichCoupling(g=1.0, radial_edges=edges, radial_nodes=args.nodes, angular_order=args.order)
        u = regular_pass(c, batch, x, record=[batch.n_steps]).u[:, 0].real
        gr = np.abs(u - refs["riemann"]) / refs["riemann"]
        gc = np.abs(u - refs["cell"]) / refs["cell"]
        print(f"{K:6g} {c.M:8d} {gr.max():18.4f} {gr.mean():19.4f} {gc.max():15.4f} {time.time() - t0:6.1f}")


if __name__ == "__main__":
    main()
