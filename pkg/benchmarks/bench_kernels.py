"""Compare the compiled and numpy trajectory kernels.

Usage: ``python benchmarks/bench_kernels.py [--traj 16] [--t-probe 100]``

Both backends run the same trajectories from the photon branch of the
headline configuration; the script reports seconds per trajectory, the
speed-up, and the largest difference in the filtered integral.
"""
import argparse
import time

import numpy as np

from seqdet import kernels
from seqdet.params import ProbeParams, readout_params
from seqdet.probe import ProbeStage
from seqdet.sequence import apply_unconditional_displacement, run_interaction


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--traj", type=int, default=16)
    ap.add_argument("--t-probe", type=float, default=100.0)
    ap.add_argument("--n-cut", type=int, default=30)
    args = ap.parse_args()

    p = readout_params(probe=ProbeParams(T_probe=args.t_probe))
    s = apply_unconditional_displacement(run_interaction(p, "full", args.n_cut), p.alpha)
    results = {}
    for name in kernels.available_backends():
        stage = ProbeStage(p, args.n_cut, backend=name)
        r0 = stage.real_blocks(s.rho_joint_1)
        h = np.ones(stage.n_steps)
        stage.run_batch(r0, h, 1, [0], 0)  # warm-up
        t0 = time.perf_counter()
        S, *_ = stage.run_batch(r0, h, 1, range(args.traj), 0)
        dt = time.perf_counter() - t0
        results[name] = (dt / args.traj, S)
        print(f"{name:>9}: {dt / args.traj * 1e3:9.2f} ms/trajectory ({stage.n_steps} steps)")
    if len(results) == 2:
        (tc, Sc), (tp, Sp) = results["compiled"], results["python"]
        print(f"speed-up : {tp / tc:9.1f}x")
        print(f"max |dS| : {np.max(np.abs(Sc - Sp)):9.2e}")
    else:
        print("compiled kernel not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
