"""Compiled vs numpy barrier kernel on transmitter-step QCQPs.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 8 16 30]
"""

import argparse
import time

import numpy as np

from istnsim import wmmse
from istnsim._kernels import _barrier_py
from istnsim.association import associate_baseline
from istnsim.channel import draw_channels
from istnsim.scenario import SystemParams, generate_geometry

try:
    from istnsim._kernels import _barrier
except ImportError:
    _barrier = None


def transmitter_problem(n_tx, seed=0):
    """Phase-2 QCQP of the first joint WMMSE step, with a strictly feasible start."""
    p = SystemParams(N_TX=n_tx, K=3, N_tar=2, M=1)
    ch = draw_channels(generate_geometry(p, seed), p)[0]
    a = associate_baseline("nearest", ch.alpha_tar)
    F = wmmse.initial_beamformer(ch, a, 0.5 * p.P_BS)
    state = wmmse._refresh(wmmse.WmmseState(F=F, q=np.sqrt(0.5)), ch, a)
    e = wmmse.link_mses(state.F, state.q, state.filters, ch, a)
    bounds = (2.0 * e[1], 2.0 * e[2])  # loose enough that the start is interior
    lay, prob = wmmse.build_problem(state, ch, a, p, wmmse.P1, bounds)
    return prob, lay.pack(state.F, state.q)


def solve(kernel, prob, x0):
    gap = 1e-10 * max(1.0, abs(prob.values(x0)[0]))
    return kernel.barrier_solve(prob.sizes, prob.P, prob.c, prob.r, prob.scale,
                                x0, 0.0, False, gap, -np.inf, 400)


def bench(kernel, prob, x0, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = solve(kernel, prob, x0)
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 30])
    args = ap.parse_args(argv)
    print(f"{'N_TX':>5} {'n':>5} {'newton':>7} {'numpy ms':>9} {'cython ms':>10} {'speedup':>8} "
          f"{'max |dx|':>9}")
    for n_tx in args.sizes:
        prob, x0 = transmitter_problem(n_tx)
        t_py, (x_py, _, _, it, _) = bench(_barrier_py, prob, x0, args.repeat)
        if _barrier is None:
            print(f"{n_tx:>5} {prob.n:>5} {it:>7} {1e3 * t_py:>9.2f} {'n/a':>10}")
            continue
        t_cy, (x_cy, *_) = bench(_barrier, prob, x0, args.repeat)
        dx = np.max(np.abs(x_py - x_cy)) / max(1.0, np.max(np.abs(x_py)))
        print(f"{n_tx:>5} {prob.n:>5} {it:>7} {1e3 * t_py:>9.2f} {1e3 * t_cy:>10.2f} "
              f"{t_py / t_cy:>8.1f} {dx:>9.1e}")


if __name__ == "__main__":
    main()
