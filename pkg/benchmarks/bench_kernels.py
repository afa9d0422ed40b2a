"""Time the jitted GRU recurrence kernels against the pure-numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --steps 512 --hidden 128 --repeats 30

The jitted column reflects whatever backend the kernels module selected at
import (numba unless CTXTYPER_BACKEND=numpy or numba is missing); the
fallback column always times the undecorated source. Both are checked for
agreement before timing.
"""
import argparse
import statistics
import time

import numpy as np

from ctxtyper.nn import kernels


def make_inputs(steps, hidden, rng):
    proj = [rng.standard_normal((steps, hidden)) * 0.5 for _ in range(3)]
    mats = [rng.standard_normal((hidden, hidden)) * (1.0 / np.sqrt(hidden)) for _ in range(3)]
    biases = [rng.standard_normal(hidden) * 0.1 for _ in range(3)]
    return proj, mats, biases


def time_call(fn, args, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=256, help="sequence length")
    parser.add_argument("--hidden", type=int, default=128, help="state width")
    parser.add_argument("--repeats", type=int, default=20, help="timed repetitions")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    (xz, xr, xh), (u_z, u_r, u_h), (b_z, b_r, b_h) = make_inputs(args.steps, args.hidden, rng)
    fwd_args = (xz, xr, xh, u_z, u_r, u_h, b_z, b_r, b_h)

    kernels.warmup()
    out_jit = kernels.gru_forward_core(*fwd_args)
    out_py = kernels.gru_forward_core_py(*fwd_args)
    fwd_diff = max(float(np.max(np.abs(a - b))) for a, b in zip(out_jit, out_py))

    states, update, reset, candidate, prev = out_jit
    d_states = rng.standard_normal(states.shape)
    bwd_args = (d_states, update, reset, candidate, prev, u_h.T.copy(), u_r.T.copy(), u_z.T.copy())
    bwd_jit = kernels.gru_backward_core(*bwd_args)
    bwd_py = kernels.gru_backward_core_py(*bwd_args)
    bwd_diff = max(float(np.max(np.abs(a - b))) for a, b in zip(bwd_jit, bwd_py))

    rows = [
        ("forward", kernels.gru_forward_core, kernels.gru_forward_core_py, fwd_args, fwd_diff),
        ("backward", kernels.gru_backward_core, kernels.gru_backward_core_py, bwd_args, bwd_diff),
    ]
    print(f"backend={kernels.backend_name()} steps={args.steps} hidden={args.hidden} "
          f"repeats={args.repeats}")
    print(f"{'kernel':10s} {'jitted':>12s} {'fallback':>12s} {'speedup':>9s} {'max|diff|':>11s}")
    for name, jit_fn, py_fn, call_args, diff in rows:
        t_jit = time_call(jit_fn, call_args, args.repeats)
        t_py = time_call(py_fn, call_args, args.repeats)
        print(f"{name:10s} {t_jit * 1e3:10.3f}ms {t_py * 1e3:10.3f}ms "
              f"{t_py / t_jit:8.1f}x {diff:11.2e}")


if __name__ == "__main__":
    main()
