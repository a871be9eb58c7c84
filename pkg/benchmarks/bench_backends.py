"""Time the compiled kernels against the numpy fallback.

Run ``python benchmarks/bench_backends.py``. Each kernel is timed on the
same random batch with both backends, the outputs are checked for bitwise
equality, and a short ensemble/naive run is timed per backend.
"""
import argparse
import json
import time

import numpy as np

from nmqj import kernels
from nmqj.model import DampedOscillation, build_two_level_model, superposition_state
from nmqj.propagator import StepControl
from nmqj.simulate import simulate_ensemble, simulate_naive


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def kernel_cases(n, d, rng):
    psi = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    mats = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(3)]
    cdc = np.array([m.conj().T @ m for m in mats[:2]])
    labels = rng.integers(0, 3, size=n)
    rev_p = np.full((3, 2), 1e-3)
    u = rng.random(n)
    return {
        "matvec_batch": lambda k: k.matvec_batch(mats[0], psi),
        "rk4_batch": lambda k: k.rk4_batch(psi, mats[0], mats[1], mats[2], 1e-3),
        "expect_batch": lambda k: k.expect_batch(psi, cdc[0]),
        "normalize_batch": lambda k: k.normalize_batch(psi.copy()),
        "counter_uniforms": lambda k: k.counter_uniforms(12345, 7, n),
        "member_branches": lambda k: k.member_branches(psi, labels, cdc, np.array([1e-3, 2e-3]), rev_p, u),
    }


def main():
    ap = argparse.ArgumentParser(description="compiled vs numpy kernel timings")
    ap.add_argument("--n", type=int, default=100_000, help="batch rows")
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--members", type=int, default=100_000, help="ensemble size for the run timings")
    ap.add_argument("--t-max", type=float, default=0.2)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args()

    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    cases = kernel_cases(args.n, args.dim, rng)
    results = {"n": args.n, "dim": args.dim, "kernels": {}, "runs": {}}

    print(f"kernels, n={args.n}, d={args.dim} (best of {args.repeat}, ms)")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  equal")
    for name, fn in cases.items():
        times, outs = {}, {}
        for b in backends:
            mod = kernels.backend_module(b)
            times[b], outs[b] = best_of(lambda: fn(mod), args.repeat)
        equal = all(np.array_equal(outs[b], outs[backends[0]]) for b in backends)
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        results["kernels"][name] = {**{b: times[b] for b in backends}, "equal": equal}
        print(f"{name:<18}" + "".join(f"{1e3 * times[b]:>12.3f}" for b in backends) + f"{speed:>10.1f}  {equal}")

    model = build_two_level_model(DampedOscillation(1.0, 0.25, 2.0), None, superposition_state())
    grid = np.linspace(0.0, args.t_max, 3)
    ctrl = StepControl(1e-3)
    obs = {"P_e": np.diag([0.0, 1.0]).astype(complex)}
    print(f"\nruns, N={args.members}, t_max={args.t_max} (s)")
    print(f"{'backend':<12}{'compressed':>12}{'naive':>12}{'ratio':>10}")
    for b in backends:
        with kernels.backend(b):
            comp = simulate_ensemble(model, args.members, ctrl, grid, 1, obs)
            naive = simulate_naive(model, args.members, ctrl, grid, 1, obs)
        results["runs"][b] = {"compressed_s": comp.wall_clock, "naive_s": naive.wall_clock}
        print(f"{b:<12}{comp.wall_clock:>12.3f}{naive.wall_clock:>12.3f}{naive.wall_clock / comp.wall_clock:>10.1f}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
