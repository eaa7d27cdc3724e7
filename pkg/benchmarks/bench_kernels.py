"""Numba kernels vs the pure numpy/Python fallback.

Each backend runs in its own interpreter because PWIT_LAB_BACKEND is read
at import time. Timings are the best of a few repeats after one warm-up
call (which also absorbs numba compilation).

    python3 benchmarks/bench_kernels.py [--quick]
"""
import argparse
import json
import os
import subprocess
import sys
import time

CASES = {
    "jacobi_n200": "jacobi",
    "arrivals_scale1e3": "arrivals",
    "pwit_walk_2e4": "walk",
    "escape_bracket_d8": "bracket",
}


def run_cases(quick):
    import numpy as np

    from pwit_lab import graph, levy, pwit, spectrum, walk

    rng = np.random.default_rng(0)
    n = 120 if quick else 200
    s = graph.symmetrize(graph.generate_divisible(n, levy.TemperedStable(), rng=rng))
    spec = levy.TemperedStable()
    steps = 5_000 if quick else 20_000

    def jacobi():
        spectrum.jacobi_eigenvalues(s)

    def arrivals():
        levy.sample_arrivals_desc(spec, 1e3, 1e-4, np.random.default_rng(1))

    def walk_case():
        env = pwit.PwitEnvironment(spec, 11)
        walk.run_walk(env, steps, walk_seed=2)

    def bracket():
        env = pwit.PwitEnvironment(spec, 12)
        pwit.escape_prob_bracket(env, (1,), 8, prune=1e-3)

    fns = {"jacobi": jacobi, "arrivals": arrivals, "walk": walk_case, "bracket": bracket}
    out = {}
    for name, key in CASES.items():
        fn = fns[key]
        fn()
        best = float("inf")
        for _ in range(2 if quick else 3):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out[name] = best
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--child", choices=("numba", "numpy"), help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(run_cases(args.quick)))
        return
    times = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, PWIT_LAB_BACKEND=backend)
        cmd = [sys.executable, __file__, "--child", backend] + (["--quick"] if args.quick else [])
        res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        times[backend] = json.loads(res.stdout.strip().splitlines()[-1])
    print(f"{'case':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name in CASES:
        a, b = times["numba"][name], times["numpy"][name]
        print(f"{name:<22}{a:>12.4f}{b:>12.4f}{b / a:>10.1f}")


if __name__ == "__main__":
    main()
