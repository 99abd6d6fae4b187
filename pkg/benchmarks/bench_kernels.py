"""Timing table for the Darcy matvec/CG hot path: numba vs numpy backend.

The backend is frozen at import time from SYMFLOW_BACKEND, so each side runs
in a subprocess.  Matvec is timed over repeated applications on a fixed
random field; CG is timed end to end on a thresholded-permeability solve.

    python3 benchmarks/bench_kernels.py [--sizes 32,64,128] [--repeats 200]
"""

import argparse
import json
import os
import subprocess
import sys
import textwrap

_WORKER = textwrap.dedent("""
    import json, sys, time
    import numpy as np
    from symflow.kernels import (backend_name, darcy_cg,
                                 darcy_face_coefficients, darcy_matvec)

    sizes = json.loads(sys.argv[1])
    repeats = int(sys.argv[2])
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        k = np.where(rng.standard_normal((n, n)) > 0, 12.0, 3.0)
        f = np.ones((n, n))
        h = 1.0 / (n - 1)
        kw, ke, ks, kn = darcy_face_coefficients(k)
        v = rng.standard_normal((n - 2, n - 2))
        darcy_matvec(kw, ke, ks, kn, v, h * h)  # warm up / jit compile
        t0 = time.perf_counter()
        for _ in range(repeats):
            darcy_matvec(kw, ke, ks, kn, v, h * h)
        t_mv = (time.perf_counter() - t0) / repeats
        t0 = time.perf_counter()
        darcy_cg(k, f, h)
        t_cg = time.perf_counter() - t0
        rows.append({"n": n, "matvec_us": t_mv * 1e6, "cg_ms": t_cg * 1e3})
    print(json.dumps({"backend": backend_name(), "rows": rows}))
""")


def run_side(backend: str, sizes, repeats):
    env = dict(os.environ, SYMFLOW_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", _WORKER, json.dumps(sizes), str(repeats)],
        env=env, capture_output=True, text=True)
    if out.returncode != 0:
        sys.stderr.write(out.stderr)
        raise SystemExit(f"{backend} side failed")
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="32,64,128")
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    results = {}
    for backend in ("numpy", "numba"):
        try:
            results[backend] = run_side(backend, sizes, args.repeats)
        except SystemExit as ex:
            print(f"skipping {backend}: {ex}")
    if len(results) < 2:
        return

    print(f"{'n':>6} {'matvec numpy':>14} {'matvec numba':>14} {'speedup':>8}"
          f" {'cg numpy':>12} {'cg numba':>12} {'speedup':>8}")
    for a, b in zip(results["numpy"]["rows"], results["numba"]["rows"]):
        print(f"{a['n']:>6d} {a['matvec_us']:>12.1f}us {b['matvec_us']:>12.1f}us"
              f" {a['matvec_us'] / b['matvec_us']:>7.2f}x"
              f" {a['cg_ms']:>10.1f}ms {b['cg_ms']:>10.1f}ms"
              f" {a['cg_ms'] / b['cg_ms']:>7.2f}x")


if __name__ == "__main__":
    main()
