#!/usr/bin/env python3
"""Times the compiled dual-coordinate-ascent kernel against the numpy fallback.

Both lanes run the same sweeps on identical instances; the script checks
they agree before timing.  Instance shapes cover the batch sizes the
attacks actually use (Q directions in dimension d).

Run: python benchmarks/bench_qp.py
"""

import time

import numpy as np

from signray.qp_backend import _py_dual_coordinate_ascent, compiled_dual_coordinate_ascent

SHAPES = [(20, 10), (50, 100), (200, 100), (200, 784)]
REPEATS = 5


def make_instance(rng, q, d):
    target = rng.standard_normal(d)
    tnorm = np.linalg.norm(target)
    rows = []
    while len(rows) < q:
        u = rng.standard_normal(d)
        if abs(target @ u) < 0.1 * tnorm * np.linalg.norm(u):
            continue
        rows.append(np.sign(target @ u) * u)
    signed = np.stack(rows)
    return np.ascontiguousarray(signed @ signed.T)


def run(kernel, gram, max_sweeps):
    alpha = np.zeros(gram.shape[0])
    margins = np.zeros(gram.shape[0])
    started = time.perf_counter()
    sweeps, resid = kernel(gram, alpha, margins, 1e-10, max_sweeps)
    return time.perf_counter() - started, sweeps, resid, alpha


def main():
    if compiled_dual_coordinate_ascent is None:
        print("compiled kernel unavailable; timing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'Q':>4} {'d':>4} {'sweeps':>7} {'compiled':>10} {'python':>10} {'speedup':>8}")
    for q, d in SHAPES:
        gram = make_instance(rng, q, d)
        t_py = t_c = 0.0
        sweeps = None
        for _ in range(REPEATS):
            dt, s_py, _, a_py = run(_py_dual_coordinate_ascent, gram.copy(), 200_000)
            t_py += dt
            if compiled_dual_coordinate_ascent is not None:
                dt, s_c, _, a_c = run(compiled_dual_coordinate_ascent, gram.copy(), 200_000)
                t_c += dt
                assert s_py == s_c, "lane sweep counts diverged"
                assert np.max(np.abs(a_py - a_c)) <= 1e-12, "lane solutions diverged"
            sweeps = s_py
        t_py /= REPEATS
        if compiled_dual_coordinate_ascent is None:
            print(f"{q:>4} {d:>4} {sweeps:>7} {'-':>10} {t_py * 1e3:>8.2f}ms {'-':>8}")
        else:
            t_c /= REPEATS
            print(
                f"{q:>4} {d:>4} {sweeps:>7} {t_c * 1e3:>8.2f}ms {t_py * 1e3:>8.2f}ms"
                f" {t_py / t_c:>7.1f}x"
            )


if __name__ == "__main__":
    main()
