#!/usr/bin/env python3
"""Compare the compiled and pure-Python kernel backends on the two hot
paths: distance-transform builds and batched nearest-anatomy queries.

Usage: python benchmarks/compare_backends.py [--dims 96] [--labels 8]
                                             [--queries 20000] [--repeats 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sdfguide import _pykernels, phantom, query, sdf
from sdfguide.backend import get_backend


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", type=int, default=96, help="cube edge in voxels")
    ap.add_argument("--labels", type=int, default=8)
    ap.add_argument("--queries", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    try:
        compiled = get_backend("compiled")
    except RuntimeError:
        print("compiled backend unavailable; nothing to compare")
        return 1
    pure = get_backend("pure")

    v = phantom.multi_label_phantom(args.labels, dims=(args.dims,) * 3, seed=0)
    mask = v.labels == 1
    spacing = v.geometry.spacing

    print(f"volume {args.dims}^3, {args.labels} labels, best of {args.repeats}\n")
    print(f"{'stage':<28}{'compiled':>12}{'pure':>12}{'speedup':>10}")

    t_c = _time(lambda: compiled.edt_sq(mask, *spacing), args.repeats)
    t_p = _time(lambda: pure.edt_sq(mask, *spacing), args.repeats)
    same = np.array_equal(compiled.edt_sq(mask, *spacing), pure.edt_sq(mask, *spacing))
    print(f"{'distance transform':<28}{t_c:>10.3f} s{t_p:>10.3f} s{t_p / t_c:>9.1f}x"
          + ("" if same else "   OUTPUTS DIFFER"))

    atlas = sdf.build_atlas(v)
    pts = np.random.default_rng(0).uniform(
        0, np.asarray(v.geometry.dims) * np.asarray(spacing), (args.queries, 3)
    )
    query.query_batch(atlas, pts[:10])  # warm the per-atlas context
    t_c = _time(lambda: query.query_batch(atlas, pts, kernels=compiled), args.repeats)
    t_p = _time(lambda: query.query_batch(atlas, pts, kernels=pure), args.repeats)
    print(f"{'batched queries':<28}{t_c:>10.3f} s{t_p:>10.3f} s{t_p / t_c:>9.1f}x")
    print(f"\nqueries/sec: compiled {args.queries / t_c:,.0f}, pure {args.queries / t_p:,.0f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
