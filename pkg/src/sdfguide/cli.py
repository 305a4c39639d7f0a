"""Command-line front door: build atlases, run point/batch queries, replay
recorded trials, and benchmark the query path."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import backend, drillsim, feedback, phantom, query, sdf, volume

RATE_FLOOR_HZ = 80.0  # reported real-time update-rate floor
STRETCH_QPS = 1e5  # engineering stretch target, single stream


class InputError(Exception):
    """Bad input file or argument combination; exits with code 2."""


def _load_labelmap(path) -> volume.LabelVolume:
    if not os.path.exists(path):
        raise InputError(f"labelmap not found: {path}")
    try:
        return volume.load_nrrd(path)
    except volume.NrrdError as e:
        raise InputError(f"cannot parse {path}: {e}") from None


def _load_atlas(path) -> sdf.SdfAtlas:
    if not os.path.exists(path):
        raise InputError(f"atlas not found: {path}")
    try:
        return sdf.load_atlas(path)
    except sdf.AtlasFormatError as e:
        raise InputError(f"cannot load {path}: {e}") from None


def cmd_build(args) -> int:
    v = _load_labelmap(args.labelmap)
    t0 = time.perf_counter()
    atlas = sdf.build_atlas(v, workers=args.workers)
    elapsed = time.perf_counter() - t0
    sdf.save_atlas(atlas, args.out)
    print(f"built atlas: {len(atlas.volumes)} labels, dims {atlas.geometry.dims}, "
          f"{elapsed:.2f} s, backend={backend.BACKEND}")
    print(f"wrote {args.out} ({os.path.getsize(args.out)} bytes)")
    return 0


def _iter_points(args):
    if args.point:
        for token in args.point:
            parts = token.split(",")
            if len(parts) != 3:
                raise InputError(f"--point expects x,y,z, got {token!r}")
            yield tuple(float(p) for p in parts)
    if args.points:
        if not os.path.exists(args.points):
            raise InputError(f"points file not found: {args.points}")
        with open(args.points, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:3]] != ["x", "y", "z"]:
                raise InputError("points CSV must have header x,y,z")
            for row in reader:
                yield tuple(float(x) for x in row[:3])


def cmd_query(args) -> int:
    atlas = _load_atlas(args.atlas)
    pts = list(_iter_points(args))
    if not pts:
        raise InputError("no query points given (use --point or --points)")
    clamp = args.clamp == "on"
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["x", "y", "z", "status", "label", "name", "distance",
                    "gx", "gy", "gz", "i", "j", "k"])
        for p in pts:
            try:
                r = query.nearest_anatomy(atlas, p, mode=args.mode, clamp=clamp)
            except query.OutOfBoundsError:
                w.writerow([p[0], p[1], p[2], "error:out_of_bounds"] + [""] * 9)
                continue
            g = ["", "", ""] if r.gradient is None else [f"{x:.9g}" for x in r.gradient]
            w.writerow([p[0], p[1], p[2], "ok", r.label, r.name, f"{r.distance:.9g}",
                        *g, *r.voxel])
    finally:
        if args.out:
            out.close()
    return 0


def cmd_replay(args) -> int:
    if not os.path.exists(args.config):
        raise InputError(f"config not found: {args.config}")
    with open(args.config) as f:
        kv = feedback.parse_keyvalues(f.read())
    for key in ("labelmap", "trajectory", "out_dir"):
        if key not in kv:
            raise InputError(f"config missing required key {key!r}")
    v = _load_labelmap(kv["labelmap"])
    name_to_label = {n: lb for lb, n in v.table.items()}

    def resolve(name):
        if name not in name_to_label:
            raise InputError(f"unknown anatomy name {name!r} in critical_labels")
        return name_to_label[name]

    try:
        cfg = feedback.config_from_keyvalues(kv, resolve)
    except ValueError as e:
        raise InputError(str(e)) from None
    mode = kv.get("mode", "nearest")
    clamp = kv.get("clamp", "on") == "on"
    workers = int(kv.get("workers", "1"))

    if kv.get("atlas") and os.path.exists(kv["atlas"]):
        atlas = _load_atlas(kv["atlas"])
    else:
        atlas = sdf.build_atlas(v, workers=workers)
        if kv.get("atlas"):
            sdf.save_atlas(atlas, kv["atlas"])
    try:
        trajectory = drillsim.read_trajectory(kv["trajectory"])
    except (OSError, ValueError) as e:
        raise InputError(f"bad trajectory {kv['trajectory']}: {e}") from None
    if not trajectory:
        raise InputError("trajectory is empty")

    frames, events, metrics = drillsim.run_trial(v, atlas, cfg, trajectory, mode=mode, clamp=clamp)
    out_dir = kv["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    drillsim.write_frame_log(frames, os.path.join(out_dir, "frames.jsonl"))
    drillsim.write_event_log(events, os.path.join(out_dir, "events.jsonl"))
    with open(os.path.join(out_dir, "metrics.json"), "w") as f:
        json.dump(metrics.to_dict(), f, indent=2)
        f.write("\n")
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def bench_points(geometry, count: int, seed: int) -> np.ndarray:
    """Deterministic uniform in-bounds world points for the benchmark."""
    rng = np.random.default_rng(seed)
    lo = geometry.index_to_world((0, 0, 0))
    hi = geometry.index_to_world(tuple(d - 1 for d in geometry.dims))
    return rng.uniform(np.minimum(lo, hi), np.maximum(lo, hi), size=(count, 3))


def _bench_mode(atlas, pts, mode: str, runs: int = 5):
    """Single-stream full feedback queries (nearest anatomy + gradient);
    returns (median qps over runs, p99 latency seconds)."""
    latencies = []
    qps_runs = []
    for _ in range(runs):
        t_run = time.perf_counter()
        for p in pts:
            t0 = time.perf_counter_ns()
            query.nearest_anatomy(atlas, p, mode=mode, clamp=True)
            latencies.append(time.perf_counter_ns() - t0)
        dt = time.perf_counter() - t_run
        qps_runs.append(len(pts) / dt)
    return float(np.median(qps_runs)), float(np.percentile(latencies, 99)) / 1e9


def cmd_bench(args) -> int:
    atlas = _load_atlas(args.atlas)
    g = atlas.geometry
    pts = bench_points(g, args.count, args.seed)

    modes = ["nearest", "trilinear"] if args.mode == "both" else [args.mode]
    print(f"backend: {backend.BACKEND}; atlas: {len(atlas.volumes)} labels, dims {g.dims}")
    ok = True
    for mode in modes:
        qps, p99 = _bench_mode(atlas, pts, mode)
        passed = qps >= RATE_FLOOR_HZ
        ok = ok and passed
        verdict = "PASS" if passed else "FAIL"
        print(f"{mode}: {qps:.0f} queries/sec (median of 5 runs), "
              f"p99 latency {p99 * 1e6:.1f} us -> {verdict} vs {RATE_FLOOR_HZ:.0f} Hz floor")
        if mode == "nearest":
            note = "met" if qps >= STRETCH_QPS else "not met"
            print(f"  stretch target {STRETCH_QPS:.0e} queries/sec: {note}")
    return 0 if ok else 1


def cmd_phantom(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    v = phantom.three_blob_phantom()
    labelmap_path = os.path.join(args.out, "phantom.seg.nrrd")
    volume.save_nrrd(v, labelmap_path)
    traj_path = os.path.join(args.out, "trajectory.csv")
    drillsim.write_trajectory(phantom.demo_trajectory(v), traj_path)
    cfg_path = os.path.join(args.out, "replay.cfg")
    with open(cfg_path, "w") as f:
        f.write(
            f"labelmap = {labelmap_path}\n"
            f"trajectory = {traj_path}\n"
            f"out_dir = {os.path.join(args.out, 'replay')}\n"
            "tau_audio = 2.0\n"
            "tau_force = 1.0\n"
            "f_max = 3.0\n"
            "critical_labels = TMJ,EAC,Sinus\n"
        )
    print(f"wrote {labelmap_path}, {traj_path}, {cfg_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdfguide",
                                description="SDF atlases, proximity queries, and drilling guidance")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build an SDF atlas cache from a labelmap")
    b.add_argument("--labelmap", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="nearest-anatomy queries at world points")
    q.add_argument("--atlas", required=True)
    q.add_argument("--point", action="append", help="x,y,z in mm; repeatable")
    q.add_argument("--points", help="CSV file with header x,y,z")
    q.add_argument("--mode", choices=["nearest", "trilinear"], default="nearest")
    q.add_argument("--clamp", choices=["on", "off"], default="on")
    q.add_argument("--out", help="output CSV path (default stdout)")
    q.set_defaults(func=cmd_query)

    r = sub.add_parser("replay", help="replay a trajectory and emit logs + metrics")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_replay)

    n = sub.add_parser("bench", help="benchmark the full feedback query path")
    n.add_argument("--atlas", required=True)
    n.add_argument("--count", type=int, default=2000)
    n.add_argument("--mode", choices=["nearest", "trilinear", "both"], default="both")
    n.add_argument("--seed", type=int, default=0)
    n.set_defaults(func=cmd_bench)

    ph = sub.add_parser("phantom", help="write the bundled synthetic phantom and demo files")
    ph.add_argument("--out", required=True)
    ph.set_defaults(func=cmd_phantom)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
