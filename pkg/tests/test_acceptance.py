"""Release gate: the nine acceptance checks, each printing one PASS/FAIL
line (run with ``pytest tests/test_acceptance.py -s`` to see them live).

Tolerances are pinned here and must not be loosened:
  1. distance transform vs brute force   rtol 1e-5, corpus wall time < 60 s
  2. sign convention                      zero violations
  3. nearest-anatomy winner/distance      exact match, lowest-label ties
  4. closest-anatomy slice partition      3 contiguous regions
  5. force law                            examples exact; continuity 1e-9 N;
                                          cap over 1e6 samples
  6. query throughput                     >= 80 queries/sec floor
  7. guidance reduces unintended removal  strict inequality; metric oracles exact
  8. persistence round-trip + corruption  bit-exact; 100/100 flips detected
  9. cache build determinism              byte-identical for workers 1/4/8
"""

import io
import os
import time

import numpy as np
import pytest
from scipy import ndimage

from sdfguide import cli, drillsim, feedback, phantom, query, sdf, volume

ARTIFACTS = os.path.join(os.path.dirname(__file__), os.pardir, "artifacts")

N_MASKS = 200
N_ATLASES = 50
N_FORCE_SAMPLES = 1_000_000
N_FUZZ = 100
RATE_FLOOR_QPS = 80.0
STRETCH_QPS = 1e5


def _report(n: int, title: str, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    print(f"[{n}/9] {title}: {verdict} ({detail})")
    assert ok, f"criterion {n} failed: {detail}"


@pytest.fixture(scope="module")
def mask_corpus():
    """Random anisotropic masks, each with both occupied and empty voxels."""
    rng = np.random.default_rng(42)
    corpus = []
    while len(corpus) < N_MASKS:
        dims = tuple(int(rng.integers(4, 33)) for _ in range(3))
        spacing = tuple(rng.uniform(0.3, 2.0, 3))
        mask = rng.random(dims) < rng.uniform(0.02, 0.6)
        if mask.any() and not mask.all():
            corpus.append((mask, spacing))
    return corpus


def test_1_distance_transform_exactness(mask_corpus):
    t0 = time.perf_counter()
    max_rel = 0.0
    for mask, spacing in mask_corpus:
        d = sdf.edt(mask, spacing)
        b = sdf.edt_bruteforce(mask, spacing)
        nz = b > 0
        if nz.any():
            max_rel = max(max_rel, float(np.max(np.abs(d[nz] - b[nz]) / b[nz])))
        assert np.array_equal(d == 0, b == 0)
        if not np.allclose(d, b, rtol=1e-5, atol=0.0):
            _report(1, "distance transform exactness", False,
                    f"max rel err {max_rel:.3e}")
    elapsed = time.perf_counter() - t0
    ok = max_rel <= 1e-5 and elapsed < 60.0
    _report(1, "distance transform exactness", ok,
            f"{len(mask_corpus)} masks, max rel err {max_rel:.3e}, {elapsed:.1f} s")


def test_2_sign_convention(mask_corpus):
    violations = 0
    for mask, spacing in mask_corpus:
        s = sdf.sign(sdf.edt(mask, spacing), sdf.edt(~mask, spacing), mask)
        violations += int(np.count_nonzero(s[mask] >= 0))
        violations += int(np.count_nonzero(s[~mask] <= 0))
    _report(2, "sign convention (negative inside, positive outside)",
            violations == 0, f"{len(mask_corpus)} masks, {violations} violations")


def _random_three_label_volume(rng) -> volume.LabelVolume:
    while True:
        dims = tuple(int(rng.integers(6, 25)) for _ in range(3))
        labels = rng.choice(
            np.array([0, 1, 2, 3], dtype=np.int64),
            size=dims,
            p=[0.85, 0.05, 0.05, 0.05],
        )
        if all((labels == v).any() for v in (1, 2, 3)):
            break
    geometry = volume.VoxelGeometry(
        dims, tuple(rng.uniform(0.3, 2.0, 3)), tuple(rng.uniform(-5, 5, 3)), np.eye(3)
    )
    table = {1: "a", 2: "b", 3: "c"}
    return volume.LabelVolume(geometry, labels, table, frozenset())


def test_3_nearest_anatomy_exact():
    rng = np.random.default_rng(7)
    mismatches = 0
    checked = 0
    for _ in range(N_ATLASES):
        v = _random_three_label_volume(rng)
        atlas = sdf.build_atlas(v)
        g = atlas.geometry
        idx = np.indices(g.dims).reshape(3, -1).T
        pts = np.asarray(g.origin) + idx * np.asarray(g.spacing)
        win, dist, *_ = query.query_batch(atlas, pts, mode="nearest")
        stacked = atlas.stacked()[:, idx[:, 0], idx[:, 1], idx[:, 2]]
        expect_win = np.argmin(stacked, axis=0)  # first min = lowest label
        expect_dist = stacked[expect_win, np.arange(stacked.shape[1])]
        mismatches += int(np.count_nonzero(win != expect_win))
        mismatches += int(np.count_nonzero(dist != expect_dist))
        checked += len(pts)
    _report(3, "nearest-anatomy winner and distance, lowest-label ties",
            mismatches == 0,
            f"{N_ATLASES} atlases, {checked} voxel centers, {mismatches} mismatches")


def test_4_closest_anatomy_slice_partition(blob_volume, blob_atlas):
    g = blob_atlas.geometry
    kz = g.dims[2] // 2
    stacked = blob_atlas.stacked()[:, :, :, kz]
    winner_idx = np.argmin(stacked, axis=0)
    winner_label = np.array(blob_atlas.labels)[winner_idx]
    distance = np.min(stacked, axis=0)

    ok = True
    details = []
    for v in (1, 2, 3):
        region = winner_label == v
        n_components = ndimage.label(region)[1]
        blob = blob_volume.labels[:, :, kz] == v
        contiguous = n_components == 1
        contains_blob = bool(np.all(region[blob]))
        ok = ok and contiguous and contains_blob
        details.append(f"label {v}: {n_components} region(s), "
                       f"{'contains' if contains_blob else 'MISSES'} its blob")

    os.makedirs(ARTIFACTS, exist_ok=True)
    path = os.path.join(ARTIFACTS, "closest_anatomy_slice.csv")
    with open(path, "w") as f:
        f.write("x_mm,y_mm,label,distance_mm\n")
        for i in range(g.dims[0]):
            for j in range(g.dims[1]):
                p = g.index_to_world((i, j, kz))
                f.write(f"{p[0]:.3f},{p[1]:.3f},{winner_label[i, j]},"
                        f"{distance[i, j]:.6f}\n")
    _report(4, "closest-anatomy slice partition", ok,
            "; ".join(details) + f"; slice written to {os.path.relpath(path)}")


def _result(distance, gradient=(1.0, 0.0, 0.0), label=1):
    grad = None if gradient is None else np.asarray(gradient, dtype=float)
    return query.ProximityResult(label, "x", distance, grad, (0, 0, 0))


def test_5_force_law_contract():
    cfg = feedback.FeedbackConfig(tau_audio=2.0, tau_force=1.0, f_max=3.0,
                                  visual_alert=1.0, critical_labels={1})
    ok = True

    # worked examples, exact
    ok &= not feedback.visual_cue(_result(2.5), cfg).alert
    ok &= feedback.visual_cue(_result(0.9), cfg).alert
    ok &= not feedback.visual_cue(_result(1.0), cfg).alert  # strict threshold
    ok &= feedback.audio_gate(_result(1.5, label=1), cfg)
    ok &= not feedback.audio_gate(_result(1.5, label=2), cfg)
    ok &= not feedback.audio_gate(_result(2.0, label=1), cfg)
    f, degen = feedback.haptic_force(_result(1.0), cfg)
    ok &= np.array_equal(f, np.zeros(3)) and not degen
    f, degen = feedback.haptic_force(_result(0.5), cfg)
    ok &= np.array_equal(f, np.array([1.5, 0.0, 0.0])) and not degen
    f, degen = feedback.haptic_force(_result(0.5, gradient=None), cfg)
    ok &= np.array_equal(f, np.zeros(3)) and degen
    examples_ok = ok

    # continuity at the activation threshold
    f_eps, _ = feedback.haptic_force(_result(1.0 - 1e-12), cfg)
    jump = float(np.linalg.norm(f_eps))
    ok &= jump <= 1e-9

    # cap |F| <= f_max in normalized mode over random inputs
    rng = np.random.default_rng(11)
    dists = rng.uniform(0.0, 10.0, N_FORCE_SAMPLES)
    grads = rng.normal(size=(N_FORCE_SAMPLES, 3))
    grads /= np.linalg.norm(grads, axis=1, keepdims=True)
    worst = 0.0
    for d, grad in zip(dists, grads):
        f, _ = feedback.haptic_force(_result(float(d), grad), cfg)
        worst = max(worst, float(np.linalg.norm(f)))
    ok &= worst <= cfg.f_max + 1e-12
    _report(5, "force-law contract", ok,
            f"examples {'exact' if examples_ok else 'WRONG'}, "
            f"threshold jump {jump:.1e} N, "
            f"max |F| {worst:.6f} of cap {cfg.f_max} over {N_FORCE_SAMPLES:.0e} samples")


def test_6_query_throughput():
    v = phantom.multi_label_phantom(16, dims=(256, 256, 256), seed=3)
    t0 = time.perf_counter()
    atlas = sdf.build_atlas(v)
    build_s = time.perf_counter() - t0

    pts = cli.bench_points(atlas.geometry, 2000, seed=0)
    query.nearest_anatomy(atlas, pts[0])  # warm the per-atlas context
    t0 = time.perf_counter()
    for p in pts:
        query.nearest_anatomy(atlas, p, mode="nearest", clamp=True)
    qps = len(pts) / (time.perf_counter() - t0)
    stretch = "met" if qps >= STRETCH_QPS else "not met"
    _report(6, "query throughput (16 labels, 256^3, nearest + gradient)",
            qps >= RATE_FLOOR_QPS,
            f"{qps:.0f} queries/sec vs {RATE_FLOOR_QPS:.0f} floor; "
            f"stretch {STRETCH_QPS:.0e}: {stretch}; atlas build {build_s:.1f} s")


def _grazing_trajectory(n=40):
    """Straight pass skimming the first blob of the three-blob phantom
    (center (6,6,6) mm, radius 3 mm): the line runs 3.0 mm from the center,
    close enough for the 0.75 mm burr to shave critical voxels."""
    samples = []
    for i in range(n):
        x = 1.0 + 10.0 * i / (n - 1)
        samples.append(drillsim.TrajectorySample(0.05 * i, (x, 9.0, 6.0), 0.75, True))
    return samples


def test_7_guidance_reduces_unintended_removal(blob_volume, blob_atlas):
    # metric oracles on hand-enumerated events
    ev = [
        drillsim.RemovalEvent(2.0, (0, 0, 0), 1),
        drillsim.RemovalEvent(5.0, (1, 0, 0), 1),
        drillsim.RemovalEvent(7.5, (2, 0, 0), 0),
        drillsim.RemovalEvent(9.0, (3, 0, 0), 3),
    ]
    oracles_ok = (
        drillsim.completion_time(ev) == 7.0
        and drillsim.completion_time([]) == 0.0
        and drillsim.count_unintended(ev, {1, 3}) == {1: 2, 3: 1}
        and drillsim.count_unintended(ev, set()) == {}
    )

    cfg = feedback.FeedbackConfig(critical_labels=blob_volume.critical)
    trajectory = _grazing_trajectory()

    # baseline: feedback computed but not honored; carving at the planned tip
    _, base_events, base_metrics = drillsim.run_trial(
        blob_volume, blob_atlas, cfg, trajectory
    )
    base_unintended = sum(base_metrics.unintended_removed.values())

    # compliant tool: retreat along the force by |F|/k (k = 10 N/mm), one
    # iteration per tick, then carve at the displaced tip
    k_tool = 10.0
    state = drillsim.DrillState(blob_volume)
    comp_events = []
    for s in trajectory:
        r = query.nearest_anatomy(blob_atlas, s.tip)
        force, _ = feedback.haptic_force(r, cfg)
        tip = np.asarray(s.tip) + force / k_tool
        comp_events.extend(
            drillsim.carve(state, drillsim.TrajectorySample(s.t, tuple(tip),
                                                            s.burr_radius, s.drilling))
        )
    comp_unintended = sum(
        drillsim.count_unintended(comp_events, blob_volume.critical).values()
    )

    consistent = base_metrics.unintended_removed == drillsim.count_unintended(
        base_events, blob_volume.critical
    )
    ok = oracles_ok and consistent and base_unintended > comp_unintended
    _report(7, "guidance reduces unintended removals", ok,
            f"baseline {base_unintended} vs compliant {comp_unintended} critical "
            f"voxels; metric oracles {'exact' if oracles_ok else 'WRONG'}")


def test_8_persistence_roundtrip_and_corruption(blob_atlas):
    buf = io.BytesIO()
    sdf.save_atlas(blob_atlas, buf)
    blob = buf.getvalue()
    loaded = sdf.load_atlas(io.BytesIO(blob))
    roundtrip_ok = (
        loaded.labels == blob_atlas.labels
        and loaded.source_checksum == blob_atlas.source_checksum
        and loaded.geometry.same_grid(blob_atlas.geometry)
        and all(
            a.values.tobytes() == b.values.tobytes()
            for a, b in zip(loaded.volumes, blob_atlas.volumes)
        )
    )
    buf2 = io.BytesIO()
    sdf.save_atlas(loaded, buf2)
    roundtrip_ok = roundtrip_ok and buf2.getvalue() == blob

    rng = np.random.default_rng(23)
    detected = 0
    for _ in range(N_FUZZ):
        corrupt = bytearray(blob)
        pos = int(rng.integers(len(corrupt)))
        corrupt[pos] ^= int(rng.integers(1, 256))
        try:
            sdf.load_atlas(io.BytesIO(bytes(corrupt)))
        except sdf.AtlasFormatError:
            detected += 1
    ok = roundtrip_ok and detected == N_FUZZ
    _report(8, "persistence round-trip and corruption detection", ok,
            f"round-trip {'bit-exact' if roundtrip_ok else 'DIFFERS'}, "
            f"{detected}/{N_FUZZ} corruptions detected")


def test_9_build_determinism(tmp_path):
    labelmap = tmp_path / "phantom.seg.nrrd"
    volume.save_nrrd(phantom.three_blob_phantom(), str(labelmap))
    blobs = []
    for w in (1, 4, 8):
        out = tmp_path / f"atlas_w{w}.bin"
        rc = cli.main(["build", "--labelmap", str(labelmap),
                       "--out", str(out), "--workers", str(w)])
        assert rc == 0
        blobs.append(out.read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2]
    _report(9, "cache build determinism across worker counts", ok,
            f"workers 1/4/8, {len(blobs[0])} bytes each, "
            f"{'identical' if ok else 'DIFFER'}")
