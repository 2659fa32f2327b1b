#!/usr/bin/env python3
"""Smoke test for the _refalign extension module.

Builds the cdylib with cargo if needed, loads it, and exercises the bound
API: homography construction/application, DLT, grid-scored RANSAC, PME, the
strategy gate, and mask metrics.

Usage: python3 python/smoke_test.py
"""

import math
import random
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "refalign-python", "--release"],
        cwd=REPO_ROOT,
        check=True,
    )
    built = REPO_ROOT / "target" / "release" / "lib_refalign.so"
    if not built.exists():  # e.g. macOS
        for candidate in (REPO_ROOT / "target" / "release").glob("lib_refalign.*"):
            built = candidate
            break
    if not built.exists():
        sys.exit(f"built extension not found under {REPO_ROOT}/target/release")

    stage = Path(tempfile.mkdtemp(prefix="refalign-py-"))
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy2(built, stage / f"_refalign{suffix}")
    sys.path.insert(0, str(stage))
    import _refalign  # noqa: E402

    return _refalign


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    ra = build_and_import()
    print(f"loaded _refalign {ra.__version__}")

    # Homography basics.
    identity = ra.Homography.identity()
    assert identity.apply(10.0, 20.0) == (10.0, 20.0)
    shift = ra.Homography([1, 0, 5, 0, 1, -3, 0, 0, 1])
    assert shift.apply(0.0, 0.0) == (5.0, -3.0)
    composed = shift.compose(shift.inverse())
    assert all(approx(v, e) for v, e in zip(composed.to_list(), identity.to_list()))

    # Rotation homography of equal poses is the identity.
    eye = [1, 0, 0, 0, 1, 0, 0, 0, 1]
    k = (525.0, 520.0, 319.5, 179.5)
    h_rot = ra.rotation_homography(k, k, eye, (0, 0, 0), eye, (0, 0, 0))
    assert all(approx(v, e, 1e-12) for v, e in zip(h_rot.to_list(), identity.to_list()))

    # Relative motion: world-frame rotation product and center difference.
    r, t = ra.relative_motion(eye, (1.0, 2.0, 3.0), eye, (1.5, 2.0, 3.0))
    assert all(approx(v, e, 1e-12) for v, e in zip(r, eye))
    assert approx(t[0], 0.5) and t[1] == 0.0 and t[2] == 0.0

    # DLT recovers a known projective map from noiseless points.
    rng = random.Random(7)
    truth = ra.Homography([1.05, 0.02, 12.0, -0.03, 0.97, -8.0, 1e-5, -2e-5, 1.0])
    pairs = []
    for _ in range(60):
        u, v = rng.uniform(0, 640), rng.uniform(0, 360)
        x, y = truth.apply(u, v)
        pairs.append((u, v, x, y))
    fitted = ra.dlt_homography(pairs)
    assert all(approx(a, b, 1e-8) for a, b in zip(fitted.to_list(), truth.to_list()))

    # Grid score closed forms.
    assert ra.grid_coverage_score([], 640, 360) == 0
    cluster = [(5.0 + 0.1 * i, 5.0) for i in range(9)]
    assert ra.grid_coverage_score(cluster, 640, 360, levels=4) == 30

    # RANSAC under 40% outliers.
    noisy = list(pairs)
    for _ in range(40):
        noisy.append(
            (rng.uniform(0, 640), rng.uniform(0, 360), rng.uniform(0, 640), rng.uniform(0, 360))
        )
    h, inliers, score, iterations = ra.ransac_homography(noisy, 640, 360, seed=3)
    assert len(inliers) >= 60, f"only {len(inliers)} inliers"
    assert score > 0 and iterations >= 1
    assert all(approx(a, b, 1e-6) for a, b in zip(h.to_list(), truth.to_list()))

    # PME: uniform (3, 4) offset averages exactly 5.
    offset_pairs = [(i * 13.0, i * 7.0, i * 13.0 + 3.0, i * 7.0 + 4.0) for i in range(10)]
    assert ra.compute_pme(identity, offset_pairs) == 5.0

    # Strategy gate with the 0.03 m default.
    assert ra.select_strategy(0.02) == "rotation_then_planar"
    assert ra.select_strategy(0.03) == "planar_only"
    assert ra.select_strategy(0.05) == "planar_only"

    # Mask metrics: half-overlap is IoU 1/3, F1 1/2.
    size = 10
    gt = [1 if x < 5 else 0 for y in range(size) for x in range(size)]
    pred = [1 if y < 5 else 0 for y in range(size) for x in range(size)]
    report = ra.mask_metrics(pred, gt, size, size, task="binary")
    anomaly = report["per_class"][1]
    assert (anomaly["tp"], anomaly["fp"], anomaly["fn"]) == (25, 25, 25)
    assert math.isclose(anomaly["iou"], 1.0 / 3.0, rel_tol=0, abs_tol=1e-12)
    assert anomaly["f1"] == 0.5
    assert math.isclose(report["miou"], 1.0 / 3.0, abs_tol=1e-12)

    print("smoke test passed: homography, DLT, RANSAC, PME, gate, mask metrics")


if __name__ == "__main__":
    main()
