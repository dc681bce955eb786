#!/usr/bin/env python3
"""Smoke test for the knnlab_py extension module.

Builds nothing itself: it expects `cargo build -p knnlab-py --release` to have
produced the cdylib already, copies it next to a temp dir as an importable
module, and exercises every exported type and function with frozen values.
"""

import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def locate_cdylib():
    names = ["libknnlab_py.so", "libknnlab_py.dylib", "knnlab_py.dll"]
    for profile in ("release", "debug"):
        for name in names:
            path = os.path.join(ROOT, "target", profile, name)
            if os.path.exists(path):
                return path
    raise SystemExit(
        "knnlab_py cdylib not found; run `cargo build -p knnlab-py --release` first"
    )


def import_module():
    src = locate_cdylib()
    stage = tempfile.mkdtemp(prefix="knnlab_py_")
    ext = ".pyd" if src.endswith(".dll") else ".so"
    shutil.copy2(src, os.path.join(stage, "knnlab_py" + ext))
    sys.path.insert(0, stage)
    import knnlab_py

    return knnlab_py


def close(a, b, rel=1e-12, abs_tol=0.0):
    return abs(a - b) <= max(rel * max(abs(a), abs(b)), abs_tol)


def main():
    lab = import_module()
    print(f"imported knnlab_py {lab.__version__}")

    # Tuning schedules against the closed forms.
    assert lab.schedule_k(1024, 0.7) == 127
    assert lab.schedule_k(65536, 0.7) == 2352
    assert close(lab.schedule_b(1024, 0.05), 1024.0 ** -0.05)
    assert close(lab.schedule_m(1024, 1.0), math.sqrt(math.log(1024.0)))
    n, k = 4096, lab.schedule_k(4096, 0.7)
    want = (k / n) ** 2.0 + math.sqrt(n * math.log(n) / k**2)
    assert close(lab.theory_rate(n, k, 1, 1, target="density"), want)

    # Kernels: the standard normal profile and exact evenness.
    kern = lab.Kernel("gaussian:p=1:r=1")
    assert kern.dimension == 1 and kern.order == 1
    assert close(kern.eval([0.0]), 1.0 / math.sqrt(2.0 * math.pi))
    assert kern.eval([0.7]) == kern.eval([-0.7])
    poly = lab.Kernel("poly_gaussian:p=1:r=3")
    assert poly.order == 3
    assert poly.eval([2.0]) < 0.0  # sign change beyond sqrt(3)

    # Neighbor queries on a handmade set.
    pts = lab.SampleSet([[0.0], [1.0], [2.0], [10.0]])
    assert len(pts) == 4 and pts.dimension == 1
    index = lab.NeighborIndex(pts)
    radius, ids = index.knn_radius([0.0], 2)
    assert radius == 1.0 and sorted(ids) == [0, 1]

    # Ground-truth models: closed-form absolute-response moment at x = 0.3.
    model = lab.Model("M1")
    x = [0.3]
    f = model.true_density(x)
    g1_over_f = model.truth("g1", x) / f
    assert close(g1_over_f, 0.9565534254880818, rel=1e-14), g1_over_f
    m = model.true_regression(x)
    sigma = model.sigma
    phi = math.exp(-0.5 * (m / sigma) ** 2) / math.sqrt(2.0 * math.pi)
    cdf = 0.5 * (1.0 + math.erf(m / (sigma * math.sqrt(2.0))))
    assert close(g1_over_f, m * cdf + sigma * phi, rel=1e-13)

    # Estimates on a seeded draw track the truth at an interior point.
    sample, clipped = model.sample(4000, seed=20260816)
    assert len(sample) == 4000 and sample.responses is not None
    est = lab.Estimator(kern, c1=0.7)
    sample_index = lab.NeighborIndex(sample)
    dens = est.density(sample_index, x)
    assert dens["k_used"] == lab.schedule_k(4000, 0.7)
    assert close(dens["value"], f, rel=0.25), dens
    reg = est.regression(sample_index, x)
    assert not reg["floored"]
    assert abs(reg["value"] - m) < 0.25, reg

    # Seeded scaling study: deterministic, with finite diagnostics.
    overrides = dict(
        model="M3",
        trials="10",
        n_min="256",
        n_max="2048",
        n_points="4",
        grid="25",
        seed="4242",
    )
    run1 = lab.run_rate_study(**overrides)
    run2 = lab.run_rate_study(**overrides)
    assert run1["per_n"] == run2["per_n"]
    assert len(run1["per_n"]) == 4
    assert all(row["mean_sup_error"] > 0.0 for row in run1["per_n"])
    assert math.isfinite(run1["fitted_slope"])

    # Bracketing diagnostic keeps the adaptive estimate inside the bracket.
    sandwich = lab.sandwich_check(model, kern, n=2000, grid=20)
    assert sandwich["containment_rate"] >= 0.9, sandwich
    assert sandwich["conditional_order_rate"] == 1.0, sandwich

    # Halving the bandwidth shrinks smoothing bias at the declared order.
    wide = lab.bias_check(model, kern, "g", x, 0.04, 0.04)
    narrow = lab.bias_check(model, kern, "g", x, 0.02, 0.02)
    ratio = wide["bias_abs"] / narrow["bias_abs"]
    assert 4.0 / 1.5 <= ratio <= 4.0 * 1.5, ratio

    print("smoke test passed")


if __name__ == "__main__":
    main()
