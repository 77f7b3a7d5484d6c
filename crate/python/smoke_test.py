#!/usr/bin/env python3
"""Smoke test for the mnldesign_py extension module.

Builds nothing itself: run `cargo build -p mnldesign-py` (or --release)
first, then `python3 python/smoke_test.py`. The script locates the compiled
cdylib, stages it under an importable name, and exercises the main types and
operations end to end.
"""

import json
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def stage_module():
    candidates = [
        os.path.join(ROOT, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libmnldesign_py.so", "libmnldesign_py.dylib", "mnldesign_py.dll")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p mnldesign-py")
    stage = tempfile.mkdtemp(prefix="mnldesign-py-")
    ext = ".so" if not built.endswith(".dll") else ".pyd"
    shutil.copy2(built, os.path.join(stage, "mnldesign_py" + ext))
    sys.path.insert(0, stage)


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    stage_module()
    import mnldesign_py as m

    # Instance generation and round trip.
    inst = m.Instance.generate(n=8, k=2, d=3, b=1.0, seed=7)
    assert inst.n_arms == 8 and inst.capacity == 2 and inst.dim == 3
    assert inst.outside_option
    assert all(abs(sum(x * x for x in row)) <= 1.0 + 1e-12 for row in inst.features)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "instance.json")
        inst.save(path)
        back = m.Instance.load(path)
        assert back.features == inst.features
        with open(path) as fh:
            raw = json.load(fh)
        assert set(raw) == {"features", "revenues", "K", "B", "theta_star", "outside_option"}

    # Choice probabilities sum to one, outside mass included.
    probs, outside = m.choice_probs(inst, [0, 3], inst.theta_star)
    assert approx(sum(probs) + outside, 1.0, 1e-12)

    # Lifted matrix corner and kappa sanity.
    lifted = m.lifted_info(inst, [0, 3], inst.theta_star)
    assert lifted[3][3] == 1.0
    kap = m.kappa(inst, inst.theta_star)
    assert 0.0 < kap <= 0.25

    # Confidence radius closed form: log(N/delta) = 1 gives 36 + 64.
    assert approx(m.beta(math.exp(-1.0), 1.0, 1.0, 1, 1.0), 100.0)

    # Revenue maximization against a tiny hand case.
    items, value = m.best_assortment([0.0, 0.0], [1.0, 0.0], 1)
    assert items == [0] and approx(value, 0.5, 1e-12)

    # Design computation: certified criterion below (1 + eps) d.
    report = m.frank_wolfe(inst, inst.theta_star, epsilon=0.1, backend="brute", seed=1)
    assert report["certified"]
    assert report["final_g"] <= 1.1 * inst.dim + 1e-9
    assert approx(sum(report["weights"]), 1.0, 1e-9)

    # Lifted backend reports its mismatch factor within the model envelope.
    lifted_report = m.frank_wolfe(inst, inst.theta_star, epsilon=0.1, backend="lifted", seed=1)
    assert lifted_report["eps_lift"] <= inst.capacity * math.exp(1.0) + 1e-9

    # Short identification run with relaxed scales for speed.
    s_star, gap = m.true_gap(inst)
    summary = m.run_bsi(
        inst,
        seed=3,
        const_scale=0.05,
        stop_check_every=5,
        round_cap=500_000,
    )
    assert summary["stopped"], summary
    assert summary["s_hat"] == s_star, (summary["s_hat"], s_star, gap)
    assert summary["tau"] >= 2 * summary["warmup_len"]

    print("smoke test passed:")
    print(f"  instance         {inst!r}")
    print(f"  kappa            {kap:.4f}")
    print(f"  design           iters={report['iterations']} final_g={report['final_g']:.4f}")
    print(f"  lifted mismatch  {lifted_report['eps_lift']:.4f}")
    print(f"  identification   tau={summary['tau']} warmup={summary['warmup_len']} s_hat={summary['s_hat']}")


if __name__ == "__main__":
    main()
