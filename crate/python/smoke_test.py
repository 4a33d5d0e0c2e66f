#!/usr/bin/env python3
"""Smoke test for the triagekit_py extension module.

Builds are done with cargo; this script locates the compiled cdylib under
target/, copies it next to a temp directory under the right module name, and
exercises the main types and operations end to end:

    cargo build -p triagekit-py --release
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_extension():
    candidates = [
        REPO / "target" / "release" / "libtriagekit_py.so",
        REPO / "target" / "debug" / "libtriagekit_py.so",
        REPO / "target" / "release" / "libtriagekit_py.dylib",
        REPO / "target" / "debug" / "libtriagekit_py.dylib",
    ]
    for c in candidates:
        if c.exists():
            return c
    sys.exit(
        "triagekit_py cdylib not found; run `cargo build -p triagekit-py --release` first"
    )


def import_module():
    lib = locate_extension()
    tmp = Path(tempfile.mkdtemp(prefix="triagekit-py-"))
    shutil.copy2(lib, tmp / "triagekit_py.so")
    sys.path.insert(0, str(tmp))
    import triagekit_py

    return triagekit_py


def main():
    tk = import_module()

    # Dataset generation, save/load round trip, splitting.
    data = tk.gen_regression_benchmark(n=72, seed=0)
    assert len(data) == 72
    assert data.task_kind == "regression"
    assert data.dim == 1

    with tempfile.TemporaryDirectory() as d:
        path = str(Path(d) / "dataset.jsonl")
        data.save(path)
        back = tk.Dataset.load(path)
        assert len(back) == 72
        assert back.x(0) == data.x(0)

    train, val, test = data.split(fractions=(0.6, 0.2, 0.2), seed=0)
    assert (len(train), len(val), len(test)) == (44, 14, 14)

    # Threshold from diff values: 3rd largest of [1,2,3,4] at b = 0.5.
    assert tk.empirical_threshold([1.0, 2.0, 3.0, 4.0], 0.5) == 2.0
    assert tk.empirical_threshold([-1.0, -2.0], 1.0) == 0.0

    # Training under triage on the regression benchmark.
    run = tk.train_under_triage(
        train, val=val, budget=1.0, seed=0, outer_steps=300, batch_size=44,
        learning_rate=0.25,
    )
    losses = run.outer_losses
    assert len(losses) == 300
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:])), \
        "training trace must be non-increasing"
    pred = run.predict([0.5])
    assert 0.0 < pred < 1.0
    assert 0.0 < run.score([0.5]) < 1.0
    assert isinstance(run.deploy_decision([0.5]), bool)
    diffs = run.diff_scores(test)
    assert len(diffs) == len(test)
    assert math.isfinite(run.system_loss(test))

    # Determinism: identical seeds give identical parameters.
    run2 = tk.train_under_triage(
        train, val=val, budget=1.0, seed=0, outer_steps=300, batch_size=44,
        learning_rate=0.25,
    )
    assert run.parameters == run2.parameters

    # Classification pipeline.
    cdata = tk.gen_classification_benchmark(n=300, seed=1)
    assert cdata.task_kind == "classification"
    assert cdata.num_classes == 3
    ctrain, cval, ctest = cdata.split(seed=1)
    crun = tk.train_under_triage(
        ctrain, val=cval, budget=0.6, seed=1, outer_steps=30,
        learning_rate=0.2,
    )
    probs = crun.predict_probabilities(ctest.x(0))
    assert len(probs) == 3
    assert abs(sum(probs) - 1.0) < 1e-9

    # The four-setting synthetic experiment.
    report = tk.four_settings(seed=0)
    s1 = report["S1_full_auto_no_triage"]
    s4 = report["S4_triage_model_optimal_triage"]
    assert report["ordering_holds"]
    assert s4 < s1

    print("smoke test passed")


if __name__ == "__main__":
    main()
