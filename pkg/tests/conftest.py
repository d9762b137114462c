"""Shared fixtures: one trained desk model serves every test that needs it."""
import os

# Pin BLAS threading before numpy loads anywhere; parallel BLAS only adds
# nondeterministic reduction order and overhead at these matrix sizes.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import time

import pytest

from pvelseg import images, synth
from pvelseg.autoenc import build_model, train, TrainConfig

DESK_SEED = 11


@pytest.fixture(scope="session")
def desk_training():
    """Train the desk autoencoder once per session on defect-free cells.

    Returns (model, report, duration_seconds, dataset). Training is seeded,
    so every session reproduces the same weights.
    """
    cells = synth.generate_dataset(200, 0.0, synth.CellSpec(), seed=DESK_SEED)
    stack = [cell.image for cell in cells]
    split = images.split_dataset(stack, 0.8, seed=DESK_SEED)
    model = build_model("desk", seed=DESK_SEED)
    t0 = time.perf_counter()
    report = train(model, split.train, split.validation, TrainConfig())
    duration = time.perf_counter() - t0
    return model, report, duration, cells


@pytest.fixture(scope="session")
def desk_model(desk_training):
    return desk_training[0]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdict lines uncaptured, one per criterion."""
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "CRITERION_RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        label, outcome = results[number]
        terminalreporter.write_line(f"criterion {number:02d} ({label}): {outcome}")
