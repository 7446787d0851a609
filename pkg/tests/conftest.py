"""Shared fixtures: small trained models, pipeline runs, acceptance summary."""

from __future__ import annotations

import subprocess
import sys
import time

import pytest
from hypothesis import HealthCheck, settings

from expecta.annot import ExpectationSpec, LabelDistribution
from expecta.dataset import BiasSpec, autolabel_dataset, gen_collected, gen_test
from expecta.detector import make_clean_renderer
from expecta.nn import TrainConfig, make_arch, train

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# Acceptance bookkeeping: each criterion test registers itself on entry and
# resolves on completion; a terminal-summary section prints one line per
# criterion that ran.
RESULTS: dict[int, list] = {}


def criterion(num: int, desc: str):
    RESULTS[num] = [desc, False, "did not complete"]

    def done(ok: bool, detail: str = ""):
        RESULTS[num][1] = bool(ok)
        RESULTS[num][2] = detail
        assert ok, f"criterion {num} ({desc}): {detail}"

    return done


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        desc, ok, detail = RESULTS[num]
        status = "PASS" if ok else "FAIL"
        suffix = f" [{detail}]" if (detail and not ok) else ""
        terminalreporter.write_line(f"criterion {num}: {status} - {desc}{suffix}")


def run_cli(args, cwd=None, env=None):
    """Run the command-line tool in a subprocess, returning CompletedProcess."""
    return subprocess.run(
        [sys.executable, "-m", "expecta.cli", *args],
        cwd=cwd, env=env, capture_output=True, text=True,
    )


@pytest.fixture(scope="session")
def spec32():
    return ExpectationSpec(canvas=(32, 32), size_range=(8, 30))


@pytest.fixture(scope="session")
def bias32():
    return BiasSpec(size_range=(23, 30), brightness_range=(200, 255), center_slack=4)


@pytest.fixture(scope="session")
def tiny_trained(spec32, bias32):
    """A small trained classifier plus the data it was trained on (32x32)."""
    collected = gen_collected(bias32, 400, seed=11, canvas=(32, 32))
    val = gen_collected(bias32, 80, seed=12, canvas=(32, 32))
    test = gen_test(spec32, 120, seed=13)
    cfg = TrainConfig(epochs=3, batch_size=32, learning_rate=1e-3, seed=5)
    model, history = train(collected, make_arch("vgg05", (32, 32)), cfg, val_set=val)
    support = LabelDistribution.from_annotations(autolabel_dataset(collected))
    return {
        "spec": spec32,
        "bias": bias32,
        "model": model,
        "history": history,
        "collected": collected,
        "test": test,
        "support": support,
        "renderer": make_clean_renderer((32, 32)),
    }


@pytest.fixture(scope="session")
def ci_run(tmp_path_factory):
    """A complete ci-profile audit run directory."""
    out = tmp_path_factory.mktemp("ci-audit") / "run"
    proc = run_cli(["audit", "--profile", "ci", "--seed", "0", "--out", str(out)])
    assert proc.returncode == 0, proc.stderr
    return {"dir": out, "stdout": proc.stdout}


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """A complete desk-profile audit run directory, with its wall time."""
    out = tmp_path_factory.mktemp("desk-audit") / "run"
    t0 = time.perf_counter()
    proc = run_cli(["audit", "--profile", "desk", "--seed", "0", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert proc.returncode == 0, proc.stderr
    return {"dir": out, "elapsed": elapsed, "stdout": proc.stdout}
