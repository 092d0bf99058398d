"""Shared fixtures: real result directories produced by the proxlmc CLI.

The figure package only ever reads files, so every test corpus here is
generated up front by driving the runner as a subprocess, exactly the way
a user would. Session scope keeps the subprocess count down; tests treat
the directories as read-only.
"""

import subprocess
import sys
from pathlib import Path

import pytest

SWEEP_TAUS = ("0.02", "0.05", "0.1", "0.2", "0.4")
SWEEP_METHODS = ("ipla", "tula")


def run_proxlmc(*args: str) -> subprocess.CompletedProcess:
    proc = subprocess.run(
        [sys.executable, "-m", "proxlmc.cli", *args],
        capture_output=True,
        text=True,
        timeout=600,
    )
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def example1_runs(tmp_path_factory) -> Path:
    """One run directory per sampler on the quartic tail start.

    The ULA run diverges within a handful of steps; the proximal and
    tamed runs go the full 400 steps.
    """
    root = tmp_path_factory.mktemp("example1")
    for sampler in ("ula", "ipla", "tula"):
        run_proxlmc(
            "run",
            "--experiment", "example1",
            "--sampler", sampler,
            "--scenario", "tail",
            "--d", "10",
            "--tau", "0.1",
            "--n-steps", "400",
            "--burn-in", "100",
            "--replicas", "2",
            "--prox.solver", "exact",
            "--output-dir", str(root / sampler),
        )
    return root


@pytest.fixture(scope="session")
def sweep_runs(tmp_path_factory) -> Path:
    """A 5-point step-size sweep for two methods, one directory per run."""
    root = tmp_path_factory.mktemp("sweep")
    for sampler in SWEEP_METHODS:
        for i, tau in enumerate(SWEEP_TAUS):
            run_proxlmc(
                "run",
                "--potential", "quartic",
                "--sampler", sampler,
                "--d", "4",
                "--tau", tau,
                "--n-steps", "300",
                "--burn-in", "100",
                "--replicas", "2",
                "--prox.solver", "exact",
                "--trajectories", "none",
                "--output-dir", str(root / f"{sampler}_{i}"),
            )
    return root


@pytest.fixture(scope="session")
def imaging_run(tmp_path_factory) -> Path:
    """A tiny deconvolution run with its PGM outputs."""
    root = tmp_path_factory.mktemp("imaging") / "run"
    run_proxlmc(
        "run",
        "--experiment", "example3",
        "--side", "16",
        "--psf-depth", "5",
        "--n-steps", "40",
        "--burn-in", "10",
        "--thinning", "3",
        "--output-dir", str(root),
    )
    return root


@pytest.fixture
def figures_cli():
    """Run the lmc-figures entry point; returns (returncode, stdout, stderr)."""

    def run(*args: str):
        proc = subprocess.run(
            [sys.executable, "-m", "lmcfigures", *args],
            capture_output=True,
            text=True,
            timeout=600,
        )
        return proc.returncode, proc.stdout, proc.stderr

    return run
