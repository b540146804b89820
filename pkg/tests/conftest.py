"""Shared fixtures: each bundled scenario is executed once per session and
its result reused by every test that needs it."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `import oracles` work

from i2lqr.cli import load_scenario, resolve_scenario_path
from i2lqr.runner import run_task


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260824)


def _run(name):
    scenario = load_scenario(resolve_scenario_path(name))
    return run_task(scenario)


@pytest.fixture(scope="session")
def no_obstacle_run():
    return _run("no_obstacle")


@pytest.fixture(scope="session")
def static_ellipse_run():
    return _run("static_ellipse")


@pytest.fixture(scope="session")
def added_static_circle_run():
    return _run("added_static_circle")


@pytest.fixture(scope="session")
def moving_circle_run():
    return _run("moving_circle")


@pytest.fixture(scope="session")
def all_scenario_runs(no_obstacle_run, static_ellipse_run,
                      added_static_circle_run, moving_circle_run):
    return {
        "no_obstacle": no_obstacle_run,
        "static_ellipse": static_ellipse_run,
        "added_static_circle": added_static_circle_run,
        "moving_circle": moving_circle_run,
    }
