import os

import numpy as np
import pytest

from dpm3d.mesh import Region, Sphere, build_grid, classify_points


def pytest_configure(config):
    os.environ.setdefault("DPM_THREADS", "1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ball_classification(n, r=0.5, center=(0.0, 0.0, 0.0)):
    grid = build_grid(r, n, center)
    return grid, classify_points(grid, Region((Sphere(center, r),)))


ACCEPTANCE_LINES = []


def report_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
