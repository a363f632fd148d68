import numpy as np
import pytest

from qmanifold import auto_epsilon, laplacian_for, sample_circle, sample_sphere

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str = "") -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("laplacians")


@pytest.fixture(scope="session")
def circle2500():
    return sample_circle(2500)


@pytest.fixture(scope="session")
def circle_auto(circle2500, cache_dir):
    """Regular 2500-point circle at the automatically chosen scale."""
    eps = auto_epsilon(circle2500)
    return circle2500, laplacian_for(circle2500, eps, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def circle_e3(circle2500, cache_dir):
    """Same circle at eps = 1e-3, so that h = 0.1 for alpha = 1."""
    return circle2500, laplacian_for(circle2500, 1e-3, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def sphere4000(cache_dir):
    cloud = sample_sphere(4000, seed=0)
    return cloud, laplacian_for(cloud, 0.02, cache_dir=cache_dir)


def tangent(cloud, i):
    th = cloud.intrinsic_params[i, 0]
    return np.array([-np.sin(th), np.cos(th)])


def angle_of(v):
    return float(np.mod(np.arctan2(v[1], v[0]), 2 * np.pi))
