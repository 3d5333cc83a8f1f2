import math

import pytest

from apkinetic.collision import CollisionBackend, precompute_kernel
from apkinetic.velocity import VelocityGrid2D

V_MAX = 3 * math.pi


@pytest.fixture(scope="session", autouse=True)
def kernel_cache(tmp_path_factory):
    mp = pytest.MonkeyPatch()
    mp.setenv("APKINETIC_CACHE_DIR", str(tmp_path_factory.mktemp("kernels")))
    yield
    mp.undo()


@pytest.fixture(scope="session")
def grid16():
    return VelocityGrid2D(16, V_MAX)


@pytest.fixture(scope="session")
def grid32():
    return VelocityGrid2D(32, V_MAX)


@pytest.fixture(scope="session")
def grid64():
    return VelocityGrid2D(64, V_MAX)


@pytest.fixture(scope="session")
def table32(grid32, kernel_cache):
    return precompute_kernel(grid32)


@pytest.fixture(scope="session")
def table64(grid64, kernel_cache):
    return precompute_kernel(grid64)


@pytest.fixture(scope="session")
def boltz32(table32):
    return CollisionBackend("boltzmann", table32)


@pytest.fixture(scope="session")
def boltz64(table64):
    return CollisionBackend("boltzmann", table64)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
