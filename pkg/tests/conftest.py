import math

import numpy as np
import pytest

from circbundle import bundle, mesh, solver

_ACCEPTANCE = []


def record_acceptance(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"
    _ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ico2():
    return mesh.make_icosphere(2, 1.0)


@pytest.fixture(scope="session")
def ico3():
    return mesh.make_icosphere(3, 1.0)


@pytest.fixture(scope="session")
def torus8():
    return mesh.make_flat_torus(8, 8, 1.0, 1.0)


@pytest.fixture(scope="session")
def disk16():
    return mesh.make_disk(16, 1.0)


@pytest.fixture(scope="session")
def benchmark():
    """Default-parameter search on icosphere(4) with the Levi-Civita connection."""
    import time

    m = mesh.make_icosphere(4, 1.0)
    conn = bundle.levi_civita_connection(m)
    t0 = time.perf_counter()
    result = solver.outer_search(m, conn, solver.SolverParams())
    return m, conn, result, time.perf_counter() - t0


def random_section(conn, rng, scale=math.pi):
    from circbundle.section import DiscreteSection

    return DiscreteSection(conn, rng.uniform(-scale, scale, conn.mesh.n_vertices))
