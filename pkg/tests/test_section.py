import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circbundle.bundle import levi_civita_connection, make_connection, trivial_connection
from circbundle.mesh import make_disk, make_flat_torus
from circbundle.oracle import disk_cone_section, pontryagin_section
from circbundle.section import (
    DiscreteSection,
    SectionError,
    boundary_degree,
    edge_difference,
    face_index,
    singular_faces,
    total_index,
)
from circbundle.solver import initialize


def _two_vertex_section(theta_j, rho):
    t = make_flat_torus(3, 3)
    i, j = t.edges[0]
    theta = np.zeros(t.n_vertices)
    theta[j] = theta_j
    conn = trivial_connection(t)
    if rho:
        phi = np.zeros(t.n_vertices)
        phi[j] = rho
        conn = conn.gauge(phi)
    return DiscreteSection(conn, theta), int(i), int(j)


def test_equal_angles_no_rotation():
    s, i, j = _two_vertex_section(0.0, 0.0)
    assert edge_difference(s, i, j) == 0.0


def test_wrap_convention():
    s, i, j = _two_vertex_section(math.pi + 0.1, 0.0)
    assert abs(edge_difference(s, i, j) + (math.pi - 0.1)) < 1e-15
    assert abs(edge_difference(s, j, i) - (math.pi - 0.1)) < 1e-15


def test_rotation_only():
    s, i, j = _two_vertex_section(0.0, math.pi / 2)
    e, sign = s.mesh.edge_id(i, j)
    assert abs(s.conn.rho[e] * sign - math.pi / 2) < 1e-15
    assert abs(edge_difference(s, i, j) + math.pi / 2) < 1e-15


def test_constant_section_index_zero(torus8):
    s = DiscreteSection(trivial_connection(torus8), np.full(torus8.n_vertices, 0.7))
    assert np.all(s.face_indices() == 0)
    assert total_index(s) == 0 and singular_faces(s) == []


def test_disk_cone_index_two_at_centre():
    d = make_disk(8)
    s = disk_cone_section(d, 2)
    idx = s.face_indices()
    recs = singular_faces(s)
    assert len(recs) == 1 and recs[0].index == 2 and recs[0].hub == d.center
    # a single triangle carries at most one turn: the two units sit at the centre
    assert set(np.flatnonzero(idx).tolist()) == set(recs[0].faces)
    assert all(d.center in d.faces[f] for f in recs[0].faces)
    assert all(face_index(s, f) == 1 for f in recs[0].faces)


def test_pontryagin_single_singularity(ico3):
    s = pontryagin_section(ico3, 0)
    recs = singular_faces(s)
    assert total_index(s) == 2 and len(recs) == 1 and recs[0].index == 2


def test_two_prescribed_points(ico3):
    c = make_connection(ico3, 4)
    s = initialize(ico3, c, [(0, 1), (900, 1)])
    assert total_index(s) == 4
    assert [r.index for r in singular_faces(s)] == [2, 2]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0, 2, 4, -2]))
def test_poincare_hopf_random(seed, e):
    from circbundle.mesh import make_icosphere

    m = make_icosphere(2)
    conn = make_connection(m, e)
    theta = np.random.default_rng(seed).uniform(-10, 10, m.n_vertices)
    s = DiscreteSection(conn, theta)
    assert total_index(s) == e
    assert int(s.face_indices().sum()) == e


def test_gauge_invariance_of_indices(ico2, rng):
    conn = levi_civita_connection(ico2)
    theta = rng.uniform(-math.pi, math.pi, ico2.n_vertices)
    phi = rng.normal(size=ico2.n_vertices) * 3
    a = DiscreteSection(conn, theta)
    b = DiscreteSection(conn.gauge(phi), theta + phi)
    assert np.array_equal(a.face_indices(), b.face_indices())


def test_loop_around_regular_face(disk16):
    s = disk_cone_section(disk16, 2)
    f = int(np.flatnonzero(s.face_indices() == 0)[-1])
    assert boundary_degree(s, list(disk16.faces[f])) == 0


def test_ring_one_loop_degree_two():
    d = make_disk(8)
    s = disk_cone_section(d, 2)
    assert boundary_degree(s, list(range(1, 7))) == 2


def test_whole_boundary_equals_interior_sum(disk16, rng):
    s = DiscreteSection(trivial_connection(disk16),
                        rng.uniform(-math.pi, math.pi, disk16.n_vertices), check=False)
    assert boundary_degree(s, list(disk16.boundary_loop)) == int(s.face_indices().sum())


def test_loop_must_be_simple(disk16):
    s = disk_cone_section(disk16, 2)
    with pytest.raises(SectionError):
        boundary_degree(s, [1, 2, 3, 2])
    with pytest.raises(SectionError):
        boundary_degree(s, [1, 2, 40])


def test_section_csv(torus8):
    s = DiscreteSection(trivial_connection(torus8), np.linspace(0, 1, torus8.n_vertices))
    lines = s.to_csv().splitlines()
    assert lines[0] == "vertex_id,theta" and len(lines) == torus8.n_vertices + 1
    assert float(lines[5].split(",")[1]) == s.theta[4]
