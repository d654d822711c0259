import math

import numpy as np
import pytest

from circbundle.bundle import (
    BundleError,
    Connection,
    euler_number,
    face_edge_operator,
    levi_civita_connection,
    make_connection,
    parse_connection_csv,
    trivial_connection,
    wrap,
)
from circbundle.mesh import load_mesh, make_flat_torus, make_icosphere

from test_mesh import TETRA


def test_wrap_range():
    x = np.array([-math.pi, math.pi, 3 * math.pi, -3 * math.pi + 1e-3, 0.0, 7.0])
    w = wrap(x)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert w[0] == math.pi and w[1] == math.pi
    assert np.allclose(np.exp(1j * w), np.exp(1j * x))


def test_zero_euler_number_gives_flat(ico2):
    c = make_connection(ico2, 0)
    assert np.all(c.omega == 0) and np.all(c.rho == 0)


def test_constructed_total_curvature(ico2):
    c = make_connection(ico2, 2)
    assert abs(c.omega.sum() - 4 * math.pi) < 1e-9
    assert np.allclose(c.omega / ico2.areas, c.omega[0] / ico2.areas[0])


def test_odd_euler_number_rejected(torus8):
    with pytest.raises(BundleError, match="even"):
        make_connection(torus8, 3)


def test_curvature_matches_holonomy(ico2):
    c = make_connection(ico2, 4)
    hol = face_edge_operator(ico2) @ c.rho
    assert np.abs(wrap(hol - c.omega)).max() < 1e-9


def test_levi_civita_on_spheres(ico3):
    assert levi_civita_connection(ico3).euler_number == 2


def test_levi_civita_flat_torus(torus8):
    c = levi_civita_connection(torus8)
    assert c.euler_number == 0
    assert np.abs(c.omega).max() < 1e-12
    # flat: transport is a pure gauge
    assert np.abs(wrap(face_edge_operator(torus8) @ c.rho)).max() < 1e-12


def test_levi_civita_tetrahedron():
    c = levi_civita_connection(load_mesh(TETRA))
    assert abs(c.omega.sum() - 4 * math.pi) < 1e-9
    assert c.euler_number == 2


def test_euler_number_examples(ico2, torus8):
    assert euler_number(trivial_connection(torus8)) == 0
    assert euler_number(make_connection(ico2, 4)) == 4
    assert euler_number(levi_civita_connection(ico2)) == 2


def test_non_integral_curvature_rejected(ico2):
    c = make_connection(ico2, 2)
    om = c.omega.copy()
    om[3] += 2 * math.pi * 0.25
    with pytest.raises(BundleError):
        Connection(ico2, c.rho, om)


def test_transport_antisymmetric(ico2):
    c = make_connection(ico2, 2)
    for i, j in ico2.edges[:50].tolist():
        assert c.transport(i, j) == -c.transport(j, i)


def test_euler_number_stable_under_refinement():
    for k in (1, 2, 3):
        assert make_connection(make_icosphere(k), 2).euler_number == 2


def test_gauge_keeps_curvature(ico2, rng):
    c = make_connection(ico2, 2)
    g = c.gauge(rng.normal(size=ico2.n_vertices))
    assert np.array_equal(g.omega, c.omega)
    assert g.euler_number == c.euler_number


def test_csv_round_trip(ico2):
    c = levi_civita_connection(ico2)
    back = parse_connection_csv(ico2, c.to_csv())
    assert back.euler_number == 2
    assert np.array_equal(back.rho, c.rho)
    assert np.allclose(back.omega, c.omega, atol=1e-12)


def test_torus_with_nonzero_class():
    t = make_flat_torus(6, 6)
    c = make_connection(t, 2)
    assert c.euler_number == 2
    assert abs(c.omega.sum() - 4 * math.pi) < 1e-9
