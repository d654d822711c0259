import math

import numpy as np
import pytest

from circbundle import energy as en
from circbundle.mesh import make_flat_torus, make_icosphere
from circbundle.oracle import (
    PONTRYAGIN_VOLUME,
    OracleError,
    antipode,
    cone_closed_forms,
    cone_oracle,
    cone_quadrature,
    pontryagin_oracle,
    pontryagin_section,
    pontryagin_volume_quadrature,
)
from circbundle.section import boundary_degree, singular_faces, total_index


def test_flat_cone():
    v, t = cone_closed_forms(0, 1.0)
    assert v == pytest.approx(math.pi, abs=1e-15) and t == 0.0


def test_degree_two_cone():
    v, t = cone_closed_forms(2, 1.0)
    assert t == pytest.approx(4 * math.pi, rel=1e-15)
    assert abs(v - 13.07) < 0.005


def test_sign_symmetry():
    assert cone_closed_forms(-2, 1.0) == cone_closed_forms(2, 1.0)


def test_nonpositive_radius():
    for R in (0.0, -1.0):
        with pytest.raises(OracleError):
            cone_closed_forms(2, R)


def test_monotone_in_k_and_r():
    vols = [cone_closed_forms(k, 1.0)[0] for k in range(6)]
    assert all(b > a for a, b in zip(vols, vols[1:]))
    vols = [cone_closed_forms(2, R)[0] for R in (0.25, 0.5, 1.0, 2.0)]
    assert all(b > a for a, b in zip(vols, vols[1:]))
    assert cone_closed_forms(3, 2.0)[1] == pytest.approx(2 * cone_closed_forms(3, 1.0)[1])


@pytest.mark.parametrize("k,R", [(0, 1.0), (1, 0.3), (2, 1.0), (-3, 2.5)])
def test_closed_form_matches_quadrature(k, R):
    a, q = cone_closed_forms(k, R), cone_quadrature(k, R)
    assert abs(a[0] - q[0]) < 1e-8 and abs(a[1] - q[1]) < 1e-8


def test_sphere_target_is_eight_pi():
    assert abs(pontryagin_volume_quadrature(1.0) - 8 * math.pi) < 1e-8
    assert PONTRYAGIN_VOLUME == 8 * math.pi


def test_cone_oracle_orders():
    vol, tw = cone_oracle(2, 1.0, rings=(8, 16, 32))
    assert vol.order >= 1 and tw.order >= 1
    assert abs(vol.discrete / vol.analytic - 1) < 0.01


def test_pontryagin_singular_at_antipode(ico3):
    for p in (0, 7, 300):
        s = pontryagin_section(ico3, p)
        recs = singular_faces(s)
        assert total_index(s) == 2 and [r.index for r in recs] == [2]
        q = antipode(ico3, p)
        assert any(q in ico3.faces[f] for f in recs[0].faces)
        # brute force: a loop around the antipode's star has degree two
        ring = _link(ico3, q)
        assert boundary_degree(s, ring) == 2


def _link(mesh, v):
    fan = mesh.vertex_fans[v]
    return [int(mesh.faces[f][(k + 1) % 3]) for f, k in fan]


def test_path_transport_is_parallel(ico3):
    s = pontryagin_section(ico3, 0, method="path")
    from circbundle.oracle import _geodesic_tree

    _, parent = _geodesic_tree(ico3, 0)
    diffs = []
    for v in range(ico3.n_vertices):
        if v != 0:
            u = int(parent[v])
            e, sign = ico3.edge_id(u, v)
            diffs.append(abs(s.edge_differences()[e]))
    assert max(diffs) < 1e-6


def test_longitude_volume_coarse(ico3):
    v = en.volume(pontryagin_section(ico3, 0))
    assert abs(v / (8 * math.pi) - 1) < 0.03


@pytest.mark.slow
def test_longitude_volume_icosphere5():
    res = pontryagin_oracle(5)
    assert abs(res.discrete / (8 * math.pi) - 1) < 0.02


def test_requires_sphere_topology():
    with pytest.raises(OracleError):
        pontryagin_section(make_flat_torus(6, 6), 0)


def test_unknown_method(ico2):
    with pytest.raises(OracleError):
        pontryagin_section(ico2, 0, method="spiral")


def test_result_json():
    vol, _ = cone_oracle(2, 1.0, rings=(4, 8))
    assert '"name": "cone_volume_k2"' in vol.to_json()
