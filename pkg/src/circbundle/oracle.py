"""Closed-form reference objects used to check the discrete machinery.

* The longitude-parallel field on the round sphere: a unit vector at ``p``
  carried along every great circle through ``p``.  It is smooth except at
  the antipode, where it has index 2, and its graph in the unit tangent
  bundle has area ``8 pi`` on the unit sphere.
* Model cones ``u = k * polar angle`` on a flat disk.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import quad
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import energy as _energy
from .bundle import TWO_PI, levi_civita_connection
from .section import DiscreteSection


class OracleError(ValueError):
    pass


@dataclass
class OracleResult:
    name: str
    analytic: float | None
    quadrature: float | None
    discrete: float | None = None
    order: float | None = None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def cone_closed_forms(k, R):
    """``(volume, twisting)`` of ``u = k * polar angle`` over the disk of radius ``R``."""
    if not R > 0:
        raise OracleError("radius must be positive")
    k = abs(int(k))
    if k == 0:
        return math.pi * R * R, 0.0
    q = math.sqrt(R * R + k * k)
    vol = math.pi * (R * q + k * k * math.log((R + q) / k))
    return vol, TWO_PI * k * R


def cone_quadrature(k, R):
    """Numerical quadrature of the same two integrals (independent check)."""
    k = abs(int(k))
    vol = quad(lambda r: TWO_PI * math.sqrt(r * r + k * k), 0.0, R, epsabs=1e-13, epsrel=1e-13)[0]
    tw = quad(lambda r: TWO_PI * k, 0.0, R, epsabs=1e-13)[0]
    return vol, tw


def pontryagin_volume_quadrature(radius=1.0):
    """Area of the longitude-parallel section over the sphere of given radius.

    In polar coordinates about ``p`` the covariant derivative of the field
    has norm ``(1 - cos r) / (R sin r)`` at geodesic distance ``R r``.
    """
    R = float(radius)

    def integrand(r):
        g = (1.0 - math.cos(r)) / (R * math.sin(r)) if r > 0 else 0.0
        return TWO_PI * R * R * math.sin(r) * math.sqrt(1.0 + g * g)

    return quad(integrand, 0.0, math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


PONTRYAGIN_VOLUME = 8.0 * math.pi


def _geodesic_tree(mesh, p):
    E = mesh.edges
    n = mesh.n_vertices
    G = csr_matrix((mesh.edge_lengths, (E[:, 0], E[:, 1])), shape=(n, n))
    dist = dijkstra(G, directed=False, indices=p)
    parent = np.full(n, -1)
    for v in range(n):
        if v == p:
            continue
        best, arg = math.inf, -1
        for u in mesh.vertex_neighbors[v]:
            e, _ = mesh.edge_id(u, v)
            cand = dist[u] + mesh.edge_lengths[e]
            if arg < 0 or cand < best - 1e-12 * max(1.0, best):
                best, arg = cand, u
        parent[v] = arg
    return dist, parent


def _tangent_angle_to_frame(mesh, v, vec):
    """Rescaled frame angle at vertex ``v`` of an embedded tangent vector."""
    from .bundle import vertex_directions

    phi, scale = vertex_directions(mesh)
    P = mesh.positions
    x = P[v] / np.linalg.norm(P[v])
    heads = [int(mesh.faces[f][(k + 1) % 3]) for f, k in mesh.vertex_fans[v]]
    dirs = P[heads] - P[v]
    dirs -= np.outer(dirs @ x, x)
    e0 = dirs[0] / np.linalg.norm(dirs[0])
    e1 = np.cross(x, e0)
    beta = np.mod(np.arctan2(dirs @ e1, dirs @ e0), TWO_PI)
    beta[0] = 0.0
    beta = np.append(beta, TWO_PI)
    target = math.atan2(vec @ e1, vec @ e0) % TWO_PI
    k = int(np.searchsorted(beta, target, side="right")) - 1
    k = min(max(k, 0), len(heads) - 1)
    phis = [phi[(v, h)] for h in heads] + [TWO_PI]
    t = (target - beta[k]) / (beta[k + 1] - beta[k])
    return phis[k] + t * (phis[k + 1] - phis[k])


def pontryagin_section(mesh, p, conn=None, method="longitude"):
    """Section obtained by carrying a fixed vector at vertex ``p`` to every vertex.

    ``method="longitude"`` transports exactly along great circles of the
    embedding (the mesh must be inscribed in a sphere centred at the
    origin) and reads the result in each vertex frame.  ``method="path"``
    composes the discrete transport along the shortest-edge-path tree of
    ``p`` (ties to the lowest vertex id), so every tree edge has zero
    covariant difference; its branches meet along seams whose cost does not
    vanish under refinement.
    """
    if mesh.genus != 0 or not mesh.is_closed:
        raise OracleError("the longitude-parallel section needs a closed genus-0 mesh")
    conn = levi_civita_connection(mesh) if conn is None else conn
    p = int(p)
    theta = np.zeros(mesh.n_vertices)
    if method == "path":
        dist, parent = _geodesic_tree(mesh, p)
        for v in np.argsort(dist, kind="stable").tolist():
            if v == p:
                continue
            u = int(parent[v])
            theta[v] = theta[u] + conn.transport(u, v)
        return DiscreteSection(conn, theta)
    if method != "longitude":
        raise OracleError(f"unknown method {method!r}")
    if mesh.positions is None:
        raise OracleError("longitude transport needs an embedded sphere mesh")
    P = mesh.positions
    r = np.linalg.norm(P, axis=1)
    if not np.allclose(r, r[0], rtol=1e-9):
        raise OracleError("mesh is not inscribed in a sphere centred at the origin")
    pp = P[p] / r[p]
    first = int(mesh.faces[mesh.vertex_fans[p][0][0]][(mesh.vertex_fans[p][0][1] + 1) % 3])
    w = P[first] - P[p]
    w -= (w @ pp) * pp
    w /= np.linalg.norm(w)
    for v in range(mesh.n_vertices):
        if v == p:
            continue
        x = P[v] / r[v]
        axis = np.cross(pp, x)
        sn = np.linalg.norm(axis)
        cs = float(pp @ x)
        if sn < 1e-12:
            if cs < 0:
                continue  # antipode: value irrelevant
            vec = w
        else:
            axis /= sn
            ang = math.atan2(sn, cs)
            vec = (w * math.cos(ang) + np.cross(axis, w) * math.sin(ang)
                   + axis * (axis @ w) * (1 - math.cos(ang)))
        theta[v] = _tangent_angle_to_frame(mesh, v, vec)
    return DiscreteSection(conn, theta)


def antipode(mesh, p):
    """Vertex farthest (in the embedding) from ``p``."""
    P = mesh.positions
    d = np.linalg.norm(P - P[p], axis=1)
    return int(np.argmax(d))


def disk_cone_section(disk, k, conn=None):
    from .bundle import trivial_connection

    conn = trivial_connection(disk) if conn is None else conn
    P = disk.positions - disk.positions[disk.center]
    return DiscreteSection(conn, k * np.arctan2(P[:, 1], P[:, 0]), check=False)


def convergence_order(hs, errors):
    """Least-squares slope of log(error) against log(h)."""
    hs, errors = np.log(np.asarray(hs)), np.log(np.abs(np.asarray(errors)))
    return float(np.polyfit(hs, errors, 1)[0])


def cone_oracle(k=2, R=1.0, rings=(16, 32, 64), depth=_energy.DEFAULT_DEPTH):
    """Discrete volume/twisting of the exact cone against the closed forms."""
    from .mesh import make_disk

    vol_a, tw_a = cone_closed_forms(k, R)
    vol_q, tw_q = cone_quadrature(k, R)
    vols, tws = [], []
    for n in rings:
        s = disk_cone_section(make_disk(n, R), k)
        vols.append(_energy.volume(s, depth))
        tws.append(_energy.twisting(s, depth))
    hs = [R / n for n in rings]
    return (
        OracleResult(f"cone_volume_k{k}", vol_a, vol_q, vols[-1],
                     convergence_order(hs, np.array(vols) - vol_a)),
        OracleResult(f"cone_twisting_k{k}", tw_a, tw_q, tws[-1],
                     convergence_order(hs, np.array(tws) - tw_a)),
    )


def pontryagin_oracle(subdivisions=4, p=0, depth=_energy.DEFAULT_DEPTH):
    from .mesh import make_icosphere

    mesh = make_icosphere(subdivisions, 1.0)
    s = pontryagin_section(mesh, p)
    return OracleResult("pontryagin_volume", PONTRYAGIN_VOLUME, pontryagin_volume_quadrature(1.0),
                        _energy.volume(s, depth))
