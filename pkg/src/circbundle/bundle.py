"""Discrete circle bundles: per-edge fiber rotations and face curvatures."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import SurfaceMesh, _readonly

TWO_PI = 2.0 * math.pi


class BundleError(ValueError):
    """Raised for parity violations and inconsistent connection data."""


def wrap(x):
    """Fold angles into ``(-pi, pi]``."""
    x = np.asarray(x, dtype=float)
    return x - TWO_PI * np.ceil((x - math.pi) / TWO_PI)


def face_edge_operator(mesh):
    """Sparse (F, E) matrix summing an edge 1-form around each face boundary."""
    F = mesh.n_faces
    rows = np.repeat(np.arange(F), 3)
    return sp.csr_matrix(
        (mesh.face_edge_sign.reshape(-1).astype(float), (rows, mesh.face_edges.reshape(-1))),
        shape=(F, mesh.n_edges),
    )


class _MinNormSolver:
    """Minimum-norm solutions of ``d x = b`` for the face-boundary operator ``d``."""

    def __init__(self, mesh):
        self.d = face_edge_operator(mesh)
        lap = (self.d @ self.d.T).tocsc()
        self.closed = mesh.is_closed
        if self.closed:
            # kernel is the constants; pin face 0
            lap = lap[1:, 1:]
        self.lu = splu(lap.tocsc())

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.closed:
            if abs(b.sum()) > 1e-8 * max(1.0, np.abs(b).sum()):
                raise BundleError("face data must sum to zero on a closed surface")
            y = np.zeros(len(b))
            y[1:] = self.lu.solve(b[1:])
        else:
            y = self.lu.solve(b)
        return self.d.T @ y


def min_norm_solver(mesh):
    cache = mesh.__dict__.setdefault("_circbundle_cache", {})
    if "minnorm" not in cache:
        cache["minnorm"] = _MinNormSolver(mesh)
    return cache["minnorm"]


class Connection:
    """Discrete connection on the trivialised circle bundle over a mesh.

    Parallel transport along the sorted edge ``(i, j)`` adds ``rho[e]`` to the
    fiber angle; the reverse direction subtracts it.  ``omega[f]`` is the
    face curvature, congruent modulo ``2 pi`` to the transport holonomy
    around the counterclockwise face boundary.  The integer lift is fixed
    by the stored values, whose sum is ``2 pi e``.
    """

    def __init__(self, mesh: SurfaceMesh, rho, omega, euler_number=None,
                 fiber_length=TWO_PI):
        rho = np.asarray(rho, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if rho.shape != (mesh.n_edges,) or omega.shape != (mesh.n_faces,):
            raise BundleError("rho must be per-edge and omega per-face")
        if not fiber_length > 0:
            raise BundleError("fiber length must be positive")
        hol = face_edge_operator(mesh) @ rho
        if np.max(np.abs(wrap(hol - omega)), initial=0.0) > 1e-7:
            raise BundleError("face curvature is not congruent to the boundary holonomy")
        self.mesh = mesh
        self.rho = _readonly(rho)
        self.omega = _readonly(omega)
        self.fiber_length = float(fiber_length)
        total = omega.sum() / TWO_PI
        e = int(round(total))
        if mesh.is_closed and abs(total - e) > 1e-6:
            raise BundleError(f"total curvature / 2pi = {total!r} is not an integer")
        if euler_number is not None and mesh.is_closed and int(euler_number) != e:
            raise BundleError(f"stored Euler number {euler_number} != curvature integral {e}")
        self.euler_number = e

    @property
    def fiber_scale(self):
        return self.fiber_length / TWO_PI

    def transport(self, i, j):
        """Rotation picked up moving the fiber from vertex ``i`` to ``j``."""
        e, s = self.mesh.edge_id(i, j)
        return s * self.rho[e]

    def gauge(self, phi):
        """Connection after the vertex gauge change ``theta_v -> theta_v + phi_v``."""
        phi = np.asarray(phi, dtype=float)
        E = self.mesh.edges
        return Connection(self.mesh, self.rho + phi[E[:, 1]] - phi[E[:, 0]], self.omega,
                          fiber_length=self.fiber_length)

    def with_fiber_length(self, L):
        return Connection(self.mesh, self.rho, self.omega, fiber_length=L)

    def to_csv(self):
        lines = [f"# e={self.euler_number} L={self.fiber_length:.17g}", "edge_i,edge_j,rho"]
        for (i, j), r in zip(self.mesh.edges.tolist(), self.rho.tolist()):
            lines.append(f"{i},{j},{r:.17g}")
        return "\n".join(lines) + "\n"


def euler_number(conn: Connection) -> int:
    total = float(np.sum(conn.omega)) / TWO_PI
    e = int(round(total))
    if abs(total - e) > 1e-6:
        raise BundleError(f"total curvature / 2pi = {total!r} is not an integer")
    if e != conn.euler_number:
        raise BundleError("stored Euler number disagrees with the curvature integral")
    return e


def trivial_connection(mesh, fiber_length=TWO_PI):
    return Connection(mesh, np.zeros(mesh.n_edges), np.zeros(mesh.n_faces),
                      fiber_length=fiber_length)


def make_connection(mesh: SurfaceMesh, e: int, fiber_length=TWO_PI) -> Connection:
    """Connection with Euler number ``e`` and curvature proportional to area.

    ``rho`` is the minimum-norm solution of the incidence system; the
    ``2 pi e`` needed to close the integer lift is booked on face 0.
    """
    if int(e) != e or int(e) % 2:
        raise BundleError(f"Euler number must be even, got {e}")
    if not mesh.is_closed:
        raise BundleError("make_connection needs a closed surface")
    e = int(e)
    omega = TWO_PI * e * mesh.areas / mesh.areas.sum()
    if e == 0:
        return Connection(mesh, np.zeros(mesh.n_edges), np.zeros(mesh.n_faces), 0, fiber_length)
    b = omega.copy()
    b[0] -= TWO_PI * e
    rho = min_norm_solver(mesh).solve(b)
    return Connection(mesh, rho, omega, e, fiber_length)


def vertex_directions(mesh):
    """Angles of outgoing edges in each vertex's rescaled tangent frame.

    Returns ``(phi, scale)`` where ``phi[(i, j)]`` is the direction of edge
    ``i -> j`` at ``i`` (corner angles rescaled to sum to ``2 pi``) and
    ``scale[i]`` is that rescaling factor.  The reference direction (angle
    0) is the first edge of the vertex fan.  Boundary vertices keep their
    true angles.
    """
    cache = mesh.__dict__.setdefault("_circbundle_cache", {})
    if "vdirs" in cache:
        return cache["vdirs"]
    phi = {}
    scale = np.zeros(mesh.n_vertices)
    F = mesh.faces
    boundary = set(mesh.boundary_vertices.tolist())
    for v, fan in enumerate(mesh.vertex_fans):
        total = sum(mesh.angles[f, k] for f, k in fan)
        s = 1.0 if v in boundary else TWO_PI / total
        scale[v] = s
        acc = 0.0
        for f, k in fan:
            phi[(v, int(F[f, (k + 1) % 3]))] = acc
            acc += s * mesh.angles[f, k]
        if v in boundary:
            f, k = fan[-1]
            phi[(v, int(F[f, (k + 2) % 3]))] = acc
    cache["vdirs"] = (phi, scale)
    return phi, scale


def levi_civita_connection(mesh: SurfaceMesh, fiber_length=TWO_PI) -> Connection:
    """Discrete Levi-Civita transport between vertex tangent frames.

    Edge ``i -> j`` maps its own direction at ``i`` to the reversed edge
    direction at ``j``.  The face curvature is the angle defect of each
    vertex shared out to its faces in proportion to corner angle.
    """
    phi, scale = vertex_directions(mesh)
    rho = np.array([phi[(j, i)] + math.pi - phi[(i, j)] for i, j in mesh.edges.tolist()])
    rho = wrap(rho)
    omega = np.sum(mesh.angles * (scale[mesh.faces] - 1.0), axis=1)
    return Connection(mesh, rho, omega, fiber_length=fiber_length)


def parse_connection_csv(mesh, text):
    """Inverse of :meth:`Connection.to_csv`; curvature is rebuilt from ``rho``.

    The integer lift of the curvature is spread so that every face keeps
    the representative nearest to the area-proportional share of ``2 pi e``.
    """
    e, L = None, TWO_PI
    rho = np.full(mesh.n_edges, np.nan)
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                if key == "e":
                    e = int(val)
                elif key == "L":
                    L = float(val)
            continue
        if line.startswith("edge_i"):
            continue
        i, j, r = line.split(",")
        eid, s = mesh.edge_id(int(i), int(j))
        rho[eid] = s * float(r)
    if e is None:
        raise BundleError("connection file lacks the '# e=<int>' header")
    if np.isnan(rho).any():
        raise BundleError("connection file does not cover every edge")
    hol = face_edge_operator(mesh) @ rho
    target = TWO_PI * e * mesh.areas / mesh.areas.sum()
    omega = target + wrap(hol - target)
    return Connection(mesh, rho, omega, e, L)
