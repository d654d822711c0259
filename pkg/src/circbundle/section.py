"""Circle-valued sections given by one fiber angle per vertex, and their indices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bundle import TWO_PI, Connection, wrap
from .mesh import _readonly


class SectionError(ValueError):
    pass


class IndexInconsistencyError(SectionError):
    """The face indices do not add up to the Euler number."""


@dataclass(frozen=True)
class SingularityRecord:
    """A connected cluster of faces with nonzero index.

    ``face`` is the lowest face id of the cluster, ``faces`` all of its
    faces, ``hub`` the vertex shared by most cluster faces and ``position``
    the area-weighted barycentre (``None`` for meshes without embedding).
    A single triangle can wind by at most one turn, so an index-2 point
    shows up as two faces sharing a vertex.
    """

    face: int
    index: int
    position: tuple | None
    faces: tuple
    hub: int


class DiscreteSection:
    """Per-vertex fiber angles on a :class:`Connection`."""

    def __init__(self, conn: Connection, theta, check=True):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (conn.mesh.n_vertices,):
            raise SectionError("theta must have one entry per vertex")
        if not np.all(np.isfinite(theta)):
            raise SectionError("theta must be finite")
        self.conn = conn
        self.mesh = conn.mesh
        self.theta = _readonly(np.mod(theta, TWO_PI))
        self._idx = None
        if check and self.mesh.is_closed:
            total = int(self.face_indices().sum())
            if total != conn.euler_number:
                raise IndexInconsistencyError(
                    f"total index {total} != Euler number {conn.euler_number}")

    def with_theta(self, theta, check=False):
        return DiscreteSection(self.conn, theta, check=check)

    # ------------------------------------------------------------------
    def edge_differences(self):
        """Covariant differences on sorted edges, folded to ``(-pi, pi]``."""
        E = self.mesh.edges
        return wrap(self.theta[E[:, 1]] - self.theta[E[:, 0]] - self.conn.rho)

    def face_sums(self):
        """Oriented boundary sum of covariant differences plus curvature."""
        d = self.edge_differences()
        return np.sum(self.mesh.face_edge_sign * d[self.mesh.face_edges], axis=1) + self.conn.omega

    def face_indices(self):
        if self._idx is None:
            self._idx = _readonly(np.rint(self.face_sums() / TWO_PI).astype(np.int64))
        return self._idx

    def to_csv(self):
        rows = ["vertex_id,theta"] + [f"{i},{t:.17g}" for i, t in enumerate(self.theta.tolist())]
        return "\n".join(rows) + "\n"


def edge_difference(section: DiscreteSection, i: int, j: int) -> float:
    """Covariant difference ``wrap(theta_j - theta_i - rho_ij)`` along ``i -> j``."""
    e, s = section.mesh.edge_id(i, j)
    E = section.mesh.edges[e]
    d = float(wrap(section.theta[E[1]] - section.theta[E[0]] - section.conn.rho[e]))
    return d if s > 0 else -d


def face_index(section: DiscreteSection, f: int) -> int:
    return int(section.face_indices()[f])


def total_index(section: DiscreteSection) -> int:
    return int(section.face_indices().sum())


def singular_clusters(mesh, indices):
    """Group nonzero-index faces into clusters connected through shared vertices."""
    nz = np.flatnonzero(indices)
    if len(nz) == 0:
        return []
    parent = {int(f): int(f) for f in nz}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    by_vertex = {}
    for f in nz.tolist():
        for v in mesh.faces[f].tolist():
            by_vertex.setdefault(v, []).append(f)
    for fs in by_vertex.values():
        r0 = find(fs[0])
        for g in fs[1:]:
            rg = find(g)
            if rg != r0:
                parent[max(rg, r0)] = min(rg, r0)
                r0 = min(rg, r0)
    groups = {}
    for f in nz.tolist():
        groups.setdefault(find(f), []).append(f)
    return sorted(sorted(g) for g in groups.values())


def _cluster_hub(mesh, faces):
    counts = {}
    for f in faces:
        for v in mesh.faces[f].tolist():
            counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def singular_faces(section: DiscreteSection, include_neutral=False):
    """Singularities of a section as :class:`SingularityRecord` clusters.

    Clusters whose indices cancel are dropped unless ``include_neutral``.
    """
    mesh = section.mesh
    idx = section.face_indices()
    out = []
    for faces in singular_clusters(mesh, idx):
        k = int(idx[faces].sum())
        if k == 0 and not include_neutral:
            continue
        pos = None
        if mesh.positions is not None and mesh.periodic is None:
            w = mesh.areas[faces]
            bc = mesh.positions[mesh.faces[faces]].mean(axis=1)
            pos = tuple(float(x) for x in (w[:, None] * bc).sum(axis=0) / w.sum())
        out.append(SingularityRecord(faces[0], k, pos, tuple(faces), _cluster_hub(mesh, faces)))
    return out


def singularities_to_csv(records):
    rows = ["face_id,index,bx,by,bz"]
    for r in records:
        p = r.position if r.position is not None else (math.nan,) * 3
        rows.append(f"{r.face},{r.index},{p[0]:.17g},{p[1]:.17g},{p[2]:.17g}")
    return "\n".join(rows) + "\n"


def loop_edges(mesh, loop):
    """Validate a closed simple vertex loop; return ``(edge ids, signs)``."""
    loop = [int(v) for v in loop]
    if len(loop) < 3:
        raise SectionError("loop needs at least three vertices")
    if len(set(loop)) != len(loop):
        raise SectionError("loop is not simple")
    eids, signs = [], []
    for a, b in zip(loop, loop[1:] + loop[:1]):
        try:
            e, s = mesh.edge_id(a, b)
        except KeyError:
            raise SectionError(f"loop is not closed: no edge {a}-{b}") from None
        eids.append(e)
        signs.append(s)
    return np.array(eids), np.array(signs)


def enclosed_faces(mesh, loop):
    """Faces on the left of an oriented simple loop (flood fill)."""
    loop = [int(v) for v in loop]
    eids, _ = loop_edges(mesh, loop)
    blocked = set(eids.tolist())
    he = mesh.halfedge_lookup
    seeds = []
    for a, b in zip(loop, loop[1:] + loop[:1]):
        if (a, b) in he:
            seeds.append(he[(a, b)][0])
    inside = set()
    stack = list(seeds)
    while stack:
        f = stack.pop()
        if f in inside:
            continue
        inside.add(f)
        for k in range(3):
            e = int(mesh.face_edges[f, k])
            if e in blocked:
                continue
            for g in mesh.edge_faces[e].tolist():
                if g >= 0 and g not in inside:
                    stack.append(g)
    if len(inside) == mesh.n_faces and mesh.is_closed:
        raise SectionError("loop does not separate the surface")
    return np.array(sorted(inside), dtype=np.int64)


def boundary_degree(section: DiscreteSection, loop) -> int:
    """Winding of the section along an oriented loop, corrected by enclosed curvature."""
    mesh = section.mesh
    eids, signs = loop_edges(mesh, loop)
    d = section.edge_differences()
    inside = enclosed_faces(mesh, loop)
    total = float(np.sum(signs * d[eids])) + float(np.sum(section.conn.omega[inside]))
    return int(round(total / TWO_PI))
