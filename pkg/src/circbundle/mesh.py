"""Triangulated surfaces carrying an intrinsic (edge-length) metric.

A :class:`SurfaceMesh` is fully determined by its oriented faces and one
length per edge.  Vertex positions are optional and only used by the
generators and for export; every geometric quantity used downstream
(areas, corner angles, per-face frames) is derived from edge lengths.
"""

from __future__ import annotations

import io
import logging
import math
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)


class MeshError(ValueError):
    """Base class for mesh construction and parsing failures."""

    code = "mesh"


class MeshFormatError(MeshError):
    code = "parse"


class NonManifoldError(MeshError):
    code = "non-manifold"


class OrientationError(MeshError):
    code = "orientation"


class BoundaryError(MeshError):
    code = "boundary"


class DegenerateFaceError(MeshError):
    code = "degenerate"


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _heron(a, b, c):
    # Kahan's numerically stable form; expects a >= b >= c
    s = np.sort(np.stack([a, b, c], axis=-1), axis=-1)[..., ::-1]
    a, b, c = s[..., 0], s[..., 1], s[..., 2]
    return 0.25 * np.sqrt((a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c)))


class SurfaceMesh:
    """Oriented triangle mesh with intrinsic metric.

    Parameters
    ----------
    faces : array_like, shape (F, 3)
        Counterclockwise vertex triples (0-based).
    positions : array_like, shape (V, 3), optional
        Embedding used for generation/export.  When ``face_lengths`` is
        omitted the metric is induced from these positions.
    face_lengths : array_like, shape (F, 3), optional
        Length of local edge ``(v_k, v_{k+1})`` for every face.  Lengths of
        an edge seen from its two faces must agree.
    allow_boundary : bool
        Closed meshes are required unless this is set.

    Notes
    -----
    Edges are stored once, as sorted pairs ``(i, j)`` with ``i < j``, in
    lexicographic order.  ``face_edges[f, k]`` is the id of the local edge
    from corner ``k`` to corner ``k+1`` and ``face_edge_sign[f, k]`` is +1
    when that local edge runs from the lower to the higher vertex id.
    """

    def __getstate__(self):
        # solver caches hold factorizations that cannot be pickled
        state = dict(self.__dict__)
        state.pop("_circbundle_cache", None)
        return state

    def __init__(self, faces, positions=None, face_lengths=None, n_vertices=None,
                 allow_boundary=False):
        faces = np.asarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
            raise MeshFormatError("faces must be a non-empty (F, 3) integer array")
        if positions is not None:
            positions = np.asarray(positions, dtype=float)
            if positions.ndim != 2 or positions.shape[1] != 3:
                raise MeshFormatError("positions must be (V, 3)")
            n_vertices = len(positions)
        if n_vertices is None:
            n_vertices = int(faces.max()) + 1
        if faces.min() < 0 or faces.max() >= n_vertices:
            raise MeshFormatError("face references a vertex out of range")
        if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) \
                or np.any(faces[:, 0] == faces[:, 2]):
            raise DegenerateFaceError("face with repeated vertex")

        self.n_vertices = int(n_vertices)
        self.faces = _readonly(faces)
        self.positions = None if positions is None else _readonly(positions)
        self.allow_boundary = allow_boundary
        self.periodic = None
        self._build_connectivity()
        self._build_metric(face_lengths)
        self._build_frames()

    # ------------------------------------------------------------------
    # construction
    def _build_connectivity(self):
        F = self.faces
        nv = self.n_vertices
        tail = F.reshape(-1)
        head = np.roll(F, -1, axis=1).reshape(-1)
        directed = tail * nv + head
        order = np.argsort(directed, kind="stable")
        sd = directed[order]
        if np.any(sd[1:] == sd[:-1]):
            # same directed edge twice: either 3+ faces or flipped orientation
            lo, hi = np.minimum(tail, head), np.maximum(tail, head)
            und = lo * nv + hi
            _, counts = np.unique(und, return_counts=True)
            if np.any(counts > 2):
                raise NonManifoldError("edge shared by more than two faces")
            raise OrientationError("inconsistent face orientation")

        lo, hi = np.minimum(tail, head), np.maximum(tail, head)
        und = lo * nv + hi
        uniq, inv, counts = np.unique(und, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise NonManifoldError("edge shared by more than two faces")
        boundary = counts == 1
        if boundary.any() and not self.allow_boundary:
            raise BoundaryError(f"{int(boundary.sum())} boundary edges on a closed-surface mesh")

        self.edges = _readonly(np.stack([uniq // nv, uniq % nv], axis=1))
        self.face_edges = _readonly(inv.reshape(-1, 3))
        self.face_edge_sign = _readonly(np.where(tail < head, 1, -1).reshape(-1, 3))

        E = len(uniq)
        ef = -np.ones((E, 2), dtype=np.int64)
        slot = np.where(tail < head, 0, 1)
        ef[inv, slot] = np.repeat(np.arange(len(F)), 3)
        self.edge_faces = _readonly(ef)
        self.boundary_edges = _readonly(np.flatnonzero(boundary))

        used = np.zeros(nv, dtype=bool)
        used[F.reshape(-1)] = True
        if not used.all():
            raise MeshFormatError("isolated vertices are not supported")

        # connectivity check
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        adj = coo_matrix((np.ones(E), (self.edges[:, 0], self.edges[:, 1])), shape=(nv, nv))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise MeshFormatError(f"mesh has {ncomp} connected components")

        chi = self.euler_characteristic
        nb = self._count_boundary_loops()
        g2 = 2 - nb - chi
        if g2 % 2 or g2 < 0:
            raise NonManifoldError(f"Euler characteristic {chi} incompatible with a surface")
        self.n_boundary_loops = nb
        self.genus = g2 // 2

    def _count_boundary_loops(self):
        if len(self.boundary_edges) == 0:
            return 0
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        be = self.edges[self.boundary_edges]
        verts, local = np.unique(be, return_inverse=True)
        local = local.reshape(-1, 2)
        n = len(verts)
        deg = np.bincount(local.reshape(-1), minlength=n)
        if np.any(deg != 2):
            raise NonManifoldError("non-manifold boundary vertex")
        adj = coo_matrix((np.ones(len(local)), (local[:, 0], local[:, 1])), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp

    def _build_metric(self, face_lengths):
        F = self.faces
        if face_lengths is None:
            if self.positions is None:
                raise MeshFormatError("either positions or face_lengths is required")
            P = self.positions
            fl = np.linalg.norm(P[np.roll(F, -1, axis=1)] - P[F], axis=2)
        else:
            fl = np.asarray(face_lengths, dtype=float)
            if fl.shape != F.shape:
                raise MeshFormatError("face_lengths must match faces")
        E = len(self.edges)
        lengths = np.zeros(E)
        lengths[self.face_edges.reshape(-1)] = fl.reshape(-1)
        if not np.allclose(lengths[self.face_edges], fl, rtol=1e-12, atol=0):
            raise MeshFormatError("edge lengths disagree between adjacent faces")
        if np.any(lengths <= 0):
            raise DegenerateFaceError("non-positive edge length")
        # strict triangle inequality
        a, b, c = fl[:, 0], fl[:, 1], fl[:, 2]
        if np.any(a >= b + c) or np.any(b >= a + c) or np.any(c >= a + b):
            raise DegenerateFaceError("face violates the strict triangle inequality")

        self.edge_lengths = _readonly(lengths)
        self.face_lengths = _readonly(fl)
        self.areas = _readonly(_heron(a, b, c))
        # corner k sits between local edges k-1 and k; opposite edge is k+1
        l_prev = np.roll(fl, 1, axis=1)
        l_next = fl
        l_opp = np.roll(fl, -1, axis=1)
        cosang = (l_prev ** 2 + l_next ** 2 - l_opp ** 2) / (2 * l_prev * l_next)
        self.angles = _readonly(np.arccos(np.clip(cosang, -1.0, 1.0)))

    def _build_frames(self):
        fl = self.face_lengths
        nf = len(self.faces)
        # corners in face order: a at origin, b on +x, c above
        coords = np.zeros((nf, 3, 2))
        coords[:, 1, 0] = fl[:, 0]
        alpha = self.angles[:, 0]
        coords[:, 2, 0] = fl[:, 2] * np.cos(alpha)
        coords[:, 2, 1] = fl[:, 2] * np.sin(alpha)
        # frame axis: along the lowest-id edge, from its lower to its higher vertex
        k = np.argmin(self.face_edges, axis=1)
        rows = np.arange(nf)
        sgn = self.face_edge_sign[rows, k]
        p0 = coords[rows, k]
        p1 = coords[rows, (k + 1) % 3]
        start = np.where(sgn[:, None] > 0, p0, p1)
        d = np.where(sgn[:, None] > 0, p1 - p0, p0 - p1)
        d /= np.linalg.norm(d, axis=1)[:, None]
        rel = coords - start[:, None, :]
        x = rel[..., 0] * d[:, None, 0] + rel[..., 1] * d[:, None, 1]
        y = -rel[..., 0] * d[:, None, 1] + rel[..., 1] * d[:, None, 0]
        coords = np.stack([x, y], axis=-1)
        self.face_coords = _readonly(coords)
        # gradients of the barycentric hat functions, in the face frame
        opp = np.roll(coords, 1, axis=1) - np.roll(coords, -1, axis=1)  # edge opposite corner k
        rot = np.stack([-opp[..., 1], opp[..., 0]], axis=-1)
        self.hat_gradients = _readonly(rot / (2 * self.areas)[:, None, None])

    # ------------------------------------------------------------------
    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def is_closed(self):
        return len(self.boundary_edges) == 0

    @property
    def total_area(self):
        return float(np.sum(self.areas))

    @cached_property
    def halfedge_lookup(self):
        """Dict ``(tail, head) -> (face, local corner of tail)``."""
        out = {}
        for f, (a, b, c) in enumerate(self.faces.tolist()):
            out[(a, b)] = (f, 0)
            out[(b, c)] = (f, 1)
            out[(c, a)] = (f, 2)
        return out

    @cached_property
    def edge_lookup(self):
        return {(int(i), int(j)): e for e, (i, j) in enumerate(self.edges)}

    def edge_id(self, i, j):
        """Return ``(edge id, sign)`` with sign +1 when ``i < j``."""
        if i < j:
            return self.edge_lookup[(i, j)], 1
        return self.edge_lookup[(j, i)], -1

    @cached_property
    def vertex_neighbors(self):
        nbrs = [[] for _ in range(self.n_vertices)]
        for i, j in self.edges.tolist():
            nbrs[i].append(j)
            nbrs[j].append(i)
        return [sorted(n) for n in nbrs]

    @cached_property
    def face_neighbors(self):
        """Edge-adjacent faces, one list per face (ascending ids)."""
        out = [[] for _ in range(self.n_faces)]
        for f0, f1 in self.edge_faces.tolist():
            if f0 >= 0 and f1 >= 0:
                out[f0].append(f1)
                out[f1].append(f0)
        return [sorted(o) for o in out]

    @cached_property
    def vertex_faces(self):
        out = [[] for _ in range(self.n_vertices)]
        for f, tri in enumerate(self.faces.tolist()):
            for v in tri:
                out[v].append(f)
        return out

    @cached_property
    def vertex_fans(self):
        """Counterclockwise corner fans ``[(face, corner), ...]`` per vertex.

        Interior fans start at the face containing the outgoing edge to the
        lowest-id neighbour; boundary fans start at the boundary.
        """
        he = self.halfedge_lookup
        fans = []
        for v in range(self.n_vertices):
            faces_v = self.vertex_faces[v]
            # outgoing half-edges of v with a face on their left
            outgoing = {}
            for f in faces_v:
                k = int(np.flatnonzero(self.faces[f] == v)[0])
                outgoing[int(self.faces[f][(k + 1) % 3])] = (f, k)
            heads = set(outgoing)
            # boundary start: an outgoing head w such that (w -> v) has no face,
            # i.e. no face has the corner ending at v from w
            incoming = {int(self.faces[f][(k + 2) % 3]) for f, k in outgoing.values()}
            starts = sorted(heads - incoming)
            if len(starts) > 1:
                raise NonManifoldError(f"non-manifold vertex {v}")
            w = starts[0] if starts else min(heads)
            fan = []
            while len(fan) <= len(faces_v):
                f, k = outgoing[w]
                fan.append((f, k))
                w = int(self.faces[f][(k + 2) % 3])
                if w not in outgoing or outgoing[w] == fan[0]:
                    break
            if len(fan) != len(faces_v):
                raise NonManifoldError(f"non-manifold vertex {v}")
            fans.append(fan)
        return fans

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.edges[self.boundary_edges])

    def barycenters(self):
        """Face barycentres in the embedding (requires positions)."""
        if self.positions is None:
            raise MeshError("mesh has no embedding")
        return self.positions[self.faces].mean(axis=1)

    def summary(self):
        return {
            "vertices": self.n_vertices,
            "edges": self.n_edges,
            "faces": self.n_faces,
            "euler_characteristic": self.euler_characteristic,
            "genus": self.genus,
            "boundary_loops": self.n_boundary_loops,
            "area": self.total_area,
        }

    def to_off(self):
        """Serialize to the OFF-like text format (positions required)."""
        if self.positions is None:
            raise MeshError("mesh has no embedding to export")
        buf = io.StringIO()
        buf.write(f"{self.n_vertices} {self.n_edges} {self.n_faces}\n")
        for x, y, z in self.positions:
            buf.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in self.faces:
            buf.write(f"3 {a} {b} {c}\n")
        return buf.getvalue()


class DiskMesh(SurfaceMesh):
    """Flat disk triangulation with a single boundary loop."""

    def __init__(self, faces, positions, center, radius, boundary_loop):
        super().__init__(faces, positions=positions, allow_boundary=True)
        self.center = int(center)
        self.radius = float(radius)
        self.boundary_loop = _readonly(np.asarray(boundary_loop, dtype=np.int64))
        if self.n_boundary_loops != 1:
            raise BoundaryError("disk must have exactly one boundary loop")
        r = np.linalg.norm(self.positions[self.boundary_loop] - self.positions[self.center], axis=1)
        if not np.allclose(r, self.radius, rtol=1e-9, atol=0):
            raise BoundaryError("boundary vertices are not at distance R from the centre")


# ----------------------------------------------------------------------
# generators

_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def make_icosphere(subdivisions, radius=1.0):
    """Subdivided icosahedron projected onto the sphere of given radius."""
    if subdivisions < 0 or int(subdivisions) != subdivisions:
        raise MeshError("subdivisions must be a non-negative integer")
    if not radius > 0:
        raise MeshError("radius must be positive")
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    faces = list(_ICO_FACES)
    for _ in range(int(subdivisions)):
        cache = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    pos = np.array(verts) * float(radius)
    return SurfaceMesh(np.array(faces), positions=pos)


def make_flat_torus(n, m, a=1.0, b=1.0):
    """Flat torus ``[0,a] x [0,b]`` with opposite sides glued.

    The grid has ``n`` cells along x and ``m`` along y; every cell is cut
    along its ``(i, j) -> (i+1, j+1)`` diagonal.  Stored positions are the
    (non-periodic) grid coordinates at z = 0; the metric comes from the
    periodic cell geometry.
    """
    if n < 3 or m < 3:
        raise MeshError("flat torus needs n >= 3 and m >= 3")
    if not (a > 0 and b > 0):
        raise MeshError("side lengths must be positive")
    hx, hy = a / n, b / m
    hd = math.hypot(hx, hy)

    def vid(i, j):
        return (i % n) + n * (j % m)

    faces, lengths = [], []
    for j in range(m):
        for i in range(n):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            faces.append((v00, v10, v11))
            lengths.append((hx, hy, hd))
            faces.append((v00, v11, v01))
            lengths.append((hd, hx, hy))
    ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="xy")
    pos = np.stack([ii.ravel() * hx, jj.ravel() * hy, np.zeros(n * m)], axis=1)
    mesh = SurfaceMesh(np.array(faces), face_lengths=np.array(lengths), n_vertices=n * m)
    mesh.positions = _readonly(pos)
    mesh.periodic = (float(a), float(b))
    return mesh


def make_disk(rings, R=1.0):
    """Concentric-ring triangulation of the flat disk of radius ``R``.

    Ring ``j`` carries ``6 j`` equally spaced vertices at radius ``j R / rings``;
    vertex 0 is the centre.
    """
    if rings < 1 or int(rings) != rings:
        raise MeshError("rings must be a positive integer")
    if not R > 0:
        raise MeshError("radius must be positive")
    rings = int(rings)
    pos = [(0.0, 0.0, 0.0)]
    ring_ids = [[0]]
    ring_ang = [[0.0]]
    for j in range(1, rings + 1):
        nj = 6 * j
        r = j * R / rings
        ang = [2 * math.pi * k / nj for k in range(nj)]
        ids = list(range(len(pos), len(pos) + nj))
        pos += [(r * math.cos(t), r * math.sin(t), 0.0) for t in ang]
        ring_ids.append(ids)
        ring_ang.append(ang)
    faces = []
    for j in range(1, rings + 1):
        inner, outer = ring_ids[j - 1], ring_ids[j]
        ia, oa = ring_ang[j - 1], ring_ang[j]
        if j == 1:
            for k in range(6):
                faces.append((0, outer[k], outer[(k + 1) % 6]))
            continue
        # zip the two rings by angle
        ni, no = len(inner), len(outer)
        p, q = 0, 0
        while p < ni or q < no:
            a_in = ia[p + 1] if p + 1 < ni else 2 * math.pi
            a_out = oa[q + 1] if q + 1 < no else 2 * math.pi
            if q < no and (p >= ni or a_out <= a_in):
                faces.append((inner[p % ni], outer[q % no], outer[(q + 1) % no]))
                q += 1
            else:
                faces.append((inner[p % ni], outer[q % no], inner[(p + 1) % ni]))
                p += 1
    return DiskMesh(np.array(faces), np.array(pos), center=0, radius=R,
                    boundary_loop=ring_ids[rings])


# ----------------------------------------------------------------------
# IO

def load_mesh(text):
    """Parse the OFF-like text format into a closed :class:`SurfaceMesh`.

    Format: ``V E F`` header, V lines ``x y z``, F lines ``3 i j k``.  An
    optional leading ``OFF`` keyword and ``#`` comments are accepted.  ``E``
    may be 0; otherwise it must equal the number of distinct edges.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    if lines and lines[0] == ["OFF"]:
        lines = lines[1:]
    if not lines:
        raise MeshFormatError("empty mesh file")
    try:
        nv, ne, nf = (int(x) for x in lines[0])
    except ValueError as exc:
        raise MeshFormatError("header must be 'V E F'") from exc
    if nv <= 0 or nf <= 0 or ne < 0:
        raise MeshFormatError("counts must be positive")
    if len(lines) != 1 + nv + nf:
        raise MeshFormatError(f"expected {nv} vertex and {nf} face lines, got {len(lines) - 1} lines")
    try:
        pos = np.array([[float(x) for x in ln] for ln in lines[1:1 + nv]])
        face_rows = [[int(x) for x in ln] for ln in lines[1 + nv:]]
    except ValueError as exc:
        raise MeshFormatError("non-numeric entry") from exc
    if pos.shape != (nv, 3):
        raise MeshFormatError("vertex lines must have 3 coordinates")
    if any(len(r) != 4 or r[0] != 3 for r in face_rows):
        raise MeshFormatError("face lines must be '3 i j k'")
    faces = np.array([r[1:] for r in face_rows])
    mesh = SurfaceMesh(faces, positions=pos)
    if ne not in (0, mesh.n_edges):
        raise MeshFormatError(f"header edge count {ne} != {mesh.n_edges}")
    return mesh


def read_mesh(path):
    with open(path, "rb") as fh:
        return load_mesh(fh.read())
