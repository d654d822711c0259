"""Search for low-volume sections and analyse their singularities.

The continuous and combinatorial parts are kept apart: the inner descent
moves vertex angles with every face index frozen, while the outer search
changes where the singularities sit.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, dijkstra
from scipy.sparse.linalg import splu

from . import energy as en
from .bundle import TWO_PI, Connection, face_edge_operator, min_norm_solver, wrap
from .section import DiscreteSection, singular_clusters, singular_faces
from .trace import TraceError, geodesic_distances, trace_from_vertex

logger = logging.getLogger(__name__)


class SolverError(ValueError):
    pass


@dataclass
class SolverParams:
    max_iter: int = 400
    tol: float = 1e-7
    shrink: float = 0.5
    move_budget: int = 24
    multistart: int = 8
    seed: int = 0
    eps_schedule: tuple = (1e-3, 1e-4, 1e-5, 1e-6)
    depth: int = en.DEFAULT_DEPTH
    armijo: float = 1e-4

    def __post_init__(self):
        self.eps_schedule = tuple(float(e) for e in self.eps_schedule)
        for name in ("max_iter", "move_budget", "multistart"):
            if int(getattr(self, name)) < 0:
                raise SolverError(f"{name} must be non-negative")
        if not (0 < self.tol < 1):
            raise SolverError("tolerance must lie in (0, 1)")
        if not (0 < self.shrink < 1):
            raise SolverError("line-search shrink factor must lie in (0, 1)")
        if any(e <= 0 for e in self.eps_schedule) or not self.eps_schedule:
            raise SolverError("smoothing schedule must be positive")
        if self.depth < 0:
            raise SolverError("refinement depth must be non-negative")


@dataclass
class TopologyReport:
    genus: int
    singularity_count: int
    indices: list
    euler_characteristic: int
    orientable: bool

    def to_dict(self):
        return asdict(self)


@dataclass
class HConeReport:
    singularity: int
    lambdas: list
    profiles: list
    degree: int
    residuals: list
    radii: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["profiles"] = [list(map(float, p)) for p in self.profiles]
        return d


# ----------------------------------------------------------------------
# singularity placement

def _face_graph(mesh):
    cache = mesh.__dict__.setdefault("_circbundle_cache", {})
    if "facegraph" not in cache:
        ef = mesh.edge_faces
        ok = (ef[:, 0] >= 0) & (ef[:, 1] >= 0)
        a, b = ef[ok, 0], ef[ok, 1]
        n = mesh.n_faces
        cache["facegraph"] = sp.csr_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    return cache["facegraph"]


def face_hops(mesh, f):
    """Dual-graph hop distance from face ``f`` to every face."""
    return dijkstra(_face_graph(mesh), directed=False, indices=int(f), unweighted=True)


def cluster_faces(mesh, f, count):
    """``count`` faces forming one vertex-connected cluster seeded at ``f``.

    Each new face touches the previous one in a single vertex and is the
    one across that vertex from it (farthest in hops); faces sharing an edge
    with a chosen face are excluded so every face can carry one turn.
    """
    chosen = [int(f)]
    blocked = set(chosen) | set(mesh.face_neighbors[f])
    while len(chosen) < count:
        last = chosen[-1]
        hops = face_hops(mesh, last)
        cands = set()
        for v in mesh.faces[last].tolist():
            cands.update(mesh.vertex_faces[v])
        cands = sorted(c for c in cands if c not in blocked)
        if not cands:
            raise SolverError(f"cannot grow a singular cluster around face {f}")
        far = max(hops[c] for c in cands)
        nxt = min(c for c in cands if hops[c] == far)
        chosen.append(nxt)
        blocked |= {nxt} | set(mesh.face_neighbors[nxt])
    return chosen


def face_targets(mesh, points):
    """Per-face target indices for ``points = [(face, sign), ...]``.

    A point of sign ``s`` is an index ``2 s`` singularity spread over two
    faces of index ``s``.
    """
    targets = np.zeros(mesh.n_faces, dtype=np.int64)
    seen = set()
    for f, sgn in points:
        if sgn not in (1, -1):
            raise SolverError("point signs must be +1 or -1")
        for g in cluster_faces(mesh, f, 2):
            if g in seen:
                raise SolverError("singular points overlap")
            seen.add(g)
            targets[g] += sgn
    return targets


def _clusters_separated(mesh, targets):
    """Distinct singular clusters must be at least two edges apart."""
    clusters = singular_clusters(mesh, targets)
    vsets = [set(mesh.faces[c].reshape(-1).tolist()) for c in clusters]
    nbrs = mesh.vertex_neighbors
    for i in range(len(vsets)):
        ring = set(vsets[i])
        for v in vsets[i]:
            ring.update(nbrs[v])
        for j in range(i + 1, len(vsets)):
            if ring & vsets[j]:
                return False
    return all(abs(int(targets[c].sum())) == 2 for c in clusters)


def cluster_separation(mesh, faces_a, faces_b):
    """Fewest mesh edges between any vertex of one face set and any of the other."""
    src = np.unique(mesh.faces[list(faces_a)])
    dst = set(np.unique(mesh.faces[list(faces_b)]).tolist())
    seen = set(src.tolist())
    frontier = list(seen)
    hops = 0
    while frontier:
        if seen & dst:
            return hops
        hops += 1
        nxt = []
        for v in frontier:
            for w in mesh.vertex_neighbors[v]:
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return math.inf


def _spanning_tree(mesh):
    cache = mesh.__dict__.setdefault("_circbundle_cache", {})
    if "tree" not in cache:
        E = mesh.edges
        n = mesh.n_vertices
        A = sp.csr_matrix((np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(n, n))
        A = A + A.T
        A.sort_indices()
        order, pred = breadth_first_order(A, 0, directed=False, return_predecessors=True)
        cache["tree"] = (order, pred)
    return cache["tree"]


def integrate_one_form(mesh, form, theta0=0.0):
    """Integrate a per-edge 1-form (sorted orientation) along a BFS spanning tree."""
    order, pred = _spanning_tree(mesh)
    theta = np.zeros(mesh.n_vertices)
    theta[order[0]] = theta0
    for v in order[1:].tolist():
        u = int(pred[v])
        e, s = mesh.edge_id(u, v)
        theta[v] = theta[u] + s * form[e]
    return theta


def _bounded_form(mesh, b, iterations=60):
    """Solution of ``d x = b`` with every entry below pi, by reweighted least squares.

    Edges that exceed the bound get heavier weights, pushing the
    circulation onto their neighbours.
    """
    d = face_edge_operator(mesh)
    w = np.ones(mesh.n_edges)
    x = None
    pin = slice(1, None) if mesh.is_closed else slice(None)
    for _ in range(iterations):
        inv = sp.diags(1.0 / w)
        lap = (d @ inv @ d.T).tocsc()[pin, pin]
        y = np.zeros(mesh.n_faces)
        y[pin] = splu(lap).solve(b[pin])
        x = inv @ (d.T @ y)
        peak = np.abs(x).max()
        if peak < 0.9 * math.pi:
            break
        w *= 1.0 + (np.abs(x) / (0.8 * math.pi)) ** 4
    return x


def winding_form(mesh, conn, targets):
    """Edge 1-form whose face circulations realise ``targets``.

    The minimum-norm solution is used when it stays below pi on every edge
    (so wrapping leaves it unchanged); tight configurations fall back to a
    reweighted solve that flattens the peaks.
    """
    b = TWO_PI * np.asarray(targets, dtype=float) - conn.omega
    x = min_norm_solver(mesh).solve(b)
    if np.abs(x).max() < math.pi * (1 - 1e-9):
        return x
    return _bounded_form(mesh, b)


def initialize(mesh, conn: Connection, points, targets=None):
    """Section with prescribed singularities minimising the squared covariant differences.

    ``points`` is a list of ``(face, sign)`` pairs; their signed count times
    two must equal the Euler number.  ``targets`` may override the per-face
    indices directly (used for clusters of other shapes).
    """
    points = [(int(f), int(s)) for f, s in points]
    if targets is None:
        if len({f for f, _ in points}) != len(points):
            raise SolverError("duplicate singular faces")
        if 2 * sum(s for _, s in points) != conn.euler_number:
            raise SolverError(
                f"signed singularity count x 2 = {2 * sum(s for _, s in points)} "
                f"!= Euler number {conn.euler_number}")
        targets = face_targets(mesh, points)
    targets = np.asarray(targets, dtype=np.int64)
    if int(targets.sum()) != conn.euler_number:
        raise SolverError("target indices do not sum to the Euler number")
    omega = winding_form(mesh, conn, targets)
    theta = integrate_one_form(mesh, conn.rho + omega)
    sec = DiscreteSection(conn, theta)
    if not np.array_equal(sec.face_indices(), targets):
        raise SolverError("prescribed singularities cannot be realised on this mesh")
    return sec


# ----------------------------------------------------------------------
# inner descent

def _preconditioner(mesh):
    cache = mesh.__dict__.setdefault("_circbundle_cache", {})
    if "precond" not in cache:
        n = mesh.n_vertices
        G = mesh.hat_gradients
        A = mesh.areas
        rows, cols, vals = [], [], []
        for i in range(3):
            for j in range(3):
                rows.append(mesh.faces[:, i])
                cols.append(mesh.faces[:, j])
                vals.append(A * np.einsum("fd,fd->f", G[:, i], G[:, j]))
        L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
        mass = np.bincount(mesh.faces.reshape(-1), weights=np.repeat(A / 3, 3), minlength=n)
        P = L + sp.diags(1e-2 * mass)
        cache["precond"] = splu(P.tocsc())
    return cache["precond"]


@dataclass
class InnerResult:
    section: DiscreteSection
    energy: float
    iterations: int
    converged: bool
    trace: list


def _descend(section, functional, params, trace):
    mesh = section.mesh
    lu = _preconditioner(mesh)
    frozen = section.face_indices().copy()
    theta = section.theta.astype(float)
    E, g = en.energy_and_gradient(section, functional, params.depth)
    trace.append(E)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        d = -lu.solve(g)
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -float(g @ g)
        if slope == 0:
            converged = True
            break
        t = min(1.0, 2.0 * step)
        accepted = None
        while t > 1e-14:
            trial = section.with_theta(theta + t * d)
            if np.array_equal(trial.face_indices(), frozen):
                Et = en.energy(trial, functional, params.depth)
                if Et <= E + params.armijo * t * slope:
                    accepted = trial
                    break
            t *= params.shrink
        if accepted is None:
            converged = True
            break
        step = t
        prev = E
        section = accepted
        theta = section.theta.astype(float)
        E, g = en.energy_and_gradient(section, functional, params.depth)
        trace.append(E)
        if (prev - E) <= params.tol * abs(prev):
            converged = True
            break
    return section, E, it, converged


def minimize_inner(section, functional=en.VOLUME, params=None, trace=None):
    """Backtracking descent on vertex angles with the index field frozen.

    Steps use the cotangent-Laplacian preconditioned gradient.  A trial step
    that changes any face index, or fails the Armijo test, is shrunk.  For
    the twisting functional the smoothing parameter is annealed through
    ``params.eps_schedule``.
    """
    params = SolverParams() if params is None else params
    trace = [] if trace is None else trace
    if functional.kind == "twisting":
        out = None
        for eps in params.eps_schedule:
            out = _descend(section, en.smoothed_twisting(eps), params, trace)
            section = out[0]
        sec, E, it, conv = out
    else:
        sec, E, it, conv = _descend(section, functional, params, trace)
    if not conv:
        logger.info("inner descent hit the iteration budget (%d)", params.max_iter)
    return InnerResult(sec, E, it, conv, trace)


# ----------------------------------------------------------------------
# outer search

def topology_report(section) -> TopologyReport:
    recs = singular_faces(section)
    g = section.mesh.genus
    n = len(recs)
    return TopologyReport(g, n, [r.index for r in recs], 2 - 2 * g - n, n == 0)


def _farthest_faces(mesh, rng, count):
    if count == 0:
        return []
    chosen = [int(rng.integers(mesh.n_faces))]
    best = face_hops(mesh, chosen[0])
    while len(chosen) < count:
        nxt = int(np.argmax(best))
        chosen.append(nxt)
        best = np.minimum(best, face_hops(mesh, nxt))
    return chosen


def _shortest_face_path(mesh, a, b):
    prev = {a: None}
    q = deque([a])
    while q:
        f = q.popleft()
        if f == b:
            break
        for g in mesh.face_neighbors[f]:
            if g not in prev:
                prev[g] = f
                q.append(g)
    path = [b]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


@dataclass
class _State:
    points: list
    section: DiscreteSection
    energy: float


@dataclass
class StartSummary:
    start: int
    initial_points: list
    final_points: list
    volume: float
    singularities: int
    accepted_moves: int
    evaluated_moves: int


class SearchResult:
    """Best section found plus every start's summary; unpacks as ``(section, topology)``."""

    def __init__(self, section, topology, volume, starts, trace):
        self.section = section
        self.topology = topology
        self.volume = volume
        self.starts = starts
        self.trace = trace

    def __iter__(self):
        yield self.section
        yield self.topology


class _Search:
    def __init__(self, mesh, conn, params, trace):
        self.mesh = mesh
        self.conn = conn
        self.params = params
        self.trace = trace
        self._forms = {}

    def targets(self, points):
        return face_targets(self.mesh, points)

    def relax(self, section):
        res = minimize_inner(section, en.VOLUME, self.params, self.trace)
        return res.section, res.energy

    def realise(self, state, points):
        """Section for ``points``, warm-started from ``state`` when possible."""
        try:
            tnew = self.targets(points)
        except SolverError:
            return None
        if not _clusters_separated(self.mesh, tnew):
            return None
        told = self.targets(state.points)
        delta = tnew - told
        if np.any(delta):
            form = min_norm_solver(self.mesh).solve(TWO_PI * delta.astype(float))
            theta = state.section.theta + integrate_one_form(self.mesh, form)
            sec = state.section.with_theta(theta)
            if np.array_equal(sec.face_indices(), tnew):
                return sec
        try:
            return initialize(self.mesh, self.conn, points)
        except SolverError:
            return None

    def candidates(self, state, rng):
        mesh = self.mesh
        pts = state.points
        out = []
        for i, (f, s) in enumerate(pts):
            for g in mesh.face_neighbors[f]:
                new = list(pts)
                new[i] = (g, s)
                out.append(("relocate", new))
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if pts[i][1] == pts[j][1]:
                    out.append(("merge-split", (i, j)))
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if pts[i][1] != pts[j][1]:
                    out.append(("delete-pair", [p for k, p in enumerate(pts) if k not in (i, j)]))
        a = int(rng.integers(mesh.n_faces))
        hops = face_hops(mesh, a)
        ring = np.flatnonzero(hops == 6)
        if len(ring):
            out.append(("add-pair", pts + [(a, 1), (int(ring[0]), -1)]))
        return out

    def merge_split(self, state, i, j):
        """Merge two same-sign points at their midpoint, then re-split along the best direction."""
        mesh = self.mesh
        (fi, s), (fj, _) = state.points[i], state.points[j]
        path = _shortest_face_path(mesh, fi, fj)
        m = path[len(path) // 2]
        hops = face_hops(mesh, m)
        ring = np.flatnonzero(hops == 3).tolist()
        rest = [p for k, p in enumerate(state.points) if k not in (i, j)]
        best = None
        for a in ring:
            ha = face_hops(mesh, a)
            b = min(ring, key=lambda c: (-ha[c], c))
            if b <= a:
                continue
            pts = rest + [(a, s), (b, s)]
            sec = self.realise(state, pts)
            if sec is None:
                continue
            E = en.volume(sec, self.params.depth)
            if best is None or E < best[0]:
                best = (E, pts, sec)
        if best is None:
            return None
        return best[1], best[2]

    def evaluate(self, state, move, rng):
        kind, arg = move
        if kind == "merge-split":
            out = self.merge_split(state, *arg)
            if out is None:
                return None
            pts, sec = out
        else:
            pts = arg
            sec = self.realise(state, pts)
            if sec is None:
                return None
        sec, E = self.relax(sec)
        return _State(pts, sec, E)

    def run_start(self, k, rng):
        e = self.conn.euler_number
        sign = 1 if e > 0 else -1
        faces = _farthest_faces(self.mesh, rng, abs(e) // 2)
        points = [(f, sign) for f in faces]
        sec = initialize(self.mesh, self.conn, points)
        sec, E = self.relax(sec)
        state = _State(points, sec, E)
        budget = self.params.move_budget
        accepted = evaluated = 0
        while budget > 0:
            improved = False
            for move in self.candidates(state, rng):
                if budget <= 0:
                    break
                budget -= 1
                evaluated += 1
                new = self.evaluate(state, move, rng)
                if new is None:
                    continue
                if new.energy < state.energy - self.params.tol * abs(state.energy):
                    logger.debug("start %d: accepted %s, volume %.12g", k, move[0], new.energy)
                    state = new
                    accepted += 1
                    improved = True
                    break
            if not improved:
                break
        summary = StartSummary(k, points, state.points, state.energy,
                               len(singular_faces(state.section)), accepted, evaluated)
        return state, summary


def _run_one(mesh, conn, params, k):
    trace = []
    search = _Search(mesh, conn, params, trace)
    state, summary = search.run_start(k, np.random.default_rng([params.seed, k]))
    return state.points, state.section.theta, state.energy, summary, trace


def outer_search(mesh, conn: Connection, params=None, workers=1) -> SearchResult:
    """Multistart search over singularity placements.

    Each start places ``|e|/2`` points of the sign of ``e`` by farthest-point
    sampling from a random face, relaxes, then tries moves (relocate to an
    adjacent face, merge and re-split a same-sign pair, delete or add a
    +/- pair).  A move is kept only if the relaxed volume drops by more than
    the relative tolerance.  Only configurations whose clusters all have
    index +/-2 and lie two edges apart are ever evaluated.

    Starts are independent; ``workers > 1`` runs them in separate
    processes.  The winner is the lowest volume, ties going to the lower
    start index, so the result does not depend on ``workers``.
    """
    params = SolverParams() if params is None else params
    e = conn.euler_number
    if e % 2:
        raise SolverError(f"Euler number must be even, got {e}")
    starts = list(range(max(1, params.multistart)))
    if workers > 1 and len(starts) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, *zip(*[(mesh, conn, params, k) for k in starts])))
    else:
        runs = [_run_one(mesh, conn, params, k) for k in starts]
    best = None
    trace = []
    for points, theta, E, summary, tr in runs:
        trace.extend(tr)
        if best is None or E < best[2]:
            best = (points, theta, E)
    section = DiscreteSection(conn, best[1])
    recs = singular_faces(section)
    if any(abs(r.index) != 2 for r in recs):
        raise SolverError("search produced a singularity of index other than +/-2")
    return SearchResult(section, topology_report(section), best[2],
                        [r[3] for r in runs], trace)


# ----------------------------------------------------------------------
# h-cones

def _sample_values(section, dt, face, bary, gauge_vertex):
    """Interpolated section value at a point, in the gauge of ``gauge_vertex``."""
    tri = section.mesh.faces[face].tolist()
    k = tri.index(gauge_vertex)
    d = dt[face]
    lifts = np.array([
        [0.0, d[0], -d[2]],
        [-d[0], 0.0, d[1]],
        [d[2], -d[1], 0.0],
    ])[k]
    return section.theta[gauge_vertex] + float(bary @ lifts)


def enclosed_curvature(section, center, radius):
    """Connection curvature inside the geodesic disk of given radius around a vertex."""
    mesh = section.mesh
    dist = en._distances_from(mesh, center_vertex=center)
    frac = en._sublevel_fraction(dist[mesh.faces], radius)
    return float(section.conn.omega @ frac)


def circle_profile(section, center, radius, n_samples=256, max_samples=8192,
                   radial_gauge=False):
    """Unwrapped section values on the geodesic circle of given radius around a vertex.

    Consecutive samples are compared in the gauge of a vertex their faces
    share, so no transport along the circle is needed.  Sampling doubles
    until every consecutive pair of faces shares a vertex.

    Values carried around the circle include the holonomy of the enclosed
    curvature, which vanishes as the circle shrinks.  With
    ``radial_gauge=True`` that drift is removed by spreading the enclosed
    curvature evenly over the angle (exact for isotropic curvature).
    """
    mesh = section.mesh
    idx = section.face_indices()
    dt = en.corrected_differences(section)
    n = n_samples
    while n <= max_samples:
        pts = []
        for j in range(n):
            f, b = trace_from_vertex(mesh, center, TWO_PI * (j + 0.5) / n, radius)
            if idx[f] != 0:
                raise SolverError("sampling circle crosses a singular face")
            pts.append((f, b))
        ok = True
        diffs = np.empty(n)
        for j in range(n):
            (f0, b0), (f1, b1) = pts[j], pts[(j + 1) % n]
            common = sorted(set(mesh.faces[f0].tolist()) & set(mesh.faces[f1].tolist()))
            if not common:
                ok = False
                break
            w = common[0]
            diffs[j] = float(wrap(_sample_values(section, dt, f1, b1, w)
                                  - _sample_values(section, dt, f0, b0, w)))
        if ok:
            f0, b0 = pts[0]
            g0 = _sample_values(section, dt, f0, b0, int(mesh.faces[f0][0]))
            prof = g0 + np.concatenate([[0.0], np.cumsum(diffs)])
            psi = TWO_PI * np.arange(n + 1) / n
            if radial_gauge:
                prof = prof + enclosed_curvature(section, center, radius) * psi / TWO_PI
            return prof
        n *= 2
    raise SolverError("could not resolve the sampling circle")


def fit_degree(profile):
    """Integer ``k`` and constant minimising the RMS of ``g(psi) - k psi - c``."""
    n = len(profile) - 1
    g = np.asarray(profile[:-1])
    psi = TWO_PI * np.arange(n) / n
    k0 = int(round((profile[-1] - profile[0]) / TWO_PI))
    best = None
    for k in (k0, k0 - 1, k0 + 1):
        r = g - k * psi
        rms = float(np.sqrt(np.mean((r - r.mean()) ** 2)))
        if best is None or rms < best[1] - 1e-15:
            best = (k, rms)
    return best


def extract_hcone(section, singularity, lambdas, R, n_samples=256, center=None,
                  radial_gauge=False):
    """Blow up the section at a singularity (or a plain vertex) by horizontal dilation.

    For each ``lambda`` the section is read on the circle of radius
    ``R / lambda`` around the hub vertex; after dilation by ``lambda`` this
    is the boundary circle of radius ``R`` of the stretched section.  The
    unwrapped profile is fitted by ``k psi + c`` with integer ``k``.
    """
    mesh = section.mesh
    lambdas = [float(l) for l in lambdas]
    if any(l < 1 for l in lambdas) or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise SolverError("lambda list must be increasing and >= 1")
    idx = section.face_indices()
    if center is None:
        center = singularity.hub
        own = set(singularity.faces)
    else:
        own = set()
        for c in singular_clusters(mesh, idx):
            if int(center) in mesh.faces[c].reshape(-1):
                own.update(int(f) for f in c)
    dist = geodesic_distances(mesh, vertex=int(center))
    if not mesh.is_closed and dist[mesh.boundary_vertices].min() <= R:
        raise SolverError("disk of radius R reaches the mesh boundary")
    for f in np.flatnonzero(idx).tolist():
        if f not in own and dist[mesh.faces[f]].min() < R:
            raise SolverError("another singular face lies within distance R")
    profiles, residuals, degrees = [], [], []
    for lam in lambdas:
        try:
            prof = circle_profile(section, int(center), R / lam, n_samples,
                                      radial_gauge=radial_gauge)
        except TraceError as exc:
            raise SolverError(str(exc)) from exc
        k, rms = fit_degree(prof)
        profiles.append(prof[:-1])
        residuals.append(rms)
        degrees.append(k)
    return HConeReport(
        singularity=int(singularity.face) if singularity is not None else -1,
        lambdas=lambdas,
        profiles=profiles,
        degree=int(degrees[-1]),
        residuals=residuals,
        radii=[R / l for l in lambdas],
    )


def regularity_check(section, tolerance=3.0, floor=None):
    """Index-0 faces whose gradient exceeds ``tolerance`` x the 99th percentile.

    Faces sharing a vertex with a cluster of nonzero net index are skipped:
    their large gradient is the 1/r profile of the singularity itself.
    Neutral clusters (a +/- pair collapsed together) are artifacts and
    their surroundings are checked.  Gradients below ``floor`` (default: a
    thousandth of a turn across the surface) are never flagged.
    """
    mesh = section.mesh
    idx = section.face_indices()
    near = np.zeros(mesh.n_faces, dtype=bool)
    for c in singular_clusters(mesh, idx):
        if int(idx[c].sum()) == 0:
            continue
        for v in np.unique(mesh.faces[c]).tolist():
            near[mesh.vertex_faces[v]] = True
    regular = np.flatnonzero((idx == 0) & ~near)
    if len(regular) == 0:
        return []
    g = en.gradient_norms(section)[regular]
    p99 = float(np.percentile(g, 99))
    if floor is None:
        floor = 1e-3 * TWO_PI / math.sqrt(mesh.total_area)
    return regular[(g > tolerance * p99) & (g > floor)].tolist()
