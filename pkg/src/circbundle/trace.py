"""Straightest-line tracing across a triangle mesh by edge unfolding."""

from __future__ import annotations

import heapq
import math

import numpy as np

from .bundle import TWO_PI, vertex_directions


class TraceError(ValueError):
    pass


def _rot(v, a):
    c, s = math.cos(a), math.sin(a)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _barycentric(P, x):
    a, b, c = P
    T = np.column_stack([b - a, c - a])
    l1, l2 = np.linalg.solve(T, x - a)
    return np.array([1.0 - l1 - l2, l1, l2])


def trace_from_vertex(mesh, v, direction, length, max_steps=100000):
    """Walk a straight line of given length from vertex ``v``.

    ``direction`` is an angle in the rescaled tangent frame of ``v`` (see
    :func:`circbundle.bundle.vertex_directions`).  Returns ``(face,
    barycentric coordinates)`` of the end point.
    """
    phi, scale = vertex_directions(mesh)
    F = mesh.faces
    psi = direction % TWO_PI
    fan = mesh.vertex_fans[v]
    start = None
    for f, k in fan:
        head = int(F[f, (k + 1) % 3])
        lo = phi[(v, head)]
        hi = lo + scale[v] * mesh.angles[f, k]
        if lo <= psi < hi or (f, k) == fan[-1]:
            start = (f, k, (psi - lo) / scale[v])
            if lo <= psi < hi:
                break
    f, k, alpha = start
    if alpha > mesh.angles[f, k] + 1e-12:
        raise TraceError("direction leaves the mesh at a boundary vertex")
    P = mesh.face_coords[f]
    x = P[k].copy()
    e = P[(k + 1) % 3] - P[k]
    d = _rot(e / np.linalg.norm(e), alpha)
    # the first exit is through the edge opposite corner k
    skip = {k, (k + 2) % 3}
    remaining = float(length)
    for _ in range(max_steps):
        P = mesh.face_coords[f]
        best_t, best_edge = math.inf, None
        near = (math.inf, None, None)
        for j in range(3):
            if j in skip:
                continue
            p, q = P[j], P[(j + 1) % 3]
            seg = q - p
            den = d[0] * (-seg[1]) - d[1] * (-seg[0])
            if abs(den) < 1e-300:
                continue
            rhs = p - x
            t = (rhs[0] * (-seg[1]) - rhs[1] * (-seg[0])) / den
            s = (d[0] * rhs[1] - d[1] * rhs[0]) / den
            if t > 1e-14 and -1e-12 <= s <= 1 + 1e-12 and t < best_t:
                best_t, best_edge = t, j
            elif t > -1e-12:
                miss = max(-s, s - 1.0)
                if miss < near[0]:
                    near = (miss, max(t, 0.0), j)
        if best_edge is None:
            # grazing a vertex: rounding pushed both exits just outside
            if near[2] is None or near[0] > 1e-6:
                raise TraceError("ray lost inside a face")
            best_t, best_edge = near[1], near[2]
        if remaining <= best_t:
            return f, _barycentric(P, x + remaining * d)
        remaining -= best_t
        x = x + best_t * d
        eid = int(mesh.face_edges[f, best_edge])
        g = [h for h in mesh.edge_faces[eid].tolist() if h != f and h >= 0]
        if not g:
            raise TraceError("ray reached the mesh boundary")
        g = g[0]
        vp, vq = int(F[f, best_edge]), int(F[f, (best_edge + 1) % 3])
        jp = int(np.flatnonzero(F[g] == vp)[0])
        jq = int(np.flatnonzero(F[g] == vq)[0])
        Pg = mesh.face_coords[g]
        src = P[(best_edge + 1) % 3] - P[best_edge]
        dst = Pg[jq] - Pg[jp]
        ang = math.atan2(dst[1], dst[0]) - math.atan2(src[1], src[0])
        x = Pg[jp] + _rot(x - P[best_edge], ang)
        d = _rot(d, ang)
        # entered through edge (q, p) of g
        skip = {jq} if (jq + 1) % 3 == jp else {jp}
        f = g
    raise TraceError("trace did not terminate")


def _virtual_source(A, B, C, da, db):
    """Distance at ``C`` from a planar wavefront known at ``A`` and ``B``.

    The source is placed where circles of radii ``da`` and ``db`` around
    ``A`` and ``B`` meet on the side away from ``C``; it is used only if the
    straight ray to ``C`` crosses segment ``AB``.
    """
    ab = B - A
    L = math.hypot(ab[0], ab[1])
    if da + db < L or abs(da - db) > L:
        return math.inf
    x = (da * da - db * db + L * L) / (2 * L)
    h = math.sqrt(max(da * da - x * x, 0.0))
    ex = ab / L
    ey = np.array([-ex[1], ex[0]])
    side = 1.0 if (C - A) @ ey > 0 else -1.0
    S = A + x * ex - side * h * ey
    # the ray S -> C must cross AB between its endpoints
    d = C - S
    den = d[0] * ab[1] - d[1] * ab[0]
    if abs(den) < 1e-300:
        return math.inf
    w = A - S
    t = (w[0] * ab[1] - w[1] * ab[0]) / den
    s = (w[0] * d[1] - w[1] * d[0]) / den
    if not (0.0 <= s <= 1.0 and 0.0 < t <= 1.0):
        return math.inf
    return math.hypot(d[0], d[1])


def geodesic_distances(mesh, vertex=None, face=None, barycentric=None):
    """Fast-marching distances from a vertex or from a point inside a face.

    Each accepted vertex updates the rest of its faces from a virtual point
    source unfolded into the face, falling back to edge paths when no
    source lies in view.  Exact for point sources on flat patches.
    """
    n = mesh.n_vertices
    dist = np.full(n, math.inf)
    done = np.zeros(n, dtype=bool)
    heap = []
    if vertex is not None:
        dist[int(vertex)] = 0.0
        heap.append((0.0, int(vertex)))
    else:
        b = np.full(3, 1.0 / 3.0) if barycentric is None else np.asarray(barycentric, float)
        P = mesh.face_coords[face]
        x = b @ P
        for k, v in enumerate(mesh.faces[face].tolist()):
            dist[v] = float(np.linalg.norm(P[k] - x))
            heap.append((dist[v], v))
        heapq.heapify(heap)
    F = mesh.faces
    coords = mesh.face_coords
    lengths = mesh.face_lengths
    vfaces = mesh.vertex_faces
    while heap:
        d, v = heapq.heappop(heap)
        if done[v] or d > dist[v]:
            continue
        done[v] = True
        for f in vfaces[v]:
            tri = F[f].tolist()
            k = tri.index(v)
            for step in (1, 2):
                c = tri[(k + step) % 3]
                if done[c]:
                    continue
                u = tri[(k + 3 - step) % 3]
                kc, ku = (k + step) % 3, (k + 3 - step) % 3
                # edge from v to c: corner k to k+1 is lengths[k]; k to k+2 is lengths[k+2]
                lvc = lengths[f, k] if step == 1 else lengths[f, (k + 2) % 3]
                cand = d + lvc
                if done[u]:
                    P = coords[f]
                    cand = min(cand, _virtual_source(P[k], P[ku], P[kc], d, dist[u]))
                if cand < dist[c]:
                    dist[c] = cand
                    heapq.heappush(heap, (cand, c))
    return dist
