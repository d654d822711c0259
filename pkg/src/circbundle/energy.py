"""Area-type functionals of sections and their exact discrete gradients.

All three functionals share the integrand ``sqrt(a^2 + s^2 |grad u|^2)``
integrated over the surface, with ``s = L / 2 pi`` the fiber scale:

* volume: ``a = 1``
* stretched volume: ``a = 1 / lambda``
* twisting: ``a = 0`` (``a = eps`` when a smooth gradient is needed)

On a face with zero index the section is linear in a local lift.  Faces
with nonzero index are subdivided; new interior values are the argument of
the discrete harmonic extension of ``exp(i u)`` from the face boundary,
and each sub-triangle that still winds is integrated with the exact
point-vortex profile over the disk of equal area.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .bundle import TWO_PI, wrap
from .section import DiscreteSection, singular_faces
from .trace import geodesic_distances

DEFAULT_DEPTH = 4


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class Functional:
    """Which functional to differentiate: ``volume``, ``stretched`` or ``twisting``."""

    kind: str = "volume"
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("volume", "stretched", "twisting"):
            raise EnergyError(f"unknown functional {self.kind!r}")
        if self.kind == "stretched" and self.param < 1:
            raise EnergyError("stretch factor must be >= 1")
        if self.kind == "twisting" and not self.param > 0:
            raise EnergyError("twisting needs a positive smoothing parameter")

    @property
    def offset(self):
        if self.kind == "volume":
            return 1.0
        if self.kind == "stretched":
            return 1.0 / self.param
        return self.param


VOLUME = Functional("volume")


def stretched(lam):
    return Functional("stretched", float(lam))


def smoothed_twisting(eps=1e-3):
    return Functional("twisting", float(eps))


# ----------------------------------------------------------------------
# point-vortex integral

def vortex_disk_integral(a, c, rho):
    """``int_{|x|<rho} sqrt(a^2 + c^2/|x|^2) dA`` in closed form."""
    if c == 0:
        return math.pi * rho * rho * a
    if a == 0:
        return TWO_PI * c * rho
    q = math.sqrt(a * a * rho * rho + c * c)
    return math.pi * (rho * q + (c * c / a) * math.asinh(a * rho / c))


# ----------------------------------------------------------------------
# singular-face refinement

class FaceRefinement:
    """Uniform ``n x n`` subdivision of one triangle with a harmonic extension operator."""

    def __init__(self, corners, depth):
        n = 2 ** int(depth)
        self.n = n
        a, b, c = (np.asarray(p, dtype=float) for p in corners)
        ij = [(i, j) for j in range(n + 1) for i in range(n + 1 - j)]
        index = {p: k for k, p in enumerate(ij)}
        ij = np.array(ij)
        self.points = a + np.outer(ij[:, 0] / n, b - a) + np.outer(ij[:, 1] / n, c - a)
        tris = []
        for j in range(n):
            for i in range(n - j):
                tris.append((index[(i, j)], index[(i + 1, j)], index[(i, j + 1)]))
                if i + j + 1 < n:
                    tris.append((index[(i + 1, j)], index[(i + 1, j + 1)], index[(i, j + 1)]))
        self.tris = np.array(tris)
        P = self.points[self.tris]
        e0, e1 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        self.areas = 0.5 * (e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0])
        opp = np.roll(P, -1, axis=1) - np.roll(P, 1, axis=1)
        self.hat = np.stack([-opp[..., 1], opp[..., 0]], axis=-1) / (2 * self.areas)[:, None, None]

        # lifted boundary values are linear in the three corrected differences
        i, j = ij[:, 0], ij[:, 1]
        on_ab = j == 0
        on_bc = (i + j == n) & ~on_ab
        on_ca = (i == 0) & ~on_ab & ~on_bc
        boundary = on_ab | on_bc | on_ca
        C = np.zeros((len(ij), 3))
        C[on_ab, 0] = i[on_ab] / n
        C[on_bc, 0] = 1.0
        C[on_bc, 1] = j[on_bc] / n
        C[on_ca, 0] = 1.0
        C[on_ca, 1] = 1.0
        C[on_ca, 2] = (n - j[on_ca]) / n
        self.bnd = np.flatnonzero(boundary)
        self.inn = np.flatnonzero(~boundary)
        self.C = C[self.bnd]

        # cotan Laplacian of the sub-mesh
        nv = len(ij)
        rows, cols, vals = [], [], []
        for k in range(3):
            p, q, r = P[:, k], P[:, (k + 1) % 3], P[:, (k + 2) % 3]
            u, v = q - p, r - p
            cot = (u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]) / (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
            vi, vj = self.tris[:, (k + 1) % 3], self.tris[:, (k + 2) % 3]
            rows += [vi, vj, vi, vj]
            cols += [vj, vi, vi, vj]
            vals += [-0.5 * cot, -0.5 * cot, 0.5 * cot, 0.5 * cot]
        L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nv, nv)).toarray()
        if len(self.inn):
            self.H = -np.linalg.solve(L[np.ix_(self.inn, self.inn)], L[np.ix_(self.inn, self.bnd)])
        else:
            self.H = np.zeros((0, len(self.bnd)))

    def evaluate(self, dt, a, s, want_grad):
        """Energy of the refined face for corrected differences ``dt``.

        Returns ``(energy, twisting_part, d energy / d dt)``.
        """
        uB = self.C @ dt
        zB = np.exp(1j * uB)
        zI = self.H @ zB
        u = np.empty(len(self.points))
        u[self.bnd] = uB
        u[self.inn] = np.angle(zI)
        T = self.tris
        w = wrap(u[np.roll(T, -1, axis=1)] - u[T])
        idx = np.rint(w.sum(axis=1) / TWO_PI).astype(int)
        reg = idx == 0
        lift = np.stack([np.zeros(len(T)), w[:, 0], -w[:, 2]], axis=1)
        g = np.einsum("tk,tkd->td", lift, self.hat)
        gn2 = np.einsum("td,td->t", g, g)
        root = np.sqrt(a * a + s * s * gn2)
        energy = float(np.sum(self.areas[reg] * root[reg]))
        twist = float(np.sum(self.areas[reg] * s * np.sqrt(gn2[reg])))
        for t in np.flatnonzero(~reg):
            rho = math.sqrt(self.areas[t] / math.pi)
            c = s * abs(int(idx[t]))
            energy += vortex_disk_integral(a, c, rho)
            twist += TWO_PI * c * rho
        if not want_grad:
            return energy, twist, None
        coef = np.where(reg, self.areas * s * s / root, 0.0)
        per_corner = coef[:, None] * np.einsum("td,tkd->tk", g, self.hat)
        gu = np.bincount(T.reshape(-1), weights=per_corner.reshape(-1), minlength=len(u))
        grad = self.C.T @ gu[self.bnd]
        if len(self.inn):
            du = np.real((self.H @ (zB[:, None] * self.C)) / zI[:, None])
            grad = grad + du.T @ gu[self.inn]
        return energy, twist, grad


def _refinement(mesh, f, depth):
    cache = mesh.__dict__.setdefault("_circbundle_cache", {})
    key = ("refine", int(f), int(depth))
    if key not in cache:
        cache[key] = FaceRefinement(mesh.face_coords[f], depth)
    return cache[key]


# ----------------------------------------------------------------------
# core evaluation

def corrected_differences(section):
    """Oriented face-edge differences with the face curvature shared out evenly.

    Rows sum to ``2 pi * face_index``, so index-0 rows are the differences
    of a single linear function.
    """
    mesh = section.mesh
    d = section.edge_differences()
    D = mesh.face_edge_sign * d[mesh.face_edges]
    return D + section.conn.omega[:, None] / 3.0


def _linear_gradients(hat, dt):
    lift = np.stack([np.zeros(len(dt)), dt[:, 0], -dt[:, 2]], axis=1)
    return np.einsum("fk,fkd->fd", lift, hat)


def _evaluate(section, a, depth, want_grad):
    mesh = section.mesh
    s = section.conn.fiber_scale
    idx = section.face_indices()
    dt = corrected_differences(section)
    g = _linear_gradients(mesh.hat_gradients, dt)
    gn2 = np.einsum("fd,fd->f", g, g)
    root = np.sqrt(a * a + s * s * gn2)
    per_face = mesh.areas * root
    twist_face = mesh.areas * s * np.sqrt(gn2)
    sing = np.flatnonzero(idx)
    grad = None
    if want_grad:
        coef = mesh.areas * s * s / root
        coef[sing] = 0.0
        per_corner = coef[:, None] * np.einsum("fd,fkd->fk", g, mesh.hat_gradients)
        grad = np.bincount(mesh.faces.reshape(-1), weights=per_corner.reshape(-1),
                           minlength=mesh.n_vertices)
    for f in sing.tolist():
        if depth == 0:
            rho = math.sqrt(mesh.areas[f] / math.pi)
            c = s * abs(int(idx[f]))
            per_face[f] = vortex_disk_integral(a, c, rho)
            twist_face[f] = TWO_PI * c * rho
            continue
        ref = _refinement(mesh, f, depth)
        e, tw, gd = ref.evaluate(dt[f], a, s, want_grad)
        per_face[f] = e
        twist_face[f] = tw
        if want_grad:
            va, vb, vc = mesh.faces[f]
            grad[va] += gd[2] - gd[0]
            grad[vb] += gd[0] - gd[1]
            grad[vc] += gd[1] - gd[2]
    return per_face, twist_face, grad


def face_energies(section, offset=1.0, depth=DEFAULT_DEPTH):
    return _evaluate(section, offset, depth, False)[0]


def covariant_gradient(section: DiscreteSection, f: int):
    """Gradient of the section on face ``f`` in that face's frame."""
    if section.face_indices()[f] != 0:
        raise EnergyError(f"face {f} is singular; gradient undefined")
    dt = corrected_differences(section)[f:f + 1]
    return _linear_gradients(section.mesh.hat_gradients[f:f + 1], dt)[0]


def gradient_norms(section):
    """Per-face ``|grad u|``; singular faces get the refined mean value."""
    mesh = section.mesh
    _, tw, _ = _evaluate(section, 0.0, DEFAULT_DEPTH, False)
    return tw / (mesh.areas * section.conn.fiber_scale)


def volume(section, depth=DEFAULT_DEPTH) -> float:
    return float(np.sum(_evaluate(section, 1.0, depth, False)[0]))


def twisting(section, depth=DEFAULT_DEPTH) -> float:
    return float(np.sum(_evaluate(section, 0.0, depth, False)[1]))


def stretched_volume(section, lam, depth=DEFAULT_DEPTH) -> float:
    if not lam >= 1:
        raise EnergyError("stretch factor must be >= 1")
    return float(np.sum(_evaluate(section, 1.0 / lam, depth, False)[0]))


def energy(section, functional=VOLUME, depth=DEFAULT_DEPTH) -> float:
    return float(np.sum(_evaluate(section, functional.offset, depth, False)[0]))


def energy_and_gradient(section, functional=VOLUME, depth=DEFAULT_DEPTH):
    per_face, _, grad = _evaluate(section, functional.offset, depth, True)
    return float(np.sum(per_face)), grad


def energy_gradient(section, functional=VOLUME, depth=DEFAULT_DEPTH):
    """Derivative of the discrete functional with respect to every vertex angle."""
    return energy_and_gradient(section, functional, depth)[1]


# ----------------------------------------------------------------------
# mass ratio

def _distances_from(mesh, center_face=None, center_vertex=None):
    if center_vertex is not None:
        return geodesic_distances(mesh, vertex=int(center_vertex))
    return geodesic_distances(mesh, face=int(center_face))


def _sublevel_fraction(dv, t):
    """Area fraction of a triangle where the linear interpolant of ``dv`` is below ``t``."""
    d = np.sort(dv, axis=1)
    d0, d1, d2 = d[:, 0], d[:, 1], d[:, 2]
    frac = np.zeros(len(d))
    frac[t >= d2] = 1.0
    lo = (t > d0) & (t <= d1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f_lo = (t - d0) ** 2 / ((d1 - d0) * (d2 - d0))
        f_hi = 1.0 - (d2 - t) ** 2 / ((d2 - d0) * (d2 - d1))
    frac[lo] = f_lo[lo]
    hi = (t > d1) & (t < d2)
    frac[hi] = f_hi[hi]
    return np.clip(np.nan_to_num(frac, nan=1.0), 0.0, 1.0)


def mass_ratio_profile(section, center_face=None, radii=(), center_vertex=None,
                       depth=DEFAULT_DEPTH):
    """Rows ``(t, f(t), f(t)/t)`` with ``f(t)`` the volume within distance ``t``.

    Distances are shortest edge-path lengths from the centre; faces cut by
    the level set are pro-rated by the area of their part inside.
    """
    if (center_face is None) == (center_vertex is None):
        raise EnergyError("give exactly one of center_face / center_vertex")
    radii = [float(t) for t in radii]
    if any(t <= 0 for t in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise EnergyError("radii must be positive and increasing")
    mesh = section.mesh
    dist = _distances_from(mesh, center_face, center_vertex)
    limit = dist[mesh.boundary_vertices].min() if not mesh.is_closed else dist.max()
    if radii and radii[-1] > limit + 1e-12:
        raise EnergyError(f"radius {radii[-1]} exceeds the available region ({limit})")
    per_face = face_energies(section, 1.0, depth)
    dv = dist[mesh.faces]
    out = []
    for t in radii:
        ft = float(np.sum(per_face * _sublevel_fraction(dv, t)))
        out.append((t, ft, ft / t))
    return out


# ----------------------------------------------------------------------
# report

@dataclass
class EnergyReport:
    volume: float
    twisting: float
    lambda_table: list = field(default_factory=list)
    singular_faces: int = 0
    refinement_depth: int = DEFAULT_DEPTH
    gradient_norms: np.ndarray | None = None

    def to_dict(self):
        d = asdict(self)
        d.pop("gradient_norms")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def energy_report(section, lambdas=(10.0, 100.0, 1000.0), depth=DEFAULT_DEPTH):
    per_face, tw, _ = _evaluate(section, 1.0, depth, False)
    table = [{"lambda": float(l), "value": stretched_volume(section, l, depth)} for l in lambdas]
    return EnergyReport(
        volume=float(np.sum(per_face)),
        twisting=float(np.sum(tw)),
        lambda_table=table,
        singular_faces=len(singular_faces(section)),
        refinement_depth=depth,
        gradient_norms=tw / (section.mesh.areas * section.conn.fiber_scale),
    )
