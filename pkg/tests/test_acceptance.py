"""Numbered acceptance criteria, one PASS/FAIL line each.

Every test records its verdict through ``record_acceptance`` before
asserting, so the summary lists failures too.
"""

import json
import math
import time

import numpy as np
import pytest

from circbundle import energy as en
from circbundle.bundle import make_connection, trivial_connection
from circbundle.cli import main
from circbundle.mesh import make_flat_torus, make_icosphere
from circbundle.oracle import (
    PONTRYAGIN_VOLUME,
    cone_closed_forms,
    cone_oracle,
    pontryagin_section,
    pontryagin_volume_quadrature,
)
from circbundle.section import DiscreteSection, singular_faces, total_index
from circbundle.solver import (
    SolverParams,
    cluster_faces,
    cluster_separation,
    extract_hcone,
    initialize,
    minimize_inner,
    outer_search,
)

from conftest import record_acceptance


def test_01_poincare_hopf(ico3):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    torus = make_flat_torus(12, 10, 1.0, 1.0)
    conns = [make_connection(ico3, e) for e in (0, 2, 4)]
    conns += [make_connection(torus, e) for e in (0, 2, -2)]
    bad = 0
    for i in range(1000):
        conn = conns[i % len(conns)]
        theta = rng.uniform(-4 * math.pi, 4 * math.pi, conn.mesh.n_vertices)
        if total_index(DiscreteSection(conn, theta)) != conn.euler_number:
            bad += 1
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10
    record_acceptance(1, "discrete Poincare-Hopf", ok, f"{bad} mismatches in 1000, {dt:.2f} s")
    assert ok


def test_02_flat_torus_global_section():
    t0 = time.perf_counter()
    t = make_flat_torus(16, 16, 1.0, 1.0)
    res = outer_search(t, trivial_connection(t), SolverParams())
    dt = time.perf_counter() - t0
    n = res.topology.singularity_count
    ok = n == 0 and abs(res.volume - 1.0) < 1e-6 and dt < 30
    record_acceptance(2, "e = 0 global section", ok,
                      f"{n} singularities, |V - 1| = {abs(res.volume - 1):.2e}, {dt:.2f} s")
    assert ok


def test_03_cone_energies():
    vol, tw = cone_oracle(2, 1.0, rings=(16, 32, 64))
    ev = abs(vol.discrete / vol.analytic - 1)
    et = abs(tw.discrete / tw.analytic - 1)
    ok = ev < 0.01 and et < 0.01 and vol.order >= 1 and tw.order >= 1
    record_acceptance(3, "cone energy convergence", ok,
                      f"volume err {ev:.2e} order {vol.order:.2f}; "
                      f"twisting err {et:.2e} order {tw.order:.2f}")
    assert ok


def test_04_pontryagin_benchmark(benchmark):
    mesh, conn, res, seconds = benchmark
    target = pontryagin_volume_quadrature(1.0)
    discrete = en.volume(pontryagin_section(mesh, 0, conn))
    idx = res.topology.indices
    ok = (len(idx) == 1 and abs(idx[0]) == 2 and res.volume <= 1.02 * target
          and res.volume <= 1.02 * discrete and seconds < 300)
    record_acceptance(4, "Pontryagin benchmark", ok,
                      f"indices {idx}, V = {res.volume:.4f}, 8pi quadrature {target:.4f}, "
                      f"discrete longitude field {discrete:.4f}, {seconds:.1f} s")
    assert abs(target - PONTRYAGIN_VOLUME) < 1e-8
    assert ok


def test_05_hcone_structure(benchmark):
    _, _, res, _ = benchmark
    rec = singular_faces(res.section)[0]
    rep = extract_hcone(res.section, rec, [2, 4, 8], 2.0)
    r = rep.residuals
    ok = abs(rep.degree) == 2 and r[-1] < 0.1 and all(b <= a for a, b in zip(r, r[1:]))
    record_acceptance(5, "h-cone degree and residuals", ok,
                      f"k = {rep.degree}, residuals " + ", ".join(f"{x:.4f}" for x in r))
    assert ok


def test_06_mass_ratio(benchmark):
    mesh, _, res, _ = benchmark
    rec = singular_faces(res.section)[0]
    h = float(mesh.edge_lengths.mean())
    rows = en.mass_ratio_profile(res.section, center_vertex=rec.hub,
                                 radii=np.linspace(2 * h, 8 * h, 8))
    q = np.array([row[2] for row in rows])
    rel = np.diff(q) / q[:-1]
    ok = len(q) == 8 and bool(np.all(rel >= -1e-3))
    record_acceptance(6, "mass-ratio monotonicity", ok, f"min relative step {rel.min():+.2e}")
    assert ok


def test_07_stretched_limit():
    rng = np.random.default_rng(7)
    meshes = [make_icosphere(2), make_flat_torus(8, 8)]
    worst_mono, worst_gap = -math.inf, -math.inf
    for i in range(20):
        m = meshes[i % 2]
        conn = make_connection(m, 2 * (i % 3))
        s = DiscreteSection(conn, rng.uniform(-math.pi, math.pi, m.n_vertices))
        tw = en.twisting(s)
        vals = [en.stretched_volume(s, lam) for lam in (1.0, 10.0, 100.0, 1000.0)]
        worst_mono = max(worst_mono, max(b - a for a, b in zip(vals, vals[1:])))
        for lam, v in zip((10.0, 100.0, 1000.0), vals[1:]):
            worst_gap = max(worst_gap, abs(v - tw) - m.total_area / lam)
    ok = worst_mono <= 1e-12 and worst_gap <= 1e-12
    record_acceptance(7, "stretched-functional limit", ok,
                      f"max increase {worst_mono:.2e}, max bound excess {worst_gap:.2e}")
    assert ok


def _fd(section, fn, h=1e-6):
    theta = section.theta.astype(float)
    g = np.empty(len(theta))
    for v in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[v] += h
        tm[v] -= h
        g[v] = (en.energy(section.with_theta(tp), fn) - en.energy(section.with_theta(tm), fn)) / (2 * h)
    return g


def test_08_gradients():
    rng = np.random.default_rng(8)
    meshes = [make_icosphere(1), make_flat_torus(5, 5)]
    fns = (en.VOLUME, en.smoothed_twisting(1e-3), en.stretched(10.0))
    worst = 0.0
    for i in range(10):
        m = meshes[i % 2]
        s = DiscreteSection(make_connection(m, 2 * (i % 2)),
                            rng.uniform(-math.pi, math.pi, m.n_vertices))
        for fn in fns:
            g, fd = en.energy_gradient(s, fn), _fd(s, fn)
            worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    ok = worst < 1e-5
    record_acceptance(8, "gradient vs finite differences", ok, f"worst relative error {worst:.2e}")
    assert ok


def test_09_index_two_structure(ico3):
    conn = make_connection(ico3, 4)
    res = outer_search(ico3, conn, SolverParams())
    recs = singular_faces(res.section)
    sep = cluster_separation(ico3, recs[0].faces, recs[1].faces) if len(recs) == 2 else 0
    targets = np.zeros(ico3.n_faces, dtype=np.int64)
    targets[cluster_faces(ico3, 0, 4)] = 1
    forced = minimize_inner(initialize(ico3, conn, [], targets=targets))
    forced_recs = singular_faces(forced.section)
    ok = ([r.index for r in recs] == [2, 2] and sep >= 2
          and [r.index for r in forced_recs] == [4] and forced.energy > res.volume)
    record_acceptance(9, "isolated index +/-2 singularities", ok,
                      f"indices {[r.index for r in recs]}, separation {sep} edges, "
                      f"V = {res.volume:.4f} vs forced +4 V = {forced.energy:.4f}")
    assert ok


def test_10_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv("CIRCBUNDLE_OUTPUT_DIR", raising=False)
    cfg = """
[surface]
preset = "icosphere"
subdivisions = 3

[bundle]
euler_number = 2
connection = "levi-civita"

[solver]
seed = 11

[output]
dir = "out"
"""
    texts = []
    for sub in ("first", "second"):
        d = tmp_path / sub
        d.mkdir()
        (d / "run.toml").write_text(cfg)
        assert main(["run", str(d / "run.toml")]) == 0
        lines = (d / "out" / "report.json").read_text().splitlines()
        texts.append("\n".join(l for l in lines if '"timestamp"' not in l))
    ok = texts[0] == texts[1]
    record_acceptance(10, "deterministic report.json", ok,
                      "identical apart from timestamp" if ok else "reports differ")
    assert ok
