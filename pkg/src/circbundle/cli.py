"""Command-line driver.

    circbundle run <config.toml>
    circbundle verify-oracles
    circbundle mesh-info <meshfile>

Exit codes: 0 success, 1 oracle mismatch or unexpected failure, 2 config
error, 3 inconsistency detected during the run.

Environment overrides:
    CIRCBUNDLE_OUTPUT_DIR   output directory (beats the config value)
    CIRCBUNDLE_THREADS      worker processes for the multistart search
    CIRCBUNDLE_ORACLE_TOL   relative tolerance for verify-oracles
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import energy as en
from . import oracle as orc
from . import solver as so
from .bundle import BundleError, levi_civita_connection, make_connection, parse_connection_csv
from .mesh import MeshError, make_disk, make_flat_torus, make_icosphere, read_mesh
from .section import IndexInconsistencyError, SectionError, singular_faces, singularities_to_csv

logger = logging.getLogger(__name__)

DEFAULT_ORACLE_TOL = 0.02


class ConfigError(ValueError):
    pass


def _fmt(x):
    return f"{float(x):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


# ----------------------------------------------------------------------
# configuration

def load_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    raw["_base"] = str(path.parent)
    return raw


def build_mesh(cfg):
    surf = cfg.get("surface")
    if not isinstance(surf, dict):
        raise ConfigError("missing [surface] section")
    base = Path(cfg.get("_base", "."))
    try:
        if "mesh" in surf:
            p = base / surf["mesh"]
            if not p.exists():
                raise ConfigError(f"mesh file not found: {p}")
            return read_mesh(p)
        preset = surf.get("preset")
        if preset == "icosphere":
            return make_icosphere(int(surf.get("subdivisions", 3)), float(surf.get("radius", 1.0)))
        if preset == "torus":
            n = int(surf.get("n", 16))
            return make_flat_torus(n, int(surf.get("m", n)),
                                   float(surf.get("a", 1.0)), float(surf.get("b", 1.0)))
        if preset == "disk":
            return make_disk(int(surf.get("rings", 16)), float(surf.get("radius", 1.0)))
    except MeshError as exc:
        raise ConfigError(f"bad surface: {exc}") from None
    raise ConfigError(f"unknown surface preset {preset!r} (icosphere, torus, disk or mesh=<file>)")


def build_connection(cfg, mesh):
    b = cfg.get("bundle", {})
    if "euler_number" not in b:
        raise ConfigError("[bundle] euler_number is required")
    e = b["euler_number"]
    if not isinstance(e, int) or isinstance(e, bool):
        raise ConfigError("euler_number must be an integer")
    if e % 2:
        raise ConfigError(f"euler_number = {e} violates the parity rule: it must be even")
    L = float(b.get("fiber_length", 2 * math.pi))
    kind = b.get("connection", "constructed")
    try:
        if kind == "constructed":
            conn = make_connection(mesh, e, L)
        elif kind == "levi-civita":
            conn = levi_civita_connection(mesh, L)
        elif kind == "file":
            p = Path(cfg.get("_base", ".")) / b.get("file", "")
            if not p.is_file():
                raise ConfigError(f"connection file not found: {p}")
            conn = parse_connection_csv(mesh, p.read_text())
        else:
            raise ConfigError(f"unknown connection {kind!r} (constructed, levi-civita, file)")
    except BundleError as exc:
        raise ConfigError(str(exc)) from None
    if conn.euler_number != e:
        raise ConfigError(f"euler_number = {e} but the {kind} connection has {conn.euler_number}")
    return conn


def build_params(cfg):
    s = dict(cfg.get("solver", {}))
    known = set(so.SolverParams.__dataclass_fields__)
    extra = set(s) - known
    if extra:
        raise ConfigError(f"unknown [solver] keys: {sorted(extra)}")
    try:
        return so.SolverParams(**s)
    except (so.SolverError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad [solver] values: {exc}") from None


def output_dir(cfg):
    d = os.environ.get("CIRCBUNDLE_OUTPUT_DIR") or cfg.get("output", {}).get("dir")
    if not d:
        raise ConfigError("no output directory ([output] dir or CIRCBUNDLE_OUTPUT_DIR)")
    d = Path(d)
    if not d.is_absolute() and not os.environ.get("CIRCBUNDLE_OUTPUT_DIR"):
        d = Path(cfg.get("_base", ".")) / d
    try:
        d.mkdir(parents=True, exist_ok=True)
        probe = d / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {d} is not writable: {exc.strerror}") from None
    return d


def _threads():
    raw = os.environ.get("CIRCBUNDLE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CIRCBUNDLE_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("CIRCBUNDLE_THREADS must be at least 1")
    return n


# ----------------------------------------------------------------------
# run

def run(config_path):
    cfg = load_config(config_path)
    mesh = build_mesh(cfg)
    conn = build_connection(cfg, mesh)
    params = build_params(cfg)
    hc = cfg.get("hcone", {})
    lambdas = [float(x) for x in hc.get("lambdas", [2.0, 4.0, 8.0])]
    R = float(hc.get("radius", 2.0))
    stretch = [float(x) for x in cfg.get("report", {}).get("stretch_lambdas", [10.0, 100.0, 1000.0])]
    out = output_dir(cfg)
    workers = _threads()

    result = so.outer_search(mesh, conn, params, workers=workers)
    section = result.section
    recs = singular_faces(section)
    if sum(r.index for r in recs) != conn.euler_number:
        raise IndexInconsistencyError("singularity indices do not sum to the Euler number")

    hcones = []
    for r in recs:
        try:
            hcones.append(so.extract_hcone(section, r, lambdas, R).to_dict())
        except so.SolverError as exc:
            hcones.append({"singularity": r.face, "error": str(exc)})

    h = float(mesh.edge_lengths.mean())
    radii = cfg.get("profile", {}).get("radii") or list(np.linspace(2 * h, 8 * h, 8))
    profile_rows = []
    for r in recs:
        try:
            rows = en.mass_ratio_profile(section, center_vertex=r.hub, radii=radii,
                                         depth=params.depth)
        except en.EnergyError as exc:
            logger.warning("mass-ratio profile skipped for face %d: %s", r.face, exc)
            continue
        profile_rows.extend((r.face, *row) for row in rows)

    ereport = en.energy_report(section, stretch, params.depth)
    report = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "mesh": mesh.summary(),
        "euler_number": conn.euler_number,
        "fiber_length": conn.fiber_length,
        "solver_params": {k: getattr(params, k) for k in so.SolverParams.__dataclass_fields__},
        "topology": result.topology.to_dict(),
        "energy": ereport.to_dict(),
        "singularities": [
            {"face": r.face, "index": r.index, "faces": list(r.faces), "hub": r.hub,
             "position": list(r.position) if r.position is not None else None}
            for r in recs
        ],
        "multistart": [vars(s) for s in result.starts],
        "hcones": hcones,
        "regularity_flags": so.regularity_check(section),
    }
    (out / "report.json").write_text(
        json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    (out / "section.csv").write_text(section.to_csv())
    (out / "singularities.csv").write_text(singularities_to_csv(recs))
    (out / "energy_trace.csv").write_text(
        "iteration,energy\n" + "".join(f"{i},{_fmt(v)}\n" for i, v in enumerate(result.trace)))
    (out / "profile.csv").write_text(
        "singularity,t,f,f_over_t\n"
        + "".join(f"{s},{_fmt(t)},{_fmt(f)},{_fmt(q)}\n" for s, t, f, q in profile_rows))
    print(f"volume {_fmt(result.volume)}  singularities {len(recs)}  -> {out}")
    return 0


# ----------------------------------------------------------------------
# oracles

def oracle_checks(tol):
    """Rows ``(name, reference, value, relative error, limit)``."""
    rows = []
    for k in (0, 1, 2, 3):
        a = orc.cone_closed_forms(k, 1.0)
        q = orc.cone_quadrature(k, 1.0)
        for label, x, y in (("volume", a[0], q[0]), ("twisting", a[1], q[1])):
            rows.append((f"cone k={k} {label}: closed form vs quadrature", x, y,
                         abs(y - x) / max(abs(x), 1e-300) if x else abs(y), 1e-8))
    rows.append(("longitude field: 8*pi vs quadrature", orc.PONTRYAGIN_VOLUME,
                 orc.pontryagin_volume_quadrature(1.0),
                 abs(orc.pontryagin_volume_quadrature(1.0) / orc.PONTRYAGIN_VOLUME - 1), 1e-8))
    vol, tw = orc.cone_oracle(2, 1.0, rings=(16, 32))
    rows.append(("cone k=2 volume: discrete (32 rings)", vol.analytic, vol.discrete,
                 abs(vol.discrete / vol.analytic - 1), tol))
    rows.append(("cone k=2 twisting: discrete (32 rings)", tw.analytic, tw.discrete,
                 abs(tw.discrete / tw.analytic - 1), tol))
    pont = orc.pontryagin_oracle(4)
    rows.append(("longitude field volume: discrete icosphere(4)", pont.analytic, pont.discrete,
                 abs(pont.discrete / pont.analytic - 1), tol))
    return rows


def verify_oracles():
    raw = os.environ.get("CIRCBUNDLE_ORACLE_TOL")
    try:
        tol = float(raw) if raw else DEFAULT_ORACLE_TOL
    except ValueError:
        raise ConfigError(f"CIRCBUNDLE_ORACLE_TOL must be a number, got {raw!r}") from None
    ok = True
    print(f"{'check':52s} {'reference':>22s} {'value':>22s} {'rel.err':>10s}  result")
    for name, ref, val, err, lim in oracle_checks(tol):
        passed = err <= lim
        ok &= passed
        print(f"{name:52s} {ref:22.15g} {val:22.15g} {err:10.2e}  {'PASS' if passed else 'FAIL'}")
    return 0 if ok else 1


def mesh_info(path):
    try:
        mesh = read_mesh(path)
    except FileNotFoundError:
        raise ConfigError(f"mesh file not found: {path}") from None
    except MeshError as exc:
        raise ConfigError(f"invalid mesh ({exc.code}): {exc}") from None
    for k, v in mesh.summary().items():
        print(f"{k:20s} {v}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="circbundle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the solver pipeline from a TOML config")
    p.add_argument("config")
    sub.add_parser("verify-oracles", help="check discrete energies against closed forms")
    p = sub.add_parser("mesh-info", help="print a mesh summary")
    p.add_argument("meshfile")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return run(args.config)
        if args.command == "verify-oracles":
            return verify_oracles()
        return mesh_info(args.meshfile)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IndexInconsistencyError, SectionError, so.SolverError) as exc:
        print(f"inconsistency: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
