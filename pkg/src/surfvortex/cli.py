"""Command-line interface.

Every command reads the surface from ``--preset`` or ``--mesh`` and its
parameters from flags, falling back to an INI file given by ``--config``
(section ``[mesh]`` for the surface, one section per command for the rest).
Reports are JSON on stdout or in ``--out``; fields and sweeps are CSV files in
``--out``.  Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("surfvortex")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# parameter resolution

# name -> (type, default, help); types: int, float, str, ints, floats
COMMON = {
    "preset": (str, None, "surface preset (sphereN, torusN, torusrevNUxNV, genus2, genus2_K)"),
    "mesh": (str, None, "mesh file (OFF, OBJ or INTRINSIC)"),
    "format": (str, None, "mesh file format override"),
    "seed": (int, 0, "random seed"),
}

COMMANDS = {
    "mesh-info": ("surface statistics", {}),
    "greens": (
        "Green's function column and regular part at a point",
        {"point": (str, "f0", "source point")},
    ),
    "psi": (
        "vortex potential psi(a, d) and its decomposition defect",
        {"points": (str, None, "vortex points"), "d": ("ints", None, "indices")},
    ),
    "zeta": (
        "holonomy constants and flux lattice",
        {"points": (str, "", "vortex points"), "d": ("ints", [], "indices")},
    ),
    "canonical": (
        "canonical harmonic unit field",
        {
            "points": (str, "", "vortex points"),
            "d": ("ints", [], "indices"),
            "flux": ("floats", None, "flux vector (default: lattice point nearest 0)"),
        },
    ),
    "renorm-energy": (
        "renormalized energy by closed formula and by ball limit",
        {
            "points": (str, "", "vortex points"),
            "d": ("ints", [], "indices"),
            "flux": ("floats", None, "flux vector"),
            "radii": ("floats", None, "ball radii for the limit fit"),
        },
    ),
    "minimize-w": (
        "minimize W over vortex positions",
        {
            "d": ("ints", None, "indices"),
            "starts": (int, 5, "number of random starts"),
            "max_moves": (int, 2000, "move budget per start"),
            "jobs": (int, 1, "parallel worker processes"),
        },
    ),
    "gamma-f": (
        "core constant gamma_F",
        {
            "t_max": (float, 0.1, "largest t"),
            "halvings": (int, 10, "number of halvings of t"),
            "nodes_per_decade": (int, 320, "radial grid density"),
        },
    ),
    "minimize": (
        "minimize the Ginzburg-Landau energy",
        {
            "eps": (float, 0.1, "core size"),
            "min_eps_factor": (float, 1.0, "smallest admissible eps in mesh sizes"),
        },
    ),
    "recovery": (
        "recovery field built from a vortex configuration",
        {
            "points": (str, None, "vortex points"),
            "d": ("ints", None, "indices"),
            "eps": (float, 0.1, "core size"),
            "K": (float, 8.0, "core radius in units of 2 eps"),
            "min_eps_factor": (float, 1.0, "smallest admissible eps in mesh sizes"),
        },
    ),
    "expansion": (
        "energy expansion over an eps sweep",
        {
            "eps": ("floats", [0.2, 0.1, 0.05], "eps values"),
            "seeds": ("ints", [0], "seeds per eps"),
            "distance": (int, 0, "1 to compute vorticity distances"),
            "min_eps_factor": (float, 1.0, "smallest admissible eps in mesh sizes"),
        },
    ),
}


def _convert(kind, raw, name):
    if raw is None or not isinstance(raw, str):
        return raw
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "ints":
            return [int(x) for x in raw.replace(" ", "").split(",") if x]
        if kind == "floats":
            return [float(x) for x in raw.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} ({exc})") from None
    return raw


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the INI file over defaults; returns a flat, JSON-able config."""
    ini = configparser.ConfigParser()
    if args.config:
        if not Path(args.config).exists():
            raise ConfigError(f"config: file {args.config!r} does not exist")
        ini.read(args.config)
    params = dict(COMMON)
    params.update(COMMANDS[args.command][1])
    out = {"command": args.command}
    for name, (kind, default, _) in params.items():
        flag = getattr(args, name, None)
        if flag is not None:
            val = _convert(kind, flag, name)
        else:
            section = "mesh" if name in ("preset", "mesh", "format") else args.command
            raw = ini.get(section, name, fallback=None) if ini.has_section(section) else None
            if raw is None and name == "seed" and ini.has_section("run"):
                raw = ini.get("run", "seed", fallback=None)
            val = _convert(kind, raw, name) if raw is not None else default
        out[name] = val
    if out["preset"] is None and out["mesh"] is None and args.command not in MESHLESS:
        raise ConfigError("mesh: give --preset or --mesh")
    if out["preset"] is not None and out["mesh"] is not None:
        raise ConfigError("mesh: --preset and --mesh are exclusive")
    if out["mesh"] is not None and not Path(out["mesh"]).exists():
        raise ConfigError(f"mesh: file {out['mesh']!r} does not exist")
    for name in ("eps",):
        v = out.get(name)
        vals = v if isinstance(v, list) else [v] if v is not None else []
        if any(x <= 0 for x in vals):
            raise ConfigError(f"{name}: must be positive")
    if out.get("starts") is not None and out["starts"] < 1:
        raise ConfigError("starts: must be at least 1")
    if out.get("jobs") is not None and out["jobs"] < 1:
        raise ConfigError("jobs: must be at least 1")
    return out


MESHLESS = {"gamma-f"}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# helpers


def build_mesh(cfg: dict):
    from .meshgen import preset
    from .surface import load_mesh

    if cfg.get("preset"):
        try:
            return preset(cfg["preset"])
        except ValueError as exc:
            raise ConfigError(f"preset: {exc}") from None
    return load_mesh(cfg["mesh"], cfg.get("format"))


def parse_points(mesh, text: str | None) -> list:
    """Points separated by ';': ``fN`` (face centroid), ``fN@b0,b1,b2``, ``vN`` or ambient ``x,y,z``."""
    from .surface import SurfacePoint

    if not text:
        return []
    pts = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        try:
            if item[0] == "f":
                if "@" in item:
                    f, b = item[1:].split("@")
                    bary = [float(x) for x in b.split(",")]
                    pts.append(SurfacePoint(int(f), tuple(bary)))
                else:
                    pts.append(SurfacePoint.centroid(int(item[1:])))
            elif item[0] == "v":
                pts.append(SurfacePoint.at_vertex(mesh, int(item[1:])))
            else:
                pts.append(mesh.locate([float(x) for x in item.split(",")]))
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"points: cannot parse {item!r} ({exc})") from None
        if not 0 <= pts[-1].face < mesh.n_faces:
            raise ConfigError(f"points: face {pts[-1].face} out of range")
    return pts


def _config(mesh, cfg, flux=None):
    from .canonical import VortexConfiguration

    pts = parse_points(mesh, cfg.get("points"))
    d = cfg.get("d") or []
    if len(pts) != len(d):
        raise ConfigError(f"d: {len(d)} indices for {len(pts)} points")
    return VortexConfiguration(pts, d, None if flux is None else np.asarray(flux, float))


def _to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _to_jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


# ---------------------------------------------------------------------------
# commands: each returns (report dict, {csv file name: text})


def cmd_mesh_info(mesh, cfg):
    return mesh.info(), {}


def cmd_greens(mesh, cfg):
    from .potential import GreenOperator

    pts = parse_points(mesh, cfg["point"])
    if len(pts) != 1:
        raise ConfigError("point: exactly one source point")
    y = pts[0]
    go = GreenOperator.of(mesh)
    est = go.diagonal_regular_part(y)
    g = go.column(y)
    rep = {
        "point": y.to_json(),
        "H_diag": est.value,
        "ring_radii": est.radii,
        "ring_values": est.ring_values,
        "log_slope": go.log_slope(y),
        "mean": float(mesh.vertex_area @ g / mesh.total_area),
    }
    return rep, {"greens.csv": go.to_csv(y)}


def cmd_psi(mesh, cfg):
    from .potential import psi, psi0, psi_decomposition_defect

    conf = _config(mesh, cfg)
    vp = psi(mesh, conf.points, conf.indices)
    rep = {
        "config": conf.to_json(),
        "residual": vp.residual,
        "decomposition_defect": psi_decomposition_defect(mesh, vp),
        "psi0_max": float(np.abs(psi0(mesh).values).max()),
    }
    rows = ["vertex,density"] + [f"{v},{x!r}" for v, x in enumerate(vp.density.tolist())]
    return rep, {"psi.csv": "\n".join(rows) + "\n"}


def cmd_zeta(mesh, cfg):
    from .canonical import flux_lattice

    conf = _config(mesh, cfg)
    conf.validate(mesh)
    lat = flux_lattice(mesh, conf)
    return {"config": conf.to_json(), "lattice": lat.to_json()}, {}


def cmd_canonical(mesh, cfg):
    from .canonical import canonical_field, localize, vorticity

    conf = _config(mesh, cfg, cfg.get("flux"))
    cf = canonical_field(mesh, conf)
    u = cf.reconstruct()
    rep = cf.to_json()
    rep["vortices"] = localize(mesh, vorticity(mesh, u)).to_json()
    return rep, {"field.csv": u.to_csv()}


def cmd_renorm_energy(mesh, cfg):
    from .renorm import renormalized_energy

    conf = _config(mesh, cfg, cfg.get("flux"))
    rep = renormalized_energy(mesh, conf, cfg.get("radii"))
    out = rep.to_json()
    out["config"] = conf.to_json()
    rows = ["radius,partial"] + [f"{r!r},{p!r}" for r, p in zip(rep.radii, rep.partial)]
    return out, {"partial_energies.csv": "\n".join(rows) + "\n"}


def _minimize_w_worker(args):
    cfg, seed = args
    from .renorm import minimize_W

    mesh = build_mesh(cfg)
    res = minimize_W(mesh, cfg["d"], seed=seed, max_moves=cfg["max_moves"])
    return seed, res.to_json()


def cmd_minimize_w(mesh, cfg):
    from .canonical import VortexConfiguration
    from .geodesic import geodesic_distance

    if cfg.get("d") is None:
        raise ConfigError("d: indices are required")
    seeds = [cfg["seed"] + k for k in range(cfg["starts"])]
    jobs = [(cfg, s) for s in seeds]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(cfg["jobs"]) as pool:
            runs = list(pool.map(_minimize_w_worker, jobs))
    else:
        runs = [_minimize_w_worker(j) for j in jobs]
    out_runs = []
    for seed, r in runs:
        conf = VortexConfiguration.from_json(r["config"], mesh)
        pts = conf.points
        seps = [geodesic_distance(mesh, pts[i], pts[k]) for i in range(len(pts)) for k in range(i + 1, len(pts))]
        out_runs.append(
            {
                "seed": seed,
                "W": r["W"],
                "status": r["status"],
                "config": r["config"],
                "positions": [mesh.point_position(p).tolist() for p in pts] if mesh.positions is not None else None,
                "min_separation": min(seps) if seps else None,
                "moves": len(r["moves"]) - 1,
                "terms": r["terms"],
            }
        )
    best = min(out_runs, key=lambda r: r["W"])
    return {"best": best, "runs": out_runs}, {}


def cmd_gamma_f(mesh, cfg):
    from .profile import gamma_F

    ts = [cfg["t_max"] / 2**k for k in range(cfg["halvings"] + 1)]
    est = gamma_F(t_seq=ts, nodes_per_decade=cfg["nodes_per_decade"])
    return est.to_json(), {"gamma_f.csv": est.to_csv()}


def cmd_minimize(mesh, cfg):
    from .glsolver import detect_vortices, minimize_E

    st = minimize_E(mesh, cfg["eps"], init=cfg["seed"], min_eps_factor=cfg["min_eps_factor"])
    vm = detect_vortices(st)
    rep = st.to_json()
    rep["E_minus_n_pi_log"] = st.energy - len(vm.indices) * math.pi * abs(math.log(cfg["eps"]))
    rep["vortices"] = vm.to_json()
    rep["energy_history_length"] = len(st.energy_history)
    return rep, {"field.csv": st.field.to_csv()}


def cmd_recovery(mesh, cfg):
    from .glsolver import GLEnergy, recovery_radius, recovery_sequence
    from .profile import gamma_F
    from .renorm import W_formula

    conf = _config(mesh, cfg)
    eps = cfg["eps"]
    u = recovery_sequence(mesh, conf, eps, K=cfg["K"], min_eps_factor=cfg["min_eps_factor"])
    E = GLEnergy(u.frame, eps).energy(u.z)
    n = conf.n
    W = W_formula(mesh, conf, u.frame).W_formula
    g = gamma_F().value
    rep = {
        "config": conf.to_json(),
        "eps": eps,
        "core_radius": recovery_radius(mesh, conf, eps, cfg["K"]) if n else None,
        "E": E,
        "E_minus_n_pi_log": E - n * math.pi * abs(math.log(eps)),
        "W": W,
        "gamma_F": g,
        "defect": E - n * math.pi * abs(math.log(eps)) - W - n * g,
    }
    return rep, {"field.csv": u.to_csv()}


def cmd_expansion(mesh, cfg):
    from .glsolver import expansion_experiment

    rec = expansion_experiment(
        mesh,
        cfg["eps"],
        seeds=cfg["seeds"],
        measure_distance=bool(cfg["distance"]),
        min_eps_factor=cfg["min_eps_factor"],
    )
    return rec.to_json(), {"expansion.csv": rec.to_csv()}


HANDLERS = {
    "mesh-info": cmd_mesh_info,
    "greens": cmd_greens,
    "psi": cmd_psi,
    "zeta": cmd_zeta,
    "canonical": cmd_canonical,
    "renorm-energy": cmd_renorm_energy,
    "minimize-w": cmd_minimize_w,
    "gamma-f": cmd_gamma_f,
    "minimize": cmd_minimize,
    "recovery": cmd_recovery,
    "expansion": cmd_expansion,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surfvortex", description="Ginzburg-Landau vortices on closed surfaces")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (help_, params) in COMMANDS.items():
        sp_ = sub.add_parser(name, help=help_)
        sp_.add_argument("--config", help="INI configuration file")
        sp_.add_argument("--out", help="output directory (default: JSON to stdout, no CSV)")
        sp_.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")
        for pname, (kind, default, phelp) in {**COMMON, **params}.items():
            flag = "--" + pname.replace("_", "-")
            hint = "" if default is None else f" (default {default})"
            sp_.add_argument(flag, dest=pname, default=None, help=phelp + hint)
    return p


def envelope(cfg: dict, result: dict, timestamp: bool = True) -> dict:
    out = {
        "command": cfg["command"],
        "version": __version__,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "result": _to_jsonable(result),
    }
    if timestamp:
        out["timestamp"] = datetime.now(timezone.utc).isoformat()
    return out


def run(argv=None) -> int:
    from .canonical import DegreeError, LatticeError, LocalizationError, ReconstructionError
    from .exterior import SolverError
    from .geodesic import GeodesicError
    from .glsolver import GLSolverError, ResolutionError
    from .potential import PoincareHopfError
    from .profile import ProfileError
    from .surface import MeshError
    from .topology import HomologyError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        mesh = None if args.command in MESHLESS and not (cfg["preset"] or cfg["mesh"]) else build_mesh(cfg)
        result, tables = HANDLERS[args.command](mesh, cfg)
    except (ConfigError, MeshError, PoincareHopfError, LatticeError, ResolutionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        SolverError,
        GLSolverError,
        ProfileError,
        HomologyError,
        ReconstructionError,
        LocalizationError,
        DegreeError,
        GeodesicError,
        np.linalg.LinAlgError,
    ) as exc:
        print(f"numerical failure in {type(exc).__module__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    doc = json.dumps(envelope(cfg, result, not args.no_timestamp), indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.json").write_text(doc + "\n")
        for fname, text in tables.items():
            (out / fname).write_text(text)
    else:
        print(doc)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
