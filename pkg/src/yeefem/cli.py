"""Command line interface: ``python -m yeefem <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, mesh as meshmod
from .exceptions import YeeFemError
from .scenario import Scenario
from .timestep import SolutionRecord, run


def parse_levels(text):
    """``"3..6"`` -> [3, 4, 5, 6]; ``"1,2,4"`` -> [1, 2, 4]."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        levels = list(range(int(lo), int(hi) + 1))
    else:
        levels = [int(v) for v in text.split(",") if v.strip()]
    if not levels or min(levels) < 0:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}")
    return levels


def load_scenario(args):
    scenario = Scenario()
    if getattr(args, "config", None):
        scenario = Scenario.from_json(Path(args.config).read_text(encoding="utf-8"))
    if getattr(args, "T", None) is not None:
        scenario = scenario.with_(final_time=args.T)
    return scenario


def _add_config(p):
    p.add_argument("--config", help="JSON file with scenario fields")


# -- commands --------------------------------------------------------------

def cmd_mesh(args):
    if args.action == "gen":
        scenario = load_scenario(args)
        m = meshmod.generate_scatterer_mesh(scenario.geometry, args.level)
        meshmod.write_mesh(m, args.out)
        print(f"wrote {args.out}: {m.n_vertices} vertices, {m.n_triangles} triangles")
    elif args.action == "refine":
        m = meshmod.refine_uniform(meshmod.read_mesh(args.input))
        meshmod.write_mesh(m, args.out)
        print(f"wrote {args.out}: {m.n_vertices} vertices, {m.n_triangles} triangles")
    else:
        m = meshmod.read_mesh(args.input)
        info = {
            "vertices": m.n_vertices,
            "triangles": m.n_triangles,
            "edges": m.n_edges,
            "boundary_edges": int(len(m.boundary_edges)),
            "interface_edges": int(len(m.interface_edges())),
            "dofs": 2 * m.n_edges,
            "h": m.h(),
            "labels": sorted(int(v) for v in np.unique(m.tri_label)),
        }
        print(json.dumps(info, indent=2))


def cmd_run(args):
    scenario = load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = run(scenario, args.method, args.rhs, level=args.level, cfl_safety=args.cfl,
              tau=args.tau)
    meshmod.write_mesh(rec.mesh, out / "mesh.txt")
    rec.energy.write_csv(out / "energy.csv")
    times = sorted(rec.snapshots)
    np.savez(out / "snapshots.npz", times=np.array(times),
             coefficients=np.array([rec.snapshots[t] for t in times]))
    meta = {"method": rec.method, "rhs_mode": rec.rhs_mode, "level": args.level,
            "tau": rec.tau, "n_steps": rec.n_steps, "scenario": scenario.to_dict()}
    (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"{rec.method}/{rec.rhs_mode} level {args.level}: {rec.n_steps} steps, "
          f"tau={rec.tau:.6g}, results in {out}")


def load_run(directory):
    """Rebuild a :class:`SolutionRecord` (snapshots only) from a run directory."""
    d = Path(directory)
    meta = json.loads((d / "run.json").read_text(encoding="utf-8"))
    m = meshmod.read_mesh(d / "mesh.txt")
    data = np.load(d / "snapshots.npz")
    snaps = {float(t): c for t, c in zip(data["times"], data["coefficients"])}
    from .femcore import build_dofmap
    from .timestep import EnergyTrace

    return SolutionRecord(mesh=m, dofmap=build_dofmap(m), materials=None,
                          method=meta["method"], rhs_mode=meta["rhs_mode"],
                          tau=meta["tau"], n_steps=meta["n_steps"], snapshots=snaps,
                          energy=EnergyTrace())


def cmd_export(args):
    rec = load_run(args.run_dir)
    suffix = "csv" if args.format == "csv" else "vtk"
    path = args.out or str(Path(args.run_dir) / f"field_t{args.t:g}.{suffix}")
    bench.export_snapshot(rec, args.t, path, args.format)
    print(f"wrote {path}")


def cmd_convergence(args):
    scenario = load_scenario(args)
    rows = bench.convergence_study(scenario, args.method, args.rhs, args.levels, args.cfl)
    bench.write_convergence_csv(rows, args.out)
    for r in rows:
        print(f"level {r.level}: h={r.h:.5f} dofs={r.dofs} error={r.error:.6f} eoc={r.eoc:.3f}")


def cmd_cfl(args):
    scenario = load_scenario(args)
    if args.sigma0:
        scenario = scenario.with_(geometry=meshmod.ScattererGeometry(
            **{**scenario.to_dict()["geometry"], "sigma_in": 0.0, "sigma_out": 0.0}))
    rows = bench.cfl_table(scenario, args.levels)
    bench.write_cfl_csv(rows, args.out)
    for h, c0, c1 in rows:
        print(f"h={h:.5f} C_nc1={c0:.6f} C_n0plus={c1:.6f}")


def build_parser():
    p = argparse.ArgumentParser(prog="yeefem", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="generate, refine or inspect meshes")
    msub = pm.add_subparsers(dest="action", required=True)
    g = msub.add_parser("gen")
    g.add_argument("--level", type=int, default=0)
    g.add_argument("--out", required=True)
    _add_config(g)
    r = msub.add_parser("refine")
    r.add_argument("input")
    r.add_argument("--out", required=True)
    i = msub.add_parser("info")
    i.add_argument("input")
    pm.set_defaults(func=cmd_mesh)

    pr = sub.add_parser("run", help="simulate the scattering scenario")
    pr.add_argument("--method", choices=["nc1", "n0plus", "n0"], default="nc1")
    pr.add_argument("--rhs", choices=["lifted", "direct"], default="lifted")
    pr.add_argument("--level", type=int, default=1)
    pr.add_argument("--cfl", type=float, default=0.28, help="tau = cfl * h")
    pr.add_argument("--tau", type=float, default=None, help="explicit time step")
    pr.add_argument("--T", type=float, default=None, help="final time")
    pr.add_argument("--out", required=True)
    _add_config(pr)
    pr.set_defaults(func=cmd_run)

    pc = sub.add_parser("convergence", help="convergence table")
    pc.add_argument("--levels", type=parse_levels, default=[1, 2, 3])
    pc.add_argument("--method", choices=["nc1", "n0plus", "n0"], default="nc1")
    pc.add_argument("--rhs", choices=["lifted", "direct"], default="lifted")
    pc.add_argument("--cfl", type=float, default=0.28)
    pc.add_argument("--T", type=float, default=None)
    pc.add_argument("--out", default="convergence.csv")
    _add_config(pc)
    pc.set_defaults(func=cmd_convergence)

    pf = sub.add_parser("cfl", help="table of CFL constants")
    pf.add_argument("--levels", type=parse_levels, default=[0, 1, 2, 3])
    pf.add_argument("--sigma0", action="store_true", help="set the conductivity to zero")
    pf.add_argument("--out", default="cfl.csv")
    _add_config(pf)
    pf.set_defaults(func=cmd_cfl)

    pe = sub.add_parser("export", help="write a stored snapshot")
    pe.add_argument("run_dir", nargs="?", default=".")
    pe.add_argument("--t", type=float, required=True)
    pe.add_argument("--format", choices=["csv", "vtk", "vtk-legacy"], default="csv")
    pe.add_argument("--out", default=None)
    pe.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (YeeFemError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
