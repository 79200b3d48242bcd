"""Command-line entry point: batch solves and the bundled experiments."""

import argparse
import os
import sys

import numpy as np

from .config import SimulationConfig
from .diagnostics import (discrete_energy, global_mass, kinetic_energy,
                          max_divergence, write_timeseries_csv)
from .examples import EX3_CASES, run_example1, run_example2, run_example3
from .mesh import mesh_from_selector
from .system import CoupledProblem, PicardFailure
from .vtkout import export_fields

OUT_ENV = "PNPVEM_OUT"


def _out_dir(args):
    out = getattr(args, "out", None) or os.environ.get(OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_solve(args):
    cfg = SimulationConfig.load(args.config)
    if args.mesh:
        cfg.flat["mesh"] = args.mesh
    out = _out_dir(args)
    mesh = mesh_from_selector(cfg.mesh_selector)
    prob = CoupledProblem(mesh, cfg.k, physics=cfg.physics(),
                          bcs=cfg.boundary_conditions(),
                          picard_tol=cfg.picard_tol,
                          max_iters=cfg.max_iters)
    init = cfg.initial_fields()
    st = prob.initial_state(c1=init.get("c1"), c2=init.get("c2"),
                            phi=init.get("phi"))
    if "phi" not in init:
        prob.solve_potential(st)
    tau = cfg.tau
    n_steps = int(round(cfg.t_final / tau))
    every = int(cfg.get("output.every", 0))
    records = []

    def record(pr, state):
        records.append({
            "t": state.t,
            "mass_c1": global_mass(pr, state, "c1"),
            "mass_c2": global_mass(pr, state, "c2"),
            "energy": discrete_energy(pr, state),
            "kinetic": kinetic_energy(pr, state),
            "max_div": max_divergence(pr, state),
            "picard_iters": pr.last_iterations})

    record(prob, st)
    records[0]["picard_iters"] = 0
    for step in range(n_steps):
        st = prob.step(st, tau)
        record(prob, st)
        if every and (step + 1) % every == 0:
            export_fields(st, prob, os.path.join(out, f"solve_{step + 1:06d}.vtk"))
        print(f"t={st.t:.6g} iters={prob.last_iterations} "
              f"energy={records[-1]['energy']:.6e}", flush=True)
    write_timeseries_csv(os.path.join(out, "solve_series.csv"), records)
    export_fields(st, prob, os.path.join(out, "solve_final.vtk"))
    if not all(np.isfinite(list(r.values())).all() for r in records):
        print("non-finite diagnostics detected", file=sys.stderr)
        return 1
    return 0


def _cmd_example1(args):
    out = _out_dir(args)
    path = os.path.join(out, f"convergence_tau_{args.tau_law}.csv")
    rows = run_example1(levels=args.levels, tau_law=args.tau_law, out_csv=path,
                        progress=lambda lev, h, _:
                        print(f"level {lev} (h={h:g}) done", flush=True))
    for r in rows:
        if r["L2_rate"] != "":
            print(f"{r['field']}: h={r['h']:g} L2 rate {r['L2_rate']:.2f}",
                  flush=True)
    print(f"wrote {path}")
    return 0


def _cmd_example2(args):
    out = _out_dir(args)
    records = run_example2(out_dir=out, n=args.n, tau=args.tau,
                           n_steps=args.steps,
                           progress=lambda s, st, r:
                           print(f"t={st.t:.4g} energy={r['energy']:.6e}",
                                 flush=True))
    drift = abs(records[-1]["mass_c1"] - records[0]["mass_c1"])
    print(f"mass drift {drift:.3e}; wrote {out}/relaxation_series.csv")
    return 0


def _cmd_example3(args):
    out = _out_dir(args)
    records, crossing = run_example3(
        args.case, out_dir=out, nx=args.nx, ny=args.ny, tau=args.tau,
        max_steps=args.max_steps, seed=args.seed,
        progress=lambda s, st, r:
        print(f"t={st.t:.4g} kinetic={r['kinetic']:.3e}", flush=True)
        if (s + 1) % 25 == 0 else None)
    if crossing is None:
        print(f"{args.case}: threshold not crossed in {len(records) - 1} steps")
    else:
        print(f"{args.case}: kinetic energy crossed threshold at t={crossing:g}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="pnpvem",
        description="Coupled ionic-transport / incompressible-flow solver on "
                    "polygonal meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run a simulation from a config file")
    ps.add_argument("--config", required=True)
    ps.add_argument("--mesh", help="override the config mesh selector")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out")
    ps.set_defaults(fn=_cmd_solve)

    p1 = sub.add_parser("example1", help="closed-form accuracy study")
    p1.add_argument("--levels", type=int, default=4)
    p1.add_argument("--tau-law", choices=("h", "h2"), default="h2")
    p1.add_argument("--out")
    p1.set_defaults(fn=_cmd_example1)

    p2 = sub.add_parser("example2", help="discontinuous-data relaxation run")
    p2.add_argument("--n", type=int, default=32)
    p2.add_argument("--tau", type=float, default=1e-3)
    p2.add_argument("--steps", type=int, default=100)
    p2.add_argument("--out")
    p2.set_defaults(fn=_cmd_example2)

    p3 = sub.add_parser("example3", help="membrane instability onset run")
    p3.add_argument("case", nargs="?", default="A30",
                    choices=sorted(EX3_CASES))
    p3.add_argument("--nx", type=int, default=24)
    p3.add_argument("--ny", type=int, default=8)
    p3.add_argument("--tau", type=float, default=None)
    p3.add_argument("--max-steps", type=int, default=600)
    p3.add_argument("--seed", type=int, default=7)
    p3.add_argument("--out")
    p3.set_defaults(fn=_cmd_example3)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PicardFailure as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
