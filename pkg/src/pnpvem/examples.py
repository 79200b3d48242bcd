"""Experiment drivers: manufactured-solution accuracy study, relaxation of
discontinuous ionic concentrations, and electrokinetic instability onset."""

import os

import numpy as np
import sympy

from .diagnostics import (convergence_rates, discrete_energy, error_norms,
                          global_mass, kinetic_energy, max_divergence,
                          write_convergence_csv, write_timeseries_csv)
from .mesh import generate_graded_tri_mesh, generate_hex_mesh
from .system import BoundaryConditions, CoupledProblem, Physics
from .vtkout import export_fields

__all__ = ["manufactured_solution", "run_example1", "run_example2",
           "run_example3", "EX3_CASES"]


# -- closed-form accuracy benchmark ---------------------------------------


def _lambdify(expr, syms):
    fn = sympy.lambdify(syms, expr, modules="numpy")

    def g(p, t=0.0):
        return np.broadcast_to(np.asarray(fn(p[:, 0], p[:, 1], t), float),
                               (len(p),)).copy()

    return g


def manufactured_solution():
    """Closed-form fields plus the matching source terms, as callbacks.

    Returns a dict with exact fields (c1, c2, phi, u, p), their gradients
    (gc1, gc2, gphi, gu), and forcing callbacks (f_c1, f_c2, f_phi, f_u)
    that make the fields solve the coupled system with unit coefficients.
    """
    x, y, t = sympy.symbols("x y t")
    c1 = sympy.sin(2 * sympy.pi * x) * sympy.sin(2 * sympy.pi * y) * sympy.sin(t)
    c2 = sympy.sin(3 * sympy.pi * x) * sympy.sin(3 * sympy.pi * y) * sympy.sin(2 * t)
    phi = sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y) * (1 - sympy.exp(-t))
    u1 = -sympy.Rational(1, 2) * sympy.exp(t) * sympy.cos(x) ** 2 \
        * sympy.cos(y) * sympy.sin(y)
    u2 = sympy.Rational(1, 2) * sympy.exp(t) * sympy.cos(y) ** 2 \
        * sympy.cos(x) * sympy.sin(x)
    p = sympy.exp(t) * (sympy.sin(x) - sympy.sin(y))

    def lap(f):
        return sympy.diff(f, x, 2) + sympy.diff(f, y, 2)

    def adv(f):
        return u1 * sympy.diff(f, x) + u2 * sympy.diff(f, y)

    drift = [sympy.diff(c * sympy.diff(phi, x), x)
             + sympy.diff(c * sympy.diff(phi, y), y) for c in (c1, c2)]
    f_c1 = sympy.diff(c1, t) - lap(c1) - drift[0] + adv(c1)
    f_c2 = sympy.diff(c2, t) - lap(c2) + drift[1] + adv(c2)
    f_phi = -lap(phi) - (c1 - c2)
    f_u1 = sympy.diff(u1, t) - lap(u1) + adv(u1) + sympy.diff(p, x) \
        + (c1 - c2) * sympy.diff(phi, x)
    f_u2 = sympy.diff(u2, t) - lap(u2) + adv(u2) + sympy.diff(p, y) \
        + (c1 - c2) * sympy.diff(phi, y)

    syms = (x, y, t)
    scal = {name: _lambdify(expr, syms) for name, expr in
            (("c1", c1), ("c2", c2), ("phi", phi), ("p", p),
             ("f_c1", f_c1), ("f_c2", f_c2), ("f_phi", f_phi))}

    def vec(ex, ey):
        fx, fy = _lambdify(ex, syms), _lambdify(ey, syms)
        return lambda pts, t=0.0: np.stack([fx(pts, t), fy(pts, t)], axis=1)

    def grad(f):
        return vec(sympy.diff(f, x), sympy.diff(f, y))

    gux = vec(sympy.diff(u1, x), sympy.diff(u1, y))
    guy = vec(sympy.diff(u2, x), sympy.diff(u2, y))
    out = dict(scal)
    out["u"] = vec(u1, u2)
    out["f_u"] = vec(f_u1, f_u2)
    out["gc1"] = grad(c1)
    out["gc2"] = grad(c2)
    out["gphi"] = grad(phi)
    out["gu"] = lambda pts, t=0.0: np.stack([gux(pts, t), guy(pts, t)], axis=1)
    return out


def run_example1(levels=4, tau_law="h2", k=2, out_csv=None, progress=None):
    """Convergence study on uniform hexagonal meshes, h = 1/4 ... 1/2^(levels+1).

    ``tau_law`` is "h2" (tau = h^2, final time 1/16 so every level lands on
    the same instant) or "h" (tau = h, final time 1/2).  Returns the list of
    CSV-style row dicts.
    """
    if levels < 2:
        raise ValueError("need at least two refinement levels for rates")
    if tau_law not in ("h", "h2"):
        raise ValueError("tau_law must be 'h' or 'h2'")
    ms = manufactured_solution()
    t_final = 0.5 if tau_law == "h" else 1.0 / 16.0
    tags = ("top", "bottom", "left", "right")
    fields = ("c1", "c2", "phi", "u", "p")
    errs = {f: ([], []) for f in fields}
    hs = []
    for lev in range(levels):
        n = 4 * 2 ** lev
        h = 1.0 / n
        tau = h if tau_law == "h" else h * h
        n_steps = int(round(t_final / tau))
        mesh = generate_hex_mesh(n)
        bcs = BoundaryConditions(
            c1={tg: ms["c1"] for tg in tags},
            c2={tg: ms["c2"] for tg in tags},
            phi={tg: ms["phi"] for tg in tags},
            u={tg: ms["u"] for tg in tags})
        prob = CoupledProblem(mesh, k, bcs=bcs, forcing={
            "c1": ms["f_c1"], "c2": ms["f_c2"], "phi": ms["f_phi"],
            "u": ms["f_u"]})
        st = prob.initial_state(
            c1=lambda p: ms["c1"](p, 0.0), c2=lambda p: ms["c2"](p, 0.0),
            u=lambda p: ms["u"](p, 0.0), project=False)
        st = prob.advance(st, tau, n_steps)
        norms = error_norms(
            prob, st,
            {f: ms[f] for f in fields},
            grads={"c1": ms["gc1"], "c2": ms["gc2"], "phi": ms["gphi"],
                   "u": ms["gu"]})
        hs.append(h)
        for f in fields:
            l2, h1 = norms[f]
            errs[f][0].append(l2)
            errs[f][1].append(h1)
        if progress is not None:
            progress(lev, h, norms)
    rows = []
    for f in fields:
        l2s, h1s = errs[f]
        rl2 = convergence_rates(hs, l2s)
        rh1 = convergence_rates(hs, h1s) if h1s[0] is not None else [None] * len(hs)
        for i, h in enumerate(hs):
            rows.append({"h": h, "tau": h if tau_law == "h" else h * h,
                         "field": f, "L2_err": l2s[i],
                         "H1_err": "" if h1s[i] is None else h1s[i],
                         "L2_rate": "" if i == 0 else rl2[i],
                         "H1_rate": "" if (i == 0 or rh1[i] is None) else rh1[i]})
    if out_csv:
        write_convergence_csv(out_csv, rows)
    return rows


# -- relaxation of discontinuous concentrations ----------------------------


def example2_initial():
    """Step-function ionic concentrations concentrated near two corners."""

    def c10(p):
        inside = (p[:, 0] > 0.75) & (p[:, 1] > 0.55)
        return np.where(inside, 1.0, 1e-6)

    def c20(p):
        inside = (p[:, 0] > 0.75) & (p[:, 1] < 0.45)
        return np.where(inside, 1.0, 1e-6)

    return c10, c20


def run_example2(out_dir=None, n=32, tau=1e-3, n_steps=100,
                 snapshot_times=(2e-3, 2e-2, 0.1), k=2, progress=None):
    """No-flux relaxation run on the unit square; returns the time series."""
    mesh = generate_hex_mesh(n)
    tags = ("top", "bottom", "left", "right")
    zero_v = lambda p, t=0.0: np.zeros((len(p), 2))
    prob = CoupledProblem(mesh, k, bcs=BoundaryConditions(
        u={tg: zero_v for tg in tags}))
    c10, c20 = example2_initial()
    st = prob.initial_state(c1=c10, c2=c20, project=True)
    prob.solve_potential(st)

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
    snap = sorted(snapshot_times)
    for step in range(n_steps):
        st = prob.step(st, tau)
        record(prob, st)
        if progress is not None:
            progress(step, st, records[-1])
        while snap and st.t >= snap[0] - 1e-12:
            if out_dir:
                export_fields(st, prob, os.path.join(
                    out_dir, f"relaxation_t{snap[0]:g}.vtk"))
            snap.pop(0)
    if out_dir:
        write_timeseries_csv(os.path.join(out_dir, "relaxation_series.csv"),
                             records)
    return records


# -- electrokinetic instability onset --------------------------------------


# case name -> (concentration scale alpha, applied voltage beta, timestep)
# stronger forcing needs a proportionally smaller step for the fixed-point
# solver to contract
EX3_CASES = {"A30": (1.0, 30.0, 1e-5), "A40": (1.0, 40.0, 1e-5),
             "A120": (1.0, 120.0, 1e-5),
             "B10": (10.0, 120.0, 1e-6), "B100": (100.0, 120.0, 1e-7)}


def _perturbed_concentrations(prob, alpha, seed):
    """Per-element uniformly perturbed linear profiles c1 ~ (2-y), c2 ~ y."""
    rng = np.random.default_rng(seed)
    x1 = np.zeros(prob.dofs.n_scalar)
    x2 = np.zeros(prob.dofs.n_scalar)
    for ci in range(prob.mesh.n_cells):
        fac = 0.98 + 0.02 * rng.random()
        g = prob.sl2g[ci]
        ssp = prob.scalar[ci]
        x1[g] = ssp.dof_vector(lambda p: alpha * fac * (2.0 - p[:, 1]))
        x2[g] = ssp.dof_vector(lambda p: alpha * fac * p[:, 1])
    return x1, x2


def run_example3(case="A30", out_dir=None, nx=24, ny=8, grading=0.8,
                 tau=None, max_steps=1000, threshold=1e-6, seed=7, k=2,
                 progress=None):
    """Membrane-driven instability onset on the periodic strip [0,4]x[0,1].

    Rescaled momentum balance: transient/convective terms carry 1/Schmidt,
    the electric force kappa/eps.  Returns (records, crossing_time) where
    crossing_time is the first time the kinetic energy exceeds ``threshold``
    (None if it never does within ``max_steps``).
    """
    if case not in EX3_CASES:
        raise ValueError(f"unknown case {case!r}; pick from {sorted(EX3_CASES)}")
    alpha, beta, case_tau = EX3_CASES[case]
    tau = case_tau if tau is None else tau
    schmidt = 1e-3
    eps = 2e-3
    kappa_c = 0.5
    phys = Physics(kappa1=1.0, kappa2=1.0, eps=eps,
                   mass_scale=1.0 / schmidt, convect_scale=1.0 / schmidt,
                   force_scale=kappa_c / eps)
    mesh = generate_graded_tri_mesh(nx, ny, grading,
                                    domain=(0.0, 0.0, 4.0, 1.0))
    const = lambda v: (lambda p, t=0.0: np.full(len(p), float(v)))
    zero_v = lambda p, t=0.0: np.zeros((len(p), 2))
    bcs = BoundaryConditions(
        c1={"top": const(alpha), "bottom": const(2 * alpha)},
        c2={"top": const(alpha)},
        phi={"top": const(beta), "bottom": const(0.0)},
        u={"top": zero_v, "bottom": zero_v},
        periodic_lr=True)
    prob = CoupledProblem(mesh, k, physics=phys, bcs=bcs)
    st = prob.zero_state()
    x1, x2 = _perturbed_concentrations(prob, alpha, seed)
    prob.field(st, "c1")[:] = x1
    prob.field(st, "c2")[:] = x2
    prob.solve_potential(st)

    records = []
    crossing = None

    def record(pr, state):
        records.append({
            "t": state.t,
            "kinetic": kinetic_energy(pr, state),
            "mass_c1": global_mass(pr, state, "c1"),
            "mass_c2": global_mass(pr, state, "c2"),
            "picard_iters": pr.last_iterations})

    record(prob, st)
    records[0]["picard_iters"] = 0
    for step in range(max_steps):
        st = prob.step(st, tau)
        record(prob, st)
        if progress is not None:
            progress(step, st, records[-1])
        if crossing is None and records[-1]["kinetic"] >= threshold:
            crossing = st.t
            break
    if out_dir:
        write_timeseries_csv(
            os.path.join(out_dir, f"instability_{case}_series.csv"), records)
        export_fields(st, prob, os.path.join(
            out_dir, f"instability_{case}_final.vtk"))
    return records, crossing
