"""Conservation, energy, and error metrics plus convergence-rate extraction."""

import csv
import math

import numpy as np

from .quadrature import polygon_rule

__all__ = ["global_mass", "discrete_energy", "kinetic_energy", "max_divergence",
           "error_norms", "convergence_rates", "write_convergence_csv",
           "write_timeseries_csv"]


def global_mass(problem, state, field):
    """Sum over elements of the integral of the L2-projected concentration."""
    x = problem.field(state, field)
    return float(sum(problem.int_scalar[ci] @ x[problem.sl2g[ci]]
                     for ci in range(problem.mesh.n_cells)))


def discrete_energy(problem, state):
    """Half the squared discrete H1 norm of phi plus L2 norm of u."""
    phi = problem.field(state, "phi")
    u = problem.field(state, "u")
    Mg = problem.global_scalar_mass()
    Ag = problem.global_scalar_diffusion()
    M2g = problem.global_velocity_mass()
    return float(0.5 * (phi @ (Mg @ phi) + phi @ (Ag @ phi) + u @ (M2g @ u)))


def kinetic_energy(problem, state):
    u = problem.field(state, "u")
    return float(0.5 * u @ (problem.global_velocity_mass() @ u))


def max_divergence(problem, state):
    """Largest divergence-polynomial coefficient over all elements."""
    u = problem.field(state, "u")
    return float(max(np.abs(problem.vector[ci].div_coeff @ u[problem.vl2g[ci]]).max()
                     for ci in range(problem.mesh.n_cells)))


def error_norms(problem, state, exact, grads=None, degree=None):
    """L2 and H1-seminorm errors of computable projections per field.

    ``exact`` maps field name to f(points, t); ``grads`` maps scalar field
    names (and "u") to the gradient callback used for H1 seminorms. Fields:
    c1, c2, phi (both norms), u (both), p (L2 only). Returns
    {field: (l2, h1-or-None)}.
    """
    out = {}
    t = state.t
    deg = degree or (2 * problem.k + 2)
    rules = [polygon_rule(problem.mesh.geometry(ci), deg)
             for ci in range(problem.mesh.n_cells)]
    grads = grads or {}
    for name in ("c1", "c2", "phi"):
        if name not in exact:
            continue
        x = problem.field(state, name)
        l2 = 0.0
        h1 = 0.0
        for ci in range(problem.mesh.n_cells):
            ssp = problem.scalar[ci]
            rule = rules[ci]
            loc = x[problem.sl2g[ci]]
            vals = ssp.basis.evaluate(rule.points) @ (ssp.Pi0s @ loc)
            ex = exact[name](rule.points, t)
            l2 += np.dot(rule.weights, (vals - ex) ** 2)
            if name in grads:
                gc = ssp.PiNs @ loc
                gv = np.einsum("qjd,j->qd", ssp.basis.evaluate_gradient(rule.points), gc)
                ge = np.asarray(grads[name](rule.points, t), float)
                h1 += np.dot(rule.weights, ((gv - ge) ** 2).sum(axis=1))
        out[name] = (math.sqrt(l2), math.sqrt(h1) if name in grads else None)
    if "u" in exact:
        x = problem.field(state, "u")
        l2 = 0.0
        h1 = 0.0
        for ci in range(problem.mesh.n_cells):
            vsp = problem.vector[ci]
            rule = rules[ci]
            loc = x[problem.vl2g[ci]]
            nk = vsp.basis.dim
            c0 = vsp.Pi0s @ loc
            mono = vsp.basis.evaluate(rule.points)
            vals = np.stack([mono @ c0[:nk], mono @ c0[nk:]], axis=1)
            ex = np.asarray(exact["u"](rule.points, t), float)
            l2 += np.dot(rule.weights, ((vals - ex) ** 2).sum(axis=1))
            if "u" in grads:
                cn = vsp.PiNs @ loc
                g = vsp.basis.evaluate_gradient(rule.points)
                gv = np.stack([np.einsum("qjd,j->qd", g, cn[:nk]),
                               np.einsum("qjd,j->qd", g, cn[nk:])], axis=1)
                ge = np.asarray(grads["u"](rule.points, t), float)
                h1 += np.dot(rule.weights, ((gv - ge) ** 2).sum(axis=(1, 2)))
        out["u"] = (math.sqrt(l2), math.sqrt(h1) if "u" in grads else None)
    if "p" in exact:
        x = problem.field(state, "p")
        l2 = 0.0
        for ci in range(problem.mesh.n_cells):
            psp = problem.pressure[ci]
            rule = rules[ci]
            vals = psp.basis.evaluate(rule.points) @ x[problem.pl2g[ci]]
            ex = exact["p"](rule.points, t)
            l2 += np.dot(rule.weights, (vals - ex) ** 2)
        out["p"] = (math.sqrt(l2), None)
    return out


def convergence_rates(hs, errs):
    """log2-based rates between successive (h, error) pairs; NaN for the first."""
    out = [float("nan")]
    for i in range(1, len(hs)):
        if errs[i] == 0 or errs[i - 1] == 0:
            out.append(float("nan"))
        else:
            out.append(math.log(errs[i - 1] / errs[i]) / math.log(hs[i - 1] / hs[i]))
    return out


def write_convergence_csv(path, rows):
    """rows: iterable of dicts with h, tau, field, L2_err, H1_err, L2_rate, H1_rate."""
    cols = ["h", "tau", "field", "L2_err", "H1_err", "L2_rate", "H1_rate"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({c: row.get(c, "") for c in cols})


def write_timeseries_csv(path, records):
    """records: list of dicts sharing the same keys (t first)."""
    if not records:
        return
    cols = list(records[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(records)
