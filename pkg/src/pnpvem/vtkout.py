"""Legacy-VTK ASCII unstructured-grid output of solution fields.

Scalars (c1, c2, phi) and the velocity are written per vertex, evaluated
through the element H1 projectors and averaged over the cells sharing each
vertex; the pressure is written per cell as its element mean.
"""

import numpy as np

__all__ = ["export_fields", "read_vtk"]


def _vertex_averaged_scalar(problem, x):
    mesh = problem.mesh
    acc = np.zeros(mesh.n_vertices)
    cnt = np.zeros(mesh.n_vertices)
    for ci in range(mesh.n_cells):
        ssp = problem.scalar[ci]
        coeff = ssp.PiNs @ x[problem.sl2g[ci]]
        vals = ssp.basis.evaluate(mesh.vertices[mesh.cells[ci]]) @ coeff
        acc[mesh.cells[ci]] += vals
        cnt[mesh.cells[ci]] += 1.0
    return acc / np.maximum(cnt, 1.0)


def _vertex_averaged_velocity(problem, u):
    mesh = problem.mesh
    acc = np.zeros((mesh.n_vertices, 2))
    cnt = np.zeros(mesh.n_vertices)
    for ci in range(mesh.n_cells):
        vsp = problem.vector[ci]
        coeff = vsp.PiNs @ u[problem.vl2g[ci]]
        nk = vsp.basis.dim
        mono = vsp.basis.evaluate(mesh.vertices[mesh.cells[ci]])
        acc[mesh.cells[ci], 0] += mono @ coeff[:nk]
        acc[mesh.cells[ci], 1] += mono @ coeff[nk:]
        cnt[mesh.cells[ci]] += 1.0
    return acc / np.maximum(cnt, 1.0)[:, None]


def _cell_mean_pressure(problem, p):
    out = np.empty(problem.mesh.n_cells)
    for ci in range(problem.mesh.n_cells):
        psp = problem.pressure[ci]
        out[ci] = psp.H[0, :] @ p[problem.pl2g[ci]] / psp.geom.area
    return out


def export_fields(state, problem, path):
    """Write the state's fields on the problem's mesh as a legacy VTK file."""
    mesh = problem.mesh
    scalars = {name: _vertex_averaged_scalar(problem, problem.field(state, name))
               for name in ("c1", "c2", "phi")}
    vel = _vertex_averaged_velocity(problem, problem.field(state, "u"))
    pres = _cell_mean_pressure(problem, problem.field(state, "p"))
    try:
        with open(path, "w") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"coupled ionic-flow fields at t={state.t:.10g}\n")
            fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {mesh.n_vertices} double\n")
            for vx, vy in mesh.vertices:
                fh.write(f"{vx:.16g} {vy:.16g} 0\n")
            size = sum(len(c) + 1 for c in mesh.cells)
            fh.write(f"CELLS {mesh.n_cells} {size}\n")
            for cell in mesh.cells:
                fh.write(" ".join([str(len(cell))] + [str(v) for v in cell]) + "\n")
            fh.write(f"CELL_TYPES {mesh.n_cells}\n")
            fh.write("7\n" * mesh.n_cells)  # VTK_POLYGON
            fh.write(f"POINT_DATA {mesh.n_vertices}\n")
            for name, vals in scalars.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in vals:
                    fh.write(f"{v:.16g}\n")
            fh.write("VECTORS velocity double\n")
            for vx, vy in vel:
                fh.write(f"{vx:.16g} {vy:.16g} 0\n")
            fh.write(f"CELL_DATA {mesh.n_cells}\n")
            fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
            for v in pres:
                fh.write(f"{v:.16g}\n")
    except OSError as exc:
        raise OSError(f"cannot write field file {path!r}: {exc}") from exc


def read_vtk(path):
    """Parse a file written by export_fields; returns a plain dict."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    out = {"point_data": {}, "cell_data": {}}
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if not tok:
            i += 1
            continue
        if tok[0] == "POINTS":
            n = int(tok[1])
            pts = [list(map(float, lines[i + 1 + j].split()[:2]))
                   for j in range(n)]
            out["points"] = np.array(pts)
            i += n + 1
        elif tok[0] == "CELLS":
            n = int(tok[1])
            cells = []
            for j in range(n):
                row = list(map(int, lines[i + 1 + j].split()))
                cells.append(row[1:1 + row[0]])
            out["cells"] = cells
            i += n + 1
        elif tok[0] in ("POINT_DATA", "CELL_DATA"):
            section = "point_data" if tok[0] == "POINT_DATA" else "cell_data"
            count = int(tok[1])
            i += 1
            while i < len(lines):
                hdr = lines[i].split()
                if not hdr:
                    i += 1
                    continue
                if hdr[0] == "SCALARS":
                    vals = [float(lines[i + 2 + j]) for j in range(count)]
                    out[section][hdr[1]] = np.array(vals)
                    i += 2 + count
                elif hdr[0] == "VECTORS":
                    vals = [list(map(float, lines[i + 1 + j].split()[:2]))
                            for j in range(count)]
                    out[section][hdr[1]] = np.array(vals)
                    i += 1 + count
                else:
                    break
        else:
            i += 1
    return out
