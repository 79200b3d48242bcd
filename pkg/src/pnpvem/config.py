"""Flat key-value configuration files with dotted section names.

The on-disk format is one ``section.key = value`` pair per line, with ``#``
comments and blank lines ignored.  Values are typed on read: int, float, bool
(``true``/``false``) or string.  ``parse_config(serialize_config(d)) == d``.
"""

import math

import numpy as np

from .system import BoundaryConditions, Physics

__all__ = ["parse_config", "serialize_config", "load_config", "save_config",
           "SimulationConfig", "field_function"]


def _parse_value(raw):
    raw = raw.strip()
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text):
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        out[key.strip()] = _parse_value(raw)
    return out


def serialize_config(cfg):
    return "".join(f"{k} = {_format_value(cfg[k])}\n" for k in sorted(cfg))


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def save_config(path, cfg):
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))


_EXPR_NAMES = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
               "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "pi": math.pi,
               "where": np.where, "minimum": np.minimum, "maximum": np.maximum}


def field_function(spec):
    """Turn a config value into a callback (points, t) -> values.

    Numbers become constants; strings are expressions in x, y, t evaluated
    with numpy semantics (e.g. ``"sin(pi*x)*y"``).
    """
    if isinstance(spec, (int, float)):
        return lambda p, t=0.0: np.full(len(p), float(spec))
    code = compile(str(spec), "<config>", "eval")
    for name in code.co_names:
        if name not in _EXPR_NAMES and name not in ("x", "y", "t"):
            raise ValueError(f"unknown name {name!r} in expression {spec!r}")

    def g(p, t=0.0):
        env = dict(_EXPR_NAMES, x=p[:, 0], y=p[:, 1], t=t)
        vals = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(vals, float), (len(p),))

    return g


class SimulationConfig:
    """Typed view over a flat config dictionary.

    Recognized keys: ``physics.*`` (kappa1, kappa2, eps, e1, e2, mass_scale,
    convect_scale, force_scale), ``mesh`` (generator selector), ``k``,
    ``time.tau``, ``time.t_final``, ``bc.<field>.<tag>`` (constant or
    expression; velocity entries apply to both components unless given as
    ``bc.u.<tag>.x`` / ``.y``), ``bc.periodic_lr``, ``initial.<field>``,
    ``picard.tol``, ``picard.max_iters``, ``output.dir``, ``output.every``.
    """

    _PHYS_KEYS = ("kappa1", "kappa2", "eps", "e1", "e2",
                  "mass_scale", "convect_scale", "force_scale")

    def __init__(self, flat=None):
        self.flat = dict(flat or {})

    @classmethod
    def load(cls, path):
        return cls(load_config(path))

    def save(self, path):
        save_config(path, self.flat)

    def get(self, key, default=None):
        return self.flat.get(key, default)

    @property
    def mesh_selector(self):
        return self.flat.get("mesh", "hex:n=8")

    @property
    def k(self):
        return int(self.flat.get("k", 2))

    @property
    def tau(self):
        return float(self.flat.get("time.tau", 1e-3))

    @property
    def t_final(self):
        return float(self.flat.get("time.t_final", 0.1))

    @property
    def picard_tol(self):
        return float(self.flat.get("picard.tol", 1e-8))

    @property
    def max_iters(self):
        return int(self.flat.get("picard.max_iters", 50))

    def physics(self):
        kw = {k: float(self.flat[f"physics.{k}"])
              for k in self._PHYS_KEYS if f"physics.{k}" in self.flat}
        return Physics(**kw)

    def boundary_conditions(self):
        scalar_bc = {f: {} for f in ("c1", "c2", "phi")}
        u_parts = {}
        for key, val in self.flat.items():
            if not key.startswith("bc."):
                continue
            parts = key.split(".")
            if parts[1] == "periodic_lr":
                continue
            field, tag = parts[1], parts[2]
            if field in scalar_bc:
                scalar_bc[field][tag] = field_function(val)
            elif field == "u":
                comp = parts[3] if len(parts) > 3 else "both"
                u_parts.setdefault(tag, {})[comp] = field_function(val)
        u_bc = {}
        for tag, comps in u_parts.items():
            gx = comps.get("x", comps.get("both"))
            gy = comps.get("y", comps.get("both"))
            zero = lambda p, t=0.0: np.zeros(len(p))
            gx, gy = gx or zero, gy or zero
            u_bc[tag] = (lambda gx, gy: lambda p, t=0.0:
                         np.stack([gx(p, t), gy(p, t)], axis=1))(gx, gy)
        return BoundaryConditions(
            c1=scalar_bc["c1"], c2=scalar_bc["c2"], phi=scalar_bc["phi"],
            u=u_bc, periodic_lr=bool(self.flat.get("bc.periodic_lr", False)))

    def initial_fields(self):
        out = {}
        for field in ("c1", "c2", "phi"):
            key = f"initial.{field}"
            if key in self.flat:
                g = field_function(self.flat[key])
                out[field] = (lambda g: lambda p: g(p, 0.0))(g)
        return out
