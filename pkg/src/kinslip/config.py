"""Plain-text run configuration.

Grammar (one entry per line)::

    # comment                      full-line or trailing comments start with '#'
    section.key = value            dotted keys; whitespace around '=' is ignored
    sweep.values = 0.2, 0.1, 0.05  comma separated values become lists

Values are parsed as int, float, true/false or a string, in that order.
Keys are case sensitive.  Unknown keys are rejected so that typos surface as
configuration errors.  Laws are given as two numbers ``c, p`` meaning c x^p.
"""

from __future__ import annotations

import copy
from pathlib import Path

DEFAULTS: dict = {
    # single runs
    "run.mode": "kinetic",                 # kinetic | ns | euler
    "run.snapshot_every": 0,               # steps between snapshot rows; 0 = initial and final only
    "grid.nx": 32,
    "grid.ny": 32,
    "grid.Lx": 1.0,
    "time.t_end": 0.1,
    "time.dt_cfl": 0.9,                    # kinetic CFL number
    "time.s_max": 2.0,                     # cap on the collision stiffness dt / (eps^(2+q) tau)
    "lattice.nodes_per_axis": 24,
    "lattice.cutoff": 6.0,
    "lattice.rule": "uniform",             # uniform | gauss-hermite
    "regime.epsilon": 0.1,
    "regime.q": 1.0,
    "regime.alpha_law": [1.0, 2.0],        # alpha(eps) = c eps^p for runs
    "wall.alpha": "law",                   # a number in [0, 1] overrides regime.alpha_law
    "wall.alpha_law": [1.0, 2.0],          # alpha(eps) = c eps^p for kinetic sweeps
    "collision.kind": "bgk",               # bgk | quadrature-boltzmann
    "collision.tau": 1.0,
    "collision.kernel.C_b": 1.0,
    "collision.kernel.angles": 32,
    "transport.scheme": "upwind",          # upwind | minmod | linear
    "fluid.nu": 1e-2,
    "fluid.lambda": 0.1,
    "fluid.lambda_law": [1.0, 0.5],        # lambda(nu) = c nu^p for ns-to-euler sweeps
    "fluid.scheme_order": 3,
    "fluid.cfl": 0.2,
    "flow.kind": "shear",                  # shear | zero
    "flow.a": 0.35,
    "flow.b": 0.15,
    "audit.enabled": True,
    "audit.every": 10,
    "audit.eta": 0.5,
    # sweeps
    "sweep.mode": "kinetic-to-euler",      # ns-to-euler | kinetic-slip-extraction | kinetic-to-euler
    "sweep.values": [0.2, 0.1, 0.05, 0.025],
    "sweep.alpha0": 1.0,                   # slip extraction: alpha = alpha0 eps
    "sweep.nu_hold": 0.0,                  # slip extraction: tau = nu_hold / eps^q when > 0
    "sweep.n_out": 50,
    "sweep.reference_refine": 2,
    "sweep.slip_exclude": 0.15,
}

# keys that accept a number or a string
_MIXED = {"wall.alpha"}


class ConfigError(ValueError):
    pass


def _scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def parse_value(text: str):
    if "," in text:
        return [_scalar(p) for p in text.split(",") if p.strip()]
    return _scalar(text)


def _coerce(key, value, default, where):
    if key in _MIXED:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        return value
    if isinstance(default, list):
        items = value if isinstance(value, list) else [value]
        for x in items:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(f"{where}{key} expects numbers, got {x!r}")
        return [float(x) for x in items]
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if type(default) is not type(value):
        raise ConfigError(f"{where}{key} expects {type(default).__name__}, got {value!r}")
    return value


def parse_config(text: str, defaults: dict | None = None) -> dict:
    """Parse configuration text on top of ``defaults`` (``DEFAULTS`` when omitted)."""
    cfg = copy.deepcopy(DEFAULTS if defaults is None else defaults)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in cfg:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cfg[key] = _coerce(key, parse_value(val), cfg[key], f"line {lineno}: ")
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    return parse_config(p.read_text())


def dump_config(cfg: dict) -> str:
    """Serialize back to the key = value grammar (sorted keys, round-trips through parse_config)."""
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, list):
            s = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            s = s + "," if len(v) == 1 else s
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{k} = {s}")
    return "\n".join(lines) + "\n"
