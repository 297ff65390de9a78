"""Run configuration: TOML text <-> validated :class:`RunConfig`.

The file has top-level ``seed``, ``workers``, ``out`` and ``command`` keys and
the sections ``[model]``, ``[scheme]``, ``[forcing]``, ``[response]`` and
``[estimator]``. Every section except ``[estimator]`` names its variant with
``kind``. Validation collects every problem before reporting.
"""

from __future__ import annotations

import copy
import difflib
import sys
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import forcings as fc
from . import integrators as ig
from . import models as md
from .models import ContractError

COMMANDS = ("sample", "nemd", "scan", "gk", "einstein", "ttcf", "transient", "norton", "report")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


# kind -> {parameter: default}; ``...`` marks a required parameter
MODELS = {
    "FreeParticle": {"dim": 1, "mass": 1.0},
    "Harmonic": {"stiffness": 1.0, "dim": 1, "mass": 1.0},
    "ConvexQuartic": {"stiffness": 1.0, "quartic": 1.0, "dim": 1, "mass": 1.0},
    "EntropicSwitch": {"mass": 1.0},
    "AtomChain": {"bond": "Rotor", "n": ..., "left": "free", "right": "free", "alpha": 1.0, "beta": 1.0},
    "LennardJonesFluid": {"N": ..., "L": ..., "epsilon": 1.0, "sigma": 1.0, "r_on": 2.0, "r_cut": 2.5,
                          "mass": 1.0, "neighbor": "pairs"},
}
SCHEMES = {
    "BAOAB": {"dt": ..., "gamma": 1.0, "beta": 1.0},
    "EulerMaruyama": {"dt": ..., "beta": 1.0},
    "Verlet": {"dt": ...},
    "ChainSplitting": {"dt": ..., "gamma_L": 1.0, "gamma_R": 1.0, "T_L": 1.0, "T_R": 1.0},
}
_GRID = {"eta": [], "r": []}
FORCINGS = {
    "ConstantForce": {"F": ..., **_GRID},
    "ShearSTF": {"L": ..., **_GRID},
    "TemperatureProfile": {"profile": "constant", "L": 1.0, **_GRID},
    "BoundaryGradient": dict(_GRID),
    "BulkRotorDrive": dict(_GRID),
    "SyntheticCombo": {"base": "BulkRotorDrive", "a": 1.0, "extra": "BulkThermostats", **_GRID},
}
RESPONSES = {
    "VelocityAlongF": {"F": ...},
    "FourierFluxRe": {},
    "FourierFluxIm": {},
    "EnergyCurrentTotal": {},
    "PerBondCurrent": {"i": ...},
    "Position": {"i": 0},
}
ESTIMATOR = {
    "K": 64,               # replicas
    "T": 10.0,             # production time per replica
    "T_corr": None,        # correlation truncation (GK, TTCF, transient); None = automatic / full
    "burn_in": None,       # production steps discarded (None: 10% of the run)
    "equilibrate": 0.0,    # reference-dynamics time before production
    "stride": 1,
    "weight": "Bartlett",
    "degree": 2,
    "n_batches": 32,
    "block": 256,
    "dts": [],
    "alpha": 0.0,
    "reference": None,
}
SECTIONS = {"model": MODELS, "scheme": SCHEMES, "forcing": FORCINGS, "response": RESPONSES}
TOP = {"seed": 0, "workers": 1, "out": "out", "command": None}


@dataclass
class RunConfig:
    model: dict
    scheme: dict
    forcing: Optional[dict] = None
    response: Optional[dict] = None
    estimator: dict = field(default_factory=lambda: dict(ESTIMATOR))
    seed: int = 0
    workers: int = 1
    out: str = "out"
    command: Optional[str] = None


def _suggest(key, options):
    near = difflib.get_close_matches(key, list(options), n=1, cutoff=0.5)
    return f" (did you mean {near[0]!r}?)" if near else f" (valid: {', '.join(sorted(options))})"


def _fill(section: str, raw: dict, table: dict, errors: list) -> Optional[dict]:
    if not isinstance(raw, dict):
        errors.append(f"[{section}] must be a table")
        return None
    if "kind" not in raw:
        errors.append(f"[{section}] missing 'kind'")
        return None
    kind = raw["kind"]
    if kind not in table:
        errors.append(f"[{section}] unknown kind {kind!r}{_suggest(str(kind), table)}")
        return None
    spec = table[kind]
    out = {"kind": kind}
    for k, v in raw.items():
        if k == "kind":
            continue
        if k not in spec:
            errors.append(f"[{section}] unknown key {k!r} for {kind}{_suggest(k, spec)}")
            continue
        out[k] = v
    for k, d in spec.items():
        if k not in out:
            if d is ...:
                errors.append(f"[{section}] {kind} requires {k!r}")
            else:
                out[k] = copy.deepcopy(d)
    return out


def _check_types(section, d, errors):
    for k, v in d.items():
        if k == "kind" or v is None:
            continue
        if isinstance(v, list):
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                errors.append(f"[{section}] {k} must be a list of numbers")
            elif k in ("eta", "r") and len(set(v)) != len(v):
                errors.append(f"[{section}] {k} grid values must be distinct")


def parse_dict(data: dict) -> RunConfig:
    errors: list[str] = []
    for k in data:
        if k not in TOP and k not in SECTIONS and k != "estimator":
            errors.append(f"unknown top-level key {k!r}{_suggest(k, list(TOP) + list(SECTIONS) + ['estimator'])}")
    secs = {}
    for name, table in SECTIONS.items():
        if name in data:
            secs[name] = _fill(name, data[name], table, errors)
            if secs[name] is not None:
                _check_types(name, secs[name], errors)
        elif name in ("model", "scheme"):
            errors.append(f"missing [{name}] section")
            secs[name] = None
        else:
            secs[name] = None
    est = dict(ESTIMATOR)
    for k, v in (data.get("estimator") or {}).items():
        if k not in ESTIMATOR:
            errors.append(f"[estimator] unknown key {k!r}{_suggest(k, ESTIMATOR)}")
        else:
            est[k] = v
    _check_types("estimator", est, errors)
    top = {k: data.get(k, d) for k, d in TOP.items()}
    if top["command"] is not None and top["command"] not in COMMANDS:
        errors.append(f"unknown command {top['command']!r}{_suggest(str(top['command']), COMMANDS)}")
    if not isinstance(top["seed"], int) or top["seed"] < 0:
        errors.append("seed must be a non-negative integer")
    cfg = RunConfig(secs["model"], secs["scheme"], secs["forcing"], secs["response"], est, **top)
    if secs["model"] is not None and secs["scheme"] is not None:
        for builder in (build_model, build_scheme, build_forcing, build_response):
            try:
                builder(cfg)
            except (ContractError, TypeError, ValueError) as e:
                errors.append(f"{builder.__name__.removeprefix('build_')}: {e}")
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse and validate TOML text; raises :class:`ConfigError` listing all problems."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"syntax: {e}"]) from None
    return parse_dict(data)


def _strip_none(d):
    if isinstance(d, dict):
        return {k: _strip_none(v) for k, v in d.items() if v is not None}
    return d


def to_dict(cfg: RunConfig) -> dict:
    return _strip_none(asdict(cfg))


def serialize(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def apply_override(data: dict, assignment: str) -> dict:
    """Apply ``section.key=value`` (value in TOML syntax, bare strings allowed)."""
    if "=" not in assignment:
        raise ConfigError([f"override {assignment!r} is not key=value"])
    key, raw = assignment.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    *path, last = key.strip().split(".")
    d = data
    for p in path:
        d = d.setdefault(p, {})
    d[last] = value
    return data


# ---------------------------------------------------------------- builders

def build_model(cfg: RunConfig):
    m = dict(cfg.model)
    kind = m.pop("kind")
    if kind == "AtomChain":
        bond = m.pop("bond")
        a, b = m.pop("alpha"), m.pop("beta")
        bonds = {"FPUT": lambda: md.FPUT(a, b), "Rotor": md.Rotor, "Harmonic": md.HarmonicBond}
        if bond not in bonds:
            raise ContractError(f"unknown bond {bond!r}{_suggest(bond, bonds)}")
        return md.AtomChain(bonds[bond](), **m)
    return getattr(md, kind)(**m)


def build_scheme(cfg: RunConfig):
    s = dict(cfg.scheme)
    return getattr(ig, s.pop("kind"))(**s)


def build_forcing(cfg: RunConfig):
    if cfg.forcing is None:
        return None
    f = {k: v for k, v in cfg.forcing.items() if k not in ("eta", "r")}
    kind = f.pop("kind")
    if kind == "ConstantForce":
        return fc.ConstantForce(tuple(f["F"]))
    if kind == "SyntheticCombo":
        base = f.pop("base")
        if base not in ("BoundaryGradient", "BulkRotorDrive"):
            raise ContractError(f"unsupported synthetic base {base!r}")
        return fc.SyntheticCombo(getattr(fc, base)(), **f)
    return getattr(fc, kind)(**f)


def build_response(cfg: RunConfig):
    if cfg.response is None:
        return None
    r = dict(cfg.response)
    kind = r.pop("kind")
    if kind == "VelocityAlongF":
        return fc.VelocityAlongF(tuple(r["F"]))
    return getattr(fc, kind)(**r)
