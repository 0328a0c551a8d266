"""JSON system files.

Linear files carry exact rationals as ``"p/q"`` strings (integers are also
accepted, floats are rejected). Nonlinear files name a registered plant or
a template; their parameters are plain floats.

Linear::

    {"kind": "linear", "E": [["1", "0"], ...], "A": ..., "B": ..., "C": ...}

Nonlinear::

    {"kind": "nonlinear",
     "plant": "paper-sec5"  |  {"template": "linear-normalform", "r": [2], "Q": ..., ...},
     "controller": {"k_hat": 2.0, "phi": "default",
                    "reference": [{"c": 0, "a": 1, "w": 2, "p": 1.5707963267948966}, ...]},
     "simulation": {"t_end": 10, "tol": 1e-8}}

A reference channel ``{"c", "a", "w", "p"}`` means ``c + a sin(w t + p)``.
"""

from __future__ import annotations

import json
from dataclasses import fields
from fractions import Fraction

from . import registry
from .closed_loop import SimulationConfig
from .dae_analysis import LinearDae
from .funnel import default_phi, poly_exp_arctan_phi
from .jets import jsin


class ConfigError(ValueError):
    """Malformed system file; the message names the offending field."""


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _rational(x, where: str) -> Fraction:
    if isinstance(x, bool) or isinstance(x, float):
        raise ConfigError(f"{where}: {x!r} is not an exact rational; write it as a \"p/q\" string")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip().replace("−", "-"))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{where}: cannot parse {x!r} as p/q") from None
    raise ConfigError(f"{where}: unexpected entry {x!r}")


def _rational_matrix(doc: dict, name: str):
    if name not in doc:
        raise ConfigError(f"field {name!r} is missing")
    M = doc[name]
    if not isinstance(M, list) or not M or not all(isinstance(row, list) for row in M):
        raise ConfigError(f"field {name!r} must be a non-empty list of rows")
    width = len(M[0])
    for i, row in enumerate(M):
        if len(row) != width:
            raise ConfigError(f"field {name!r}: row {i + 1} has {len(row)} entries, expected {width}")
    return [[_rational(x, f"{name}[{i + 1}][{j + 1}]") for j, x in enumerate(row)]
            for i, row in enumerate(M)]


def parse_linear(doc: dict) -> LinearDae:
    if doc.get("kind", "linear") != "linear":
        raise ConfigError(f"expected kind 'linear', got {doc.get('kind')!r}")
    if "registry" in doc:
        try:
            return registry.linear_system(doc["registry"])
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
    mats = {n: _rational_matrix(doc, n) for n in "EABC"}
    try:
        return LinearDae(**mats)
    except ValueError as exc:
        raise ConfigError(f"dimension mismatch: {exc}") from None


def linear_to_json(sys: LinearDae) -> dict:
    return sys.to_json()


def _reference(spec, m: int):
    if spec is None:
        return None
    if not isinstance(spec, list) or len(spec) != m:
        raise ConfigError(f"controller.reference must list {m} channels")
    out = []
    for i, ch in enumerate(spec):
        try:
            c, a, w, p = (float(ch.get(k, 0.0)) for k in ("c", "a", "w", "p"))
        except (AttributeError, TypeError, ValueError):
            raise ConfigError(f"controller.reference[{i + 1}] must be an object with c, a, w, p") from None
        out.append(lambda t, c=c, a=a, w=w, p=p: c + a * jsin(w * t + p))
    return out


def _phi(spec):
    if spec is None or spec in ("default", "paper-sec5"):
        return default_phi()
    if isinstance(spec, dict) and spec.get("family") == "poly-exp-arctan":
        keys = ("a", "b", "c", "d", "e")
        try:
            params = {k: float(spec[k]) for k in keys if k in spec}
        except (TypeError, ValueError):
            raise ConfigError("controller.phi parameters must be numbers") from None
        return poly_exp_arctan_phi(**params)
    raise ConfigError(f"controller.phi: unknown funnel function {spec!r}")


_TEMPLATE_KEYS = ("r", "Q", "A12", "R1", "S1", "P1", "Gamma11", "R2", "S2", "P2", "Gamma21",
                  "eta0", "history", "consistent")


def parse_nonlinear(doc: dict):
    """Return ``(plant, controller, SimulationConfig)``."""
    if doc.get("kind") != "nonlinear":
        raise ConfigError(f"expected kind 'nonlinear', got {doc.get('kind')!r}")
    ctrl_doc = doc.get("controller", {}) or {}
    if not isinstance(ctrl_doc, dict):
        raise ConfigError("controller must be an object")
    kwargs = {}
    if "k_hat" in ctrl_doc:
        try:
            kwargs["k_hat"] = float(ctrl_doc["k_hat"])
        except (TypeError, ValueError):
            raise ConfigError("controller.k_hat must be a number") from None
    kwargs["phi"] = _phi(ctrl_doc.get("phi"))
    plant_doc = doc.get("plant")
    try:
        if isinstance(plant_doc, str):
            if plant_doc not in registry.NONLINEAR:
                raise ConfigError(f"plant: unknown registered plant {plant_doc!r}")
            plant, ctrl = registry.nonlinear_system(plant_doc, **kwargs)
            ref = _reference(ctrl_doc.get("reference"), plant.m)
            if ref is not None:
                plant, ctrl = registry.nonlinear_system(plant_doc, yref=ref, **kwargs)
        elif isinstance(plant_doc, dict) and plant_doc.get("template") == "linear-normalform":
            params = {k: plant_doc[k] for k in _TEMPLATE_KEYS if k in plant_doc}
            missing = [k for k in ("r", "Q", "A12") if k not in params]
            if missing:
                raise ConfigError(f"plant: template needs {missing}")
            m = len(plant_doc["A12"][0]) if plant_doc["A12"] else 0
            ref = _reference(ctrl_doc.get("reference"), m)
            if ref is not None:
                kwargs["yref"] = ref
            plant, ctrl = registry.linear_normalform_template(**params, **kwargs)
        elif isinstance(plant_doc, dict) and plant_doc.get("template") == "integrator":
            ref = _reference(ctrl_doc.get("reference"), 1)
            if ref is not None:
                kwargs["yref"] = ref
            plant, ctrl = registry.integrator_plant(y0=float(plant_doc.get("y0", 0.0)), **kwargs)
        else:
            raise ConfigError("plant must be a registered name or a {\"template\": ...} object")
    except ConfigError:
        raise
    except (ValueError, TypeError, IndexError, KeyError) as exc:
        raise ConfigError(f"plant: {exc}") from None
    sim_doc = doc.get("simulation", {}) or {}
    allowed = {f.name for f in fields(SimulationConfig)}
    unknown = set(sim_doc) - allowed
    if unknown:
        raise ConfigError(f"simulation: unknown settings {sorted(unknown)}")
    try:
        cfg = SimulationConfig(**sim_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"simulation: {exc}") from None
    return plant, ctrl, cfg


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False)
