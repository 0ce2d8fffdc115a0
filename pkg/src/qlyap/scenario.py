"""JSON scenario files: system, target, Lyapunov weights, law, run settings.

A scenario document looks like::

    {
      "schema_version": 1,
      "name": "two_level_abb1",
      "system": "two_level",
      "target": 1,
      "P": {"p": 1.0, "p_f": 0.5},
      "controller": {"family": "abb1", "strengths": [0.2], "gamma": [11]},
      "sim": {"dt": 0.001, "horizon": 100},
      "perturbation": {"epsilons": [0.01], "seeds": 10, "base_seed": 0},
      "output": {"csv": "trajectory.csv", "svg": false}
    }

``system`` is either a builtin name, ``{"builtin": name, "strengths": [...]}``
or an inline description with ``h0`` (diagonal list or matrix), ``controls``
(list of matrices) and ``strengths``; inline systems also need ``rho0``.
Complex entries are written as ``[re, im]`` pairs; plain numbers are read as
real.  Every field is checked before anything is computed.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .controllers import FAMILIES, STRENGTH_RULES, ControllerConfig
from .core import DensityMatrix, is_hermitian, validate_density
from .errors import QlyapError, ScenarioError
from .lyapunov import LyapunovObservable, build_p
from .model import BUILTIN_NAMES, Control, QuantumSystem, TargetSpec, builtin_system
from .simulator import SimConfig

SCHEMA_VERSION = 1
TOP_KEYS = {"schema_version", "name", "system", "rho0", "target", "P", "controller",
            "sim", "perturbation", "output"}
CONTROLLER_KEYS = {"family", "gains", "strengths", "gamma", "eta", "mu", "strength_rule",
                   "zero_tol", "initial_strength"}
SIM_KEYS = {"dt", "horizon", "record_stride", "zero_tol", "fidelity_targets", "auto_excite",
            "chatter_window", "chatter_dwell", "max_bisect"}
PERTURBATION_KEYS = {"epsilons", "seeds", "base_seed", "xi"}
OUTPUT_KEYS = {"csv", "svg"}
SWEEP_PARAMETERS = ("gamma", "eta", "S", "K", "dt")


def _fail(path, msg):
    raise ScenarioError(f"{path}: {msg}")


def _number(x, path):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        _fail(path, f"expected a number, got {x!r}")
    if not np.isfinite(x):
        _fail(path, "must be finite")
    return float(x)


def _number_list(x, path, positive=False):
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        x = [x]
    if not isinstance(x, list) or not x:
        _fail(path, "expected a non-empty list of numbers")
    out = [_number(v, f"{path}[{i}]") for i, v in enumerate(x)]
    if positive and any(v <= 0 for v in out):
        _fail(path, "entries must be positive")
    return out


def _complex(x, path):
    if isinstance(x, list):
        if len(x) != 2:
            _fail(path, "complex entries are [re, im] pairs")
        return complex(_number(x[0], path + "[0]"), _number(x[1], path + "[1]"))
    return complex(_number(x, path))


def decode_matrix(x, path="matrix") -> np.ndarray:
    if not isinstance(x, list) or not x or not all(isinstance(r, list) for r in x):
        _fail(path, "expected a list of rows")
    n = len(x)
    if any(len(r) != n for r in x):
        _fail(path, "matrix must be square")
    return np.array([[_complex(v, f"{path}[{i}][{j}]") for j, v in enumerate(r)]
                     for i, r in enumerate(x)])


def encode_matrix(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        _fail(path, "expected an object")
    extra = set(d) - allowed
    if extra:
        _fail(path, f"unknown field(s) {sorted(extra)}")


def _normalize_system(s):
    if isinstance(s, str):
        if s not in BUILTIN_NAMES:
            _fail("system", f"unknown builtin {s!r}; choose from {list(BUILTIN_NAMES)}")
        return s
    if not isinstance(s, dict):
        _fail("system", "expected a builtin name or an object")
    if "builtin" in s:
        _check_keys(s, {"builtin", "strengths"}, "system")
        out = {"builtin": _normalize_system(s["builtin"])}
        if "strengths" in s:
            out["strengths"] = _number_list(s["strengths"], "system.strengths", positive=True)
        return out
    _check_keys(s, {"h0", "controls", "strengths", "labels", "unit", "name"}, "system")
    for key in ("h0", "controls", "strengths"):
        if key not in s:
            _fail(f"system.{key}", "required for inline systems")
    h0 = s["h0"]
    if isinstance(h0, list) and h0 and all(isinstance(v, (int, float)) for v in h0):
        h0 = np.diag(_number_list(h0, "system.h0")).astype(complex)
    else:
        h0 = decode_matrix(h0, "system.h0")
    if not isinstance(s["controls"], list) or not s["controls"]:
        _fail("system.controls", "expected a non-empty list of matrices")
    ctrls = [decode_matrix(c, f"system.controls[{k}]") for k, c in enumerate(s["controls"])]
    for k, c in enumerate(ctrls):
        if c.shape != h0.shape:
            _fail(f"system.controls[{k}]", f"shape {c.shape} does not match h0 {h0.shape}")
        if not is_hermitian(c):
            _fail(f"system.controls[{k}]", "matrix is not Hermitian")
    strengths = _number_list(s["strengths"], "system.strengths", positive=True)
    if len(strengths) not in (1, len(ctrls)):
        _fail("system.strengths", "need one strength or one per control")
    off = h0 - np.diag(np.diag(h0))
    if np.max(np.abs(off)) > 1e-10 or np.max(np.abs(np.diag(h0).imag)) > 1e-10:
        _fail("system.h0", "must be real diagonal (energy representation)")
    out = {"h0": [float(v) for v in np.diag(h0).real],
           "controls": [encode_matrix(c) for c in ctrls], "strengths": strengths}
    if "labels" in s:
        if not isinstance(s["labels"], list) or len(s["labels"]) != len(ctrls):
            _fail("system.labels", "need one label per control")
        out["labels"] = [str(x) for x in s["labels"]]
    for key in ("unit", "name"):
        if key in s:
            out[key] = str(s[key])
    return out


def _normalize_controller(c):
    _check_keys(c, CONTROLLER_KEYS, "controller")
    if c.get("family") not in FAMILIES:
        _fail("controller.family", f"must be one of {list(FAMILIES)}")
    out = {"family": c["family"]}
    for key in ("gains", "strengths", "gamma", "eta"):
        if key in c:
            out[key] = _number_list(c[key], f"controller.{key}", positive=True)
    for key in ("mu", "zero_tol", "initial_strength"):
        if key in c:
            out[key] = _number(c[key], f"controller.{key}")
    if "strength_rule" in c:
        if c["strength_rule"] not in STRENGTH_RULES:
            _fail("controller.strength_rule", f"must be one of {list(STRENGTH_RULES)}")
        out["strength_rule"] = c["strength_rule"]
    try:
        ControllerConfig(**out)
    except ValueError as e:
        _fail("controller", str(e))
    return out


def _normalize_sim(s):
    _check_keys(s, SIM_KEYS, "sim")
    out = {}
    for key in ("dt", "horizon", "zero_tol", "chatter_dwell"):
        if key in s:
            out[key] = _number(s[key], f"sim.{key}")
    for key in ("record_stride", "chatter_window", "max_bisect"):
        if key in s:
            v = s[key]
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                _fail(f"sim.{key}", "expected a positive integer")
            out[key] = v
    if "auto_excite" in s:
        if not isinstance(s["auto_excite"], bool):
            _fail("sim.auto_excite", "expected true or false")
        out["auto_excite"] = s["auto_excite"]
    if "fidelity_targets" in s:
        th = _number_list(s["fidelity_targets"], "sim.fidelity_targets")
        if any(not 0 < x <= 1 for x in th):
            _fail("sim.fidelity_targets", "thresholds must lie in (0, 1]")
        out["fidelity_targets"] = th
    try:
        SimConfig(**out)
    except ValueError as e:
        _fail("sim", str(e))
    return out


def _normalize_perturbation(p):
    if p is None:
        return None
    _check_keys(p, PERTURBATION_KEYS, "perturbation")
    out = {"epsilons": _number_list(p.get("epsilons", [0.01]), "perturbation.epsilons")}
    if any(e < 0 for e in out["epsilons"]):
        _fail("perturbation.epsilons", "must be nonnegative")
    for key, default in (("seeds", 10), ("base_seed", 0)):
        v = p.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            _fail(f"perturbation.{key}", "expected a nonnegative integer")
        out[key] = v
    if "xi" in p:
        out["xi"] = _number(p["xi"], "perturbation.xi")
    return out


def _normalize_output(o):
    _check_keys(o, OUTPUT_KEYS, "output")
    out = {"csv": str(o.get("csv", "trajectory.csv")), "svg": o.get("svg", False)}
    if not isinstance(out["svg"], bool):
        _fail("output.svg", "expected true or false")
    return out


def normalize(doc) -> dict:
    """Validate a scenario document and return its canonical form."""
    _check_keys(doc, TOP_KEYS, "scenario")
    if doc.get("schema_version") != SCHEMA_VERSION:
        _fail("schema_version", f"must be {SCHEMA_VERSION}")
    for key in ("system", "target", "controller"):
        if key not in doc:
            _fail(key, "required")
    out = {"schema_version": SCHEMA_VERSION, "name": str(doc.get("name", ""))}
    out["system"] = _normalize_system(doc["system"])
    t = doc["target"]
    if isinstance(t, bool) or not isinstance(t, int) or t < 1:
        _fail("target", "expected a one-based level index")
    out["target"] = t
    if "rho0" in doc:
        out["rho0"] = encode_matrix(decode_matrix(doc["rho0"], "rho0"))
    elif isinstance(out["system"], dict) and "h0" in out["system"]:
        _fail("rho0", "required for inline systems")
    P = doc.get("P", {"p": 1.0, "p_f": 0.5})
    _check_keys(P, {"p", "p_f", "diag"}, "P")
    if "diag" in P:
        if set(P) != {"diag"}:
            _fail("P", "give either diag or p/p_f")
        out["P"] = {"diag": _number_list(P["diag"], "P.diag")}
    else:
        out["P"] = {"p": _number(P.get("p", 1.0), "P.p"), "p_f": _number(P.get("p_f", 0.5), "P.p_f")}
    out["controller"] = _normalize_controller(doc["controller"])
    out["sim"] = _normalize_sim(doc.get("sim", {}))
    pert = _normalize_perturbation(doc.get("perturbation"))
    if pert is not None:
        out["perturbation"] = pert
    out["output"] = _normalize_output(doc.get("output", {}))
    return out


@dataclass
class Setup:
    """Objects built from a scenario, ready for ``simulator.run``."""

    system: QuantumSystem
    target: TargetSpec
    P: LyapunovObservable
    controller: ControllerConfig
    rho0: DensityMatrix
    sim: SimConfig


@dataclass
class Scenario:
    doc: dict = field(default_factory=dict)

    def __post_init__(self):
        self.doc = normalize(self.doc)

    @property
    def name(self) -> str:
        return self.doc["name"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"invalid JSON: {e}") from None
        return cls(doc)

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except OSError as e:
            raise ScenarioError(f"cannot read scenario {path}: {e}") from None

    def system_key(self):
        """Identity of system and target, used to check comparisons."""
        return json.dumps([self.doc["system"], self.doc["target"], self.doc.get("rho0")],
                          sort_keys=True)

    def build(self) -> Setup:
        d = self.doc
        s = d["system"]
        rho0 = None
        try:
            if isinstance(s, str) or "builtin" in s:
                name = s if isinstance(s, str) else s["builtin"]
                system, _, rho0 = builtin_system(name)
                if isinstance(s, dict) and "strengths" in s:
                    st = np.broadcast_to(np.asarray(s["strengths"]), (system.n_controls,))
                    system = QuantumSystem(system.h0_diag, tuple(
                        Control(c.matrix, v, c.label) for c, v in zip(system.controls, st)),
                        unit=system.unit, name=system.name)
            else:
                ctrls = [decode_matrix(c) for c in s["controls"]]
                system = QuantumSystem.from_matrices(
                    np.asarray(s["h0"]), ctrls, s["strengths"], labels=s.get("labels"),
                    unit=s.get("unit", ""), name=s.get("name", d["name"]))
            n = system.dim
            if d["target"] > n:
                _fail("target", f"index {d['target']} exceeds dimension {n}")
            target = TargetSpec(d["target"], n)
            if "rho0" in d:
                m = decode_matrix(d["rho0"], "rho0")
                if m.shape != (n, n):
                    _fail("rho0", f"shape {m.shape} does not match the system")
                rho0 = DensityMatrix(m)
            validate_density(rho0)
            if "diag" in d["P"]:
                if len(d["P"]["diag"]) != n:
                    _fail("P.diag", f"needs {n} entries")
                P = LyapunovObservable(np.array(d["P"]["diag"]), target)
            else:
                P = build_p(target, n, d["P"]["p"], d["P"]["p_f"])
            ctrl = ControllerConfig(**d["controller"])
            nch = ctrl.n_channels()
            if nch is not None and nch != system.n_controls:
                _fail("controller", f"{nch} channels for a system with {system.n_controls} controls")
            return Setup(system, target, P, ctrl, rho0, SimConfig(**d["sim"]))
        except ScenarioError:
            raise
        except (QlyapError, ValueError) as e:
            raise ScenarioError(f"scenario {d['name'] or '<unnamed>'}: {e}") from None

    def with_parameter(self, name: str, value: float) -> "Scenario":
        """Copy with one sweep parameter replaced.

        ``name`` is ``dt`` or one of ``gamma``, ``eta``, ``S``, ``K`` with an
        optional one-based channel suffix (``gamma_1``); without a suffix all
        channels are set.  ``S`` also raises the system bound to match.
        """
        base, _, idx = name.partition("_")
        if base not in SWEEP_PARAMETERS or (base == "dt" and idx):
            raise ScenarioError(f"unknown sweep parameter {name!r}; use one of "
                                f"{list(SWEEP_PARAMETERS)} with optional _k suffix")
        doc = self.to_dict()
        if base == "dt":
            doc["sim"]["dt"] = float(value)
            return Scenario(doc)
        key = {"gamma": "gamma", "eta": "eta", "S": "strengths", "K": "gains"}[base]
        setup = self.build()
        m = setup.system.n_controls
        cur = doc["controller"].get(key)
        if cur is None:
            raise ScenarioError(f"controller family {doc['controller']['family']} has no {key}")
        vals = list(np.broadcast_to(np.asarray(cur, dtype=float), (m,)))
        if idx:
            if not idx.isdigit() or not 1 <= int(idx) <= m:
                raise ScenarioError(f"channel index in {name!r} out of range 1..{m}")
            vals[int(idx) - 1] = float(value)
        else:
            vals = [float(value)] * m
        doc["controller"][key] = [float(v) for v in vals]
        if base == "S":
            bounds = np.maximum(setup.system.strengths, vals)
            sysdoc = doc["system"]
            if isinstance(sysdoc, str) or "builtin" in sysdoc:
                name0 = sysdoc if isinstance(sysdoc, str) else sysdoc["builtin"]
                doc["system"] = {"builtin": name0, "strengths": [float(b) for b in bounds]}
            else:
                sysdoc["strengths"] = [float(b) for b in bounds]
        return Scenario(doc)


def builtin_scenario_names() -> list[str]:
    root = resources.files("qlyap") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_builtin(name: str) -> Scenario:
    """Load a shipped scenario by file stem (see ``builtin_scenario_names``)."""
    path = resources.files("qlyap") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ScenarioError(f"no builtin scenario {name!r}; have {builtin_scenario_names()}")
    return Scenario.from_json(path.read_text())


def resolve(ref: str) -> Scenario:
    """Load ``ref`` as a file path, falling back to a builtin scenario name."""
    if os.path.exists(ref):
        return Scenario.load(ref)
    stem = os.path.basename(ref)
    if stem.endswith(".json"):
        stem = stem[:-5]
    if stem in builtin_scenario_names():
        return load_builtin(stem)
    raise ScenarioError(f"scenario {ref!r} not found")
