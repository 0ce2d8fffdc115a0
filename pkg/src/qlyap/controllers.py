"""Lyapunov control laws.

Every law maps the drift terms ``T_k`` to controls ``u_k`` with
``u_k * T_k <= 0`` so that ``dV/dt = sum_k u_k T_k`` never increases ``V``:

=====================  ==============================================
``standard``           ``u = -K T``
``bang_bang``          ``u = -S sgn(T)`` (zero inside a dead zone)
``abb1``               ``u = 2S / (1 + exp(gamma T)) - S``
``abb2``               ``u = -S T / (|T| + eta)``
``switch_bb_std``      bang-bang until chattering would start, then standard
``switch_var_strength`` bang-bang, lowering ``S`` whenever it would chatter
=====================  ==============================================

The two switching laws are restricted to two-level systems and only change
behaviour at zero points of ``T_1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .oscillation import TwoLevelParams, oscillation_condition

FAMILIES = ("standard", "bang_bang", "abb1", "abb2", "switch_bb_std", "switch_var_strength")
STRENGTH_RULES = ("fixed_fraction", "coeff_varying")
SWITCHING_FAMILIES = ("switch_bb_std", "switch_var_strength")


def _tuple(x):
    if x is None:
        return None
    return tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ControllerConfig:
    family: str
    gains: tuple | None = None
    strengths: tuple | None = None
    gamma: tuple | None = None
    eta: tuple | None = None
    mu: float | None = None
    strength_rule: str = "fixed_fraction"
    zero_tol: float = 1e-9
    initial_strength: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown controller family {self.family!r}")
        for name in ("gains", "strengths", "gamma", "eta"):
            v = _tuple(getattr(self, name))
            object.__setattr__(self, name, v)
            if v is not None and any(not x > 0 for x in v):
                raise ValueError(f"{name} must all be positive")
        needs = {"standard": ("gains",), "bang_bang": ("strengths",),
                 "abb1": ("strengths", "gamma"), "abb2": ("strengths", "eta"),
                 "switch_bb_std": ("strengths",), "switch_var_strength": ("strengths",)}
        for name in needs[self.family]:
            if getattr(self, name) is None:
                raise ValueError(f"family {self.family} needs {name}")
        if self.family == "switch_var_strength":
            if self.mu is None or not 0 < self.mu < 1:
                raise ValueError("switch_var_strength needs mu in (0, 1)")
            if self.strength_rule not in STRENGTH_RULES:
                raise ValueError(f"strength_rule must be one of {STRENGTH_RULES}")
        if self.initial_strength is not None and not self.initial_strength > 0:
            raise ValueError("initial_strength must be positive")
        if not self.zero_tol >= 0:
            raise ValueError("zero_tol must be nonnegative")

    @property
    def sign_based(self) -> bool:
        return self.family in ("bang_bang",) + SWITCHING_FAMILIES

    def n_channels(self) -> int | None:
        for name in ("gains", "strengths", "gamma", "eta"):
            v = getattr(self, name)
            if v is not None and len(v) > 1:
                return len(v)
        return None


def _bc(v, T):
    return np.broadcast_to(np.asarray(v, dtype=float), T.shape)


def _sign(T, tol):
    return np.where(np.abs(T) <= tol, 0.0, np.sign(T))


def eval_standard(cfg: ControllerConfig, T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    return -_bc(cfg.gains, T) * T


def eval_bang_bang(cfg: ControllerConfig, T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    return -_bc(cfg.strengths, T) * _sign(T, cfg.zero_tol)


def eval_abb1(cfg: ControllerConfig, T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    s, g = _bc(cfg.strengths, T), _bc(cfg.gamma, T)
    # 2S/(1+e^x) - S == -S tanh(x/2); the tanh form cannot overflow
    return -s * np.tanh(0.5 * g * T)


def eval_abb2(cfg: ControllerConfig, T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    s, eta = _bc(cfg.strengths, T), _bc(cfg.eta, T)
    return -s * T / (np.abs(T) + eta)


@dataclass(frozen=True)
class ControllerState:
    """Mutable-by-replacement state of the switching laws."""

    mode: str = "bang_bang"
    strength: float | None = None
    last_sign: int = 0
    switches: int = 0


def _two_level_setup(cfg, sys, P, state, params=None):
    s0 = cfg.initial_strength if cfg.initial_strength is not None else cfg.strengths[0]
    s = state.strength if state.strength is not None else s0
    if params is None:
        return TwoLevelParams.from_system(sys, P, s), s
    return (params if params.S == s else params.with_strength(s)), s


def switching_gain(cfg: ControllerConfig, sys, P) -> float:
    """Gain of the standard phase; defaults to ``S / ((p - p1) |r|)``."""
    if cfg.gains is not None:
        return cfg.gains[0]
    params = TwoLevelParams.from_system(sys, P, cfg.strengths[0])
    return params.S / (params.gap * abs(params.r))


def eval_switching(cfg: ControllerConfig, state: ControllerState, sys, P, rho, T1: float,
                   params: TwoLevelParams | None = None, gain: float | None = None):
    """Bang-bang until the chattering condition holds at a zero point, then
    standard control for good.  Returns ``(u1, new_state)``.

    ``params`` and ``gain`` may be passed in precomputed to skip setup work.
    """
    params, s = _two_level_setup(cfg, sys, P, state, params)
    k1 = switching_gain(cfg, sys, P) if gain is None else gain
    T1 = float(T1)
    if state.mode == "standard":
        return -k1 * T1, replace(state, strength=s)
    if abs(T1) <= cfg.zero_tol:
        if oscillation_condition(params, rho):
            new = replace(state, mode="standard", strength=s, switches=state.switches + 1)
            return -k1 * T1, new
        return 0.0, replace(state, strength=s, last_sign=0)
    sgn = 1 if T1 > 0 else -1
    return -s * sgn, replace(state, strength=s, last_sign=sgn)


def next_strength(params: TwoLevelParams, rho, rule: str, mu: float) -> float:
    r11, r22, r12 = params.populations(rho)
    denom = abs(params.r) * (r11 - r22)
    if rule == "fixed_fraction":
        return mu * params.omega12 * abs(r12) / denom
    if rule == "coeff_varying":
        return 2 * mu * params.omega12 * abs(r12) ** 2 / denom
    raise ValueError(f"unknown strength rule {rule!r}")


def eval_var_strength(cfg: ControllerConfig, state: ControllerState, sys, P, rho, T1: float,
                      params: TwoLevelParams | None = None):
    """Bang-bang whose strength drops at every zero point where it would chatter."""
    params, s = _two_level_setup(cfg, sys, P, state, params)
    T1 = float(T1)
    if abs(T1) <= cfg.zero_tol:
        if oscillation_condition(params, rho):
            s_new = next_strength(params, rho, cfg.strength_rule, cfg.mu)
            assert not oscillation_condition(params.with_strength(s_new), rho), \
                "reduced strength still satisfies the chattering condition"
            return 0.0, replace(state, strength=s_new, last_sign=0,
                                switches=state.switches + 1)
        return 0.0, replace(state, strength=s, last_sign=0)
    sgn = 1 if T1 > 0 else -1
    return -s * sgn, replace(state, strength=s, last_sign=sgn)


_STATELESS = {"standard": eval_standard, "bang_bang": eval_bang_bang,
              "abb1": eval_abb1, "abb2": eval_abb2}


@dataclass
class Controller:
    """A control law bound to one system, with its running state.

    One instance belongs to one simulation run at a time.
    """

    cfg: ControllerConfig
    sys: object
    P: object
    state: ControllerState = field(default_factory=ControllerState)

    def __post_init__(self):
        m = self.sys.n_controls
        n = self.cfg.n_channels()
        if n is not None and n != m:
            raise ValueError(f"controller has {n} channels, system has {m} controls")
        if self.cfg.family in SWITCHING_FAMILIES:
            # also validates N = 2 and r != 0
            self._params = TwoLevelParams.from_system(self.sys, self.P, self.cfg.strengths[0])
            self._gain = switching_gain(self.cfg, self.sys, self.P)
        shape = (self.sys.n_controls,)
        c = self.cfg
        arr = {k: None if getattr(c, k) is None else np.broadcast_to(
            np.asarray(getattr(c, k)), shape).copy() for k in ("gains", "strengths", "gamma", "eta")}
        tol = c.zero_tol
        # same formulas as the eval_* functions, specialised to fixed-size arrays
        self._fast = {
            "standard": lambda T: -arr["gains"] * T,
            "bang_bang": lambda T: -arr["strengths"] * np.where(np.abs(T) <= tol, 0.0, np.sign(T)),
            "abb1": lambda T: -arr["strengths"] * np.tanh(0.5 * arr["gamma"] * T),
            "abb2": lambda T: -arr["strengths"] * T / (np.abs(T) + arr["eta"]),
        }.get(c.family)
        self.reset()

    def reset(self):
        self.state = ControllerState()

    @property
    def mode(self) -> str:
        if self.cfg.family in SWITCHING_FAMILIES:
            return self.state.mode
        return self.cfg.family

    @property
    def strength_bounds(self) -> np.ndarray:
        return self.sys.strengths

    def __call__(self, rho, T) -> np.ndarray:
        fam = self.cfg.family
        if fam in _STATELESS:
            return self._fast(T)
        if fam == "switch_bb_std":
            u, self.state = eval_switching(self.cfg, self.state, self.sys, self.P, rho, T[0],
                                           self._params, self._gain)
        else:
            u, self.state = eval_var_strength(self.cfg, self.state, self.sys, self.P, rho, T[0],
                                              self._params)
        return np.array([u])
