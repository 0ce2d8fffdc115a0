"""Chattering analysis for two-level systems under bang-bang control.

For ``H0 = diag(l1, l2)`` and ``H1 = [[0, r], [r*, 0]]`` the drift term
under a constant control ``u`` started at a zero point has the closed form
``T1(t) = 2 g / w_u * sin(w_u t) * (u |r|^2 (rho11 - rho22) - w12 r* rho12)``
with ``w_u = sqrt(w12^2 + 4 |r|^2 u^2)``.  A zero point at which
``|r| (rho11 - rho22) / |rho12| >= w12 / S`` leads to an infinitely fast
sign-switching bang-bang control.

Throughout, "level 1" means the target level and "level 2" the other one,
so systems whose target is stored second are handled by relabelling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_matrix
from .errors import DimensionError

RHO12_ZERO = 1e-12


@dataclass(frozen=True)
class TwoLevelParams:
    omega12: float
    r: complex
    gap: float
    S: float
    target_pos: int = 0

    def __post_init__(self):
        if not self.omega12 > 0:
            raise ValueError("target level must lie above the other level (omega12 > 0)")
        if abs(self.r) == 0:
            raise ValueError("control does not couple the two levels (r = 0)")
        if not self.gap > 0:
            raise ValueError("Lyapunov gap p - p1 must be positive")

    @classmethod
    def from_system(cls, sys, P, strength: float | None = None) -> "TwoLevelParams":
        if sys.dim != 2:
            raise DimensionError("two-level analysis requires N = 2")
        if sys.n_controls != 1:
            raise DimensionError("two-level analysis requires a single control")
        f = P.target.pos
        o = 1 - f
        h1 = sys.controls[0].matrix
        s = sys.controls[0].s_max if strength is None else float(strength)
        return cls(omega12=float(sys.h0_diag[f] - sys.h0_diag[o]), r=complex(h1[f, o]),
                   gap=P.gap, S=s, target_pos=f)

    def omega_u(self, u: float) -> float:
        return math.sqrt(self.omega12 ** 2 + 4 * abs(self.r) ** 2 * u * u)

    def populations(self, rho):
        """Return ``(rho11, rho22, rho12)`` in target-first labelling."""
        m = as_matrix(rho)
        f, o = self.target_pos, 1 - self.target_pos
        return m[f, f].real, m[o, o].real, m[f, o]

    def with_strength(self, s: float) -> "TwoLevelParams":
        return TwoLevelParams(self.omega12, self.r, self.gap, s, self.target_pos)


def t1_closed_form(params: TwoLevelParams, rho_zero, u: float, t) -> np.ndarray | float:
    """Drift term at time ``t`` after a zero point, under constant ``u``."""
    r11, r22, r12 = params.populations(rho_zero)
    z = np.conj(params.r) * r12
    if abs(z.imag) > 1e-9:
        raise ValueError("state is not at a zero point: Im(r* rho12) != 0")
    wu = params.omega_u(u)
    amp = u * abs(params.r) ** 2 * (r11 - r22) - params.omega12 * z.real
    return 2 * params.gap / wu * np.sin(wu * np.asarray(t, dtype=float)) * amp


def oscillation_lhs(params: TwoLevelParams, rho) -> float:
    r11, r22, r12 = params.populations(rho)
    if abs(r12) <= RHO12_ZERO:
        return math.nan
    return abs(params.r) * (r11 - r22) / abs(r12)


def oscillation_condition(params: TwoLevelParams, rho) -> bool:
    """True when a bang-bang control of strength ``params.S`` would chatter."""
    lhs = oscillation_lhs(params, rho)
    if math.isnan(lhs):
        return False
    return lhs >= params.omega12 / params.S


def in_invariant_stall(params: TwoLevelParams, rho) -> bool:
    """True when the coherence vanishes so the control stays zero forever."""
    return abs(params.populations(rho)[2]) <= RHO12_ZERO


def oscillation_onset_scan(sys, P, rho0, strength: float | None = None,
                           horizon: float = 10.0, dt: float = 1e-3):
    """Simulate pure bang-bang control and return the first zero-point time
    where the chattering condition holds, or ``None``.
    """
    from .controllers import ControllerConfig
    from .simulator import SimConfig, run

    params = TwoLevelParams.from_system(sys, P, strength)
    cfg = ControllerConfig("bang_bang", strengths=(params.S,))
    traj = run(sys, P.target, P, cfg, rho0,
               SimConfig(dt=dt, horizon=horizon, auto_excite=False))
    for i in traj.event_indices("zero_point"):
        if oscillation_condition(params, traj.rho[i]):
            return float(traj.t[i])
    return None
