"""Lyapunov observable, drift terms and the sizing rules built on them.

The Lyapunov function is ``V = tr(P rho)`` with a diagonal ``P`` that puts
one value ``p_f`` on the target level and a common larger value ``p`` on all
others.  Its time derivative is ``sum_k u_k T_k`` with
``T_k = tr(-i rho [P, H_k])``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_matrix, fidelity
from .errors import NumericalError
from .model import QuantumSystem, TargetSpec


@dataclass(frozen=True)
class LyapunovObservable:
    p_diag: np.ndarray
    target: TargetSpec

    def __post_init__(self):
        d = np.asarray(self.p_diag, dtype=float).ravel()
        d.setflags(write=False)
        object.__setattr__(self, "p_diag", d)
        f = self.target.pos
        if not 0 <= f < len(d):
            raise ValueError("target index out of range for P")
        if np.any(d < 0):
            raise ValueError("P must be positive semidefinite")
        others = np.delete(d, f)
        if not np.allclose(others, others[0], rtol=0, atol=1e-15):
            raise ValueError("all non-target diagonal entries of P must be equal")
        if not others[0] > d[f]:
            raise ValueError("P needs p > p_f on the non-target levels")

    @property
    def dim(self) -> int:
        return len(self.p_diag)

    @property
    def p(self) -> float:
        return float(np.delete(self.p_diag, self.target.pos)[0])

    @property
    def p_f(self) -> float:
        return float(self.p_diag[self.target.pos])

    @property
    def gap(self) -> float:
        return self.p - self.p_f

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.p_diag).astype(complex)


def build_p(target: TargetSpec, n: int, p: float = 1.0, p_f: float = 0.5) -> LyapunovObservable:
    if not 0 <= p_f < p:
        raise ValueError(f"need 0 <= p_f < p, got p={p}, p_f={p_f}")
    d = np.full(n, float(p))
    d[target.pos] = p_f
    return LyapunovObservable(d, TargetSpec(target.index, n))


def lyapunov_value(P: LyapunovObservable, rho) -> float:
    m = as_matrix(rho)
    return float(np.dot(P.p_diag, np.diag(m).real))


def drift_operators(P: LyapunovObservable, sys: QuantumSystem) -> np.ndarray:
    """Hermitian operators ``C_k = -i [P, H_k]`` so that ``T_k = tr(rho C_k)``."""
    p = P.p_diag
    hks = sys.control_matrices
    return -1j * (p[None, :, None] - p[None, None, :]) * hks


def drift_terms(P: LyapunovObservable, sys: QuantumSystem, rho) -> np.ndarray:
    """Return ``T_k`` for every control channel.

    Raises ``NumericalError`` if the trace picks up an imaginary part above
    1e-9, which only happens when ``rho`` has drifted away from Hermitian.
    """
    m = as_matrix(rho)
    t = np.einsum("ij,kji->k", m, drift_operators(P, sys))
    resid = np.max(np.abs(t.imag))
    if resid > 1e-9:
        raise NumericalError(f"drift term has imaginary residue {resid:.3g}")
    return t.real.copy()


def coupling_column_norm(sys: QuantumSystem, target: TargetSpec, k: int) -> float:
    """Euclidean norm of the target column of ``H_k`` without the diagonal entry.

    ``k`` is zero-based.
    """
    col = np.delete(sys.controls[k].matrix[:, target.pos], target.pos)
    return float(np.linalg.norm(col))


def tk_amplitude_bound(P: LyapunovObservable, sys: QuantumSystem, k: int) -> float:
    """Upper bound ``(p - p_f) * ||R_k||`` on ``|T_k|`` along pure-state trajectories."""
    return P.gap * coupling_column_norm(sys, P.target, k)


def standard_gain(P: LyapunovObservable, sys: QuantumSystem, k: int,
                  strength: float | None = None) -> float:
    """Gain keeping ``-K_k T_k`` inside ``[-S_k, S_k]`` for every pure state."""
    s = sys.controls[k].s_max if strength is None else float(strength)
    bound = tk_amplitude_bound(P, sys, k)
    if bound == 0.0:
        raise ValueError(f"control {k + 1} does not couple to the target level")
    return s / bound


def bang_bang_dominance_gap(beta: float, hardness: float, r_norm: float = 1.0,
                            family: str = "abb1") -> float:
    """Smallest ``p - p_f`` for which an ABB law saturates at ``beta * S``.

    ``family='abb1'`` uses the sigmoid hardness gamma, ``'abb2'`` the rational
    hardness eta.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if hardness <= 0 or r_norm <= 0:
        raise ValueError("hardness and coupling norm must be positive")
    if family == "abb1":
        tk = math.log((1 + beta) / (1 - beta)) / hardness
    elif family == "abb2":
        tk = beta * hardness / (1 - beta)
    else:
        raise ValueError(f"unknown ABB family {family!r}")
    return tk / r_norm


@dataclass(frozen=True)
class ExcitationSchedule:
    """Open-loop ``u_k(t) = S_k sin(omega_jf t)`` on ``[0, duration]``."""

    strengths: np.ndarray
    omega: float
    duration: float
    level: int

    def __call__(self, t: float) -> np.ndarray:
        return self.strengths * math.sin(self.omega * t)


def _excite_and_measure(sys, target, rho0, sched, substeps=400) -> float:
    h = sys.h0
    hks = sys.control_matrices
    rho = as_matrix(rho0)
    dt = sched.duration / substeps
    for i in range(substeps):
        u = sched((i + 0.5) * dt)
        w, v = np.linalg.eigh(h + np.tensordot(u, hks, axes=1))
        U = (v * np.exp(-1j * w * dt)) @ v.conj().T
        rho = U @ rho @ U.conj().T
    return fidelity(rho, target.projector(sys.dim))


def initial_excitation(sys: QuantumSystem, target: TargetSpec, rho0,
                       strength=None, level: int | None = None,
                       duration: float | None = None, tol: float = 1e-10) -> ExcitationSchedule:
    """Sinusoidal kick that moves a state with zero target population off it.

    ``level`` is one-based.  Without it, the lowest level with population
    above 1e-6 is used; ``duration`` defaults to a tenth of the period
    ``2 pi / |omega_jf|``.  The duration is doubled (at most 8 times) until
    the target population after the kick is nonzero.
    """
    m = as_matrix(rho0)
    f = target.pos
    if abs(m[f, f].real) > tol:
        raise ValueError("initial state already overlaps the target; no excitation needed")
    pops = np.diag(m).real
    if level is None:
        cands = [j for j in range(len(pops)) if j != f and pops[j] > 1e-6]
        if not cands:
            raise ValueError("no populated level to excite from")
        j = cands[0]
    else:
        j = level - 1
        if j == f or pops[j] <= 1e-12:
            raise ValueError(f"level {level} is not populated or is the target")
    omega = float(sys.h0_diag[j] - sys.h0_diag[f])
    if omega == 0.0:
        raise ValueError("degenerate excitation frequency")
    s = sys.strengths if strength is None else np.broadcast_to(
        np.asarray(strength, dtype=float), (sys.n_controls,)).copy()
    t0 = duration if duration is not None else 0.1 * 2 * math.pi / abs(omega)
    if t0 <= 0:
        raise ValueError("duration must be positive")
    for _ in range(9):
        sched = ExcitationSchedule(np.asarray(s, dtype=float), omega, t0, j + 1)
        if _excite_and_measure(sys, target, m, sched) > tol:
            return sched
        t0 *= 2
    raise ValueError("initial excitation failed to populate the target level")
