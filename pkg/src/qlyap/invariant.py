"""LaSalle invariant set of the standard Lyapunov law.

States in the invariant set keep ``dV/dt = 0`` under free evolution.  For
every control ``k`` the moment conditions

    M P Im(xi_k) = 0,        M Omega P Re(xi_k) = 0

must hold, where the columns run over the level pairs ``(j, l), j < l``,
``xi_k[(j,l)] = (H_k)_jl rho_lj``, ``Omega = diag(omega_jl)``,
``P = diag(p_l - p_j)`` and ``M`` stacks the even powers
``omega_jl^0, omega_jl^2, ..., omega_jl^FN`` with ``FN = N(N-1) - 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import DensityMatrix, as_matrix, spectrum
from .errors import DimensionError
from .model import QuantumSystem, TargetSpec, require_conditions


@dataclass(frozen=True)
class InvariantSetData:
    """Matrices of the moment conditions.

    ``M`` is row-scaled: row ``n`` holds ``(omega_jl / s)^(2n)`` with
    ``s = max(1, max |omega_jl|)``.  Scaling a row by a positive constant does
    not change the solution set, and it keeps the large powers bounded.
    """

    FN: int
    M: np.ndarray
    Omega: np.ndarray
    Pdiff: np.ndarray
    pair_order: tuple
    scale: float = 1.0

    @property
    def n_pairs(self) -> int:
        return len(self.pair_order)


def pair_order(n: int) -> tuple:
    """Zero-based pairs ``(j, l)``, ``j < l``, in lexicographic order."""
    return tuple(combinations(range(n), 2))


def build_invariant_data(sys: QuantumSystem, P) -> InvariantSetData:
    n = sys.dim
    if P.dim != n:
        raise DimensionError(f"P has dimension {P.dim}, system has {n}")
    pairs = pair_order(n)
    lam = sys.h0_diag
    p = P.p_diag
    omega = np.array([lam[j] - lam[l] for j, l in pairs])
    pdiff = np.array([p[l] - p[j] for j, l in pairs])
    fn = n * (n - 1) - 2
    s = max(1.0, float(np.max(np.abs(omega))))
    powers = 2 * np.arange(fn // 2 + 1)
    M = (omega[None, :] / s) ** powers[:, None]
    for a in (M, omega, pdiff):
        a.setflags(write=False)
    return InvariantSetData(fn, M, np.diag(omega), np.diag(pdiff), pairs, s)


def xi_vector(sys: QuantumSystem, rho, k: int) -> np.ndarray:
    """``xi_k`` for zero-based control index ``k``."""
    m = as_matrix(rho)
    if m.shape[0] != sys.dim:
        raise DimensionError(f"state has dimension {m.shape[0]}, system has {sys.dim}")
    h = sys.controls[k].matrix
    return np.array([h[j, l] * m[l, j] for j, l in pair_order(sys.dim)])


@dataclass(frozen=True)
class MembershipReport:
    in_set: bool
    residual_im: float
    residual_re: float
    spectrum_match: bool


def moment_residuals(data: InvariantSetData, sys: QuantumSystem, rho) -> tuple[float, float]:
    """Largest norms of ``M P Im(xi_k)`` and ``M Omega P Re(xi_k)`` over ``k``."""
    a_im = data.M @ data.Pdiff
    # Omega is divided by the row scale as well so both residuals share units
    a_re = data.M @ (data.Omega / data.scale) @ data.Pdiff
    r_im = r_re = 0.0
    for k in range(sys.n_controls):
        xi = xi_vector(sys, rho, k)
        r_im = max(r_im, float(np.linalg.norm(a_im @ xi.imag)))
        r_re = max(r_re, float(np.linalg.norm(a_re @ xi.real)))
    return r_im, r_re


def membership(sys: QuantumSystem, P, rho0_spectrum, rho_bar, tol: float = 1e-8,
               data: InvariantSetData | None = None) -> MembershipReport:
    """Test whether ``rho_bar`` lies in the invariant set reached from a state
    with spectrum ``rho0_spectrum``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    data = data or build_invariant_data(sys, P)
    m = as_matrix(rho_bar)
    r_im, r_re = moment_residuals(data, sys, m)
    s0 = np.sort(np.asarray(rho0_spectrum, dtype=float))[::-1]
    s1 = spectrum(m)
    match = s0.shape == s1.shape and bool(np.max(np.abs(s0 - s1)) <= tol)
    return MembershipReport(match and r_im <= tol and r_re <= tol, r_im, r_re, match)


def target_vandermonde_rank(sys: QuantumSystem, target: TargetSpec, tol: float = 1e-9) -> int:
    """Rank of the even-power Vandermonde block on the target-pair columns.

    Full rank ``N - 1`` whenever the target transition frequencies are
    distinct in absolute value, which forces every target coherence to vanish.
    """
    n = sys.dim
    f = target.pos
    lam = sys.h0_diag
    w = np.array([lam[j] - lam[f] for j in range(n) if j != f])
    s = max(1.0, float(np.max(np.abs(w))))
    V = (w[None, :] / s) ** (2 * np.arange(n * (n - 1) // 2))[:, None]
    return int(np.linalg.matrix_rank(V, tol=tol))


@dataclass(frozen=True)
class IsolationReport:
    """Split of the invariant set of a pure initial state.

    ``E1`` is the target alone.  ``E2`` holds the pure states whose target row
    and column vanish; it is described symbolically except for ``N = 2``,
    where it is the single other eigenstate and ``e_prime`` lists both.
    """

    isolated: bool
    e1: DensityMatrix
    e2_description: str
    e_prime: tuple = field(default_factory=tuple)
    vandermonde_rank: int = 0

    def in_e2(self, rho, tol: float = 1e-8) -> bool:
        m = as_matrix(rho)
        f = self.e1.matrix.diagonal().real.argmax()
        row = np.delete(m[f, :], f)
        pure = abs(np.trace(m @ m).real - 1) <= tol
        return bool(np.all(np.abs(row) <= tol) and abs(m[f, f]) <= tol and pure)


def target_isolated(sys: QuantumSystem, P, target: TargetSpec, rho0) -> IsolationReport:
    """Check that the target is an isolated point of the invariant set.

    Raises ``ConditionError`` if the frequency or coupling assumptions fail
    and ``ValueError`` for a mixed initial state.
    """
    report = require_conditions(sys, target)
    m = as_matrix(rho0)
    if abs(np.trace(m @ m).real - 1) > 1e-8:
        raise ValueError("isolation analysis needs a pure initial state")
    if P.target.pos != target.pos:
        raise ValueError("P is built for a different target")
    n = sys.dim
    rank = target_vandermonde_rank(sys, target)
    rho_f = target.projector(n)
    desc = (f"pure states with zero row and column {target.index} "
            f"(a pure {n - 1}-level block on the remaining levels)")
    e_prime = ()
    if n == 2:
        e_prime = (rho_f, DensityMatrix.basis(2, 1 - target.pos))
    return IsolationReport(report.ok and rank == n - 1, rho_f, desc, e_prime, rank)
