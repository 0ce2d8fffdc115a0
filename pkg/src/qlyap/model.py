"""Controllable closed quantum systems in the energy representation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DensityMatrix, as_matrix, is_hermitian, numeric_policy
from .errors import ConditionError, DimensionError, NotHermitianError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class Control:
    """One control Hamiltonian together with its admissible strength."""

    matrix: np.ndarray
    s_max: float
    label: str | None = None


@dataclass(frozen=True)
class QuantumSystem:
    """Diagonal internal Hamiltonian plus a list of controls.

    ``h0_diag`` holds the energies in the chosen unit (``unit`` is only used
    for reporting); dynamics assume hbar = 1.
    """

    h0_diag: np.ndarray
    controls: tuple[Control, ...]
    unit: str = ""
    name: str = ""

    def __post_init__(self):
        h0 = np.asarray(self.h0_diag, dtype=float).ravel()
        h0.setflags(write=False)
        object.__setattr__(self, "h0_diag", h0)
        n = len(h0)
        if n < 2:
            raise DimensionError("a quantum system needs at least two levels")
        if n > numeric_policy().max_dim:
            raise DimensionError(f"dimension {n} exceeds the cap")
        if not self.controls:
            raise ValueError("at least one control Hamiltonian is required")
        ctrls = []
        for k, c in enumerate(self.controls):
            m = np.array(as_matrix(c.matrix), copy=True)
            if m.shape != (n, n):
                raise DimensionError(f"control {k + 1} has shape {m.shape}, expected {(n, n)}")
            if not is_hermitian(m):
                raise NotHermitianError(f"control {k + 1} is not Hermitian")
            if not c.s_max > 0:
                raise ValueError(f"control {k + 1} needs a positive strength bound")
            m.setflags(write=False)
            ctrls.append(Control(m, float(c.s_max), c.label))
        object.__setattr__(self, "controls", tuple(ctrls))

    @classmethod
    def from_matrices(cls, h0, hks, s_max, *, labels=None, unit="", name=""):
        """Build a system from a (diagonal) ``H0`` matrix or vector.

        Off-diagonal internal Hamiltonians are rejected: the library works in
        the energy basis and will not silently rotate it.
        """
        h0 = np.asarray(h0)
        if h0.ndim == 2:
            m = as_matrix(h0)
            off = m - np.diag(np.diag(m))
            if np.max(np.abs(off)) > numeric_policy().herm_tol:
                raise ValueError("H0 must be diagonal in the energy representation")
            if np.max(np.abs(np.diag(m).imag)) > numeric_policy().herm_tol:
                raise NotHermitianError("H0 has complex diagonal entries")
            h0 = np.diag(m).real
        s_max = np.broadcast_to(np.asarray(s_max, dtype=float), (len(hks),))
        labels = labels or [None] * len(hks)
        ctrls = tuple(Control(h, s, lab) for h, s, lab in zip(hks, s_max, labels))
        return cls(h0, ctrls, unit=unit, name=name)

    @property
    def dim(self) -> int:
        return len(self.h0_diag)

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def h0(self) -> np.ndarray:
        return np.diag(self.h0_diag).astype(complex)

    @property
    def control_matrices(self) -> np.ndarray:
        """Stacked control Hamiltonians, shape ``(m, N, N)``."""
        return np.stack([c.matrix for c in self.controls])

    @property
    def strengths(self) -> np.ndarray:
        return np.array([c.s_max for c in self.controls])

    def hamiltonian(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.h0 + np.tensordot(u, self.control_matrices, axes=1)


@dataclass(frozen=True)
class TargetSpec:
    """Target eigenstate; ``index`` is one-based like the level labels."""

    index: int
    dim: int | None = None

    def __post_init__(self):
        if self.index < 1 or (self.dim is not None and self.index > self.dim):
            raise ValueError(f"target index {self.index} out of range 1..{self.dim}")

    @property
    def pos(self) -> int:
        return self.index - 1

    def projector(self, dim: int | None = None) -> DensityMatrix:
        n = dim or self.dim
        if n is None:
            raise ValueError("target dimension unknown")
        return DensityMatrix.basis(n, self.pos)


@dataclass(frozen=True)
class ConditionReport:
    cond2_ok: bool
    cond2_violations: list = field(default_factory=list)
    cond3_ok: bool = True
    cond3_uncoupled: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.cond2_ok and self.cond3_ok


def transition_frequencies(sys: QuantumSystem) -> dict[tuple[int, int], float]:
    """Map ``(a, b) -> lambda_a - lambda_b`` using one-based level labels."""
    lam = sys.h0_diag
    n = len(lam)
    return {(a + 1, b + 1): float(lam[a] - lam[b]) for a in range(n) for b in range(n)}


def check_conditions(sys: QuantumSystem, target: TargetSpec, tol: float = 1e-9) -> ConditionReport:
    """Check distinguishable target frequencies and direct target coupling.

    Violations of the frequency condition are reported as tuples
    ``(a, b, omega_af, omega_bf)``; uncoupled levels as one-based indices.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lam = sys.h0_diag
    n = len(lam)
    f = target.pos
    if not 0 <= f < n:
        raise ValueError(f"target index {target.index} out of range for N={n}")
    violations = []
    for a in range(n):
        for b in range(a + 1, n):
            # omega_af - omega_bf == lambda_a - lambda_b; this also covers degeneracy with f
            if abs(lam[a] - lam[b]) <= tol:
                violations.append((a + 1, b + 1, float(lam[a] - lam[f]), float(lam[b] - lam[f])))
    hks = sys.control_matrices
    uncoupled = [j + 1 for j in range(n)
                 if j != f and not np.any(np.abs(hks[:, j, f]) > tol)]
    return ConditionReport(not violations, violations, not uncoupled, uncoupled)


def require_conditions(sys: QuantumSystem, target: TargetSpec, tol: float = 1e-9) -> ConditionReport:
    report = check_conditions(sys, target, tol)
    if not report.ok:
        raise ConditionError(
            f"system violates assumptions: frequencies {report.cond2_violations}, "
            f"uncoupled levels {report.cond3_uncoupled}", report)
    return report


BUILTIN_NAMES = ("two_level", "xi_three_level", "two_qubit_sc")


def builtin_system(name: str):
    """Return ``(system, target, rho0)`` for one of the shipped examples."""
    if name == "two_level":
        sys = QuantumSystem.from_matrices(np.diag([0.4, 0.0]), [SIGMA_X], 0.2, name=name)
        s5 = np.sqrt(5.0)
        rho0 = DensityMatrix(np.array([[1, s5], [s5, 5]]) / 6.0)
        return sys, TargetSpec(1, 2), rho0
    if name == "xi_three_level":
        h1 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
        sys = QuantumSystem.from_matrices(np.diag([0.0, 0.3, 0.9]), [h1], 0.1, name=name)
        rho0 = DensityMatrix(np.ones((3, 3)) / 3.0)
        return sys, TargetSpec(2, 3), rho0
    if name == "two_qubit_sc":
        # fixed z-fields u1z = 10 GHz, u2z = 5 GHz form the internal Hamiltonian
        h0 = 10.0 * np.kron(SIGMA_Z, IDENTITY_2) + 5.0 * np.kron(IDENTITY_2, SIGMA_Z)
        hks = [np.kron(SIGMA_X, IDENTITY_2), np.kron(IDENTITY_2, SIGMA_X),
               np.kron(SIGMA_X, SIGMA_X)]
        sys = QuantumSystem.from_matrices(h0, hks, [3.9, 3.4, 0.2], unit="GHz", name=name,
                                          labels=["u1x", "u2x", "uxx"])
        s13 = np.sqrt(13.0)
        rho0 = DensityMatrix(np.array([[1, 1, 1, s13], [1, 1, 1, s13],
                                       [1, 1, 1, s13], [s13, s13, s13, 13]]) / 16.0)
        return sys, TargetSpec(1, 4), rho0
    raise ValueError(f"unknown builtin system {name!r}; choose from {BUILTIN_NAMES}")
