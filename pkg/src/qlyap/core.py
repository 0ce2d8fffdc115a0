"""Small dense complex matrix utilities for closed quantum systems.

All routines work on plain ``numpy`` arrays.  Systems of interest are
desk-scale (a handful of levels), so everything is dense and eager.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, NotHermitianError, NumericalError


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances shared by every module."""

    herm_tol: float = 1e-10
    trace_tol: float = 1e-10
    psd_tol: float = 1e-10
    unitary_tol: float = 1e-10
    max_dim: int = 64


_POLICY = NumericPolicy()


def numeric_policy() -> NumericPolicy:
    return _POLICY


@contextlib.contextmanager
def override_policy(**changes):
    """Temporarily replace fields of the global numeric policy."""
    global _POLICY
    old = _POLICY
    _POLICY = replace(old, **changes)
    try:
        yield _POLICY
    finally:
        _POLICY = old


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a square complex array, checking the size cap."""
    if isinstance(a, DensityMatrix):
        return a.matrix
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] > _POLICY.max_dim:
        raise DimensionError(
            f"dimension {m.shape[0]} exceeds the cap of {_POLICY.max_dim}")
    return m


def hermiticity_error(a) -> float:
    m = as_matrix(a)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def is_hermitian(a, tol: float | None = None) -> bool:
    tol = _POLICY.herm_tol if tol is None else tol
    return hermiticity_error(a) <= tol


def _require_hermitian(m: np.ndarray, what: str = "matrix") -> None:
    err = hermiticity_error(m)
    if err > _POLICY.herm_tol:
        raise NotHermitianError(f"{what} is not Hermitian (max |A - A^H| = {err:.3g})")


class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace state.

    The wrapped array is copied and made read-only on construction.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix, *, check: bool = True):
        m = np.array(as_matrix(matrix), dtype=complex, copy=True)
        if check:
            validate_density(m)
        m.setflags(write=False)
        self._m = m

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        """Projector onto the normalised state vector ``psi``."""
        v = np.asarray(psi, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def basis(cls, dim: int, index: int) -> "DensityMatrix":
        """Eigenstate projector |index><index| (zero-based index)."""
        m = np.zeros((dim, dim), complex)
        m[index, index] = 1.0
        return cls(m)

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self._m @ self._m)))

    def __array__(self, dtype=None, copy=None):
        return self._m if dtype is None else self._m.astype(dtype)

    def __repr__(self) -> str:
        return f"DensityMatrix({np.array2string(self._m, precision=4)})"


def validate_density(m) -> None:
    """Raise ``NumericalError`` unless ``m`` is a valid density matrix."""
    m = as_matrix(m)
    _require_hermitian(m, "density matrix")
    tr = np.trace(m)
    if abs(tr - 1.0) > _POLICY.trace_tol:
        raise NumericalError(f"density matrix trace is {tr.real:.12g}, not 1")
    lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
    if lo < -_POLICY.psd_tol:
        raise NumericalError(f"density matrix has negative eigenvalue {lo:.3g}")


def commutator(a, b) -> np.ndarray:
    """Return ``AB - BA``."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a @ b - b @ a


def matrix_exp_skewh(h, t: float) -> np.ndarray:
    """Unitary ``exp(-i H t)`` for Hermitian ``H`` via its eigendecomposition."""
    h = as_matrix(h)
    _require_hermitian(h, "Hamiltonian")
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    err = np.max(np.abs(u.conj().T @ u - np.eye(len(w))))
    if err > _POLICY.unitary_tol:
        raise NumericalError(f"propagator lost unitarity ({err:.3g})")
    return u


def fidelity(rho, rho_f) -> float:
    """Population ``tr(rho rho_f)`` of the (pure eigenstate) target."""
    a, b = as_matrix(rho), as_matrix(rho_f)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.real(np.sum(a * b.T)))


def spectral_norm(a) -> float:
    """Largest singular value (induced 2-norm)."""
    m = as_matrix(a)
    return float(np.linalg.norm(m, 2)) if m.size else 0.0


def spectrum(a) -> np.ndarray:
    """Real eigenvalues of a Hermitian matrix in nonincreasing order."""
    m = as_matrix(a)
    _require_hermitian(m, "matrix")
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))[::-1]
