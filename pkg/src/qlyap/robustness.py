"""Robustness of Lyapunov control against Hamiltonian perturbations.

The perturbed system has ``H~ = H0 + dH0 + sum_k (H_k + dH_k) u_k`` with a
real diagonal ``dH0`` and Hermitian ``dH_k``.  If ``||Delta H(t)|| <= eps``
the perturbed and nominal states started together obey

    ||rho~(t) - rho(t)|| <= min(exp(2 t eps) - 1, 2).

The control computed along the nominal trajectory is replayed open loop on
the perturbed system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_matrix
from .errors import ConditionError
from .model import Control, QuantumSystem, check_conditions
from .simulator import SimConfig, Trajectory, run

BOUND_SLACK = 1e-9
MAX_RESAMPLES = 16


@dataclass(frozen=True)
class PerturbationSpec:
    epsilon: float
    dH0: np.ndarray
    dHk: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        d0 = np.asarray(self.dH0, dtype=float).ravel()
        dk = np.asarray(self.dHk, dtype=complex)
        if dk.ndim != 3 or dk.shape[1:] != (len(d0), len(d0)):
            raise ValueError("dHk must have shape (m, N, N) matching dH0")
        if np.max(np.abs(dk - np.conj(np.transpose(dk, (0, 2, 1)))), initial=0.0) > 1e-12:
            raise ValueError("every dH_k must be Hermitian")
        for a in (d0, dk):
            a.setflags(write=False)
        object.__setattr__(self, "dH0", d0)
        object.__setattr__(self, "dHk", dk)

    def budget_used(self, strengths) -> float:
        """``||dH0|| + sum_k S_k ||dH_k||`` (spectral norms)."""
        s = np.asarray(strengths, dtype=float)
        norms = [np.linalg.norm(h, 2) for h in self.dHk]
        return float(np.max(np.abs(self.dH0), initial=0.0) + np.dot(s, norms))

    def apply(self, sys: QuantumSystem) -> QuantumSystem:
        ctrls = tuple(Control(c.matrix + d, c.s_max, c.label)
                      for c, d in zip(sys.controls, self.dHk))
        return QuantumSystem(sys.h0_diag + self.dH0, ctrls, unit=sys.unit,
                             name=f"{sys.name}+perturbed")


def _draw(rng, n, m):
    d0 = rng.standard_normal(n)
    a = rng.standard_normal((m, n, n)) + 1j * rng.standard_normal((m, n, n))
    return d0, 0.5 * (a + np.conj(np.transpose(a, (0, 2, 1))))


def sample_perturbation(sys: QuantumSystem, epsilon: float, seed: int, target=None) -> PerturbationSpec:
    """Random perturbation using the whole budget ``epsilon``.

    Entries are standard normal (complex for the controls), Hermitised, then
    scaled so that ``||dH0|| + sum_k S_k ||dH_k|| = epsilon``.  When ``target``
    is given the perturbed system must still satisfy the frequency and
    coupling assumptions; failing draws are replaced, at most 16 times.
    """
    if not epsilon >= 0:
        raise ValueError("epsilon must be nonnegative")
    n, m = sys.dim, sys.n_controls
    if epsilon == 0:
        return PerturbationSpec(0.0, np.zeros(n), np.zeros((m, n, n), complex), seed)
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESAMPLES + 1):
        d0, dk = _draw(rng, n, m)
        raw = PerturbationSpec(epsilon, d0, dk, seed).budget_used(sys.strengths)
        c = epsilon / raw
        spec = PerturbationSpec(epsilon, d0 * c, dk * c, seed)
        if target is None or check_conditions(spec.apply(sys), target).ok:
            return spec
    raise ConditionError("perturbed systems keep violating the model assumptions",
                         check_conditions(spec.apply(sys), target))


def _sample_slots(nominal: Trajectory) -> np.ndarray:
    """Index of the schedule boundary at which every recorded sample sits."""
    starts = nominal.schedule[:, 0]
    ends = np.append(starts, starts[-1] + nominal.schedule[-1, 1]) if len(starts) else np.zeros(1)
    idx = np.searchsorted(ends, nominal.t, side="left")
    idx = np.clip(idx, 0, len(ends) - 1)
    if not np.allclose(ends[idx], nominal.t, rtol=0, atol=1e-12 * max(1.0, nominal.t[-1])):
        raise ValueError("recorded samples do not line up with the control schedule")
    return idx


def replay(systems, schedule: np.ndarray, rho0, slots: np.ndarray) -> np.ndarray:
    """Apply one piecewise-constant control schedule to several systems at once.

    Returns states of shape ``(n_slots, n_systems, N, N)`` at the schedule
    boundaries listed in ``slots`` (0 = initial state).
    """
    systems = list(systems)
    h0 = np.stack([s.h0 for s in systems])
    hk = np.stack([s.control_matrices for s in systems])
    b, m, n = hk.shape[0], hk.shape[1], hk.shape[2]
    hk_flat = hk.reshape(b, m, n * n)
    rho = np.broadcast_to(as_matrix(rho0), (b, n, n)).copy()
    want = np.zeros(len(schedule) + 1, dtype=bool)
    want[slots] = True
    order = {s: i for i, s in enumerate(sorted(set(int(x) for x in slots)))}
    store = np.empty((len(order), b, n, n), dtype=complex)
    if want[0]:
        store[order[0]] = rho
    for i, row in enumerate(schedule):
        h, u = row[1], row[2:]
        H = h0 + np.einsum("k,bkx->bx", u, hk_flat).reshape(b, n, n)
        w, v = np.linalg.eigh(H)
        U = (v * np.exp(-1j * w * h)[:, None, :]) @ np.conj(np.transpose(v, (0, 2, 1)))
        rho = U @ rho @ np.conj(np.transpose(U, (0, 2, 1)))
        rho = 0.5 * (rho + np.conj(np.transpose(rho, (0, 2, 1))))
        if want[i + 1]:
            store[order[i + 1]] = rho
    return store[[order[int(s)] for s in slots]]


def distance_series(a, b) -> np.ndarray:
    """Spectral norm ``||a - b||`` of Hermitian matrices along the leading axes."""
    d = np.asarray(a) - np.asarray(b)
    d = 0.5 * (d + np.conj(np.swapaxes(d, -1, -2)))
    return np.max(np.abs(np.linalg.eigvalsh(d)), axis=-1)


@dataclass
class PairedResult:
    nominal: Trajectory
    perturbed: list
    distance: np.ndarray  # shape (n_perturbations, n_samples)
    perturbations: list


def paired_runs(sys, perturbations, controller, P, rho0, cfg: SimConfig | None = None,
                nominal: Trajectory | None = None) -> PairedResult:
    """Run the nominal system once, then replay its schedule on every
    perturbed system (batched).  Distances are taken at the recorded samples.
    """
    target = P.target
    if nominal is None:
        nominal = run(sys, target, P, controller, rho0, cfg)
    slots = _sample_slots(nominal)
    perts = list(perturbations)
    states = replay([p.apply(sys) for p in perts], nominal.schedule, rho0, slots)
    states = np.transpose(states, (1, 0, 2, 3))  # (n_pert, n_samples, N, N)
    dist = distance_series(states, nominal.rho[None])
    f = target.pos
    trajs = []
    for p, st in zip(perts, states):
        diag = np.real(np.diagonal(st, axis1=1, axis2=2))
        trajs.append(Trajectory(
            t=nominal.t, rho=st, u=nominal.u, T=np.full_like(nominal.T, np.nan),
            V=diag @ P.p_diag, fidelity=diag[:, f], mode=["open_loop"] * len(st),
            flags=[frozenset()] * len(st), schedule=nominal.schedule,
            meta={**nominal.meta, "epsilon": p.epsilon, "seed": p.seed}))
    return PairedResult(nominal, trajs, dist, perts)


def paired_run(sys, perturbation: PerturbationSpec, controller, P, rho0,
               cfg: SimConfig | None = None):
    """Single-perturbation form: ``(nominal, perturbed, distance)``."""
    res = paired_runs(sys, [perturbation], controller, P, rho0, cfg)
    return res.nominal, res.perturbed[0], res.distance[0]


def distance_bound(t, epsilon: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    # expm1 overflows to inf for long runs, which min() then caps at 2
    with np.errstate(over="ignore"):
        return np.minimum(np.expm1(2.0 * epsilon * t), 2.0)


@dataclass(frozen=True)
class BoundReport:
    epsilon: float
    min_margin: float
    t_min_margin: float
    ok: bool
    margin: np.ndarray


def check_bound(t, distance, epsilon: float) -> BoundReport:
    """Margin ``min(e^(2 t eps) - 1, 2) - distance``; ok iff it stays above -1e-9."""
    t = np.asarray(t, dtype=float)
    margin = distance_bound(t, epsilon) - np.asarray(distance, dtype=float)
    i = int(np.argmin(margin))
    return BoundReport(float(epsilon), float(margin[i]), float(t[i]),
                       bool(margin[i] >= -BOUND_SLACK), margin)


def epsilon_budget(T: float, xi: float, xi1: float) -> float:
    """Largest ``eps`` for which reaching ``||rho(T) - rho_f|| <= xi1`` nominally
    guarantees ``||rho~(T) - rho_f|| <= xi`` for the perturbed system."""
    if not T > 0:
        raise ValueError("T must be positive")
    if xi1 < 0:
        raise ValueError("xi1 must be nonnegative")
    if xi < xi1:
        raise ValueError(f"xi={xi} must not be smaller than xi1={xi1}")
    return math.log1p(xi - xi1) / (2.0 * T)


@dataclass(frozen=True)
class BudgetReport:
    """Outcome of running perturbed systems with the budgeted ``epsilon``."""

    T: float
    xi: float
    xi1: float
    epsilon: float
    distances: np.ndarray
    seeds: tuple

    @property
    def ok(self) -> bool:
        return bool(np.all(self.distances <= self.xi))


def budget_experiment(sys, controller, P, rho0, cfg: SimConfig | None = None, xi: float = 0.1,
                      threshold: float = 0.999, seeds=range(10),
                      nominal: Trajectory | None = None) -> BudgetReport:
    """Pick ``T`` where the nominal fidelity first reaches ``threshold``,
    measure ``xi1 = ||rho(T) - rho_f||``, perturb with ``epsilon_budget(T, xi, xi1)``
    and return the perturbed distances to the target at ``T``.
    """
    target = P.target
    if nominal is None:
        nominal = run(sys, target, P, controller, rho0, cfg)
    hit = np.nonzero(nominal.fidelity >= threshold)[0]
    if not len(hit):
        raise ValueError(f"nominal run never reaches fidelity {threshold}")
    i = int(hit[0])
    T = float(nominal.t[i])
    if T <= 0:
        raise ValueError("initial state already meets the threshold")
    rho_f = target.projector(sys.dim).matrix
    xi1 = float(distance_series(nominal.rho[i], rho_f))
    eps = epsilon_budget(T, xi, xi1)
    seeds = tuple(int(s) for s in seeds)
    perts = [sample_perturbation(sys, eps, s, target) for s in seeds]
    slot = _sample_slots(nominal)[i]
    states = replay([p.apply(sys) for p in perts], nominal.schedule[:slot], rho0, np.array([slot]))
    d = distance_series(states[0], rho_f[None])
    return BudgetReport(T, xi, xi1, eps, d, seeds)
