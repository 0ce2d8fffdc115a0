"""Fixed-step simulation of the Liouville-von Neumann equation.

Controls are held constant over each step and the state is propagated with
the exact unitary ``exp(-i H dt)``, so trace, Hermiticity and spectrum are
preserved up to round-off.  When a drift term ``T_k`` changes sign inside a
step, the crossing is located by bisection and the step is cut there, so the
sign-based laws see accurate zero points.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .controllers import Controller, ControllerConfig
from .core import DensityMatrix, as_matrix
from .errors import NumericalError
from .lyapunov import LyapunovObservable, drift_operators, initial_excitation

log = logging.getLogger(__name__)

STRENGTH_SLACK = 1e-12
SPECTRUM_ABORT = 1e-8


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 10.0
    record_stride: int = 1
    zero_tol: float = 1e-9
    fidelity_targets: tuple = (0.95, 0.99)
    auto_excite: bool = True
    chatter_window: int = 50
    chatter_dwell: float = 32.0
    max_bisect: int = 60

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > self.dt:
            raise ValueError("horizon must exceed dt")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")
        object.__setattr__(self, "fidelity_targets", tuple(float(x) for x in self.fidelity_targets))


@dataclass
class Trajectory:
    """Time series of one run.

    ``schedule`` holds every applied control segment as rows
    ``(t_start, duration, u_1, ..., u_m)`` regardless of ``record_stride``,
    which is what an open-loop replay needs.
    """

    t: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    T: np.ndarray
    V: np.ndarray
    fidelity: np.ndarray
    mode: list
    flags: list
    schedule: np.ndarray
    chattering_time: float | None = None
    spectrum_drift: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def final_state(self) -> DensityMatrix:
        return DensityMatrix(self.rho[-1], check=False)

    def event_indices(self, flag: str) -> list[int]:
        return [i for i, fl in enumerate(self.flags) if flag in fl]

    def first_passage(self, thresholds=None) -> dict:
        thresholds = self.meta.get("fidelity_targets", ()) if thresholds is None else thresholds
        return {float(th): time_to_fidelity(self, th) for th in thresholds}

    def summary(self) -> dict:
        all_flags = set().union(*self.flags) if self.flags else set()
        return {
            "final_time": float(self.t[-1]),
            "final_fidelity": float(self.fidelity[-1]),
            "final_V": float(self.V[-1]),
            "first_passage": self.first_passage(),
            "chattering_time": self.chattering_time,
            "flags": sorted(all_flags),
            "max_abs_u": np.abs(self.u).max(axis=0).tolist(),
        }

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


def _propagator(w, v, tau):
    return (v * np.exp(-1j * w * tau)) @ v.conj().T


def step(sys, rho, u, dt: float) -> DensityMatrix:
    """One zero-order-hold step ``rho -> U rho U^H`` with ``U = exp(-i H dt)``."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) > sys.strengths + STRENGTH_SLACK):
        raise ValueError(f"control {u} exceeds the admissible strengths {sys.strengths}")
    m = as_matrix(rho)
    w, v = np.linalg.eigh(sys.hamiltonian(u))
    U = _propagator(w, v, dt)
    out = U @ m @ U.conj().T
    out = 0.5 * (out + out.conj().T)
    before = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    after = np.linalg.eigvalsh(out)
    if not np.all(np.isfinite(out)) or np.max(np.abs(after - before)) > 1e-10:
        raise NumericalError("step did not preserve the spectrum")
    return DensityMatrix(out)


class _Recorder:
    def __init__(self):
        self.t, self.rho, self.u, self.T, self.mode, self.flags = [], [], [], [], [], []

    def add(self, t, rho, u, T, mode, flags):
        self.t.append(t)
        self.rho.append(rho)
        self.u.append(u)
        self.T.append(T)
        self.mode.append(mode)
        self.flags.append(frozenset(flags))


class _ChatterTracker:
    """Detects zero points of ``T_k`` that recur faster than the step grid can
    resolve.

    Under zero-order hold an infinitely fast switching control shows up as
    zero points spaced a fixed small multiple of ``dt`` apart (the spacing
    shrinks with ``dt``).  ``window`` consecutive spacings of at most
    ``dwell * dt`` raise the flag; the reported time is the start of that
    streak.
    """

    def __init__(self, m, dt, window, dwell):
        self.last = [None] * m
        self.streak = [0] * m
        self.start = [0.0] * m
        self.limit = dwell * dt * (1 + 1e-9)
        self.window = window

    def crossing(self, t_end, channels):
        """Record zero points; return the streak start once chattering is confirmed."""
        fired = None
        for k in channels:
            last = self.last[k]
            if last is not None and t_end - last <= self.limit:
                if self.streak[k] == 0:
                    self.start[k] = last
                self.streak[k] += 1
            else:
                self.streak[k] = 0
            self.last[k] = t_end
            if self.streak[k] >= self.window and fired is None:
                fired = self.start[k]
        return fired


def _locate_crossing(w, v, rho, C, T0, h, channels, zero_tol, max_iter):
    """Earliest time in ``(0, h]`` where one of ``channels`` reaches zero.

    In the eigenbasis of the step Hamiltonian each drift term is a finite
    sum of complex exponentials, so probing it costs one small contraction.
    Returns ``(tau, resolved)``.
    """
    rt = v.conj().T @ rho @ v
    ct = np.einsum("ai,kij,jb->kab", v.conj().T, C, v)
    amp = rt[None, :, :] * np.transpose(ct, (0, 2, 1))
    freq = w[:, None] - w[None, :]

    def tk(k, tau):
        return float(np.real(np.sum(amp[k] * np.exp(-1j * freq * tau))))

    best, resolved = h, False
    for k in channels:
        s0 = np.sign(T0[k])
        lo, hi = 0.0, h
        ok = abs(tk(k, hi)) <= zero_tol
        for _ in range(max_iter):
            if ok:
                break
            mid = 0.5 * (lo + hi)
            val = tk(k, mid)
            if abs(val) <= zero_tol:
                hi, ok = mid, True
            elif np.sign(val) == s0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, h):
                break
        if hi <= best:
            best, resolved = hi, ok
    return best, resolved


def run(sys, target, P: LyapunovObservable, controller, rho0, cfg: SimConfig | None = None) -> Trajectory:
    """Simulate ``sys`` under ``controller`` from ``rho0`` up to ``cfg.horizon``.

    ``controller`` may be a ``ControllerConfig`` or a bound ``Controller``.
    If ``rho0`` has no target population and ``cfg.auto_excite`` is set, a
    short sinusoidal kick is applied first.
    """
    cfg = cfg or SimConfig()
    if isinstance(controller, ControllerConfig):
        ctrl = Controller(controller, sys, P)
    else:
        ctrl = controller
        ctrl.reset()
    rho = np.array(as_matrix(rho0), copy=True)
    n, m = sys.dim, sys.n_controls
    f = target.pos
    tol = cfg.zero_tol
    C = drift_operators(P, sys)
    # T_k = tr(rho C_k) = sum_ij rho_ij (C_k)_ji as one matrix-vector product
    c_flat = np.ascontiguousarray(np.transpose(C, (0, 2, 1)).reshape(m, n * n))
    h0 = sys.h0
    hk_flat = sys.control_matrices.reshape(m, n * n)
    smax = sys.strengths + STRENGTH_SLACK
    spec0 = np.linalg.eigvalsh(rho)
    rec = _Recorder()
    schedule = []
    chatter = _ChatterTracker(m, cfg.dt, cfg.chatter_window, cfg.chatter_dwell)
    chattering_time = None
    eig_cache = {}

    def drift(r):
        return (c_flat @ r.ravel()).real

    def eig(u):
        key = u.tobytes()
        hit = eig_cache.get(key)
        if hit is None:
            if len(eig_cache) > 256:
                eig_cache.clear()
            hit = eig_cache[key] = np.linalg.eigh(h0 + (u @ hk_flat).reshape(n, n))
        return hit

    def check(r, t):
        if not np.all(np.isfinite(r)):
            raise NumericalError(f"non-finite state at t={t}")
        d = float(np.max(np.abs(np.linalg.eigvalsh(r) - spec0)))
        if d > SPECTRUM_ABORT:
            raise NumericalError(f"spectrum drifted by {d:.3g} at t={t}")

    t = 0.0
    if cfg.auto_excite and rho[f, f].real <= 1e-10:
        sched = initial_excitation(sys, target, rho)
        nsteps = max(1, math.ceil(sched.duration / cfg.dt - 1e-9))
        h = sched.duration / nsteps
        for i in range(nsteps):
            u = sched(t + 0.5 * h)
            rec.add(t, rho.copy(), u, drift(rho), "excitation", ())
            w, v = eig(u)
            U = _propagator(w, v, h)
            rho = U @ rho @ U.conj().T
            rho = 0.5 * (rho + rho.conj().T)
            schedule.append((t, h, *u))
            t += h
        check(rho, t)

    T = drift(rho)
    flags = {"zero_point"} if np.any(np.abs(T) <= tol) else set()
    step_idx = 0
    end = cfg.horizon - 1e-12 * cfg.horizon
    stride = cfg.record_stride
    while True:
        mode_before = ctrl.mode
        u = ctrl(rho, T)
        if ctrl.mode != mode_before:
            flags.add("switched")
        if np.any(np.abs(u) > smax):
            raise ValueError(f"control {u} at t={t:.6g} exceeds admissible strengths {sys.strengths}")
        if t >= end:
            rec.add(t, rho.copy(), u, T, ctrl.mode, flags)
            break
        if flags or step_idx % stride == 0:
            rec.add(t, rho.copy(), u, T, ctrl.mode, flags)
            flags = set()
        if step_idx % 1024 == 0:
            check(rho, t)

        h = min(cfg.dt, cfg.horizon - t)
        w, v = eig(u)
        U = _propagator(w, v, h)
        new = U @ rho @ U.conj().T
        T_new = drift(new)
        live = np.abs(T) > tol
        crossed = np.nonzero(live & ((np.abs(T_new) <= tol) | (np.sign(T_new) != np.sign(T))))[0]
        if len(crossed):
            tau, resolved = _locate_crossing(w, v, rho, C, T, h, crossed, tol, cfg.max_bisect)
            if tau < h:
                h = tau
                U = _propagator(w, v, h)
                new = U @ rho @ U.conj().T
                T_new = drift(new)
            flags.add("zero_point")
            if not resolved:
                flags.add("event_unresolved")
                log.warning("zero crossing at t=%.6g not resolved to tolerance", t + h)
            onset = chatter.crossing(t + h, crossed)
            if onset is not None and chattering_time is None:
                chattering_time = onset
                flags.add("chattering")
        elif (not live.any() and not u.any() and np.all(np.abs(T_new) <= tol)
              and new[f, f].real < 1 - 1e-9):
            flags.add("invariant_stall")
        schedule.append((t, h, *u))
        rho = 0.5 * (new + new.conj().T)
        rho /= rho.trace().real
        T = T_new
        t += h
        step_idx += 1

    rhos = np.array(rec.rho)
    check(rhos[-1], t)
    drift_max = float(np.max(np.abs(np.linalg.eigvalsh(rhos) - spec0)))
    if drift_max > SPECTRUM_ABORT:
        raise NumericalError(f"spectrum drifted by {drift_max:.3g} during the run")
    diag = np.real(np.diagonal(rhos, axis1=1, axis2=2))
    return Trajectory(
        t=np.array(rec.t), rho=rhos, u=np.array(rec.u).reshape(-1, m),
        T=np.array(rec.T).reshape(-1, m), V=diag @ P.p_diag, fidelity=diag[:, f],
        mode=rec.mode, flags=rec.flags,
        schedule=np.array(schedule, dtype=float).reshape(-1, 2 + m),
        chattering_time=chattering_time, spectrum_drift=drift_max,
        meta={"fidelity_targets": cfg.fidelity_targets, "dt": cfg.dt,
              "horizon": cfg.horizon, "family": ctrl.cfg.family,
              "system": getattr(sys, "name", ""), "unit": getattr(sys, "unit", "")},
    )


def time_to_fidelity(traj, threshold: float):
    """First time the fidelity reaches ``threshold`` (linear interpolation)."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    fid = np.asarray(traj.fidelity if hasattr(traj, "fidelity") else traj["fidelity"])
    t = np.asarray(traj.t if hasattr(traj, "t") else traj["t"])
    hit = np.nonzero(fid >= threshold)[0]
    if not len(hit):
        return None
    i = hit[0]
    if i == 0:
        return float(t[0])
    f0, f1 = fid[i - 1], fid[i]
    return float(t[i - 1] + (threshold - f0) / (f1 - f0) * (t[i] - t[i - 1]))


def csv_header(m: int) -> list[str]:
    return (["t", "fidelity", "V"] + [f"u_{k + 1}" for k in range(m)]
            + [f"T_{k + 1}" for k in range(m)] + ["mode", "flags"])


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def atomic_write(path, write_fn, newline="") -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline=newline) as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _trajectory_rows(traj: Trajectory, extra: dict):
    lead = [str(v) for v in extra.values()]
    for i in range(len(traj.t)):
        row = lead + [_fmt(traj.t[i]), _fmt(traj.fidelity[i]), _fmt(traj.V[i])]
        row += [_fmt(x) for x in traj.u[i]] + [_fmt(x) for x in traj.T[i]]
        row += [traj.mode[i], "|".join(sorted(traj.flags[i]))]
        yield row


def write_trajectories_csv(items, path) -> None:
    """Write several trajectories into one file.

    ``items`` is a list of ``(extra_columns, trajectory)``; all must share the
    same extra column names and number of controls.
    """
    items = list(items)
    if not items:
        raise ValueError("nothing to write")
    keys = list(items[0][0])
    m = items[0][1].u.shape[1]
    for extra, traj in items:
        if list(extra) != keys or traj.u.shape[1] != m:
            raise ValueError("trajectories do not share one CSV layout")

    def body(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys + csv_header(m))
        for extra, traj in items:
            w.writerows(_trajectory_rows(traj, extra))

    atomic_write(path, body)


def write_trajectory_csv(traj: Trajectory, path, extra_columns: dict | None = None) -> None:
    write_trajectories_csv([(extra_columns or {}, traj)], path)


def read_trajectory_csv(path) -> dict:
    """Load a trajectory CSV into column arrays; validates the header."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty trajectory file")
    header = rows[0]
    if "t" not in header or "fidelity" not in header:
        raise ValueError("not a trajectory CSV: missing t/fidelity columns")
    start = header.index("t")
    m = sum(1 for h in header if h.startswith("u_"))
    if header[start:] != csv_header(m):
        raise ValueError(f"unexpected trajectory header {header}")
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [[] for _ in header]
    out = {"_extra": {h: list(cols[i]) for i, h in enumerate(header[:start])}}
    num = ["t", "fidelity", "V"]
    for i, name in enumerate(header[start:], start):
        if name in num or name[:2] in ("u_", "T_"):
            out[name] = np.array([float(x) for x in cols[i]])
        elif name == "flags":
            out[name] = [frozenset(x.split("|")) - {""} for x in cols[i]]
        else:
            out[name] = list(cols[i])
    out["m"] = m
    return out
