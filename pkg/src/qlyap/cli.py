"""Command-line front end.

Subcommands::

    qlyap simulate   --scenario S [--out DIR] [--svg]
    qlyap compare    --scenario S1 --scenario S2 ... [--out DIR] [--svg]
    qlyap sweep      --scenario S --param gamma_1 --values 2,5,10,50
    qlyap robustness --scenario S [--epsilons 0.001,0.01] [--seeds N] [--seed BASE]
    qlyap analyze    --scenario S --trajectory run.csv

``--scenario`` takes a JSON path or the name of a shipped scenario.  Exit
codes: 0 success, 1 robustness bound violated, 2 invalid input,
3 numerical failure.  ``QLYAP_WORKERS`` overrides ``--workers``.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .core import spectrum
from .errors import NumericalError, QlyapError
from .invariant import membership, target_isolated
from .oscillation import TwoLevelParams, oscillation_lhs
from .robustness import (budget_experiment, check_bound, distance_bound, paired_runs,
                         sample_perturbation)
from .scenario import Scenario, builtin_scenario_names, resolve
from .simulator import (_fmt, atomic_write, read_trajectory_csv, run, time_to_fidelity,
                        write_trajectories_csv, write_trajectory_csv)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("qlyap")


class InputError(Exception):
    """Bad command-line input; maps to exit code 2."""


def worker_count(requested: int | None) -> int:
    env = os.environ.get("QLYAP_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"QLYAP_WORKERS must be an integer, got {env!r}") from None
    else:
        n = requested or 1
    if n < 1:
        raise InputError("worker count must be at least 1")
    return n


def pmap(fn, items, workers: int) -> list:
    """Map in a process pool; results keep the input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


def _run_doc(doc):
    sc = Scenario(doc)
    st = sc.build()
    return run(st.system, st.target, st.P, st.controller, st.rho0, st.sim)


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise InputError(f"{what}: empty value list")
    return vals


def _fmt_time(x):
    return "-" if x is None else f"{x:.6g}"


def _print_summary(name, traj, out=None):
    out = out or sys.stdout
    s = traj.summary()
    print(f"[{name}] final t={s['final_time']:.6g} fidelity={s['final_fidelity']:.10f} "
          f"V={s['final_V']:.10f}", file=out)
    for th, t in s["first_passage"].items():
        print(f"  time to fidelity {th:g}: {_fmt_time(t)}", file=out)
    print(f"  max |u|: {', '.join(f'{x:.6g}' for x in s['max_abs_u'])}", file=out)
    print(f"  chattering: {_fmt_time(s['chattering_time'])}", file=out)
    print(f"  flags: {', '.join(s['flags']) or 'none'}", file=out)
    print(f"  spectrum drift: {traj.spectrum_drift:.3g}", file=out)


def _scenarios(args, minimum=1) -> list[Scenario]:
    refs = args.scenario or []
    if len(refs) < minimum:
        raise InputError(f"need at least {minimum} --scenario")
    return [resolve(r) for r in refs]


def _single(args) -> Scenario:
    scs = _scenarios(args)
    if len(scs) != 1:
        raise InputError("this command takes exactly one --scenario")
    return scs[0]


def cmd_simulate(args) -> int:
    sc = _single(args)
    traj = _run_doc(sc.doc)
    path = os.path.join(args.out, sc.doc["output"]["csv"])
    write_trajectory_csv(traj, path)
    _print_summary(sc.name or "scenario", traj)
    print(f"wrote {path}")
    if args.svg or sc.doc["output"]["svg"]:
        from .svg import trajectory_charts

        for p in trajectory_charts([(sc.name, traj)], os.path.join(args.out, sc.name or "run")):
            print(f"wrote {p}")
    return EXIT_OK


def ranking(named_trajs, thresholds) -> dict:
    """``{threshold: [(name, time), ...]}`` sorted fastest first; misses go last."""
    out = {}
    for th in thresholds:
        rows = [(name, time_to_fidelity(tr, th)) for name, tr in named_trajs]
        out[th] = sorted(rows, key=lambda r: (r[1] is None, r[1] if r[1] is not None else 0.0))
    return out


def cmd_compare(args) -> int:
    scs = _scenarios(args)
    keys = {sc.system_key() for sc in scs}
    if len(keys) != 1:
        raise InputError("compared scenarios must share system, target and initial state")
    names = [sc.name or f"scenario{i + 1}" for i, sc in enumerate(scs)]
    if len(set(names)) != len(names):
        raise InputError("compared scenarios need distinct names")
    trajs = pmap(_run_doc, [sc.doc for sc in scs], worker_count(args.workers))
    named = list(zip(names, trajs))
    path = os.path.join(args.out, "compare.csv")
    write_trajectories_csv([({"law": n}, t) for n, t in named], path)
    ths = sorted({th for tr in trajs for th in tr.meta["fidelity_targets"]})
    rank = ranking(named, ths)
    rows = []
    for th, lst in rank.items():
        print(f"fidelity {th:g}:")
        for pos, (name, t) in enumerate(lst, 1):
            print(f"  {pos}. {name:<28s} {_fmt_time(t)}")
            rows.append([f"{th:g}", pos, name, "" if t is None else _fmt(t)])
    rpath = os.path.join(args.out, "ranking.csv")

    def body(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "rank", "law", "time"])
        w.writerows(rows)

    atomic_write(rpath, body)
    print(f"wrote {path}\nwrote {rpath}")
    if args.svg:
        from .svg import trajectory_charts

        for p in trajectory_charts(named, os.path.join(args.out, "compare")):
            print(f"wrote {p}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _single(args)
    if not args.param:
        raise InputError("sweep needs --param")
    values = _floats(args.values or "", "--values")
    docs = [sc.with_parameter(args.param, v).doc for v in values]
    trajs = pmap(_run_doc, docs, worker_count(args.workers))
    ths = list(trajs[0].meta["fidelity_targets"])
    header = ["parameter", "value"] + [f"t_{th:g}" for th in ths] + [
        "final_fidelity", "chattering_time", "max_abs_u"]
    rows = []
    for v, tr in zip(values, trajs):
        times = [time_to_fidelity(tr, th) for th in ths]
        mu = "|".join(_fmt(x) for x in np.abs(tr.u).max(axis=0))
        rows.append([args.param, _fmt(v)] + ["" if t is None else _fmt(t) for t in times]
                    + [_fmt(tr.fidelity[-1]),
                       "" if tr.chattering_time is None else _fmt(tr.chattering_time), mu])
        print(f"{args.param}={v:g}: " + "  ".join(
            f"t({th:g})={_fmt_time(t)}" for th, t in zip(ths, times))
            + f"  final={tr.fidelity[-1]:.8f}")
    path = os.path.join(args.out, "sweep.csv")

    def body(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    atomic_write(path, body)
    print(f"wrote {path}")
    if args.svg:
        from .svg import trajectory_charts

        named = [(f"{args.param}={v:g}", t) for v, t in zip(values, trajs)]
        for p in trajectory_charts(named, os.path.join(args.out, "sweep")):
            print(f"wrote {p}")
    return EXIT_OK


def _robust_chunk(task):
    doc, nominal, eps, seeds = task
    st = Scenario(doc).build()
    perts = [sample_perturbation(st.system, eps, s, st.target) for s in seeds]
    res = paired_runs(st.system, perts, st.controller, st.P, st.rho0, st.sim, nominal=nominal)
    return res.distance


def cmd_robustness(args) -> int:
    sc = _single(args)
    pert = sc.doc.get("perturbation", {})
    eps_list = (_floats(args.epsilons, "--epsilons") if args.epsilons
                else pert.get("epsilons", [0.01]))
    if any(e < 0 for e in eps_list):
        raise InputError("--epsilons must be nonnegative")
    n_seeds = args.seeds if args.seeds is not None else pert.get("seeds", 10)
    base = args.seed if args.seed is not None else pert.get("base_seed", 0)
    if n_seeds < 1:
        raise InputError("--seeds must be at least 1")
    seeds = list(range(base, base + n_seeds))
    nominal = _run_doc(sc.doc)
    workers = worker_count(args.workers)
    chunk = max(1, math.ceil(len(seeds) / workers))
    tasks = [(sc.doc, nominal, e, seeds[i:i + chunk]) for e in eps_list
             for i in range(0, len(seeds), chunk)]
    dists = pmap(_robust_chunk, tasks, workers)
    t = nominal.t
    summary, violated = [], False

    def body(fh):
        nonlocal violated
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "epsilon", "t", "distance", "bound", "margin"])
        for (_, _, eps, chunk_seeds), d in zip(tasks, dists):
            bound = distance_bound(t, eps)
            for s, row in zip(chunk_seeds, d):
                rep = check_bound(t, row, eps)
                violated |= not rep.ok
                summary.append([s, _fmt(eps), _fmt(rep.min_margin), _fmt(rep.t_min_margin),
                                _fmt(row[-1]), "ok" if rep.ok else "VIOLATED"])
                for ti, di, bi, mi in zip(t, row, bound, rep.margin):
                    w.writerow([s, _fmt(eps), _fmt(ti), _fmt(di), _fmt(bi), _fmt(mi)])

    path = os.path.join(args.out, "robustness.csv")
    atomic_write(path, body)
    spath = os.path.join(args.out, "robustness_summary.csv")

    def sbody(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "epsilon", "min_margin", "t_min_margin", "final_distance", "status"])
        w.writerows(summary)

    atomic_write(spath, sbody)
    for eps in eps_list:
        rows = [r for r in summary if r[1] == _fmt(eps)]
        mm = min(float(r[2]) for r in rows)
        print(f"epsilon={eps:g}: {len(rows)} seeds, min margin {mm:.3g}, "
              f"{sum(r[5] != 'ok' for r in rows)} violations")
    if "xi" in pert:
        st = sc.build()
        rep = budget_experiment(st.system, st.controller, st.P, st.rho0, st.sim, xi=pert["xi"],
                                seeds=seeds, nominal=nominal)
        print(f"budget: T={rep.T:.6g} xi1={rep.xi1:.4g} epsilon={rep.epsilon:.4g} "
              f"max distance to target {rep.distances.max():.4g} <= xi={rep.xi:g}: "
              f"{'yes' if rep.ok else 'NO'}")
        violated |= not rep.ok
    print(f"wrote {path}\nwrote {spath}")
    return EXIT_VIOLATION if violated else EXIT_OK


def cmd_analyze(args) -> int:
    sc = _single(args)
    if not args.trajectory:
        raise InputError("analyze needs --trajectory")
    try:
        data = read_trajectory_csv(args.trajectory)
    except (OSError, ValueError) as e:
        raise InputError(f"trajectory {args.trajectory}: {e}") from None
    st = sc.build()
    if data["m"] != st.system.n_controls:
        raise InputError("trajectory does not match the scenario's number of controls")
    # the CSV stores scalar summaries only, so the states are re-simulated
    traj = _run_doc(sc.doc)
    if len(traj.t) != len(data["t"]) or not np.allclose(traj.t, data["t"], rtol=0, atol=1e-9):
        raise InputError("trajectory time grid does not match the scenario")
    if not np.allclose(traj.fidelity, data["fidelity"], rtol=0, atol=1e-9):
        raise InputError("trajectory fidelity does not match the scenario")
    rho_end = traj.rho[-1]
    rep = membership(st.system, st.P, spectrum(st.rho0), rho_end)
    print(f"final state t={traj.t[-1]:.6g}: in_set={rep.in_set} residual_im={rep.residual_im:.3g} "
          f"residual_re={rep.residual_re:.3g} spectrum_match={rep.spectrum_match}")
    rep_f = membership(st.system, st.P, spectrum(st.rho0), st.target.projector(st.system.dim))
    print(f"target state: in_set={rep_f.in_set}")
    try:
        iso = target_isolated(st.system, st.P, st.target, st.rho0)
        print(f"target isolated: {iso.isolated}; E2 = {iso.e2_description}")
        if iso.e_prime:
            print("E' = {" + ", ".join(
                f"level {int(np.argmax(np.diag(e.matrix).real)) + 1}" for e in iso.e_prime) + "}")
    except (QlyapError, ValueError) as e:
        print(f"isolation check skipped: {e}")
    if st.system.dim == 2 and st.system.n_controls == 1:
        params = TwoLevelParams.from_system(st.system, st.P)
        rhs = params.omega12 / params.S
        idx = traj.event_indices("zero_point")
        rows = [[_fmt(traj.t[i]), _fmt(oscillation_lhs(params, traj.rho[i])), _fmt(rhs)] for i in idx]
        first = next((traj.t[i] for i in idx
                      if oscillation_lhs(params, traj.rho[i]) >= rhs), None)
        print(f"chattering condition: threshold {rhs:.6g}, first met at zero point "
              f"t={_fmt_time(first)} ({len(idx)} zero points)")
        path = os.path.join(args.out, "oscillation.csv")

        def body(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lhs", "threshold"])
            w.writerows(rows)

        atomic_write(path, body)
        print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "sweep": cmd_sweep,
            "robustness": cmd_robustness, "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlyap", description="Lyapunov control of closed quantum systems")
    p.add_argument("command", choices=sorted(COMMANDS) + ["list"])
    p.add_argument("--scenario", action="append",
                   help="scenario JSON path or shipped scenario name (repeat for compare)")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=None, help="base seed for perturbations")
    p.add_argument("--workers", type=int, default=None, help="process pool size")
    p.add_argument("--svg", action="store_true", help="also write SVG charts")
    p.add_argument("--param", help="sweep parameter: gamma, eta, S, K (optionally _k) or dt")
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--epsilons", help="comma-separated perturbation sizes")
    p.add_argument("--seeds", type=int, default=None, help="number of perturbation seeds")
    p.add_argument("--trajectory", help="trajectory CSV for analyze")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        for name in builtin_scenario_names():
            print(name)
        return EXIT_OK
    try:
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args)
    except NumericalError as e:
        print(f"error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, QlyapError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
