"""Two-level system: why pure bang-bang control fails, and two ways out.

Run with ``python demos/two_level_chattering.py [OUTDIR]``; charts are written
to OUTDIR (default ``demo_out``).
"""
import os
import sys
import numpy as np

from qlyap import (ControllerConfig, SimConfig, TwoLevelParams, build_p, builtin_system,
                   oscillation_condition, run, time_to_fidelity)
from qlyap.svg import trajectory_charts

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

# H0 = diag(0.4, 0), H1 = sigma_x, |u| <= 0.2, target = upper level
system, target, rho0 = builtin_system("two_level")
P = build_p(target, 2)
params = TwoLevelParams.from_system(system, P)
print(f"initial fidelity {rho0.matrix[0, 0].real:.4f}, chattering threshold "
      f"w12/S = {params.omega12 / params.S:.2f}")

# Pure bang-bang: fast at first, then the sign of u flips at every zero point.
bb = run(system, target, P, ControllerConfig("bang_bang", strengths=0.2), rho0,
         SimConfig(dt=1e-3, horizon=12.0))
first = next(bb.t[i] for i in bb.event_indices("zero_point")
             if oscillation_condition(params, bb.rho[i]))
print(f"bang-bang: chattering condition first met at t = {first:.3f}, "
      f"fidelity stuck near {bb.fidelity[-1]:.4f}")

# Same start under the smooth and switching laws.
sim = SimConfig(dt=1e-3, horizon=40.0)
laws = {
    "standard K=0.4": ControllerConfig("standard", gains=0.4),
    "ABB-I gamma=11": ControllerConfig("abb1", strengths=0.2, gamma=11.0),
    "switching": ControllerConfig("switch_bb_std", strengths=0.2),
    "variable strength": ControllerConfig("switch_var_strength", strengths=0.2, mu=0.9,
                                          strength_rule="coeff_varying"),
}
trajs = {}
for name, cfg in laws.items():
    trajs[name] = run(system, target, P, cfg, rho0, sim)

print(f"\n{'law':<20s} {'t(0.95)':>9s} {'t(0.99)':>9s} {'final':>10s}")
for name, tr in trajs.items():
    t95, t99 = time_to_fidelity(tr, 0.95), time_to_fidelity(tr, 0.99)
    print(f"{name:<20s} {t95:9.3f} {t99:9.3f} {tr.fidelity[-1]:10.6f}")

sw = trajs["switching"]
k = sw.event_indices("switched")
if k:
    print(f"\nswitching law hands over to standard control at t = {sw.t[k[0]]:.3f}")

# Lyapunov function never increases for any of these laws
worst = max(np.max(np.diff(tr.V)) for tr in trajs.values())
print(f"largest single-step increase of V: {worst:.2e}")

named = [("bang-bang", bb)] + list(trajs.items())
for p in trajectory_charts(named, os.path.join(out, "two_level")):
    print("wrote", p)
