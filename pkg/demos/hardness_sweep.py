"""Three-level system: trading early speed against late convergence.

The hardness parameter of the first approximate bang-bang law interpolates
between a smooth law (small gamma) and bang-bang control (large gamma).
"""
import os
import sys

from qlyap import load_builtin, run, time_to_fidelity
from qlyap.svg import trajectory_charts

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

base = load_builtin("xi_abb1")
named = []
print(f"{'gamma':>6s} {'t(0.5)':>8s} {'t(0.9)':>8s} {'t(0.99)':>8s}")
for gamma in (2, 5, 10, 50):
    st = base.with_parameter("gamma_1", gamma).build()
    tr = run(st.system, st.target, st.P, st.controller, st.rho0, st.sim)
    named.append((f"gamma={gamma}", tr))
    print(f"{gamma:6d} " + " ".join(f"{time_to_fidelity(tr, th):8.2f}" for th in (0.5, 0.9, 0.99)))

# Larger gamma reaches 0.5 sooner; gamma=50 is the slowest to reach 0.99.
st = load_builtin("xi_standard").build()
tr = run(st.system, st.target, st.P, st.controller, st.rho0, st.sim)
named.append(("standard", tr))
print(f"standard law, K=0.155: t(0.99) = {time_to_fidelity(tr, 0.99):.2f}")

for p in trajectory_charts(named, os.path.join(out, "xi_sweep")):
    print("wrote", p)
