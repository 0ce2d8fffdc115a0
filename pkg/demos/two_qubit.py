"""Two coupled superconducting qubits, three control fields (GHz units).

The standard law with gains (15, 12, 0.6) peaks at about (3.9, 3.4, 0.2);
those peaks become the bounds of the second approximate bang-bang law.
"""
import os
import sys

import numpy as np

from qlyap import load_builtin, run, time_to_fidelity
from qlyap.svg import trajectory_charts

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

named = []
for name in ("two_qubit_standard", "two_qubit_abb2"):
    st = load_builtin(name).build()
    tr = run(st.system, st.target, st.P, st.controller, st.rho0, st.sim)
    named.append((name, tr))
    umax = np.abs(tr.u).max(axis=0)
    print(f"{name:<20s} t(0.95)={time_to_fidelity(tr, 0.95):.4f} ns  "
          f"t(0.99)={time_to_fidelity(tr, 0.99):.4f} ns  final={tr.fidelity[-1]:.5f}  "
          f"max|u|={np.round(umax, 3).tolist()}")

for p in trajectory_charts(named, os.path.join(out, "two_qubit")):
    print("wrote", p)
