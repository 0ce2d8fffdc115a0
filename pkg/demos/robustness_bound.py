"""Hamiltonian perturbations: the distance bound and the epsilon budget.

A nominal run's control schedule is replayed open-loop on randomly perturbed
systems.  The state distance must stay under min(exp(2 t eps) - 1, 2); and
if eps is chosen from the time T a law needs to get within xi1 of the
target, the perturbed state ends within xi.
"""
from qlyap import (budget_experiment, check_bound, epsilon_budget, load_builtin, run,
                   sample_perturbation)
from qlyap.robustness import paired_runs

for name in ("two_level_abb1", "two_level_standard"):
    st = load_builtin(name).build()
    nominal = run(st.system, st.target, st.P, st.controller, st.rho0, st.sim)
    print(f"\n{name}")
    for eps in (0.001, 0.01, 0.05):
        perts = [sample_perturbation(st.system, eps, seed, st.target) for seed in range(20)]
        res = paired_runs(st.system, perts, st.controller, st.P, st.rho0, st.sim, nominal=nominal)
        # the bound is tight at t = 0, so look at the margin afterwards
        margins = [check_bound(nominal.t[1:], d[1:], eps).min_margin for d in res.distance]
        print(f"  eps={eps:<6g} max distance {res.distance.max():.4f}  "
              f"min margin to bound for t > 0: {min(margins):.2e}")

    rep = budget_experiment(st.system, st.controller, st.P, st.rho0, st.sim, xi=0.1,
                            nominal=nominal)
    print(f"  reaches fidelity 0.999 at T={rep.T:.2f} (xi1={rep.xi1:.4f}); "
          f"budget eps={rep.epsilon:.2e}; worst perturbed distance {rep.distances.max():.4f}")

# A faster law earns a larger budget for the same accuracy.
print(f"\nbudget for xi=0.1, xi1=0.03: T=10 -> {epsilon_budget(10, 0.1, 0.03):.2e}, "
      f"T=20 -> {epsilon_budget(20, 0.1, 0.03):.2e}")
