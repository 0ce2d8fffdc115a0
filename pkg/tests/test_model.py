import numpy as np
import pytest

from qlyap.core import fidelity
from qlyap.errors import ConditionError, DimensionError, NotHermitianError
from qlyap.model import (BUILTIN_NAMES, SIGMA_X, Control, QuantumSystem, TargetSpec,
                         builtin_system, check_conditions, require_conditions,
                         transition_frequencies)


def test_two_level_frequency():
    sys, _, _ = builtin_system("two_level")
    assert transition_frequencies(sys)[(1, 2)] == pytest.approx(0.4)


def test_xi_frequencies():
    sys, _, _ = builtin_system("xi_three_level")
    w = transition_frequencies(sys)
    assert w[(3, 2)] == pytest.approx(0.6)
    assert w[(1, 2)] == pytest.approx(-0.3)
    assert all(w[(a, a)] == 0 for a in (1, 2, 3))


class TestConditions:
    def test_two_level(self):
        sys, target, _ = builtin_system("two_level")
        rep = check_conditions(sys, target)
        assert rep.cond2_ok and rep.cond3_ok and rep.ok

    def test_xi_target_two(self):
        sys, target, _ = builtin_system("xi_three_level")
        assert target.index == 2
        assert check_conditions(sys, target).ok

    def test_xi_target_one_is_uncoupled_from_level_three(self):
        sys, _, _ = builtin_system("xi_three_level")
        rep = check_conditions(sys, TargetSpec(1, 3))
        assert rep.cond2_ok
        assert not rep.cond3_ok
        assert rep.cond3_uncoupled == [3]
        with pytest.raises(ConditionError) as err:
            require_conditions(sys, TargetSpec(1, 3))
        assert err.value.report.cond3_uncoupled == [3]

    def test_equal_target_frequencies_reported(self):
        # levels 2 and 3 are both 1 above the target, so their frequencies coincide
        h1 = np.ones((3, 3)) - np.eye(3)
        sys = QuantumSystem.from_matrices([0.0, 1.0, 1.0], [h1], 1.0)
        rep = check_conditions(sys, TargetSpec(1, 3))
        assert not rep.cond2_ok
        assert rep.cond2_violations == [(2, 3, 1.0, 1.0)]

    def test_builtins_satisfy_conditions(self):
        for name in BUILTIN_NAMES:
            sys, target, _ = builtin_system(name)
            assert check_conditions(sys, target).ok, name


class TestBuiltins:
    def test_two_level(self):
        sys, target, rho0 = builtin_system("two_level")
        assert np.allclose(sys.h0, np.diag([0.4, 0.0]))
        assert np.allclose(sys.control_matrices[0], SIGMA_X)
        assert sys.strengths.tolist() == [0.2]
        assert target.index == 1
        assert fidelity(rho0, target.projector(2)) == pytest.approx(1 / 6)

    def test_two_qubit(self):
        sys, target, rho0 = builtin_system("two_qubit_sc")
        assert np.allclose(sys.h0_diag, [15, 5, -5, -15])
        assert sys.unit == "GHz"
        assert sys.strengths.tolist() == [3.9, 3.4, 0.2]
        assert target.index == 1
        assert fidelity(rho0, target.projector(4)) == pytest.approx(1 / 16)

    def test_xi_overlap(self):
        sys, target, rho0 = builtin_system("xi_three_level")
        assert fidelity(rho0, target.projector(3)) == pytest.approx(1 / 3)

    @pytest.mark.parametrize("name", BUILTIN_NAMES)
    def test_initial_states_pure(self, name):
        _, _, rho0 = builtin_system(name)
        assert rho0.purity() == pytest.approx(1.0, abs=1e-10)

    def test_unknown(self):
        with pytest.raises(ValueError):
            builtin_system("lambda_system")


class TestValidation:
    def test_rejects_off_diagonal_h0(self):
        with pytest.raises(ValueError):
            QuantumSystem.from_matrices(SIGMA_X, [SIGMA_X], 1.0)

    def test_rejects_non_hermitian_control(self):
        with pytest.raises(NotHermitianError):
            QuantumSystem([0.0, 1.0], (Control(np.array([[0, 1], [0, 0]]), 1.0),))

    def test_rejects_wrong_shape(self):
        with pytest.raises(DimensionError):
            QuantumSystem([0.0, 1.0], (Control(np.eye(3), 1.0),))

    def test_rejects_nonpositive_strength(self):
        with pytest.raises(ValueError):
            QuantumSystem([0.0, 1.0], (Control(SIGMA_X, 0.0),))

    def test_target_range(self):
        with pytest.raises(ValueError):
            TargetSpec(3, 2)
        with pytest.raises(ValueError):
            TargetSpec(0)

    def test_hamiltonian(self):
        sys, _, _ = builtin_system("two_level")
        assert np.allclose(sys.hamiltonian([0.1]), [[0.4, 0.1], [0.1, 0.0]])
