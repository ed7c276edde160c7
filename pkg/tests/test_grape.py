import math

import numpy as np
import pytest

from qgrape import dynamics as dyn
from qgrape import fisher, grape, oracles
from qgrape.errors import QGrapeError, ValidationError


def make_problem(noise, horizon=2.0, omega=1.0, probe=None):
    return dyn.frequency_estimation_problem(
        omega, noise, dyn.plus_state() if probe is None else probe, horizon
    )


def random_schedule(rng, m, dt, p=3, scale=1.0):
    return dyn.ControlGrid(rng.uniform(-scale, scale, size=(m, p)), dt)


NOISE_MODELS = {
    "transverse": dyn.Dephasing(theta=math.pi / 2, phi=0.0, gamma=0.1),
    "parallel": dyn.Dephasing(theta=0.0, phi=0.0, gamma=0.1),
    "emission": dyn.SpontaneousEmission(gamma_plus=0.05, gamma_minus=0.1),
    "noiseless": None,
}


class TestMOperators:
    def test_final_step_has_no_downstream_term(self):
        rng = np.random.default_rng(1)
        prob = make_problem(NOISE_MODELS["emission"])
        grid = random_schedule(rng, 10, 0.2)
        traj = dyn.propagate(prob, grid)
        _, _, m3 = grape.m_operators(traj, prob, j=traj.n_steps, k=0)
        np.testing.assert_allclose(m3, 0.0, atol=1e-15)

    def test_identity_generator_gives_zero_operators(self):
        rng = np.random.default_rng(2)
        prob = dyn.frequency_estimation_problem(
            1.0, NOISE_MODELS["transverse"], dyn.plus_state(), 2.0,
            control_generators=(np.eye(2, dtype=complex),),
        )
        grid = random_schedule(rng, 10, 0.2, p=1)
        traj = dyn.propagate(prob, grid)
        for j in (1, 5, 10):
            for op in grape.m_operators(traj, prob, j, 0):
                np.testing.assert_allclose(op, 0.0, atol=1e-14)

    def test_operators_are_hermitian(self):
        rng = np.random.default_rng(3)
        prob = make_problem(NOISE_MODELS["parallel"], horizon=1.2)
        grid = random_schedule(rng, 12, 0.1)
        traj = dyn.propagate(prob, grid)
        for j in (1, 6, 12):
            for k in range(3):
                for op in grape.m_operators(traj, prob, j, k):
                    assert np.abs(op - op.conj().T).max() < 1e-10

    def test_prefix_sum_identity_matches_double_loop(self):
        # M2 via the cached sensitivity accumulator vs the explicit sum
        rng = np.random.default_rng(4)
        m, dt = 15, 0.1
        prob = make_problem(NOISE_MODELS["emission"], horizon=m * dt)
        grid = random_schedule(rng, m, dt)
        traj = dyn.propagate(prob, grid)
        dh0 = prob.free_hamiltonian_derivative(prob.x)
        suffix = grape._suffix_propagators(traj)
        for j in (1, 7, 15):
            for k in range(3):
                _, m2, _ = grape.m_operators(traj, prob, j, k)
                h_k = prob.control_generators[k]
                total = np.zeros((2, 2), dtype=complex)
                for i in range(1, j + 1):
                    inner = dh0 @ traj.states[i] - traj.states[i] @ dh0
                    vec = dyn.vectorize(inner)
                    for step in range(i + 1, j + 1):
                        vec = traj.step_propagators[step - 1] @ vec
                    walked = dyn.unvectorize(vec)
                    outer = h_k @ walked - walked @ h_k
                    total += dyn.unvectorize(suffix[j] @ dyn.vectorize(outer))
                np.testing.assert_allclose(m2, total, atol=1e-12)

    def test_index_validation(self):
        rng = np.random.default_rng(5)
        prob = make_problem(None)
        traj = dyn.propagate(prob, random_schedule(rng, 4, 0.5))
        with pytest.raises(ValidationError):
            grape.m_operators(traj, prob, 0, 0)
        with pytest.raises(ValidationError):
            grape.m_operators(traj, prob, 5, 0)
        with pytest.raises(ValidationError):
            grape.m_operators(traj, prob, 1, 3)


class TestGradientPaths:
    def test_adjoint_equals_naive_to_machine_precision(self):
        rng = np.random.default_rng(6)
        povm = fisher.Povm.plus_minus()
        for name, noise in NOISE_MODELS.items():
            m = 25
            prob = make_problem(noise, horizon=m * 0.08)
            grid = random_schedule(rng, m, 0.08)
            traj = dyn.propagate(prob, grid)
            g_fast = grape.gradient_qfi(traj, prob, method="adjoint")
            g_ref = grape.gradient_qfi(traj, prob, method="naive")
            np.testing.assert_allclose(g_fast, g_ref, atol=1e-10)
            c_fast = grape.gradient_cfi(traj, prob, povm, method="adjoint")
            c_ref = grape.gradient_cfi(traj, prob, povm, method="naive")
            np.testing.assert_allclose(c_fast, c_ref, atol=1e-10)

    def test_exact_matches_finite_differences_tightly(self):
        rng = np.random.default_rng(7)
        povm = fisher.Povm.plus_minus()
        for name, noise in NOISE_MODELS.items():
            m, dt = 20, 0.05
            prob = make_problem(noise, horizon=m * dt)
            grid = random_schedule(rng, m, dt)
            traj = dyn.propagate(prob, grid)
            for objective in (grape.qfi_objective(), grape.cfi_objective(povm)):
                analytic = grape.gradient(traj, prob, objective, method="exact")
                numeric = grape.finite_difference_gradient(prob, grid, objective, delta=1e-5)
                diff = np.abs(analytic - numeric)
                rel = diff / np.maximum(np.abs(numeric), 1e-300)
                assert ((rel <= 1e-4) | (diff <= 1e-8)).all(), name

    def test_first_order_identity_error_shrinks_linearly_in_dt(self):
        # the operator-identity paths approximate the step derivative to
        # first order; halving dt must roughly halve their deviation
        rng = np.random.default_rng(8)
        prob_T = 1.0
        deviations = []
        for m in (20, 40, 80):
            dt = prob_T / m
            prob = make_problem(NOISE_MODELS["emission"], horizon=prob_T)
            tmid = (np.arange(m) + 0.5) * dt
            amps = np.stack(
                [np.sin(1.3 * tmid + 0.2), 0.7 * np.cos(0.9 * tmid), 0.4 * np.sin(2.2 * tmid)],
                axis=1,
            )
            grid = dyn.ControlGrid(amps, dt)
            traj = dyn.propagate(prob, grid)
            g1 = grape.gradient_qfi(traj, prob, method="adjoint")
            g2 = grape.gradient_qfi(traj, prob, method="exact")
            deviations.append(np.abs(g1 - g2).max() / dt)  # per-entry scale ~ dt
        assert deviations[0] > deviations[1] > deviations[2]
        assert deviations[0] / deviations[2] > 2.5

    def test_x_independent_dynamics_gives_zero_gradient(self):
        rng = np.random.default_rng(9)
        prob = dyn.EstimationProblem(
            x=1.0,
            free_hamiltonian=lambda x: np.zeros((2, 2), dtype=complex),
            free_hamiltonian_derivative=lambda x: np.zeros((2, 2), dtype=complex),
            control_generators=dyn.PAULIS,
            noise=NOISE_MODELS["parallel"],
            probe=dyn.plus_state(),
            horizon=1.0,
        )
        grid = random_schedule(rng, 10, 0.1)
        traj = dyn.propagate(prob, grid)
        for method in ("exact", "adjoint", "naive"):
            np.testing.assert_allclose(grape.gradient_qfi(traj, prob, method=method), 0.0, atol=1e-12)

    def test_stationary_at_held_optimum(self):
        # slightly detuned cancellation point: gradient must sit at the
        # finite-difference noise floor
        gamma, horizon = 0.1, 5.0
        prob = make_problem(dyn.Dephasing(math.pi / 2, 0.0, gamma), horizon=horizon)
        m = 100
        grid = dyn.ControlGrid.constant([0.0, 0.0, -0.5 * (1 + 1e-4)], m, horizon / m)
        traj = dyn.propagate(prob, grid)
        analytic = grape.gradient_qfi(traj, prob, method="exact")
        numeric = grape.finite_difference_gradient(prob, grid, grape.qfi_objective(), delta=1e-5)
        floor = np.abs(numeric).max()
        assert np.abs(analytic).max() <= 10.0 * floor + 1e-12

    def test_cfi_gradient_trivial_povm_is_zero(self):
        rng = np.random.default_rng(10)
        prob = make_problem(NOISE_MODELS["transverse"])
        grid = random_schedule(rng, 8, 0.25)
        traj = dyn.propagate(prob, grid)
        povm = fisher.Povm((np.eye(2, dtype=complex),))
        for method in ("exact", "adjoint", "naive"):
            np.testing.assert_allclose(
                grape.gradient_cfi(traj, prob, povm, method=method), 0.0, atol=1e-12
            )


class TestFiniteDifferenceGradient:
    def test_constant_objective_gives_zeros(self):
        rng = np.random.default_rng(11)
        prob = dyn.EstimationProblem(
            x=1.0,
            free_hamiltonian=lambda x: np.zeros((2, 2), dtype=complex),
            free_hamiltonian_derivative=lambda x: np.zeros((2, 2), dtype=complex),
            control_generators=dyn.PAULIS,
            noise=None,
            probe=dyn.plus_state(),
            horizon=1.0,
        )
        grid = random_schedule(rng, 5, 0.2)
        table = grape.finite_difference_gradient(prob, grid, grape.qfi_objective(), delta=1e-4)
        np.testing.assert_allclose(table, 0.0, atol=1e-9)

    def test_central_difference_is_second_order_in_delta(self):
        rng = np.random.default_rng(12)
        m, dt = 6, 0.2
        prob = make_problem(NOISE_MODELS["parallel"], horizon=m * dt)
        grid = random_schedule(rng, m, dt)
        exact = grape.gradient_qfi(dyn.propagate(prob, grid), prob, method="exact")
        err = {}
        for delta in (2e-3, 1e-3):
            fd = grape.finite_difference_gradient(prob, grid, grape.qfi_objective(), delta=delta)
            err[delta] = np.abs(fd - exact).max()
        ratio = err[2e-3] / err[1e-3]
        assert 3.0 < ratio < 5.0  # O(delta^2) halving

    def test_rejects_nonpositive_delta(self):
        prob = make_problem(None, horizon=0.2)
        grid = dyn.ControlGrid.zeros(1, 3, 0.2)
        with pytest.raises(ValidationError):
            grape.finite_difference_gradient(prob, grid, grape.qfi_objective(), delta=0.0)


class TestAscend:
    def test_already_optimal_start_is_a_fixed_point(self):
        gamma, horizon = 0.1, 5.0
        prob = make_problem(dyn.Dephasing(math.pi / 2, 0.0, gamma), horizon=horizon)
        m = 100
        start = dyn.ControlGrid.constant([0.0, 0.0, -0.5 * (1 + 1e-4)], m, horizon / m)
        config = grape.AscentConfig(
            dt=horizon / m,
            step_size=0.05,
            max_iterations=60,
            init_mode="user_supplied",
            initial_grid=start,
            gradient_method="exact",
        )
        report = grape.ascend(prob, config, grape.qfi_objective())
        assert report.converged
        target = oracles.transverse_controlled_qfi(gamma, horizon)
        assert report.objective_history[0] == pytest.approx(target, rel=1e-4)
        assert report.objective_history[-1] >= report.objective_history[0] - 1e-12
        drift = np.abs(report.final_grid.amplitudes - start.amplitudes).max()
        assert drift < 5e-3

    def test_monotone_history_with_backtracking(self):
        prob = make_problem(NOISE_MODELS["parallel"], horizon=2.0)
        config = grape.AscentConfig(dt=0.1, step_size=0.5, max_iterations=40, seed=3)
        report = grape.ascend(prob, config, grape.qfi_objective())
        hist = report.objective_history
        assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))

    def test_momentum_keeps_history_monotone(self):
        prob = make_problem(NOISE_MODELS["transverse"], horizon=2.0)
        config = grape.AscentConfig(
            dt=0.1, step_size=0.1, max_iterations=60, seed=5, momentum=0.9
        )
        report = grape.ascend(prob, config, grape.qfi_objective())
        hist = report.objective_history
        assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))

    def test_final_history_entry_matches_final_grid(self):
        prob = make_problem(NOISE_MODELS["emission"], horizon=1.0)
        config = grape.AscentConfig(dt=0.1, step_size=0.2, max_iterations=25, seed=7)
        objective = grape.qfi_objective()
        report = grape.ascend(prob, config, objective)
        revalue = grape.evaluate_objective(prob, report.final_grid, objective)
        assert revalue == pytest.approx(report.objective_history[-1], abs=1e-10)
        assert len(report.objective_history) == report.iterations_used + 1

    def test_deterministic_given_seed(self):
        prob = make_problem(NOISE_MODELS["parallel"], horizon=1.0)
        config = grape.AscentConfig(dt=0.1, step_size=0.3, max_iterations=15, seed=11)
        objective = grape.qfi_objective()
        rep1 = grape.ascend(prob, config, objective)
        rep2 = grape.ascend(prob, config, objective)
        assert rep1.objective_history == rep2.objective_history
        np.testing.assert_array_equal(rep1.final_grid.amplitudes, rep2.final_grid.amplitudes)

    def test_seed_changes_initialization(self):
        prob = make_problem(None, horizon=1.0)
        objective = grape.qfi_objective()
        grids = []
        for seed in (0, 1):
            config = grape.AscentConfig(dt=0.25, step_size=0.1, max_iterations=1, seed=seed)
            grids.append(grape.ascend(prob, config, objective).final_grid.amplitudes)
        assert np.abs(grids[0] - grids[1]).max() > 1e-3

    def test_failure_mid_run_is_reported(self, monkeypatch):
        prob = make_problem(NOISE_MODELS["parallel"], horizon=1.0)
        config = grape.AscentConfig(dt=0.1, step_size=0.1, max_iterations=10, seed=1)
        calls = {"n": 0}
        real = grape.gradient

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] >= 3:
                raise QGrapeError("synthetic failure")
            return real(*args, **kwargs)

        monkeypatch.setattr(grape, "gradient", flaky)
        report = grape.ascend(prob, config, grape.qfi_objective())
        assert not report.converged
        assert report.error is not None and "synthetic failure" in report.error
        assert report.failed_iteration == 3
        assert len(report.objective_history) == report.iterations_used + 1

    def test_parallel_long_horizon_beats_single_pulse_strategy(self):
        # beyond the coherence window, repeated pulses must at least match
        # (and here beat) both twice the free value and the best single pulse
        gamma, horizon = 0.1, 20.0
        prob = make_problem(dyn.Dephasing(0.0, 0.0, gamma), horizon=horizon)
        config = grape.AscentConfig(
            dt=0.05, step_size=0.1, max_iterations=150, seed=0, momentum=0.95,
            convergence_tolerance=1e-10,
        )
        report = grape.ascend(prob, config, grape.qfi_objective())
        free = oracles.parallel_free_qfi(gamma, horizon)
        best_pulse = max(
            oracles.parallel_single_pulse_qfi(
                oracles.SinglePulsePlan(t0=float(t), horizon=horizon, omega0=1.0, gamma=gamma)
            )
            for t in np.linspace(0.0, horizon, 400)
        )
        assert report.objective_history[-1] >= 2.0 * free
        assert report.objective_history[-1] >= best_pulse

    def test_recovers_transverse_optimum_small_instance(self):
        # scaled-down companion of the acceptance run (shorter horizon)
        gamma, horizon = 0.1, 2.0
        prob = make_problem(dyn.Dephasing(math.pi / 2, 0.0, gamma), horizon=horizon)
        config = grape.AscentConfig(
            dt=0.05,
            step_size=0.1,
            max_iterations=250,
            seed=0,
            momentum=0.95,
            gradient_method="exact",
            convergence_tolerance=1e-10,
        )
        report = grape.ascend(prob, config, grape.qfi_objective())
        target = oracles.transverse_controlled_qfi(gamma, horizon)
        assert report.objective_history[-1] >= 0.95 * target


class TestAscentConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ValidationError):
            grape.AscentConfig(dt=0.0)
        with pytest.raises(ValidationError):
            grape.AscentConfig(dt=0.1, step_size=-1.0)
        with pytest.raises(ValidationError):
            grape.AscentConfig(dt=0.1, max_iterations=0)
        with pytest.raises(ValidationError):
            grape.AscentConfig(dt=0.1, init_mode="warm")
        with pytest.raises(ValidationError):
            grape.AscentConfig(dt=0.1, init_mode="user_supplied")
        with pytest.raises(ValidationError):
            grape.AscentConfig(dt=0.1, momentum=1.0)

    def test_objective_validation(self):
        with pytest.raises(ValidationError):
            grape.Objective(kind="fidelity")
        with pytest.raises(ValidationError):
            grape.Objective(kind="cfi")
