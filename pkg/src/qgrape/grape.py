"""Gradient-ascent pulse engineering for Fisher-information objectives.

The gradient of the objective with respect to control amplitude ``V_k(j)``
combines three Hermitian operators built from the cached trajectory,

``M1_j = i D_{j+1}^m [H_k, rho_j]``,
``M2_j = sum_{i<=j} D_{j+1}^m [H_k, D_{i+1}^j [dH0, rho_i]]``,
``M3_j = (1 - delta_{jm}) sum_{i>j} D_{i+1}^m [dH0, D_{j+1}^i [H_k, rho_j]]``,

where ``D_a^b`` is the propagator product from step a to b (identity when
a > b).  For the quantum Fisher information the entry is

``dF/dV_k(j) = dt Tr(L^2 M1_j) - 2 dt^2 Tr(L (M2_j + M3_j))``

with ``L`` the symmetric logarithmic derivative at the final state; for the
classical Fisher information ``L^2`` and ``L`` are replaced by the weighted
effect sums ``sum_y (dln p_y)^2 E_y`` and ``sum_y (dln p_y) E_y``.

The discretized dynamics at fixed ``dt`` (exact step exponentials plus the
sensitivity recursion of :func:`qgrape.dynamics.propagate`) is the exact
optimization target.  Three gradient evaluations are provided:

* ``exact`` (default): the true gradient of that target.  The per-step
  derivative of ``exp(dt L_j)`` with respect to an amplitude is evaluated
  exactly through a block-matrix exponential, so the result matches central
  finite differences of the objective to the differencing error itself.
* ``adjoint``: the operator identity above, which replaces each step
  derivative by its leading term ``-i dt [H_k, .] exp(dt L_j)``.  It is exact
  only to first order in ``dt`` (error ``O(dt)`` relative, set by commutator
  scales) but needs one backward sweep and no extra exponentials; gradient
  ascent uses it.
* ``naive``: the same first-order identity, accumulated by the literal
  operator sums (quadratic in the step count); the reference the fast path is
  tested against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import fisher
from .dynamics import (
    ControlGrid,
    EstimationProblem,
    Trajectory,
    commutator_superop,
    propagate,
    unvectorize,
    vectorize,
)
from .errors import QGrapeError, SingularOutcomeError, ValidationError
from .fisher import Povm, sld

__all__ = [
    "Objective",
    "qfi_objective",
    "cfi_objective",
    "objective_value",
    "evaluate_objective",
    "m_operators",
    "gradient_qfi",
    "gradient_cfi",
    "finite_difference_gradient",
    "AscentConfig",
    "AscentReport",
    "ascend",
]

logger = logging.getLogger(__name__)

HERMITICITY_WARN_TOL = 1e-8
CONVERGENCE_WINDOW = 10
MAX_BACKTRACK_HALVINGS = 20


@dataclass(frozen=True)
class Objective:
    """Optimization target: ``qfi`` or ``cfi`` under a fixed POVM."""

    kind: str
    povm: Povm | None = None

    def __post_init__(self):
        if self.kind not in ("qfi", "cfi"):
            raise ValidationError(f"objective kind must be 'qfi' or 'cfi', got {self.kind!r}")
        if self.kind == "cfi" and self.povm is None:
            raise ValidationError("cfi objective requires a POVM")


def qfi_objective() -> Objective:
    return Objective(kind="qfi")


def cfi_objective(povm: Povm) -> Objective:
    return Objective(kind="cfi", povm=povm)


def objective_value(traj: Trajectory, objective: Objective) -> float:
    """Objective evaluated on a cached trajectory."""
    rho = traj.final_state
    drho = traj.final_state_derivative
    if objective.kind == "qfi":
        return fisher.qfi(rho, drho)
    return fisher.cfi(rho, drho, objective.povm)


def evaluate_objective(
    problem: EstimationProblem,
    grid: ControlGrid,
    objective: Objective,
    x: float | None = None,
) -> float:
    """Propagate and evaluate the objective at the final time."""
    return objective_value(propagate(problem, grid, x=x), objective)


def _commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def _warn_if_not_hermitian(mat: np.ndarray, label: str) -> None:
    dev = np.abs(mat - mat.conj().T).max()
    if dev > HERMITICITY_WARN_TOL:
        logger.warning("%s deviates from Hermitian by %.3e", label, dev)


def _suffix_propagators(traj: Trajectory) -> np.ndarray:
    """``S[j] = D_{j+1}^m`` for j = 0..m (``S[m]`` is the identity)."""
    m = traj.n_steps
    suffix = np.empty((m + 1, 4, 4), dtype=complex)
    suffix[m] = np.eye(4, dtype=complex)
    for j in range(m, 0, -1):
        suffix[j - 1] = suffix[j] @ traj.step_propagators[j - 1]
    return suffix


def m_operators(
    traj: Trajectory,
    problem: EstimationProblem,
    j: int,
    k: int,
    _suffix: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three Hermitian gradient operators for step j (1-based) and
    control k, evaluated by the literal sums."""
    m = traj.n_steps
    if not 1 <= j <= m:
        raise ValidationError(f"step index must satisfy 1 <= j <= {m}, got {j}")
    if not 0 <= k < problem.n_controls:
        raise ValidationError(f"control index must satisfy 0 <= k < {problem.n_controls}")
    suffix = _suffix_propagators(traj) if _suffix is None else _suffix
    h_k = problem.control_generators[k]
    dh0 = problem.free_hamiltonian_derivative(traj.x)
    rho_j = traj.states[j]

    m1 = 1j * unvectorize(suffix[j] @ vectorize(_commutator(h_k, rho_j)))
    # phi stores -i [dH0, .] accumulations, so the Hermitian form carries i
    m2 = 1j * unvectorize(suffix[j] @ vectorize(_commutator(h_k, traj.phi[j])))
    m3 = np.zeros((2, 2), dtype=complex)
    w = vectorize(_commutator(h_k, rho_j))
    for i in range(j + 1, m + 1):
        w = traj.step_propagators[i - 1] @ w
        m3 += unvectorize(suffix[i] @ vectorize(_commutator(dh0, unvectorize(w))))

    for label, op in (("M1", m1), ("M2", m2), ("M3", m3)):
        _warn_if_not_hermitian(op, label)
    return m1, m2, m3


def _objective_weights(
    traj: Trajectory, objective: Objective
) -> tuple[np.ndarray, np.ndarray]:
    """Weight pair (W1, W2): (L, L^2) for QFI, effect sums for CFI."""
    rho = traj.final_state
    drho = traj.final_state_derivative
    if objective.kind == "qfi":
        l_op = sld(rho, drho).matrix
        return l_op, l_op @ l_op
    probs, dprobs = fisher.outcome_statistics(rho, drho, objective.povm)
    w1 = np.zeros((2, 2), dtype=complex)
    w2 = np.zeros((2, 2), dtype=complex)
    for y, (p, dp, effect) in enumerate(zip(probs, dprobs, objective.povm.effects)):
        if p < fisher.OUTCOME_PROB_FLOOR:
            if abs(dp) < fisher.OUTCOME_DERIV_FLOOR:
                continue
            raise SingularOutcomeError(
                f"outcome {y} has probability {p:.3e} but derivative {dp:.3e}"
            )
        ratio = dp / p
        w1 += ratio * effect
        w2 += ratio * ratio * effect
    return w1, w2


def _gradient_naive(
    traj: Trajectory, problem: EstimationProblem, w1: np.ndarray, w2: np.ndarray
) -> np.ndarray:
    m, p = traj.n_steps, problem.n_controls
    dt = traj.dt
    suffix = _suffix_propagators(traj)
    grad = np.empty((m, p))
    for j in range(1, m + 1):
        for k in range(p):
            m1, m2, m3 = m_operators(traj, problem, j, k, _suffix=suffix)
            grad[j - 1, k] = (
                dt * np.trace(w2 @ m1).real
                - 2.0 * dt * dt * np.trace(w1 @ (m2 + m3)).real
            )
    return grad


def _backward_weights(
    traj: Trajectory, w1: np.ndarray, w2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """``lam[j] = adj(D_{j+1}^m)(W1)`` and ``mu[j] = adj(D_{j+1}^m)(W2)``."""
    m = traj.n_steps
    props = traj.step_propagators
    lam = np.empty((m + 1, 2, 2), dtype=complex)
    mu = np.empty((m + 1, 2, 2), dtype=complex)
    lam[m] = w1
    mu[m] = w2
    for j in range(m, 0, -1):
        adj = props[j - 1].conj().T
        lam[j - 1] = unvectorize(adj @ vectorize(lam[j]))
        mu[j - 1] = unvectorize(adj @ vectorize(mu[j]))
    return lam, mu


def _gradient_adjoint(
    traj: Trajectory, problem: EstimationProblem, w1: np.ndarray, w2: np.ndarray
) -> np.ndarray:
    """Single backward sweep: propagators enter only through the adjoint
    action on the weight operators and an accumulated row functional."""
    m, p = traj.n_steps, problem.n_controls
    dt = traj.dt
    props = traj.step_propagators
    dh0 = problem.free_hamiltonian_derivative(traj.x)
    lam, mu = _backward_weights(traj, w1, w2)

    # row functional g[j] = sum_{i>j} vec([lam_i, dH0]^T)^T D_{j+1}^i
    g = np.zeros((m + 1, 4), dtype=complex)
    for j in range(m, 0, -1):
        u = vectorize(_commutator(lam[j], dh0).T)
        g[j - 1] = (g[j] + u) @ props[j - 1]

    grad = np.empty((m, p))
    states = traj.states
    phi = traj.phi
    for k in range(p):
        h_k = problem.control_generators[k]
        comm_rho = np.einsum("ab,jbc->jac", h_k, states[1:]) - np.einsum(
            "jab,bc->jac", states[1:], h_k
        )
        comm_phi = np.einsum("ab,jbc->jac", h_k, phi[1:]) - np.einsum(
            "jab,bc->jac", phi[1:], h_k
        )
        term_m1 = (1j * np.einsum("jab,jba->j", mu[1:], comm_rho)).real
        term_m2 = (1j * np.einsum("jab,jba->j", lam[1:], comm_phi)).real
        cvecs = comm_rho.transpose(0, 2, 1).reshape(m, 4)  # vec per step
        term_m3 = np.einsum("ja,ja->j", g[1:], cvecs).real
        grad[:, k] = dt * term_m1 - 2.0 * dt * dt * (term_m2 + term_m3)
    return grad


def _step_derivative_kernel(
    liouvillian: np.ndarray, generator_derivative: np.ndarray, dt: float
) -> np.ndarray:
    """Exact amplitude derivative of one step propagator.

    Returns ``B = integral_0^dt exp(s L) P exp((dt - s) L) ds`` for
    ``P = dL/dV``, read off the upper-right block of
    ``exp(dt [[L, P], [0, L]])``.
    """
    block = np.zeros((8, 8), dtype=complex)
    block[:4, :4] = liouvillian
    block[4:, 4:] = liouvillian
    block[:4, 4:] = generator_derivative
    return expm(dt * block)[:4, 4:]


def _gradient_exact(
    traj: Trajectory, problem: EstimationProblem, w1: np.ndarray, w2: np.ndarray
) -> np.ndarray:
    """True gradient of the discretized objective.

    Differs from the first-order paths only in the per-step propagator
    derivative, which is evaluated exactly; everything else (weights,
    backward sweeps, sensitivity chain rule) is shared structure.
    """
    m, p = traj.n_steps, problem.n_controls
    dt = traj.dt
    props = traj.step_propagators
    dgen = -1j * commutator_superop(problem.free_hamiltonian_derivative(traj.x))
    control_gens = [
        -1j * commutator_superop(h_k) for h_k in problem.control_generators
    ]
    lam, mu = _backward_weights(traj, w1, w2)

    # q[j] = sum_{i>=j} vec(lam_i^T)^T G D_{j+1}^i accumulates the sensitivity
    # sources downstream of step j
    q = np.zeros((m + 2, 4), dtype=complex)
    for j in range(m, 0, -1):
        h_row = vectorize(lam[j].T) @ dgen
        q[j] = h_row + (q[j + 1] @ props[j] if j < m else 0.0)

    grad = np.empty((m, p))
    for j in range(1, m + 1):
        liou = traj.liouvillians[j - 1]
        rho_prev = vectorize(traj.states[j - 1])
        phi_prev = vectorize(traj.phi[j - 1])
        row_lam = vectorize(lam[j].T)
        row_mix = 2.0 * dt * q[j] - vectorize(mu[j].T)
        for k in range(p):
            kernel = _step_derivative_kernel(liou, control_gens[k], dt)
            value = 2.0 * dt * (row_lam @ kernel @ phi_prev) + row_mix @ kernel @ rho_prev
            grad[j - 1, k] = value.real
    return grad


def gradient_qfi(
    traj: Trajectory, problem: EstimationProblem, method: str = "exact"
) -> np.ndarray:
    """Gradient table (m, p) of the quantum Fisher information."""
    w1, w2 = _objective_weights(traj, Objective(kind="qfi"))
    return _dispatch_gradient(traj, problem, w1, w2, method)


def gradient_cfi(
    traj: Trajectory, problem: EstimationProblem, povm: Povm, method: str = "exact"
) -> np.ndarray:
    """Gradient table (m, p) of the classical Fisher information."""
    w1, w2 = _objective_weights(traj, Objective(kind="cfi", povm=povm))
    return _dispatch_gradient(traj, problem, w1, w2, method)


def _dispatch_gradient(traj, problem, w1, w2, method) -> np.ndarray:
    if method == "exact":
        return _gradient_exact(traj, problem, w1, w2)
    if method == "adjoint":
        return _gradient_adjoint(traj, problem, w1, w2)
    if method == "naive":
        return _gradient_naive(traj, problem, w1, w2)
    raise ValidationError(f"unknown gradient method {method!r}")


def gradient(
    traj: Trajectory,
    problem: EstimationProblem,
    objective: Objective,
    method: str = "exact",
) -> np.ndarray:
    """Gradient table for either objective kind."""
    if objective.kind == "qfi":
        return gradient_qfi(traj, problem, method=method)
    return gradient_cfi(traj, problem, objective.povm, method=method)


def finite_difference_gradient(
    problem: EstimationProblem,
    grid: ControlGrid,
    objective: Objective,
    delta: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of the discretized objective, re-propagating
    the full trajectory for every perturbed entry.  This is the test oracle for
    the analytic gradient and shares none of its algebra."""
    if delta <= 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    m, p = grid.amplitudes.shape
    grad = np.empty((m, p))
    for j in range(m):
        for k in range(p):
            bumped = grid.amplitudes.copy()
            bumped[j, k] += delta
            f_plus = evaluate_objective(problem, ControlGrid(bumped, grid.dt), objective)
            bumped[j, k] -= 2.0 * delta
            f_minus = evaluate_objective(problem, ControlGrid(bumped, grid.dt), objective)
            grad[j, k] = (f_plus - f_minus) / (2.0 * delta)
    return grad


@dataclass(frozen=True)
class AscentConfig:
    """Gradient-ascent settings.

    ``dt`` fixes the control grid geometry (the step count follows from the
    problem horizon).  ``init_mode`` is one of ``zero``, ``random_uniform``
    (amplitudes drawn from [init_low, init_high]), or ``user_supplied`` with
    ``initial_grid`` set.  Convergence is declared when the objective change
    stays below ``convergence_tolerance * max(1, |F|)`` for 10 consecutive
    iterations.  With ``backtracking`` the step is halved (up to 20 times)
    whenever it would decrease the objective, which makes the recorded
    objective history non-decreasing.

    ``momentum`` (heavy-ball coefficient, 0 disables) accelerates progress
    along the flat ridges these information landscapes develop; a momentum
    step that fails to improve resets the velocity and falls back to the
    plain safeguarded gradient step, so monotonicity is preserved.
    """

    dt: float
    step_size: float = 0.01
    max_iterations: int = 500
    convergence_tolerance: float = 1e-8
    seed: int = 0
    init_mode: str = "random_uniform"
    init_low: float = -1.0
    init_high: float = 1.0
    backtracking: bool = True
    initial_grid: ControlGrid | None = None
    gradient_method: str = "adjoint"
    momentum: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.step_size <= 0:
            raise ValidationError(f"step size must be positive, got {self.step_size}")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if self.convergence_tolerance <= 0:
            raise ValidationError("convergence tolerance must be positive")
        if self.init_mode not in ("zero", "random_uniform", "user_supplied"):
            raise ValidationError(f"unknown init mode {self.init_mode!r}")
        if self.init_mode == "user_supplied" and self.initial_grid is None:
            raise ValidationError("user_supplied init requires initial_grid")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must lie in [0, 1), got {self.momentum}")


@dataclass(frozen=True, eq=False)
class AscentReport:
    """Outcome of one gradient-ascent run."""

    final_grid: ControlGrid
    objective_history: list[float]
    iterations_used: int
    converged: bool
    error: str | None = None
    failed_iteration: int | None = None


def _initial_grid(problem: EstimationProblem, config: AscentConfig) -> ControlGrid:
    if config.init_mode == "user_supplied":
        return config.initial_grid
    m = round(problem.horizon / config.dt)
    if abs(m * config.dt - problem.horizon) > 1e-9:
        raise ValidationError(
            f"horizon {problem.horizon} is not a multiple of dt {config.dt}"
        )
    p = problem.n_controls
    if config.init_mode == "zero":
        return ControlGrid.zeros(m, p, config.dt)
    rng = np.random.default_rng(config.seed)
    amps = rng.uniform(config.init_low, config.init_high, size=(m, p))
    return ControlGrid(amps, config.dt)


def ascend(
    problem: EstimationProblem, config: AscentConfig, objective: Objective
) -> AscentReport:
    """Maximize the objective by repeated gradient steps.

    Each iteration propagates the current schedule, evaluates the objective,
    computes the analytic gradient, and updates every amplitude by
    ``step_size`` times its gradient entry.  The report records the objective
    after every iteration (index 0 is the initial schedule).
    """
    grid = _initial_grid(problem, config)
    history: list[float] = []
    try:
        traj = propagate(problem, grid)
        value = objective_value(traj, objective)
    except QGrapeError as exc:
        return AscentReport(
            final_grid=grid,
            objective_history=history,
            iterations_used=0,
            converged=False,
            error=f"{type(exc).__name__}: {exc}",
            failed_iteration=0,
        )
    history.append(value)

    converged = False
    iterations = 0
    streak = 0
    velocity = np.zeros_like(grid.amplitudes)
    for it in range(1, config.max_iterations + 1):
        try:
            table = gradient(traj, problem, objective, method=config.gradient_method)
            cand = None
            if config.momentum > 0.0:
                velocity = config.momentum * velocity + config.step_size * table
                trial = ControlGrid(grid.amplitudes + velocity, grid.dt)
                try:
                    trial_traj = propagate(problem, trial)
                    trial_value = objective_value(trial_traj, objective)
                    trial_usable = True
                except QGrapeError:
                    trial_usable = False
                if trial_usable and (trial_value >= value or not config.backtracking):
                    cand, cand_traj, cand_value = trial, trial_traj, trial_value
                else:
                    velocity = np.zeros_like(velocity)  # ridge overshoot; restart
            if cand is None:
                step = config.step_size
                cand = ControlGrid(grid.amplitudes + step * table, grid.dt)
                cand_traj = propagate(problem, cand)
                cand_value = objective_value(cand_traj, objective)
                if config.backtracking:
                    halvings = 0
                    while cand_value < value and halvings < MAX_BACKTRACK_HALVINGS:
                        step *= 0.5
                        cand = ControlGrid(grid.amplitudes + step * table, grid.dt)
                        cand_traj = propagate(problem, cand)
                        cand_value = objective_value(cand_traj, objective)
                        halvings += 1
                    if cand_value < value:
                        cand, cand_traj, cand_value = grid, traj, value
                velocity = cand.amplitudes - grid.amplitudes
        except QGrapeError as exc:
            return AscentReport(
                final_grid=grid,
                objective_history=history,
                iterations_used=iterations,
                converged=False,
                error=f"{type(exc).__name__}: {exc}",
                failed_iteration=it,
            )
        delta = abs(cand_value - value)
        grid, traj, value = cand, cand_traj, cand_value
        history.append(value)
        iterations = it
        if delta < config.convergence_tolerance * max(1.0, abs(value)):
            streak += 1
            if streak >= CONVERGENCE_WINDOW:
                converged = True
                break
        else:
            streak = 0

    return AscentReport(
        final_grid=grid,
        objective_history=history,
        iterations_used=iterations,
        converged=converged,
    )
