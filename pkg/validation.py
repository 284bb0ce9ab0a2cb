"""
Post-training checks, reference-solver runs and the consistency / truncation sweeps
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

import network
import refsolver
from config import RunConfig
from metrics import (ErrorReport, check_error_bounds, cooling_lag_violations, data_range,
                     max_principle_excess, moving_average, nonincreasing_violations, observed_orders,
                     oracle_steps_for, reference_from_exact, reference_from_oracle, space_time_errors,
                     trend_check, truncation_violations)
from problems import ProblemSpec, make_linear_control, make_toy_problem, toy_strong_residual
from testspace import Basis, gram_matrix, midpoint_quadrature
from weakform import WeakForm

logger = logging.getLogger(__name__)

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"
MAX_PRINCIPLE_TOL = 0.02
MIDPOINT_AGREEMENT_TOL = 0.05
NETWORK_LAG_TOL = 1e-3
CONSISTENCY_STEPS = (32, 64, 128)
TRUNCATION_LEVELS = (5, 10, 20, 40)


@dataclass
class CheckResult:
    name: str
    status: str
    details: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != FAIL


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


# Reference solver

@dataclass
class OracleRun:
    solution: refsolver.OracleSolution
    control: Optional[refsolver.OracleSolution] = None
    error_vs_exact: Optional[ErrorReport] = None


def oracle_grid(problem: ProblemSpec, config: RunConfig) -> refsolver.Grid1D:
    return refsolver.Grid1D.for_problem(problem, config.oracle_cells, config.oracle_steps)


def oracle_error_vs_exact(problem: ProblemSpec, solution: refsolver.OracleSolution) -> ErrorReport:
    """Oracle against the exact solution at every oracle step"""
    grid = solution.grid
    rule = midpoint_quadrature(problem.domain)
    steps = list(range(1, grid.n_steps + 1))
    u, du = reference_from_oracle(solution, rule.points, steps)
    t = grid.times[1:, None]
    u_ref = problem.exact(rule.points[None, :], t)
    du_ref = problem.exact_dx(rule.points[None, :], t)
    return space_time_errors(u, du, u_ref, du_ref, rule, grid.dt, reference="exact", problem=problem)


def run_oracle(problem: ProblemSpec, config: RunConfig) -> OracleRun:
    grid = oracle_grid(problem, config)
    solution = refsolver.solve(problem, grid, config.picard_tol, config.picard_max)
    run = OracleRun(solution=solution)
    if problem.exact is not None:
        run.error_vs_exact = oracle_error_vs_exact(problem, solution)
        logger.info(f"Oracle vs exact: rel L2 {run.error_vs_exact.rel_L2:.3e}")
    if problem.scaling is not None:
        run.control = refsolver.solve_linear(make_linear_control(problem), grid)
    return run


# Individual checks

def check_boundary(problem: ProblemSpec, state: network.MLPState) -> CheckResult:
    bc = problem.bc_enforcer()
    a, b = problem.domain
    u, _ = network.forward_with_derivative(state, bc, np.array([a, b]))
    deviation = max(float(np.max(np.abs(u[:, 0] - bc.left_values))),
                    float(np.max(np.abs(u[:, 1] - bc.right_values))))
    scale = max(1.0, float(np.max(np.abs(bc.left_values))), float(np.max(np.abs(bc.right_values))))
    return CheckResult("boundary_exactness", _status(deviation <= 1e-12 * scale), {'max_deviation': deviation})


def check_derivative(problem: ProblemSpec, state: network.MLPState, n_points: int = 20,
                     h: float = 1e-6, seed: int = 0) -> CheckResult:
    """Network x-derivative against central differences"""
    bc = problem.bc_enforcer()
    a, b = problem.domain
    rng = np.random.default_rng(seed)
    x = rng.uniform(a + 0.01 * (b - a), b - 0.01 * (b - a), n_points)
    _, du = network.forward_with_derivative(state, bc, x)
    up, _ = network.forward_with_derivative(state, bc, x + h)
    down, _ = network.forward_with_derivative(state, bc, x - h)
    fd = (up - down) / (2.0 * h)
    rel = np.abs(du - fd) / np.maximum(np.abs(fd), 1.0)
    worst = float(np.max(rel))
    return CheckResult("derivative_fd", _status(worst < 1e-5), {'max_rel_error': worst})


def check_gram(problem: ProblemSpec, n_test: Optional[int] = None) -> CheckResult:
    basis = Basis(problem.basis_kind, problem.domain, n_test or problem.n_test)
    gram = gram_matrix(basis, midpoint_quadrature(problem.domain))
    deviation = float(np.max(np.abs(gram - np.eye(basis.n_modes))))
    return CheckResult("gram_orthonormality", _status(deviation < 1e-3),
                       {'max_deviation': deviation, 'basis': basis.kind.value, 'n_test': basis.n_modes})


def check_source(problem: ProblemSpec, n_samples: int = 10000, seed: int = 0) -> CheckResult:
    if problem.name != "toy":
        return CheckResult("source_term", SKIPPED, {'reason': 'no closed-form solution'})
    rng = np.random.default_rng(seed)
    a, b = problem.domain
    x = rng.uniform(a, b, n_samples)
    t = rng.uniform(0.0, problem.t_end, n_samples)
    worst = float(np.max(np.abs(toy_strong_residual(x, t))))
    return CheckResult("source_term", _status(worst < 1e-9), {'max_residual': worst})


def network_snapshots(problem: ProblemSpec, state: network.MLPState, x: np.ndarray):
    return network.forward_with_derivative(state, problem.bc_enforcer(), x)


def nn_error_report(problem: ProblemSpec, state: network.MLPState,
                    oracle: Optional[OracleRun] = None, config: Optional[RunConfig] = None) -> ErrorReport:
    """Network errors against the exact solution when there is one, else against the oracle"""
    rule = midpoint_quadrature(problem.domain)
    u, du = network_snapshots(problem, state, rule.points)
    form = WeakForm(problem) if config is None else WeakForm(
        problem, boundary_flux=config.boundary_flux, lagged_coefficients=config.lagged_coefficients)
    residuals = form.residuals(state, midpoint_quadrature(problem.domain, problem.n_int))
    if problem.exact is not None:
        u_ref, du_ref = reference_from_exact(problem, rule.points)
        reference = "exact"
    else:
        steps = oracle_steps_for(problem, oracle.solution)
        u_ref, du_ref = reference_from_oracle(oracle.solution, rule.points, steps)
        reference = "oracle"
    return space_time_errors(u, du, u_ref, du_ref, rule, problem.dt,
                             dual_norms=residuals.dual_norms(), reference=reference, problem=problem)


def check_bounds(problem: ProblemSpec, report: ErrorReport) -> CheckResult:
    if problem.exact is None:
        return CheckResult("error_bounds", SKIPPED, {'reason': 'no exact solution'})
    bound = check_error_bounds(report, problem)
    return CheckResult("error_bounds", _status(bound.passed), bound.summary())


def check_trends(losses: Sequence[float], errors: Sequence[float]) -> CheckResult:
    if len(losses) < 2:
        return CheckResult("training_trends", SKIPPED, {'reason': 'no training history'})
    if len(errors) < 2:
        return CheckResult("training_trends", SKIPPED, {'reason': 'no error history'})
    trend = trend_check(losses, errors)
    return CheckResult("training_trends", trend.status, trend.summary())


def check_loss_smoothing(losses: Sequence[float], window: int = 500) -> CheckResult:
    if len(losses) < 2 * window:
        return CheckResult("loss_moving_average", SKIPPED, {'reason': f'fewer than {2 * window} iterations'})
    averaged = moving_average(losses, window)
    rises = nonincreasing_violations(averaged)
    steps = np.diff(averaged)
    return CheckResult("loss_moving_average", _status(rises == 0),
                       {'rises': rises, 'window': window, 'points': len(averaged),
                        'max_rise': float(max(0.0, np.max(steps)))})


def check_max_principle(problem: ProblemSpec, values: np.ndarray, name: str,
                        tol: float = MAX_PRINCIPLE_TOL) -> CheckResult:
    lower, upper = data_range(problem)
    excess = max_principle_excess(values, lower, upper)
    return CheckResult(name, _status(excess <= tol), {'excess': excess, 'range': [lower, upper], 'tol': tol})


def check_oracle_agreement(problem: ProblemSpec, state: network.MLPState, oracle: OracleRun) -> CheckResult:
    rule = midpoint_quadrature(problem.domain)
    steps = oracle_steps_for(problem, oracle.solution)
    if problem.exact is not None:
        u, _ = network_snapshots(problem, state, rule.points)
        u_o, _ = reference_from_oracle(oracle.solution, rule.points, steps)
        u_ref, _ = reference_from_exact(problem, rule.points)

        def norm(values):
            return float(np.sqrt(problem.dt * np.sum(rule.integrate(values ** 2))))

        gap, nn_error, oracle_error = norm(u - u_o), norm(u - u_ref), norm(u_o - u_ref)
        budget = nn_error + oracle_error
        return CheckResult("oracle_agreement", _status(gap <= budget * (1.0 + 1e-9) + 1e-14),
                           {'nn_vs_oracle_L2': gap, 'nn_vs_exact_L2': nn_error,
                            'oracle_vs_exact_L2': oracle_error, 'budget': budget})

    a, b = problem.domain
    mid = np.array([0.5 * (a + b)])
    u_mid, _ = network_snapshots(problem, state, mid)
    nn_trace = u_mid[:, 0]
    oracle_trace = oracle.solution.midpoint_trace()[steps]
    gap = float(np.max(np.abs(nn_trace - oracle_trace)))
    return CheckResult("midpoint_agreement", _status(gap <= MIDPOINT_AGREEMENT_TOL),
                       {'max_gap': gap, 'tol': MIDPOINT_AGREEMENT_TOL})


def check_cooling_lag(oracle: OracleRun, skip_fraction: float = 0.05) -> CheckResult:
    """Nonlinear midpoint stays at or above the linear control after the first transient"""
    if oracle.control is None:
        return CheckResult("cooling_lag", SKIPPED, {'reason': 'no linear control'})
    nonlinear = oracle.solution.midpoint_trace()
    control = oracle.control.midpoint_trace()
    skip = max(1, int(skip_fraction * len(nonlinear)))
    violations = cooling_lag_violations(nonlinear, control, skip=skip, tol=1e-9)
    return CheckResult("cooling_lag", _status(violations == 0),
                       {'violations': violations, 'skipped_steps': skip,
                        'max_lead': float(np.max(nonlinear[skip:] - control[skip:]))})


def midpoint_network_trace(problem: ProblemSpec, state: network.MLPState) -> np.ndarray:
    """u^0 followed by the network midpoint values at steps 1..N"""
    mid = np.array([0.5 * (problem.domain[0] + problem.domain[1])])
    u, _ = network_snapshots(problem, state, mid)
    return np.concatenate([problem.initial(mid), u[:, 0]])


def check_cooling_lag_networks(problem: ProblemSpec, state: network.MLPState,
                               control_state: Optional[network.MLPState], skip_fraction: float = 0.05,
                               tol: float = NETWORK_LAG_TOL) -> CheckResult:
    """Trained nonlinear midpoint stays at or above the trained linear control"""
    if control_state is None:
        return CheckResult("cooling_lag_nn", SKIPPED, {'reason': 'no control network'})
    nonlinear = midpoint_network_trace(problem, state)
    control = midpoint_network_trace(make_linear_control(problem), control_state)
    skip = max(1, int(skip_fraction * len(nonlinear)))
    violations = cooling_lag_violations(nonlinear, control, skip=skip, tol=tol)
    return CheckResult("cooling_lag_nn", _status(violations == 0),
                       {'violations': violations, 'skipped_steps': skip, 'tol': tol,
                        'max_lead': float(np.max(nonlinear[skip:] - control[skip:]))})


def run_suite(problem: ProblemSpec, config: RunConfig, state: network.MLPState,
              losses: Sequence[float] = (), error_history: Sequence[float] = (),
              oracle: Optional[OracleRun] = None, trend_losses: Sequence[float] = (),
              control_state: Optional[network.MLPState] = None) -> List[CheckResult]:
    """Every check that applies to the problem

    trend_losses are the losses sampled alongside error_history; the full loss history is used otherwise.
    control_state is a trained linear-control network; its midpoint trace is held to the same lag as the oracle.
    """
    results = [
        check_boundary(problem, state),
        check_derivative(problem, state),
        check_gram(problem),
        check_source(problem),
    ]
    if oracle is None:
        oracle = run_oracle(problem, config)
    report = nn_error_report(problem, state, oracle, config)
    results.append(CheckResult("error_report", PASS, report.summary()))
    results.append(check_bounds(problem, report))
    results.append(check_trends(trend_losses if len(trend_losses) else losses, error_history))
    results.append(check_oracle_agreement(problem, state, oracle))

    if problem.scaling is not None:
        rule = midpoint_quadrature(problem.domain)
        u, _ = network_snapshots(problem, state, rule.points)
        results.append(check_max_principle(problem, u, "max_principle_nn"))
        results.append(check_max_principle(problem, oracle.solution.U, "max_principle_oracle", tol=1e-8))
        results.append(check_cooling_lag(oracle))
        if control_state is not None:
            results.append(check_cooling_lag_networks(problem, state, control_state))
        results.append(check_loss_smoothing(losses))

    for result in results:
        log = logger.info if result.passed else logger.warning
        log(f"{result.name}: {result.status} {result.details}")
    return results


# Sweeps

def consistency_sweep(steps: Sequence[int] = CONSISTENCY_STEPS, n_test: int = 20,
                      n_points: int = 2048) -> Dict:
    """Exact-solution residuals of the toy problem as the time step halves"""
    norms = []
    for n_time in steps:
        problem = make_toy_problem(n_time=n_time, n_test=n_test)
        residuals = WeakForm(problem).exact_residuals(midpoint_quadrature(problem.domain, n_points))
        norms.append(float(np.max(residuals.dual_norms())))
    orders = observed_orders(norms)
    return {'n_time': list(steps), 'dt': [1.0 / n for n in steps], 'max_dual_norm': norms,
            'orders': orders.tolist()}


def truncation_sweep(problem: ProblemSpec, config: RunConfig, levels: Sequence[int] = TRUNCATION_LEVELS,
                     n_states: int = 5) -> Dict:
    """Per-step dual-norm estimates on seeded random states for nested test spaces"""
    rule = midpoint_quadrature(problem.domain, problem.n_int)
    widths = [1] + [config.hidden_width] * config.hidden_layers + [problem.n_time]
    per_state, violations = [], 0
    for index in range(n_states):
        state = network.init(config.seed + index, widths)
        estimates = []
        for n_test in levels:
            basis = Basis(problem.basis_kind, problem.domain, n_test)
            form = WeakForm(problem, basis, boundary_flux=config.boundary_flux,
                            lagged_coefficients=config.lagged_coefficients)
            estimates.append(form.residuals(state, rule).dual_norms())
        violations += truncation_violations(estimates)
        per_state.append(np.array(estimates))
    return {'levels': list(levels), 'estimates': per_state, 'violations': violations}
