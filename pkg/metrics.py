"""
Space-time error norms, residual bound checks and training diagnostics
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import MissingReferenceError, StructuralError, UndefinedRatioError
from problems import ProblemSpec
from refsolver import OracleSolution
from testspace import QuadratureRule

logger = logging.getLogger(__name__)

LOWER_BOUND_TOL = 1e-3


def poincare_constant(domain: Tuple[float, float]) -> float:
    """Sharp Poincare constant of H^1_0(a, b): (b - a) / pi"""
    a, b = domain
    return (b - a) / np.pi


@dataclass
class ErrorReport:
    rel_L2: float
    rel_H10: float
    per_step_L2: np.ndarray
    per_step_H10: np.ndarray
    dual_norm_per_step: np.ndarray
    dt: float
    c_min: float = 1.0
    c_max: float = 1.0
    k_min: float = 1.0
    k_max: float = 1.0
    C_P: float = 1.0
    reference: str = "exact"

    @property
    def M(self) -> float:
        """Continuity constant c_max C_P^2 + dt k_max"""
        return self.c_max * self.C_P ** 2 + self.dt * self.k_max

    @property
    def gamma(self) -> float:
        """Coercivity constant dt k_min"""
        return self.dt * self.k_min

    @property
    def n_time(self) -> int:
        return len(self.per_step_H10)

    def summary(self) -> Dict[str, float]:
        return {
            'reference': self.reference,
            'rel_L2': float(self.rel_L2),
            'rel_H10': float(self.rel_H10),
            'max_step_H10': float(np.max(self.per_step_H10)),
            'max_dual_norm': float(np.max(self.dual_norm_per_step)) if len(self.dual_norm_per_step) else 0.0,
            'M': float(self.M),
            'gamma': float(self.gamma),
            'C_P': float(self.C_P),
        }

    def format_summary(self) -> str:
        lines = [
            f"Error report (reference: {self.reference})",
            f"  relative L2 (space-time):   {self.rel_L2:.6e}",
            f"  relative H1_0 (space-time): {self.rel_H10:.6e}",
            f"  worst step H1_0 error:      {np.max(self.per_step_H10):.6e}",
            f"  constants: M={self.M:.6g} gamma={self.gamma:.6g} C_P={self.C_P:.6g}",
        ]
        return "\n".join(lines)


def reference_from_exact(problem: ProblemSpec, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Exact solution and its x-derivative at t^1..t^N, each (N, Q)"""
    if problem.exact is None or problem.exact_dx is None:
        raise MissingReferenceError(f"Problem '{problem.name}' has no exact solution")
    t = problem.times[:, None]
    return problem.exact(x[None, :], t), problem.exact_dx(x[None, :], t)


def reference_from_oracle(solution: OracleSolution, x: np.ndarray,
                          steps: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear interpolant of the oracle and its cellwise slope"""
    nodes = solution.grid.nodes
    cells = np.clip(np.searchsorted(nodes, x, side='right') - 1, 0, len(nodes) - 2)
    values, slopes = [], []
    for n in steps:
        row = solution.U[n]
        values.append(np.interp(x, nodes, row))
        slopes.append((row[cells + 1] - row[cells]) / solution.grid.h)
    return np.array(values), np.array(slopes)


def oracle_steps_for(problem: ProblemSpec, solution: OracleSolution) -> List[int]:
    """Oracle step indices matching the network's t^1..t^N"""
    ratio = solution.grid.n_steps / problem.n_time
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise StructuralError(
            f"Oracle has {solution.grid.n_steps} steps, not a multiple of N_time={problem.n_time}"
        )
    stride = int(round(ratio))
    return [stride * n for n in range(1, problem.n_time + 1)]


def space_time_errors(u: np.ndarray, du: np.ndarray, u_ref: np.ndarray, du_ref: np.ndarray,
                      quadrature: QuadratureRule, dt: float,
                      dual_norms: Optional[np.ndarray] = None, reference: str = "exact",
                      problem: Optional[ProblemSpec] = None) -> ErrorReport:
    """Relative L2 and H1_0 space-time errors with a dt-weighted sum over steps

    All arrays are (N, Q) values at the quadrature points.
    """
    u, du, u_ref, du_ref = (np.asarray(a, dtype=np.float64) for a in (u, du, u_ref, du_ref))
    if not (u.shape == du.shape == u_ref.shape == du_ref.shape):
        raise StructuralError(f"Snapshot shapes differ: {u.shape}, {du.shape}, {u_ref.shape}, {du_ref.shape}")
    if u.shape[1] != quadrature.n_points:
        raise StructuralError(f"Snapshots have {u.shape[1]} points, quadrature has {quadrature.n_points}")

    step_l2_sq = quadrature.integrate((u - u_ref) ** 2)
    step_h10_sq = quadrature.integrate((du - du_ref) ** 2)
    ref_l2_sq = dt * np.sum(quadrature.integrate(u_ref ** 2))
    ref_h10_sq = dt * np.sum(quadrature.integrate(du_ref ** 2))
    if ref_l2_sq == 0 or ref_h10_sq == 0:
        raise UndefinedRatioError("Reference solution has zero norm; relative error undefined")

    report = ErrorReport(
        rel_L2=float(np.sqrt(dt * np.sum(step_l2_sq) / ref_l2_sq)),
        rel_H10=float(np.sqrt(dt * np.sum(step_h10_sq) / ref_h10_sq)),
        per_step_L2=np.sqrt(step_l2_sq),
        per_step_H10=np.sqrt(step_h10_sq),
        dual_norm_per_step=np.zeros(len(u)) if dual_norms is None else np.asarray(dual_norms, dtype=np.float64),
        dt=dt,
        reference=reference,
    )
    if problem is not None:
        coeffs = problem.coefficients
        report.c_min, report.c_max = coeffs.c_min, coeffs.c_max
        report.k_min, report.k_max = coeffs.k_min, coeffs.k_max
        report.C_P = poincare_constant(problem.domain)
    return report


@dataclass
class BoundCheck:
    passed: bool
    violations: int
    margins: np.ndarray
    upper_ratios: np.ndarray
    tol: float = LOWER_BOUND_TOL

    def summary(self) -> Dict:
        finite = self.upper_ratios[np.isfinite(self.upper_ratios)]
        return {
            'passed': self.passed,
            'violations': self.violations,
            'min_margin': float(np.min(self.margins)),
            'upper_ratio_max': float(np.max(finite)) if finite.size else None,
            'upper_ratio_median': float(np.median(finite)) if finite.size else None,
        }


def check_error_bounds(report: ErrorReport, problem: ProblemSpec, tol: float = LOWER_BOUND_TOL) -> BoundCheck:
    """Lower side dual_norm/M <= error + tol is asserted; the upper side is only reported

    A truncated dual norm underestimates the true one, so only the lower side is testable.
    """
    if problem.exact is None:
        raise MissingReferenceError(f"Bound check needs an exact solution; '{problem.name}' has none")

    lower = report.dual_norm_per_step / report.M
    margins = report.per_step_H10 + tol - lower
    violations = int(np.count_nonzero(margins < 0))
    with np.errstate(divide='ignore', invalid='ignore'):
        upper = np.where(report.dual_norm_per_step > 0,
                         report.per_step_H10 * report.gamma / report.dual_norm_per_step, np.inf)
    if violations:
        logger.warning(f"Lower error bound violated at {violations} of {len(margins)} steps")
    return BoundCheck(passed=violations == 0, violations=violations, margins=margins, upper_ratios=upper, tol=tol)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise StructuralError("Correlation needs two equally long series of at least 2 values")
    if np.std(x) == 0 or np.std(y) == 0:
        raise UndefinedRatioError("Correlation of a constant series is undefined")
    return float(np.corrcoef(x, y)[0, 1])


def observed_orders(errors: Sequence[float], refinement: float = 2.0) -> np.ndarray:
    """log(e_i / e_{i+1}) / log(refinement) for successive refinements"""
    errors = np.asarray(errors, dtype=np.float64)
    return np.log(errors[:-1] / errors[1:]) / np.log(refinement)


def max_principle_excess(values: np.ndarray, lower: float, upper: float) -> float:
    """How far values leave [lower, upper]; 0 when they stay inside"""
    values = np.asarray(values, dtype=np.float64)
    return float(max(0.0, np.max(values) - upper, lower - np.min(values)))


def data_range(problem: ProblemSpec) -> Tuple[float, float]:
    """Range of the initial and boundary data on t in [0, t_end]"""
    a, b = problem.domain
    x = np.linspace(a, b, 257)
    t = np.concatenate([[0.0], problem.times])
    samples = np.concatenate([
        np.asarray(problem.initial(x), dtype=np.float64) * np.ones_like(x),
        np.asarray(problem.boundary_left(t), dtype=np.float64) * np.ones_like(t),
        np.asarray(problem.boundary_right(t), dtype=np.float64) * np.ones_like(t),
    ])
    return float(np.min(samples)), float(np.max(samples))


def cooling_lag_violations(nonlinear: np.ndarray, control: np.ndarray, skip: int = 1, tol: float = 0.0) -> int:
    """Steps after `skip` where the nonlinear trace is colder than the control"""
    nonlinear = np.asarray(nonlinear, dtype=np.float64)[skip:]
    control = np.asarray(control, dtype=np.float64)[skip:]
    return int(np.count_nonzero(nonlinear < control - tol))


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if window < 1 or window > len(values):
        raise StructuralError(f"Window {window} does not fit {len(values)} values")
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode='valid')


def nonincreasing_violations(values: Sequence[float], rel_tol: float = 0.0) -> int:
    values = np.asarray(values, dtype=np.float64)
    rises = np.diff(values) > rel_tol * np.abs(values[:-1])
    return int(np.count_nonzero(rises))


def truncation_violations(estimates: Sequence[np.ndarray], tol: float = 1e-12) -> int:
    """Count (step, level) pairs where a larger test space gave a smaller estimate"""
    stacked = np.asarray(estimates, dtype=np.float64)
    return int(np.count_nonzero(np.diff(stacked, axis=0) < -tol))


@dataclass
class TrendCheck:
    status: str
    loss_drop_orders: Optional[float] = None
    error_ratio: Optional[float] = None
    correlation: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def summary(self) -> Dict:
        return {
            'status': self.status,
            'loss_drop_orders': self.loss_drop_orders,
            'error_ratio': self.error_ratio,
            'correlation': self.correlation,
            'notes': list(self.notes),
        }


def trend_check(losses: Sequence[float], errors: Sequence[float], min_orders: float = 2.0,
                max_error_ratio: float = 0.1, min_correlation: float = 0.8, tail: float = 0.8) -> TrendCheck:
    """Loss falls by min_orders decades, the error by max_error_ratio, and the two move together"""
    losses = np.asarray(losses, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if len(losses) < 2 or len(errors) < 2:
        return TrendCheck(status='skipped', notes=['no training history'])

    drop = float(np.log10(losses[0] / losses[-1])) if losses[-1] > 0 else np.inf
    ratio = float(errors[-1] / errors[0]) if errors[0] > 0 else 0.0
    notes = []
    correlation = None
    start = int(len(losses) * (1.0 - tail))
    if len(losses) == len(errors) and len(losses) - start >= 3:
        try:
            correlation = pearson(np.sqrt(losses[start:]), errors[start:])
        except ValueError as e:
            notes.append(str(e))

    passed = drop >= min_orders and ratio < max_error_ratio
    if correlation is not None:
        passed = passed and correlation > min_correlation
    return TrendCheck(status='pass' if passed else 'fail', loss_drop_orders=drop,
                      error_ratio=ratio, correlation=correlation, notes=notes)
