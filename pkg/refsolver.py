"""
Finite-difference reference solver: backward Euler in time, central differences in space,
tridiagonal solves by the Thomas algorithm and Picard iteration for state-dependent coefficients
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from errors import ConfigError, PicardNonConvergence, StructuralError
from problems import ProblemSpec

logger = logging.getLogger(__name__)

MIN_CELLS = 8
PICARD_WARN_ITERATIONS = 20


@dataclass(frozen=True)
class Grid1D:
    """Uniform nodes on (a, b) and uniform steps on (0, t_end]"""
    domain: Tuple[float, float]
    n_cells: int
    n_steps: int
    t_end: float

    def __post_init__(self):
        errors = []
        if self.n_cells < MIN_CELLS:
            errors.append(f"need at least {MIN_CELLS} cells, got {self.n_cells}")
        if self.n_steps < 1:
            errors.append(f"need at least one time step, got {self.n_steps}")
        if not self.t_end > 0:
            errors.append(f"t_end must be positive, got {self.t_end}")
        if not self.domain[1] > self.domain[0]:
            errors.append(f"degenerate domain {self.domain}")
        if errors:
            raise ConfigError("; ".join(errors))

    @classmethod
    def for_problem(cls, problem: ProblemSpec, n_cells: int, n_steps: Optional[int] = None) -> 'Grid1D':
        return cls(domain=tuple(problem.domain), n_cells=n_cells,
                   n_steps=n_steps or problem.n_time, t_end=problem.t_end)

    @property
    def h(self) -> float:
        return (self.domain[1] - self.domain[0]) / self.n_cells

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.domain[0], self.domain[1], self.n_cells + 1)

    @property
    def times(self) -> np.ndarray:
        """t^0 = 0 through t^N"""
        return self.dt * np.arange(self.n_steps + 1)


@dataclass
class OracleSolution:
    grid: Grid1D
    U: np.ndarray
    picard_iterations: List[int] = field(default_factory=list)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.U)))

    def at_points(self, x, n: int) -> np.ndarray:
        """Linear interpolation of step n onto arbitrary points"""
        return np.interp(x, self.grid.nodes, self.U[n])

    def at_steps(self, x, steps) -> np.ndarray:
        return np.stack([self.at_points(x, n) for n in steps])

    def midpoint_trace(self) -> np.ndarray:
        a, b = self.grid.domain
        return np.array([self.at_points(0.5 * (a + b), n) for n in range(self.grid.n_steps + 1)])


def thomas(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system

    Row i reads lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i];
    lower[0] and upper[-1] are ignored.
    """
    n = len(diag)
    if not (len(lower) == len(upper) == len(rhs) == n):
        raise StructuralError("Tridiagonal bands and right-hand side must have equal length")

    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * c[i - 1]
        if i < n - 1:
            c[i] = upper[i] / denom
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom

    x = np.zeros(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _step_system(grid: Grid1D, capacity: np.ndarray, conductivity: np.ndarray,
                 rhs_interior: np.ndarray, left: float, right: float):
    """Bands of C u - dt D(K D u) = rhs with Dirichlet rows at both ends"""
    n = grid.n_cells + 1
    ratio = grid.dt / grid.h ** 2
    face = 0.5 * (conductivity[:-1] + conductivity[1:])

    lower = np.zeros(n)
    diag = np.ones(n)
    upper = np.zeros(n)
    rhs = np.empty(n)

    lower[1:-1] = -ratio * face[:-1]
    upper[1:-1] = -ratio * face[1:]
    diag[1:-1] = capacity[1:-1] + ratio * (face[:-1] + face[1:])
    rhs[1:-1] = rhs_interior
    rhs[0] = left
    rhs[-1] = right
    return lower, diag, upper, rhs


def _boundary_values(problem: ProblemSpec, t: float) -> Tuple[float, float]:
    return float(problem.boundary_left(np.array(t))), float(problem.boundary_right(np.array(t)))


def _initial_state(problem: ProblemSpec, grid: Grid1D) -> np.ndarray:
    U = np.zeros((grid.n_steps + 1, grid.n_cells + 1))
    U[0] = np.asarray(problem.initial(grid.nodes), dtype=np.float64) * np.ones(grid.n_cells + 1)
    return U


def solve_linear(problem: ProblemSpec, grid: Grid1D) -> OracleSolution:
    """Backward Euler with constant C and K"""
    coeffs = problem.coefficients
    if not coeffs.is_constant:
        raise ConfigError(f"solve_linear needs constant coefficients; problem '{problem.name}' has C(u), K(u)")

    x = grid.nodes
    c = float(coeffs.C(np.zeros(1))[0])
    k = float(coeffs.K(np.zeros(1))[0])
    capacity = np.full(len(x), c)
    conductivity = np.full(len(x), k)

    U = _initial_state(problem, grid)
    for n in range(1, grid.n_steps + 1):
        t_n = grid.times[n]
        forcing = np.asarray(problem.source(x[1:-1], t_n), dtype=np.float64)
        rhs = c * U[n - 1, 1:-1] + grid.dt * forcing
        left, right = _boundary_values(problem, t_n)
        U[n] = thomas(*_step_system(grid, capacity, conductivity, rhs, left, right))
        U[n, 0], U[n, -1] = left, right

    logger.info(f"Linear oracle for '{problem.name}' on {grid.n_cells} cells x {grid.n_steps} steps")
    return OracleSolution(grid=grid, U=U, picard_iterations=[1] * grid.n_steps)


def solve_nonlinear(problem: ProblemSpec, grid: Grid1D, picard_tol: float = 1e-8,
                    picard_max: int = 50) -> OracleSolution:
    """Backward Euler on C(u) u with modified Picard iteration

    The storage term is linearized with its slope d(C(u) u)/du at the previous iterate
    (plain C(u) where that slope is not positive); K(u) is lagged one iterate.
    """
    if picard_tol <= 0 or picard_max < 1:
        raise ConfigError(f"Invalid Picard settings tol={picard_tol}, max={picard_max}")
    coeffs = problem.coefficients
    x = grid.nodes
    U = _initial_state(problem, grid)
    iterations = []

    for n in range(1, grid.n_steps + 1):
        t_n = grid.times[n]
        prev = U[n - 1]
        forcing = np.asarray(problem.source(x[1:-1], t_n), dtype=np.float64)
        stored = (coeffs.C(prev) * prev)[1:-1] + grid.dt * forcing
        left, right = _boundary_values(problem, t_n)

        current = 2.0 * prev - U[n - 2] if n >= 2 else prev.copy()
        current[0], current[-1] = left, right
        change = np.inf
        for iteration in range(1, picard_max + 1):
            capacity = coeffs.C(current)
            slope = coeffs.energy_derivative(current)
            slope = np.where(slope > 0, slope, capacity)
            rhs = stored - ((capacity - slope) * current)[1:-1]
            bands = _step_system(grid, slope, coeffs.K(current), rhs, left, right)
            updated = thomas(*bands)
            updated[0], updated[-1] = left, right
            change = float(np.max(np.abs(updated - current)))
            current = updated
            if not np.isfinite(change) or change < picard_tol:
                break

        if not (np.isfinite(change) and change < picard_tol):
            logger.error(f"Picard stalled at step {n}: change {change:.3e} after {iteration} iterations")
            raise PicardNonConvergence(n, change, iteration)
        if iteration > PICARD_WARN_ITERATIONS:
            logger.warning(f"Step {n} needed {iteration} Picard iterations")
        U[n] = current
        iterations.append(iteration)

    logger.info(
        f"Nonlinear oracle for '{problem.name}' on {grid.n_cells} cells x {grid.n_steps} steps, "
        f"Picard iterations max {max(iterations)} mean {np.mean(iterations):.2f}"
    )
    return OracleSolution(grid=grid, U=U, picard_iterations=iterations)


def solve(problem: ProblemSpec, grid: Grid1D, picard_tol: float = 1e-8, picard_max: int = 50) -> OracleSolution:
    if problem.coefficients.is_constant:
        return solve_linear(problem, grid)
    return solve_nonlinear(problem, grid, picard_tol, picard_max)


def dimensional_residual(problem: ProblemSpec, solution: OracleSolution) -> float:
    """Largest backward-Euler residual of the dimensional equation, in units of k_ref T_ref / d^2

    Rescales the dimensionless nodal solution to (s, tau, T) and evaluates
    (rho c_p T)^n - (rho c_p T)^(n-1) - dtau d/ds(k dT/ds)^n with the tabulated properties.
    """
    scaling, table = problem.scaling, problem.properties
    if scaling is None or table is None:
        raise ConfigError(f"Problem '{problem.name}' carries no dimensional scaling")

    grid = solution.grid
    ds = scaling.d * grid.h
    dtau = scaling.t0 * grid.dt
    T = scaling.to_T(solution.U)
    energy = table.value('rho', T) * table.value('cp', T) * T
    k = table.value('k', T)

    face = 0.5 * (k[:, :-1] + k[:, 1:])
    flux = face * np.diff(T, axis=1) / ds
    divergence = np.diff(flux, axis=1) / ds
    residual = (energy[1:, 1:-1] - energy[:-1, 1:-1]) / dtau - divergence[1:]
    unit = scaling.k_ref * scaling.T_ref / scaling.d ** 2
    return float(np.max(np.abs(residual)) / unit)
