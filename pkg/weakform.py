"""
Backward-Euler weak residual: coefficients <R(u^n), phi_k> and the truncated dual-norm loss
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from autodiff import Tape, Var, concat
from errors import MissingReferenceError, StructuralError
from network import MLPState, register_parameters, trial_solution
from problems import CoefficientField, ProblemSpec
from testspace import Basis, QuadratureRule, eval_basis

logger = logging.getLogger(__name__)


@dataclass
class ResidualMatrix:
    """r[n-1, k] = a(u^n, phi_k) - l^n(phi_k) for steps n = 1..N"""
    r: np.ndarray
    dt: float

    @property
    def n_time(self) -> int:
        return self.r.shape[0]

    @property
    def n_test(self) -> int:
        return self.r.shape[1]

    def loss(self) -> float:
        """dt * sum r^2, with the arithmetic used on the tape"""
        return float(np.sum(self.r * self.r) * self.dt)

    def dual_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.r * self.r, axis=1))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.r)))


def dual_norm_estimate(residuals: ResidualMatrix, n: int) -> float:
    """Truncated H^-1 norm of the residual at step n (1-based)"""
    if not 1 <= n <= residuals.n_time:
        raise StructuralError(f"Step {n} out of range [1, {residuals.n_time}]")
    row = residuals.r[n - 1]
    return float(np.sqrt(np.sum(row * row)))


def _as_var(tape: Tape, value) -> Var:
    return value if isinstance(value, Var) else tape.const(value)


def residual_coefficient(tape: Tape, n: int, k: int, u_prev, u_n, coeffs: CoefficientField,
                         source, quadrature: QuadratureRule, basis: Basis, dt: float,
                         flux: Optional[Tuple] = None, lagged: bool = False) -> Var:
    """One residual coefficient assembled term by term on the tape

    u_prev and u_n are (values, derivatives) at the quadrature points; u_prev is the
    initial condition for n = 1. flux is the pair K(u) u_x at (a, b), only used by
    bases that do not vanish on the boundary.
    """
    n_points = quadrature.n_points
    for label, pair in (('u_prev', u_prev), ('u_n', u_n)):
        for part in pair:
            size = int(np.size(part.value if isinstance(part, Var) else part))
            if size != n_points:
                raise StructuralError(
                    f"{label} has {size} values but the quadrature has {n_points} points"
                )

    u, du = (_as_var(tape, part) for part in u_n)
    v = _as_var(tape, u_prev[0])
    phi, dphi = eval_basis(basis, k, quadrature.points)
    w = quadrature.weights
    t_n = n * dt
    f = np.asarray(source(quadrature.points, t_n), dtype=np.float64) * np.ones(n_points)

    if lagged:
        c_prev = v.apply(coeffs.C, coeffs.dC)
        storage = c_prev * (u - v)
        conduct = v.apply(coeffs.K, coeffs.dK)
    else:
        storage = u.apply(coeffs.C, coeffs.dC) * u - v.apply(coeffs.C, coeffs.dC) * v
        conduct = u.apply(coeffs.K, coeffs.dK)

    integrand = (storage - dt * f) * (w * phi) + dt * (conduct * du) * (w * dphi)
    r = integrand.sum()

    if flux is not None and not basis.kind.vanishes_on_boundary:
        a, b = basis.domain
        phi_a, _ = eval_basis(basis, k, a)
        phi_b, _ = eval_basis(basis, k, b)
        q_a, q_b = (_as_var(tape, q) for q in flux)
        r = r - dt * (q_b * float(phi_b) - q_a * float(phi_a))
    return r


class WeakForm:
    """Vectorized residual assembly for every step and mode at once"""

    def __init__(self, problem: ProblemSpec, basis: Optional[Basis] = None,
                 boundary_flux: bool = True, lagged_coefficients: bool = False):
        self.problem = problem
        self.basis = basis or Basis(problem.basis_kind, problem.domain, problem.n_test)
        if self.basis.domain != tuple(problem.domain):
            raise StructuralError(f"Basis domain {self.basis.domain} differs from problem domain {problem.domain}")
        self.boundary_flux = boundary_flux and not self.basis.kind.vanishes_on_boundary
        self.lagged = lagged_coefficients
        self.bc = problem.bc_enforcer()
        self.bound_violations = 0

    @property
    def dt(self) -> float:
        return self.problem.dt

    def evaluation_points(self, quadrature: QuadratureRule) -> np.ndarray:
        """Quadrature points followed by the two endpoints"""
        a, b = self.problem.domain
        return np.concatenate([quadrature.points, [a, b]])

    def assemble(self, tape: Tape, u_all: Var, du_all: Var, quadrature: QuadratureRule) -> Var:
        """(N, K) residual coefficients from trial values at evaluation_points()"""
        problem = self.problem
        coeffs = problem.coefficients
        dt = self.dt
        n_q = quadrature.n_points
        if u_all.shape != (problem.n_time, n_q + 2):
            raise StructuralError(
                f"Trial values shaped {u_all.shape}, expected {(problem.n_time, n_q + 2)}"
            )

        x = quadrature.points
        inner = (slice(None), slice(0, n_q))
        u = u_all[inner]
        du = du_all[inner]
        u_initial = np.asarray(problem.initial(x), dtype=np.float64).reshape(1, n_q)
        u_prev = concat([u_initial, u[0:-1, :]], tape, axis=0)

        forcing = np.asarray(problem.source(x[None, :], problem.times[:, None]), dtype=np.float64)
        forcing = forcing * np.ones((problem.n_time, n_q))

        if self.lagged:
            capacity = u_prev.apply(coeffs.C, coeffs.dC)
            storage = capacity * (u - u_prev)
            conductivity = u_prev.apply(coeffs.K, coeffs.dK)
        else:
            capacity = u.apply(coeffs.C, coeffs.dC)
            storage = capacity * u - u_prev.apply(coeffs.C, coeffs.dC) * u_prev
            conductivity = u.apply(coeffs.K, coeffs.dK)
        self._track_bounds(capacity.value, conductivity.value)

        phi, dphi = self.basis.values(x)
        w = quadrature.weights
        r = (storage - dt * forcing) @ (w * phi).T + (dt * (conductivity * du)) @ (w * dphi).T

        if self.boundary_flux:
            a, b = problem.domain
            phi_ends, _ = self.basis.values(np.array([a, b]))
            ends = [(slice(None), slice(n_q + i, n_q + i + 1)) for i in (0, 1)]
            q = []
            for end, index in zip(ends, (0, 1)):
                u_end = u_all[end]
                if self.lagged:
                    initial_end = np.asarray(problem.initial(np.array([a, b])[index:index + 1]),
                                             dtype=np.float64).reshape(1, 1)
                    k_end = concat([initial_end, u_end[0:-1, :]], tape, axis=0).apply(coeffs.K, coeffs.dK)
                else:
                    k_end = u_end.apply(coeffs.K, coeffs.dK)
                q.append(k_end * du_all[end])
            r = r - dt * (q[1] @ phi_ends[:, 1:2].T - q[0] @ phi_ends[:, 0:1].T)
        return r

    def _track_bounds(self, capacity: np.ndarray, conductivity: np.ndarray, tol: float = 1e-12):
        coeffs = self.problem.coefficients
        bad = int(np.count_nonzero(
            (capacity < coeffs.c_min - tol) | (capacity > coeffs.c_max + tol)
            | (conductivity < coeffs.k_min - tol) | (conductivity > coeffs.k_max + tol)
        ))
        if bad:
            if not self.bound_violations:
                logger.warning(
                    f"{bad} coefficient evaluations outside C in [{coeffs.c_min:.4g}, {coeffs.c_max:.4g}], "
                    f"K in [{coeffs.k_min:.4g}, {coeffs.k_max:.4g}]; further violations are only counted"
                )
            self.bound_violations += bad

    def loss(self, tape: Tape, params: Sequence[Var], quadrature: QuadratureRule) -> Tuple[Var, ResidualMatrix]:
        """Total loss dt * sum_n sum_k r^2 on the tape, with its residual matrix"""
        x_all = self.evaluation_points(quadrature)
        u_all, du_all = trial_solution(tape, params, self.bc, x_all)
        r = self.assemble(tape, u_all, du_all, quadrature)
        loss = (r * r).sum() * self.dt
        return loss, ResidualMatrix(r=np.array(r.value), dt=self.dt)

    def residuals(self, state: MLPState, quadrature: QuadratureRule) -> ResidualMatrix:
        tape = Tape()
        params = register_parameters(tape, state)
        _, residuals = self.loss(tape, params, quadrature)
        return residuals

    def exact_residuals(self, quadrature: QuadratureRule) -> ResidualMatrix:
        """Residual of the exact solution sampled at t^n (consistency check)"""
        problem = self.problem
        if problem.exact is None or problem.exact_dx is None:
            raise MissingReferenceError(f"Problem '{problem.name}' has no exact solution")
        x_all = self.evaluation_points(quadrature)
        t = problem.times[:, None]
        tape = Tape()
        u_all = tape.const(problem.exact(x_all[None, :], t))
        du_all = tape.const(problem.exact_dx(x_all[None, :], t))
        r = self.assemble(tape, u_all, du_all, quadrature)
        return ResidualMatrix(r=np.array(r.value), dt=self.dt)


def total_loss(tape: Tape, params: Sequence[Var], problem: ProblemSpec, basis: Basis,
               quadrature: QuadratureRule, boundary_flux: bool = True,
               lagged_coefficients: bool = False) -> Var:
    form = WeakForm(problem, basis, boundary_flux=boundary_flux, lagged_coefficients=lagged_coefficients)
    loss, _ = form.loss(tape, params, quadrature)
    return loss


def assemble_by_coefficient(tape: Tape, params: Sequence[Var], form: WeakForm,
                            quadrature: QuadratureRule) -> Var:
    """dt * sum r^2 built from one residual_coefficient call per (n, k)"""
    problem = form.problem
    n_q = quadrature.n_points
    x_all = form.evaluation_points(quadrature)
    u_all, du_all = trial_solution(tape, params, form.bc, x_all)
    initial = np.asarray(problem.initial(x_all), dtype=np.float64)

    total = None
    for n in range(1, problem.n_time + 1):
        row = n - 1
        u_n = (u_all[row, 0:n_q], du_all[row, 0:n_q])
        u_prev = (initial[0:n_q], np.zeros(n_q)) if n == 1 else (u_all[row - 1, 0:n_q], du_all[row - 1, 0:n_q])
        flux = None
        if form.boundary_flux:
            if form.lagged:
                ends = (initial[n_q], initial[n_q + 1]) if n == 1 else (u_all[row - 1, n_q], u_all[row - 1, n_q + 1])
                ends = tuple(_as_var(tape, e) for e in ends)
            else:
                ends = (u_all[row, n_q], u_all[row, n_q + 1])
            coeffs = problem.coefficients
            flux = tuple(e.apply(coeffs.K, coeffs.dK) * du_all[row, n_q + i] for i, e in enumerate(ends))
        for k in form.basis.mode_indices:
            r = residual_coefficient(tape, n, int(k), u_prev, u_n, problem.coefficients, problem.source,
                                     quadrature, form.basis, form.dt, flux=flux, lagged=form.lagged)
            total = r * r if total is None else total + r * r
    return total * form.dt
