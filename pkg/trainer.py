"""
Training loop: loss and gradient on a fresh tape, Adam update, periodic monitoring
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

import network
from autodiff import Tape
from config import RunConfig
from errors import TrainingDivergence
from metrics import ErrorReport, reference_from_exact, space_time_errors
from optimizer import AdamState, adam_step
from problems import ProblemSpec
from testspace import QuadratureSampler, midpoint_quadrature
from weakform import ResidualMatrix, WeakForm

logger = logging.getLogger(__name__)


@dataclass
class TrainRecord:
    iteration: int
    lr: float
    loss: float
    wall_time: float


@dataclass
class MonitorPoint:
    """Errors against the exact solution at one iteration"""
    iteration: int
    loss: float
    report: ErrorReport


@dataclass
class TrainResult:
    state: network.MLPState
    records: List[TrainRecord] = field(default_factory=list)
    monitor: List[MonitorPoint] = field(default_factory=list)
    residuals: Optional[ResidualMatrix] = None
    bound_violations: int = 0

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])


class Trainer:
    """Owns the network state, the optimizer and the quadrature stream of one run"""

    def __init__(self, problem: ProblemSpec, config: RunConfig, state: Optional[network.MLPState] = None):
        self.problem = problem
        self.config = config
        self.form = WeakForm(problem, boundary_flux=config.boundary_flux,
                             lagged_coefficients=config.lagged_coefficients)
        self.sampler = QuadratureSampler(problem.domain, problem.n_int, seed=config.quadrature_seed,
                                         resample=not config.fixed_quadrature)
        widths = [1] + [config.hidden_width] * config.hidden_layers + [problem.n_time]
        self.state = state if state is not None else network.init(config.seed, widths)
        network.check_output_width(self.state, problem.n_time)
        self.adam = AdamState.for_parameters(self.state.parameters(), config.schedule_spec())
        self.iteration = 0
        self.result = TrainResult(state=self.state)
        self._metric_rule = midpoint_quadrature(problem.domain)
        # the optimizer sees sum r^2 / dt; recorded losses stay dt * sum r^2
        self.loss_scale = 1.0 / problem.dt ** 2 if config.normalize_loss else 1.0

    def step(self):
        """One optimizer iteration; returns (loss, lr, residuals) at the pre-update parameters"""
        tape = Tape()
        params = network.register_parameters(tape, self.state)
        loss, residuals = self.form.loss(tape, params, self.sampler.next())
        loss_value = float(loss.value)
        if not np.isfinite(loss_value):
            raise TrainingDivergence(self.iteration + 1, f"non-finite loss {loss_value}")

        objective = loss * self.loss_scale if self.loss_scale != 1.0 else loss
        grads = network.gradients_to_parameters(tape.param_gradients(objective), self.state)
        lr = self.adam.lr
        try:
            updated = adam_step(self.adam, self.state.parameters(), grads)
        except TrainingDivergence as e:
            raise TrainingDivergence(self.iteration + 1, str(e)) from e
        self.state = self.state.with_parameters(updated)
        self.iteration += 1
        return loss_value, lr, residuals

    def error_report(self, state: Optional[network.MLPState] = None,
                     residuals: Optional[ResidualMatrix] = None) -> ErrorReport:
        """Errors against the exact solution on the deterministic metric rule"""
        state = state or self.state
        rule = self._metric_rule
        u, du = network.forward_with_derivative(state, self.form.bc, rule.points)
        u_ref, du_ref = reference_from_exact(self.problem, rule.points)
        if residuals is None:
            residuals = self.form.residuals(state, midpoint_quadrature(self.problem.domain, self.problem.n_int))
        return space_time_errors(u, du, u_ref, du_ref, rule, self.problem.dt,
                                 dual_norms=residuals.dual_norms(), problem=self.problem)

    def train(self, iterations: int,
              on_checkpoint: Optional[Callable[[int, network.MLPState, float], None]] = None,
              on_residuals: Optional[Callable[[int, ResidualMatrix], None]] = None,
              track_errors: bool = False) -> TrainResult:
        config = self.config
        result = TrainResult(state=self.state)
        self.result = result
        started = time.perf_counter()
        logger.info(
            f"Training '{self.problem.name}' for {iterations} iterations "
            f"({self.state.n_params} parameters, widths {self.state.widths})"
        )

        for _ in range(iterations):
            before = self.state
            loss, lr, residuals = self.step()
            it = self.iteration
            result.records.append(TrainRecord(it, lr, loss, time.perf_counter() - started))
            result.residuals = residuals
            result.bound_violations = self.form.bound_violations

            if track_errors and (it == 1 or it % config.log_every == 0 or it % config.checkpoint_every == 0):
                result.monitor.append(MonitorPoint(it, loss, self.error_report(before)))
            if it == 1 or it % config.log_every == 0:
                norms = residuals.dual_norms()
                logger.info(f"it {it}: loss={loss:.6e} lr={lr:.3e} dual norm max={norms.max():.3e}")
            if on_residuals and config.residual_dump_every and it % config.residual_dump_every == 0:
                on_residuals(it, residuals)
            if on_checkpoint and it % config.checkpoint_every == 0:
                on_checkpoint(it, before, loss)

        result.state = self.state
        logger.info(f"Training finished after {self.iteration} iterations, final loss {result.records[-1].loss:.6e}"
                    if result.records else "No iterations run")
        return result
