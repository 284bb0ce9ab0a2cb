"""
Trial solution network: x -> (u^1(x), ..., u^N(x)) with exact boundary enforcement
The spatial derivative is pushed forward through the layers alongside the values,
all on the tape, so reverse mode differentiates through it.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autodiff import Tape, Var
from errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class MLPState:
    """Weights W_j (out x in) and biases b_j (out,) of a tanh network"""
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    hidden_activation: str = 'tanh'
    output_activation: str = 'identity'

    @property
    def widths(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> List[np.ndarray]:
        """Flat list W0, b0, W1, b1, ... (the optimizer's view)"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def with_parameters(self, params: Sequence[np.ndarray]) -> 'MLPState':
        return MLPState(
            weights=[np.array(p, dtype=np.float64) for p in params[0::2]],
            biases=[np.array(p, dtype=np.float64) for p in params[1::2]],
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
        )

    def copy(self) -> 'MLPState':
        return self.with_parameters(self.parameters())

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def from_flat(self, vector: np.ndarray) -> 'MLPState':
        params, offset = [], 0
        for p in self.parameters():
            params.append(np.asarray(vector[offset:offset + p.size]).reshape(p.shape))
            offset += p.size
        return self.with_parameters(params)


@dataclass
class BCEnforcer:
    """Cutoff chi (zero on the boundary) and linear lift of the boundary data per step"""
    domain: Tuple[float, float]
    left_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    right_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def homogeneous(cls, domain, n_time: int) -> 'BCEnforcer':
        return cls(domain=domain, left_values=np.zeros(n_time), right_values=np.zeros(n_time))

    @property
    def n_time(self) -> int:
        return len(self.left_values)

    def cutoff(self, x) -> np.ndarray:
        a, b = self.domain
        x = np.asarray(x, dtype=np.float64)
        return (x - a) * (b - x)

    def cutoff_derivative(self, x) -> np.ndarray:
        a, b = self.domain
        x = np.asarray(x, dtype=np.float64)
        return (a + b) - 2.0 * x

    def lift(self, x) -> np.ndarray:
        """g(x, n) as an (N, Q) array"""
        a, b = self.domain
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        length = b - a
        left_weight = (b - x) / length
        right_weight = (x - a) / length
        return np.outer(self.left_values, left_weight) + np.outer(self.right_values, right_weight)

    def lift_derivative(self, x) -> np.ndarray:
        a, b = self.domain
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        slope = (self.right_values - self.left_values) / (b - a)
        return np.outer(slope, np.ones_like(x))


def init(seed: int, widths: Sequence[int]) -> MLPState:
    """Glorot-uniform weights, zero biases, deterministic in the seed"""
    widths = list(widths)
    if not widths:
        raise ConfigError("Layer widths are empty")
    if len(widths) < 2:
        raise ConfigError(f"Need at least an input and an output width, got {widths}")
    if widths[0] != 1:
        raise ConfigError(f"Input width must be 1 (spatial coordinate), got {widths[0]}")
    if any(w <= 0 for w in widths):
        raise ConfigError(f"Layer widths must be positive, got {widths}")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))

    logger.debug(f"Initialized network {widths} with seed {seed}")
    return MLPState(weights=weights, biases=biases)


def register_parameters(tape: Tape, state: MLPState) -> List[Var]:
    """Put every weight and bias on the tape as trainable leaves"""
    handles = []
    for w, b in zip(state.weights, state.biases):
        handles.append(tape.input(w, trainable=True))
        # biases live on the tape as columns so they broadcast over points
        handles.append(tape.input(b.reshape(-1, 1), trainable=True))
    return handles


def gradients_to_parameters(grads: Sequence[np.ndarray], state: MLPState) -> List[np.ndarray]:
    """Reshape tape gradients back to the shapes of state.parameters()"""
    return [np.asarray(g).reshape(p.shape) for g, p in zip(grads, state.parameters())]


def trial_solution(tape: Tape, params: Sequence[Var], bc: BCEnforcer, x) -> Tuple[Var, Var]:
    """u = chi * u_hat + g and its x-derivative at the points x, as (N, Q) tape values"""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = tape.const(x[None, :])
    dz = tape.const(np.ones((1, x.size)))

    n_layers = len(params) // 2
    for j in range(n_layers):
        w, b = params[2 * j], params[2 * j + 1]
        pre = w @ z + b
        dpre = w @ dz
        if j < n_layers - 1:
            z = pre.tanh()
            dz = (1.0 - z * z) * dpre
        else:
            z, dz = pre, dpre

    chi = bc.cutoff(x)
    dchi = bc.cutoff_derivative(x)
    u = z * chi + bc.lift(x)
    du = dz * chi + z * dchi + bc.lift_derivative(x)
    return u, du


def forward_with_derivative(state: MLPState, bc: BCEnforcer, x, tape: Optional[Tape] = None):
    """Evaluate the trial solution and its derivative

    With a tape the result is a pair of tape values (parameters are registered on it);
    without one, plain arrays. A scalar x gives vectors of length N, an array of Q
    points gives (N, Q) arrays.
    """
    scalar = np.ndim(x) == 0
    own_tape = tape is None
    if own_tape:
        tape = Tape()
    params = register_parameters(tape, state)
    u, du = trial_solution(tape, params, bc, x)
    if not own_tape:
        return u, du
    u_val, du_val = u.value, du.value
    if scalar:
        return u_val[:, 0], du_val[:, 0]
    return u_val, du_val


def check_output_width(state: MLPState, n_time: int):
    if state.out_dim != n_time:
        raise ConfigError(f"Network output width {state.out_dim} does not match N_time={n_time}")
