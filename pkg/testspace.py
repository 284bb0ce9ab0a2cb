"""
Orthonormal test bases and stratified midpoint quadrature on an interval
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from errors import ConfigError, StructuralError

logger = logging.getLogger(__name__)

METRIC_QUADRATURE_POINTS = 2048


class BasisKind(Enum):
    """Test space families"""
    H10_SINE = "h10_sine"      # orthonormal in (u, v) = int u'v'
    H1_FOURIER = "h1_fourier"  # cosines, orthonormal in (u, v) = int u'v' + int uv

    @property
    def vanishes_on_boundary(self) -> bool:
        return self is BasisKind.H10_SINE


@dataclass(frozen=True)
class Basis:
    """First n_modes functions of an orthonormal test basis on (a, b)"""
    kind: BasisKind
    domain: Tuple[float, float]
    n_modes: int

    def __post_init__(self):
        a, b = self.domain
        if b <= a:
            raise ConfigError(f"Degenerate domain ({a}, {b})")
        if self.n_modes < 1:
            raise ConfigError(f"N_test must be positive, got {self.n_modes}")

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def mode_indices(self) -> np.ndarray:
        if self.kind is BasisKind.H10_SINE:
            return np.arange(1, self.n_modes + 1)
        return np.arange(0, self.n_modes)

    def truncated(self, n_modes: int) -> 'Basis':
        return Basis(self.kind, self.domain, n_modes)

    def values(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """(phi, phi') of every mode at the points, each shaped (n_modes, Q)"""
        a, _ = self.domain
        length = self.length
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        k = self.mode_indices.astype(np.float64)[:, None]
        freq = k * np.pi / length
        arg = freq * (x[None, :] - a)

        if self.kind is BasisKind.H10_SINE:
            # sqrt(2/L) sin is L2-orthonormal; dividing by the frequency makes it H1_0-orthonormal
            scale = np.sqrt(2.0 / length) / freq
            return scale * np.sin(arg), scale * freq * np.cos(arg)

        norm = np.sqrt(0.5 * length * (1.0 + freq ** 2))
        norm[k[:, 0] == 0] = np.sqrt(length)
        return np.cos(arg) / norm, -freq * np.sin(arg) / norm


def eval_basis(basis: Basis, k: int, x) -> Tuple[np.ndarray, np.ndarray]:
    """phi_k(x) and phi_k'(x) for a single mode index k"""
    indices = basis.mode_indices
    if k < indices[0] or k > indices[-1]:
        raise StructuralError(
            f"Mode {k} out of range [{indices[0]}, {indices[-1]}] for {basis.kind.value}"
        )
    row = int(k - indices[0])
    phi, dphi = basis.values(x)
    if np.ndim(x) == 0:
        return phi[row, 0], dphi[row, 0]
    return phi[row], dphi[row]


@dataclass
class QuadratureRule:
    """Points and weights on (a, b)"""
    domain: Tuple[float, float]
    points: np.ndarray
    weights: np.ndarray
    resample_each_iteration: bool = True
    seed: Optional[int] = None

    @property
    def n_points(self) -> int:
        return len(self.points)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Quadrature along the last axis"""
        return np.asarray(values) @ self.weights


def _check_domain(domain, n_points):
    a, b = domain
    if not b > a:
        raise ConfigError(f"Degenerate domain ({a}, {b})")
    if n_points < 2:
        raise ConfigError(f"Quadrature needs at least 2 points, got {n_points}")


def sample_quadrature(domain, n_points: int, rng: np.random.Generator) -> QuadratureRule:
    """One uniformly random point per cell of the uniform n_points-partition"""
    _check_domain(domain, n_points)
    a, b = domain
    h = (b - a) / n_points
    cells = a + h * np.arange(n_points)
    points = cells + h * rng.random(n_points)
    return QuadratureRule(domain=(a, b), points=points, weights=np.full(n_points, h))


def midpoint_quadrature(domain, n_points: int = METRIC_QUADRATURE_POINTS) -> QuadratureRule:
    """Deterministic midpoint rule used for metrics and diagnostics"""
    _check_domain(domain, n_points)
    a, b = domain
    h = (b - a) / n_points
    points = a + h * (np.arange(n_points) + 0.5)
    return QuadratureRule(domain=(a, b), points=points, weights=np.full(n_points, h),
                          resample_each_iteration=False)


def gram_matrix(basis: Basis, quadrature: QuadratureRule) -> np.ndarray:
    """Quadrature estimate of the basis inner products"""
    phi, dphi = basis.values(quadrature.points)
    w = quadrature.weights
    gram = (dphi * w) @ dphi.T
    if basis.kind is BasisKind.H1_FOURIER:
        gram = gram + (phi * w) @ phi.T
    return gram


class QuadratureSampler:
    """Hands out the quadrature rule for each optimizer iteration

    Resampling draws a fresh stratified rule every call; otherwise the deterministic
    midpoint rule is used throughout.
    """

    def __init__(self, domain, n_points: int, seed: int, resample: bool = True):
        _check_domain(domain, n_points)
        self.domain = domain
        self.n_points = n_points
        self.seed = seed
        self.resample = resample
        self.rng = np.random.default_rng(seed)
        self._fixed = None

    def next(self) -> QuadratureRule:
        if not self.resample:
            if self._fixed is None:
                self._fixed = midpoint_quadrature(self.domain, self.n_points)
                self._fixed.seed = self.seed
            return self._fixed
        rule = sample_quadrature(self.domain, self.n_points, self.rng)
        rule.seed = self.seed
        return rule
