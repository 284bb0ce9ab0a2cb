"""
Problem definitions: the linear benchmark with a closed-form solution and the
nondimensionalized freezing problem with tabulated properties and measured boundaries
"""
import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import PchipInterpolator

from errors import ConfigError, DataValidationError, IngestionError
from network import BCEnforcer
from testspace import BasisKind

logger = logging.getLogger(__name__)

PROPERTY_COLUMNS = ('T', 'rho', 'cp', 'k')
BOUNDARY_COLUMNS = ('t', 'T_left', 'T_right')
MIN_TABLE_ROWS = 4
REQUIRED_TEMPERATURE_RANGE = (-30.0, 25.0)


@dataclass
class CoefficientField:
    """Dimensionless heat capacity C(u) and conductivity K(u) with their bounds"""
    C: Callable[[np.ndarray], np.ndarray]
    dC: Callable[[np.ndarray], np.ndarray]
    K: Callable[[np.ndarray], np.ndarray]
    dK: Callable[[np.ndarray], np.ndarray]
    c_min: float
    c_max: float
    k_min: float
    k_max: float
    is_constant: bool = False

    @classmethod
    def constant(cls, c: float = 1.0, k: float = 1.0) -> 'CoefficientField':
        return cls(
            C=lambda u: np.full_like(np.asarray(u, dtype=np.float64), c),
            dC=lambda u: np.zeros_like(np.asarray(u, dtype=np.float64)),
            K=lambda u: np.full_like(np.asarray(u, dtype=np.float64), k),
            dK=lambda u: np.zeros_like(np.asarray(u, dtype=np.float64)),
            c_min=c, c_max=c, k_min=k, k_max=k, is_constant=True,
        )

    def energy_derivative(self, u) -> np.ndarray:
        """d/du of the internal energy C(u) u"""
        u = np.asarray(u, dtype=np.float64)
        return self.C(u) + self.dC(u) * u

    def out_of_bounds(self, u, tol: float = 1e-12) -> int:
        """Number of states where C or K leaves its declared bounds"""
        c = self.C(u)
        k = self.K(u)
        bad = ((c < self.c_min - tol) | (c > self.c_max + tol)
               | (k < self.k_min - tol) | (k > self.k_max + tol))
        return int(np.count_nonzero(bad))


@dataclass
class PropertyTable:
    """Tabulated density, specific heat and conductivity against temperature in C"""
    T: np.ndarray
    rho: np.ndarray
    cp: np.ndarray
    k: np.ndarray
    source: str = "table"

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.cp = np.asarray(self.cp, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        self.validate()
        self._interp = {name: PchipInterpolator(self.T, getattr(self, name), extrapolate=True)
                        for name in ('rho', 'cp', 'k')}
        self._deriv = {name: spline.derivative() for name, spline in self._interp.items()}

    def validate(self):
        errors = []
        if len(self.T) < MIN_TABLE_ROWS:
            errors.append(f"need at least {MIN_TABLE_ROWS} rows, got {len(self.T)}")
        if not (len(self.T) == len(self.rho) == len(self.cp) == len(self.k)):
            errors.append("columns have different lengths")
        if len(self.T) > 1 and np.any(np.diff(self.T) <= 0):
            errors.append("temperatures must be strictly increasing without duplicates")
        if errors:
            raise IngestionError("; ".join(errors))

        for name in ('rho', 'cp', 'k'):
            values = getattr(self, name)
            if np.any(~np.isfinite(values)) or np.any(values <= 0):
                raise DataValidationError(f"Property '{name}' must be positive and finite")

    @property
    def t_range(self) -> Tuple[float, float]:
        return float(self.T[0]), float(self.T[-1])

    def _clamp(self, T):
        lo, hi = self.t_range
        T = np.asarray(T, dtype=np.float64)
        return np.clip(T, lo, hi), (T >= lo) & (T <= hi)

    def value(self, name: str, T) -> np.ndarray:
        clamped, _ = self._clamp(T)
        return self._interp[name](clamped)

    def derivative(self, name: str, T) -> np.ndarray:
        clamped, inside = self._clamp(T)
        return np.where(inside, self._deriv[name](clamped), 0.0)

    def covers(self, lo: float, hi: float) -> bool:
        return self.T[0] <= lo and self.T[-1] >= hi


@dataclass
class BoundarySeries:
    """Measured wall temperatures in C against time in seconds"""
    t: np.ndarray
    T_left: np.ndarray
    T_right: np.ndarray
    source: str = "series"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.T_left = np.asarray(self.T_left, dtype=np.float64)
        self.T_right = np.asarray(self.T_right, dtype=np.float64)
        errors = []
        if len(self.t) < 2:
            errors.append("boundary series needs at least 2 rows")
        if not (len(self.t) == len(self.T_left) == len(self.T_right)):
            errors.append("columns have different lengths")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            errors.append("times must be strictly increasing")
        if errors:
            raise IngestionError("; ".join(errors))

    def covers(self, duration_s: float) -> bool:
        tol = 1e-9 * max(1.0, abs(duration_s))
        return self.t[0] <= tol and self.t[-1] >= duration_s - tol

    def at(self, tau) -> Tuple[np.ndarray, np.ndarray]:
        return np.interp(tau, self.t, self.T_left), np.interp(tau, self.t, self.T_right)


@dataclass(frozen=True)
class Nondimensionalization:
    """u = T / T_ref, x = s / d, t = tau / t0 with t0 = d^2 rho_ref cp_ref / k_ref"""
    T_ref: float
    d: float
    rho_ref: float
    cp_ref: float
    k_ref: float

    @property
    def t0(self) -> float:
        return self.d ** 2 * self.rho_ref * self.cp_ref / self.k_ref

    def to_u(self, T):
        return np.asarray(T, dtype=np.float64) / self.T_ref

    def to_T(self, u):
        return np.asarray(u, dtype=np.float64) * self.T_ref

    def to_t(self, tau):
        return np.asarray(tau, dtype=np.float64) / self.t0

    def to_tau(self, t):
        return np.asarray(t, dtype=np.float64) * self.t0

    def to_x(self, s):
        return np.asarray(s, dtype=np.float64) / self.d

    def to_s(self, x):
        return np.asarray(x, dtype=np.float64) * self.d


@dataclass(frozen=True)
class CoffeeGeometry:
    """Placeholder container data; none of these defaults is a measured value"""
    length_m: float = 0.3
    duration_s: float = 86400.0
    initial_temperature_c: float = 20.0


@dataclass(frozen=True)
class ProblemSpec:
    """Dimensionless parabolic problem C(u) u_t - (K(u) u_x)_x = f on (a, b) x (0, t_end]"""
    name: str
    domain: Tuple[float, float]
    t_end: float
    n_time: int
    coefficients: CoefficientField
    source: Callable
    initial: Callable
    boundary_left: Callable
    boundary_right: Callable
    basis_kind: BasisKind
    n_test: int
    n_int: int
    exact: Optional[Callable] = None
    exact_dx: Optional[Callable] = None
    scaling: Optional[Nondimensionalization] = None
    properties: Optional[PropertyTable] = field(default=None, compare=False)

    def __post_init__(self):
        errors = []
        a, b = self.domain
        if not b > a:
            errors.append(f"degenerate domain ({a}, {b})")
        if not self.t_end > 0:
            errors.append(f"t_end must be positive, got {self.t_end}")
        for name in ('n_time', 'n_test', 'n_int'):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        if errors:
            raise ConfigError("; ".join(errors))

    @property
    def dt(self) -> float:
        return self.t_end / self.n_time

    @property
    def times(self) -> np.ndarray:
        """t^n for n = 1..N"""
        return self.dt * np.arange(1, self.n_time + 1)

    @property
    def homogeneous(self) -> bool:
        return bool(np.all(self.boundary_left(self.times) == 0) and np.all(self.boundary_right(self.times) == 0))

    def bc_enforcer(self) -> BCEnforcer:
        times = self.times
        return BCEnforcer(
            domain=self.domain,
            left_values=np.asarray(self.boundary_left(times), dtype=np.float64) * np.ones(self.n_time),
            right_values=np.asarray(self.boundary_right(times), dtype=np.float64) * np.ones(self.n_time),
        )

    def with_overrides(self, **changes) -> 'ProblemSpec':
        return replace(self, **changes)


# Linear benchmark

def toy_exact(x, t):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.asarray(t)) * np.sin(x) * np.cos(x / 2.0)


def toy_exact_dx(x, t):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.asarray(t)) * (np.cos(x) * np.cos(x / 2.0) - 0.5 * np.sin(x) * np.sin(x / 2.0))


def toy_exact_dxx(x, t):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.asarray(t)) * (-1.25 * np.sin(x) * np.cos(x / 2.0) - np.cos(x) * np.sin(x / 2.0))


def toy_source(x, t):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.asarray(t)) * (0.25 * np.sin(x) * np.cos(x / 2.0) + np.cos(x) * np.sin(x / 2.0))


def toy_strong_residual(x, t):
    """u*_t - u*_xx - f; zero when the source matches the exact solution"""
    return -toy_exact(x, t) - toy_exact_dxx(x, t) - toy_source(x, t)


def make_toy_problem(n_time: int = 128, n_test: int = 20, n_int: int = 128, t_end: float = 1.0) -> ProblemSpec:
    """Heat equation on (0, pi) with C = K = 1 and u* = exp(-t) sin(x) cos(x/2)"""
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=np.float64))
    return ProblemSpec(
        name="toy",
        domain=(0.0, float(np.pi)),
        t_end=t_end,
        n_time=n_time,
        coefficients=CoefficientField.constant(1.0, 1.0),
        source=toy_source,
        initial=lambda x: toy_exact(x, 0.0),
        boundary_left=zero,
        boundary_right=zero,
        basis_kind=BasisKind.H10_SINE,
        n_test=n_test,
        n_int=n_int,
        exact=toy_exact,
        exact_dx=toy_exact_dx,
    )


def check_exact_solution(problem: ProblemSpec, n_samples: int = 1000, seed: int = 0) -> float:
    """Largest deviation of the exact solution from the boundary and initial data"""
    if problem.exact is None:
        return 0.0
    rng = np.random.default_rng(seed)
    a, b = problem.domain
    t = rng.uniform(0.0, problem.t_end, n_samples)
    x = rng.uniform(a, b, n_samples)
    deviations = [
        np.abs(problem.exact(np.full_like(t, a), t) - problem.boundary_left(t)),
        np.abs(problem.exact(np.full_like(t, b), t) - problem.boundary_right(t)),
        np.abs(problem.exact(x, 0.0) - problem.initial(x)),
    ]
    return float(max(np.max(d) for d in deviations))


# Freezing problem

def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def _smoothstep(z):
    z = np.clip(z, 0.0, 1.0)
    return z * z * (3.0 - 2.0 * z)


def default_property_table() -> PropertyTable:
    """PLACEHOLDER properties, not measured data

    Density (1100 -> 1000 kg/m3) and conductivity (0.5 -> 0.6 W/(m C)) ramp smoothly
    across freezing and are constant above 0 C and -2 C respectively. The apparent volumetric heat
    capacity is 3.3 MJ/(m3 C) plus a Gaussian latent-heat peak centred at -3 C (about
    110 kJ/kg) that tapers to zero between -1 and 0 C. The tabulated c_p is the secant
    of that capacity taken from 0 C, so rho c_p T is the enthalpy: C(u) = 1 above
    freezing and the slope of C(u) u never drops below 1.
    """
    T_fine = np.arange(-3000, 2501) / 100.0
    rho_fine = 1000.0 + 100.0 * _smoothstep((T_fine + 6.0) / 6.0)
    peak = 24000.0 * np.exp(-0.5 * ((T_fine + 3.0) / 2.0) ** 2) * (1.0 - _smoothstep(T_fine + 1.0))
    capacity = 3.3e6 + rho_fine * peak
    enthalpy = cumulative_trapezoid(capacity, T_fine, initial=0.0)
    enthalpy -= enthalpy[T_fine == 0.0]

    T, H = T_fine[::25], enthalpy[::25]
    frozen = T < 0.0
    volumetric = capacity[::25].copy()
    volumetric[frozen] = H[frozen] / T[frozen]
    rho = rho_fine[::25]
    k = 0.5 + 0.1 * (1.0 - _smoothstep((T + 8.0) / 6.0))
    return PropertyTable(T=T, rho=rho, cp=volumetric / rho, k=k, source="synthetic-placeholder")


def constant_property_table(rho: float = 1000.0, cp: float = 4000.0, k: float = 0.5) -> PropertyTable:
    T = np.linspace(REQUIRED_TEMPERATURE_RANGE[0], REQUIRED_TEMPERATURE_RANGE[1], 12)
    ones = np.ones_like(T)
    return PropertyTable(T=T, rho=rho * ones, cp=cp * ones, k=k * ones, source="constant")


def default_boundary_series(duration_s: float = 86400.0, start_c: float = 20.0,
                            wall_c: float = -25.0, time_constant_s: float = 7200.0) -> BoundarySeries:
    """PLACEHOLDER wall record: exponential approach from start_c to wall_c"""
    t = np.arange(0.0, duration_s + 600.0, 600.0)
    T = wall_c + (start_c - wall_c) * np.exp(-t / time_constant_s)
    return BoundarySeries(t=t, T_left=T, T_right=T.copy(), source="synthetic-placeholder")


def _read_csv_columns(path, columns) -> dict:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"File not found: {path}")
    try:
        with open(path, newline='') as handle:
            rows = [row for row in csv.reader(handle) if row and not row[0].startswith('#')]
    except OSError as e:
        raise IngestionError(f"Cannot read {path}: {e}") from e

    if not rows:
        raise IngestionError(f"{path} is empty")
    header = [name.strip() for name in rows[0]]
    missing = [name for name in columns if name not in header]
    if missing:
        raise IngestionError(f"{path}: missing columns {missing}, header is {header}")

    data = {name: [] for name in columns}
    for line_no, row in enumerate(rows[1:], start=2):
        try:
            for name in columns:
                data[name].append(float(row[header.index(name)]))
        except (ValueError, IndexError) as e:
            raise IngestionError(f"{path}:{line_no}: {e}") from e
    return {name: np.array(values) for name, values in data.items()}


def load_property_table(path) -> PropertyTable:
    """Read a CSV with header T,rho,cp,k"""
    data = _read_csv_columns(path, PROPERTY_COLUMNS)
    table = PropertyTable(T=data['T'], rho=data['rho'], cp=data['cp'], k=data['k'], source=str(path))
    logger.info(f"Loaded property table {path} ({len(table.T)} rows, {table.t_range[0]}..{table.t_range[1]} C)")
    return table


def load_boundary_series(path) -> BoundarySeries:
    """Read a CSV with header t,T_left,T_right (seconds, C)"""
    data = _read_csv_columns(path, BOUNDARY_COLUMNS)
    series = BoundarySeries(t=data['t'], T_left=data['T_left'], T_right=data['T_right'], source=str(path))
    logger.info(f"Loaded boundary series {path} ({len(series.t)} rows up to {series.t[-1]} s)")
    return series


def table_bounds(table: PropertyTable) -> Tuple[float, float, float, float]:
    """Bounds of rho c_p and k over the whole interpolated table

    A PCHIP segment stays between its two end nodes, so per-interval products of the
    node extremes bound rho c_p; k is bounded by its node values.
    """
    def pairs(values):
        return np.minimum(values[:-1], values[1:]), np.maximum(values[:-1], values[1:])

    rho_lo, rho_hi = pairs(table.rho)
    cp_lo, cp_hi = pairs(table.cp)
    return (float(np.min(rho_lo * cp_lo)), float(np.max(rho_hi * cp_hi)),
            float(np.min(table.k)), float(np.max(table.k)))


def coefficients_from_table(table: PropertyTable, scaling: Nondimensionalization) -> CoefficientField:
    """C(u) = rho c_p / (rho_ref c_p,ref), K(u) = k / k_ref evaluated at T = u T_ref"""
    T_ref = scaling.T_ref
    heat_ref = scaling.rho_ref * scaling.cp_ref

    def C(u):
        T = np.asarray(u, dtype=np.float64) * T_ref
        return table.value('rho', T) * table.value('cp', T) / heat_ref

    def dC(u):
        T = np.asarray(u, dtype=np.float64) * T_ref
        d_heat = (table.derivative('rho', T) * table.value('cp', T)
                  + table.value('rho', T) * table.derivative('cp', T))
        return T_ref * d_heat / heat_ref

    def K(u):
        T = np.asarray(u, dtype=np.float64) * T_ref
        return table.value('k', T) / scaling.k_ref

    def dK(u):
        T = np.asarray(u, dtype=np.float64) * T_ref
        return T_ref * table.derivative('k', T) / scaling.k_ref

    heat_min, heat_max, k_min, k_max = table_bounds(table)
    constant = bool(np.ptp(table.rho * table.cp) == 0 and np.ptp(table.k) == 0)
    return CoefficientField(
        C=C, dC=dC, K=K, dK=dK,
        c_min=heat_min / heat_ref, c_max=heat_max / heat_ref,
        k_min=k_min / scaling.k_ref, k_max=k_max / scaling.k_ref,
        is_constant=constant,
    )


def make_coffee_problem(properties: PropertyTable, boundary_series: BoundarySeries,
                        geometry: CoffeeGeometry = CoffeeGeometry(), n_time: int = 128,
                        n_test: int = 64, n_int: int = 256) -> ProblemSpec:
    """Dimensionless freezing problem on (0, 1) with T_ref = T_I"""
    lo, hi = REQUIRED_TEMPERATURE_RANGE
    if not properties.covers(lo, hi):
        raise IngestionError(
            f"Property table covers {properties.t_range}, needs at least [{lo}, {hi}] C"
        )
    if not boundary_series.covers(geometry.duration_s):
        raise IngestionError(
            f"Boundary series covers [{boundary_series.t[0]}, {boundary_series.t[-1]}] s, "
            f"needs [0, {geometry.duration_s}] s"
        )
    if geometry.length_m <= 0 or geometry.duration_s <= 0:
        raise ConfigError("Container length and duration must be positive")

    T_I = geometry.initial_temperature_c
    scaling = Nondimensionalization(
        T_ref=T_I,
        d=geometry.length_m,
        rho_ref=float(properties.value('rho', T_I)),
        cp_ref=float(properties.value('cp', T_I)),
        k_ref=float(properties.value('k', T_I)),
    )
    coefficients = coefficients_from_table(properties, scaling)

    u_range = np.linspace(lo, hi, 2001) / T_I
    energy_slope = coefficients.energy_derivative(u_range)
    if np.any(energy_slope <= 0):
        logger.warning(
            f"Internal energy C(u)u is not increasing on the table range "
            f"(min slope {energy_slope.min():.3e}); the time-discrete problem may be ill posed"
        )

    def boundary(column):
        def values(t):
            T = np.interp(scaling.to_tau(t), boundary_series.t, column)
            return T / T_I
        return values

    t_end = float(scaling.to_t(geometry.duration_s))
    logger.info(
        f"Coffee problem: t0={scaling.t0:.6g} s, t_end={t_end:.6g}, "
        f"C in [{coefficients.c_min:.4g}, {coefficients.c_max:.4g}], "
        f"K in [{coefficients.k_min:.4g}, {coefficients.k_max:.4g}]"
    )
    return ProblemSpec(
        name="coffee",
        domain=(0.0, 1.0),
        t_end=t_end,
        n_time=n_time,
        coefficients=coefficients,
        source=lambda x, t: np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape),
        initial=lambda x: np.ones_like(np.asarray(x, dtype=np.float64)),
        boundary_left=boundary(boundary_series.T_left),
        boundary_right=boundary(boundary_series.T_right),
        basis_kind=BasisKind.H1_FOURIER,
        n_test=n_test,
        n_int=n_int,
        scaling=scaling,
        properties=properties,
    )


def make_linear_control(problem: ProblemSpec) -> ProblemSpec:
    """Same data with C = K = 1 (the linear control u_0)"""
    return problem.with_overrides(name=f"{problem.name}-control",
                                  coefficients=CoefficientField.constant(1.0, 1.0))
