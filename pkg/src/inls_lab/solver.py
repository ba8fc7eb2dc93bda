"""Pseudospectral INLS solver on a periodic box.

Convention: i u_t + Lap u + lam |x|^-b |u|^alpha u = 0, so the free flow is
u_hat(t) = exp(-i |xi|^2 t) u_hat(0). The Nyquist mode is dropped from every
non-trivial real multiplier (fractional derivatives, Sobolev norms and
interpolation) so those multipliers stay symmetric.
"""

from __future__ import annotations

import functools
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.fft as sfft
from scipy.integrate import cumulative_trapezoid

from .exponent_core import INF, Pair

BOUNDARY_SHELL = 0.05  # outer fraction of each axis watched for leakage
BOUNDARY_TOL = 1e-8
DEFAULT_CEILING_FACTOR = 1e6


class SolverError(RuntimeError):
    pass


class NaNEncountered(SolverError):
    def __init__(self, step: int):
        super().__init__(f"non-finite values at step {step}")
        self.step = step


def _workers() -> int:
    raw = os.environ.get("INLS_LAB_THREADS")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise SolverError(f"INLS_LAB_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def _fft(a: np.ndarray) -> np.ndarray:
    return sfft.fftn(a, workers=_workers())


def _ifft(a: np.ndarray) -> np.ndarray:
    return sfft.ifftn(a, workers=_workers())


# ---------------------------------------------------------------------------
# grid and fields


@dataclass(frozen=True)
class Grid:
    dim: int
    extent: tuple[float, ...]
    points: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / M for L, M in zip(self.extent, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    def axes(self) -> list[np.ndarray]:
        return [-L / 2 + np.arange(M) * (L / M) for L, M in zip(self.extent, self.points)]

    def wavenumbers(self) -> list[np.ndarray]:
        return [2 * np.pi * sfft.fftfreq(M, d=L / M) for L, M in zip(self.extent, self.points)]

    def refined(self, factor: int) -> "Grid":
        return make_grid(self.dim, self.extent, tuple(M * factor for M in self.points))


def make_grid(dim: int, extent, points) -> Grid:
    """Box [-L/2, L/2)^dim with ``points`` nodes per axis (a power of two >= 8)."""
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    ext = tuple(float(e) for e in (extent if isinstance(extent, (tuple, list)) else [extent] * dim))
    pts = tuple(int(p) for p in (points if isinstance(points, (tuple, list)) else [points] * dim))
    if len(ext) != dim or len(pts) != dim:
        raise ValueError("extent and points need one entry per axis")
    if any(not e > 0 or not math.isfinite(e) for e in ext):
        raise ValueError("extent must be positive and finite")
    for p in pts:
        if p < 8 or p & (p - 1):
            raise ValueError(f"points must be a power of two >= 8, got {p}")
    return Grid(dim, ext, pts)


@functools.lru_cache(maxsize=32)
def _coords(grid: Grid) -> tuple[np.ndarray, ...]:
    return tuple(np.meshgrid(*grid.axes(), indexing="ij"))


@functools.lru_cache(maxsize=32)
def _radius(grid: Grid) -> np.ndarray:
    return np.sqrt(sum(c**2 for c in _coords(grid)))


@functools.lru_cache(maxsize=32)
def _xi2(grid: Grid) -> np.ndarray:
    ks = np.meshgrid(*grid.wavenumbers(), indexing="ij")
    return sum(k**2 for k in ks)


@functools.lru_cache(maxsize=32)
def _nyquist(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for axis, M in enumerate(grid.points):
        index = [slice(None)] * grid.dim
        index[axis] = M // 2
        mask[tuple(index)] = True
    return mask


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)


# ---------------------------------------------------------------------------
# potential


@dataclass(frozen=True)
class EpsilonShift:
    eps_reg: float

    def __post_init__(self):
        if not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive")

    def describe(self) -> str:
        return f"EpsilonShift(eps_reg={self.eps_reg:g})"


@dataclass(frozen=True)
class GridCap:
    def describe(self) -> str:
        return "GridCap"


Regularization = Union[EpsilonShift, GridCap]


@dataclass(frozen=True)
class PotentialSpec:
    """Weight exponent b, power alpha, sign lambda and the treatment of x = 0.

    ``regularization=None`` means EpsilonShift with eps_reg equal to one grid
    spacing of whatever grid the weight is evaluated on.
    """

    b: float
    alpha: float
    lambda_sign: int = -1
    regularization: Optional[Regularization] = None

    def __post_init__(self):
        if self.b < 0 or not self.alpha > 0:
            raise ValueError("need b >= 0 and alpha > 0")
        if self.lambda_sign not in (1, -1):
            raise ValueError("lambda must be +1 or -1")

    def resolved(self, grid: Grid) -> Regularization:
        if self.regularization is None:
            return EpsilonShift(min(grid.spacing))
        return self.regularization

    def describe(self, grid: Grid) -> str:
        return self.resolved(grid).describe()


def potential_weights(grid: Grid, spec: PotentialSpec) -> np.ndarray:
    return _weights(grid, float(spec.b), spec.resolved(grid))


@functools.lru_cache(maxsize=32)
def _weights(grid: Grid, b: float, reg: Regularization) -> np.ndarray:
    r = _radius(grid)
    if b == 0:
        w = np.ones(grid.shape)
    elif isinstance(reg, EpsilonShift):
        w = (r**2 + reg.eps_reg**2) ** (-b / 2)
    else:
        h = min(grid.spacing)
        with np.errstate(divide="ignore"):
            w = np.minimum(np.where(r > 0, r, 0.0) ** (-b), h ** (-b))
    w.setflags(write=False)
    return w


# ---------------------------------------------------------------------------
# norms and multipliers


def mass(u: Field) -> float:
    return float(np.sum(np.abs(u.values) ** 2) * u.grid.cell_volume)


def l2_norm(u: Field) -> float:
    return math.sqrt(mass(u))


def lr_norm(u: Field, r: float) -> float:
    if r == 2:
        return l2_norm(u)
    if math.isinf(r):
        return u.max_abs()
    return float((np.sum(np.abs(u.values) ** r) * u.grid.cell_volume) ** (1 / r))


def _parseval(u_hat: np.ndarray, grid: Grid, weight: np.ndarray) -> float:
    return float(np.sum(weight * np.abs(u_hat) ** 2) * grid.cell_volume / grid.size)


def _cell_averaged_power(grid: Grid, power: float) -> np.ndarray:
    """Average of |xi|^power over each frequency cell (1D only)."""
    if grid.dim != 1:
        raise ValueError("cell-averaged multipliers are implemented for dim = 1")
    if not power > -1:
        raise ValueError("|xi|^power is not locally integrable for power <= -1")
    (k,) = grid.wavenumbers()
    dk = 2 * np.pi / grid.extent[0]
    antider = lambda x: np.sign(x) * np.abs(x) ** (power + 1) / (power + 1)
    return (antider(k + dk / 2) - antider(k - dk / 2)) / dk


def sobolev_norm(u: Field, s: float, homogeneous: bool = True, cell_average: bool = False) -> float:
    """||D^s u||_2 (homogeneous) or ||J^s u||_2.

    ``cell_average`` replaces the point multiplier |xi|^(2s) by its mean over
    each frequency cell, which also makes negative s (with 2s > -1) usable in
    one dimension.
    """
    s = float(s)
    if s == 0:
        return l2_norm(u)
    grid = u.grid
    if homogeneous:
        if cell_average:
            weight = _cell_averaged_power(grid, 2 * s)
        elif s < 0:
            raise ValueError("negative s needs cell_average=True")
        else:
            weight = _xi2(grid) ** s
    else:
        weight = (1 + _xi2(grid)) ** s
    weight = np.where(_nyquist(grid), 0.0, weight)
    return math.sqrt(_parseval(_fft(u.values), grid, weight))


def fractional_derivative(u: Field, s: float) -> Field:
    s = float(s)
    if s < 0:
        raise ValueError("fractional_derivative needs s >= 0")
    mult = _xi2(u.grid) ** (s / 2)
    if s > 0:
        mult = np.where(_nyquist(u.grid), 0.0, mult)
    return u.with_values(_ifft(mult * _fft(u.values)))


def gradient_energy(u: Field) -> float:
    """(1/2) * integral of |grad u|^2, computed spectrally."""
    return 0.5 * _parseval(_fft(u.values), u.grid, _xi2(u.grid))


def energy(u: Field, spec: PotentialSpec) -> float:
    """Kinetic part minus lambda/(alpha+2) times the weighted potential integral."""
    w = potential_weights(u.grid, spec)
    potential = float(np.sum(w * np.abs(u.values) ** (spec.alpha + 2)) * u.grid.cell_volume)
    return gradient_energy(u) - spec.lambda_sign * potential / (spec.alpha + 2)


# ---------------------------------------------------------------------------
# flows


def linear_propagate(u: Field, t: float) -> Field:
    return u.with_values(_ifft(np.exp(-1j * _xi2(u.grid) * t) * _fft(u.values)))


def nonlinear_substep(u: Field, dt: float, spec: PotentialSpec) -> Field:
    """Exact solution of i u_t + lam w |u|^alpha u = 0 over dt: a pointwise phase rotation."""
    w = potential_weights(u.grid, spec)
    vals = u.values
    return u.with_values(vals * np.exp(1j * spec.lambda_sign * dt * w * np.abs(vals) ** spec.alpha))


def split_step(u: Field, dt: float, spec: PotentialSpec) -> Field:
    """Strang step: half nonlinear, full linear, half nonlinear."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    half = nonlinear_substep(u, dt / 2, spec)
    return nonlinear_substep(linear_propagate(half, dt), dt / 2, spec)


def boundary_fraction(u: Field) -> float:
    """Share of the mass sitting in the outer shell of the box."""
    total = mass(u)
    if total == 0:
        return 0.0
    inner = np.ones(u.grid.shape, dtype=bool)
    for c, L in zip(_coords(u.grid), u.grid.extent):
        inner &= np.abs(c) < (0.5 - BOUNDARY_SHELL) * L
    shell = float(np.sum(np.abs(u.values[~inner]) ** 2) * u.grid.cell_volume)
    return shell / total


@dataclass
class Diagnostics:
    times: list[float] = field(default_factory=list)
    mass_trace: list[float] = field(default_factory=list)
    energy_trace: list[float] = field(default_factory=list)
    l2_norm_trace: list[float] = field(default_factory=list)
    hs_norm_trace: dict[str, list[float]] = field(default_factory=dict)
    status: str = "completed"
    boundary_flag: bool = False
    regularization: str = ""
    steps: int = 0

    def record(self, t: float, u: Field, spec: PotentialSpec, hs: dict[str, float]) -> None:
        self.times.append(t)
        m = mass(u)
        self.mass_trace.append(m)
        self.energy_trace.append(energy(u, spec))
        self.l2_norm_trace.append(math.sqrt(m))
        for label, s in hs.items():
            self.hs_norm_trace.setdefault(label, []).append(sobolev_norm(u, s))

    def relative_mass_drift(self) -> float:
        m0 = self.mass_trace[0]
        if m0 == 0:
            return 0.0
        return max(abs(m - m0) for m in self.mass_trace) / m0

    def energy_drift(self) -> float:
        return abs(self.energy_trace[-1] - self.energy_trace[0])

    def header(self) -> list[str]:
        return ["time", "mass", "energy", "l2"] + [f"hs_{label}" for label in self.hs_norm_trace]

    def rows(self) -> list[list[float]]:
        cols = [self.times, self.mass_trace, self.energy_trace, self.l2_norm_trace, *self.hs_norm_trace.values()]
        return [list(r) for r in zip(*cols)]

    def to_csv(self) -> str:
        lines = [",".join(self.header())]
        lines += [",".join(repr(float(v)) for v in row) for row in self.rows()]
        return "\n".join(lines) + "\n"


@dataclass
class EvolveResult:
    field: Field
    diagnostics: Diagnostics
    snapshots: list[tuple[float, Field]]


def evolve(
    u0: Field,
    T: float,
    dt: float,
    spec: PotentialSpec,
    sample_every: int = 1,
    hs: Optional[dict[str, float]] = None,
    ceiling_factor: float = DEFAULT_CEILING_FACTOR,
    keep_snapshots: bool = False,
) -> EvolveResult:
    """Strang-split evolution to time T.

    The step count is ceil(T/dt) with dt shrunk to land exactly on T. A max
    amplitude above ``ceiling_factor`` times the initial maximum stops the run
    with status "suspected blow-up"; non-finite values raise NaNEncountered.
    """
    if not T > 0 or not dt > 0 or dt > T * (1 + 1e-12):
        raise ValueError("need 0 < dt <= T")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    hs = dict(hs or {})
    n = max(1, math.ceil(T / dt - 1e-9))
    step_dt = T / n
    ceiling = ceiling_factor * u0.max_abs()
    diag = Diagnostics(regularization=spec.describe(u0.grid))
    # overflow ends in a NaN check below, so numpy's own warnings add nothing
    with np.errstate(over="ignore", invalid="ignore"):
        diag.record(0.0, u0, spec, hs)
        snaps = [(0.0, u0)] if keep_snapshots else []
        u = u0
        for k in range(1, n + 1):
            u = split_step(u, step_dt, spec)
            if not np.all(np.isfinite(u.values)):
                raise NaNEncountered(k)
            blown = u.max_abs() > ceiling
            if k % sample_every == 0 or k == n or blown:
                t = k * step_dt
                diag.record(t, u, spec, hs)
                if keep_snapshots:
                    snaps.append((t, u))
                if boundary_fraction(u) > BOUNDARY_TOL:
                    diag.boundary_flag = True
            diag.steps = k
            if blown:
                diag.status = "suspected blow-up"
                break
    return EvolveResult(u, diag, snaps)


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class Gaussian:
    width: float = 1.0
    amplitude: Union[float, str] = 1.0  # or "unit-mass"


@dataclass(frozen=True)
class Ring:
    radius: float
    width: float
    amplitude: float = 1.0


@dataclass(frozen=True)
class PlaneWave:
    k: tuple[float, ...]
    amplitude: float = 1.0


Profile = Union[Gaussian, Ring, PlaneWave]


def sample_initial(profile: Profile, grid: Grid) -> Field:
    coords = _coords(grid)
    if isinstance(profile, Gaussian):
        if not profile.width > 0:
            raise ValueError("width must be positive")
        r2 = sum(c**2 for c in coords)
        u = Field(grid, np.exp(-r2 / (2 * profile.width**2)))
        if profile.amplitude == "unit-mass":
            return u.with_values(u.values / l2_norm(u))
        return u.with_values(float(profile.amplitude) * u.values)
    if isinstance(profile, Ring):
        if grid.dim < 2:
            raise ValueError("ring requires dim >= 2")
        if not (profile.radius > 0 and profile.width > 0):
            raise ValueError("radius and width must be positive")
        r = _radius(grid)
        return Field(grid, profile.amplitude * np.exp(-((r - profile.radius) ** 2) / (2 * profile.width**2)))
    if isinstance(profile, PlaneWave):
        k = tuple(profile.k) if isinstance(profile.k, (tuple, list)) else (profile.k,)
        if len(k) != grid.dim:
            raise ValueError("plane wave needs one wavenumber per axis")
        phase = np.zeros(grid.shape)
        for ki, c, L, M in zip(k, coords, grid.extent, grid.points):
            index = ki * L / (2 * np.pi)
            if abs(index - round(index)) > 1e-9 or not -M // 2 <= round(index) < M // 2:
                raise ValueError(f"wavenumber {ki} is not on the frequency lattice")
            phase = phase + ki * c
        return Field(grid, profile.amplitude * np.exp(1j * phase))
    raise TypeError(f"unknown profile {profile!r}")


# ---------------------------------------------------------------------------
# scaling


def scaling_exponent(N: int, b: float, alpha: float, s: float) -> float:
    """Exponent s - s_c in ||u_delta||_{H^s} = delta^(s - s_c) ||u||_{H^s}."""
    return s - (N / 2 - (2 - b) / alpha)


def _interp_matrix(x: np.ndarray, L: float, M: int, delta: float) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant at delta*x; zero where delta*x leaves the box."""
    k = 2 * np.pi * sfft.fftfreq(M, d=L / M)
    k = np.where(np.arange(M) == M // 2, 0.0, k)
    keep = (np.arange(M) != M // 2).astype(float)
    y = delta * x
    # the grid starts at -L/2, so node j sits at phase offset k*(x_j + L/2)
    mat = np.exp(1j * np.outer(y + L / 2, k)) * keep / M
    mat[np.abs(y) >= L / 2] = 0.0
    return mat


def rescale(u0: Field, delta: float, spec: PotentialSpec, tol: float = 1e-10) -> Field:
    """x -> delta^((2-b)/alpha) u0(delta x), by spectral interpolation.

    Raises "box too small" when more than ``tol`` of the mass of u0 lies where
    the rescaled field would leave the box.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    grid = u0.grid
    if delta < 1:
        inside = np.ones(grid.shape, dtype=bool)
        for c, L in zip(_coords(grid), grid.extent):
            inside &= np.abs(c) < delta * L / 2
        total = mass(u0)
        lost = float(np.sum(np.abs(u0.values[~inside]) ** 2) * grid.cell_volume)
        if total > 0 and lost / total > tol:
            raise SolverError(f"box too small: {lost / total:.2e} of the mass leaves the box")
    vals = _fft(u0.values)
    for axis, (x, L, M) in enumerate(zip(grid.axes(), grid.extent, grid.points)):
        vals = np.tensordot(_interp_matrix(x, L, M, delta), vals, axes=([1], [axis]))
        vals = np.moveaxis(vals, 0, axis)
    return u0.with_values(delta ** ((2 - spec.b) / spec.alpha) * vals)


@dataclass(frozen=True)
class ScalingRow:
    delta: float
    s: float
    measured: float
    predicted: float

    @property
    def rel_error(self) -> float:
        return abs(self.measured - self.predicted) / abs(self.predicted)


def scaling_table(u0: Field, spec: PotentialSpec, deltas: Sequence[float], s_list: Sequence[float]) -> list[ScalingRow]:
    """Measured ||u_delta||/||u|| in homogeneous H^s against delta^(s - s_c)."""
    N = u0.grid.dim
    rows = []
    for delta in deltas:
        ud = rescale(u0, delta, spec)
        for s in s_list:
            avg = N == 1
            ratio = sobolev_norm(ud, s, cell_average=avg) / sobolev_norm(u0, s, cell_average=avg)
            rows.append(ScalingRow(delta, s, ratio, delta ** scaling_exponent(N, spec.b, spec.alpha, s)))
    return rows


# ---------------------------------------------------------------------------
# Strichartz norms and the Duhamel iteration


def _as_float_pair(pair) -> tuple[float, float]:
    if isinstance(pair, Pair):
        return float(pair.q), float(pair.r)
    q, r = pair
    return float(q), float(r)


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    if len(times) == 1:
        return np.zeros(1)
    dt = np.diff(times)
    w = np.zeros(len(times))
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def strichartz_norm(trajectory: Sequence[tuple[float, Field]], pair) -> float:
    """Discrete L^q_t L^r_x norm: trapezoid in time, grid quadrature in space."""
    if not trajectory:
        raise ValueError("empty trajectory")
    times = np.array([t for t, _ in trajectory], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be increasing")
    q, r = _as_float_pair(pair)
    inner = np.array([lr_norm(u, r) for _, u in trajectory])
    if math.isinf(q):
        return float(np.max(inner))
    return float(np.sum(_trapezoid_weights(times) * inner**q) ** (1 / q))


def _mixed_norm(values: np.ndarray, times: np.ndarray, grid: Grid, q: float, r: float) -> float:
    absval = np.abs(values.reshape(len(times), -1))
    if r == 2:
        inner = np.sqrt(np.sum(absval**2, axis=1) * grid.cell_volume)
    elif math.isinf(r):
        inner = np.max(absval, axis=1)
    else:
        inner = (np.sum(absval**r, axis=1) * grid.cell_volume) ** (1 / r)
    if math.isinf(q):
        return float(np.max(inner))
    return float(np.sum(_trapezoid_weights(times) * inner**q) ** (1 / q))


NO_CONTRACTION = "no contraction at this T"
ROUNDOFF_FLOOR = 1e-12  # distances below this share of ||u^(0)|| count as converged


@dataclass
class PicardResult:
    distances: list[float]
    status: str
    T: float
    pairs: list[tuple[float, float]]
    floor: float = 0.0

    @property
    def ratios(self) -> list[float]:
        """d_(k+1)/d_k; zero once d_k has reached the roundoff floor."""
        out = []
        for a, b in zip(self.distances, self.distances[1:]):
            out.append(b / a if a > self.floor else 0.0)
        return out

    @property
    def max_ratio(self) -> float:
        if self.status == NO_CONTRACTION and not all(map(math.isfinite, self.distances)):
            return math.inf
        return max(self.ratios, default=0.0)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "status": self.status,
            "distances": self.distances,
            "ratios": self.ratios,
            "max_ratio": self.max_ratio,
            "pairs": [[_pair_text(q), _pair_text(r)] for q, r in self.pairs],
        }


def _pair_text(x: float) -> str:
    return "inf" if math.isinf(x) else repr(x)


DEFAULT_PICARD_PAIRS = (Pair(INF, 2), Pair(8, 4))


def picard_iterate(
    u0: Field,
    T: float,
    n_time: int,
    n_iter: int,
    spec: PotentialSpec,
    norm_pairs: Sequence = DEFAULT_PICARD_PAIRS,
) -> PicardResult:
    """Iterate the Duhamel map u -> U(t)u0 + i lam int_0^t U(t-t') w|u|^alpha u dt'.

    The time integral is a cumulative trapezoid on ``n_time`` uniform nodes,
    taken in the interaction picture so each term is propagated exactly.
    Returns d_k = max over pairs of the discrete mixed norm of u^(k+1) - u^(k).
    The status is NO_CONTRACTION when some ratio d_(k+1)/d_k reaches 1 or the
    iterates stop being finite.
    """
    if not T > 0 or n_time < 8 or n_iter < 2:
        raise ValueError("need T > 0, n_time >= 8, n_iter >= 2")
    grid = u0.grid
    pairs = [_as_float_pair(p) for p in norm_pairs]
    times = np.linspace(0.0, T, n_time)
    axes = tuple(range(1, grid.dim + 1))
    phases = np.exp(-1j * np.multiply.outer(times, _xi2(grid)))
    u0_hat = _fft(u0.values)
    w = potential_weights(grid, spec)

    def spatial(u_hat_t: np.ndarray) -> np.ndarray:
        return sfft.ifftn(u_hat_t, axes=axes, workers=_workers())

    def distance(diff: np.ndarray) -> float:
        return max(_mixed_norm(diff, times, grid, q, r) for q, r in pairs)

    current = spatial(phases * u0_hat)
    scale = distance(current)
    distances: list[float] = []
    status = "contraction"
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_iter):
            nonlin = w * np.abs(current) ** spec.alpha * current
            integrand = np.conj(phases) * sfft.fftn(nonlin, axes=axes, workers=_workers())
            duhamel = cumulative_trapezoid(integrand, times, axis=0, initial=0)
            nxt = spatial(phases * (u0_hat + 1j * spec.lambda_sign * duhamel))
            d = distance(nxt - current) if np.all(np.isfinite(nxt)) else math.inf
            distances.append(d)
            if not math.isfinite(d):
                status = NO_CONTRACTION
                break
            current = nxt
    result = PicardResult(distances, status, T, pairs, floor=ROUNDOFF_FLOOR * scale)
    if result.max_ratio >= 1:
        result.status = NO_CONTRACTION
    return result


@dataclass
class ContractionExhibit:
    c: float
    probe: PicardResult
    bound: "TimeBound"
    run: PicardResult
    scaled: Optional[PicardResult]
    t_scale: float


def calibrate_constant(rho: float, norm_u0: float, probe_T: float, theta1, theta2, alpha: float) -> float:
    """c such that 2 c a^alpha (T^theta1 + T^theta2) equals the measured ratio at
    the probe time, with the ball radius a = 2 c ||u0|| tied to c."""
    t1, t2 = float(theta1), float(theta2)
    lhs = rho / (2 * (2 * norm_u0) ** alpha * (probe_T**t1 + probe_T**t2))
    return lhs ** (1 / (1 + alpha))


def contraction_exhibit(
    u0: Field,
    spec: PotentialSpec,
    theta1,
    theta2,
    n_time: int = 64,
    n_iter: int = 6,
    t_scale: float = 100.0,
    probe_start: float = 1e-3,
) -> ContractionExhibit:
    """Calibrate c on a probe run, choose T by contraction_time, then run at T and t_scale*T.

    The probe time doubles from ``probe_start`` until the measured ratio is at
    least 1/2. Calibrating there makes the flat T^theta model an upper bound
    for the faster-growing measured ratio on (0, probe time].
    """
    from .lemma_catalog import contraction_time

    norm = l2_norm(u0)
    if norm == 0:
        raise ValueError("zero data needs no calibration")
    probe_T = probe_start
    for _ in range(60):
        probe = picard_iterate(u0, probe_T, n_time, n_iter, spec)
        if probe.max_ratio >= 0.5:
            break
        probe_T *= 2
    else:
        raise SolverError("probe never reached ratio 1/2; contraction holds at every probed T")
    rho = min(probe.max_ratio, 1.0)
    c = calibrate_constant(rho, norm, probe_T, theta1, theta2, spec.alpha)
    bound = contraction_time(2 * c * norm, theta1, theta2, c, _exact_alpha(spec.alpha))
    run = picard_iterate(u0, bound.T, n_time, n_iter, spec)
    scaled = picard_iterate(u0, t_scale * bound.T, n_time, n_iter, spec) if t_scale != 1 else None
    return ContractionExhibit(c, probe, bound, run, scaled, t_scale)


def _exact_alpha(alpha: float):
    from fractions import Fraction

    return Fraction(alpha).limit_denominator(10**6)


# ---------------------------------------------------------------------------
# binary output


def write_binary(path: Union[str, Path], snapshots: Sequence[tuple[float, Field]], meta: Optional[dict] = None) -> Path:
    """Little-endian record: u64 dim, u64 points per axis, f64 extent per axis,
    then interleaved re/im f64 per node for each snapshot. A JSON sidecar
    with suffix .json describes the layout and the snapshot times."""
    if not snapshots:
        raise ValueError("nothing to write")
    path = Path(path)
    grid = snapshots[0][1].grid
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", grid.dim))
        fh.write(struct.pack(f"<{grid.dim}Q", *grid.points))
        fh.write(struct.pack(f"<{grid.dim}d", *grid.extent))
        for _, u in snapshots:
            fh.write(np.ascontiguousarray(u.values, dtype="<c16").tobytes())
    sidecar = {
        "format": "inls-lab trajectory",
        "byte_order": "little",
        "header": ["u64 dim", "u64 points[dim]", "f64 extent[dim]"],
        "record": "complex128 as interleaved (re, im) f64, C order, one record per snapshot",
        "dim": grid.dim,
        "points": list(grid.points),
        "extent": list(grid.extent),
        "times": [float(t) for t, _ in snapshots],
        **(meta or {}),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))
    return path


def read_binary(path: Union[str, Path]) -> list[Field]:
    data = Path(path).read_bytes()
    (dim,) = struct.unpack_from("<Q", data, 0)
    offset = 8
    points = struct.unpack_from(f"<{dim}Q", data, offset)
    offset += 8 * dim
    extent = struct.unpack_from(f"<{dim}d", data, offset)
    offset += 8 * dim
    grid = make_grid(dim, tuple(extent), tuple(points))
    body = np.frombuffer(data, dtype="<c16", offset=offset)
    if body.size % grid.size:
        raise ValueError("truncated trajectory file")
    return [Field(grid, chunk.reshape(grid.shape)) for chunk in body.reshape(-1, grid.size)]
