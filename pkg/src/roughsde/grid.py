"""Uniform time grids, sampled paths, path generators and empirical norms."""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import InvalidArgument, NumericFailure

MAX_FBM_STEPS = 4096
_SMOOTH_FORMULAS = ("linear", "sin", "cos", "sincos")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_i = i T / N`` of ``[0, T]``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise InvalidArgument(f"horizon must be positive, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidArgument(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def h(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.h

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.steps * factor)

    def coarsen(self, factor: int) -> "TimeGrid":
        if self.steps % factor:
            raise InvalidArgument(f"{self.steps} steps not divisible by {factor}")
        return TimeGrid(self.horizon, self.steps // factor)


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SampledPath:
    """Values of an ``R^k``-valued path at the nodes of a grid.

    ``values`` has shape ``(N + 1, k)``. ``seed`` and ``source`` are
    provenance tags carried into solution fingerprints.
    """

    grid: TimeGrid
    values: np.ndarray
    seed: Optional[int] = None
    source: Optional[str] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.steps + 1:
            raise InvalidArgument(
                f"values must have shape (N+1, k) = ({self.grid.steps + 1}, k), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("path values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def subsample(self, factor: int) -> "SampledPath":
        """Restriction to every ``factor``-th node (exact coarse-grid values)."""
        grid = self.grid.coarsen(factor)
        return SampledPath(grid, self.values[::factor], seed=self.seed, source=self.source)

    def to_csv(self, path) -> None:
        write_path_csv(self, path)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    dim: int
    seed: int = 0
    hurst: Optional[float] = None
    formula: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("brownian", "fbm", "smooth"):
            raise InvalidArgument(f"unknown noise kind {self.kind!r}")
        if self.dim < 1:
            raise InvalidArgument("noise dimension must be >= 1")
        if self.kind == "fbm":
            _check_hurst(self.hurst)
        if self.kind == "smooth" and self.formula not in _SMOOTH_FORMULAS:
            raise InvalidArgument(f"unknown smooth formula {self.formula!r}")

    def sample(self, grid: TimeGrid) -> SampledPath:
        if self.kind == "brownian":
            return generate_brownian(grid, self.dim, self.seed)
        if self.kind == "fbm":
            return generate_fbm(grid, self.dim, self.hurst, self.seed)
        return generate_smooth(grid, self.dim, self.formula)


def generate_brownian(grid: TimeGrid, dim: int, seed: int) -> SampledPath:
    """Brownian motion on ``grid`` with i.i.d. ``N(0, h)`` increments per coordinate."""
    if dim < 1:
        raise InvalidArgument(f"dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((grid.steps, dim)) * np.sqrt(grid.h)
    values = np.vstack([np.zeros((1, dim)), np.cumsum(inc, axis=0)])
    return SampledPath(grid, values, seed=seed, source="brownian")


def _check_hurst(hurst):
    if hurst is None or not (1.0 / 3.0 < hurst <= 0.5):
        raise InvalidArgument(f"hurst must lie in (1/3, 1/2], got {hurst}")


def fbm_covariance(grid: TimeGrid, hurst: float) -> np.ndarray:
    """Covariance of fBM at ``t_1..t_N`` (``t_0 = 0`` is deterministic)."""
    t = grid.nodes[1:]
    s2h = t ** (2 * hurst)
    return 0.5 * (s2h[:, None] + s2h[None, :] - np.abs(t[:, None] - t[None, :]) ** (2 * hurst))


@functools.lru_cache(maxsize=4)
def _fbm_factor(horizon, steps, hurst):
    cov = fbm_covariance(TimeGrid(horizon, steps), hurst)
    scale = np.max(np.diag(cov))
    for jitter in (0.0, 1e-13, 1e-11):
        try:
            return scipy.linalg.cholesky(cov + jitter * scale * np.eye(steps), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise NumericFailure("fBM covariance is not positive definite after jitter")


def generate_fbm(grid: TimeGrid, dim: int, hurst: float, seed: int) -> SampledPath:
    """Exact fractional Brownian motion via Cholesky of the covariance matrix.

    Coordinates are independent. Limited to ``N <= 4096`` steps.
    """
    _check_hurst(hurst)
    if dim < 1:
        raise InvalidArgument(f"dim must be >= 1, got {dim}")
    if grid.steps > MAX_FBM_STEPS:
        raise InvalidArgument(f"exact fBM limited to N <= {MAX_FBM_STEPS}, got {grid.steps}")
    factor = _fbm_factor(grid.horizon, grid.steps, float(hurst))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((grid.steps, dim))
    values = np.vstack([np.zeros((1, dim)), factor @ noise])
    return SampledPath(grid, values, seed=seed, source=f"fbm(H={hurst})")


def smooth_formula(formula: str, dim: int):
    """Return ``(value, derivative)`` callables of a deterministic smooth path."""
    if formula == "linear":
        return (lambda t: np.outer(t, np.ones(dim)), lambda t: np.ones((len(t), dim)))
    if formula == "sin":
        return (lambda t: np.outer(np.sin(t), np.ones(dim)),
                lambda t: np.outer(np.cos(t), np.ones(dim)))
    if formula == "cos":
        # shifted so the path starts at the origin
        return (lambda t: np.outer(np.cos(t) - 1.0, np.ones(dim)),
                lambda t: np.outer(-np.sin(t), np.ones(dim)))
    if formula == "sincos":
        if dim != 2:
            raise InvalidArgument("sincos formula is two-dimensional")
        return (lambda t: np.column_stack([np.sin(t), np.cos(t)]),
                lambda t: np.column_stack([np.cos(t), -np.sin(t)]))
    raise InvalidArgument(f"unknown smooth formula {formula!r}")


def generate_smooth(grid: TimeGrid, dim: int, formula: str) -> SampledPath:
    value, _ = smooth_formula(formula, dim)
    return SampledPath(grid, value(grid.nodes), source=f"smooth:{formula}")


def interpolate_path(path: SampledPath, grid: TimeGrid) -> SampledPath:
    """Piecewise-linear interpolation of ``path`` onto another grid of the same horizon."""
    if not np.isclose(grid.horizon, path.grid.horizon):
        raise InvalidArgument("grids must share the horizon")
    t = grid.nodes
    values = np.column_stack([np.interp(t, path.grid.nodes, path.values[:, j])
                              for j in range(path.dim)])
    return SampledPath(grid, values, seed=path.seed, source=path.source)


def dyadic_approximation(path: SampledPath, level: int) -> SampledPath:
    """Piecewise-linear interpolant through ``2**level`` equal pieces, sampled on ``path.grid``."""
    pieces = 2 ** level
    if path.grid.steps % pieces:
        raise InvalidArgument(f"N = {path.grid.steps} is not a multiple of 2**{level}")
    coarse = path.subsample(path.grid.steps // pieces)
    return interpolate_path(coarse, path.grid)


# ---------------------------------------------------------------------------
# empirical norms


def estimate_holder_norm(path: SampledPath, alpha: float) -> float:
    """Max over grid pairs ``s < t`` of ``|Z_t - Z_s| / |t - s|**alpha``."""
    if not 0 < alpha <= 1:
        raise InvalidArgument(f"alpha must lie in (0, 1], got {alpha}")
    v = path.values
    h = path.grid.h
    best = 0.0
    for k in range(1, path.grid.steps + 1):
        inc = np.linalg.norm(v[k:] - v[:-k], axis=1)
        best = max(best, inc.max() / (k * h) ** alpha)
    return float(best)


def _stack(ensemble) -> np.ndarray:
    """Ensemble as an array of shape ``(trials, N + 1, k)``."""
    if isinstance(ensemble, SampledPath):
        ensemble = [ensemble]
    if isinstance(ensemble, np.ndarray):
        arr = ensemble.astype(float)
    else:
        ensemble = list(ensemble)
        if not ensemble:
            raise InvalidArgument("ensemble must be non-empty")
        arr = np.stack([e.values if isinstance(e, SampledPath) else np.asarray(e, float)
                        for e in ensemble])
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.shape[0] == 0:
        raise InvalidArgument("ensemble must be non-empty")
    return arr


def _lp(samples, p):
    # samples: (trials, ..., k) -> L^p over trials of the Euclidean norm
    mag = np.linalg.norm(samples, axis=-1)
    return np.mean(mag ** p, axis=0) ** (1.0 / p)


def empirical_lp_norm(ensemble, p: float, t_index: int) -> float:
    """``(mean |X_t|^p)^(1/p)`` over the ensemble at grid node ``t_index``."""
    if p < 1:
        raise InvalidArgument(f"p must be >= 1, got {p}")
    arr = _stack(ensemble)
    return float(_lp(arr[:, t_index], p))


def weighted_process_norm(ensemble, p: float, lam: float, horizon: Optional[float] = None) -> float:
    """``max_t ||Y_t||_p / exp(t / lam)`` over the grid nodes.

    ``horizon`` defaults to the grid horizon of the ensemble members; it must be
    given when the ensemble is a bare array.
    """
    if lam <= 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    if p < 1:
        raise InvalidArgument(f"p must be >= 1, got {p}")
    arr = _stack(ensemble)
    t = _nodes_for(ensemble, arr, horizon)
    return float(np.max(_lp(arr, p) / np.exp(t / lam)))


def weighted_increment_norm(ensemble, p: float, lam: float, alpha: float,
                            horizon: Optional[float] = None) -> float:
    """``sup_{s<t, t-s<=lam} ||Y_t - Y_s||_p / (exp(t/lam) |t-s|^alpha)`` on grid pairs."""
    if lam <= 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    arr = _stack(ensemble)
    t = _nodes_for(ensemble, arr, horizon)
    h = t[1] - t[0]
    kmax = int(np.floor(lam / h * (1 + 1e-12)))
    if kmax < 1:
        raise InvalidArgument("lambda must be at least one grid step")
    best = 0.0
    for k in range(1, min(kmax, len(t) - 1) + 1):
        norms = _lp(arr[:, k:] - arr[:, :-k], p)
        best = max(best, float(np.max(norms / (np.exp(t[k:] / lam) * (k * h) ** alpha))))
    return best


def _nodes_for(ensemble, arr, horizon):
    first = ensemble if isinstance(ensemble, SampledPath) else (
        None if isinstance(ensemble, np.ndarray) else next(iter(ensemble)))
    if isinstance(first, SampledPath):
        return first.grid.nodes
    if horizon is None:
        raise InvalidArgument("horizon is required for array ensembles")
    return np.linspace(0.0, horizon, arr.shape[1])


# ---------------------------------------------------------------------------
# CSV


def write_path_csv(path: SampledPath, filename) -> None:
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{j + 1}" for j in range(path.dim)])
        for t, row in zip(path.grid.nodes, path.values):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def read_path_csv(filename) -> SampledPath:
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if header[0] != "t":
        raise InvalidArgument("first column must be 't'")
    t = body[:, 0]
    grid = TimeGrid(t[-1], len(t) - 1)
    if not np.allclose(t, grid.nodes, rtol=0, atol=1e-12 * max(1.0, grid.horizon)):
        raise InvalidArgument("non-uniform grids are not supported")
    return SampledPath(grid, body[:, 1:])
