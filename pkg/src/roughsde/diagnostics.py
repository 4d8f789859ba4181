"""Monte-Carlo ensembles and pathwise diagnostics built on the solvers.

Ensembles share one rough driver ``Z`` and draw an independent Brownian path
per trial. Trial ``i`` of base seed ``s`` uses the seed
``splitmix64(s + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)``, so an ensemble can
be extended without recomputing earlier trials.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.stats

from .errors import InvalidArgument, SolverDiverged
from .grid import generate_brownian
from .malliavin import reduced_malliavin_matrix, solve_flows
from .roughpath import RoughPath, _window
from .rsde import DIVERGENCE_GUARD, SolutionPath, davie_kernel

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """The splitmix64 output finalizer applied to ``x`` (a bijection of 64-bit words)."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(base_seed: int, index: int) -> int:
    return splitmix64(base_seed + (index + 1) * GOLDEN)


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleResult:
    trials: int
    terminal: np.ndarray
    min_eig: np.ndarray
    seeds: List[int]
    failed: List[int]
    t_index: int
    driver_seeds: Optional[List[int]] = None

    @property
    def failures(self) -> int:
        return len(self.failed)

    @property
    def successes(self) -> int:
        return self.trials - self.failures

    @property
    def samples(self) -> np.ndarray:
        ok = np.ones(self.trials, dtype=bool)
        ok[self.failed] = False
        return self.terminal[ok]

    def to_csv(self, filename) -> None:
        d = self.terminal.shape[1]
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial"] + [f"x{j + 1}" for j in range(d)] + ["min_eig"])
            for i, (x, e) in enumerate(zip(self.terminal, self.min_eig)):
                w.writerow([i] + [repr(float(v)) for v in x] + [repr(float(e))])


def _run_chunk(vf, x0, grid, Z, m, seeds, t, malliavin, guard):
    dB = np.stack([generate_brownian(grid, m, s).increments for s in seeds])
    X = davie_kernel(vf, x0, dB, grid.h, Z.increments, Z.step_area, guard,
                     raise_on_divergence=False)
    terminal = X[:, t]
    bad = ~np.all(np.isfinite(X[:, : t + 1]), axis=(1, 2))
    eig = np.full(len(seeds), np.nan)
    if malliavin:
        for r, seed in enumerate(seeds):
            if bad[r]:
                continue
            B = generate_brownian(grid, m, seed)
            sol = SolutionPath(grid, X[r], vf.beta(X[r]))
            try:
                flows = solve_flows(vf, sol, B, Z)
            except SolverDiverged:
                bad[r] = True
                continue
            eig[r] = np.linalg.eigvalsh(reduced_malliavin_matrix(flows, vf, sol, t))[0]
    return terminal, eig, bad


def run_ensemble(scenario, trials: int, base_seed: int, t: Optional[int] = None,
                 malliavin: bool = False, jobs: int = 1, chunk: int = 2048,
                 resample_driver: bool = False) -> EnsembleResult:
    """Solve ``trials`` independent copies of the scenario and collect ``X_t``.

    With ``malliavin=True`` each trial also solves its flows and records the
    smallest eigenvalue of the reduced Malliavin matrix ``C_t``. Diverged
    trials are listed in ``failed`` and carry NaN entries.

    By default every trial sees the scenario's single rough driver. With
    ``resample_driver=True`` trial ``i`` draws its own driver from seed
    ``splitmix64(trial_seed(base_seed, i))``; ``scenario.rough_path`` must
    then accept a ``seed`` argument. This matters when ``C_t`` is a function
    of ``Z`` alone, so that a shared driver makes its law a point mass.
    """
    if trials < 1:
        raise InvalidArgument(f"trials must be >= 1, got {trials}")
    vf = scenario.vector_fields()
    grid = scenario.grid
    Z = scenario.rough_path()
    x0 = np.asarray(scenario.x0, dtype=float)
    t = grid.steps if t is None else int(t)
    if not 0 <= t <= grid.steps:
        raise InvalidArgument(f"t-index must lie in [0, {grid.steps}]")
    guard = getattr(scenario, "guard", DIVERGENCE_GUARD)
    seeds = [trial_seed(base_seed, i) for i in range(trials)]
    if len(set(seeds)) != trials:
        raise InvalidArgument("derived trial seeds collide")
    zseeds = [splitmix64(s) for s in seeds] if resample_driver else None
    if resample_driver:
        parts = [[s] for s in seeds]
        drivers = {s: z for s, z in zip(seeds, zseeds)}
    else:
        parts = [seeds[i:i + chunk] for i in range(0, trials, chunk)]

    def work(part):
        Zp = scenario.rough_path(seed=drivers[part[0]]) if resample_driver else Z
        return _run_chunk(vf, x0, grid, Zp, vf.m, part, t, malliavin, guard)

    if jobs > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, parts))
    else:
        results = [work(p) for p in parts]
    terminal = np.concatenate([r[0] for r in results])
    eig = np.concatenate([r[1] for r in results])
    bad = np.concatenate([r[2] for r in results])
    return EnsembleResult(trials, terminal, eig, seeds, [int(i) for i in np.flatnonzero(bad)], t,
                          zseeds)


# ---------------------------------------------------------------------------
# density estimation


def silverman_bandwidth(samples: np.ndarray) -> np.ndarray:
    n, d = samples.shape
    std = samples.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    return std * (4.0 / (d + 2)) ** (1.0 / (d + 4)) * n ** (-1.0 / (d + 4))


@dataclass
class DensityEstimate:
    axes: List[np.ndarray]
    values: np.ndarray
    bandwidth: np.ndarray
    trials: int
    bandwidth_source: str
    samples: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def box_mass(self, lo=None, hi=None) -> float:
        """Exact integral of the estimate over a box (default: the evaluation box)."""
        lo = np.array([a[0] for a in self.axes]) if lo is None else np.asarray(lo, dtype=float)
        hi = np.array([a[-1] for a in self.axes]) if hi is None else np.asarray(hi, dtype=float)
        x = self.samples
        bw = self.bandwidth
        per_axis = np.ones(len(x))
        for j in range(self.dim):
            if bw[j] > 0:
                per_axis *= (scipy.stats.norm.cdf((hi[j] - x[:, j]) / bw[j])
                             - scipy.stats.norm.cdf((lo[j] - x[:, j]) / bw[j]))
            else:
                per_axis *= (x[:, j] >= lo[j]) & (x[:, j] <= hi[j])
        return float(per_axis.mean())

    def mass_within(self, center, radius: Optional[float] = None) -> float:
        """Mass of the axis box of half-width ``radius`` (default one bandwidth) around ``center``."""
        c = np.asarray(center, dtype=float)
        r = self.bandwidth if radius is None else np.full(self.dim, float(radius))
        return self.box_mass(c - r, c + r)

    def sup_gap(self, density) -> float:
        """``max |estimate - density|`` on the evaluation grid; ``density`` takes ``(..., d)`` points."""
        mesh = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)
        return float(np.max(np.abs(self.values - density(mesh))))

    def to_csv(self, filename) -> None:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.dim)] + ["value"])
            for idx in np.ndindex(self.values.shape):
                w.writerow([repr(float(m[idx])) for m in mesh] + [repr(float(self.values[idx]))])


def _kernel_matrix(axis, x, bw):
    if bw > 0:
        return scipy.stats.norm.pdf((axis[:, None] - x[None, :]) / bw) / bw
    # zero bandwidth: deposit each sample on its nearest node as a point mass
    K = np.zeros((len(axis), len(x)))
    cell = axis[1] - axis[0]
    K[np.abs(axis[:, None] - x[None, :]).argmin(axis=0), np.arange(len(x))] = 1.0 / cell
    return K


def kde_density(result, bandwidth: Optional[float] = None, points: int = 128) -> DensityEstimate:
    """Gaussian product-kernel estimate on ``points^d`` nodes over mean ± 4 std per axis.

    Accepts an :class:`EnsembleResult` or a raw ``(trials, d)`` array. The
    default bandwidth follows Silverman's rule per axis. A zero bandwidth
    (identical samples) degenerates to point masses.
    """
    x = result.samples if isinstance(result, EnsembleResult) else np.asarray(result, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n == 0:
        raise InvalidArgument("no successful samples to estimate from")
    if d > 2:
        raise InvalidArgument(f"density estimation supports d <= 2, got d = {d}; export samples instead")
    if bandwidth is None:
        bw, source = silverman_bandwidth(x), "silverman"
    else:
        if not bandwidth > 0:
            raise InvalidArgument("bandwidth override must be positive")
        bw, source = np.full(d, float(bandwidth)), "override"
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    half = np.where(std > 0, 4 * std, np.maximum(4 * bw, 1.0))
    axes = [np.linspace(mean[j] - half[j], mean[j] + half[j], points) for j in range(d)]
    K = [_kernel_matrix(axes[j], x[:, j], bw[j]) for j in range(d)]
    values = K[0].mean(axis=1) if d == 1 else (K[0] @ K[1].T) / n
    return DensityEstimate(axes, values, bw, n, source, x)


# ---------------------------------------------------------------------------
# eigenvalue tails


@dataclass
class TailTable:
    eps: np.ndarray
    fraction: np.ndarray
    slope: float
    trials: int

    def to_csv(self, filename) -> None:
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "fraction"])
            for e, f in zip(self.eps, self.fraction):
                w.writerow([repr(float(e)), repr(float(f))])


def eigen_tail(result: EnsembleResult, eps_list: Sequence[float]) -> TailTable:
    """Fraction of trials with ``min eig C_t <= eps``; eps sorted descending.

    ``slope`` is the log-log fit over strictly positive fractions (NaN when
    fewer than two distinct ones are available).
    """
    eig = result.min_eig[np.isfinite(result.min_eig)]
    if eig.size == 0:
        raise InvalidArgument("ensemble carries no Malliavin eigenvalues; run it with malliavin=True")
    eps = np.array(sorted(map(float, eps_list), reverse=True))
    if eps.size == 0 or np.any(eps <= 0):
        raise InvalidArgument("eps values must be positive")
    frac = np.array([np.mean(eig <= e) for e in eps])
    ok = frac > 0
    if ok.sum() >= 2 and np.ptp(frac[ok]) > 0:
        slope = float(np.polyfit(np.log(eps[ok]), np.log(frac[ok]), 1)[0])
    else:
        slope = float("nan")
    return TailTable(eps, frac, slope, int(eig.size))


# ---------------------------------------------------------------------------
# Norris-type surrogate


NORRIS_NOTE = ("heuristic pathwise surrogate: conditional expectations are replaced by "
               "single-path increments, so this is a sanity diagnostic and not a test of Norris's lemma")


@dataclass
class NorrisReport:
    theta: float
    L: float
    eps: np.ndarray
    left: np.ndarray
    right: np.ndarray
    tolerance: float
    note: str = NORRIS_NOTE

    @property
    def violations(self) -> List[float]:
        bad = self.left > self.right * (1 + self.tolerance)
        return [float(e) for e in self.eps[bad]]

    def to_dict(self):
        return {"theta": self.theta, "L": self.L, "tolerance": self.tolerance,
                "rows": [{"eps": float(e), "left": float(l), "right": float(r),
                          "violated": bool(l > r * (1 + self.tolerance))}
                         for e, l, r in zip(self.eps, self.left, self.right)],
                "violations": self.violations, "note": self.note}


def norris_inequality_check(sol: SolutionPath, Z: RoughPath, theta: float,
                            eps_list: Sequence[float], L: float,
                            tolerance: float = 1e-9, gubinelli=None) -> NorrisReport:
    """Compare ``L eps^theta max_t |X'_t|`` with ``max (|dX_{s,t}| + |dX_{s,t} - X'_s dZ_{s,t}|)``.

    The maximum runs over grid pairs with ``0 < |t - s| < eps`` in both time
    directions, the same window as the roughness scan.
    """
    if sol.grid != Z.grid:
        raise InvalidArgument("solution and rough path must share the grid")
    Xp = sol.gubinelli if gubinelli is None else np.asarray(gubinelli, dtype=float)
    X, z, h = sol.X, Z.base.values, sol.grid.h
    sup_xp = float(np.max(np.linalg.norm(Xp, ord=2, axis=(1, 2)))) if Xp.size else 0.0
    eps = np.array(sorted(map(float, eps_list)))
    left = L * eps ** theta * sup_xp
    right = np.zeros_like(eps)
    best, done = 0.0, 0
    for idx, e in enumerate(eps):
        k_max = min(_window(e, h), sol.grid.steps)
        for k in range(done + 1, k_max + 1):
            dX, dZ = X[k:] - X[:-k], z[k:] - z[:-k]
            fwd = np.linalg.norm(dX, axis=1) + np.linalg.norm(dX - np.einsum("tij,tj->ti", Xp[:-k], dZ), axis=1)
            bwd = np.linalg.norm(dX, axis=1) + np.linalg.norm(dX - np.einsum("tij,tj->ti", Xp[k:], dZ), axis=1)
            best = max(best, float(fwd.max()), float(bwd.max()))
        done = max(done, k_max)
        right[idx] = best
    return NorrisReport(float(theta), float(L), eps, left, right, tolerance)


# ---------------------------------------------------------------------------
# Gubinelli derivative uniqueness


INDISTINGUISHABLE = "indistinguishable on this driver"


@dataclass
class UniquenessReport:
    alpha: float
    strides: np.ndarray
    rms: np.ndarray  # (2, len(strides))
    exponents: np.ndarray
    keeps: np.ndarray
    slack: float

    @property
    def verdict(self) -> str:
        a, b = map(bool, self.keeps)
        if a and b:
            return f"both candidates keep the remainder exponent: {INDISTINGUISHABLE}"
        if a:
            return "candidate A keeps the remainder exponent; candidate B is rejected"
        if b:
            return "candidate B keeps the remainder exponent; candidate A is rejected"
        return "neither candidate keeps the remainder exponent"

    def to_dict(self):
        return {"alpha": self.alpha, "slack": self.slack, "strides": self.strides.tolist(),
                "rms": self.rms.tolist(), "exponents": self.exponents.tolist(),
                "keeps": [bool(k) for k in self.keeps], "verdict": self.verdict}


def _remainder_exponent(X, Xp, z, strides, h):
    rms = []
    for k in strides:
        R = X[k:] - X[:-k] - np.einsum("tij,tj->ti", Xp[:-k], z[k:] - z[:-k])
        rms.append(np.sqrt(np.mean(np.sum(R ** 2, axis=1))))
    rms = np.array(rms)
    ok = rms > 0
    if ok.sum() < 2:
        return rms, float("inf")
    return rms, float(np.polyfit(np.log(strides[ok] * h), np.log(rms[ok]), 1)[0])


def gubinelli_uniqueness_gap(sol, candidate_a, candidate_b, Z: RoughPath,
                             alpha: Optional[float] = None,
                             strides: Sequence[int] = (1, 2, 4, 8, 16, 32, 64),
                             slack: float = 0.1, subtract=None) -> UniquenessReport:
    """Regression exponent of the remainder ``dX - X'_s dZ`` for two candidate ``X'``.

    ``sol`` is a :class:`SolutionPath` or an ``(N+1, d)`` array. ``subtract``
    (same shape) is removed from the path first, e.g. the Ito integral part.
    A candidate keeps the exponent when it is at least ``2 alpha - slack``;
    an exact-zero remainder counts as an infinite exponent.
    """
    X = np.asarray(sol.X if isinstance(sol, SolutionPath) else sol, dtype=float)
    if subtract is not None:
        X = X - np.asarray(subtract, dtype=float)
    alpha = Z.alpha if alpha is None else float(alpha)
    z, h = Z.base.values, Z.grid.h
    strides = np.array([k for k in strides if 0 < k <= Z.grid.steps // 2], dtype=int)
    if strides.size < 2:
        raise InvalidArgument("need at least two usable strides")
    cands = [np.asarray(c, dtype=float) for c in (candidate_a, candidate_b)]
    for c in cands:
        if c.shape != (X.shape[0], X.shape[1], Z.dim):
            raise InvalidArgument(f"candidate must have shape {(X.shape[0], X.shape[1], Z.dim)}")
    out = [_remainder_exponent(X, c, z, strides, h) for c in cands]
    rms = np.array([o[0] for o in out])
    expo = np.array([o[1] for o in out])
    return UniquenessReport(alpha, strides, rms, expo, expo >= 2 * alpha - slack, slack)
