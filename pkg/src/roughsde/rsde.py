"""Forward schemes for rough SDEs and linear rough SDEs.

Nonlinear equation ``dX = b(X) dt + sigma(X) dB + (beta(X), Dbeta(X) beta(X)) dZ``
is advanced by the one-step Davie scheme

    X_{i+1} = X_i + b h + sigma dB_i + beta dZ_i + sum_{jk} Dbeta_j[beta_k] A_i[k, j],

and the linear equation ``dY = dF + G Y dt + S Y dB + (f, f') Y dZ`` by

    Y_{i+1} = Y_i + dF_i + G Y h + S^k Y dB^k + f^j Y dZ^j
              + (f'^{jk} Y + f^j f^k Y + f^j F'^k) A_i[k, j].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, SolverDiverged
from .fields import VectorFieldSet
from .grid import SampledPath, TimeGrid, smooth_formula, weighted_process_norm
from .roughpath import RoughPath

DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class SolutionPath:
    grid: TimeGrid
    X: np.ndarray
    gubinelli: np.ndarray
    fingerprint: Dict[str, object] = field(default_factory=dict)

    def to_csv(self, filename) -> None:
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{j + 1}" for j in range(self.X.shape[1])])
            for t, row in zip(self.grid.nodes, self.X):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    @property
    def path(self) -> SampledPath:
        return SampledPath(self.grid, self.X)


def _check_drivers(vf, B, Z):
    if B.grid != Z.grid:
        raise InvalidArgument("B and Z must share the time grid")
    if B.dim != vf.m:
        raise InvalidArgument(f"B has {B.dim} coordinates but sigma expects m = {vf.m}")
    if Z.dim != vf.n:
        raise InvalidArgument(f"Z has {Z.dim} coordinates but beta expects n = {vf.n}")


def davie_kernel(vf: VectorFieldSet, x0, dB, h, dZ, area, guard=DIVERGENCE_GUARD,
                 raise_on_divergence=True):
    """Run the one-step scheme for a batch of Brownian increments.

    ``x0`` is ``(d,)`` or ``(batch, d)``; ``dB`` is ``(batch, N, m)``; ``dZ``
    ``(N, n)`` and ``area`` ``(N, n, n)`` are shared, or carry a leading batch
    axis to give every row its own driver. Returns ``(batch, N+1, d)``.
    Diverged rows are set to NaN from the failing step on when
    ``raise_on_divergence`` is false.
    """
    dB = np.asarray(dB, dtype=float)
    batch, N = dB.shape[:2]
    dZ, area = np.asarray(dZ, dtype=float), np.asarray(area, dtype=float)
    if dZ.ndim == 3:
        # per-row drivers: step index moves to the front
        dZ, area = np.moveaxis(dZ, 1, 0), np.moveaxis(area, 1, 0)
    x = np.broadcast_to(np.asarray(x0, dtype=float), (batch, vf.d)).copy()
    out = np.empty((batch, N + 1, vf.d))
    out[:, 0] = x
    alive = np.ones(batch, dtype=bool)
    for i in range(N):
        sig = vf.sigma(x)
        bet = vf.beta(x)
        dbet = vf.Dbeta(x)
        x = (x + vf.b(x) * h + np.einsum("...ik,...k->...i", sig, dB[:, i])
             + np.einsum("...ik,...k->...i", bet, dZ[i])
             + np.einsum("...ijl,...lk,...kj->...i", dbet, bet, area[i]))
        bad = ~np.all(np.isfinite(x), axis=1) | (np.max(np.abs(x), axis=1) > guard)
        if np.any(bad & alive):
            if raise_on_divergence:
                raise SolverDiverged(i + 1)
            alive &= ~bad
            x[~alive] = 0.0
        out[:, i + 1] = x
        if not raise_on_divergence:
            out[~alive, i + 1] = np.nan
    return out


def solve_rsde(vf: VectorFieldSet, x0, B: SampledPath, Z: RoughPath,
               guard: float = DIVERGENCE_GUARD) -> SolutionPath:
    """Davie one-step scheme on the common grid of ``B`` and ``Z``."""
    _check_drivers(vf, B, Z)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (vf.d,):
        raise InvalidArgument(f"x0 must have shape ({vf.d},), got {x0.shape}")
    X = davie_kernel(vf, x0, B.increments[None], B.grid.h, Z.increments, Z.step_area, guard)[0]
    X[0] = x0
    return SolutionPath(B.grid, X, vf.beta(X),
                        {"B_seed": B.seed, "Z_hash": Z.fingerprint()})


def solve_sde_reference(vf: VectorFieldSet, x0, B: SampledPath, Z: SampledPath,
                        zdot: Optional[Callable] = None) -> SolutionPath:
    """Euler–Maruyama for ``dX = (b(X) + beta(X) Zdot_t) dt + sigma(X) dB``.

    ``zdot(t)`` returns ``(len(t), n)``. When omitted it comes from the
    generating formula of ``Z`` if known, else from forward differences.
    """
    if isinstance(Z, RoughPath):
        Z = Z.base
    if B.grid != Z.grid:
        raise InvalidArgument("B and Z must share the time grid")
    if zdot is None and Z.source and Z.source.startswith("smooth:"):
        zdot = smooth_formula(Z.source.split(":", 1)[1], Z.dim)[1]
    t = B.grid.nodes[:-1]
    rate = zdot(t) if zdot is not None else Z.increments / B.grid.h
    h = B.grid.h
    x = np.asarray(x0, dtype=float).copy()
    X = np.empty((B.grid.steps + 1, vf.d))
    X[0] = x
    dB = B.increments
    for i in range(B.grid.steps):
        x = x + (vf.b(x) + vf.beta(x) @ rate[i]) * h + vf.sigma(x) @ dB[i]
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_GUARD:
            raise SolverDiverged(i + 1)
        X[i + 1] = x
    return SolutionPath(B.grid, X, vf.beta(X), {"B_seed": B.seed, "reference": "euler-maruyama"})


def ito_integral_path(vf: VectorFieldSet, sol: SolutionPath, B: SampledPath) -> np.ndarray:
    """Left-point sums ``sum_{r < t} sigma(X_r) dB_r`` at every node."""
    inc = np.einsum("tik,tk->ti", vf.sigma(sol.X[:-1]), B.increments)
    return np.vstack([np.zeros((1, vf.d)), np.cumsum(inc, axis=0)])


# ---------------------------------------------------------------------------
# linear equations


@dataclass
class LinearCoefficientPaths:
    """Coefficients of a linear RSDE on ``W = R^w`` sampled at every grid node.

    Shapes: ``G (N+1, w, w)``, ``S (N+1, m, w, w)``, ``f (N+1, n, w, w)``,
    ``fprime (N+1, n, n, w, w)`` with ``fprime[:, j, k]`` the derivative of
    ``f^j`` in direction ``k``, ``F (N+1, w)``, ``Fprime (N+1, w, n)``.
    """

    G: np.ndarray
    S: np.ndarray
    f: np.ndarray
    fprime: np.ndarray
    F: Optional[np.ndarray] = None
    Fprime: Optional[np.ndarray] = None

    def __post_init__(self):
        npts, w = self.G.shape[0], self.G.shape[1]
        if self.F is None:
            self.F = np.zeros((npts, w))
        if self.Fprime is None:
            self.Fprime = np.zeros((npts, w, self.f.shape[1]))
        shapes = {"S": self.S, "f": self.f, "fprime": self.fprime,
                  "F": self.F, "Fprime": self.Fprime}
        for name, a in shapes.items():
            if a.shape[0] != npts:
                raise InvalidArgument(f"{name} is not aligned with the grid")
        arrays = (self.G, self.S, self.f, self.fprime, self.F, self.Fprime)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidArgument("linear coefficients must be finite")

    @property
    def width(self) -> int:
        return self.G.shape[1]

    @classmethod
    def zeros(cls, steps: int, w: int, m: int, n: int):
        return cls(np.zeros((steps + 1, w, w)), np.zeros((steps + 1, m, w, w)),
                   np.zeros((steps + 1, n, w, w)), np.zeros((steps + 1, n, n, w, w)))

    def step_maps(self, B: SampledPath, Z: RoughPath, start: int = 0):
        """Per-step affine maps ``Y -> M_i Y + c_i`` of the one-step scheme."""
        h = B.grid.h
        sl = slice(start, B.grid.steps)
        dB = B.increments[sl]
        dZ = Z.increments[sl]
        A = Z.step_area[sl]
        G, S, f, fp = self.G[sl], self.S[sl], self.f[sl], self.fprime[sl]
        w = self.width
        M = np.eye(w) + G * h
        M = M + np.einsum("tkab,tk->tab", S, dB) + np.einsum("tjab,tj->tab", f, dZ)
        ff = np.einsum("tjac,tkcb->tjkab", f, f)
        M = M + np.einsum("tjkab,tkj->tab", fp + ff, A)
        dF = np.diff(self.F, axis=0)[sl]
        c = dF + np.einsum("tjab,tbk,tkj->ta", f, self.Fprime[sl], A)
        return M, c


@dataclass(frozen=True)
class LinearSolutionPath:
    grid: TimeGrid
    Y: np.ndarray
    start: int = 0
    natural: Optional[np.ndarray] = None


def _check_linear(coeffs, B, Z):
    if B.grid != Z.grid:
        raise InvalidArgument("B and Z must share the time grid")
    if coeffs.G.shape[0] != B.grid.steps + 1:
        raise InvalidArgument("coefficients are not aligned with the grid")
    if coeffs.S.shape[1] != B.dim or coeffs.f.shape[1] != Z.dim:
        raise InvalidArgument("coefficient and driver dimensions disagree")


def solve_linear_rsde(coeffs: LinearCoefficientPaths, xi, B: SampledPath, Z: RoughPath,
                      start: int = 0) -> LinearSolutionPath:
    """One-step Davie scheme for a linear RSDE started from ``xi`` at node ``start``.

    Entries of ``Y`` before ``start`` are NaN.
    """
    _check_linear(coeffs, B, Z)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != (coeffs.width,):
        raise InvalidArgument(f"xi must have {coeffs.width} entries, got {xi.size}")
    M, c = coeffs.step_maps(B, Z, start)
    N = B.grid.steps
    Y = np.full((N + 1, coeffs.width), np.nan)
    y = xi.copy()
    Y[start] = y
    for i in range(N - start):
        y = M[i] @ y + c[i]
        if not np.all(np.isfinite(y)) or np.max(np.abs(y), initial=0.0) > DIVERGENCE_GUARD:
            raise SolverDiverged(start + i + 1)
        Y[start + i + 1] = y
    return LinearSolutionPath(B.grid, Y, start, _linear_natural(coeffs, Y, B, Z, start))


def _linear_natural(coeffs, Y, B, Z, start):
    """``|Y_{i,i+2} - one-step expansion over [t_i, t_{i+2}]|`` for every pair of steps."""
    N = B.grid.steps
    if N - start < 2:
        return np.zeros(0)
    idx = np.arange(start, N - 1)
    h = B.grid.h
    y = Y[idx]
    dB = B.values[idx + 2] - B.values[idx]
    dZ, area = Z.lagged(2)
    dZ, area = dZ[idx], area[idx]
    G, S, f, fp = coeffs.G[idx], coeffs.S[idx], coeffs.f[idx], coeffs.fprime[idx]
    fy = np.einsum("tjab,tb->tja", f, y)
    pred = (coeffs.F[idx + 2] - coeffs.F[idx] + np.einsum("tab,tb->ta", G, y) * 2 * h
            + np.einsum("tkab,tb,tk->ta", S, y, dB) + np.einsum("tja,tj->ta", fy, dZ)
            + np.einsum("tjkab,tb,tkj->ta", fp, y, area)
            + np.einsum("tjab,tkb,tkj->ta", f, fy, area)
            + np.einsum("tjab,tbk,tkj->ta", f, coeffs.Fprime[idx], area))
    return np.linalg.norm(Y[idx + 2] - y - pred, axis=1)


@dataclass
class PicardResult:
    solution: LinearSolutionPath
    increment_norms: List[float]
    iterations: int
    converged_at: Optional[int]

    @property
    def ratios(self) -> List[float]:
        r = self.increment_norms
        return [r[i + 1] / r[i] for i in range(len(r) - 1) if r[i] > 0]


def picard_solve_linear(coeffs: LinearCoefficientPaths, xi, B: SampledPath, Z: RoughPath,
                        iterations: int, lam: Optional[float] = None, p: float = 2.0,
                        tol: Optional[float] = None) -> PicardResult:
    """Discrete Picard iteration ``Y^{n+1}_{i+1} = Y^{n+1}_i + A^n_i``.

    ``A^n_i`` uses ``Y^n`` everywhere except the ``f^2`` area term, which uses
    ``Y^{n-1}``; starts from ``Y^{-2} = Y^{-1} = 0``, ``Y^0 = xi + F``. Records the
    weighted norm ``max_t |Y^{n+1}_t - Y^n_t| e^{-t/lam}`` per iteration and
    stops early once it is ``<= tol``. The default ``tol`` is the roundoff
    floor, 64 machine epsilons times the weighted norm of the iterate.
    """
    if iterations < 1:
        raise InvalidArgument("iterations must be >= 1")
    _check_linear(coeffs, B, Z)
    T = B.grid.horizon
    lam = T / 8 if lam is None else lam
    xi = np.asarray(xi, dtype=float).reshape(-1)
    h = B.grid.h
    dB, dZ, A = B.increments, Z.increments, Z.step_area
    G, S, f, fp = coeffs.G[:-1], coeffs.S[:-1], coeffs.f[:-1], coeffs.fprime[:-1]
    dF = np.diff(coeffs.F, axis=0)
    forcing = dF + np.einsum("tjab,tbk,tkj->ta", f, coeffs.Fprime[:-1], A)
    prev = np.zeros_like(coeffs.F)
    cur = xi + coeffs.F
    norms, converged = [], None
    for n in range(iterations):
        yn, ym = cur[:-1], prev[:-1]
        fy = np.einsum("tjab,tb->tja", f, ym)
        incr = (forcing + np.einsum("tab,tb->ta", G, yn) * h
                + np.einsum("tkab,tb,tk->ta", S, yn, dB)
                + np.einsum("tjab,tb,tj->ta", f, yn, dZ)
                + np.einsum("tjkab,tb,tkj->ta", fp, yn, A)
                + np.einsum("tjab,tkb,tkj->ta", f, fy, A))
        nxt = np.vstack([xi[None], xi + np.cumsum(incr, axis=0)])
        if not np.all(np.isfinite(nxt)):
            raise SolverDiverged(int(np.argmax(~np.all(np.isfinite(nxt), axis=1))))
        norms.append(weighted_process_norm(nxt - cur, p, lam, horizon=T))
        prev, cur = cur, nxt
        floor = 64 * np.finfo(float).eps * weighted_process_norm(cur, p, lam, horizon=T)
        if norms[-1] <= (floor if tol is None else tol):
            converged = n + 1
            break
    return PicardResult(LinearSolutionPath(B.grid, cur), norms, len(norms), converged)


# ---------------------------------------------------------------------------
# Davie residuals


@dataclass
class ResidualTable:
    strides: np.ndarray
    dt: np.ndarray
    lp_residual: np.ndarray
    slope: float

    def to_csv(self, filename) -> None:
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stride", "dt", "lp_residual"])
            for k, dt, r in zip(self.strides, self.dt, self.lp_residual):
                w.writerow([int(k), repr(float(dt)), repr(float(r))])


def davie_residual_scan(sol: SolutionPath, vf: VectorFieldSet, B: SampledPath, Z: RoughPath,
                        strides: Sequence[int] = (2, 4, 8, 16, 32, 64), p: float = 2.0,
                        integrals: str = "frozen") -> ResidualTable:
    """Empirical ``L^p`` size of the Davie remainder over intervals of each stride.

    The remainder is ``dX - int b - int sigma dB - beta(X_s) dZ - Dbeta beta(X_s) ZZ``.
    With ``integrals="frozen"`` the drift and Ito integrals use coefficients
    frozen at ``s``; with ``"riemann"`` they are the grid's left-point sums.
    The ``L^p`` mean runs over all start nodes ``s``. ``slope`` is the
    least-squares slope of log residual against log interval length.
    """
    if integrals not in ("frozen", "riemann"):
        raise InvalidArgument(f"integrals must be 'frozen' or 'riemann', got {integrals!r}")
    X, h = sol.X, sol.grid.h
    strides = np.array([k for k in strides if 0 < k <= sol.grid.steps], dtype=int)
    if integrals == "riemann":
        drift = np.vstack([np.zeros((1, vf.d)), np.cumsum(vf.b(X[:-1]) * h, axis=0)])
        ito = ito_integral_path(vf, sol, B)
    res = []
    for k in strides:
        xs = X[:-k]
        dZ, area = Z.lagged(k)
        rem = (X[k:] - xs - np.einsum("tij,tj->ti", vf.beta(xs), dZ)
               - np.einsum("tijl,tlk,tkj->ti", vf.Dbeta(xs), vf.beta(xs), area))
        if integrals == "frozen":
            rem = rem - vf.b(xs) * (k * h) - np.einsum("tik,tk->ti", vf.sigma(xs),
                                                        B.values[k:] - B.values[:-k])
        else:
            rem = rem - (drift[k:] - drift[:-k]) - (ito[k:] - ito[:-k])
        res.append(np.mean(np.linalg.norm(rem, axis=1) ** p) ** (1 / p))
    res = np.array(res)
    dt = strides * h
    ok = res > 0
    slope = float(np.polyfit(np.log(dt[ok]), np.log(res[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return ResidualTable(strides, dt, res, slope)
