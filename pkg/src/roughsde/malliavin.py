"""Jacobian flows, Malliavin derivatives and Malliavin matrices along a solution.

``J`` solves the linearised equation of the one-step scheme, so ``J_N`` is the
exact derivative of the discrete terminal state in ``x0``. ``I`` solves its own
equation (right-multiplication form with the Ito drift correction) and only
approximates ``J^{-1}``; every routine that needs ``I`` accepts
``inverse="equation"`` (the default) or ``inverse="exact"`` (per-node matrix
inversion of ``J``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, SolverDiverged
from .fields import VectorFieldSet
from .grid import SampledPath
from .rsde import DIVERGENCE_GUARD, LinearCoefficientPaths, SolutionPath, solve_rsde
from .roughpath import RoughPath


@dataclass(frozen=True)
class FlowPair:
    J: np.ndarray
    I: np.ndarray

    @property
    def inverse_defect(self) -> float:
        d = self.J.shape[1]
        return float(np.max(np.abs(self.I @ self.J - np.eye(d))))

    def J_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.J)

    def inverse(self, kind: str = "equation") -> np.ndarray:
        if kind == "equation":
            return self.I
        if kind == "exact":
            return self.J_inverse()
        raise InvalidArgument(f"inverse must be 'equation' or 'exact', got {kind!r}")


def jacobian_coefficients(vf: VectorFieldSet, X: np.ndarray) -> LinearCoefficientPaths:
    """Coefficients ``G = Db, S = Dsigma, f = Dbeta, f' = D^2 beta[beta]`` along ``X``."""
    Dsig = np.moveaxis(vf.Dsigma(X), 2, 1)  # (t, m, d, d)
    Dbet = np.moveaxis(vf.Dbeta(X), 2, 1)  # (t, n, d, d)
    D2 = vf.D2beta(X)  # (t, d, n, d, d)
    fprime = np.einsum("tajlb,tlk->tjkab", D2, vf.beta(X))
    return LinearCoefficientPaths(vf.Db(X), Dsig, Dbet, fprime)


def _propagate(M, start, guard=DIVERGENCE_GUARD):
    N = M.shape[0]
    out = np.empty((N + 1,) + start.shape)
    y = start.copy()
    out[0] = y
    for i in range(N):
        y = M[i] @ y
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > guard:
            raise SolverDiverged(i + 1)
        out[i + 1] = y
    return out


def solve_flows(vf: VectorFieldSet, sol: SolutionPath, B: SampledPath, Z: RoughPath) -> FlowPair:
    """Advance ``J`` and ``I`` with the linear one-step scheme along ``sol``."""
    if sol.grid != B.grid or sol.grid != Z.grid:
        raise InvalidArgument("solution and drivers must share the time grid")
    X = sol.X
    d = vf.d
    co = jacobian_coefficients(vf, X)
    M, _ = co.step_maps(B, Z)
    J = _propagate(M, np.eye(d))

    # I^T solves a left-multiplication equation with transposed, negated coefficients
    ito = np.einsum("tkab,tkbc->tac", co.S, co.S)
    tr = lambda a: np.swapaxes(a, -1, -2)
    inv_co = LinearCoefficientPaths(tr(ito - co.G), -tr(co.S), -tr(co.f), -tr(co.fprime))
    Mi, _ = inv_co.step_maps(B, Z)
    I = tr(_propagate(Mi, np.eye(d)))
    return FlowPair(J, I)


def _check_nodes(theta, t, N):
    if not 0 <= t <= N:
        raise InvalidArgument(f"t-index must lie in [0, {N}], got {t}")
    theta = np.atleast_1d(np.asarray(theta, dtype=int))
    if np.any(theta < 0) or np.any(theta > t):
        raise InvalidArgument(f"theta-index must lie in [0, t = {t}]")
    return theta


def malliavin_derivative(flows: FlowPair, vf: VectorFieldSet, sol: SolutionPath, theta,
                         t: Optional[int] = None, inverse: str = "equation") -> np.ndarray:
    """``D_theta X_t = J_t I_theta sigma(X_theta)`` for one or several theta nodes.

    Returns ``(d, m)`` for a scalar ``theta`` and ``(len(theta), d, m)`` otherwise.
    """
    N = sol.grid.steps
    t = N if t is None else int(t)
    scalar = np.ndim(theta) == 0
    th = _check_nodes(theta, t, N)
    Iinv = flows.inverse(inverse)[th]
    out = flows.J[t] @ Iinv @ vf.sigma(sol.X[th])
    return out[0] if scalar else out


def malliavin_derivative_direct(vf: VectorFieldSet, sol: SolutionPath, B: SampledPath,
                                Z: RoughPath, theta: int, t: Optional[int] = None) -> np.ndarray:
    """Solve the linear equation for ``Y^theta`` from ``theta`` with ``Y_theta = sigma(X_theta)``."""
    N = sol.grid.steps
    t = N if t is None else int(t)
    theta = int(_check_nodes(theta, t, N)[0])
    co = jacobian_coefficients(vf, sol.X)
    M, _ = co.step_maps(B, Z, start=theta)
    Y = _propagate(M[: t - theta], vf.sigma(sol.X[theta]))
    return Y[-1]


def reduced_malliavin_matrix(flows: FlowPair, vf: VectorFieldSet, sol: SolutionPath,
                             t: Optional[int] = None, inverse: str = "equation") -> np.ndarray:
    """Left-endpoint sum of ``I_s sigma sigma^T I_s^T h`` over nodes ``s < t``."""
    N = sol.grid.steps
    t = N if t is None else int(t)
    _check_nodes(0, t, N)
    K = flows.inverse(inverse)[:t] @ vf.sigma(sol.X[:t])
    C = np.einsum("tik,tjk->ij", K, K) * sol.grid.h
    return 0.5 * (C + C.T)


def malliavin_matrix(flows: FlowPair, vf: VectorFieldSet, sol: SolutionPath,
                     t: Optional[int] = None, route: str = "definition",
                     inverse: str = "equation") -> np.ndarray:
    """Full Malliavin matrix of ``X_t``.

    ``route="definition"`` sums ``D_theta X_t D_theta X_t^T h`` over ``theta < t``;
    ``route="product"`` returns ``J_t C_t J_t^T``.
    """
    N = sol.grid.steps
    t = N if t is None else int(t)
    if route == "product":
        C = reduced_malliavin_matrix(flows, vf, sol, t, inverse)
        g = flows.J[t] @ C @ flows.J[t].T
    elif route == "definition":
        if t == 0:
            return np.zeros((vf.d, vf.d))
        D = malliavin_derivative(flows, vf, sol, np.arange(t), t, inverse)
        g = np.einsum("tik,tjk->ij", D, D) * sol.grid.h
    else:
        raise InvalidArgument(f"route must be 'definition' or 'product', got {route!r}")
    return 0.5 * (g + g.T)


def _relative(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def _asymmetry(a):
    return float(np.max(np.abs(a - a.T))) if a.size else 0.0


@dataclass
class MalliavinReport:
    t_index: int
    theta_nodes: np.ndarray
    D_theta_X: np.ndarray
    C: np.ndarray
    gamma: np.ndarray
    eigenvalues: np.ndarray
    gamma_gap: float
    inputs: Dict[str, object] = field(default_factory=dict)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    def to_dict(self):
        return {
            "t_index": self.t_index,
            "theta_nodes": [int(i) for i in self.theta_nodes],
            "D_theta_X": self.D_theta_X.tolist(),
            "C_t": self.C.tolist(),
            "gamma": self.gamma.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "min_eigenvalue": self.min_eigenvalue,
            "gamma_two_route_gap": self.gamma_gap,
            "inputs": self.inputs,
        }

    def to_json(self, filename) -> None:
        with open(filename, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def malliavin_report(flows: FlowPair, vf: VectorFieldSet, sol: SolutionPath,
                     t: Optional[int] = None, theta_nodes: Optional[Sequence[int]] = None,
                     inverse: str = "equation", inputs: Optional[dict] = None) -> MalliavinReport:
    N = sol.grid.steps
    t = N if t is None else int(t)
    if theta_nodes is None:
        theta_nodes = np.unique(np.linspace(0, t, min(t + 1, 33)).astype(int))
    theta_nodes = _check_nodes(theta_nodes, t, N)
    C = reduced_malliavin_matrix(flows, vf, sol, t, inverse)
    gamma = malliavin_matrix(flows, vf, sol, t, "definition", inverse)
    gamma_prod = malliavin_matrix(flows, vf, sol, t, "product", inverse)
    for name, a in (("C_t", C), ("gamma", gamma)):
        if _asymmetry(a) > 1e-10:
            raise InvalidArgument(f"{name} is not symmetric")
    echo = dict(sol.fingerprint)
    echo.update(inputs or {})
    return MalliavinReport(t, theta_nodes, malliavin_derivative(flows, vf, sol, theta_nodes, t, inverse),
                           C, gamma, np.linalg.eigvalsh(C), _relative(gamma, gamma_prod), echo)


# ---------------------------------------------------------------------------
# Cameron-Martin directional derivative


@dataclass
class CameronMartinReport:
    eps: np.ndarray
    finite_difference: np.ndarray  # (len(eps), d)
    pairing: np.ndarray  # (d,)
    errors: np.ndarray
    successive: np.ndarray
    slope: float

    def to_dict(self):
        return {"eps": self.eps.tolist(), "finite_difference": self.finite_difference.tolist(),
                "pairing": self.pairing.tolist(), "errors": self.errors.tolist(),
                "successive_differences": self.successive.tolist(), "slope": self.slope}


def shift_brownian(B: SampledPath, hdir: SampledPath, eps: float) -> SampledPath:
    """``B + eps * int_0^t h`` with the integral as a left-point sum."""
    if hdir.grid != B.grid or hdir.dim != B.dim:
        raise InvalidArgument("direction must match the Brownian grid and dimension")
    shift = np.vstack([np.zeros((1, B.dim)), np.cumsum(hdir.values[:-1] * B.grid.h, axis=0)])
    return SampledPath(B.grid, B.values + eps * shift, seed=B.seed, source="shifted")


def cameron_martin_check(vf: VectorFieldSet, x0, B: SampledPath, Z: RoughPath,
                         hdir: SampledPath, eps_list: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
                         inverse: str = "exact") -> CameronMartinReport:
    """Compare ``(X_T(B + eps int h) - X_T(B)) / eps`` with ``sum_theta D_theta X_T h_theta dt``.

    ``errors`` are against the pairing; they keep an ``O(h)`` discretisation
    bias. ``slope`` is the log-log slope of ``|FD(eps_k) - FD(eps_{k+1})|``
    against ``eps_k``, which isolates the ``O(eps)`` behaviour.
    """
    eps = np.array(sorted(map(float, eps_list), reverse=True))
    if eps.size == 0 or np.any(eps <= 0):
        raise InvalidArgument("eps values must be positive")
    if not np.all(np.isfinite(hdir.values)):
        raise InvalidArgument("direction must be finite")
    sol = solve_rsde(vf, x0, B, Z)
    flows = solve_flows(vf, sol, B, Z)
    N = sol.grid.steps
    D = malliavin_derivative(flows, vf, sol, np.arange(N), N, inverse)
    pairing = np.einsum("tik,tk->i", D, hdir.values[:-1]) * sol.grid.h
    fd = np.array([(solve_rsde(vf, x0, shift_brownian(B, hdir, e), Z).X[-1] - sol.X[-1]) / e
                   for e in eps])
    errors = np.linalg.norm(fd - pairing, axis=1)
    succ = np.linalg.norm(np.diff(fd, axis=0), axis=1)
    ok = succ > 1e-14 * max(1.0, float(np.max(np.abs(fd))))
    if ok.sum() >= 2:
        slope = float(np.polyfit(np.log(eps[:-1][ok]), np.log(succ[ok]), 1)[0])
    else:
        slope = float("nan")
    return CameronMartinReport(eps, fd, pairing, errors, succ, slope)
