"""Second-level rough paths over a uniform grid.

A rough path stores only per-step data ``(dZ_i, A_i)`` with
``A_i = ZZ_{t_i, t_{i+1}}``; values over longer intervals are obtained by
folding the steps with Chen's relation

    ZZ_{s,t} = ZZ_{s,u} + ZZ_{u,t} + dZ_{s,u} (x) dZ_{u,t}.

The area tensor uses the convention ``ZZ[k, j] = int dZ^k_{s,r} dZ^j_r``.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.ndimage
import scipy.stats.qmc

from .errors import InvalidArgument
from .grid import SampledPath


@dataclass(frozen=True)
class RoughPath:
    base: SampledPath
    step_area: np.ndarray
    alpha: float = 0.5
    geometric: bool = True

    def __post_init__(self):
        a = np.array(self.step_area, dtype=float)
        n, N = self.base.dim, self.base.grid.steps
        if a.shape != (N, n, n):
            raise InvalidArgument(f"step_area must have shape {(N, n, n)}, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "step_area", a)

    @property
    def grid(self):
        return self.base.grid

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def increments(self) -> np.ndarray:
        return self.base.increments

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.base.values).tobytes())
        digest.update(np.ascontiguousarray(self.step_area).tobytes())
        return digest.hexdigest()[:16]

    def prefix_area(self) -> np.ndarray:
        """``ZZ_{0, t_i}`` for every node, shape ``(N + 1, n, n)``."""
        dz = self.increments
        before = self.base.values[:-1] - self.base.values[0]
        steps = self.step_area + np.einsum("ia,ib->iab", before, dz)
        out = np.zeros((self.grid.steps + 1, self.dim, self.dim))
        np.cumsum(steps, axis=0, out=out[1:])
        return out

    def lagged(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Increments and areas over all grid intervals ``[t_i, t_{i+k}]``."""
        z = self.base.values
        pre = self.prefix_area()
        dz = z[k:] - z[:-k]
        area = pre[k:] - pre[:-k] - np.einsum("ia,ib->iab", z[:-k] - z[0], dz)
        return dz, area

    def to_csv(self, filename) -> None:
        write_rough_path_csv(self, filename)


def canonical_lift(path: SampledPath, alpha: float = 0.5) -> RoughPath:
    """Geometric lift of the piecewise-linear interpolation of ``path``.

    On a linear segment the iterated integral is exactly ``dZ (x) dZ / 2``.
    """
    dz = path.increments
    return RoughPath(path, 0.5 * np.einsum("ia,ib->iab", dz, dz), alpha=alpha, geometric=True)


def ito_lift(path: SampledPath, substeps: int = 64, seed: int = 0) -> RoughPath:
    """Ito-type lift of a Brownian sample, for negative tests of geometricity only.

    Each step is refined by a Brownian bridge with ``substeps`` pieces and the
    per-step area is the left-point (Ito) Riemann sum on the refinement.
    """
    rng = np.random.default_rng(seed)
    dz = path.increments
    N, n = dz.shape
    sub = rng.standard_normal((N, substeps, n)) * np.sqrt(path.grid.h / substeps)
    sub += (dz[:, None, :] - sub.sum(axis=1, keepdims=True)) / substeps
    before = np.cumsum(sub, axis=1) - sub
    area = np.einsum("ipa,ipb->iab", before, sub)
    return RoughPath(path, area, alpha=0.5, geometric=False)


def chen_compose(rp: RoughPath, i: int, j: int) -> Tuple[np.ndarray, np.ndarray]:
    """``(dZ_{t_i,t_j}, ZZ_{t_i,t_j})`` by folding per-step data left to right."""
    N = rp.grid.steps
    if not (0 <= i <= j <= N):
        raise InvalidArgument(f"need 0 <= i <= j <= {N}, got ({i}, {j})")
    dz = rp.increments[i:j]
    before = np.cumsum(dz, axis=0) - dz
    area = rp.step_area[i:j].sum(axis=0) + np.einsum("pa,pb->ab", before, dz)
    return rp.base.values[j] - rp.base.values[i], area


def chen_product(first, second):
    """Concatenate two ``(increment, area)`` pairs with Chen's relation."""
    (x1, a1), (x2, a2) = first, second
    return x1 + x2, a1 + a2 + np.outer(x1, x2)


def geometricity_defect(rp: RoughPath) -> float:
    """Max over steps of ``|Sym(A_i) - dZ_i (x) dZ_i / 2|`` (Frobenius)."""
    if rp.grid.steps == 0:
        return 0.0
    a = rp.step_area
    dz = rp.increments
    sym = 0.5 * (a + np.swapaxes(a, 1, 2)) - 0.5 * np.einsum("ia,ib->iab", dz, dz)
    return float(np.max(np.linalg.norm(sym, axis=(1, 2))))


def rough_distance(a: RoughPath, b: RoughPath, alpha: float) -> float:
    """Inhomogeneous distance ``|dZ - dZbar|_alpha + |ZZ - ZZbar|_{2 alpha}`` over grid pairs."""
    if a.grid != b.grid or a.dim != b.dim:
        raise InvalidArgument("rough paths must share grid and dimension")
    h = a.grid.h
    za, zb = a.base.values, b.base.values
    pa, pb = a.prefix_area(), b.prefix_area()
    first = second = 0.0
    for k in range(1, a.grid.steps + 1):
        dza, dzb = za[k:] - za[:-k], zb[k:] - zb[:-k]
        diff1 = np.linalg.norm(dza - dzb, axis=1)
        aa = pa[k:] - pa[:-k] - np.einsum("ia,ib->iab", za[:-k] - za[0], dza)
        ab = pb[k:] - pb[:-k] - np.einsum("ia,ib->iab", zb[:-k] - zb[0], dzb)
        diff2 = np.linalg.norm(aa - ab, axis=(1, 2))
        first = max(first, diff1.max() / (k * h) ** alpha)
        second = max(second, diff2.max() / (k * h) ** (2 * alpha))
    return float(first + second)


# ---------------------------------------------------------------------------
# roughness


@dataclass
class RoughnessReport:
    theta: float
    eps0: float
    modulus: float
    worst_direction: np.ndarray
    table: List[Tuple[float, float]]
    decay_exponent: float
    verdict: str
    note: str = ("finite-sample heuristic: minimum over grid times and a finite net "
                 "of directions; this is not a certificate of roughness")

    def to_dict(self):
        return {
            "theta": self.theta,
            "eps0": self.eps0,
            "modulus": self.modulus,
            "worst_direction": list(map(float, self.worst_direction)),
            "table": [{"eps": e, "L": l} for e, l in self.table],
            "decay_exponent": self.decay_exponent,
            "verdict": self.verdict,
            "note": self.note,
        }


VANISHING = "modulus vanishes with scale"
STABLE = "stable modulus"
INCONCLUSIVE = "inconclusive"


def sphere_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Axis vectors followed by ``count`` low-discrepancy unit vectors.

    The quasi-random part is a prefix of one Halton sequence, so a larger
    ``count`` always yields a superset of directions.
    """
    axes = np.eye(n)
    if count <= 0:
        return axes
    if n == 1:
        return axes
    u = scipy.stats.qmc.Halton(d=n, scramble=True, seed=seed).random(count)
    g = scipy.stats.norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.vstack([axes, g])


def _window(eps, h):
    ratio = eps / h
    if abs(ratio - round(ratio)) < 1e-9:
        return int(round(ratio)) - 1
    return int(np.floor(ratio))


def scan_roughness(rp: RoughPath, theta: float, eps_list: Sequence[float],
                   directions: int = 0, seed: int = 0) -> RoughnessReport:
    """Empirical theta-Hölder roughness modulus of ``rp`` on the listed scales.

    For each ``eps``: minimum over grid times ``s`` and sampled unit directions
    ``v`` of ``max_{|t-s| < eps} |v . (Z_t - Z_s)| / eps**theta``.
    """
    if not 0 <= theta < 1:
        raise InvalidArgument(f"theta must lie in [0, 1), got {theta}")
    eps_list = sorted(float(e) for e in eps_list)
    if not eps_list:
        raise InvalidArgument("eps_list must be non-empty")
    h, T = rp.grid.h, rp.grid.horizon
    for e in eps_list:
        if e > T * (1 + 1e-12):
            raise InvalidArgument(f"eps {e} exceeds the horizon {T}")
        if e < 2 * h * (1 - 1e-12):
            raise InvalidArgument(f"eps {e} is below two grid steps ({2 * h})")
    dirs = sphere_directions(rp.dim, directions, seed)
    proj = rp.base.values @ dirs.T  # (N+1, ndirs)
    table = []
    best, worst_dir = np.inf, dirs[0]
    for e in eps_list:
        size = 2 * _window(e, h) + 1
        hi = scipy.ndimage.maximum_filter1d(proj, size, axis=0, mode="nearest")
        lo = scipy.ndimage.minimum_filter1d(proj, size, axis=0, mode="nearest")
        osc = np.maximum(hi - proj, proj - lo).min(axis=0) / e ** theta
        j = int(np.argmin(osc))
        table.append((e, float(osc[j])))
        if osc[j] < best:
            best, worst_dir = float(osc[j]), dirs[j]
    exponent = _decay_exponent(table)
    if exponent >= 0.3:
        verdict = VANISHING
    elif exponent <= 0.1:
        verdict = STABLE
    else:
        verdict = INCONCLUSIVE
    return RoughnessReport(theta=theta, eps0=eps_list[-1], modulus=min(l for _, l in table),
                           worst_direction=np.asarray(worst_dir), table=table,
                           decay_exponent=exponent, verdict=verdict)


def _decay_exponent(table):
    eps = np.array([e for e, _ in table])
    vals = np.array([l for _, l in table])
    if np.any(vals <= 0):
        return float("inf")
    if len(eps) < 2:
        return 0.0
    slope, _ = np.polyfit(np.log(eps), np.log(vals), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# CSV


def write_rough_path_csv(rp: RoughPath, filename) -> None:
    n = rp.dim
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "t_i"] + [f"dZ_{a + 1}" for a in range(n)]
                   + [f"A_{a + 1}{b + 1}" for a in range(n) for b in range(n)])
        for i, (t, dz, a) in enumerate(zip(rp.grid.nodes, rp.increments, rp.step_area)):
            w.writerow([i, repr(float(t))] + [repr(float(x)) for x in dz]
                       + [repr(float(x)) for x in a.ravel()])
