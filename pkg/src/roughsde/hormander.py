"""Bracket hierarchies, rank verdicts at a probe point, and the bracket dynamics of ``xi^T I F(X)``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import scipy.linalg

from .errors import InvalidArgument
from .fields import Bracket, BracketField, Combination, Transport, VectorFieldSet
from .grid import SampledPath
from .malliavin import FlowPair
from .roughpath import RoughPath
from .rsde import SolutionPath

RANK_THRESHOLD = 1e-8
VARIANTS = ("S", "S-bar")
PROBE_LIMITATION = ("the span condition is checked at the listed probe point only; "
                    "full rank at every x in R^d is not certified")


@dataclass
class HormanderLevel:
    level: int
    fields: List[BracketField]
    rank: int
    basis: List[int]
    singular_values: np.ndarray

    @property
    def labels(self) -> List[str]:
        return [f.label for f in self.fields]


@dataclass
class HormanderReport:
    variant: str
    x0: np.ndarray
    max_level: int
    levels: List[HormanderLevel]
    full_rank_level: Optional[int]
    threshold: float = RANK_THRESHOLD
    fd_used: bool = False
    note: str = PROBE_LIMITATION

    @property
    def full_rank(self) -> bool:
        return self.full_rank_level is not None

    @property
    def verdict(self) -> str:
        if self.full_rank_level is not None:
            return f"full-rank-at-level {self.full_rank_level}"
        return f"rank-deficient up to max-level {self.max_level}"

    @property
    def ranks(self) -> List[int]:
        return [lv.rank for lv in self.levels]

    def to_dict(self):
        return {
            "variant": self.variant,
            "x0": self.x0.tolist(),
            "max_level": self.max_level,
            "verdict": self.verdict,
            "full_rank_level": self.full_rank_level,
            "rank_threshold_relative": self.threshold,
            "finite_differences_used": self.fd_used,
            "note": self.note,
            "levels": [{
                "level": lv.level,
                "fields": lv.labels,
                "rank": lv.rank,
                "basis": [lv.fields[i].label for i in lv.basis],
                "basis_indices": lv.basis,
                "singular_values": lv.singular_values.tolist(),
            } for lv in self.levels],
        }

    def to_json(self, filename) -> None:
        with open(filename, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def span_rank(vectors: np.ndarray, threshold: float = RANK_THRESHOLD):
    """Numerical rank, chosen column indices and singular values of ``vectors`` (d, k)."""
    if vectors.shape[1] == 0:
        return 0, [], np.zeros(0)
    s = np.linalg.svd(vectors, compute_uv=False)
    if s[0] == 0 or not np.isfinite(s[0]):
        return 0, [], s
    rank = int(np.sum(s > threshold * s[0]))
    _, _, piv = scipy.linalg.qr(vectors, mode="economic", pivoting=True)
    return rank, sorted(int(i) for i in piv[:rank]), s


def _successors(vf_leaves, V, variant):
    sig = [f for k, f in vf_leaves.items() if k.startswith("sigma")]
    bet = [f for k, f in vf_leaves.items() if k.startswith("beta")]
    if variant == "S":
        return [Bracket(F, V) for F in [vf_leaves["b"]] + sig + bet]
    out = [Bracket(F, V) for F in sig + bet]
    terms = [(1.0, Bracket(vf_leaves["b"], V))] + [(0.5, Bracket(s, Bracket(s, V))) for s in sig]
    label = f"([b,{V.label}]+1/2*sum_k[sigma_k,[sigma_k,{V.label}]])"
    out.append(Combination(terms, label))
    return out


def build_hierarchy(vf: VectorFieldSet, x0, max_level: int, variant: str = "S",
                    threshold: float = RANK_THRESHOLD) -> HormanderReport:
    """Grow the bracket sets level by level and record the span rank at ``x0``.

    Level 0 holds the diffusion columns. Each later level adds the brackets of
    the previous level's new members; fields are deduplicated by label. The
    construction stops at the first level whose span is all of ``R^d``.
    """
    if variant not in VARIANTS:
        raise InvalidArgument(f"variant must be one of {VARIANTS}, got {variant!r}")
    if max_level < 0:
        raise InvalidArgument("max_level must be >= 0")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (vf.d,):
        raise InvalidArgument(f"x0 must have shape ({vf.d},)")
    leaves = vf.generators()
    fields = [f for k, f in leaves.items() if k.startswith("sigma")]
    seen = {f.label for f in fields}
    newest = list(fields)
    levels, full = [], None
    for level in range(max_level + 1):
        if level > 0:
            fresh = []
            for V in newest:
                for W in _successors(leaves, V, variant):
                    if W.label not in seen:
                        seen.add(W.label)
                        fresh.append(W)
            fields = fields + fresh
            newest = fresh
        vecs = np.column_stack([f.value(x0) for f in fields]) if fields else np.zeros((vf.d, 0))
        rank, basis, s = span_rank(vecs, threshold)
        levels.append(HormanderLevel(level, list(fields), rank, basis, s))
        if rank == vf.d:
            full = level
            break
    fd = any(f.fd_used for f in fields)
    return HormanderReport(variant, x0, max_level, levels, full, threshold, fd)


# ---------------------------------------------------------------------------
# bracket dynamics


@dataclass
class BracketDynamicsResult:
    times: np.ndarray
    left: np.ndarray
    right: np.ndarray
    fd_used: bool
    labels: Dict[str, List[str]] = field(default_factory=dict)

    @property
    def gaps(self) -> np.ndarray:
        return np.abs(self.left - self.right)

    @property
    def residual(self) -> float:
        return float(np.max(self.gaps))

    def to_dict(self):
        return {"residual": self.residual, "finite_differences_used": self.fd_used,
                "t": self.times.tolist(), "left": self.left.tolist(), "right": self.right.tolist()}


def bracket_dynamics_residual(vf: VectorFieldSet, sol: SolutionPath, flows: FlowPair,
                              xi, F: BracketField, B: SampledPath, Z: RoughPath,
                              inverse: str = "equation",
                              ito_correction: bool = True) -> BracketDynamicsResult:
    """Both sides of the dynamics of ``W_t(F) = xi^T I_t F(X_t)`` over the grid.

    ``left[i] = W_{t_i}(F) - W_0(F)``. ``right[i]`` accumulates the one-step
    expansion with drift ``W([b,F]) + 1/2 sum_k W([sigma_k,[sigma_k,F]])``,
    Brownian part ``W([sigma_k,F]) dB^k``, rough part ``W([beta_j,F]) dZ^j``
    and its second-order term ``W([beta_k,[beta_j,F]]) ZZ[k, j]``.

    The solver integrates ``B`` in the Ito sense, so ``b`` is an Ito drift and
    the drift above also carries ``-1/2 sum_k W([D sigma_k sigma_k, F])``. With
    ``ito_correction=False`` that term is dropped, which is exact only when
    ``b`` is read as the Stratonovich drift or the term vanishes (e.g. linear
    commuting coefficients).
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (vf.d,):
        raise InvalidArgument(f"xi must have shape ({vf.d},)")
    X = sol.X
    Iinv = flows.inverse(inverse)
    leaves = vf.generators()
    sig = [leaves[f"sigma{k + 1}"] for k in range(vf.m)]
    bet = [leaves[f"beta{j + 1}"] for j in range(vf.n)]

    def W(G):
        return np.einsum("a,tab,tb->t", xi, Iinv, G.value(X))

    W_F = W(F)
    sF = [Bracket(s, F) for s in sig]
    bF = [Bracket(b, F) for b in bet]
    drift = W(Bracket(leaves["b"], F)) + 0.5 * sum((W(Bracket(s, g)) for s, g in zip(sig, sF)),
                                                   np.zeros_like(W_F))
    if ito_correction:
        for s in sig:
            drift = drift - 0.5 * W(Bracket(Transport(s, s), F))
    h = sol.grid.h
    incr = drift[:-1] * h
    dB, dZ, A = B.increments, Z.increments, Z.step_area
    for k, g in enumerate(sF):
        incr = incr + W(g)[:-1] * dB[:, k]
    for j, g in enumerate(bF):
        incr = incr + W(g)[:-1] * dZ[:, j]
        for k, bk in enumerate(bet):
            incr = incr + W(Bracket(bk, g))[:-1] * A[:, k, j]
    right = np.concatenate([[0.0], np.cumsum(incr)])
    used = [F] + sF + bF
    fd = any(g.fd_used for g in used)
    return BracketDynamicsResult(sol.grid.nodes, W_F - W_F[0], right, fd)
