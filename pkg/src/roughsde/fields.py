"""Coefficient fields with derivatives, and Lie brackets of vector fields.

Array conventions (batch axes ``...`` broadcast everywhere):

* a field with output shape ``S`` evaluated at ``x`` of shape ``(..., d)``
  returns ``(..., *S)``;
* its ``k``-th derivative returns ``(..., *S, d, ..., d)`` with ``k`` trailing
  derivative axes.

So ``Db`` is ``(..., d, d)``, ``Dsigma`` is ``(..., d, m, d)`` and ``D2beta``
is ``(..., d, n, d, d)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgument

UNLIMITED = 10**6
_EPS = np.finfo(float).eps


def fd_step(x, depth: int = 1):
    """Central-difference step ``eps**(1/(depth+2)) * (1 + |x|)``; widens with nesting depth."""
    scale = 1.0 + np.max(np.abs(x), axis=-1, keepdims=True)
    return _EPS ** (1.0 / (depth + 2)) * scale


class Field:
    """A smooth map ``R^d -> R^S`` with analytic derivatives up to ``order``.

    Requests above ``order`` are answered by nested central differences.
    """

    order = 0

    def __init__(self, dim: int, shape: Tuple[int, ...]):
        self.dim = int(dim)
        self.shape = tuple(shape)

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, k: int):
        x = np.asarray(x, dtype=float)
        if k <= self.order:
            return self._analytic(x, k)
        return self._finite_difference(x, k, k - self.order)

    def _analytic(self, x, k):
        raise NotImplementedError

    def _finite_difference(self, x, k, depth):
        step = fd_step(x, depth)
        cols = []
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = 1.0
            up = self.derivative(x + step * e, k - 1)
            down = self.derivative(x - step * e, k - 1)
            s = step.reshape(step.shape[:-1] + (1,) * (up.ndim - step.ndim + 1))
            cols.append((up - down) / (2 * s))
        return np.stack(cols, axis=-1)

    def __add__(self, other):
        return SumField([self, other])


def _zeros(x, shape, k, dim):
    return np.zeros(np.shape(x)[:-1] + tuple(shape) + (dim,) * k)


class ConstantField(Field):
    order = UNLIMITED

    def __init__(self, value, dim: int):
        value = np.asarray(value, dtype=float)
        super().__init__(dim, value.shape)
        self.value = value

    def _analytic(self, x, k):
        if k == 0:
            return np.broadcast_to(self.value, x.shape[:-1] + self.shape).copy()
        return _zeros(x, self.shape, k, self.dim)


class LinearField(Field):
    """``x -> A x + c`` with ``A`` of shape ``S + (d,)``."""

    order = UNLIMITED

    def __init__(self, matrix, offset=None):
        matrix = np.asarray(matrix, dtype=float)
        super().__init__(matrix.shape[-1], matrix.shape[:-1])
        self.matrix = matrix
        self.offset = np.zeros(self.shape) if offset is None else np.asarray(offset, float).reshape(self.shape)

    def _analytic(self, x, k):
        if k == 0:
            return np.tensordot(x, self.matrix, axes=([-1], [-1])) + self.offset
        if k == 1:
            return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()
        return _zeros(x, self.shape, k, self.dim)


def _activation(kind):
    if kind == "sin":
        return lambda u, k: np.sin(u + k * np.pi / 2), UNLIMITED
    if kind == "cos":
        return lambda u, k: np.cos(u + k * np.pi / 2), UNLIMITED
    if kind == "tanh":
        def tanh(u, k):
            t = np.tanh(u)
            return [t, 1 - t**2, -2 * t * (1 - t**2), (1 - t**2) * (6 * t**2 - 2)][k]
        return tanh, 3
    if kind == "sigmoid":
        def sigmoid(u, k):
            s = 1.0 / (1.0 + np.exp(-u))
            return [s, s * (1 - s), s * (1 - s) * (1 - 2 * s),
                    s * (1 - s) * (1 - 6 * s + 6 * s**2)][k]
        return sigmoid, 3
    raise InvalidArgument(f"unknown activation {kind!r}")


class RidgeField(Field):
    """``x -> offset + sum_r A[..., r] phi(W_r . x + c_r)`` for a bounded ``phi``.

    With ``W = I`` and diagonal ``A`` this is a componentwise map such as
    ``sin(x)``. Bounded with bounded derivatives for every listed ``phi``.
    """

    def __init__(self, kind: str, amplitude, weights=None, phase=None, offset=None, dim=None):
        amplitude = np.asarray(amplitude, dtype=float)
        r = amplitude.shape[-1]
        weights = np.eye(r) if weights is None else np.asarray(weights, dtype=float)
        super().__init__(weights.shape[1] if dim is None else dim, amplitude.shape[:-1])
        if weights.shape != (r, self.dim):
            raise InvalidArgument(f"weights must have shape {(r, self.dim)}, got {weights.shape}")
        self.kind = kind
        self.amplitude = amplitude
        self.weights = weights
        self.phase = np.zeros(r) if phase is None else np.asarray(phase, dtype=float)
        self.offset = np.zeros(self.shape) if offset is None else np.asarray(offset, float).reshape(self.shape)
        self._phi, self.order = _activation(kind)

    def _analytic(self, x, k):
        u = x @ self.weights.T + self.phase  # (..., r)
        g = self._phi(u, k)
        if k == 0:
            return np.tensordot(g, self.amplitude, axes=([-1], [-1])) + self.offset
        # contract amplitude last: (..., r) x (r, d)^k -> (..., r, d^k) -> (..., S, d^k)
        w = g
        for c in range(k):
            w = w[..., None] * self.weights.reshape((self.weights.shape[0],) + (1,) * c + (self.dim,))
        return np.tensordot(w, self.amplitude, axes=([x.ndim - 1], [-1])).transpose(
            _move_shape_first(x.ndim - 1, k, len(self.shape)))


def _move_shape_first(batch, k, s):
    # tensordot output: (batch..., d^k, S...) -> (batch..., S..., d^k)
    idx = list(range(batch))
    idx += list(range(batch + k, batch + k + s))
    idx += list(range(batch, batch + k))
    return idx


class SumField(Field):
    def __init__(self, parts: Sequence[Field]):
        parts = list(parts)
        super().__init__(parts[0].dim, parts[0].shape)
        for p in parts:
            if p.dim != self.dim or p.shape != self.shape:
                raise InvalidArgument("summands must share dimension and shape")
        self.parts = parts
        self.order = min(p.order for p in parts)

    def derivative(self, x, k):
        return sum(p.derivative(x, k) for p in self.parts)


class CallableField(Field):
    """User map without analytic derivatives (finite differences only).

    ``fn`` must accept ``x`` of shape ``(..., d)``.
    """

    order = 0

    def __init__(self, fn: Callable, dim: int, shape: Tuple[int, ...]):
        super().__init__(dim, shape)
        self.fn = fn

    def _analytic(self, x, k):
        return np.asarray(self.fn(x), dtype=float)


# ---------------------------------------------------------------------------
# coefficient triple


class VectorFieldSet:
    """Coefficients ``(b, sigma, beta)`` of ``dX = b dt + sigma dB + beta dZ``."""

    def __init__(self, b: Field, sigma: Field, beta: Field, validate: bool = True,
                 probes=None, tolerance: float = 1e-4):
        d = b.dim
        if b.shape != (d,):
            raise InvalidArgument(f"b must map R^{d} -> R^{d}, has shape {b.shape}")
        if sigma.dim != d or len(sigma.shape) != 2 or sigma.shape[0] != d:
            raise InvalidArgument(f"sigma must map R^{d} -> R^({d} x m), has shape {sigma.shape}")
        if beta.dim != d or len(beta.shape) != 2 or beta.shape[0] != d:
            raise InvalidArgument(f"beta must map R^{d} -> R^({d} x n), has shape {beta.shape}")
        self.b, self.sigma, self.beta = b, sigma, beta
        self.d, self.m, self.n = d, sigma.shape[1], beta.shape[1]
        if validate:
            if probes is None:
                probes = np.random.default_rng(0).standard_normal((5, d))
            report = validate_derivatives(self, probes)
            if report.flagged and report.max_error > tolerance:
                raise InvalidArgument(f"analytic derivatives disagree with finite differences: "
                                      f"{report.flagged[:3]}")

    def Db(self, x):
        return self.b.derivative(x, 1)

    def Dsigma(self, x):
        return self.sigma.derivative(x, 1)

    def Dbeta(self, x):
        return self.beta.derivative(x, 1)

    def D2beta(self, x):
        return self.beta.derivative(x, 2)

    def rough_correction(self, x, area):
        """``sum_{j,k} Dbeta_j(x)[beta_k(x)] area[k, j]``, shape ``(..., d)``."""
        return np.einsum("...ijl,...lk,...kj->...i", self.Dbeta(x), self.beta(x), area)

    def generators(self) -> Dict[str, "BracketField"]:
        """Named leaf fields ``b, sigma1..sigmam, beta1..betan``."""
        out = {"b": LeafField("b", self.b)}
        for k in range(self.m):
            out[f"sigma{k + 1}"] = LeafField(f"sigma{k + 1}", self.sigma, k)
        for j in range(self.n):
            out[f"beta{j + 1}"] = LeafField(f"beta{j + 1}", self.beta, j)
        return out


@dataclass
class DerivativeReport:
    errors: Dict[Tuple[str, int], float]
    flagged: List[Tuple[str, int, int]]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def validate_derivatives(vf: VectorFieldSet, probes, eta: Optional[float] = None,
                         tolerance: float = 1e-4) -> DerivativeReport:
    """Compare analytic derivatives (orders 1..3) with central differences.

    Each order-``k`` derivative is checked against the central difference of
    the order ``k-1`` derivative; orders that are themselves finite
    differences report zero.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[0] == 0:
        raise InvalidArgument("probes must be non-empty")
    errors, flagged = {}, []
    for name, f in (("b", vf.b), ("sigma", vf.sigma), ("beta", vf.beta)):
        for k in range(1, 4):
            if k > f.order:
                errors[(name, k)] = 0.0
                continue
            worst = 0.0
            for p, x in enumerate(probes):
                step = fd_step(x) if eta is None else eta * (1 + np.max(np.abs(x)))
                exact = f.derivative(x, k)
                fd = np.stack([(f.derivative(x + step * e, k - 1) - f.derivative(x - step * e, k - 1))
                               / (2 * step) for e in np.eye(f.dim)], axis=-1)
                err = float(np.max(np.abs(exact - fd)) / max(1.0, float(np.max(np.abs(exact)))))
                worst = max(worst, err)
                if err > tolerance:
                    flagged.append((name, k, p))
            errors[(name, k)] = worst
    return DerivativeReport(errors, flagged, tolerance)


# ---------------------------------------------------------------------------
# bracket expressions

_SLOTS = "bcefghjklmnopqrstuvwxyz"


def _leibniz(dg, f, k):
    """``k``-th derivative of ``x -> DG(x) F(x)`` from jets of ``G`` and ``F``.

    ``dg[j]`` is ``D^j G`` and ``f[j]`` is ``D^j F``; needs ``len(dg) >= k + 2``.
    """
    slots = _SLOTS[:k]
    total = 0.0
    for size in range(k + 1):
        for subset in itertools.combinations(range(k), size):
            on = "".join(slots[i] for i in subset)
            off = "".join(slots[i] for i in range(k) if i not in subset)
            total = total + np.einsum(f"...ia{on},...a{off}->...i{slots}", dg[size + 1], f[k - size])
    return total


class BracketField:
    """Vector field expression over the coefficient columns, with cached jets."""

    def __init__(self, label: str, dim: int):
        self.label = label
        self.dim = dim
        self._cache: Dict[bytes, List[np.ndarray]] = {}
        self.fd_used = False

    def __repr__(self):
        return f"{type(self).__name__}({self.label})"

    def jet(self, x, order: int) -> List[np.ndarray]:
        """``[F(x), DF(x), ..., D^order F(x)]``."""
        x = np.asarray(x, dtype=float)
        key = x.shape.__repr__().encode() + x.tobytes()
        hit = self._cache.get(key)
        if hit is not None and len(hit) > order:
            return hit[:order + 1]
        out = self._jet(x, order)
        self._cache[key] = out
        return out

    def value(self, x):
        return self.jet(x, 0)[0]

    def jacobian(self, x):
        return self.jet(x, 1)[1]

    def __call__(self, x):
        return self.value(x)

    def clear_cache(self):
        self._cache.clear()

    def _jet(self, x, order):
        raise NotImplementedError


class LeafField(BracketField):
    """A coefficient field, or one column of a matrix-valued coefficient."""

    def __init__(self, label: str, field: Field, column: Optional[int] = None):
        super().__init__(label, field.dim)
        self.field = field
        self.column = column

    def _jet(self, x, order):
        if order > self.field.order:
            self.fd_used = True
        out = []
        for k in range(order + 1):
            a = self.field.derivative(x, k)
            if self.column is not None:
                a = np.take(a, self.column, axis=a.ndim - k - 1)
            out.append(a)
        return out


class Bracket(BracketField):
    """``[F, G](x) = DG(x) F(x) - DF(x) G(x)``."""

    def __init__(self, left: BracketField, right: BracketField):
        if left.dim != right.dim:
            raise InvalidArgument("bracketed fields must live on the same R^d")
        super().__init__(f"[{left.label},{right.label}]", left.dim)
        self.left, self.right = left, right

    def _jet(self, x, order):
        jf = self.left.jet(x, order + 1)
        jg = self.right.jet(x, order + 1)
        self.fd_used = self.left.fd_used or self.right.fd_used
        return [_leibniz(jg, jf, q) - _leibniz(jf, jg, q) for q in range(order + 1)]


class Transport(BracketField):
    """``DG(x) F(x)``, the derivative of ``G`` along ``F``."""

    def __init__(self, along: BracketField, target: BracketField):
        if along.dim != target.dim:
            raise InvalidArgument("fields must live on the same R^d")
        super().__init__(f"D{target.label}[{along.label}]", along.dim)
        self.along, self.target = along, target

    def _jet(self, x, order):
        jf = self.along.jet(x, order)
        jg = self.target.jet(x, order + 1)
        self.fd_used = self.along.fd_used or self.target.fd_used
        return [_leibniz(jg, jf, q) for q in range(order + 1)]


class Combination(BracketField):
    """Linear combination ``sum_i c_i F_i``."""

    def __init__(self, terms: Sequence[Tuple[float, BracketField]], label: Optional[str] = None):
        terms = list(terms)
        if label is None:
            label = "(" + "+".join(f"{c:g}*{f.label}" for c, f in terms) + ")"
        super().__init__(label, terms[0][1].dim)
        self.terms = terms

    def _jet(self, x, order):
        jets = [(c, f.jet(x, order)) for c, f in self.terms]
        self.fd_used = any(f.fd_used for _, f in self.terms)
        return [sum(c * j[q] for c, j in jets) for q in range(order + 1)]


def lie_bracket(F: BracketField, G: BracketField) -> Bracket:
    return Bracket(F, G)


# ---------------------------------------------------------------------------
# library


def _tensor(values, shape):
    a = np.asarray(values, dtype=float)
    if a.shape != tuple(shape):
        if a.size != int(np.prod(shape)):
            raise InvalidArgument(f"expected {int(np.prod(shape))} numbers for shape {tuple(shape)}, "
                                  f"got {a.size}")
        a = a.reshape(shape)
    return a


def build_field(name: str, params: dict, dim: int, shape: Tuple[int, ...]) -> Field:
    """Instantiate a library field by name.

    Names: ``zero``, ``constant`` (value), ``linear`` (matrix, offset),
    ``sin``/``cos``/``tanh``/``sigmoid`` (amplitude, weights, phase, offset),
    ``hormander_sigma`` and ``hormander_beta`` (the two-dimensional demo pair).
    Matrices may be nested lists or flat row-major lists.
    """
    params = dict(params or {})
    shape = tuple(shape)
    if name == "zero":
        return ConstantField(np.zeros(shape), dim)
    if name == "constant":
        return ConstantField(_tensor(params["value"], shape), dim)
    if name == "linear":
        offset = params.get("offset")
        return LinearField(_tensor(params["matrix"], shape + (dim,)),
                           None if offset is None else _tensor(offset, shape))
    if name in ("sin", "cos", "tanh", "sigmoid"):
        weights = params.get("weights")
        r = dim if weights is None else int(np.size(weights) // dim)
        weights = np.eye(dim) if weights is None else _tensor(weights, (r, dim))
        amplitude = _tensor(params["amplitude"], shape + (r,))
        phase = params.get("phase")
        offset = params.get("offset")
        return RidgeField(name, amplitude, weights,
                          None if phase is None else _tensor(phase, (r,)),
                          None if offset is None else _tensor(offset, shape), dim=dim)
    if name == "hormander_sigma":
        if dim != 2:
            raise InvalidArgument("hormander demo fields live on R^2")
        return ConstantField(np.array([[1.0], [0.0]]), 2)
    if name == "hormander_beta":
        if dim != 2:
            raise InvalidArgument("hormander demo fields live on R^2")
        a = np.zeros((2, 1, 2))
        a[1, 0, 0] = 1.0
        return LinearField(a)
    raise InvalidArgument(f"unknown field {name!r}")


FIELD_NAMES = ("zero", "constant", "linear", "sin", "cos", "tanh", "sigmoid",
               "hormander_sigma", "hormander_beta")


def hormander_demo() -> VectorFieldSet:
    """``d = 2``, ``sigma1 = (1, 0)``, ``beta1 = (0, x1)``, ``b = 0``."""
    return VectorFieldSet(ConstantField(np.zeros(2), 2),
                          build_field("hormander_sigma", {}, 2, (2, 1)),
                          build_field("hormander_beta", {}, 2, (2, 1)))
