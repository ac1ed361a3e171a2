"""Quadrature grids over the latent space: quantile midpoints, the sqrt-density
variant, pushforwards of a base rule, and the constant-probability cubature."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import (
    DomainError,
    Dual,
    adaptive_simpson_cells,
    concatenate,
    hermite_rule,
    lognormal_quantile,
    sigmoid,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
    value_of,
)
from .transforms import Diffeomorphism

__all__ = [
    "ResourceError",
    "QuadratureGrid",
    "QuantileFunction",
    "uniform_law",
    "lognormal_law",
    "standard_normal_law",
    "logistic_law",
    "sigmoid_normal_law",
    "quantile_midpoint_bounded",
    "quantile_midpoint_halfline",
    "sqrt_quantile_midpoint",
    "pushforward_scheme",
    "gauss_hermite_pushforward",
    "cubature_constant_probability",
    "MAX_CUBATURE_POINTS",
]

MAX_CUBATURE_POINTS = 10**6


class ResourceError(RuntimeError):
    """A request would allocate an unreasonably large grid."""


@dataclass(frozen=True)
class QuadratureGrid:
    """Points ``z_n`` and weights ``w_n`` of an N-point rule.

    ``points`` is a float array of shape ``(N,)`` for scalar latents or
    ``(N, M+1)`` for simplex points. It may instead be a :class:`Dual` holding
    such an array, when the grid was built from parameters carrying a tangent.
    """

    points: object
    weights: np.ndarray
    reparameterizable: bool = True
    strictly_increasing: bool = field(default=True, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) == 0:
            raise DomainError("weights must be a nonempty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and nonnegative")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {math.fsum(w)!r}, not 1")
        v = np.asarray(value_of(self.points), dtype=float)
        if v.shape[0] != len(w):
            raise DomainError("points and weights differ in length")
        if v.ndim == 1 and len(v) > 1:
            steps = np.diff(v)
            if self.strictly_increasing and np.any(steps <= 0):
                raise DomainError("grid points are not strictly increasing")
            if np.any(steps < 0):
                raise DomainError("grid points are out of order")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def values(self) -> np.ndarray:
        """Primal values of the points (drops any tangent)."""
        return np.asarray(value_of(self.points), dtype=float)

    @property
    def is_scalar(self) -> bool:
        return self.values.ndim == 1

    def expect(self, phi) -> float:
        """``sum_n w_n phi(z_n)`` for a vectorised ``phi``."""
        return float(np.sum(self.weights * phi(self.values)))

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class QuantileFunction:
    """A strictly increasing quantile map on (0, 1) with its support.

    ``support`` is ``(lo, hi)``: finite for a bounded interval, ``(0, inf)``
    for the half-line, ``(-inf, inf)`` for the line. ``cdf`` and ``density``
    are optional and used by schemes that need them.
    """

    quantile: Callable
    support: tuple = (-math.inf, math.inf)
    cdf: Optional[Callable] = None
    density: Optional[Callable] = None

    def __call__(self, p):
        return self.quantile(p)

    @property
    def kind(self) -> str:
        lo, hi = self.support
        if math.isfinite(lo) and math.isfinite(hi):
            return "bounded"
        if lo == 0.0 and hi == math.inf:
            return "half-line"
        if lo == -math.inf and hi == math.inf:
            return "line"
        return "other"


def uniform_law(a: float = 0.0, b: float = 1.0) -> QuantileFunction:
    if not b > a:
        raise DomainError("uniform law needs a < b")
    return QuantileFunction(
        quantile=lambda p: a + (b - a) * p,
        support=(a, b),
        cdf=lambda z: np.clip((np.asarray(z, dtype=float) - a) / (b - a), 0.0, 1.0),
        density=lambda z: np.where((np.asarray(z) >= a) & (np.asarray(z) <= b), 1.0 / (b - a), 0.0),
    )


def standard_normal_law() -> QuantileFunction:
    return QuantileFunction(std_normal_quantile, (-math.inf, math.inf), std_normal_cdf, std_normal_pdf)


def logistic_law() -> QuantileFunction:
    """Standard logistic law, whose quantile is the logit."""

    def quantile(p):
        from .numerics import log

        if isinstance(p, np.ndarray) and np.any((p <= 0) | (p >= 1)):
            raise DomainError("logistic quantile needs 0 < p < 1")
        if not isinstance(p, np.ndarray) and not 0.0 < float(value_of(p)) < 1.0:
            raise DomainError("logistic quantile needs 0 < p < 1")
        return log(p) - log(1.0 - p)

    def density(u):
        s = sigmoid(np.asarray(u, dtype=float))
        return s * (1.0 - s)

    return QuantileFunction(quantile, (-math.inf, math.inf), sigmoid, density)


def lognormal_law(mu=0.0, sigma=1.0) -> QuantileFunction:
    """LogNormal(mu, sigma); either parameter may be a dual."""
    if float(value_of(sigma)) <= 0:
        raise DomainError("lognormal scale must be positive")

    def cdf(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            t = (np.log(np.maximum(z, 0.0)) - float(value_of(mu))) / float(value_of(sigma))
        return std_normal_cdf(t)

    return QuantileFunction(lambda p: lognormal_quantile(p, mu, sigma), (0.0, math.inf), cdf)


def sigmoid_normal_law(pi=0.0, sigma=1.0) -> QuantileFunction:
    """Law of ``sigmoid(sigma*pi + sigma*U)`` with ``U ~ N(0, 1)``."""
    if float(value_of(sigma)) <= 0:
        raise DomainError("scale must be positive")
    shift = sigma * pi
    s0, sh0 = float(value_of(sigma)), float(value_of(shift))

    def cdf(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            t = np.log(z) - np.log1p(-z)
        return std_normal_cdf((t - sh0) / s0)

    def density(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape)
        inside = (z > 0) & (z < 1)
        zi = z[inside]
        t = np.log(zi) - np.log1p(-zi)
        out[inside] = std_normal_pdf((t - sh0) / s0) / (s0 * zi * (1.0 - zi))
        return out if out.ndim else float(out)

    return QuantileFunction(lambda p: sigmoid(shift + sigma * std_normal_quantile(p)), (0.0, 1.0), cdf, density)


def _reject_flat(points) -> None:
    v = np.asarray(value_of(points), dtype=float)
    if np.any(np.diff(v) <= 0):
        raise DomainError("quantiles are numerically flat; the density vanishes on part of the support")


def quantile_midpoint_bounded(q: QuantileFunction, n: int) -> QuadratureGrid:
    """Midpoints between consecutive ``n/N`` quantiles on a bounded support."""
    if n < 1:
        raise DomainError("N must be positive")
    lo, hi = q.support
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError("support is unbounded; use the half-line or pushforward scheme")
    inner = q(np.arange(1, n) / n) if n > 1 else np.zeros(0)
    nu = concatenate([np.array([lo]), inner, np.array([hi])])
    _reject_flat(nu)
    points = (nu[:-1] + nu[1:]) * 0.5
    return QuadratureGrid(points, np.full(n, 1.0 / n), True)


def quantile_midpoint_halfline(q: QuantileFunction, n: int) -> QuadratureGrid:
    """Quantile midpoints on ``[0, inf)`` with the last endpoint extrapolated linearly."""
    if n < 2:
        raise DomainError("the half-line scheme needs N >= 2")
    if q.support[0] != 0.0 or q.support[1] != math.inf:
        raise DomainError("support must be [0, inf)")
    inner = q(np.arange(1, n) / n)
    head = concatenate([np.array([0.0]), inner])
    last = head[n - 1] * 2.0 - head[n - 2]
    nu = concatenate([head, last])
    _reject_flat(nu)
    points = (nu[:-1] + nu[1:]) * 0.5
    return QuadratureGrid(points, np.full(n, 1.0 / n), True)


def _logit_window(g, start: float = 16.0, cap: float = 736.0) -> float:
    """Half-width L such that ``g`` is negligible beyond ``[-L, L]``."""
    L = start
    while L < cap:
        s = np.linspace(-L, L, 2001)
        vals = g(s)
        peak = np.max(vals)
        if peak <= 0:
            raise DomainError("density vanishes on the whole support")
        if max(vals[0], vals[-1]) <= 1e-17 * peak * L:
            return L
        L *= 2.0
    return cap


def _invert_table(g, edges, cum, targets, tol):
    """Solve ``G(s) = t`` where ``G`` is the running integral tabulated by ``cum``."""
    out = np.empty(len(targets))
    for i, t in enumerate(targets):
        k = int(np.searchsorted(cum, t, side="left"))
        k = min(max(k, 1), len(edges) - 1)
        a, b = edges[k - 1], edges[k]
        base = cum[k - 1]
        need = t - base
        # bisection inside the cell, with Newton steps when they stay in the bracket
        s = 0.5 * (a + b)
        for _ in range(200):
            got = adaptive_simpson_cells(g, np.array([edges[k - 1], s]), tol)[0]
            r = got - need
            if abs(r) <= tol * 1e-2 or b - a <= 1e-15 * max(1.0, abs(s)):
                break
            if r > 0:
                b = s
            else:
                a = s
            gs = float(g(np.array([s]))[0])
            step = s - r / gs if gs > 0 else math.nan
            s = step if a < step < b else 0.5 * (a + b)
        out[i] = s
    return out


def sqrt_quantile_midpoint(
    density: Callable,
    support: tuple,
    n: int,
    cdf: Optional[Callable] = None,
    tol: float = 1e-10,
) -> QuadratureGrid:
    """Endpoints at the ``n/N`` quantiles of the law proportional to ``sqrt(p)``.

    Points are the midpoints of those cells; weights are the cells' exact
    probabilities under ``p`` (from ``cdf`` when given, otherwise by
    integrating ``density``). The weights depend on the density parameters,
    so the grid is flagged as not reparameterizable.
    """
    if n < 1:
        raise DomainError("N must be positive")
    lo, hi = (float(support[0]), float(support[1]))
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise DomainError("the sqrt-quantile scheme needs a bounded interval")
    width = hi - lo

    # z = lo + width * sigmoid(s) spreads the endpoint regions over the real line
    def jac(s):
        e = sigmoid(s)
        return e, width * e * (1.0 - e)

    def dens_s(s, power):
        e, j = jac(s)
        z = lo + width * e
        with np.errstate(all="ignore"):
            p = np.asarray(density(z), dtype=float)
            out = (np.sqrt(p) if power == 0.5 else p) * j
        return np.where((j > 0) & np.isfinite(out), out, 0.0)

    def root(s):
        return dens_s(s, 0.5)

    L = _logit_window(root)
    edges = np.linspace(-L, L, 4097)
    cells = adaptive_simpson_cells(root, edges, tol)
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    total = cum[-1]
    if not total > 0:
        raise DomainError("density vanishes on the whole support")
    s_inner = _invert_table(root, edges, cum, total * np.arange(1, n) / n, tol * total)
    s_edges = np.concatenate([[-L], s_inner, [L]])
    a = np.concatenate([[lo], lo + width * sigmoid(s_inner), [hi]])
    _reject_flat(a)
    points = 0.5 * (a[:-1] + a[1:])
    if np.any(np.asarray(density(points), dtype=float) <= 0):
        raise DomainError("density is not positive on every grid cell")

    if cdf is not None:
        c = np.asarray(cdf(a[1:-1]), dtype=float)
        w = np.diff(np.concatenate([[0.0], c, [1.0]]))
    else:
        fine = np.concatenate(
            [np.linspace(s_edges[i], s_edges[i + 1], 65)[:-1] for i in range(n)] + [[s_edges[-1]]]
        )
        parts = adaptive_simpson_cells(lambda s: dens_s(s, 1.0), fine, tol)
        w = parts.reshape(n, 64).sum(axis=1)
    w = np.maximum(w, 0.0)
    w = w / math.fsum(w)
    return QuadratureGrid(points, w, reparameterizable=False)


def pushforward_scheme(base: QuadratureGrid, F: Diffeomorphism) -> QuadratureGrid:
    """Map every point through ``F``; the weights carry over untouched."""
    points = F(base.points)
    v = np.asarray(value_of(points), dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("pushforward produced non-finite points")
    # a monotone map can merge neighbours numerically (e.g. a saturated sigmoid)
    return QuadratureGrid(points, base.weights, base.reparameterizable, strictly_increasing=False)


def gauss_hermite_pushforward(n: int, F: Diffeomorphism) -> QuadratureGrid:
    """Gauss-Hermite rule for the standard normal, pushed through ``F``."""
    rule = hermite_rule(n)
    base = QuadratureGrid(np.array(rule.nodes), np.array(rule.weights), True)
    return pushforward_scheme(base, F)


def cubature_constant_probability(
    k: int, m: int, component_quantile: QuantileFunction, F: Diffeomorphism
) -> QuadratureGrid:
    """Product of per-axis quantile midpoints, pushed through ``F``.

    Each axis is cut into ``k`` cells of equal component probability and
    represented by the quantile at ``(j - 1/2)/k``. All ``k**m`` combinations
    are kept, each with weight ``k**-m``.
    """
    if k < 1 or m < 1:
        raise DomainError("K and M must be positive")
    count = k**m
    if count > MAX_CUBATURE_POINTS:
        raise ResourceError(f"K^M = {count} exceeds {MAX_CUBATURE_POINTS}")
    reps = component_quantile((np.arange(k) + 0.5) / k)
    idx = np.array(list(itertools.product(range(k), repeat=m)), dtype=int).reshape(count, m)
    if isinstance(reps, Dual):
        u = reps[idx]
    else:
        u = np.asarray(reps, dtype=float)[idx]
    points = F(u)
    return QuadratureGrid(points, np.full(count, 1.0 / count), True)
