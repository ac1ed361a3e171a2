"""Quadrature compound distributions: a finite mixture over grid points that
stands in for a continuous mixture, with Poisson-LogNormal and vector
diffeomixture instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import (
    DomainError,
    Dual,
    adaptive_simpson,
    exp,
    log,
    logsumexp,
    sigmoid,
    value_of,
)
from .schemes import (
    QuadratureGrid,
    QuantileFunction,
    cubature_constant_probability,
    gauss_hermite_pushforward,
    logistic_law,
    lognormal_law,
    quantile_midpoint_bounded,
    quantile_midpoint_halfline,
    sqrt_quantile_midpoint,
    standard_normal_law,
)
from .transforms import Diffeomorphism, affine, centered_softmax, chain, sigmoid_map

__all__ = [
    "UnsupportedError",
    "CategoricalIndex",
    "QuadratureCompound",
    "qc_log_prob",
    "qc_prob",
    "qc_sample",
    "PoissonLogNormalQC",
    "plqc_grad",
    "MixtureWeightLaw",
    "MIXTURE_SCHEMES",
    "mixture_weight_grid",
    "StandardNormalBase",
    "VectorDiffeomixture",
    "vdm_log_density",
    "vdm_density",
    "vdm_sample",
    "prob_component_larger",
]


class UnsupportedError(ValueError):
    """The requested combination of options is not provided."""


@dataclass(frozen=True)
class CategoricalIndex:
    """Draws index ``n`` with probability ``weights[n]`` by inverting the cumulative table."""

    weights: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) == 0 or np.any(w < 0):
            raise DomainError("weights must be a nonempty nonnegative vector")
        if abs(math.fsum(w) - 1.0) > 1e-9:
            raise DomainError("weights must sum to 1")
        cum = np.cumsum(w)
        cum[-1] = 1.0
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_cum", cum)

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cum, u, side="right")
        # u < 1 always, so idx <= N-1 except for trailing zero weights
        return np.minimum(idx, len(self.weights) - 1)


@dataclass(frozen=True)
class QuadratureCompound:
    """``q_N(x) = sum_n w_n p(x | z_n)``.

    ``log_conditional(x, z)`` returns ``log p(x | z)`` for an array of grid
    points ``z`` (leading axis N). ``sampler(z, rng)`` draws one ``x`` per
    entry of ``z``.
    """

    grid: QuadratureGrid
    log_conditional: Callable
    sampler: Optional[Callable] = None


def qc_log_prob(qc: QuadratureCompound, x):
    terms = np.log(qc.grid.weights) + qc.log_conditional(x, qc.grid.points)
    return logsumexp(terms)


def qc_prob(qc: QuadratureCompound, x):
    return exp(qc_log_prob(qc, x))


def qc_sample(qc: QuadratureCompound, rng: np.random.Generator, size=None):
    """Pick a grid point by its weight, then draw from the conditional there."""
    if qc.sampler is None:
        raise UnsupportedError("the conditional family has no sampler")
    idx = CategoricalIndex(qc.grid.weights).sample(rng, size)
    return qc.sampler(qc.grid.values[idx], rng)


# ---------------------------------------------------------------------------
# Poisson-LogNormal
# ---------------------------------------------------------------------------


def _log_factorial(x: np.ndarray) -> np.ndarray:
    return np.array([math.lgamma(k + 1.0) for k in np.ravel(x)]).reshape(np.shape(x))


def _poisson_log_pmf(x, z):
    """``log Poisson(x; z)`` for integer array ``x`` (shape B) and rates ``z`` (shape N) -> (B, N)."""
    x = np.asarray(x, dtype=float)
    xb = x[..., None]
    lf = _log_factorial(x)[..., None]
    if isinstance(z, Dual):
        return xb * log(z) - z - lf
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xb * np.log(z) - z - lf
    return np.where((xb == 0) & (z == 0), 0.0, out)


def _chernoff_tail(z: np.ndarray, x: int) -> np.ndarray:
    """Upper bound on ``P[Poisson(z) >= x]`` (valid for ``x > z``)."""
    with np.errstate(divide="ignore"):
        logb = -z + x * (1.0 + np.log(z) - math.log(x))
    return np.where(x > z, np.exp(logb), 1.0)


class PoissonLogNormalQC:
    """Poisson counts whose rate follows a quadrature stand-in for LogNormal(mu, sigma).

    The rate grid uses half-line quantile midpoints, so every weight is 1/N
    and the pmf is a smooth function of ``mu`` and ``sigma``.
    """

    def __init__(self, mu, sigma, n: int):
        if float(value_of(sigma)) <= 0:
            raise DomainError("sigma must be positive")
        if n < 2:
            raise DomainError("N must be at least 2")
        self.mu = mu
        self.sigma = sigma
        self.n = n
        self.grid = quantile_midpoint_halfline(lognormal_law(mu, sigma), n)
        self.compound = QuadratureCompound(
            self.grid,
            _poisson_log_pmf,
            lambda z, rng: rng.poisson(z),
        )

    def __repr__(self) -> str:
        return f"PoissonLogNormalQC(mu={value_of(self.mu)!r}, sigma={value_of(self.sigma)!r}, n={self.n})"

    def log_pmf(self, x):
        """Log pmf at one count or an integer array of counts."""
        x = np.asarray(x)
        if np.any(x < 0) or np.any(x != np.floor(x)):
            raise DomainError("counts must be nonnegative integers")
        terms = np.log(self.grid.weights) + _poisson_log_pmf(np.atleast_1d(x), self.grid.points)
        out = logsumexp(terms, axis=-1)
        if x.ndim == 0:
            return out[0]
        return out

    def pmf(self, x):
        return exp(self.log_pmf(x))

    def tail_cutoff(self, eps: float = 1e-12) -> int:
        """Smallest X with ``sum_n w_n P[Poisson(z_n) >= X] < eps`` by a Chernoff bound."""
        z = self.grid.values
        x = max(1, int(math.ceil(z.max())) + 1)
        while float(np.sum(self.grid.weights * _chernoff_tail(z, x))) >= eps:
            x = int(x * 1.25) + 1
        return x

    def total_mass(self, eps: float = 1e-12) -> float:
        xs = np.arange(self.tail_cutoff(eps))
        return math.fsum(np.asarray(value_of(self.pmf(xs)), dtype=float))

    def sample(self, rng: np.random.Generator, size=None):
        return qc_sample(self.compound, rng, size)

    def mean(self) -> float:
        return float(np.sum(self.grid.weights * self.grid.values))


def plqc_grad(d: PoissonLogNormalQC, x):
    """``(dq/dmu, dq/dsigma)`` at ``x``, by running the whole pipeline on duals."""
    mu, sigma = float(value_of(d.mu)), float(value_of(d.sigma))
    gm = PoissonLogNormalQC(Dual.variable(mu), sigma, d.n).pmf(x)
    gs = PoissonLogNormalQC(mu, Dual.variable(sigma), d.n).pmf(x)
    return gm.deriv, gs.deriv


# ---------------------------------------------------------------------------
# Mixture-weight laws on the simplex
# ---------------------------------------------------------------------------

_COMPONENT_LAWS = {"normal": standard_normal_law, "logistic": logistic_law}


@dataclass(frozen=True)
class MixtureWeightLaw:
    """``Z = F(sigma*pi + sigma*U)`` with i.i.d. symmetric components ``U``.

    In sigmoid mode ``pi`` is a scalar and ``Z`` lies in (0, 1), read as the
    weights ``(Z, 1 - Z)``. In softmax mode ``pi`` has M entries and ``Z`` has
    M+1 coordinates, the last one carrying the implicit zero logit.
    """

    pi: object = 0.0
    sigma: object = 1.0
    component: str = "normal"
    mode: str = "sigmoid"

    def __post_init__(self):
        if float(value_of(self.sigma)) <= 0:
            raise DomainError("sigma must be positive")
        if self.component not in _COMPONENT_LAWS:
            raise UnsupportedError(f"unknown component law {self.component!r}")
        if self.mode not in ("sigmoid", "softmax"):
            raise UnsupportedError(f"unknown mode {self.mode!r}")
        if self.mode == "sigmoid" and np.ndim(value_of(self.pi)) != 0:
            raise DomainError("sigmoid mode takes a scalar pi")
        if self.mode == "softmax" and not isinstance(self.pi, Dual):
            object.__setattr__(self, "pi", np.atleast_1d(np.asarray(self.pi, dtype=float)))

    @classmethod
    def from_logit_shift(cls, shift, sigma, **kw) -> "MixtureWeightLaw":
        """Law of ``F(shift + sigma*U)``, i.e. ``pi = shift / sigma``."""
        return cls(pi=shift / sigma, sigma=sigma, **kw)

    @property
    def m(self) -> int:
        return 1 if self.mode == "sigmoid" else int(np.size(value_of(self.pi)))

    @property
    def component_law(self) -> QuantileFunction:
        return _COMPONENT_LAWS[self.component]()

    @property
    def map(self) -> Diffeomorphism:
        """``u -> F(sigma*pi + sigma*u)`` from R^M into the open simplex."""
        if self.mode == "sigmoid":
            return chain([affine(self.sigma * self.pi, self.sigma, 1), sigmoid_map()])
        return chain([affine(self.sigma * self.pi, self.sigma, self.m), centered_softmax(self.m)])

    def quantile_function(self) -> QuantileFunction:
        """Quantiles of the scalar weight ``Z`` (sigmoid mode only)."""
        if self.mode != "sigmoid":
            raise UnsupportedError("scalar quantiles exist only in sigmoid mode")
        law, shift, sigma = self.component_law, self.sigma * self.pi, self.sigma
        s0, sh0 = float(value_of(sigma)), float(value_of(shift))

        def cdf(z):
            z = np.asarray(z, dtype=float)
            with np.errstate(divide="ignore"):
                t = np.log(z) - np.log1p(-z)
            return law.cdf((t - sh0) / s0)

        return QuantileFunction(
            lambda p: sigmoid(shift + sigma * law.quantile(p)), (0.0, 1.0), cdf, self.density
        )

    def density(self, z):
        """Density of ``Z`` on (0, 1) in sigmoid mode; zero outside."""
        if self.mode != "sigmoid":
            raise UnsupportedError("density is provided for sigmoid mode")
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape)
        inside = (z > 0) & (z < 1)
        zi = z[inside]
        s0 = float(value_of(self.sigma))
        sh0 = s0 * float(value_of(self.pi))
        t = np.log(zi) - np.log1p(-zi)
        out[inside] = self.component_law.density((t - sh0) / s0) / (s0 * zi * (1.0 - zi))
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size: int):
        """``size`` draws: shape ``(size,)`` in sigmoid mode, ``(size, M+1)`` in softmax mode.

        A sigmoid-mode draw whose logit exceeds about 37 rounds to 1.0 in
        float64; softmax coordinates stay positive.
        """
        law = self.component_law
        # uniforms strictly inside (0, 1) so every quantile is finite
        u = law.quantile(np.clip(rng.random((size, self.m)), 1e-300, 1.0 - 2.0**-53))
        s, p = float(value_of(self.sigma)), np.asarray(value_of(self.pi), dtype=float)
        t = s * p + s * u
        if self.mode == "sigmoid":
            return sigmoid(t[:, 0])
        return centered_softmax(self.m)(t)


MIXTURE_SCHEMES = ("quantile-midpoint", "sqrt-quantile", "hermite-pushforward", "cubature")


def _as_simplex(grid: QuadratureGrid) -> QuadratureGrid:
    # softmax with one logit: coordinates (z, 1 - z)
    pts = grid.points
    if isinstance(pts, Dual):
        v = np.stack([pts.value, 1.0 - pts.value], axis=-1)
        d = np.stack([pts.deriv, -pts.deriv], axis=-1)
        pts = Dual(v, d)
    else:
        pts = np.stack([pts, 1.0 - pts], axis=-1)
    return QuadratureGrid(pts, grid.weights, grid.reparameterizable)


def mixture_weight_grid(law: MixtureWeightLaw, n: int, scheme: str) -> QuadratureGrid:
    """Grid over the mixture weights under one of :data:`MIXTURE_SCHEMES`.

    In sigmoid mode points are scalars in (0, 1). In softmax mode points are
    ``(N, M+1)`` simplex coordinates; the bounded-interval schemes are then
    available only for a single logit, and ``cubature`` is the M-logit rule.
    """
    if scheme not in MIXTURE_SCHEMES:
        raise UnsupportedError(f"unknown scheme {scheme!r}; expected one of {MIXTURE_SCHEMES}")
    softmax = law.mode == "softmax"
    if scheme == "cubature":
        if not softmax:
            raise UnsupportedError("the cubature scheme is defined in softmax mode")
        return cubature_constant_probability(n, law.m, law.component_law, law.map)
    if softmax and scheme == "sqrt-quantile":
        raise UnsupportedError("the sqrt-quantile scheme needs a bounded interval (sigmoid mode)")
    if softmax and law.m != 1:
        raise UnsupportedError(f"{scheme} in softmax mode needs M = 1; use cubature for M > 1")
    scalar = MixtureWeightLaw(law.pi if not softmax else law.pi[0], law.sigma, law.component)
    if scheme == "quantile-midpoint":
        grid = quantile_midpoint_bounded(scalar.quantile_function(), n)
    elif scheme == "sqrt-quantile":
        if isinstance(law.pi, Dual) or isinstance(law.sigma, Dual):
            raise UnsupportedError("sqrt-quantile grids are not differentiable in the law parameters")
        grid = sqrt_quantile_midpoint(scalar.density, (0.0, 1.0), n, cdf=scalar.quantile_function().cdf)
    else:
        if law.component != "normal":
            raise UnsupportedError("the Hermite pushforward needs a normal component law")
        grid = gauss_hermite_pushforward(n, scalar.map)
    return _as_simplex(grid) if softmax else grid


def prob_component_larger(law: MixtureWeightLaw, i: int, j: int, tol: float = 1e-12) -> float:
    """``P[Z^i > Z^j]`` under a softmax-mode law (index M is the zero-logit coordinate).

    Equals the survival function of ``U_i - U_j`` (one draw when ``j`` or
    ``i`` is M) at the logit gap; independent of ``sigma``.
    """
    m = law.m
    if i == j:
        raise DomainError("indices must differ")
    if not (0 <= i <= m and 0 <= j <= m):
        raise DomainError(f"indices must lie in 0..{m}")
    pis = np.append(np.atleast_1d(np.asarray(value_of(law.pi), dtype=float)), 0.0)
    gap = pis[i] - pis[j]
    g = law.component_law
    if j == m:
        return float(g.cdf(gap))
    if i == m:
        return float(1.0 - g.cdf(-gap))
    # P[U_j - U_i < gap] = int g(u) G(u + gap) du, by symmetry of g
    lo = float(g.quantile(1e-17)) - 1.0
    return adaptive_simpson(lambda u: g.density(u) * g.cdf(u + gap), lo, -lo, tol, initial=128)


# ---------------------------------------------------------------------------
# Vector diffeomixture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardNormalBase:
    """Standard normal base density on R^d."""

    dim: int

    def log_prob(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return -0.5 * np.sum(v * v, axis=-1) - 0.5 * self.dim * math.log(2.0 * math.pi)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.standard_normal((size, self.dim))


def _check_positive_definite(L: np.ndarray, m: int) -> None:
    sym = 0.5 * (L + L.T)
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        raise DomainError(f"scale of component {m} is not positive definite") from None


class VectorDiffeomixture:
    """``X = sum_m Z^m mu^m + (sum_m Z^m L^m) V`` with ``Z`` on a weight grid.

    ``locs`` has shape ``(M+1, d)`` and ``scales`` ``(M+1, d, d)``. A scalar
    weight grid (sigmoid mode) is read as coordinates ``(z, 1 - z)``.
    """

    def __init__(self, weights_grid: QuadratureGrid, locs, scales=None, base=None):
        locs = np.atleast_2d(np.asarray(locs, dtype=float))
        k, d = locs.shape
        if scales is None:
            scales = np.broadcast_to(np.eye(d), (k, d, d))
        scales = np.asarray(scales, dtype=float)
        if scales.ndim == 1 and d == 1:
            scales = scales[:, None, None]
        if scales.shape != (k, d, d):
            raise DomainError(f"scales must have shape {(k, d, d)}, got {scales.shape}")
        z = weights_grid.values
        if z.ndim == 1:
            z = np.stack([z, 1.0 - z], axis=-1)
        if z.shape[1] != k:
            raise DomainError(f"grid has {z.shape[1]} weight coordinates but there are {k} components")
        for m in range(k):
            _check_positive_definite(scales[m], m)
        self.grid = weights_grid
        self.locs = locs
        self.scales = scales
        self.dim = d
        self.base = base if base is not None else StandardNormalBase(d)
        self.coords = z
        self.mu_n = z @ locs
        self.L_n = np.einsum("nm,mij->nij", z, scales)
        self.L_inv = np.linalg.inv(self.L_n)
        self.log_det = np.linalg.slogdet(self.L_n)[1]
        self._log_w = np.log(weights_grid.weights)
        self._categorical = CategoricalIndex(weights_grid.weights)

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1 and self.dim > 1 or x.ndim == 0
        xb = x.reshape(-1, self.dim)
        # (N, B, d) @ (N, d, d): one batched solve per grid point
        diff = xb[None, :, :] - self.mu_n[:, None, :]
        v = np.matmul(diff, np.swapaxes(self.L_inv, -1, -2)).transpose(1, 0, 2)
        terms = self._log_w + self.base.log_prob(v) - self.log_det
        out = logsumexp(terms, axis=-1)
        return out[0] if single else out

    def density(self, x):
        return np.exp(self.log_density(x))

    def sample(self, rng: np.random.Generator, size: int, return_index: bool = False):
        idx = self._categorical.sample(rng, size)
        v = self.base.sample(rng, size)
        x = self.mu_n[idx] + np.einsum("bij,bj->bi", self.L_n[idx], v)
        return (x, idx) if return_index else x


def vdm_log_density(v: VectorDiffeomixture, x):
    return v.log_density(x)


def vdm_density(v: VectorDiffeomixture, x):
    return v.density(x)


def vdm_sample(v: VectorDiffeomixture, rng: np.random.Generator, size: int = 1):
    return v.sample(rng, size)
