"""Divergences between scalar densities, the scheme comparison sweep, and the
reparameterized gradient estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .distributions import (
    MixtureWeightLaw,
    UnsupportedError,
    VectorDiffeomixture,
    mixture_weight_grid,
)
from .numerics import (
    Dual,
    adaptive_simpson,
    sigmoid,
    std_normal_cdf,
    std_normal_pdf,
    value_of,
    deriv_of,
)
from .rng import stream

__all__ = [
    "SelfCheckError",
    "Mixture1D",
    "reduce_vdm_to_1d",
    "kl_divergence",
    "tv_distance",
    "SweepConfig",
    "DivergenceReport",
    "sweep_vdm",
    "reference_self_check",
    "run_sweep",
    "sweep_row",
    "summarize",
    "GradEstimate",
    "GradCase",
    "GRAD_CASES",
    "reparam_grad_estimate",
    "run_gradcheck",
    "count_local_maxima",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Mixture1D:
    """A finite mixture of unit-variance normals on the line."""

    means: np.ndarray
    weights: np.ndarray

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        d = x[..., None] - self.means
        t = np.log(self.weights) - 0.5 * d * d - _LOG_SQRT_2PI
        m = np.max(t, axis=-1, keepdims=True)
        out = np.log(np.sum(np.exp(t - m), axis=-1)) + m[..., 0]
        return out

    def __call__(self, x):
        return np.exp(self.log_density(x))

    @property
    def span(self) -> tuple[float, float]:
        return float(self.means.min()), float(self.means.max())


def reduce_vdm_to_1d(v: VectorDiffeomixture, tol: float = 1e-9) -> Mixture1D:
    """Law of ``<X, e>`` when all scales are the identity and the means lie on a line along ``e``.

    The part of ``X`` orthogonal to ``e`` is then the same unit normal for
    every grid point, so divergences between two such mixtures with the same
    components equal those of their reductions.
    """
    d = v.dim
    if not np.allclose(v.scales, np.eye(d), atol=tol, rtol=0):
        raise UnsupportedError("reduction needs identity scales")
    diffs = v.locs - v.locs[0]
    norms = np.linalg.norm(diffs, axis=1)
    if norms.max() > 0:
        e = diffs[int(np.argmax(norms))] / norms.max()
    elif np.linalg.norm(v.locs[0]) > 0:
        e = v.locs[0] / np.linalg.norm(v.locs[0])
    else:
        e = np.eye(d)[0]
    # orient e so that its first nonzero coordinate is positive
    lead = e[np.flatnonzero(np.abs(e) > 1e-12)[0]]
    e = e if lead > 0 else -e
    proj = v.locs @ e
    residual = v.locs - proj[:, None] * e
    if not np.allclose(residual, residual[0], atol=tol * max(1.0, np.abs(v.locs).max()), rtol=0):
        raise UnsupportedError("component means are not colinear")
    return Mixture1D(v.mu_n @ e, np.asarray(v.grid.weights))


def _log_fn(f):
    if hasattr(f, "log_density"):
        return f.log_density
    def log_f(x):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(f(x), dtype=float))

    return log_f


def _support_of(a, b, support):
    if support is not None:
        return float(support[0]), float(support[1])
    spans = [f.span for f in (a, b) if hasattr(f, "span")]
    if not spans:
        raise ValueError("support must be given for plain density callables")
    return min(s[0] for s in spans) - 10.0, max(s[1] for s in spans) + 10.0


def kl_divergence(a, b, support=None, tol: float = 1e-6, clip: bool = True) -> float:
    """``KL(a || b) = int a log(a / b)`` by adaptive Simpson to absolute ``tol``.

    Returns ``inf`` when ``b`` vanishes where ``a`` does not. ``a`` and ``b``
    may be density callables or objects with ``log_density`` (preferred,
    since it keeps the log ratio accurate in the tails).
    """
    lo, hi = _support_of(a, b, support)
    la, lb = _log_fn(a), _log_fn(b)

    def integrand(x):
        u, w = la(x), lb(x)
        with np.errstate(invalid="ignore", over="ignore"):
            out = np.exp(u) * (u - w)
        out = np.where(np.isneginf(u), 0.0, out)
        return np.where(np.isneginf(w) & ~np.isneginf(u), np.inf, out)

    with np.errstate(invalid="ignore"):
        val = adaptive_simpson(integrand, lo, hi, tol, initial=256)
    if not math.isfinite(val):
        return math.inf
    return max(val, 0.0) if clip else val


def tv_distance(a, b, support=None, tol: float = 1e-6) -> float:
    """``(1/2) int |a - b|``, clamped into [0, 1]."""
    lo, hi = _support_of(a, b, support)
    val = 0.5 * adaptive_simpson(lambda x: np.abs(a(x) - b(x)), lo, hi, tol, initial=256)
    return min(max(val, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Scheme comparison sweep
# ---------------------------------------------------------------------------

SCHEME_LABELS = {
    "sqrt-quantile": "SqrtQuantMidpt",
    "quantile-midpoint": "QuantMidpt",
    "hermite-pushforward": "PushFwdHermite",
    "cubature": "Cubature",
}


class SelfCheckError(RuntimeError):
    """The reference grids of a sweep do not agree with each other."""


@dataclass(frozen=True)
class SweepConfig:
    """Sets swept over, plus the fixed geometry.

    Two components sit at ``+mu * 1`` and ``-mu * 1`` in R^dim with identity
    scales. With ``bias="logit-shift"`` the mixture weight is
    ``sigmoid(pi + sigma*U)``; with ``bias="scaled"`` it is
    ``sigmoid(sigma*pi + sigma*U)``.
    """

    pis: tuple = (0.0,)
    sigmas: tuple = (2.0,)
    ns: tuple = (10,)
    mus: tuple = (2.0,)
    dim: int = 10
    reference_n: int = 150
    schemes: tuple = ("sqrt-quantile", "quantile-midpoint", "hermite-pushforward")
    reference_scheme: str = "quantile-midpoint"
    bias: str = "logit-shift"
    tol: float = 1e-6
    self_check_schemes: tuple = ("sqrt-quantile", "quantile-midpoint")
    self_check_tol: float = 1e-3

    def __post_init__(self):
        for name in ("pis", "sigmas", "ns", "mus", "schemes", "self_check_schemes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.ns or not self.schemes:
            raise ValueError("need at least one N and one scheme")
        if self.reference_n <= max(self.ns):
            raise ValueError("reference_n must exceed every swept N")
        if self.dim < 1 or min(self.ns) < 1:
            raise ValueError("dim and every N must be positive")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be positive")
        if self.bias not in ("logit-shift", "scaled"):
            raise ValueError("bias must be 'logit-shift' or 'scaled'")
        for s in self.schemes + (self.reference_scheme,):
            if s not in SCHEME_LABELS:
                raise ValueError(f"unknown scheme {s!r}")

    @classmethod
    def standard(cls) -> "SweepConfig":
        """The standard comparison: 80 configurations, three schemes."""
        return cls(
            pis=(0.0, 0.5, 1.0, 1.5, 2.5),
            sigmas=(2.0, 5.0),
            ns=(5, 10, 20, 50),
            mus=(2.0, 4.0),
            dim=10,
            reference_n=150,
        )


@dataclass(frozen=True)
class DivergenceReport:
    pi: float
    sigma: float
    n: int
    mu: float
    scheme: str
    kl_q_p: float = math.nan
    kl_p_q: float = math.nan
    tv: float = math.nan
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def sweep_vdm(pi: float, sigma: float, mu: float, n: int, scheme: str, dim: int, bias: str) -> VectorDiffeomixture:
    """The two-component mixture used by the sweep."""
    if bias == "logit-shift":
        law = MixtureWeightLaw.from_logit_shift(pi, sigma)
    else:
        law = MixtureWeightLaw(pi, sigma)
    if scheme == "cubature":
        law = MixtureWeightLaw(law.pi, law.sigma, mode="softmax")
    grid = mixture_weight_grid(law, n, scheme)
    locs = np.stack([np.full(dim, mu), np.full(dim, -mu)])
    return VectorDiffeomixture(grid, locs)


def reference_self_check(cfg: SweepConfig) -> float:
    """Largest TV between reference-size grids of the self-check schemes.

    Raises :class:`SelfCheckError` when it exceeds ``cfg.self_check_tol``.
    """
    worst = 0.0
    schemes = cfg.self_check_schemes
    for pi in sorted(cfg.pis):
        for sigma in sorted(cfg.sigmas):
            for mu in sorted(cfg.mus):
                refs = [
                    reduce_vdm_to_1d(sweep_vdm(pi, sigma, mu, cfg.reference_n, s, cfg.dim, cfg.bias))
                    for s in schemes
                ]
                for i in range(len(refs)):
                    for j in range(i + 1, len(refs)):
                        worst = max(worst, tv_distance(refs[i], refs[j], tol=cfg.tol))
    if worst > cfg.self_check_tol:
        raise SelfCheckError(f"reference grids disagree: TV {worst:.3g} > {cfg.self_check_tol}")
    return worst


def run_sweep(cfg: SweepConfig, self_check: bool = True) -> list[DivergenceReport]:
    """One report per (pi, sigma, N, mu, scheme), in that nesting order.

    Numeric sets are visited in increasing order and schemes in the order
    given. A failing configuration yields a report with ``error`` set.
    """
    if self_check:
        reference_self_check(cfg)
    rows = []
    refs: dict = {}
    for pi in sorted(cfg.pis):
        for sigma in sorted(cfg.sigmas):
            for n in sorted(cfg.ns):
                for mu in sorted(cfg.mus):
                    key = (pi, sigma, mu)
                    if key not in refs:
                        refs[key] = reduce_vdm_to_1d(
                            sweep_vdm(pi, sigma, mu, cfg.reference_n, cfg.reference_scheme, cfg.dim, cfg.bias)
                        )
                    p = refs[key]
                    for scheme in cfg.schemes:
                        rows.append(sweep_row(cfg, pi, sigma, n, mu, scheme, p))
    return rows


def sweep_row(cfg: SweepConfig, pi, sigma, n, mu, scheme, reference: Optional[Mixture1D] = None) -> DivergenceReport:
    """Divergences of one configuration against the reference mixture (built if not given)."""
    try:
        p = reference
        if p is None:
            p = reduce_vdm_to_1d(
                sweep_vdm(pi, sigma, mu, cfg.reference_n, cfg.reference_scheme, cfg.dim, cfg.bias)
            )
        q = reduce_vdm_to_1d(sweep_vdm(pi, sigma, mu, n, scheme, cfg.dim, cfg.bias))
        return DivergenceReport(
            pi, sigma, n, mu, scheme,
            kl_q_p=kl_divergence(q, p, tol=cfg.tol),
            kl_p_q=kl_divergence(p, q, tol=cfg.tol),
            tv=tv_distance(p, q, tol=cfg.tol),
        )
    except Exception as exc:  # recorded per row; the sweep continues
        return DivergenceReport(pi, sigma, n, mu, scheme, error=f"{type(exc).__name__}: {exc}")


def summarize(rows: Sequence[DivergenceReport]) -> dict:
    """Mean divergences per scheme, and mean TV per (N, scheme), over rows without errors."""
    by_scheme: dict = {}
    by_n: dict = {}
    for r in rows:
        if not r.ok:
            continue
        by_scheme.setdefault(r.scheme, []).append((r.kl_q_p, r.kl_p_q, r.tv))
        by_n.setdefault((r.n, r.scheme), []).append(r.tv)
    return {
        "scheme": {
            s: dict(zip(("kl_q_p", "kl_p_q", "tv"), np.mean(np.array(v), axis=0).tolist()))
            for s, v in by_scheme.items()
        },
        "tv_by_n": {k: float(np.mean(v)) for k, v in sorted(by_n.items(), key=lambda kv: kv[0][0])},
    }


# ---------------------------------------------------------------------------
# Reparameterized gradients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradEstimate:
    value_mean: float
    grad_mean: float
    k: int
    stderr_value: float
    stderr_grad: float


def _stderr(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def reparam_grad_estimate(
    transform: Callable,
    sampler: Callable,
    phi: Callable,
    lambda0: float,
    k: int,
    seed=0,
) -> GradEstimate:
    """Sample mean of ``phi(F(X_k; lambda))`` and of its pathwise derivative.

    ``transform(x, lam)`` and ``phi`` must accept a dual ``lam`` (and arrays);
    ``sampler(rng, k)`` returns the k parameter-free draws, used once for
    both the value and the derivative.
    """
    if k < 1:
        raise ValueError("K must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "reparam-grad")
    x = np.asarray(sampler(rng, k), dtype=float)
    out = phi(transform(x, Dual.variable(float(lambda0))))
    vals = np.broadcast_to(np.asarray(value_of(out), dtype=float), (k,))
    grads = np.broadcast_to(np.asarray(deriv_of(out), dtype=float), (k,))
    bad = ~(np.isfinite(vals) & np.isfinite(grads))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"non-finite loss or derivative at sample {i}")
    return GradEstimate(float(np.mean(vals)), float(np.mean(grads)), k, _stderr(vals), _stderr(grads))


def _normal_sampler(rng, k):
    return rng.standard_normal(k)


def _smooth_true_grad(lam: float, h: float = 1e-4) -> float:
    # derivative of E[sigmoid(lam + U)^2] by central difference of the integral
    def expect(l):
        return adaptive_simpson(lambda u: sigmoid(l + u) ** 2 * std_normal_pdf(u), -12.0, 12.0, 1e-14, 256)

    return (expect(lam + h) - expect(lam - h)) / (2.0 * h)


def _step(y):
    # indicator of y > 0: its pathwise derivative is zero wherever it exists
    return (np.asarray(value_of(y)) > 0).astype(float)


@dataclass(frozen=True)
class GradCase:
    name: str
    transform: Callable
    phi: Callable
    lambda0: float
    true_grad: Callable
    known_biased: bool = False


GRAD_CASES = {
    "linear": GradCase("linear", lambda x, l: l + x, lambda y: y, 1.0, lambda l: 1.0),
    "quadratic": GradCase("quadratic", lambda x, l: l + x, lambda y: y * y, 1.0, lambda l: 2.0 * l),
    "sigmoid-smooth": GradCase(
        "sigmoid-smooth", lambda x, l: sigmoid(l + x), lambda y: y * y, 0.3, _smooth_true_grad
    ),
    "abs": GradCase(
        "abs", lambda x, l: x - l, lambda y: abs(y), 0.5, lambda l: 2.0 * std_normal_cdf(l) - 1.0
    ),
    "step": GradCase(
        "step", lambda x, l: x - l, _step, 0.5, lambda l: -std_normal_pdf(l), known_biased=True
    ),
}


@dataclass(frozen=True)
class GradCheck:
    case: str
    estimate: GradEstimate
    true_grad: float
    passed: bool
    known_biased: bool


def run_gradcheck(case: str, k: int = 100_000, seed: int = 0, lambda0: Optional[float] = None) -> GradCheck:
    """Compare the pathwise estimate with the exact derivative of the expectation.

    Smooth and Lipschitz cases pass when they agree within 4 standard errors.
    The step case passes when the estimate is exactly zero, and is flagged
    as known to be biased.
    """
    if case not in GRAD_CASES:
        raise KeyError(f"unknown case {case!r}; expected one of {sorted(GRAD_CASES)}")
    c = GRAD_CASES[case]
    lam = c.lambda0 if lambda0 is None else lambda0
    est = reparam_grad_estimate(c.transform, _normal_sampler, c.phi, lam, k, stream(seed, f"gradcheck/{case}"))
    truth = float(c.true_grad(lam))
    if c.known_biased:
        passed = est.grad_mean == 0.0
    else:
        # the additive slack only matters when the estimator has zero variance
        passed = abs(est.grad_mean - truth) <= 4.0 * est.stderr_grad + 1e-12
    return GradCheck(case, est, truth, passed, c.known_biased)


def count_local_maxima(f: Callable, a: float, b: float, n: int = 4001, rel_tol: float = 1e-12) -> int:
    """Number of strict interior local maxima of ``f`` sampled on ``n`` points of [a, b]."""
    y = np.asarray(f(np.linspace(a, b, n)), dtype=float)
    d = np.diff(y)
    d[np.abs(d) <= rel_tol * np.max(np.abs(y))] = 0.0
    signs = np.sign(d[d != 0])
    return int(np.sum((signs[:-1] > 0) & (signs[1:] < 0)))
