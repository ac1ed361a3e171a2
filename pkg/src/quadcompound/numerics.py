"""Scalar special functions, forward-mode dual numbers and quadrature rules.

Everything here accepts either plain floats, numpy arrays, or :class:`Dual`
values, so the same code path that builds a grid or evaluates a density can
also carry a derivative with respect to one distribution parameter.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DomainError",
    "Dual",
    "value_of",
    "deriv_of",
    "exp",
    "log",
    "sqrt",
    "sigmoid",
    "log_sigmoid",
    "absolute",
    "logsumexp",
    "dsum",
    "concatenate",
    "std_normal_pdf",
    "std_normal_logpdf",
    "std_normal_cdf",
    "std_normal_quantile",
    "lognormal_quantile",
    "HermiteRule",
    "hermite_rule",
    "adaptive_simpson",
    "adaptive_simpson_cells",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_LOG_SQRT2PI = 0.5 * math.log(2.0 * math.pi)


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class Dual:
    """First-order dual number ``value + deriv * eps`` with ``eps**2 = 0``.

    ``value`` and ``deriv`` may be floats or equally shaped numpy arrays; the
    arithmetic is elementwise in the array case.
    """

    __slots__ = ("value", "deriv")
    # Make ``ndarray <op> Dual`` defer to the reflected Dual method.
    __array_ufunc__ = None

    def __init__(self, value, deriv=0.0):
        self.value = value
        self.deriv = deriv

    @classmethod
    def variable(cls, value) -> "Dual":
        """Seed the designated parameter: d/dλ λ = 1."""
        return cls(value, np.ones_like(value) if isinstance(value, np.ndarray) else 1.0)

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.deriv!r})"

    def __float__(self) -> float:
        return float(self.value)

    def __getitem__(self, idx):
        return Dual(np.asarray(self.value)[idx], np.broadcast_to(self.deriv, np.shape(self.value))[idx])

    def __len__(self) -> int:
        return len(self.value)

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.deriv + other.deriv)
        return Dual(self.value + other, self.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.deriv - other.deriv)
        return Dual(self.value - other, self.deriv)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.deriv)

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.deriv + self.deriv * other.value,
            )
        return Dual(self.value * other, self.deriv * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value / other.value,
                (self.deriv * other.value - self.value * other.deriv)
                / (other.value * other.value),
            )
        return Dual(self.value / other, self.deriv / other)

    def __rtruediv__(self, other):
        return Dual(other / self.value, -other * self.deriv / (self.value * self.value))

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            return exp(exponent * log(self))
        return Dual(
            self.value**exponent,
            exponent * self.value ** (exponent - 1) * self.deriv,
        )

    def __rpow__(self, base):
        return exp(self * math.log(base))

    def __abs__(self):
        return absolute(self)

    # Ordering compares values only, which is what sorting and bracketing need.
    def __lt__(self, other):
        return self.value < value_of(other)

    def __le__(self, other):
        return self.value <= value_of(other)

    def __gt__(self, other):
        return self.value > value_of(other)

    def __ge__(self, other):
        return self.value >= value_of(other)


def value_of(x):
    """Primal value of a dual, or ``x`` itself. Object arrays of duals are unpacked."""
    if isinstance(x, Dual):
        return x.value
    if isinstance(x, np.ndarray) and x.dtype == object:
        return np.array([value_of(e) for e in x.ravel()], dtype=float).reshape(x.shape)
    return x


def deriv_of(x):
    """Tangent of a dual (zero for constants). Object arrays are unpacked."""
    if isinstance(x, Dual):
        return x.deriv
    if isinstance(x, np.ndarray):
        if x.dtype == object:
            return np.array([deriv_of(e) for e in x.ravel()], dtype=float).reshape(x.shape)
        return np.zeros_like(x, dtype=float)
    return 0.0


def dsum(x, axis=None):
    """``np.sum`` that also sums the tangent of a dual."""
    if isinstance(x, Dual):
        d = np.broadcast_to(x.deriv, np.shape(x.value))
        return Dual(np.sum(x.value, axis=axis), np.sum(d, axis=axis))
    return np.sum(x, axis=axis)


def concatenate(parts, axis=0):
    """``np.concatenate`` over a mix of floats, arrays and duals."""
    if not any(isinstance(p, Dual) for p in parts):
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts], axis=axis)
    values, derivs = [], []
    for p in parts:
        v = np.atleast_1d(np.asarray(value_of(p), dtype=float))
        d = np.broadcast_to(deriv_of(p), np.shape(value_of(p))) if isinstance(p, Dual) else np.zeros_like(v)
        values.append(v)
        derivs.append(np.atleast_1d(np.asarray(d, dtype=float)))
    return Dual(np.concatenate(values, axis=axis), np.concatenate(derivs, axis=axis))


def _lift(f, df):
    """Build a dual-aware unary function from ``f`` and its derivative."""

    def g(x):
        if isinstance(x, Dual):
            v = f(x.value)
            return Dual(v, df(x.value, v) * x.deriv)
        if isinstance(x, np.ndarray) and x.dtype == object:
            return np.array([g(e) for e in x.ravel()], dtype=object).reshape(x.shape)
        return f(x)

    return g


def _np_sigmoid(t):
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    out = np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def _np_log_sigmoid(t):
    t = np.asarray(t, dtype=float)
    out = np.minimum(t, 0.0) - np.log1p(np.exp(-np.abs(t)))
    return out if out.ndim else float(out)


def _np_exp(x):
    out = np.exp(x)
    return float(out) if np.ndim(out) == 0 else out


def _np_log(x):
    with np.errstate(divide="ignore"):
        out = np.log(x)
    return float(out) if np.ndim(out) == 0 else out


def _np_sqrt(x):
    out = np.sqrt(x)
    return float(out) if np.ndim(out) == 0 else out


exp = _lift(_np_exp, lambda x, v: v)
log = _lift(_np_log, lambda x, v: 1.0 / x)
sqrt = _lift(_np_sqrt, lambda x, v: 0.5 / v)
sigmoid = _lift(_np_sigmoid, lambda x, v: v * (1.0 - v))
log_sigmoid = _lift(_np_log_sigmoid, lambda x, v: 1.0 - _np_sigmoid(x))
absolute = _lift(np.abs, lambda x, v: np.sign(x))


def logsumexp(terms, axis=None):
    """``log(sum(exp(terms)))`` with max-subtraction.

    ``terms`` may be a float array (reduced over ``axis``) or a sequence of
    scalars some of which are :class:`Dual`.
    """
    if isinstance(terms, np.ndarray) and terms.dtype != object:
        m = np.max(terms, axis=axis, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            out = np.log(np.sum(np.exp(terms - m), axis=axis, keepdims=True)) + m
        if axis is None:
            return float(out.reshape(()))
        return np.squeeze(out, axis=axis)
    if isinstance(terms, Dual):
        v = np.asarray(terms.value, dtype=float)
        m = np.max(v, axis=axis, keepdims=axis is not None)
        e = exp(terms - m)
        total = dsum(e, axis=axis)
        m = np.squeeze(m, axis=axis) if axis is not None else m
        return log(total) + m
    terms = list(terms)
    m = max(float(value_of(t)) for t in terms)
    if not math.isfinite(m):
        return m
    total = 0.0
    for t in terms:
        total = exp(t - m) + total
    return log(total) + m


# ---------------------------------------------------------------------------
# Standard normal
# ---------------------------------------------------------------------------

_erfc = np.vectorize(math.erfc, otypes=[float])


def _cdf_float(x):
    if isinstance(x, np.ndarray):
        return 0.5 * _erfc(-x / _SQRT2)
    return 0.5 * math.erfc(-x / _SQRT2)


def _pdf_float(x):
    out = np.exp(-0.5 * np.asarray(x, dtype=float) ** 2) / _SQRT2PI
    return out if out.ndim else float(out)


std_normal_pdf = _lift(_pdf_float, lambda x, v: -x * v)
std_normal_cdf = _lift(_cdf_float, lambda x, v: _pdf_float(x))
std_normal_cdf.__doc__ = "Standard normal cdf via the complementary error function."


def std_normal_logpdf(x):
    return -0.5 * x * x - _LOG_SQRT2PI


# Acklam's rational approximation for the lower region / central region.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _quantile_lower_half(p: float) -> float:
    # p in (0, 0.5]; the upper half is reflected so 1 - p stays exact.
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    # One Halley step against the erfc-based cdf.
    e = 0.5 * math.erfc(-x / _SQRT2) - p
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def _quantile_float(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal quantile needs 0 < p < 1, got {p!r}")
    if p > 0.5:
        return -_quantile_lower_half(1.0 - p)
    return _quantile_lower_half(p)


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on (0, 1).

    Accepts floats, float arrays and duals; raises :class:`DomainError` for
    any probability outside the open unit interval.
    """
    if isinstance(p, Dual):
        x = std_normal_quantile(p.value)
        return Dual(x, p.deriv / _pdf_float(x))
    if isinstance(p, np.ndarray):
        if p.dtype == object:
            return np.array([std_normal_quantile(e) for e in p.ravel()], dtype=object).reshape(p.shape)
        return np.array([_quantile_float(float(e)) for e in p.ravel()]).reshape(p.shape)
    return _quantile_float(float(p))


def lognormal_quantile(p, mu, sigma):
    """``exp(mu + sigma * Phi^-1(p))``; any argument may be a dual."""
    if float(value_of(sigma)) <= 0.0:
        raise DomainError("lognormal scale must be positive")
    return exp(mu + sigma * std_normal_quantile(p))


# ---------------------------------------------------------------------------
# Gauss-Hermite (probabilists', weights sum to one)
# ---------------------------------------------------------------------------


class HermiteRule:
    """Nodes/weights integrating against the standard normal density."""

    __slots__ = ("order", "nodes", "weights")

    def __init__(self, order: int, nodes: np.ndarray, weights: np.ndarray):
        self.order = order
        self.nodes = nodes
        self.weights = weights
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    def __repr__(self) -> str:
        return f"HermiteRule(order={self.order})"

    def expect(self, f) -> float:
        """Approximate ``E[f(U)]`` for ``U ~ N(0, 1)``."""
        return float(np.sum(self.weights * f(self.nodes)))


_PIM4 = math.pi ** -0.25


def _hermite_orthonormal(z: float, n: int) -> tuple[float, float]:
    # Orthonormal physicists' Hermite recurrence: returns (h_n(z), h_{n-1}(z)).
    p1, p2 = _PIM4, 0.0
    for j in range(1, n + 1):
        p3, p2 = p2, p1
        p1 = z * math.sqrt(2.0 / j) * p2 - math.sqrt((j - 1.0) / j) * p3
    return p1, p2


def _count_roots_above(z: float, n: int) -> int:
    # Sturm property of orthogonal polynomials: sign changes in h_0..h_n(z)
    # equal the number of roots of h_n greater than z.
    p1, p2 = _PIM4, 0.0
    changes = 0
    last = 1.0
    for j in range(1, n + 1):
        p3, p2 = p2, p1
        p1 = z * math.sqrt(2.0 / j) * p2 - math.sqrt((j - 1.0) / j) * p3
        if p1 != 0.0:
            if (p1 > 0.0) != (last > 0.0):
                changes += 1
            last = p1
    return changes


def hermite_rule(n: int) -> HermiteRule:
    """Gauss-Hermite rule of order ``n`` for the standard normal weight.

    Each positive root is isolated by Sturm-count bisection on the three-term
    recurrence (seeded with the usual asymptotic guess) and then polished by
    Newton steps kept inside the bracket.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DomainError(f"Hermite order must be a positive integer, got {n!r}")
    if n > 200:
        raise DomainError("Hermite order above 200 is not supported")
    n = int(n)
    m = (n + 1) // 2
    roots = np.zeros(m)
    weights = np.zeros(m)
    n_positive = n // 2
    z = 0.0
    for i in range(m):
        if i == n_positive:
            z = 0.0  # odd order: the middle root
        else:
            if i == 0:
                z = math.sqrt(2 * n + 1) - 1.85575 * (2 * n + 1) ** (-0.16667)
            elif i == 1:
                z -= 1.14 * n**0.426 / z
            elif i == 2:
                z = 1.86 * z - 0.86 * roots[0]
            elif i == 3:
                z = 1.91 * z - 0.91 * roots[1]
            else:
                z = 2.0 * z - roots[i - 2]
            lo = 0.0
            hi = roots[i - 1] if i else math.sqrt(2 * n + 1) + 1.0
            if lo < z < hi:
                if _count_roots_above(z, n) >= i + 1:
                    lo = z
                else:
                    hi = z
            while not (_count_roots_above(lo, n) == i + 1 and _count_roots_above(hi, n) == i):
                mid = 0.5 * (lo + hi)
                if _count_roots_above(mid, n) >= i + 1:
                    lo = mid
                else:
                    hi = mid
            z = 0.5 * (lo + hi)
            # sign just below the (i+1)-th largest root; lo itself may be the root at 0
            lo_positive = i % 2 == 1
            for _ in range(200):
                p1, p2 = _hermite_orthonormal(z, n)
                if p1 == 0.0:
                    break
                if (p1 > 0.0) == lo_positive:
                    lo = z
                else:
                    hi = z
                step = p1 / (math.sqrt(2.0 * n) * p2)
                z_new = z - step
                if not lo < z_new < hi:
                    z_new = 0.5 * (lo + hi)
                if abs(z_new - z) <= 4e-16 * max(1.0, abs(z)) or hi - lo <= 4e-16 * hi:
                    z = z_new
                    break
                z = z_new
        p1, p2 = _hermite_orthonormal(z, n)
        pp = math.sqrt(2.0 * n) * p2
        roots[i] = z
        weights[i] = 2.0 / (pp * pp)
    # roots are descending positives; mirror to an ascending symmetric layout
    pos = roots[::-1] * _SQRT2
    wpos = weights[::-1]
    if n % 2:
        nodes = np.concatenate([-pos[:0:-1], pos])
        w = np.concatenate([wpos[:0:-1], wpos])
    else:
        nodes = np.concatenate([-pos[::-1], pos])
        w = np.concatenate([wpos[::-1], wpos])
    w = w / math.fsum(w)
    return HermiteRule(n, nodes, w)


# ---------------------------------------------------------------------------
# Adaptive Simpson, vectorised over subintervals
# ---------------------------------------------------------------------------


def adaptive_simpson_cells(f, edges, tol: float = 1e-10, max_depth: int = 40) -> np.ndarray:
    """Integrate ``f`` over each cell ``[edges[i], edges[i+1]]``.

    ``f`` must accept a float array. The absolute tolerance ``tol`` is shared
    among cells in proportion to their width. Returns one integral per cell.
    """
    edges = np.asarray(edges, dtype=float)
    width_total = edges[-1] - edges[0]
    out = np.zeros(len(edges) - 1)
    if width_total <= 0:
        return out
    a, b = edges[:-1].copy(), edges[1:].copy()
    owner = np.arange(len(a))
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    for depth in range(max_depth + 1):
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        refined = left + right
        err = np.abs(refined - whole) / 15.0
        budget = tol * (b - a) / width_total
        done = (err <= budget) | (depth == max_depth) | ~np.isfinite(err)
        np.add.at(out, owner[done], (refined + (refined - whole) / 15.0)[done])
        keep = ~done
        if not keep.any():
            break
        # split the survivors into their two halves
        a = np.concatenate([a[keep], m[keep]])
        b = np.concatenate([m[keep], b[keep]])
        fa_new = np.concatenate([fa[keep], fm[keep]])
        fb_new = np.concatenate([fm[keep], fb[keep]])
        fm = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        owner = np.concatenate([owner[keep], owner[keep]])
        fa, fb = fa_new, fb_new
        m = 0.5 * (a + b)
    return out


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, initial: int = 64) -> float:
    """Integral of vectorised ``f`` over ``[a, b]`` to absolute tolerance ``tol``."""
    edges = np.linspace(a, b, initial + 1)
    return float(math.fsum(adaptive_simpson_cells(f, edges, tol)))
