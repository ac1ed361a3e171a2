"""Diffeomorphisms with exact change of variables, and pushforward densities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import (
    DomainError,
    Dual,
    absolute,
    concatenate,
    dsum,
    exp,
    log,
    logsumexp,
    sigmoid,
    value_of,
)

__all__ = [
    "Diffeomorphism",
    "PushforwardDensity",
    "identity",
    "affine",
    "sigmoid_map",
    "centered_softmax",
    "chain",
    "pushforward_density_at",
]


def _everywhere_for(dim: int):
    # dim == 1: a point is a scalar, a batch is 1-d; dim > 1: a batch is 2-d
    def contains(y):
        v = np.asarray(value_of(y))
        batched = v.ndim >= (1 if dim == 1 else 2)
        return np.ones(v.shape[0], dtype=bool) if batched else True

    return contains


_everywhere = _everywhere_for(1)


@dataclass(frozen=True)
class Diffeomorphism:
    """An invertible smooth map.

    ``log_abs_det_jacobian_inverse(y)`` is ``log |det D F^{-1}(y)|``.
    ``contains(y)`` reports whether ``y`` lies in the open image of the map;
    for batched points it returns one flag per leading index.
    """

    forward: Callable
    inverse: Callable
    log_abs_det_jacobian_inverse: Callable
    name: str = "diffeomorphism"
    contains: Callable = field(default=_everywhere, repr=False)

    def __call__(self, x):
        return self.forward(x)


def identity(dim: int = 1) -> Diffeomorphism:
    a = affine(0.0, 1.0, dim)
    return Diffeomorphism(
        forward=lambda x: x,
        inverse=lambda y: y,
        log_abs_det_jacobian_inverse=a.log_abs_det_jacobian_inverse,
        name="identity",
        contains=a.contains,
    )


def affine(shift=0.0, scale=1.0, dim: int = 1) -> Diffeomorphism:
    """``u -> shift + scale * u`` on R^dim with a scalar scale."""
    if float(value_of(scale)) == 0.0:
        raise DomainError("affine scale must be nonzero")
    if dim < 1:
        raise DomainError("dimension must be positive")
    log_det = -dim * log(absolute(scale))

    def ladj(y):
        v = np.asarray(value_of(y))
        if dim > 1 and v.ndim > 1:
            return log_det + np.zeros(v.shape[0])
        if dim == 1 and v.ndim >= 1:
            return log_det + np.zeros(v.shape)
        return log_det

    return Diffeomorphism(
        forward=lambda u: shift + scale * u,
        inverse=lambda y: (y - shift) / scale,
        log_abs_det_jacobian_inverse=ladj,
        name=f"affine(dim={dim})",
        contains=_everywhere_for(dim),
    )


def _logit(y):
    v = np.asarray(value_of(y), dtype=float)
    if np.any((v <= 0.0) | (v >= 1.0)):
        raise DomainError("logit needs points strictly inside (0, 1)")
    return log(y) - log(1.0 - y)


def sigmoid_map() -> Diffeomorphism:
    """``t -> e^t / (1 + e^t)`` from R onto (0, 1); the inverse is the logit."""

    def ladj(y):
        _logit(y)  # domain check
        return -log(y) - log(1.0 - y)

    return Diffeomorphism(
        forward=sigmoid,
        inverse=_logit,
        log_abs_det_jacobian_inverse=ladj,
        name="sigmoid",
        contains=lambda y: (np.asarray(value_of(y)) > 0.0) & (np.asarray(value_of(y)) < 1.0),
    )


def centered_softmax(m: int) -> Diffeomorphism:
    """Map M logits to the M+1 simplex coordinates with an implicit zero logit.

    Coordinates 0..M-1 are ``exp(t_i) / (1 + sum exp t)``, coordinate M is
    ``1 / (1 + sum exp t)``. Inputs have shape ``(..., M)``, outputs ``(..., M+1)``.
    """
    if m < 1:
        raise DomainError("centered softmax needs M >= 1")

    def forward(t):
        if isinstance(t, Dual):
            shape = t.shape
            if shape[-1] != m:
                raise DomainError(f"expected {m} logits, got shape {shape}")
            padded = concatenate([t, np.zeros(shape[:-1] + (1,))], axis=-1)
            shift = np.max(padded.value, axis=-1, keepdims=True)
            e = exp(padded - shift)
            total = dsum(e, axis=-1)
            return e / Dual(total.value[..., None], total.deriv[..., None])
        t = np.asarray(t, dtype=float)
        if t.shape[-1] != m:
            raise DomainError(f"expected {m} logits, got shape {t.shape}")
        padded = np.concatenate([t, np.zeros(t.shape[:-1] + (1,))], axis=-1)
        return np.exp(padded - logsumexp(padded, axis=-1)[..., None])

    def _check(y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != m + 1:
            raise DomainError(f"expected {m + 1} simplex coordinates, got shape {y.shape}")
        if np.any(y <= 0.0):
            raise DomainError("simplex point has a zero coordinate")
        return y

    def inverse(y):
        y = _check(y)
        return np.log(y[..., :m]) - np.log(y[..., m:])

    def ladj(y):
        # chart (y_0..y_{M-1}); det of the inverse Jacobian is 1 / prod(all y)
        return -np.sum(np.log(_check(y)), axis=-1)

    def contains(y):
        y = np.asarray(y, dtype=float)
        return np.all(y > 0.0, axis=-1) & (np.abs(np.sum(y, axis=-1) - 1.0) < 1e-9)

    return Diffeomorphism(forward, inverse, ladj, name=f"centered_softmax(M={m})", contains=contains)


def chain(parts: Sequence[Diffeomorphism]) -> Diffeomorphism:
    """Composition applying ``parts[0]`` first; an empty list is the identity."""
    parts = tuple(parts)
    if not parts:
        return identity()
    if len(parts) == 1:
        return parts[0]

    def forward(x):
        for p in parts:
            x = p.forward(x)
        return x

    def inverse(y):
        for p in reversed(parts):
            y = p.inverse(y)
        return y

    def ladj(y):
        total = 0.0
        for p in reversed(parts):
            total = total + p.log_abs_det_jacobian_inverse(y)
            y = p.inverse(y)
        return total

    def contains(y):
        ok = np.asarray(parts[-1].contains(y), dtype=bool)
        if ok.ndim == 0:
            if not ok:
                return False
            for i in range(len(parts) - 1, 0, -1):
                y = parts[i].inverse(y)
                if not parts[i - 1].contains(y):
                    return False
            return True
        ok = ok.copy()
        idx = np.flatnonzero(ok)
        sub = np.asarray(y)[idx]
        for i in range(len(parts) - 1, 0, -1):
            if not len(idx):
                break
            sub = parts[i].inverse(sub)
            good = np.asarray(parts[i - 1].contains(sub), dtype=bool)
            ok[idx[~good]] = False
            idx, sub = idx[good], sub[good]
        return ok

    return Diffeomorphism(
        forward, inverse, ladj, name="chain(" + ", ".join(p.name for p in parts) + ")", contains=contains
    )


@dataclass(frozen=True)
class PushforwardDensity:
    """Density of ``Y = F(X)`` given the density of ``X``."""

    base_density: Callable
    map: Diffeomorphism

    def __call__(self, y):
        return pushforward_density_at(self, y)


def pushforward_density_at(pd: PushforwardDensity, y):
    """``p_X(F^{-1}(y)) |det D F^{-1}(y)|``, and exactly 0 outside the open image.

    Accepts one point or a batch (leading axis).
    """
    F = pd.map
    inside = F.contains(y)
    if np.ndim(inside) == 0:
        if not inside:
            return 0.0
        try:
            x = F.inverse(y)
            return pd.base_density(x) * np.exp(F.log_abs_det_jacobian_inverse(y))
        except DomainError:
            return 0.0
    y = np.asarray(y, dtype=float)
    out = np.zeros(len(inside))
    if inside.any():
        yi = y[inside]
        out[inside] = pd.base_density(F.inverse(yi)) * np.exp(F.log_abs_det_jacobian_inverse(yi))
    return out
