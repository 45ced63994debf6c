"""Ambient-space geometry: Euclidean, product, and Heisenberg spaces.

Points are stored as flat real arrays so bulk evaluation stays cache
friendly.  A Heisenberg point (z, t) with z in C^n is laid out as
(x_1..x_n, y_1..y_n, t) where z_j = x_j + i*y_j.  All operations accept
arrays of shape (..., dim) and broadcast over leading axes.
"""

import numpy as np
from dataclasses import dataclass

EUCLIDEAN = "euclidean"
PRODUCT = "product"
HEISENBERG = "heisenberg"

FULL_NORM = "full_norm"
HORIZONTAL = "horizontal"
PARTIAL_FIRST_FACTOR = "partial_first_factor"

_VALID_WEIGHTS = {
    EUCLIDEAN: (FULL_NORM,),
    PRODUCT: (PARTIAL_FIRST_FACTOR,),
    HEISENBERG: (FULL_NORM, HORIZONTAL),
}


@dataclass(frozen=True)
class SpaceSpec:
    """One of the three ambient spaces together with its weight kind.

    kind        -- "euclidean", "product" or "heisenberg"
    n           -- Euclidean dimension / second-factor dimension / complex
                   Heisenberg dimension
    m           -- first-factor dimension (product spaces only)
    weight_kind -- which norm the weights |.|^(-a) are built from:
                   "full_norm" uses the (homogeneous) norm of the point,
                   "horizontal" uses |z| on the Heisenberg group,
                   "partial_first_factor" uses |x'| on a product space.
    """

    kind: str
    n: int
    m: int = 0
    weight_kind: str = FULL_NORM

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, PRODUCT, HEISENBERG):
            raise ValueError("unknown space kind %r" % (self.kind,))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == PRODUCT and self.m < 1:
            raise ValueError("product space needs m >= 1")
        if self.kind != PRODUCT and self.m != 0:
            raise ValueError("m is only meaningful for product spaces")
        if self.weight_kind not in _VALID_WEIGHTS[self.kind]:
            raise ValueError(
                "weight kind %r not valid on %r" % (self.weight_kind, self.kind)
            )

    @property
    def ambient_dim(self):
        """Length of the coordinate vector."""
        if self.kind == HEISENBERG:
            return 2 * self.n + 1
        return self.m + self.n

    @property
    def homogeneous_dimension(self):
        """Exponent controlling volume under dilations (Q = 2n+2 on H^n)."""
        if self.kind == HEISENBERG:
            return 2 * self.n + 2
        return self.m + self.n

    @property
    def weight_dimension(self):
        """Dimension of the factor carrying the weight singularity."""
        if self.weight_kind == HORIZONTAL:
            return 2 * self.n
        if self.weight_kind == PARTIAL_FIRST_FACTOR:
            return self.m
        return self.homogeneous_dimension


def euclidean(n):
    return SpaceSpec(EUCLIDEAN, n)


def product(m, n):
    return SpaceSpec(PRODUCT, n, m, PARTIAL_FIRST_FACTOR)


def heisenberg(n, weight_kind=FULL_NORM):
    return SpaceSpec(HEISENBERG, n, 0, weight_kind)


def _check_dim(u, spec):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != spec.ambient_dim:
        raise ValueError(
            "point has %d coordinates, space needs %d"
            % (u.shape[-1], spec.ambient_dim)
        )
    return u


def identity(spec):
    return np.zeros(spec.ambient_dim)


def group_mul(u, v, spec):
    """Group product.  Vector addition except on the Heisenberg group, where

        (z,t)(z',t') = (z + z', t + t' + 2 Im(z . conj(z')))

    and Im(z . conj(z')) = sum_j (y_j x'_j - x_j y'_j).  The sign is pinned
    by requiring (z,t)(-z,-t) = 0 under this product.
    """
    u = _check_dim(u, spec)
    v = _check_dim(v, spec)
    if spec.kind != HEISENBERG:
        return u + v
    n = spec.n
    x, y, t = u[..., :n], u[..., n:2 * n], u[..., 2 * n]
    xp, yp, tp = v[..., :n], v[..., n:2 * n], v[..., 2 * n]
    out = np.empty(np.broadcast(u, v).shape)
    out[..., :n] = x + xp
    out[..., n:2 * n] = y + yp
    out[..., 2 * n] = t + tp + 2.0 * np.sum(y * xp - x * yp, axis=-1)
    return out


def group_inv(u, spec):
    """Group inverse; on H^n this is (z,t) -> (-z,-t)."""
    u = _check_dim(u, spec)
    return -u


def homogeneous_norm(u, spec):
    """|u|; on H^n the gauge norm (|z|^4 + t^2)^(1/4), Euclidean otherwise."""
    u = _check_dim(u, spec)
    if spec.kind != HEISENBERG:
        return np.sqrt(np.sum(u * u, axis=-1))
    n = spec.n
    z2 = np.sum(u[..., :2 * n] ** 2, axis=-1)
    return (z2 * z2 + u[..., 2 * n] ** 2) ** 0.25


def left_distance(u, v, spec):
    """Left-invariant quasi-metric d(u,v) = |u^{-1} v|."""
    u = _check_dim(u, spec)
    v = _check_dim(v, spec)
    if spec.kind != HEISENBERG:
        return np.sqrt(np.sum((v - u) ** 2, axis=-1))
    n = spec.n
    dz2 = np.sum((v[..., :2 * n] - u[..., :2 * n]) ** 2, axis=-1)
    im = np.sum(
        u[..., n:2 * n] * v[..., :n] - u[..., :n] * v[..., n:2 * n], axis=-1
    )
    dt = v[..., 2 * n] - u[..., 2 * n] - 2.0 * im
    return (dz2 * dz2 + dt * dt) ** 0.25


def dilation(u, r, spec):
    """Anisotropic dilation delta_r; (z,t) -> (r z, r^2 t) on H^n."""
    if r <= 0:
        raise ValueError("dilation factor must be positive")
    u = _check_dim(u, spec)
    if spec.kind != HEISENBERG:
        return r * u
    out = r * u.copy()
    out[..., 2 * spec.n] = r * r * u[..., 2 * spec.n]
    return out


def weight_base(u, spec):
    """The norm the weights are built from: |u|, |z| or |x'|."""
    u = _check_dim(u, spec)
    if spec.weight_kind == HORIZONTAL:
        return np.sqrt(np.sum(u[..., :2 * spec.n] ** 2, axis=-1))
    if spec.weight_kind == PARTIAL_FIRST_FACTOR:
        return np.sqrt(np.sum(u[..., :spec.m] ** 2, axis=-1))
    return homogeneous_norm(u, spec)


def weight_value(u, exponent, spec):
    """base^(-exponent).  Singular points return +inf (exponent > 0) or
    0.0 (exponent < 0) instead of raising; quadrature grids never place
    nodes on the singular set, so sentinels only arise for probe points.
    """
    base = np.atleast_1d(weight_base(u, spec))
    out = np.empty_like(base)
    sing = base == 0.0
    with np.errstate(divide="ignore"):
        out[~sing] = base[~sing] ** (-exponent)
    if exponent > 0:
        out[sing] = np.inf
    elif exponent < 0:
        out[sing] = 0.0
    else:
        out[sing] = 1.0
    if np.ndim(weight_base(u, spec)) == 0:
        return float(out[0])
    return out
