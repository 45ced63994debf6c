"""Quadrature grids adapted to scale-invariant weights.

Nodes live on logarithmically spaced shells of the homogeneous norm; each
shell carries the same angular layout, so every grid is invariant under
dilation by an integer number of shells.  Cell volumes are analytic
(radial power integrals times angular bin measures), which makes the total
weight equal to the annulus volume exactly.

Node ordering is fixed: node index = shell * n_directions + direction.
"""

import numpy as np
from dataclasses import dataclass, field
from math import gamma, pi, sqrt

from . import geometry as geo

_TINY = 1e-300
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


class DegenerateFunctionError(ValueError):
    """Raised when an operation needs a nonzero grid function."""


class TruncationError(RuntimeError):
    """Raised when too much mass has escaped the truncation annulus."""


def sphere_measure(d):
    """Surface measure of the unit sphere S^(d-1) in R^d."""
    return 2.0 * pi ** (d / 2.0) / gamma(d / 2.0)


def ball_volume(d):
    return sphere_measure(d) / d


def _bin_integral(fn, lo, hi):
    """Gauss-Legendre integral of fn over [lo, hi] (24 nodes, smooth fn)."""
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return half * np.sum(_GL_WEIGHTS * fn(mid + half * _GL_NODES))


class DirectionSet:
    """Angular layout shared by every shell.

    points  -- (D, dim) points of unit (homogeneous) norm
    weights -- (D,) angular measure of each cell, summing to the total
               angular measure of the space
    kind    -- layout tag driving subdivision and interpolation
    """

    def __init__(self, points, weights, kind, meta=None):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.kind = kind
        self.meta = meta or {}

    def __len__(self):
        return len(self.points)

    @property
    def total(self):
        return float(self.weights.sum())

    def subdivide(self, d, s):
        """Split direction cell d into sub-cells; returns (points, weights)
        with weights summing to weights[d].  Layouts without an angular
        parametrization (Fibonacci and quasi-random spheres) return the
        cell unchanged.
        """
        if self.kind == "sign":
            return self.points[d:d + 1], np.array([self.weights[d]])
        if self.kind == "circle":
            edges = self.meta["edges"]
            te = np.linspace(edges[d], edges[d + 1], s + 1)
            tm = 0.5 * (te[:-1] + te[1:])
            pts = np.stack([np.cos(tm), np.sin(tm)], axis=-1)
            return pts, np.diff(te)
        if self.kind == "product":
            return self._subdivide_product(d, s)
        if self.kind == "heisenberg":
            return self._subdivide_heisenberg(d, s)
        return self.points[d:d + 1], np.array([self.weights[d]])

    def _subdivide_product(self, d, s):
        m, n = self.meta["m"], self.meta["n"]
        ip, i1, i2 = (idx[d] for idx in self.meta["index"])
        pe = self.meta["psi_edges"]
        se = np.linspace(pe[ip], pe[ip + 1], s + 1)
        sm = 0.5 * (se[:-1] + se[1:])
        swt = np.array([
            _bin_integral(
                lambda x: np.sin(x) ** (m - 1) * np.cos(x) ** (n - 1), a, b
            )
            for a, b in zip(se[:-1], se[1:])
        ])
        p1, w1 = self.meta["first"].subdivide(i1, s)
        p2, w2 = self.meta["second"].subdivide(i2, s)
        pts, wts = [], []
        for psi, wp in zip(sm, swt):
            for a, wa in zip(p1, w1):
                for b, wb in zip(p2, w2):
                    pts.append(np.concatenate([np.sin(psi) * a, np.cos(psi) * b]))
                    wts.append(wp * wa * wb)
        return np.array(pts), np.array(wts)

    def _subdivide_heisenberg(self, d, s):
        n = self.meta["n"]
        ip, io = (idx[d] for idx in self.meta["index"])
        pe = self.meta["psi_edges"]
        se = np.linspace(pe[ip], pe[ip + 1], s + 1)
        sm = 0.5 * (se[:-1] + se[1:])
        swt = np.array([
            _bin_integral(lambda x: np.sin(x) ** (n - 1), a, b)
            for a, b in zip(se[:-1], se[1:])
        ])
        po, wo = self.meta["omega"].subdivide(io, s)
        pts, wts = [], []
        for psi, wp in zip(sm, swt):
            for om, wom in zip(po, wo):
                pts.append(np.concatenate([np.sqrt(np.sin(psi)) * om, [np.cos(psi)]]))
                wts.append(wp * wom)
        return np.array(pts), np.array(wts)


def _sphere_directions(d, k):
    """Direction set on the Euclidean sphere S^(d-1)."""
    if d == 1:
        return DirectionSet([[1.0], [-1.0]], [1.0, 1.0], "sign")
    if d == 2:
        k = max(4, int(k))
        edges = 2.0 * pi * np.arange(k + 1) / k
        th = 0.5 * (edges[:-1] + edges[1:])
        pts = np.stack([np.cos(th), np.sin(th)], axis=-1)
        return DirectionSet(pts, np.full(k, 2.0 * pi / k), "circle",
                            {"edges": edges, "angles": th})
    if d == 3:
        # Fibonacci sphere; equal-weight cells, no box parametrization.
        k = max(8, int(k))
        i = np.arange(k) + 0.5
        phi = pi * (1.0 + sqrt(5.0)) * i
        ct = 1.0 - 2.0 * i / k
        st = np.sqrt(np.maximum(1.0 - ct * ct, 0.0))
        pts = np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)
        return DirectionSet(pts, np.full(k, sphere_measure(3) / k), "fibonacci")
    # d >= 4: deterministic quasi-random equal-weight directions.
    k = max(16, int(k))
    rng = np.random.default_rng(1234567 + d)
    pts = rng.standard_normal((k, d))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return DirectionSet(pts, np.full(k, sphere_measure(d) / k), "quasi")


def _product_directions(m, n, budget):
    first = _sphere_directions(m, 2 if m == 1 else 8)
    second = _sphere_directions(n, 2 if n == 1 else 8)
    kpsi = max(2, int(budget) // (len(first) * len(second)))
    pe = 0.5 * pi * np.arange(kpsi + 1) / kpsi
    pm = 0.5 * (pe[:-1] + pe[1:])
    pw = np.array([
        _bin_integral(lambda x: np.sin(x) ** (m - 1) * np.cos(x) ** (n - 1), a, b)
        for a, b in zip(pe[:-1], pe[1:])
    ])
    pts, wts, ips, i1s, i2s = [], [], [], [], []
    for ip in range(kpsi):
        for i1 in range(len(first)):
            for i2 in range(len(second)):
                pts.append(np.concatenate([
                    np.sin(pm[ip]) * first.points[i1],
                    np.cos(pm[ip]) * second.points[i2],
                ]))
                wts.append(pw[ip] * first.weights[i1] * second.weights[i2])
                ips.append(ip); i1s.append(i1); i2s.append(i2)
    meta = {"m": m, "n": n, "psi_edges": pe, "psi_mid": pm,
            "first": first, "second": second,
            "index": (np.array(ips), np.array(i1s), np.array(i2s))}
    return DirectionSet(np.array(pts), np.array(wts), "product", meta)


def _heisenberg_directions(n, budget):
    omega = _sphere_directions(2 * n, 8 if budget >= 64 else 4)
    kpsi = max(2, int(budget) // len(omega))
    pe = pi * np.arange(kpsi + 1) / kpsi
    pm = 0.5 * (pe[:-1] + pe[1:])
    pw = np.array([
        _bin_integral(lambda x: np.sin(x) ** (n - 1), a, b)
        for a, b in zip(pe[:-1], pe[1:])
    ])
    pts, wts, ips, ios = [], [], [], []
    for ip in range(kpsi):
        for io in range(len(omega)):
            pts.append(np.concatenate([
                np.sqrt(np.sin(pm[ip])) * omega.points[io],
                [np.cos(pm[ip])],
            ]))
            wts.append(pw[ip] * omega.weights[io])
            ips.append(ip); ios.append(io)
    meta = {"n": n, "psi_edges": pe, "psi_mid": pm, "omega": omega,
            "index": (np.array(ips), np.array(ios))}
    return DirectionSet(np.array(pts), np.array(wts), "heisenberg", meta)


def nodes_from(radii, dir_points, spec):
    """Ambient nodes delta_rho(xi) for each radius and direction point.

    Returns an array of shape (len(radii)*len(dir_points), dim) in node
    order (shell-major).
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    R, D = len(radii), len(dir_points)
    out = np.empty((R * D, dir_points.shape[1]))
    if spec.kind == geo.HEISENBERG:
        for i, rho in enumerate(radii):
            out[i * D:(i + 1) * D, :-1] = rho * dir_points[:, :-1]
            out[i * D:(i + 1) * D, -1] = rho * rho * dir_points[:, -1]
    else:
        for i, rho in enumerate(radii):
            out[i * D:(i + 1) * D] = rho * dir_points
    return out


@dataclass
class QuadratureGrid:
    spec: geo.SpaceSpec
    radial_levels: int
    angular_resolution: int
    r_min: float
    r_max: float
    radial_edges: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)
    radial_weights: np.ndarray = field(repr=False)
    directions: DirectionSet = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    node_weights: np.ndarray = field(repr=False)

    @property
    def n_shells(self):
        return len(self.radii)

    @property
    def n_directions(self):
        return len(self.directions)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def log_growth(self):
        return float(np.log(self.radial_edges[1] / self.radial_edges[0]))

    @property
    def node_norms(self):
        return np.repeat(self.radii, self.n_directions)

    @property
    def weight_bases(self):
        if not hasattr(self, "_bases"):
            self._bases = geo.weight_base(self.nodes, self.spec)
        return self._bases

    @property
    def unit_ball_measure(self):
        """c with |B(0, rho)| = c * rho^N for the homogeneous norm."""
        N = self.spec.homogeneous_dimension
        return self.directions.total / N

    def annulus_volume(self):
        N = self.spec.homogeneous_dimension
        return self.unit_ball_measure * (self.r_max ** N - self.r_min ** N)

    def subdivide_cell(self, shell, d, s):
        """Sub-nodes and exact sub-volumes of cell (shell, d), s per axis."""
        N = self.spec.homogeneous_dimension
        re = np.geomspace(self.radial_edges[shell], self.radial_edges[shell + 1],
                          s + 1)
        rm = np.sqrt(re[:-1] * re[1:])
        rw = (re[1:] ** N - re[:-1] ** N) / N
        dp, dw = self.directions.subdivide(d, s)
        pts = nodes_from(rm, dp, self.spec)
        vols = (rw[:, None] * dw[None, :]).ravel()
        return pts, vols

    def descriptor(self):
        """Build parameters, sufficient to reconstruct the grid."""
        return {
            "space_kind": self.spec.kind,
            "n": self.spec.n,
            "m": self.spec.m,
            "weight_kind": self.spec.weight_kind,
            "radial_levels": self.radial_levels,
            "angular_resolution": self.angular_resolution,
            "r_min": self.r_min,
            "r_max": self.r_max,
        }


def build_grid(spec, radial_levels, angular_resolution, r_min, r_max):
    """Log-radial product grid on the annulus r_min <= |u| <= r_max.

    For Euclidean n=1 the angular budget beyond the two ray directions is
    folded into extra radial subdivisions, so the node count is still
    radial_levels * angular_resolution.
    """
    if radial_levels < 4:
        raise ValueError("radial_levels must be >= 4")
    if angular_resolution < 4:
        raise ValueError("angular_resolution must be >= 4")
    if not (0.0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")

    shells = radial_levels
    if spec.kind == geo.EUCLIDEAN:
        if spec.n == 1:
            shells = radial_levels * max(1, angular_resolution // 2)
        dirs = _sphere_directions(spec.n, angular_resolution)
    elif spec.kind == geo.PRODUCT:
        dirs = _product_directions(spec.m, spec.n, angular_resolution)
    else:
        dirs = _heisenberg_directions(spec.n, angular_resolution)

    N = spec.homogeneous_dimension
    edges = np.geomspace(r_min, r_max, shells + 1)
    radii = np.sqrt(edges[:-1] * edges[1:])
    radw = (edges[1:] ** N - edges[:-1] ** N) / N
    nodes = nodes_from(radii, dirs.points, spec)
    vols = (radw[:, None] * dirs.weights[None, :]).ravel()
    grid = QuadratureGrid(spec, radial_levels, angular_resolution,
                          float(r_min), float(r_max),
                          edges, radii, radw, dirs, nodes, vols)
    if np.min(grid.weight_bases) <= 0.0:
        raise RuntimeError("grid places a node on the weight singular set")
    return grid


@dataclass
class GridFunction:
    """Nonnegative values on the nodes of a quadrature grid."""

    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError("values length does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    def copy(self):
        return GridFunction(self.grid, self.values.copy())


def grid_function(grid, fn):
    """Sample a callable of ambient coordinates on the grid nodes."""
    return GridFunction(grid, np.asarray(fn(grid.nodes), dtype=float))


def _weighted_values(f, weight_exponent):
    if weight_exponent == 0.0:
        return f.values
    return f.values * f.grid.weight_bases ** weight_exponent


def weighted_lp_norm(f, p, weight_exponent=0.0):
    """(sum vol_i (value_i * base_i^w)^p)^(1/p)."""
    wv = np.abs(_weighted_values(f, weight_exponent))
    return float(np.sum(f.grid.node_weights * wv ** p)) ** (1.0 / p)


def normalize(f, p, weight_exponent=0.0):
    nrm = weighted_lp_norm(f, p, weight_exponent)
    if not (nrm > 0.0) or not np.isfinite(nrm):
        raise DegenerateFunctionError("cannot normalize: zero or non-finite norm")
    return GridFunction(f.grid, f.values / nrm)


def _interp_log_cubic(vals2d, idx, w, cols=None):
    """Interpolate columns of vals2d at fractional row positions idx + w.

    Catmull-Rom in log value where the full 4-point stencil is positive,
    falling back to linear (and to plain linear values where an endpoint
    vanishes).  idx must satisfy 0 <= idx <= R-2.
    """
    R = vals2d.shape[0]

    def take(rows):
        rows = np.clip(rows, 0, R - 1)
        return vals2d[rows, cols] if cols is not None else vals2d[rows]

    v0, v1 = take(idx), take(idx + 1)
    both = (v0 > 0.0) & (v1 > 0.0)
    if cols is None and w.ndim == 1:
        w = w[:, None]
        both_b = both
    else:
        both_b = both
    lin = (1.0 - w) * v0 + w * v1
    with np.errstate(divide="ignore"):
        l0 = np.log(np.maximum(v0, _TINY))
        l1 = np.log(np.maximum(v1, _TINY))
        loglin = (1.0 - w) * l0 + w * l1
    out = np.where(both_b, np.exp(np.where(both_b, loglin, 0.0)), lin)
    # cubic correction on interior stencils with all-positive values
    vm, v2 = take(idx - 1), take(idx + 2)
    interior_rows = (idx >= 1) & (idx <= R - 3)
    if cols is None and interior_rows.ndim == 1:
        interior = interior_rows[:, None] & both_b & (vm > 0.0) & (v2 > 0.0)
    else:
        interior = interior_rows & both_b & (vm > 0.0) & (v2 > 0.0)
    if np.any(interior):
        with np.errstate(divide="ignore"):
            lm = np.log(np.maximum(vm, _TINY))
            l2 = np.log(np.maximum(v2, _TINY))
        w2 = w * w
        w3 = w2 * w
        cub = 0.5 * ((-w3 + 2.0 * w2 - w) * lm
                     + (3.0 * w3 - 5.0 * w2 + 2.0) * l0
                     + (-3.0 * w3 + 4.0 * w2 + w) * l1
                     + (w3 - w2) * l2)
        out = np.where(interior, np.exp(np.where(interior, cub, 0.0)), out)
    return out


def _shift_values(vals2d, shift):
    """Values interpolated at fractional shell offset `shift` upward.

    out[s] = vals[s + shift]; log-value interpolation between shells
    (cubic on interior stencils), zero outside the shell range.  Integer
    shifts are exact transports.
    """
    R, D = vals2d.shape
    k = int(round(shift))
    if abs(shift - k) < 1e-9:
        out = np.zeros_like(vals2d)
        if k >= 0:
            if k < R:
                out[:R - k] = vals2d[k:]
        else:
            if -k < R:
                out[-k:] = vals2d[:R + k]
        return out
    lo = int(np.floor(shift))
    w = shift - lo
    out = np.zeros_like(vals2d)
    idx = np.arange(R) + lo
    ok = (idx >= 0) & (idx + 1 <= R - 1)
    out[ok] = _interp_log_cubic(vals2d, idx[ok], np.full(ok.sum(), w))
    return out


def dilate_resample(f, r, p, weight_exponent=0.0):
    """Norm-preserving dilation g(v) = r^((N + w p)/p) f(delta_r v).

    Resampling is an interpolation in log radius along each direction ray;
    values falling outside the annulus are extrapolated as zero.  r = 1 is
    the exact identity, and r equal to an integer power of the shell growth
    factor is an exact index shift.
    """
    if r <= 0:
        raise ValueError("dilation factor must be positive")
    grid = f.grid
    N = grid.spec.homogeneous_dimension
    shift = np.log(r) / grid.log_growth
    vals = f.values.reshape(grid.n_shells, grid.n_directions)
    out = _shift_values(vals, shift)
    scale = r ** ((N + weight_exponent * p) / p)
    return GridFunction(grid, (scale * out).ravel())


def shell_masses(f, p, weight_exponent=0.0):
    """Weighted p-th power mass per shell."""
    wv = np.abs(_weighted_values(f, weight_exponent))
    mass = f.grid.node_weights * wv ** p
    return mass.reshape(f.grid.n_shells, f.grid.n_directions).sum(axis=1)


@dataclass
class HalfMassRadius:
    radius: float
    degenerate: bool


def half_mass_from_shell_masses(sm, grid, half=None):
    """Radius where the cumulative shell mass first reaches half the unit.

    `half` defaults to 0.5 of a unit total; linear interpolation in the
    cumulative mass between shell edges.  A crossing inside the first or
    last shell is flagged degenerate; total mass below the half level
    raises TruncationError.
    """
    half = 0.5 if half is None else half
    cum = np.cumsum(sm)
    if cum[-1] < half:
        raise TruncationError(
            "only %.4f of unit mass left inside the annulus" % cum[-1]
        )
    i = int(np.searchsorted(cum, half))
    lo = cum[i - 1] if i > 0 else 0.0
    frac = (half - lo) / max(cum[i] - lo, _TINY)
    edges = grid.radial_edges
    radius = edges[i] * (edges[i + 1] / edges[i]) ** frac
    degenerate = i == 0 or i == grid.n_shells - 1
    return HalfMassRadius(float(radius), degenerate)


def half_mass_radius(f, p, weight_exponent=0.0):
    """Radius where the cumulative weighted p-mass first reaches 1/2.

    Expects f normalized to weighted norm 1.
    """
    return half_mass_from_shell_masses(shell_masses(f, p, weight_exponent),
                                       f.grid)


def shell_profile(f):
    """Volume-weighted average of f per shell; returns (radii, averages)."""
    grid = f.grid
    v = (grid.node_weights * f.values).reshape(grid.n_shells, grid.n_directions)
    w = grid.node_weights.reshape(grid.n_shells, grid.n_directions)
    return grid.radii, v.sum(axis=1) / w.sum(axis=1)


def _angular_interp(grid, values_rd, points):
    """Interpolate values over directions for each query point.

    Returns an (R, P) array: for every shell, the angular interpolation of
    that shell's values at the query directions.  Exact layouts (signs,
    circles, psi/theta meshes) interpolate linearly; unstructured layouts
    fall back to the nearest direction.
    """
    spec = grid.spec
    dirs = grid.directions
    P = len(points)
    if dirs.kind == "sign":
        col = np.where(points[:, 0] >= 0.0, 0, 1)
        return values_rd[:, col]
    if dirs.kind == "circle":
        th = np.arctan2(points[:, 1], points[:, 0]) % (2.0 * pi)
        ang = dirs.meta["angles"]
        step = 2.0 * pi / len(dirs)
        pos = (th - ang[0]) / step
        lo = np.floor(pos).astype(int)
        w = pos - lo
        return (1.0 - w) * values_rd[:, lo % len(dirs)] \
            + w * values_rd[:, (lo + 1) % len(dirs)]
    if dirs.kind == "product" and spec.m == 1 and spec.n == 1:
        # the four psi-quadrant branches form a uniform circle mesh
        th = np.arctan2(points[:, 1], points[:, 0]) % (2.0 * pi)
        circ = np.arctan2(dirs.points[:, 1], dirs.points[:, 0]) % (2.0 * pi)
        order = np.argsort(circ)
        sth = circ[order]
        step = 2.0 * pi / len(dirs)
        pos = (th - sth[0]) / step
        lo = np.floor(pos).astype(int)
        w = pos - lo
        v = values_rd[:, order]
        return (1.0 - w) * v[:, lo % len(dirs)] + w * v[:, (lo + 1) % len(dirs)]
    if dirs.kind == "heisenberg" and spec.n == 1:
        # bilinear on the regular (psi, theta) mesh, periodic in theta
        z = points[:, :2]
        zn = np.linalg.norm(z, axis=1)
        rho = (zn ** 4 + points[:, 2] ** 2) ** 0.25
        rho = np.maximum(rho, _TINY)
        psi = np.arccos(np.clip(points[:, 2] / rho ** 2, -1.0, 1.0))
        th = np.arctan2(z[:, 1], z[:, 0]) % (2.0 * pi)
        pm = dirs.meta["psi_mid"]
        kpsi = len(pm)
        kom = len(dirs.meta["omega"])
        v = values_rd.reshape(values_rd.shape[0], kpsi, kom)
        ppos = np.clip((psi - pm[0]) / (pm[1] - pm[0]), 0.0, kpsi - 1.0 - 1e-12)
        plo = np.floor(ppos).astype(int)
        pw = ppos - plo
        om = dirs.meta["omega"].meta["angles"]
        step = 2.0 * pi / kom
        tpos = (th - om[0]) / step
        tlo = np.floor(tpos).astype(int)
        tw = tpos - tlo
        out = np.zeros((values_rd.shape[0], P))
        for dp, wp in ((0, 1.0 - pw), (1, pw)):
            for dt, wt in ((0, 1.0 - tw), (1, tw)):
                out += wp * wt * v[:, np.minimum(plo + dp, kpsi - 1),
                                   (tlo + dt) % kom]
        return out
    # fallback: nearest direction by alignment of the direction table
    ref = dirs.points / np.linalg.norm(dirs.points, axis=1, keepdims=True)
    q = points / np.maximum(np.linalg.norm(points, axis=1, keepdims=True), _TINY)
    nearest = np.argmax(q @ ref.T, axis=1)
    return values_rd[:, nearest]


def evaluate_at(f, points):
    """Interpolate a grid function at arbitrary ambient points.

    Log-value interpolation in radius, layout-specific interpolation over
    directions; zero outside the annulus.
    """
    grid = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rho = geo.homogeneous_norm(pts, grid.spec)
    vals_rd = f.values.reshape(grid.n_shells, grid.n_directions)
    va = _angular_interp(grid, vals_rd, pts)    # (R, P)
    lr = np.log(grid.radii)
    out = np.zeros(len(pts))
    inside = (rho >= grid.radii[0]) & (rho <= grid.radii[-1])
    if np.any(inside):
        pos = (np.log(rho[inside]) - lr[0]) / grid.log_growth
        lo = np.clip(np.floor(pos).astype(int), 0, grid.n_shells - 2)
        w = pos - lo
        cols = np.where(inside)[0]
        out[inside] = _interp_log_cubic(va, lo, w, cols)
    return out
