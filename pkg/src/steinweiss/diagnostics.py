"""Executable diagnostics: trichotomy classification of measure sequences,
radial-symmetry and monotonicity verification, and the two testing
conditions for weighted boundedness of the fractional integral.
"""

import numpy as np
from dataclasses import dataclass, field
from math import pi

from scipy import integrate

from . import geometry as geo
from .grids import (ball_volume, evaluate_at, half_mass_from_shell_masses,
                    sphere_measure, _shift_values)

COMPACTNESS = "Compactness"
VANISHING = "Vanishing"
DICHOTOMY = "Dichotomy"
INCONCLUSIVE = "Inconclusive"

_FRAME_TOL = 1e-6


@dataclass
class MeasureSequence:
    """Frames of unit-mass distributions on a common grid."""

    grid: object
    frames: np.ndarray      # (F, K) nonnegative, each row sums to 1

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=float))
        if self.frames.shape[1] != self.grid.n_nodes:
            raise ValueError("frame length does not match grid")
        if np.any(self.frames < 0):
            raise ValueError("frame masses must be nonnegative")
        totals = self.frames.sum(axis=1)
        if np.any(np.abs(totals - 1.0) > _FRAME_TOL):
            raise ValueError("every frame must carry total mass 1 within 1e-6")

    @property
    def n_frames(self):
        return len(self.frames)


def measure_sequence(grid, iterates, p, weight_exponent=0.0):
    """Per-node masses vol * (g * base^w)^p of normalized iterates."""
    frames = []
    for g in iterates:
        wv = np.abs(g.values) * grid.weight_bases ** weight_exponent \
            if weight_exponent else np.abs(g.values)
        frames.append(grid.node_weights * wv ** p)
    return MeasureSequence(grid, np.array(frames))


def renormalize_frames(seq):
    """Shift each frame's mass so its half-mass radius is ~1 (exact
    integer-shell transport), then renormalize the total to 1."""
    grid = seq.grid
    D = grid.n_directions
    out = []
    for m in seq.frames:
        sm = m.reshape(grid.n_shells, D).sum(axis=1)
        hm = half_mass_from_shell_masses(sm / sm.sum(), grid)
        k = int(round(np.log(hm.radius) / grid.log_growth))
        shifted = _shift_values(m.reshape(grid.n_shells, D), k).ravel()
        total = shifted.sum()
        if total <= 0:
            raise ValueError("renormalization pushed a frame off the annulus")
        out.append(shifted / total)
    return MeasureSequence(grid, np.array(out))


@dataclass
class ConcentrationReport:
    verdict: str
    epsilon: float
    radii: list
    witnesses: dict = field(default_factory=dict)
    concentration: np.ndarray = None    # (F, len(radii)) sup-center ball mass


def _ball_masses(grid, frames, radii, centers_idx, extra_centers):
    """Max ball mass per (frame, radius) over candidate centers.

    Returns (Q, argcenter) with Q of shape (F, R); candidate centers are
    the given node indices plus explicit extra center points.
    """
    F = len(frames)
    framesT = frames.T                    # (K, F)
    Q = np.zeros((F, len(radii)))
    arg = np.zeros((F, len(radii)), dtype=int)
    cand_points = [grid.nodes[centers_idx]]
    if len(extra_centers):
        cand_points.append(np.atleast_2d(extra_centers))
    cand = np.vstack(cand_points)
    chunk = max(1, int(2e6 // max(1, grid.n_nodes)))
    for lo in range(0, len(cand), chunk):
        pts = cand[lo:lo + chunk]
        dist = geo.left_distance(pts[:, None, :], grid.nodes[None, :, :],
                                 grid.spec)
        for ri, R in enumerate(radii):
            masses = (dist <= R) @ framesT          # (chunk, F)
            best = masses.max(axis=0)
            take = best > Q[:, ri]
            Q[take, ri] = best[take]
            arg[take, ri] = lo + masses.argmax(axis=0)[take]
    return Q, arg, cand


def _two_cluster_split(grid, frame, radii, epsilon, centers_idx):
    """Greedy two-cluster detection for one frame.

    Returns (m1, m2, separation, c1, c2) or None when no two well separated
    clusters of mass >= epsilon exist.
    """
    cand = grid.nodes[centers_idx]
    dist = geo.left_distance(cand[:, None, :], grid.nodes[None, :, :],
                             grid.spec)
    r_cl = None
    for R in radii:
        masses = (dist <= R) @ frame
        if masses.max() >= epsilon:
            r_cl = R
            break
    if r_cl is None:
        return None
    masses = (dist <= r_cl) @ frame
    i1 = int(masses.argmax())
    c1 = cand[i1]
    d_to_c1 = geo.left_distance(cand, c1[None, :], grid.spec)
    far = d_to_c1 > 2.0 * r_cl
    if not far.any():
        return None
    masses_far = np.where(far, masses, -1.0)
    i2 = int(masses_far.argmax())
    c2 = cand[i2]
    sep = float(geo.left_distance(c1, c2, grid.spec))
    if sep <= 2.0 * r_cl:
        return None
    rk = sep / 3.0
    d1 = geo.left_distance(grid.nodes, c1[None, :], grid.spec)
    d2 = geo.left_distance(grid.nodes, c2[None, :], grid.spec)
    m1 = float(frame[d1 <= rk].sum())
    m2 = float(frame[(d2 <= rk) & (d1 > rk)].sum())
    if m1 < epsilon or m2 < epsilon:
        return None
    return m1, m2, sep, c1, c2, r_cl


def concentration_classify(seq, epsilon, radii, max_centers=None):
    """Classify a measure sequence into the concentration trichotomy.

    Per frame the concentration function Q_i(R) is the largest mass any
    ball of radius R centered at a candidate center captures; candidates
    are grid nodes (optionally the top `max_centers` by frame mass) plus
    the mass centroid.  Verdicts quantify over the last third of the
    frames ("late" frames).
    """
    if seq.n_frames < 3:
        raise ValueError("need at least 3 frames")
    if not (0.0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 1/2)")
    radii = sorted(float(R) for R in radii)
    grid = seq.grid
    if max_centers is not None and max_centers < grid.n_nodes:
        score = seq.frames.max(axis=0)
        centers_idx = np.sort(np.argsort(score)[-max_centers:])
    else:
        centers_idx = np.arange(grid.n_nodes)
    centroids = seq.frames @ grid.nodes / seq.frames.sum(axis=1)[:, None]
    Q, arg, cand = _ball_masses(grid, seq.frames, radii, centers_idx,
                                centroids)
    F = seq.n_frames
    late = np.arange(F - max(1, F // 3), F)

    # Compactness: every late frame captures 1-eps within some tested R
    r_eps_idx = []
    for i in late:
        hit = np.where(Q[i] >= 1.0 - epsilon)[0]
        r_eps_idx.append(hit[0] if len(hit) else None)
    if all(ix is not None for ix in r_eps_idx):
        ix = max(r_eps_idx)
        centers = [cand[arg[i, r_eps_idx[k]]]
                   for k, i in enumerate(late)]
        return ConcentrationReport(
            COMPACTNESS, epsilon, radii,
            {"R_eps": radii[ix], "centers": np.array(centers),
             "late_frames": late.tolist()}, Q)

    # Vanishing: sup-center mass below eps at every tested R, late frames
    if np.all(Q[late] < epsilon):
        return ConcentrationReport(
            VANISHING, epsilon, radii,
            {"decay_curve": Q.max(axis=1), "late_frames": late.tolist()}, Q)

    # Dichotomy: stable two-cluster split with growing separation
    splits = [_two_cluster_split(grid, seq.frames[i], radii, epsilon,
                                 centers_idx) for i in late]
    if all(s is not None for s in splits):
        m1s = np.array([s[0] for s in splits])
        m2s = np.array([s[1] for s in splits])
        seps = np.array([s[2] for s in splits])
        stable = (np.ptp(m1s) <= epsilon
                  and np.all(m1s + m2s >= 1.0 - epsilon))
        growing = np.all(np.diff(seps) > 0) if len(seps) > 1 else True
        if stable and growing:
            return ConcentrationReport(
                DICHOTOMY, epsilon, radii,
                {"k": float(m1s.mean()), "masses": (m1s.tolist(),
                                                    m2s.tolist()),
                 "separations": seps.tolist(),
                 "R_eps": splits[-1][5],
                 "late_frames": late.tolist()}, Q)
    return ConcentrationReport(INCONCLUSIVE, epsilon, radii, {}, Q)


# ---------------------------------------------------------------------------
# bundled synthetic sequences


def _lognormal_masses(grid, center_radius, sigma, positive_ray=True):
    lr = np.log(grid.node_norms)
    m = np.exp(-0.5 * ((lr - np.log(center_radius)) / sigma) ** 2)
    if positive_ray:
        m = m * (grid.nodes[:, 0] > 0)
    m *= grid.node_weights
    return m / m.sum()


def synthetic_compactness(grid, n_frames=9, sigma=0.1):
    """A fixed bump at radius 1; trivially compact."""
    m = _lognormal_masses(grid, 1.0, sigma)
    return MeasureSequence(grid, np.tile(m, (n_frames, 1)))


def synthetic_vanishing(grid, n_frames=9, sigma=0.4, factor=2.0):
    """A bump dilated outward by factor^i; its linear width grows with the
    center radius, so every fixed-radius ball mass decays."""
    frames = [_lognormal_masses(grid, factor ** i, sigma)
              for i in range(n_frames)]
    return MeasureSequence(grid, np.array(frames))


def synthetic_dichotomy(grid, n_frames=9, sigma=0.05, factor=2.0):
    """Two half-mass bumps whose separation doubles each frame."""
    frames = []
    for i in range(n_frames):
        a = _lognormal_masses(grid, 1.0, sigma)
        b = _lognormal_masses(grid, 3.0 * factor ** i, sigma)
        frames.append(0.5 * a + 0.5 * b)
    return MeasureSequence(grid, np.array(frames))


BUNDLED_SEQUENCES = {
    "compactness": synthetic_compactness,
    "vanishing": synthetic_vanishing,
    "dichotomy": synthetic_dichotomy,
}


# ---------------------------------------------------------------------------
# symmetry and monotonicity


@dataclass
class SymmetryReport:
    first_factor_asymmetry: float
    second_factor_center: object
    second_factor_asymmetry: object
    monotonicity_defect: float
    details: dict = field(default_factory=dict)


def _l1_rel_diff(f, transformed_values):
    w = f.grid.node_weights
    denom = float(np.sum(w * np.abs(f.values)))
    return float(np.sum(w * np.abs(f.values - transformed_values))) / denom


def _first_factor_dim(spec):
    return spec.m if spec.kind == geo.PRODUCT else spec.n


def symmetry_check(f, n_rotations=3, seed=0, profile_bins=None):
    """Reflection/rotation asymmetry and radial monotonicity of f.

    Works on Euclidean and product spaces (the moving-plane conclusions
    live there).  Reflected and rotated nodes are evaluated by grid
    interpolation, which is exact for functions constant on shells.
    """
    spec = f.grid.spec
    if spec.kind == geo.HEISENBERG:
        raise ValueError("symmetry check applies to Euclidean and product "
                         "spaces only")
    dim = spec.ambient_dim
    m = _first_factor_dim(spec)
    nodes = f.grid.nodes
    rng = np.random.default_rng(seed)

    transforms = []
    for k in range(m):
        R = nodes.copy()
        R[:, k] = -R[:, k]
        transforms.append(("reflect_x%d" % k, R))
    if m >= 2:
        for _ in range(n_rotations):
            theta = 2.0 * pi * rng.random()
            c, s = np.cos(theta), np.sin(theta)
            R = nodes.copy()
            R[:, 0] = c * nodes[:, 0] - s * nodes[:, 1]
            R[:, 1] = s * nodes[:, 0] + c * nodes[:, 1]
            transforms.append(("rotate_%.3f" % theta, R))
    per = {name: _l1_rel_diff(f, evaluate_at(f, R)) for name, R in transforms}
    first_asym = max(per.values())

    center = None
    second_asym = None
    if spec.kind == geo.PRODUCT:
        w = f.grid.node_weights * np.abs(f.values)
        center = (w @ nodes[:, m:]) / w.sum()
        R = nodes.copy()
        R[:, m:] = 2.0 * center[None, :] - nodes[:, m:]
        second_asym = _l1_rel_diff(f, evaluate_at(f, R))

    if spec.kind == geo.EUCLIDEAN:
        base = f.grid.node_norms
    else:
        base = np.sqrt(np.sum(nodes[:, :m] ** 2, axis=1))
    nb = profile_bins or max(8, f.grid.n_shells // 3)
    edges = np.geomspace(base.min() * (1 - 1e-12), base.max() * (1 + 1e-12),
                         nb + 1)
    ib = np.clip(np.searchsorted(edges, base) - 1, 0, nb - 1)
    wsum = np.zeros(nb)
    vsum = np.zeros(nb)
    np.add.at(wsum, ib, f.grid.node_weights)
    np.add.at(vsum, ib, f.grid.node_weights * f.values)
    ok = wsum > 0
    profile = vsum[ok] / wsum[ok]
    inc = np.diff(profile)
    defect = float(max(0.0, inc.max()) / np.abs(profile).max()) \
        if len(inc) else 0.0
    return SymmetryReport(first_asym, center, second_asym, defect,
                          {"per_transform": per, "profile": profile,
                           "profile_edges": edges, "seed": seed})


# ---------------------------------------------------------------------------
# testing conditions on balls


@dataclass
class SawyerWheedenReport:
    t: float
    epsilon: float
    cond1_max: float
    cond1_closed_form_defect: float
    cond1_bound: float
    cond2_max: float
    cond1_cap: object
    cond2_cap: object
    passed: bool
    n_pairs: int
    n_balls: int
    seed: int
    exponent_Q_read_as: float    # homogeneous dimension m+n of the product
    details: dict = field(default_factory=dict)


def _phi(r, lam):
    # testing-function normalization phi(B) = 2^(24 lam) r^(-lam), verbatim
    return 2.0 ** (24.0 * lam) * r ** (-lam)


def ball_weight_average(delta, r, s, m, n):
    """(1/|B|) int_B |x'|^(-s) dx over an (m+n)-ball of radius r whose
    center sits at distance delta from the plane {x' = 0}.

    Reduced to slice integrals over the first factor (slab integral for
    m = 1, polar around the center for m >= 2); the |x'|^(-s) singularity
    is integrable because s < m and handled by adaptive quadrature with an
    explicit break point when the ball straddles the singular set.
    """
    if s <= 0:
        raise ValueError("weight exponent must be positive")
    if s >= m:
        raise ValueError("ball average diverges: exponent %g >= m = %g"
                         % (s, m))
    vol = ball_volume(m + n) * r ** (m + n)

    def cross_section(rho2):
        # volume of the x''-slice ball of squared radius rho2
        return ball_volume(n) * np.maximum(rho2, 0.0) ** (n / 2.0)

    if m == 1:
        def slab(x1):
            return np.abs(x1) ** (-s) * cross_section(r * r - (x1 - delta) ** 2)
        pts = [0.0] if abs(delta) < r else None
        val, _ = integrate.quad(slab, delta - r, delta + r, points=pts,
                                limit=200)
        return val / vol

    if delta == 0.0:
        val, _ = integrate.quad(
            lambda rho1: sphere_measure(m) * rho1 ** (m - 1 - s)
            * cross_section(r * r - rho1 * rho1), 0.0, r, limit=200)
        return val / vol

    def outer(rho1):
        def inner(theta):
            x2 = delta * delta + rho1 * rho1 \
                + 2.0 * delta * rho1 * np.cos(theta)
            return np.sin(theta) ** (m - 2) * x2 ** (-s / 2.0)
        iv, _ = integrate.quad(inner, 0.0, pi, limit=100)
        return sphere_measure(m - 1) * rho1 ** (m - 1) * iv \
            * cross_section(r * r - rho1 * rho1)

    val, _ = integrate.quad(outer, 0.0, r, limit=200,
                            points=[delta] if delta < r else None)
    return val / vol


def sawyer_wheeden_check(params, t, epsilon, ball_samples=200, seed=0,
                         cond1_pairs=10000, cap1=None, cap2=None,
                         r_range=(1e-2, 1e2), delta_over_r_max=10.0):
    """Evaluate the two testing conditions on sampled balls.

    Condition (1) is checked on radius pairs (r, r') with r' <= 4r; with
    the printed normalization it reduces exactly to (r'/r)^(Q - eps - lam),
    and both routes are compared.  Condition (2) averages the two weights
    over balls at varying distance from the singular set.  The exponent Q
    in condition (1) is read as the homogeneous dimension m+n of the
    product space; every report carries that reading.
    """
    spec = params.space
    if spec.kind != geo.PRODUCT:
        raise ValueError("the ball checker runs on product spaces")
    if t <= 1.0:
        raise ValueError("need t > 1")
    m = spec.m
    lam = params.lam
    s1 = params.alpha * params.q * t
    s2 = params.beta * params.p_prime * t
    if s1 >= m:
        raise ValueError("finiteness requires alpha*q*t < m: %g >= %g"
                         % (s1, m))
    if s2 >= m:
        raise ValueError("finiteness requires beta*p'*t < m: %g >= %g"
                         % (s2, m))
    Q = float(spec.homogeneous_dimension)
    rng = np.random.default_rng(seed)

    r = np.exp(rng.uniform(np.log(r_range[0]), np.log(r_range[1]),
                           cond1_pairs))
    u = rng.uniform(0.0, 1.0, cond1_pairs)
    u[0] = 1.0                      # include the extremal pair r' = 4r
    rp = 4.0 * r * u
    direct = (rp / r) ** (Q - epsilon) * (_phi(rp, lam) / _phi(r, lam))
    closed = (rp / r) ** (Q - epsilon - lam)
    cond1_defect = float(np.max(np.abs(direct - closed)
                                / np.maximum(np.abs(closed), 1e-300)))
    cond1_max = float(direct.max())
    cond1_bound = 4.0 ** (Q - epsilon - lam) if Q - epsilon - lam > 0 else 1.0

    radii = np.exp(rng.uniform(np.log(r_range[0]), np.log(r_range[1]),
                               ball_samples))
    frac = rng.uniform(0.0, 1.0, ball_samples)
    deltas = np.where(frac < 0.25, 0.0,
                      radii * delta_over_r_max ** rng.uniform(
                          -1.0, 1.0, ball_samples) * frac)
    cond2_vals = np.empty(ball_samples)
    exp_norm = 1.0 / params.q + 1.0 / params.p_prime
    for i, (R, dlt) in enumerate(zip(radii, deltas)):
        a1 = ball_weight_average(dlt, R, s1, m, spec.n) if s1 > 0 else 1.0
        a2 = ball_weight_average(dlt, R, s2, m, spec.n) if s2 > 0 else 1.0
        volB = ball_volume(m + spec.n) * R ** (m + spec.n)
        cond2_vals[i] = _phi(R, lam) * volB ** exp_norm \
            * a1 ** (1.0 / (params.q * t)) * a2 ** (1.0 / (params.p_prime * t))
    cond2_max = float(cond2_vals.max())
    passed = True
    if cap1 is not None:
        passed = passed and cond1_max <= cap1
    if cap2 is not None:
        passed = passed and cond2_max <= cap2
    return SawyerWheedenReport(
        t, epsilon, cond1_max, cond1_defect, cond1_bound, cond2_max,
        cap1, cap2, passed, cond1_pairs, ball_samples, seed, Q,
        {"cond2_values": cond2_vals, "radii": radii, "deltas": deltas})
