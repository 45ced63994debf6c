"""Best-constant estimation by alternating ascent, plus the coupled
integral system satisfied by extremal pairs.

Conventions.  The maximizing problem is carried in two equivalent forms:
the iterate g is stored with the weighted normalization
||g * base^beta||_p = 1, while its companion f carries ||f||_{q'} = 1 and
the kernel holds all weights.  Internally the ascent works on
gJ = g * base^beta (plain L^p normalization), for which each half step is
an exact Hoelder maximization:

    f  <-  R(gJ)^(q-1) / ||.||_{q'},      gJ  <-  L(f)^(p'-1) / ||.||_p,

so the functional value never decreases.  Scale drift along the exact
dilation invariance of the grid is removed by re-centering the iterate's
half-mass radius at 1; the dilation factor snaps to an integer number of
shells, which makes the re-centering an exact transport and keeps the
ascent monotone.
"""

import numpy as np
from dataclasses import dataclass, field

from .grids import (GridFunction, DegenerateFunctionError, dilate_resample,
                    half_mass_radius, normalize, shell_masses,
                    weighted_lp_norm)
from .core import KernelOperator, admissibility_check

NON_EXISTENCE_REGIME = "NON-EXISTENCE-REGIME"
NOT_CONVERGED = "NOT-CONVERGED"
TRUNCATION_WARNING = "TRUNCATION-WARNING"


class DegenerateIterateError(RuntimeError):
    """The dual image of the iterate vanished identically."""


class DivergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class MaximizerState:
    """Iterate history of the alternating ascent."""

    f: GridFunction                 # ||f||_{q'} = 1
    g: GridFunction                 # ||g * base^beta||_p = 1
    functional_history: list = field(default_factory=list)
    constant_estimate: float = 0.0
    residual: float = np.inf
    half_mass_radii: list = field(default_factory=list)
    history: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def default_init(grid):
    """Strictly positive radial bump centered at scale 1 in the annulus."""
    lr = np.log(grid.node_norms)
    return GridFunction(grid, np.exp(-lr * lr))


def random_init(grid, seed):
    rng = np.random.default_rng(seed)
    return GridFunction(grid, rng.random(grid.n_nodes) + 1e-3)


def _to_gJ(state_g, params):
    base = state_g.grid.weight_bases
    return GridFunction(state_g.grid, state_g.values * base ** params.beta)


def _from_gJ(gJ, params):
    base = gJ.grid.weight_bases
    return GridFunction(gJ.grid, gJ.values * base ** (-params.beta))


def initial_state(params, init):
    grid = init.grid
    gJ = normalize(GridFunction(grid, np.abs(init.values)), params.p)
    f = normalize(GridFunction(grid, np.abs(init.values)), params.q_prime)
    return MaximizerState(f=f, g=_from_gJ(gJ, params))


def _tail_mass(gJ, p):
    """Weighted p-mass fraction in the outer tenth of the shells."""
    sm = shell_masses(gJ, p)
    k = max(1, gJ.grid.n_shells // 10)
    total = sm.sum()
    if total <= 0:
        return 0.0
    return float(sm[-k:].sum() / total)


def ascent_step(state, params, operator=None):
    """One full alternating-maximization sweep; monotone in J.

    Each half step maximizes the bilinear form over its norm ball (Hoelder
    equality), so J(f_new, g) >= J(f, g) and J(f_new, g_new) >= J(f_new, g).
    """
    op = operator or KernelOperator(state.f.grid, params)
    q = params.q
    pp = params.p_prime
    gJ = _to_gJ(state.g, params)
    h = op.apply_right(gJ.values)
    if not np.any(h > 0.0):
        raise DegenerateIterateError("dual image of g is identically zero")
    J_half = weighted_lp_norm(GridFunction(gJ.grid, h), q)
    f_new = normalize(GridFunction(gJ.grid, h ** (q - 1.0)), params.q_prime)
    e = op.apply_left(f_new.values)
    if not np.any(e > 0.0):
        raise DegenerateIterateError("dual image of f is identically zero")
    J_full = weighted_lp_norm(GridFunction(gJ.grid, e), pp)
    gJ_new = normalize(GridFunction(gJ.grid, e ** (pp - 1.0)), params.p)
    res = weighted_lp_norm(GridFunction(gJ.grid, gJ_new.values - gJ.values),
                           params.p)
    new = MaximizerState(
        f=f_new,
        g=_from_gJ(gJ_new, params),
        functional_history=state.functional_history + [J_half, J_full],
        constant_estimate=float(J_full),
        residual=float(res),
        half_mass_radii=list(state.half_mass_radii),
        history=list(state.history),
        flags=list(state.flags),
        iterations=state.iterations + 1,
    )
    return new


def renormalize_dilation(state, params):
    """Re-center the iterate so its half-mass radius is ~1.

    The dilation factor is snapped to an integer number of shells, so the
    transport is exact (no interpolation) and the functional value changes
    only by the mass pushed over the annulus edge.
    """
    gJ = _to_gJ(state.g, params)
    hm = half_mass_radius(gJ, params.p)
    growth = np.exp(gJ.grid.log_growth)
    k = int(round(np.log(hm.radius) / gJ.grid.log_growth))
    if k == 0:
        return state
    r = growth ** k
    gJ_new = normalize(dilate_resample(gJ, r, params.p), params.p)
    f_new = normalize(dilate_resample(state.f, r, params.q_prime),
                      params.q_prime)
    new = MaximizerState(
        f=f_new,
        g=_from_gJ(gJ_new, params),
        functional_history=list(state.functional_history),
        constant_estimate=state.constant_estimate,
        residual=state.residual,
        half_mass_radii=list(state.half_mass_radii),
        history=list(state.history),
        flags=list(state.flags),
        iterations=state.iterations,
    )
    return new


def maximize(params, init, tol=1e-8, max_iter=500, renorm_every=5,
             operator=None):
    """Estimate the best constant and maximizer by alternating ascent.

    init may be a GridFunction or anything accepted by initial_state.
    Outside the existence regime q > p the run proceeds but the result is
    flagged: the estimate is then only a lower bound without an attainment
    claim.  Non-convergence is reported through flags, not an exception.
    """
    report = admissibility_check(params)
    if not report.valid:
        raise ValueError("inadmissible parameters: " + "; ".join(report.violations))
    op = operator or KernelOperator(init.grid, params)
    state = initial_state(params, init)
    if not report.existence_regime:
        state.flags.append(NON_EXISTENCE_REGIME)
    for it in range(max_iter):
        state = ascent_step(state, params, op)
        gJ = _to_gJ(state.g, params)
        hm = half_mass_radius(gJ, params.p)
        state.half_mass_radii.append(hm.radius)
        tail = _tail_mass(gJ, params.p)
        state.history.append({
            "iteration": state.iterations,
            "J": state.constant_estimate,
            "residual": state.residual,
            "half_mass_radius": hm.radius,
            "tail_mass": tail,
        })
        if state.residual < tol:
            state.converged = True
            break
        if renorm_every and (it + 1) % renorm_every == 0:
            state = renormalize_dilation(state, params)
    if not state.converged:
        state.flags.append(NOT_CONVERGED)
    if state.history and state.history[-1]["tail_mass"] > 0.05:
        state.flags.append(TRUNCATION_WARNING)
    return state


# ---------------------------------------------------------------------------
# the coupled integral system


@dataclass
class SystemState:
    u: GridFunction
    v: GridFunction
    multiplier_estimate: float
    residuals: tuple
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def system_exponents(params):
    """(p1, p2) = (1/(q'-1), 1/(p-1)) with the scaling identity check.

    For these exponents 1/(p1+1) + 1/(p2+1) = (alpha+beta+lambda)/N is
    exactly the admissibility scaling identity; parameter sets violating
    it are refused.
    """
    p1 = 1.0 / (params.q_prime - 1.0)
    p2 = 1.0 / (params.p - 1.0)
    lhs = 1.0 / (p1 + 1.0) + 1.0 / (p2 + 1.0)
    rhs = (params.alpha + params.beta + params.lam) / params.N
    if abs(lhs - rhs) > 1e-9:
        raise ValueError(
            "exponent identity 1/(p1+1) + 1/(p2+1) = (a+b+lam)/N violated: "
            "%.12g vs %.12g" % (lhs, rhs))
    return p1, p2


def seed_from_maximizer(state, params):
    """Transform a converged maximizing pair into system variables
    u = f^(q'-1), v = gJ^(p-1)."""
    gJ = _to_gJ(state.g, params)
    u = GridFunction(state.f.grid, state.f.values ** (params.q_prime - 1.0))
    v = GridFunction(gJ.grid, gJ.values ** (params.p - 1.0))
    return u, v


def solve_system(params, init, tol=1e-8, max_iter=500, operator=None):
    """Solve u = A(v), v = B(u) by normalized fixed-point iteration.

    A(v) = w_a I_lam(w_b v^p2) and B(u) = w_b I_lam(w_a u^p1).  Each sweep
    applies both maps and renormalizes ||u||_{p1+1} = ||v||_{p2+1} = 1,
    tracking the scale factors; at the end a single rescale absorbs them,
    which pins the amplitude because p1 p2 != 1 away from the q = p
    boundary.  Residuals are the relative defects of the two equations.
    """
    p1, p2 = system_exponents(params)
    if abs(p1 * p2 - 1.0) < 1e-9:
        raise ValueError("q = p boundary: the system amplitude is scale "
                         "free and cannot be pinned")
    u0, v0 = init
    if not np.any(u0.values > 0) or not np.any(v0.values > 0):
        raise DegenerateIterateError("system seed is identically zero")
    op = operator or KernelOperator(u0.grid, params)
    u = normalize(u0, p1 + 1.0)
    v = normalize(v0, p2 + 1.0)
    history = []
    su = sv = 1.0
    converged = False
    its = 0
    for it in range(max_iter):
        its = it + 1
        ub = op.apply_right(v.values ** p2)
        su = weighted_lp_norm(GridFunction(u.grid, ub), p1 + 1.0)
        if not (0.0 < su < 1e12):
            raise DivergenceError("u-map norm left (0, 1e12): %g" % su, history)
        u_new = GridFunction(u.grid, ub / su)
        vb = op.apply_left(u_new.values ** p1)
        sv = weighted_lp_norm(GridFunction(v.grid, vb), p2 + 1.0)
        if not (0.0 < sv < 1e12):
            raise DivergenceError("v-map norm left (0, 1e12): %g" % sv, history)
        v_new = GridFunction(v.grid, vb / sv)
        change = weighted_lp_norm(
            GridFunction(u.grid, u_new.values - u.values), p1 + 1.0)
        history.append({"iteration": its, "su": su, "sv": sv,
                        "change": change})
        u, v = u_new, v_new
        if change < tol:
            converged = True
            break
    # absolute amplitudes: U = a u, V = b v with U = A(V), V = B(U)
    a = (su * sv ** p2) ** (1.0 / (1.0 - p1 * p2))
    b = a ** p1 * sv
    U = GridFunction(u.grid, a * u.values)
    V = GridFunction(v.grid, b * v.values)
    ru = weighted_lp_norm(GridFunction(
        u.grid, U.values - op.apply_right(V.values ** p2)), p1 + 1.0) \
        / weighted_lp_norm(U, p1 + 1.0)
    rv = weighted_lp_norm(GridFunction(
        v.grid, V.values - op.apply_left(U.values ** p1)), p2 + 1.0) \
        / weighted_lp_norm(V, p2 + 1.0)
    return SystemState(U, V, float(su), (float(ru), float(rv)),
                       history, its, converged)
