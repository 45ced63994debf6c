"""Reference grids and parameter sets for the desk-scale experiments."""

from . import geometry as geo
from .grids import build_grid
from .core import SteinWeissParams, solve_q_prime

# (radial_levels, angular_resolution, r_min, r_max) per space; 1-D grids
# need a wide annulus because the measure does not vanish at the origin.
REFERENCE_GRIDS = {
    ("euclidean", 1): (64, 16, 1e-5, 1e4),
    ("euclidean", 2): (64, 32, 1e-3, 1e3),
    ("euclidean", 3): (48, 64, 1e-2, 1e2),
    ("product", (1, 1)): (96, 16, 1e-3, 1e3),
    ("heisenberg", 1): (40, 192, 3e-2, 3e1),
}


def reference_grid(spec, scale=1.0):
    """The default grid for a space; `scale` multiplies both resolutions."""
    if spec.kind == geo.PRODUCT:
        key = (spec.kind, (spec.m, spec.n))
    else:
        key = (spec.kind, spec.n)
    if key not in REFERENCE_GRIDS:
        raise KeyError("no reference grid for %r" % (key,))
    levels, ang, r0, r1 = REFERENCE_GRIDS[key]
    return build_grid(spec, max(4, int(levels * scale)),
                      max(4, int(ang * scale)), r0, r1)


def weighted_params(spec, alpha, beta, lam, p):
    """Parameters with q' solved from the scaling identity."""
    return SteinWeissParams(spec, alpha, beta, lam, p,
                            solve_q_prime(spec, alpha, beta, lam, p))


def reference_parameter_sets():
    """Admissible sets covering all three weight kinds; used by the
    invariance and ascent experiments."""
    return [
        weighted_params(geo.euclidean(1), 0.1, 0.1, 0.4, 1.45),
        weighted_params(geo.euclidean(2), 0.25, 0.15, 0.8, 1.4),
        weighted_params(geo.heisenberg(1), 0.5, 0.5, 2.0, 8.0 / 5.0),
        weighted_params(geo.heisenberg(1, geo.HORIZONTAL), 0.3, 0.3, 2.0,
                        1.5),
        weighted_params(geo.product(1, 1), 0.2, 0.2, 0.8, 10.0 / 7.0),
    ]
