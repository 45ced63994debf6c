"""On-disk container for grid functions and measure sequences.

A file is a JSON header line followed by CSV payload rows.  The header
key order is fixed; grids are rebuilt deterministically from their build
parameters, so only values travel with the file.

grid function      header + one value per line
measure sequence   header + one comma-separated row of node masses per frame
"""

import json

import numpy as np

from . import geometry as geo
from .grids import GridFunction, build_grid
from .diagnostics import MeasureSequence

SCHEMA_VERSION = 1
GRID_FUNCTION_FORMAT = "steinweiss-grid-function"
MEASURE_SEQUENCE_FORMAT = "steinweiss-measure-sequence"


def _header(grid, fmt, **extra):
    h = {"format": fmt, "schema_version": SCHEMA_VERSION}
    h.update(grid.descriptor())
    h.update(extra)
    return h


def _grid_from_header(h):
    kind = h["space_kind"]
    if kind == geo.EUCLIDEAN:
        spec = geo.euclidean(h["n"])
    elif kind == geo.PRODUCT:
        spec = geo.product(h["m"], h["n"])
    else:
        spec = geo.heisenberg(h["n"], h["weight_kind"])
    return build_grid(spec, h["radial_levels"], h["angular_resolution"],
                      h["r_min"], h["r_max"])


def save_grid_function(f, path):
    header = _header(f.grid, GRID_FUNCTION_FORMAT, n_values=f.grid.n_nodes)
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for v in f.values:
            fh.write("%.17g\n" % v)


def load_grid_function(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != GRID_FUNCTION_FORMAT:
            raise ValueError("not a grid-function file: %s" % path)
        values = np.array([float(line) for line in fh if line.strip()])
    grid = _grid_from_header(header)
    if len(values) != header["n_values"]:
        raise ValueError("value count does not match header")
    return GridFunction(grid, values)


def save_measure_sequence(seq, path):
    header = _header(seq.grid, MEASURE_SEQUENCE_FORMAT,
                     n_frames=seq.n_frames, n_values=seq.grid.n_nodes)
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for frame in seq.frames:
            fh.write(",".join("%.17g" % v for v in frame) + "\n")


def load_measure_sequence(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != MEASURE_SEQUENCE_FORMAT:
            raise ValueError("not a measure-sequence file: %s" % path)
        frames = [np.array([float(t) for t in line.split(",")])
                  for line in fh if line.strip()]
    grid = _grid_from_header(header)
    frames = np.array(frames)
    if frames.shape != (header["n_frames"], header["n_values"]):
        raise ValueError("frame shape does not match header")
    return MeasureSequence(grid, frames)
