"""Offline forecast-grid ingestion: the IPGRID v1 file format, resampling
onto a workspace grid, and per-side field normalization.

IPGRID v1 layout (plain text, whitespace separated):

    IPGRID v1 nx ny nz sx sy sz ox oy oz
    INFO
    <nx*ny*nz values, x-fastest row-major>
    U
    <nx*ny*nz values>
    V
    <nx*ny*nz values>

Values are written eight per line with shortest round-trip float formatting,
so write(load(f)) is byte-identical for canonical files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .environment import Workspace, VelocityField, normalize_per_side

_BLOCKS = ("INFO", "U", "V")
_VALUES_PER_LINE = 8


class GridFormatError(ValueError):
    """Malformed IPGRID input."""


@dataclass(frozen=True)
class RawGrid:
    """A coarse external forecast grid before resampling."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    info: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if any(d < 1 for d in self.dims):
            raise GridFormatError("grid dimensions must be >= 1")
        if any(s <= 0 for s in self.spacing):
            raise GridFormatError("grid spacing must be positive")
        for name, arr in (("INFO", self.info), ("U", self.u), ("V", self.v)):
            if arr.shape != self.dims:
                raise GridFormatError(
                    f"{name} block shape {arr.shape} does not match dims {self.dims}")

    def axis_coords(self):
        return tuple(self.origin[a] + self.spacing[a] * np.arange(self.dims[a])
                     for a in range(3))


def _parse_floats(tokens, count, block, path):
    if len(tokens) < count:
        raise GridFormatError(
            f"{path}: truncated {block} block, expected {count} values, got {len(tokens)}")
    try:
        vals = np.array([float(t) for t in tokens[:count]])
    except ValueError as exc:
        raise GridFormatError(f"{path}: unparsable value in {block} block: {exc}") from exc
    if not np.all(np.isfinite(vals)):
        offset = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise GridFormatError(f"{path}: non-finite value in {block} block at offset {offset}")
    return vals


def load_forecast_grid(path) -> RawGrid:
    """Parse an IPGRID v1 file; fails atomically on malformed input."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 11 or tokens[0] != "IPGRID" or tokens[1] != "v1":
        raise GridFormatError(f"{path}: missing IPGRID v1 header")
    try:
        nx, ny, nz = (int(t) for t in tokens[2:5])
        spacing = tuple(float(t) for t in tokens[5:8])
        origin = tuple(float(t) for t in tokens[8:11])
    except ValueError as exc:
        raise GridFormatError(f"{path}: bad header field: {exc}") from exc
    count = nx * ny * nz
    pos = 11
    fields = {}
    for block in _BLOCKS:
        if pos >= len(tokens) or tokens[pos] != block:
            found = tokens[pos] if pos < len(tokens) else "<eof>"
            raise GridFormatError(f"{path}: expected {block} block marker, found {found}")
        pos += 1
        vals = _parse_floats(tokens[pos:], count, block, path)
        # x-fastest row-major: index = i + nx*(j + ny*k)
        fields[block] = vals.reshape(nz, ny, nx).transpose(2, 1, 0)
        pos += count
    if pos != len(tokens):
        raise GridFormatError(f"{path}: {len(tokens) - pos} trailing tokens after V block")
    return RawGrid(dims=(nx, ny, nz), spacing=spacing, origin=origin,
                   info=fields["INFO"], u=fields["U"], v=fields["V"])


def write_forecast_grid(raw: RawGrid, path) -> None:
    """Write a RawGrid in canonical IPGRID v1 form."""
    nx, ny, nz = raw.dims
    header = "IPGRID v1 {} {} {} {} {} {} {} {} {}".format(
        nx, ny, nz, *(repr(float(s)) for s in raw.spacing),
        *(repr(float(o)) for o in raw.origin))
    lines = [header]
    for block, arr in (("INFO", raw.info), ("U", raw.u), ("V", raw.v)):
        lines.append(block)
        flat = arr.transpose(2, 1, 0).ravel()
        for start in range(0, flat.size, _VALUES_PER_LINE):
            lines.append(" ".join(repr(float(v)) for v in flat[start:start + _VALUES_PER_LINE]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def interpolate_to_workspace(raw: RawGrid, workspace: Workspace):
    """Trilinearly resample a raw grid onto the workspace grid.

    Returns (info values (nx, ny, nz), VelocityField in gridded mode).
    Raises if the workspace grid extends beyond the raw extent.
    """
    coords = raw.axis_coords()
    ws_axes = workspace.axis_coords()
    names = "xyz"
    for a in range(3):
        if ws_axes[a][0] < coords[a][0] - 1e-9 or ws_axes[a][-1] > coords[a][-1] + 1e-9:
            raise ValueError(
                f"workspace {names[a]} extent [{ws_axes[a][0]}, {ws_axes[a][-1]}] "
                f"not covered by raw grid [{coords[a][0]}, {coords[a][-1]}]")
    pts = workspace.grid_points().reshape(-1, 3)
    pts = np.clip(pts, [c[0] for c in coords], [c[-1] for c in coords])
    out = []
    for arr in (raw.info, raw.u, raw.v):
        interp = RegularGridInterpolator(coords, arr, method="linear")
        out.append(interp(pts).reshape(workspace.shape))
    info, u, v = out
    return info, VelocityField(workspace, u_grid=u, v_grid=v)


def normalize_field(values: np.ndarray, workspace: Workspace) -> np.ndarray:
    """Affine min-max rescale per side onto [0, 1]; constant sides map to zero."""
    out, _ = normalize_per_side(np.asarray(values, dtype=float), workspace)
    return out
