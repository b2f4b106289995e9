"""Upwind discretisations of the convective flux over control volumes.

The flux integral over the boundary of C_ij is split into the four edges;
on each edge the face value of V is upwinded against the face velocity,
first order (nearest upwind cell) or second order (linear extrapolation
from the two upwind cells, e.g. (3 V_ij - V_{i-1,j})/2 on the east face
when f_x >= 0).  Cells adjacent to the domain boundary always fall back to
the first-order stencil, so both schemes coincide there.

Rows are returned as offset->coefficient maps; the semi-discrete system
reads dV/dtau = A V + ..., with the outward-normal signs already applied.
"""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from .grid import Grid2D
from .model import ConvectionField

Offset = Tuple[int, int]
StencilRow = Dict[Offset, float]


def _face_velocities(field: ConvectionField, i: int, j: int):
    """(west, east, south, north) face velocities of cell (i, j)."""
    fw = field.fx_face[i]
    fe = field.fx_face[i + 1]
    fs = field.fy_face[j]
    fn = field.fy_face[j + 1]
    return fw, fe, fs, fn


def upwind1_row(
    grid: Grid2D,
    field: ConvectionField,
    i: int,
    j: int,
    skip_west: bool = False,
    skip_south: bool = False,
) -> StencilRow:
    """First-order upwind row of cell (i, j), 1 <= i, j <= N.

    The east-edge flux is l_j (max(f_E, 0) V_ij + min(f_E, 0) V_{i+1,j})
    with f_E the velocity at x_{i+1/2}; the other edges mirror it with the
    outward-normal sign.  ``skip_west``/``skip_south`` drop those edges (the
    fitted scheme replaces them).
    """
    if not (1 <= i <= grid.n and 1 <= j <= grid.n):
        raise IndexError(f"cell ({i}, {j}) outside the interior range")
    hi = grid.x.widths[i]
    lj = grid.y.widths[j]
    fw, fe, fs, fn = _face_velocities(field, i, j)
    row = {
        (0, 0): lj * max(fe, 0.0) + hi * max(fn, 0.0),
        (1, 0): lj * min(fe, 0.0),
        (0, 1): hi * min(fn, 0.0),
    }
    if not skip_west:
        row[(0, 0)] -= lj * min(fw, 0.0)
        row[(-1, 0)] = -lj * max(fw, 0.0)
    if not skip_south:
        row[(0, 0)] -= hi * min(fs, 0.0)
        row[(0, -1)] = -hi * max(fs, 0.0)
    return row


def upwind2_row(
    grid: Grid2D,
    field: ConvectionField,
    i: int,
    j: int,
    skip_west: bool = False,
    skip_south: bool = False,
) -> StencilRow:
    """Second-order upwind row; boundary-adjacent cells use upwind1_row."""
    n = grid.n
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"cell ({i}, {j}) outside the interior range")
    if i in (1, n) or j in (1, n):
        return upwind1_row(grid, field, i, j, skip_west=skip_west, skip_south=skip_south)
    hi = grid.x.widths[i]
    lj = grid.y.widths[j]
    fw, fe, fs, fn = _face_velocities(field, i, j)

    row: StencilRow = {}

    def add(di, dj, val):
        if val != 0.0:
            row[(di, dj)] = row.get((di, dj), 0.0) + val

    # East edge, outward +x: face value (3 V_ij - V_{i-1,j})/2 when f >= 0,
    # (3 V_{i+1,j} - V_{i+2,j})/2 otherwise.
    add(0, 0, 1.5 * lj * max(fe, 0.0))
    add(-1, 0, -0.5 * lj * max(fe, 0.0))
    add(1, 0, 1.5 * lj * min(fe, 0.0))
    add(2, 0, -0.5 * lj * min(fe, 0.0))
    # West edge, outward -x.
    add(-1, 0, -1.5 * lj * max(fw, 0.0))
    add(-2, 0, 0.5 * lj * max(fw, 0.0))
    add(0, 0, -1.5 * lj * min(fw, 0.0))
    add(1, 0, 0.5 * lj * min(fw, 0.0))
    # North edge, outward +y.
    add(0, 0, 1.5 * hi * max(fn, 0.0))
    add(0, -1, -0.5 * hi * max(fn, 0.0))
    add(0, 1, 1.5 * hi * min(fn, 0.0))
    add(0, 2, -0.5 * hi * min(fn, 0.0))
    # South edge, outward -y.
    add(0, -1, -1.5 * hi * max(fs, 0.0))
    add(0, -2, 0.5 * hi * max(fs, 0.0))
    add(0, 0, -1.5 * hi * min(fs, 0.0))
    add(0, 1, 0.5 * hi * min(fs, 0.0))
    return row


def convection_rows(
    grid: Grid2D,
    field: ConvectionField,
    order: int,
    skip_west_band: bool = False,
    skip_south_band: bool = False,
):
    """All interior rows as a list-of-dicts indexed [i-1][j-1].

    ``skip_west_band`` removes the west-edge terms of the i = 1 column and
    ``skip_south_band`` the south-edge terms of the j = 1 row (used by the
    fitted scheme, which replaces those edge fluxes wholesale).
    """
    if order not in (1, 2):
        raise ValueError("upwind order must be 1 or 2")
    builder = upwind1_row if order == 1 else upwind2_row
    n = grid.n
    rows = []
    for i in range(1, n + 1):
        col = []
        for j in range(1, n + 1):
            col.append(
                builder(
                    grid,
                    field,
                    i,
                    j,
                    skip_west=(skip_west_band and i == 1),
                    skip_south=(skip_south_band and j == 1),
                )
            )
        rows.append(col)
    return rows
