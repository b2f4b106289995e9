"""Structured grid for the truncated two-asset price domain.

The domain [0, x_max] x [0, y_max] is partitioned twice:

* control volumes ``C_ij = [x_{i-1/2}, x_{i+1/2}] x [y_{j-1/2}, y_{j+1/2}]``
  centred on the nodes ``(x_i, y_j)`` (half/quarter cells along the boundary,
  using the conventions x_{-1/2} = x_0 and x_{N+3/2} = x_{N+1});
* interaction volumes ``R_ij = [x_{i-1}, x_i] x [y_{j-1}, y_j]`` spanned by
  four adjacent nodes, on which the multi-point flux continuity conditions
  are imposed.

Each axis carries N+2 nodes; nodes with index 1..N are interior unknowns,
index 0 and N+1 carry Dirichlet data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Axis1D:
    """One coordinate axis: nodes, face coordinates and cell widths.

    ``faces[i]`` is the cell face x_{i-1/2}; with the boundary conventions
    baked in, faces has length N+3 (``faces[0] = x_0`` and
    ``faces[N+2] = x_{N+1}``).  ``widths[i] = faces[i+1] - faces[i]`` is the
    width of cell i for i = 0..N+1.
    """

    nodes: np.ndarray
    faces: np.ndarray
    widths: np.ndarray

    @classmethod
    def from_nodes(cls, nodes) -> "Axis1D":
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 4:
            raise ValueError("an axis needs at least 4 nodes (N >= 2)")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("axis nodes must be strictly increasing")
        if nodes[0] != 0.0:
            raise ValueError("axis must start at 0")
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        faces = np.concatenate(([nodes[0]], mids, [nodes[-1]]))
        widths = np.diff(faces)
        return cls(nodes=nodes, faces=faces, widths=widths)

    @property
    def n_interior(self) -> int:
        return self.nodes.size - 2

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid with per-axis data and the interior unknown count N."""

    x: Axis1D
    y: Axis1D

    def __post_init__(self):
        if self.x.n_interior != self.y.n_interior:
            raise ValueError("both axes must carry the same number of interior nodes")

    @property
    def n(self) -> int:
        """Interior unknowns per axis."""
        return self.x.n_interior

    def cell_measure(self, i: int, j: int) -> float:
        """Measure of the control volume around node (i, j), i,j = 0..N+1."""
        return float(self.x.widths[i] * self.y.widths[j])

    def interior_measures(self) -> np.ndarray:
        """(N, N) array of control-volume measures for the interior nodes."""
        return np.outer(self.x.widths[1:-1], self.y.widths[1:-1])

    def node_mesh(self):
        """Node coordinate matrices, shape (N+2, N+2), indexed [i, j]."""
        return np.meshgrid(self.x.nodes, self.y.nodes, indexing="ij")


@dataclass(frozen=True)
class InteractionVolumeGeometry:
    """Geometry of one interaction volume R_ij.

    ``corners`` holds the four surrounding node positions in the order
    (x_{i-1},y_{j-1}), (x_i,y_{j-1}), (x_i,y_j), (x_{i-1},y_j); ``cells``
    holds the matching cell indices.  ``edge_midpoints`` are the points where
    the control-volume faces meet the sides of R_ij (half-edge endpoints
    1..4), ``center`` is the common corner of the four control volumes, and
    ``normals[p]`` is orthogonal to half-edge p with the half-edge's length,
    oriented along +x for the vertical half-edges (1, 3) and +y for the
    horizontal ones (2, 4).
    """

    corners: np.ndarray      # (4, 2)
    cells: np.ndarray        # (4, 2) int, cell (i, j) indices per corner
    edge_midpoints: np.ndarray  # (4, 2)
    center: np.ndarray       # (2,)
    normals: np.ndarray      # (4, 2)

    def triangle(self, which: int) -> np.ndarray:
        """Corner points of sub-triangle 1 (half-edges 1, 2) or 2 (3, 4)."""
        if which == 1:
            return self.corners[[0, 1, 2]]
        if which == 2:
            return self.corners[[0, 2, 3]]
        raise ValueError("triangle index must be 1 or 2")


def build_uniform_grid(n: int, x_max: float, y_max: float) -> Grid2D:
    """Uniform grid with n interior nodes per axis (n+1 subintervals)."""
    if n < 2:
        raise ValueError("need at least 2 interior nodes per axis")
    if x_max <= 0.0 or y_max <= 0.0:
        raise ValueError("domain extents must be positive")
    return Grid2D(
        x=Axis1D.from_nodes(np.linspace(0.0, x_max, n + 2)),
        y=Axis1D.from_nodes(np.linspace(0.0, y_max, n + 2)),
    )


def build_grid(x_nodes, y_nodes) -> Grid2D:
    """Grid from user-supplied node vectors (hook for nonuniform spacing)."""
    gx = Axis1D.from_nodes(x_nodes)
    gy = Axis1D.from_nodes(y_nodes)
    if gx.n_interior != gy.n_interior:
        raise ValueError("both axes must carry the same number of interior nodes")
    return Grid2D(x=gx, y=gy)


def interaction_volume(grid: Grid2D, i: int, j: int) -> InteractionVolumeGeometry:
    """Geometry of R_ij for 1 <= i, j <= N+1.

    Boundary nodes stand in as corner "cell centres" when i or j touches the
    domain edge; their values are Dirichlet data during assembly.
    """
    n = grid.n
    if not (1 <= i <= n + 1 and 1 <= j <= n + 1):
        raise IndexError(f"interaction volume index ({i}, {j}) outside 1..{n + 1}")
    xn, yn = grid.x.nodes, grid.y.nodes
    xf, yf = grid.x.faces, grid.y.faces
    corners = np.array(
        [
            [xn[i - 1], yn[j - 1]],
            [xn[i], yn[j - 1]],
            [xn[i], yn[j]],
            [xn[i - 1], yn[j]],
        ]
    )
    cells = np.array(
        [[i - 1, j - 1], [i, j - 1], [i, j], [i - 1, j]], dtype=int
    )
    center = np.array([xf[i], yf[j]])
    edge_mid = np.array(
        [
            [xf[i], yn[j - 1]],   # 1: bottom end of the vertical face
            [xn[i], yf[j]],       # 2: right end of the horizontal face
            [xf[i], yn[j]],       # 3: top end of the vertical face
            [xn[i - 1], yf[j]],   # 4: left end of the horizontal face
        ]
    )
    normals = np.array(
        [
            [yf[j] - yn[j - 1], 0.0],
            [0.0, xn[i] - xf[i]],
            [yn[j] - yf[j], 0.0],
            [0.0, xf[i] - xn[i - 1]],
        ]
    )
    return InteractionVolumeGeometry(
        corners=corners,
        cells=cells,
        edge_midpoints=edge_mid,
        center=center,
        normals=normals,
    )
