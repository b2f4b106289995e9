"""Global assembly of the semi-discrete system dV/dtau = A V + G(V) + F.

A composes the L-MPFA (or fitted finite volume) diffusion block, an upwind
convection block, the reaction diagonal and the inverse measure scaling;
Dirichlet neighbours are folded into a boundary-contribution matrix so F
can be re-evaluated at every time level.

Unknowns are ordered (1,1), (1,2), ..., (1,N), (2,1), ...: the x index is
slow and the y index fast, matching the block-tridiagonal layout of the
diffusion matrix (7-point stencil: offsets (0,0), (+-1,0), (0,+-1),
(-1,-1), (+1,+1)).

Assembly is deterministic and the returned operators are immutable in
practice: rows are accumulated independently, so the result does not depend
on any evaluation order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from . import fitted as fitted_mod
from . import upwind as upwind_mod
from .grid import Grid2D
from .lmpfa import transmissibility_field
from .model import ConvectionField, MarketParams, ProblemSpec, averaged_tensor_field

Offset = Tuple[int, int]


class Scheme(enum.Enum):
    """Spatial discretisation selector."""

    FITTED_FV = "fitted-fv"
    LMPFA_UP1 = "lmpfa-up1"
    LMPFA_UP2 = "lmpfa-up2"
    FITTED_LMPFA_UP1 = "fitted-lmpfa-up1"
    FITTED_LMPFA_UP2 = "fitted-lmpfa-up2"

    @classmethod
    def from_name(cls, name: str) -> "Scheme":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(
            f"unknown scheme {name!r}; choose from "
            + ", ".join(m.value for m in cls)
        )


@dataclass(frozen=True)
class StencilOperator:
    """Sparse operator over the N^2 interior unknowns plus boundary data.

    ``coeffs`` maps a neighbour offset to the (N, N) per-cell coefficient
    array; entries whose neighbour is a Dirichlet node live in ``boundary``
    instead, a CSR matrix against the values at ``boundary_nodes``.
    """

    n: int
    coeffs: Dict[Offset, np.ndarray]
    boundary: sp.csr_matrix
    boundary_nodes: np.ndarray  # (K, 2) node indices

    def matrix(self) -> sp.csr_matrix:
        """Interior part as CSR over the flattened unknowns."""
        n = self.n
        size = n * n
        rows, cols, vals = [], [], []
        ii, jj = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
        for (di, dj), coeff in sorted(self.coeffs.items()):
            ni, nj = ii + di, jj + dj
            mask = (ni >= 1) & (ni <= n) & (nj >= 1) & (nj <= n) & (coeff != 0.0)
            rows.append(((ii - 1) * n + (jj - 1))[mask])
            cols.append(((ni - 1) * n + (nj - 1))[mask])
            vals.append(coeff[mask])
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(size, size),
        )
        return mat.tocsr()

    def boundary_vector(self, node_values: np.ndarray) -> np.ndarray:
        """Contribution vector F from an (N+2, N+2) node-value array."""
        g = node_values[self.boundary_nodes[:, 0], self.boundary_nodes[:, 1]]
        return self.boundary @ g

    def row(self, i: int, j: int) -> Dict[Offset, float]:
        """Offset map of one cell row, boundary neighbours included."""
        n = self.n
        out = {}
        for off, coeff in self.coeffs.items():
            v = coeff[i - 1, j - 1]
            if v != 0.0:
                out[off] = float(v)
        r = (i - 1) * n + (j - 1)
        brow = self.boundary.getrow(r)
        for k, v in zip(brow.indices, brow.data):
            bi, bj = self.boundary_nodes[k]
            out[(int(bi) - i, int(bj) - j)] = out.get((int(bi) - i, int(bj) - j), 0.0) + float(v)
        return out

    def apply(self, interior: np.ndarray, node_values: np.ndarray) -> np.ndarray:
        """A v + F for an interior vector and boundary node values."""
        return self.matrix() @ interior + self.boundary_vector(node_values)

    def scaled(self, row_scale: np.ndarray) -> "StencilOperator":
        """Operator with every row multiplied by ``row_scale`` (N, N)."""
        coeffs = {off: c * row_scale for off, c in self.coeffs.items()}
        d = sp.diags(row_scale.reshape(-1))
        return StencilOperator(
            n=self.n,
            coeffs=coeffs,
            boundary=(d @ self.boundary).tocsr(),
            boundary_nodes=self.boundary_nodes,
        )

    def plus(self, other: "StencilOperator") -> "StencilOperator":
        coeffs = {off: c.copy() for off, c in self.coeffs.items()}
        for off, c in other.coeffs.items():
            if off in coeffs:
                coeffs[off] = coeffs[off] + c
            else:
                coeffs[off] = c.copy()
        return StencilOperator(
            n=self.n,
            coeffs=coeffs,
            boundary=(self.boundary + other.boundary).tocsr(),
            boundary_nodes=self.boundary_nodes,
        )


class _Accumulator:
    """Collects per-offset coefficient blocks, folding Dirichlet neighbours."""

    def __init__(self, grid: Grid2D):
        self.grid = grid
        self.n = grid.n
        self.offsets: Dict[Offset, np.ndarray] = {}

    def add(self, di: int, dj: int, block: np.ndarray):
        """Add (N, N) per-cell coefficients for neighbour offset (di, dj)."""
        if (di, dj) not in self.offsets:
            self.offsets[(di, dj)] = np.zeros((self.n, self.n))
        self.offsets[(di, dj)] += block

    def add_cell(self, i: int, j: int, row: Dict[Offset, float]):
        for (di, dj), v in row.items():
            if (di, dj) not in self.offsets:
                self.offsets[(di, dj)] = np.zeros((self.n, self.n))
            self.offsets[(di, dj)][i - 1, j - 1] += v

    def build(self) -> StencilOperator:
        n = self.n
        bid = -np.ones((n + 2, n + 2), dtype=int)
        bnodes = []
        for i in range(n + 2):
            for j in range(n + 2):
                if i in (0, n + 1) or j in (0, n + 1):
                    bid[i, j] = len(bnodes)
                    bnodes.append((i, j))
        bnodes = np.array(bnodes, dtype=int)

        coeffs: Dict[Offset, np.ndarray] = {}
        rows, cols, vals = [], [], []
        ii, jj = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
        for (di, dj), block in self.offsets.items():
            ni, nj = ii + di, jj + dj
            if np.any((ni < 0) | (ni > n + 1) | (nj < 0) | (nj > n + 1)):
                bad = (ni < 0) | (ni > n + 1) | (nj < 0) | (nj > n + 1)
                if np.any(block[bad] != 0.0):
                    raise AssertionError(
                        f"offset ({di}, {dj}) reaches outside the node range"
                    )
            interior = (ni >= 1) & (ni <= n) & (nj >= 1) & (nj <= n)
            kept = np.where(interior, block, 0.0)
            coeffs[(di, dj)] = kept
            edge = ~interior & (block != 0.0)
            if np.any(edge):
                rows.append(((ii - 1) * n + (jj - 1))[edge])
                cols.append(bid[ni[edge], nj[edge]])
                vals.append(block[edge])
        if rows:
            boundary = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n * n, len(bnodes)),
            ).tocsr()
        else:
            boundary = sp.csr_matrix((n * n, len(bnodes)))
        return StencilOperator(
            n=n, coeffs=coeffs, boundary=boundary, boundary_nodes=bnodes
        )


def _add_diffusion(acc: _Accumulator, tt: np.ndarray, fitted_west: bool, fitted_south: bool):
    """Accumulate the 8 half-edge flux families built from transmissibilities.

    ``tt[a-1, b-1]`` is the 4x4 transmissibility of interaction volume
    R_{a,b}.  With ``fitted_west``/``fitted_south``, the west (i = 1) and
    south (j = 1) degenerate edges are left out for replacement.
    """
    n = acc.n

    def masked(block, kill_first_i=False, kill_first_j=False):
        if kill_first_i or kill_first_j:
            block = block.copy()
            if kill_first_i:
                block[0, :] = 0.0
            if kill_first_j:
                block[:, 0] = 0.0
        return block

    # East edge (+): lower half = he3 of R_{i+1,j}, upper half = he1 of R_{i+1,j+1}.
    e_lo = tt[1:n + 1, 0:n]
    acc.add(0, -1, e_lo[..., 2, 0])
    acc.add(1, 0, e_lo[..., 2, 2])
    acc.add(0, 0, e_lo[..., 2, 3])
    e_up = tt[1:n + 1, 1:n + 1]
    acc.add(0, 0, e_up[..., 0, 0])
    acc.add(1, 0, e_up[..., 0, 1])
    acc.add(1, 1, e_up[..., 0, 2])
    # North edge (+): left half = he2 of R_{i,j+1}, right half = he4 of R_{i+1,j+1}.
    n_le = tt[0:n, 1:n + 1]
    acc.add(-1, 0, n_le[..., 1, 0])
    acc.add(0, 0, n_le[..., 1, 1])
    acc.add(0, 1, n_le[..., 1, 2])
    n_ri = tt[1:n + 1, 1:n + 1]
    acc.add(0, 0, n_ri[..., 3, 0])
    acc.add(1, 1, n_ri[..., 3, 2])
    acc.add(0, 1, n_ri[..., 3, 3])
    # West edge (-): lower half = he3 of R_{ij}, upper half = he1 of R_{i,j+1}.
    w_lo = tt[0:n, 0:n]
    acc.add(-1, -1, masked(-w_lo[..., 2, 0], kill_first_i=fitted_west))
    acc.add(0, 0, masked(-w_lo[..., 2, 2], kill_first_i=fitted_west))
    acc.add(-1, 0, masked(-w_lo[..., 2, 3], kill_first_i=fitted_west))
    w_up = tt[0:n, 1:n + 1]
    acc.add(-1, 0, masked(-w_up[..., 0, 0], kill_first_i=fitted_west))
    acc.add(0, 0, masked(-w_up[..., 0, 1], kill_first_i=fitted_west))
    acc.add(0, 1, masked(-w_up[..., 0, 2], kill_first_i=fitted_west))
    # South edge (-): left half = he2 of R_{ij}, right half = he4 of R_{i+1,j}.
    s_le = tt[0:n, 0:n]
    acc.add(-1, -1, masked(-s_le[..., 1, 0], kill_first_j=fitted_south))
    acc.add(0, -1, masked(-s_le[..., 1, 1], kill_first_j=fitted_south))
    acc.add(0, 0, masked(-s_le[..., 1, 2], kill_first_j=fitted_south))
    s_ri = tt[1:n + 1, 0:n]
    acc.add(0, -1, masked(-s_ri[..., 3, 0], kill_first_j=fitted_south))
    acc.add(1, 0, masked(-s_ri[..., 3, 2], kill_first_j=fitted_south))
    acc.add(0, 0, masked(-s_ri[..., 3, 3], kill_first_j=fitted_south))


def _add_fitted_band(acc: _Accumulator, grid: Grid2D, market: MarketParams):
    """Fitted degenerate-edge fluxes of the i = 1 and j = 1 bands.

    The western edge of C_{1,j} enters with outward sign -1 and weights on
    V_{0,j}, V_{1,j}, V_{1,j+1}; the southern edge of C_{i,1} mirrors it.
    """
    n = acc.n
    for j in range(1, n + 1):
        w = fitted_mod.fitted_west_flux(market, grid, j)
        acc.add_cell(1, j, {(-1, 0): -w.boundary, (0, 0): -w.first, (0, 1): -w.diagonal})
    for i in range(1, n + 1):
        s = fitted_mod.fitted_south_flux(market, grid, i)
        acc.add_cell(i, 1, {(0, -1): -s.boundary, (0, 0): -s.first, (1, 0): -s.diagonal})


def _add_fitted_fv(acc: _Accumulator, grid: Grid2D, market: MarketParams):
    """All-face fitted finite-volume fluxes (diffusion + convection)."""
    n = acc.n
    vl, vr, vd = fitted_mod.vertical_face_weights(market, grid)
    # East faces of cells i = 1..N are the vertical faces 1..N.
    acc.add(0, 0, vl[1:, :])
    acc.add(1, 0, vr[1:, :])
    acc.add(1, 1, vd[1:, :])
    # West faces are the vertical faces 0..N-1, with outward sign -1.
    acc.add(-1, 0, -vl[:n, :])
    acc.add(0, 0, -vr[:n, :])
    acc.add(0, 1, -vd[:n, :])

    hd, hu, hdg = fitted_mod.horizontal_face_weights(market, grid)
    acc.add(0, 0, hd[:, 1:])
    acc.add(0, 1, hu[:, 1:])
    acc.add(1, 1, hdg[:, 1:])
    acc.add(0, -1, -hd[:, :n])
    acc.add(0, 0, -hu[:, :n])
    acc.add(1, 0, -hdg[:, :n])


def assemble_diffusion(grid: Grid2D, tensors: np.ndarray) -> StencilOperator:
    """Unscaled L-MPFA diffusion operator A_mp (plus its boundary block).

    ``tensors`` is the (N+2, N+2, 2, 2) averaged-tensor field.  Row (i, j)
    carries the seven-point coefficients built from the four interaction
    volumes around the cell; constant data (boundary included) are
    annihilated up to rounding.
    """
    tt = transmissibility_field(grid, tensors)
    acc = _Accumulator(grid)
    _add_diffusion(acc, tt, fitted_west=False, fitted_south=False)
    return acc.build()


def assemble_convection(grid: Grid2D, field: ConvectionField, order: int) -> StencilOperator:
    """Unscaled upwind convection operator A_up or A_2up."""
    acc = _Accumulator(grid)
    rows = upwind_mod.convection_rows(grid, field, order)
    for i in range(1, grid.n + 1):
        for j in range(1, grid.n + 1):
            acc.add_cell(i, j, rows[i - 1][j - 1])
    return acc.build()


def assemble_operator(scheme: Scheme, grid: Grid2D, spec: ProblemSpec) -> StencilOperator:
    """Composite spatial operator A = L^-1 (diffusion + convection + reaction).

    The returned operator's boundary block yields F(tau) when applied to the
    Dirichlet node values at tau.
    """
    market = spec.market
    acc = _Accumulator(grid)
    field = ConvectionField.from_market(market, grid)
    n = grid.n

    if scheme is Scheme.FITTED_FV:
        _add_fitted_fv(acc, grid, market)
    else:
        fitted = scheme in (Scheme.FITTED_LMPFA_UP1, Scheme.FITTED_LMPFA_UP2)
        order = 1 if scheme in (Scheme.LMPFA_UP1, Scheme.FITTED_LMPFA_UP1) else 2
        tensors = averaged_tensor_field(market, grid)
        tt = transmissibility_field(grid, tensors)
        _add_diffusion(acc, tt, fitted_west=fitted, fitted_south=fitted)
        rows = upwind_mod.convection_rows(
            grid, field, order, skip_west_band=fitted, skip_south_band=fitted
        )
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                acc.add_cell(i, j, rows[i - 1][j - 1])
        if fitted:
            _add_fitted_band(acc, grid, market)

    meas = grid.interior_measures()
    acc.add(0, 0, meas * market.reaction)
    return acc.build().scaled(1.0 / meas)


def assemble_system(
    scheme: Scheme, grid: Grid2D, spec: ProblemSpec, tau: float
) -> Tuple[StencilOperator, np.ndarray]:
    """(A, F) with F evaluated from the Dirichlet data at time tau."""
    op = assemble_operator(scheme, grid, spec)
    f = op.boundary_vector(spec.boundary_node_values(grid, tau))
    return op, f


def scheme_cell_row(grid, market, tensors, transmissibilities, upwind_order, i, j, fitted):
    """One unscaled stencil row of the (fitted) L-MPFA + upwind scheme.

    Exposed for row-level inspection and tests; boundary neighbours appear
    as plain offsets.
    """
    acc = _Accumulator(grid)
    _add_diffusion(acc, transmissibilities, fitted_west=fitted, fitted_south=fitted)
    if fitted:
        _add_fitted_band(acc, grid, market)
    field = ConvectionField.from_market(market, grid)
    builder = upwind_mod.upwind1_row if upwind_order == 1 else upwind_mod.upwind2_row
    row = builder(
        grid, field, i, j,
        skip_west=(fitted and i == 1),
        skip_south=(fitted and j == 1),
    )
    acc.add_cell(i, j, row)
    out = {}
    for off, block in acc.offsets.items():
        v = block[i - 1, j - 1]
        if v != 0.0:
            out[off] = float(v)
    return out


def dump_matrix(op: StencilOperator, path, scheme_name: str):
    """Write the interior matrix as `row col value` triplets (0-based)."""
    mat = op.matrix().tocoo()
    order = np.lexsort((mat.col, mat.row))
    with open(path, "w") as fh:
        fh.write(f"# lmpfa-pricer matrix N={op.n} scheme={scheme_name}\n")
        for k in order:
            fh.write(f"{mat.row[k]} {mat.col[k]} {mat.data[k]:.17g}\n")
