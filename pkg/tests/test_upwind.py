"""Upwind convection: stencil values, fallback, manufactured-solution orders."""

import numpy as np
import pytest

from lmpfa_pricer.assembly import assemble_convection
from lmpfa_pricer.grid import build_grid, build_uniform_grid
from lmpfa_pricer.model import ConvectionField, MarketParams
from lmpfa_pricer.upwind import upwind1_row, upwind2_row


def constant_field(grid, fx, fy):
    return ConvectionField(
        fx_face=np.full(grid.x.faces.size, float(fx)),
        fy_face=np.full(grid.y.faces.size, float(fy)),
        reaction=0.0,
    )


def unit_grid(n):
    nodes = np.arange(n + 2, dtype=float)
    return build_grid(nodes, nodes)


def test_upwind1_constant_advection_stencils():
    g = unit_grid(6)
    f = constant_field(g, 1.0, 0.0)
    row = upwind1_row(g, f, 3, 3)
    assert row[(0, 0)] == pytest.approx(1.0)
    assert row[(-1, 0)] == pytest.approx(-1.0)
    assert row.get((1, 0), 0.0) == 0.0
    # mirrored for leftward flow
    f = constant_field(g, -1.0, 0.0)
    row = upwind1_row(g, f, 3, 3)
    assert row[(0, 0)] == pytest.approx(1.0)
    assert row[(1, 0)] == pytest.approx(-1.0)


def test_upwind1_table_parameter_weight():
    m = MarketParams()
    g = build_uniform_grid(2, 300.0, 300.0)  # faces at 0, 50, 150, 250, 300
    f = ConvectionField.from_market(m, g)
    assert f.fx_at(1) == pytest.approx(-3.525)
    row = upwind1_row(g, f, 1, 1)
    # east face velocity f(150) < 0: upwind value is the eastern neighbour
    lj = g.y.widths[1]
    assert row[(1, 0)] == pytest.approx(-3.525 * lj)


def test_upwind2_second_order_stencil():
    g = unit_grid(8)
    f = constant_field(g, 1.0, 0.0)
    row = upwind2_row(g, f, 4, 4)
    assert row[(0, 0)] == pytest.approx(1.5)
    assert row[(-1, 0)] == pytest.approx(-2.0)
    assert row[(-2, 0)] == pytest.approx(0.5)
    assert (1, 0) not in row and (2, 0) not in row
    # mirrored stencil for negative velocity
    f = constant_field(g, -1.0, 0.0)
    row = upwind2_row(g, f, 4, 4)
    assert row[(0, 0)] == pytest.approx(1.5)
    assert row[(1, 0)] == pytest.approx(-2.0)
    assert row[(2, 0)] == pytest.approx(0.5)


def test_upwind2_constant_field_telescopes():
    g = unit_grid(8)
    f = constant_field(g, 0.7, -0.3)
    row = upwind2_row(g, f, 4, 4)
    assert sum(row.values()) == pytest.approx(0.0, abs=1e-14)


def test_boundary_adjacent_cells_fall_back_to_first_order():
    g = unit_grid(6)
    m = MarketParams()
    f = ConvectionField.from_market(m, g)
    n = g.n
    for (i, j) in ((1, 3), (n, 3), (3, 1), (3, n), (1, 1)):
        assert upwind2_row(g, f, i, j) == upwind1_row(g, f, i, j)
    assert upwind2_row(g, f, 2, 2) != upwind1_row(g, f, 2, 2)


def test_divergence_free_row_sum():
    # constant f is divergence free: rows annihilate constants
    g = unit_grid(6)
    f = constant_field(g, 0.4, 1.2)
    for (i, j) in ((1, 1), (2, 4), (6, 6)):
        assert sum(upwind1_row(g, f, i, j).values()) == pytest.approx(0.0, abs=1e-14)


def test_index_bounds():
    g = unit_grid(4)
    f = constant_field(g, 1.0, 0.0)
    with pytest.raises(IndexError):
        upwind1_row(g, f, 0, 1)
    with pytest.raises(IndexError):
        upwind2_row(g, f, 1, g.n + 1)


def _field_sin(grid):
    # smooth velocity with sign changes on [0, 2 pi]
    return ConvectionField(
        fx_face=np.cos(grid.x.faces),
        fy_face=np.sin(grid.y.faces + 0.3),
        reaction=0.0,
    )


def _convection_residual(n, order):
    """L2 norm of the per-cell residual density for V = sin(x) sin(y).

    The exact edge fluxes are closed-form line integrals of (f . n) V;
    the density convention divides the cell balance by the cell measure.
    Only cells where the scheme runs at its nominal order are counted.
    """
    width = 2.0 * np.pi
    g = build_grid(np.linspace(0.0, width, n + 2), np.linspace(0.0, width, n + 2))
    f = _field_sin(g)
    xn, yn = g.node_mesh()
    v = np.sin(xn) * np.sin(yn)
    op = assemble_convection(g, f, order)
    meas = g.interior_measures()
    num = op.apply(v[1:-1, 1:-1].reshape(-1), v).reshape(n, n) / meas

    xf, yf = g.x.faces, g.y.faces

    def east_flux(i, j):
        # int f_x(x_f) sin(x_f) sin(y) dy over the east edge of cell i
        x = xf[i + 1]
        return np.cos(x) * np.sin(x) * (np.cos(yf[j]) - np.cos(yf[j + 1]))

    def north_flux(i, j):
        y = yf[j + 1]
        return np.sin(y + 0.3) * np.sin(y) * (np.cos(xf[i]) - np.cos(xf[i + 1]))

    exact = np.empty((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            exact[i - 1, j - 1] = (
                east_flux(i, j) - east_flux(i - 1, j)
                + north_flux(i, j) - north_flux(i, j - 1)
            )
    res = num - exact / meas
    lo = 1 if order == 2 else 0  # exclude the first-order fallback band
    sl = slice(lo, n - lo) if lo else slice(None)
    m = meas[sl, sl]
    return float(np.sqrt(np.sum(m * res[sl, sl] ** 2)))


@pytest.mark.parametrize("order,min_rate", [(1, 0.9), (2, 1.8)])
def test_manufactured_convection_order(order, min_rate):
    errs = [_convection_residual(n, order) for n in (16, 32, 64)]
    rates = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
    # observed rate over the full halving sequence, with a per-leg guard
    # against a pathological leg hiding behind the average
    assert np.mean(rates) >= min_rate, (errs, rates)
    assert min(rates) >= min_rate - 0.1, (errs, rates)


def test_upwind_operator_sign_pattern_on_table_parameters():
    # the convection operator's own rows: nonnegative diagonal and
    # nonpositive off-diagonal weights (M-matrix-compatible pattern)
    m = MarketParams()
    g = build_uniform_grid(12, 300.0, 300.0)
    f = ConvectionField.from_market(m, g)
    op = assemble_convection(g, f, 1)
    mat = op.matrix().tocoo()
    diag = mat.row == mat.col
    assert np.all(mat.data[diag] >= 0.0)
    assert np.all(mat.data[~diag] <= 1e-14)
