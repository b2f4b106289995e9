"""Fitted finite-volume face fluxes for the degenerate price region.

The total flux through a vertical face is the line integral of

    m11 dV/dx + m12 dV/dy + f_x V = x (a x dV/dx + b V + d dV/dy)

with a = s1^2/2, b = r - s1^2 - rho s1 s2 / 2 and d = rho s1 s2 y / 2.  On
the strip (0, x_1) the quantity a x V' + b V is approximated by the constant
that solves the local two-point boundary value problem, whose bounded
solution is linear in x; the cross-derivative is taken by a forward
difference on the interior-side column.  The same construction with
e = s2^2/2, k = r - s2^2 - rho s1 s2 / 2 handles the southern strip.

Away from the degenerate strips the two-point problem (a x v' + b v)' = 0
has the closed-form flux b (x_R^q V_R - x_L^q V_L)/(x_R^q - x_L^q) with
q = b/a; those weights power the standalone fitted finite-volume scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid2D
from .model import MarketParams


@dataclass(frozen=True)
class FittedEdgeFlux:
    """Weights of one degenerate-edge flux (oriented +x or +y).

    ``boundary`` multiplies the Dirichlet value (V_{0,j} or V_{i,0}),
    ``first`` the adjacent interior value, ``diagonal`` the forward
    neighbour used by the cross-derivative difference.
    """

    boundary: float
    first: float
    diagonal: float


def fitted_west_flux(market: MarketParams, grid: Grid2D, j: int) -> FittedEdgeFlux:
    """Flux through the western edge of C_{1,j} (the x-degenerate strip).

    Weights: (1/2) x_1 [(1/2) l_j (a+b) - d_j] on V_{1,j},
    (1/2) d_j x_1 on V_{1,j+1}, -(1/4) x_1 l_j (a-b) on V_{0,j}.
    """
    if not (1 <= j <= grid.n):
        raise IndexError(f"row {j} outside the interior range")
    a = 0.5 * market.sigma1**2
    b = market.conv_coeff_x
    dj = 0.5 * market.rho * market.sigma1 * market.sigma2 * grid.y.nodes[j]
    x1 = grid.x.nodes[1]
    lj = grid.y.widths[j]
    return FittedEdgeFlux(
        boundary=-0.25 * x1 * lj * (a - b),
        first=0.5 * x1 * (0.5 * lj * (a + b) - dj),
        diagonal=0.5 * dj * x1,
    )


def fitted_south_flux(market: MarketParams, grid: Grid2D, i: int) -> FittedEdgeFlux:
    """Flux through the southern edge of C_{i,1}; mirror of the western one."""
    if not (1 <= i <= grid.n):
        raise IndexError(f"column {i} outside the interior range")
    e = 0.5 * market.sigma2**2
    k = market.conv_coeff_y
    hpi = 0.5 * market.rho * market.sigma1 * market.sigma2 * grid.x.nodes[i]
    y1 = grid.y.nodes[1]
    hi = grid.x.widths[i]
    return FittedEdgeFlux(
        boundary=-0.25 * y1 * hi * (e - k),
        first=0.5 * y1 * (0.5 * hi * (e + k) - hpi),
        diagonal=0.5 * hpi * y1,
    )


def _two_point_weights(coef_a: float, coef_b: float, x_left: np.ndarray, x_right: np.ndarray):
    """Weights (w_left, w_right) of the fitted flux a x v' + b v at a face.

    Solves (a x v' + b v)' = 0 between two positive nodes.  The b -> 0 limit
    is the logarithmic two-point flux; a = 0 degenerates to pure upwinded
    convection.
    """
    x_left = np.asarray(x_left, dtype=float)
    x_right = np.asarray(x_right, dtype=float)
    if coef_a == 0.0:
        up = coef_b if coef_b >= 0.0 else 0.0
        dn = coef_b if coef_b < 0.0 else 0.0
        return np.full_like(x_left, up), np.full_like(x_left, dn)
    q = coef_b / coef_a
    if abs(q) < 1e-12:
        w = coef_a / np.log(x_right / x_left)
        return -w, w
    pl = x_left**q
    pr = x_right**q
    span = pr - pl
    return -coef_b * pl / span, coef_b * pr / span


def vertical_face_weights(market: MarketParams, grid: Grid2D):
    """Weight arrays of all vertical faces for the fitted FV scheme.

    Returns (w_left, w_right, w_diag), each (N+1, N): entry [i, j-1] is the
    face x_{i+1/2} at row j, i = 0..N, weighting V_{i,j}, V_{i+1,j} and
    V_{i+1,j+1}.  Row i = 0 carries the degenerate-strip weights, so its
    "left" value is the Dirichlet datum V_{0,j}.
    """
    n = grid.n
    a = 0.5 * market.sigma1**2
    b = market.conv_coeff_x
    xn = grid.x.nodes
    xf = grid.x.faces
    lj = grid.y.widths[1:-1]
    dj = 0.5 * market.rho * market.sigma1 * market.sigma2 * grid.y.nodes[1:-1]

    w_left = np.zeros((n + 1, n))
    w_right = np.zeros((n + 1, n))
    w_diag = np.zeros((n + 1, n))

    wl, wr = _two_point_weights(a, b, xn[1:n + 1], xn[2:n + 2])
    scale = (lj[None, :] * xf[2:n + 2, None])
    w_left[1:] = scale * np.asarray(wl)[:, None]
    w_right[1:] = scale * np.asarray(wr)[:, None] - xf[2:n + 2, None] * dj[None, :]
    w_diag[1:] = xf[2:n + 2, None] * dj[None, :]

    x1 = xn[1]
    w_left[0] = -0.25 * x1 * lj * (a - b)
    w_right[0] = 0.5 * x1 * (0.5 * lj * (a + b) - dj)
    w_diag[0] = 0.5 * dj * x1
    return w_left, w_right, w_diag


def horizontal_face_weights(market: MarketParams, grid: Grid2D):
    """Mirror of vertical_face_weights for the horizontal faces.

    Returns (w_down, w_up, w_diag), each (N, N+1): entry [i-1, j] is the
    face y_{j+1/2} at column i, weighting V_{i,j}, V_{i,j+1}, V_{i+1,j+1}.
    """
    n = grid.n
    e = 0.5 * market.sigma2**2
    k = market.conv_coeff_y
    yn = grid.y.nodes
    yf = grid.y.faces
    hi = grid.x.widths[1:-1]
    hpi = 0.5 * market.rho * market.sigma1 * market.sigma2 * grid.x.nodes[1:-1]

    w_down = np.zeros((n, n + 1))
    w_up = np.zeros((n, n + 1))
    w_diag = np.zeros((n, n + 1))

    wd, wu = _two_point_weights(e, k, yn[1:n + 1], yn[2:n + 2])
    scale = (hi[:, None] * yf[None, 2:n + 2])
    w_down[:, 1:] = scale * np.asarray(wd)[None, :]
    w_up[:, 1:] = scale * np.asarray(wu)[None, :] - yf[None, 2:n + 2] * hpi[:, None]
    w_diag[:, 1:] = yf[None, 2:n + 2] * hpi[:, None]

    y1 = yn[1]
    w_down[:, 0] = -0.25 * y1 * hi * (e - k)
    w_up[:, 0] = 0.5 * y1 * (0.5 * hi * (e + k) - hpi)
    w_diag[:, 0] = 0.5 * hpi * y1
    return w_down, w_up, w_diag


def fitted_row(grid, market, tensors, transmissibilities, upwind_order, i, j):
    """Stencil row of one degenerate-band cell of the fitted L-MPFA scheme.

    Returns an offset -> coefficient dict over node offsets (boundary
    neighbours included, unscaled by the cell measure).  Raises when (i, j)
    lies outside the band i = 1 or j = 1.
    """
    if not (i == 1 or j == 1):
        raise IndexError(f"cell ({i}, {j}) is not in the degenerate band")
    from .assembly import scheme_cell_row  # deferred: assembly composes rows

    return scheme_cell_row(
        grid, market, tensors, transmissibilities, upwind_order, i, j, fitted=True
    )
