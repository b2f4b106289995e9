"""PDE coefficient data for the two-asset Black-Scholes model.

The pricing equation is marched in time-to-maturity form

    dV/dtau = div(M grad V) + div(f V) + lambda V + beta [max(V* - V, 0)]^p

with

    M = 1/2 [[s1^2 x^2, rho s1 s2 x y], [rho s1 s2 x y, s2^2 y^2]]
    f = ((r - s1^2 - rho s1 s2 / 2) x, (r - s2^2 - rho s1 s2 / 2) y)
    lambda = -3 r + s1^2 + s2^2 + rho s1 s2

which expands back to the usual non-conservative operator.  The diffusion
tensor is replaced by its exact average over each control volume; the
convection field is sampled at cell faces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .grid import Grid2D

EUROPEAN = "european"
AMERICAN = "american"

BASKET_PUT = "basket-put"
CALL_ON_MAX = "call-on-max"


@dataclass(frozen=True)
class MarketParams:
    """Market data: volatilities, correlation, rate, strike, maturity."""

    sigma1: float = 0.3
    sigma2: float = 0.3
    rho: float = 0.3
    r: float = 0.08
    strike: float = 100.0
    maturity: float = 1.0 / 12.0
    alpha1: float = 0.5
    alpha2: float = 0.5

    def __post_init__(self):
        if self.sigma1 <= 0.0 or self.sigma2 <= 0.0:
            raise ValueError("volatilities must be positive")
        if abs(self.rho) > 1.0:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.strike <= 0.0 or self.maturity <= 0.0:
            raise ValueError("strike and maturity must be positive")

    @property
    def reaction(self) -> float:
        """Zeroth-order coefficient of the divergence form."""
        s1, s2, rho = self.sigma1, self.sigma2, self.rho
        return -3.0 * self.r + s1 * s1 + s2 * s2 + rho * s1 * s2

    @property
    def conv_coeff_x(self) -> float:
        """f_x = conv_coeff_x * x."""
        return self.r - self.sigma1**2 - 0.5 * self.rho * self.sigma1 * self.sigma2

    @property
    def conv_coeff_y(self) -> float:
        return self.r - self.sigma2**2 - 0.5 * self.rho * self.sigma1 * self.sigma2


@dataclass(frozen=True)
class PenaltyParams:
    """Power penalty beta [max(V* - V, 0)]^(1/k), smoothed on a radius eps.

    ``beta = 0`` recovers the European equation.  The exponent is 1/k; the
    default k = 1/2 gives the differentiable quadratic penalty.
    """

    beta: float = 0.0
    k: float = 0.5
    epsilon: float = 0.0

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError("penalty magnitude must be nonnegative")
        if self.k <= 0.0:
            raise ValueError("penalty power parameter must be positive")
        if self.epsilon < 0.0:
            raise ValueError("smoothing radius must be nonnegative")

    @property
    def exponent(self) -> float:
        return 1.0 / self.k


@dataclass(frozen=True)
class CellTensor:
    """Averaged diffusion tensor entries of one control volume."""

    m11: float
    m12: float
    m22: float

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])


def averaged_tensor(market: MarketParams, cell) -> CellTensor:
    """Exact average of the diffusion tensor over a rectangular cell.

    ``cell`` is ((xl, xr), (yl, yr)).  The averages of the quadratic entries
    reduce to cubic-difference quotients:

        m11 = s1^2/6 (xr^3 - xl^3)/(xr - xl)
        m12 = rho s1 s2 / 8 (xr + xl)(yr + yl)
    """
    (xl, xr), (yl, yr) = cell
    if not (0.0 <= xl < xr and 0.0 <= yl < yr):
        raise ValueError("cell bounds must be ordered and nonnegative")
    m11 = market.sigma1**2 / 6.0 * (xr**3 - xl**3) / (xr - xl)
    m22 = market.sigma2**2 / 6.0 * (yr**3 - yl**3) / (yr - yl)
    m12 = market.rho * market.sigma1 * market.sigma2 / 8.0 * (xr + xl) * (yr + yl)
    return CellTensor(m11=m11, m12=m12, m22=m22)


def averaged_tensor_field(market: MarketParams, grid: Grid2D) -> np.ndarray:
    """(N+2, N+2, 2, 2) averaged tensors for every cell, boundary included."""
    xf, yf = grid.x.faces, grid.y.faces

    def cubic_quot(f):
        return (f[1:] ** 3 - f[:-1] ** 3) / (f[1:] - f[:-1])

    m11 = market.sigma1**2 / 6.0 * cubic_quot(xf)
    m22 = market.sigma2**2 / 6.0 * cubic_quot(yf)
    sx = xf[1:] + xf[:-1]
    sy = yf[1:] + yf[:-1]
    m12 = market.rho * market.sigma1 * market.sigma2 / 8.0 * np.outer(sx, sy)
    out = np.empty((xf.size - 1, yf.size - 1, 2, 2))
    out[..., 0, 0] = m11[:, None]
    out[..., 1, 1] = m22[None, :]
    out[..., 0, 1] = m12
    out[..., 1, 0] = m12
    return out


@dataclass(frozen=True)
class ConvectionField:
    """Face-sampled convection field f = (cx * x, cy * y).

    ``fx_face[i]`` is f_x at the face x_{i-1/2}; the east face of cell i is
    ``fx_face[i + 1]``.
    """

    fx_face: np.ndarray
    fy_face: np.ndarray
    reaction: float

    @classmethod
    def from_market(cls, market: MarketParams, grid: Grid2D) -> "ConvectionField":
        return cls(
            fx_face=market.conv_coeff_x * grid.x.faces,
            fy_face=market.conv_coeff_y * grid.y.faces,
            reaction=market.reaction,
        )

    def fx_at(self, i: int) -> float:
        """f_x at the east face x_{i+1/2} of cell i."""
        return float(self.fx_face[i + 1])

    def fy_at(self, j: int) -> float:
        return float(self.fy_face[j + 1])


# --------------------------------------------------------------------------
# Payoffs and Dirichlet boundary data
# --------------------------------------------------------------------------

def payoff_value(name: str, market: MarketParams, x, y):
    """Evaluate the payoff on coordinate arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if name == BASKET_PUT:
        return np.maximum(market.strike - market.alpha1 * x - market.alpha2 * y, 0.0)
    if name == CALL_ON_MAX:
        return np.maximum(np.maximum(x, y) - market.strike, 0.0)
    raise ValueError(f"unknown payoff {name!r}")


@dataclass(frozen=True)
class EdgeCondition:
    """One Dirichlet edge value, as a small tag so configs stay serialisable.

    kinds:
      ``zero``        -- V = 0
      ``strike``      -- V = K
      ``far-linear``  -- V = edge_coordinate - K e^(-r tau)
      ``custom``      -- arbitrary callable (position, tau) -> value
    """

    kind: str
    fn: Optional[Callable] = None

    def evaluate(self, market: MarketParams, edge_coordinate: float, position, tau: float):
        position = np.asarray(position, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(position)
        if self.kind == "strike":
            return np.full_like(position, market.strike)
        if self.kind == "far-linear":
            value = edge_coordinate - market.strike * math.exp(-market.r * tau)
            return np.full_like(position, value)
        if self.kind == "custom":
            return np.asarray(self.fn(position, tau), dtype=float)
        raise ValueError(f"unknown edge condition {self.kind!r}")


@dataclass(frozen=True)
class ProblemSpec:
    """Full problem description: market, penalty, payoff, boundary data.

    ``edges`` maps "west"/"east"/"south"/"north" to EdgeCondition (west: x=0,
    east: x=x_max, south: y=0, north: y=y_max).  ``consistent_data`` marks
    whether initial and boundary data agree at tau=0; the paper-faithful
    configurations do not, and are flagged rather than repaired.
    """

    market: MarketParams
    penalty: PenaltyParams
    payoff: str
    edges: dict
    option_style: str
    consistent_data: bool = True

    def __post_init__(self):
        if self.option_style not in (EUROPEAN, AMERICAN):
            raise ValueError(f"unknown option style {self.option_style!r}")
        if self.payoff == BASKET_PUT and not math.isclose(
            self.market.alpha1 + self.market.alpha2, 1.0, rel_tol=0.0, abs_tol=1e-12
        ):
            raise ValueError("basket weights must sum to 1")
        if self.option_style == EUROPEAN and self.penalty.beta != 0.0:
            raise ValueError("a European problem cannot carry a penalty term")

    @classmethod
    def european(cls, market: MarketParams, payoff: str = CALL_ON_MAX) -> "ProblemSpec":
        """European problem with the far-field linear Dirichlet data.

        Near edges carry V = 0 and far edges the deep in-the-money value
        x_max - K e^(-r tau); this pairs naturally with the call-on-max
        payoff used for validation.  The data are knowingly inconsistent
        with the payoff along the near edges.
        """
        edges = {
            "west": EdgeCondition("zero"),
            "south": EdgeCondition("zero"),
            "east": EdgeCondition("far-linear"),
            "north": EdgeCondition("far-linear"),
        }
        return cls(
            market=market,
            penalty=PenaltyParams(beta=0.0),
            payoff=payoff,
            edges=edges,
            option_style=EUROPEAN,
            consistent_data=False,
        )

    @classmethod
    def american(
        cls,
        market: MarketParams,
        penalty: PenaltyParams,
        payoff: str = BASKET_PUT,
    ) -> "ProblemSpec":
        """American put problem: V = K on the degenerate edges, 0 far away.

        The near-edge condition ignores the one-dimensional sub-problem that
        actually lives on x = 0; it is implemented as stated.
        """
        edges = {
            "west": EdgeCondition("strike"),
            "south": EdgeCondition("strike"),
            "east": EdgeCondition("zero"),
            "north": EdgeCondition("zero"),
        }
        return cls(
            market=market,
            penalty=penalty,
            payoff=payoff,
            edges=edges,
            option_style=AMERICAN,
            consistent_data=False,
        )

    def with_penalty(self, penalty: PenaltyParams) -> "ProblemSpec":
        return replace(self, penalty=penalty)

    def boundary_value(self, edge: str, position, tau: float, extent: float = 0.0):
        """Dirichlet value on one edge at arc position(s) and time tau.

        ``extent`` is the edge's own coordinate (x_max or y_max), needed by
        the far-field linear condition.
        """
        if edge not in self.edges:
            raise KeyError(f"unknown edge {edge!r}")
        coord = 0.0 if edge in ("west", "south") else extent
        return self.edges[edge].evaluate(self.market, coord, position, tau)

    def boundary_node_values(self, grid: Grid2D, tau: float) -> np.ndarray:
        """Values at every boundary node, as an (N+2, N+2) masked layout.

        Only the boundary ring is meaningful; interior entries are zero.
        Corner nodes take the west/east edge value (the canned European and
        American configurations agree at the corners either way).
        """
        n2 = grid.n + 2
        xn, yn = grid.x.nodes, grid.y.nodes
        out = np.zeros((n2, n2))
        xmax, ymax = grid.x.x_max, grid.y.x_max
        out[:, 0] = self.edges["south"].evaluate(self.market, 0.0, xn, tau)
        out[:, -1] = self.edges["north"].evaluate(self.market, ymax, xn, tau)
        out[0, :] = self.edges["west"].evaluate(self.market, 0.0, yn, tau)
        out[-1, :] = self.edges["east"].evaluate(self.market, xmax, yn, tau)
        return out

    def initial_boundary_mismatch(self, grid: Grid2D) -> float:
        """Max |payoff - boundary data| over boundary nodes at tau = 0."""
        xn, yn = grid.node_mesh()
        v0 = payoff_value(self.payoff, self.market, xn, yn)
        g0 = self.boundary_node_values(grid, 0.0)
        ring = np.zeros_like(v0, dtype=bool)
        ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
        return float(np.max(np.abs((v0 - g0)[ring])))


def boundary_value(spec: ProblemSpec, edge: str, position, tau: float, extent: float = 0.0):
    """Module-level alias of ProblemSpec.boundary_value."""
    return spec.boundary_value(edge, position, tau, extent=extent)


@dataclass(frozen=True)
class PriceSurface:
    """Node-indexed option values at one time level.

    ``values`` has shape (N+2, N+2), indexed [x node, y node], boundary ring
    included.
    """

    values: np.ndarray
    grid: Grid2D
    tau: float
    payoff: str

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1]

    def interior_vector(self) -> np.ndarray:
        """Interior values flattened with the x index slow, y index fast."""
        return self.interior.reshape(-1).copy()

    @classmethod
    def from_interior_vector(
        cls, vec: np.ndarray, grid: Grid2D, tau: float, payoff: str,
        boundary: Optional[np.ndarray] = None,
    ) -> "PriceSurface":
        n = grid.n
        values = np.zeros((n + 2, n + 2))
        values[1:-1, 1:-1] = np.asarray(vec, dtype=float).reshape(n, n)
        if boundary is not None:
            values[0, :] = boundary[0, :]
            values[-1, :] = boundary[-1, :]
            values[:, 0] = boundary[:, 0]
            values[:, -1] = boundary[:, -1]
        return cls(values=values, grid=grid, tau=tau, payoff=payoff)


def payoff_surface(spec: ProblemSpec, grid: Grid2D) -> PriceSurface:
    """Initial condition V(x, y, 0) sampled at all nodes."""
    xn, yn = grid.node_mesh()
    values = payoff_value(spec.payoff, spec.market, xn, yn)
    return PriceSurface(values=values, grid=grid, tau=0.0, payoff=spec.payoff)
