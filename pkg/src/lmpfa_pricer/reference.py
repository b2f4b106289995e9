"""Closed-form and Monte Carlo references for the European call on the max.

The analytic price of a European call on max(S1, S2) combines three
bivariate normal probabilities (exercise against each asset and against
the strike).  The bivariate CDF is computed from the correlation-integral
representation

    M(a, b; rho) = Phi(a) Phi(b)
        + 1/(2 pi) * int_0^asin(rho) exp(-(a^2 + b^2 - 2 a b sin t)
                                          / (2 cos^2 t)) dt,

whose integrand is smooth on [0, asin rho]; fixed-order Gauss-Legendre
quadrature reaches well beyond the 1e-10 accuracy contract.

Cost-of-carry rates default to the risk-free rate (no dividends); the asset
legs then carry unit forward factors e^((b_i - r) T) = 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .model import CALL_ON_MAX, MarketParams, payoff_value

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)

#: Correlations are clamped to +-(1 - RHO_CLAMP) before quadrature.
RHO_CLAMP = 1e-12


@dataclass(frozen=True)
class BivariateNormalQuery:
    """Upper limits (in standard deviations) and correlation."""

    a: float
    b: float
    rho: float


def bivariate_cdf(a, b, rho: float):
    """P(X <= a, Y <= b) for standard normals with correlation rho.

    Accepts array limits (broadcast together); infinities follow the usual
    conventions.  |rho| is clamped just inside 1 with a warning.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(rho) > 1.0 - RHO_CLAMP:
        warnings.warn(
            f"correlation {rho} clamped to +-{1.0 - RHO_CLAMP}", RuntimeWarning
        )
        rho = math.copysign(1.0 - RHO_CLAMP, rho)

    a_b, b_b = np.broadcast_arrays(a, b)
    out = np.empty(a_b.shape)

    neg_inf = np.isneginf(a_b) | np.isneginf(b_b)
    a_inf = np.isposinf(a_b)
    b_inf = np.isposinf(b_b)
    finite = ~(neg_inf | a_inf | b_inf)

    out[neg_inf] = 0.0
    # One infinite upper limit marginalises to the other coordinate.
    only_a = a_inf & ~neg_inf
    only_b = b_inf & ~neg_inf & ~a_inf
    out[only_a] = np.where(np.isposinf(b_b[only_a]), 1.0, ndtr(b_b[only_a]))
    out[only_b] = ndtr(a_b[only_b])

    if np.any(finite):
        af = a_b[finite]
        bf = b_b[finite]
        phi = math.asin(rho)
        t = 0.5 * phi * (_GL_NODES + 1.0)
        w = 0.5 * phi * _GL_WEIGHTS
        sin_t = np.sin(t)
        cos2_t = np.cos(t) ** 2
        expo = -(
            af[..., None] ** 2
            + bf[..., None] ** 2
            - 2.0 * af[..., None] * bf[..., None] * sin_t
        ) / (2.0 * cos2_t)
        integral = np.sum(np.exp(expo) * w, axis=-1)
        out[finite] = ndtr(af) * ndtr(bf) + integral / (2.0 * math.pi)

    result = np.clip(out, 0.0, 1.0)
    return float(result) if result.ndim == 0 else result


def bivariate_cdf_query(q: BivariateNormalQuery) -> float:
    return float(bivariate_cdf(q.a, q.b, q.rho))


@dataclass(frozen=True)
class AnalyticInputs:
    """Inputs of the closed-form call-on-max price."""

    s1: float
    s2: float
    strike: float
    maturity: float
    sigma1: float
    sigma2: float
    rho: float
    r: float
    b1: float | None = None  # cost of carry, defaults to r
    b2: float | None = None

    @property
    def carry1(self) -> float:
        return self.r if self.b1 is None else self.b1

    @property
    def carry2(self) -> float:
        return self.r if self.b2 is None else self.b2

    @property
    def sigma_spread(self) -> float:
        return math.sqrt(
            self.sigma1**2 + self.sigma2**2 - 2.0 * self.rho * self.sigma1 * self.sigma2
        )

    @classmethod
    def from_market(cls, market: MarketParams, s1, s2) -> "AnalyticInputs":
        return cls(
            s1=s1,
            s2=s2,
            strike=market.strike,
            maturity=market.maturity,
            sigma1=market.sigma1,
            sigma2=market.sigma2,
            rho=market.rho,
            r=market.r,
        )


def black_scholes_call(s, strike, maturity, sigma, r, carry=None):
    """One-asset call with cost of carry: S e^((b-r)T) Phi(d1) - K e^(-rT) Phi(d2)."""
    carry = r if carry is None else carry
    s = np.asarray(s, dtype=float)
    srt = sigma * math.sqrt(maturity)
    with np.errstate(divide="ignore"):
        d1 = (np.log(s / strike) + (carry + 0.5 * sigma * sigma) * maturity) / srt
    d2 = d1 - srt
    price = s * math.exp((carry - r) * maturity) * ndtr(d1) - strike * math.exp(
        -r * maturity
    ) * ndtr(d2)
    return np.where(s <= 0.0, 0.0, price)


def analytic_price(inputs: AnalyticInputs, s1=None, s2=None):
    """European call on max(S1, S2); vectorised over the spot arrays.

    Degenerate spots (either asset at zero) reduce to the single-asset call
    on the other; a vanishing spread volatility (sigma1 = sigma2, rho = 1)
    reduces to the single-asset call on the larger spot.
    """
    s1 = np.asarray(inputs.s1 if s1 is None else s1, dtype=float)
    s2 = np.asarray(inputs.s2 if s2 is None else s2, dtype=float)
    s1, s2 = np.broadcast_arrays(s1, s2)
    k, t = inputs.strike, inputs.maturity
    sg1, sg2, rho, r = inputs.sigma1, inputs.sigma2, inputs.rho, inputs.r
    b1, b2 = inputs.carry1, inputs.carry2
    sigma = inputs.sigma_spread

    if sigma <= 1e-12:
        if not (math.isclose(sg1, sg2) and math.isclose(b1, b2)):
            raise ValueError("vanishing spread volatility with asymmetric dynamics")
        return black_scholes_call(np.maximum(s1, s2), k, t, sg1, r, carry=b1)

    rho1 = (sg1 - rho * sg2) / sigma
    rho2 = (sg2 - rho * sg1) / sigma
    srt = sigma * math.sqrt(t)

    out = np.zeros(s1.shape)
    both = (s1 > 0.0) & (s2 > 0.0)
    only1 = (s1 > 0.0) & (s2 <= 0.0)
    only2 = (s2 > 0.0) & (s1 <= 0.0)
    out[only1] = black_scholes_call(s1[only1], k, t, sg1, r, carry=b1)
    out[only2] = black_scholes_call(s2[only2], k, t, sg2, r, carry=b2)

    if np.any(both):
        x1 = s1[both]
        x2 = s2[both]
        d = (np.log(x1 / x2) + (b1 - b2 + 0.5 * sigma * sigma) * t) / srt
        y1 = (np.log(x1 / k) + (b1 + 0.5 * sg1 * sg1) * t) / (sg1 * math.sqrt(t))
        y2 = (np.log(x2 / k) + (b2 + 0.5 * sg2 * sg2) * t) / (sg2 * math.sqrt(t))
        term1 = x1 * math.exp((b1 - r) * t) * bivariate_cdf(y1, d, rho1)
        term2 = x2 * math.exp((b2 - r) * t) * bivariate_cdf(
            y2, -d + srt, rho2
        )
        term3 = k * math.exp(-r * t) * (
            1.0
            - bivariate_cdf(
                -y1 + sg1 * math.sqrt(t), -y2 + sg2 * math.sqrt(t), rho
            )
        )
        out[both] = term1 + term2 - term3
    return float(out) if out.ndim == 0 else out


def analytic_surface(market: MarketParams, grid) -> "np.ndarray":
    """Call-on-max prices at every grid node, (N+2, N+2)."""
    xn, yn = grid.node_mesh()
    inputs = AnalyticInputs.from_market(market, 0.0, 0.0)
    return analytic_price(inputs, xn, yn)


def mc_price(
    inputs: AnalyticInputs,
    payoff: str,
    paths: int,
    seed: int,
    market: MarketParams | None = None,
    block_size: int = 1_000_000,
):
    """Monte Carlo price under correlated geometric Brownian terminal laws.

    Returns (price, standard_error); deterministic for a fixed seed, with
    per-block substreams spawned from it so the block size does not change
    the law of the estimate.
    """
    if paths < 10_000:
        raise ValueError("need at least 1e4 paths for a meaningful estimate")
    t = inputs.maturity
    b1, b2 = inputs.carry1, inputs.carry2
    market = market or MarketParams(
        sigma1=inputs.sigma1,
        sigma2=inputs.sigma2,
        rho=inputs.rho,
        r=inputs.r,
        strike=inputs.strike,
        maturity=t,
    )
    drift1 = (b1 - 0.5 * inputs.sigma1**2) * t
    drift2 = (b2 - 0.5 * inputs.sigma2**2) * t
    vol1 = inputs.sigma1 * math.sqrt(t)
    vol2 = inputs.sigma2 * math.sqrt(t)
    cross = math.sqrt(max(0.0, 1.0 - inputs.rho**2))
    discount = math.exp(-inputs.r * t)

    seeds = np.random.SeedSequence(seed).spawn(-(-paths // block_size))
    total = 0.0
    total_sq = 0.0
    done = 0
    for ss in seeds:
        n_block = min(block_size, paths - done)
        rng = np.random.default_rng(ss)
        z1 = rng.standard_normal(n_block)
        z2 = inputs.rho * z1 + cross * rng.standard_normal(n_block)
        st1 = inputs.s1 * np.exp(drift1 + vol1 * z1)
        st2 = inputs.s2 * np.exp(drift2 + vol2 * z2)
        vals = discount * payoff_value(payoff, market, st1, st2)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        done += n_block
    mean = total / paths
    var = max(0.0, total_sq / paths - mean * mean)
    stderr = math.sqrt(var / paths)
    return mean, stderr
