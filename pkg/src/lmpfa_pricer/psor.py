"""Projected SOR solver for the early-exercise complementarity problem.

An independent route to the American price: each theta-Euler step solves
the linear complementarity problem

    B v >= rhs,   v >= payoff,   (B v - rhs) . (v - payoff) = 0

with B = I - theta dtau A, by successive over-relaxation projected onto the
constraint.  This shares no code with the penalty Newton path and serves as
its oracle in tests.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp

from .assembly import Scheme, assemble_operator
from .grid import Grid2D
from .model import PriceSurface, ProblemSpec, payoff_surface
from .timestepper import SolverSettings, TimeGrid


class PSORError(RuntimeError):
    pass


def solve_lcp(
    b_mat: sp.csr_matrix,
    rhs: np.ndarray,
    constraint: np.ndarray,
    start: np.ndarray,
    omega: float = 1.3,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> np.ndarray:
    """Projected SOR for B v >= rhs, v >= constraint, complementarity.

    Converges for the M-matrix-like systems produced by the implicit steps
    of this package (diagonally dominant after the I - theta dtau A shift).
    """
    b_mat = b_mat.tocsr()
    n = rhs.size
    indptr, indices, data = b_mat.indptr, b_mat.indices, b_mat.data
    diag = b_mat.diagonal()
    if np.any(diag == 0.0):
        raise PSORError("zero diagonal entry; PSOR undefined")
    v = np.maximum(start.copy(), constraint)
    for sweep in range(max_iter):
        delta = 0.0
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    s += data[k] * v[j]
            gs = (rhs[i] - s) / diag[i]
            new = max(constraint[i], v[i] + omega * (gs - v[i]))
            delta = max(delta, abs(new - v[i]))
            v[i] = new
        if delta <= tol:
            return v
    raise PSORError(f"PSOR did not converge in {max_iter} sweeps (last delta {delta:.3e})")


def solve_american_lcp(
    spec: ProblemSpec,
    scheme: Scheme,
    grid: Grid2D,
    time_grid: TimeGrid,
    settings: Optional[SolverSettings] = None,
    omega: float = 1.3,
    tol: float = 1e-10,
) -> PriceSurface:
    """American price by PSOR time marching (no penalty term anywhere)."""
    settings = settings or SolverSettings()
    theta = settings.theta
    op = assemble_operator(scheme, grid, spec)
    a_mat = op.matrix()
    payoff_vec = payoff_surface(spec, grid).interior_vector()
    dtau = time_grid.dtau
    ident = sp.identity(payoff_vec.size, format="csr")
    b_mat = (ident - theta * dtau * a_mat).tocsr()

    v = payoff_vec.copy()
    f_prev = op.boundary_vector(spec.boundary_node_values(grid, 0.0))
    for m in range(time_grid.steps):
        f_next = op.boundary_vector(
            spec.boundary_node_values(grid, time_grid.level(m + 1))
        )
        rhs = v + dtau * ((1.0 - theta) * (a_mat @ v + f_prev) + theta * f_next)
        v = solve_lcp(b_mat, rhs, payoff_vec, v, omega=omega, tol=tol)
        f_prev = f_next

    boundary = spec.boundary_node_values(grid, time_grid.maturity)
    return PriceSurface.from_interior_vector(
        v, grid, time_grid.maturity, spec.payoff, boundary=boundary
    )
