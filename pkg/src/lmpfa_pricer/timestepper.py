"""Theta-Euler time marching with a Newton solve of the penalty term.

Each step solves

    (V' - V)/dtau = theta (A V' + G(V') + F') + (1-theta) (A V + G(V) + F)

for V' = V^{m+1}, with G(V) = beta [max(V* - V, 0)]^(1/k) applied
componentwise (smoothed bracket max_eps(s) = (s + sqrt(s^2 + eps^2))/2 when
eps > 0).  beta = 0 short-circuits to a single linear solve per step with
the factorisation reused across steps; otherwise Newton iterates on the
residual with the penalty Jacobian folded into the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Scheme, StencilOperator, assemble_operator
from .grid import Grid2D
from .model import AMERICAN, PenaltyParams, PriceSurface, ProblemSpec, payoff_surface


class SolverError(RuntimeError):
    """Newton or linear-solver failure, carrying the offending step."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into M steps."""

    maturity: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if self.maturity <= 0.0:
            raise ValueError("maturity must be positive")

    @property
    def dtau(self) -> float:
        return self.maturity / self.steps

    def level(self, m: int) -> float:
        return m * self.dtau


@dataclass(frozen=True)
class SolverSettings:
    """Newton / linear-solver tolerances for one run.

    The linear solver is a sparse direct factorisation for moderate grids
    and BiCGStab with an ILU preconditioner above ``direct_limit`` unknowns
    per axis; both satisfy the same residual contract.
    """

    theta: float = 0.5
    newton_tol: float = 1e-9
    newton_max_iter: int = 50
    linear_tol: float = 1e-10
    linear_max_iter: int = 2000
    direct_limit: int = 128

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.newton_tol <= 0.0 or self.linear_tol <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass
class StepDiagnostics:
    """Per-step record: Newton iterations, residual history, constraint gap."""

    step: int
    newton_iters: int
    residual: float
    min_gap: float
    residual_history: List[float] = field(default_factory=list)

    def line(self) -> str:
        return f"{self.step}\t{self.newton_iters}\t{self.residual:.6e}\t{self.min_gap:.6e}"


def _smooth_pos(s: np.ndarray, eps: float) -> np.ndarray:
    if eps == 0.0:
        return np.maximum(s, 0.0)
    return 0.5 * (s + np.sqrt(s * s + eps * eps))


def _smooth_pos_deriv(s: np.ndarray, eps: float) -> np.ndarray:
    if eps == 0.0:
        return (s > 0.0).astype(float)
    return 0.5 * (1.0 + s / np.sqrt(s * s + eps * eps))


def penalty_term(surface: np.ndarray, payoff: np.ndarray, penalty: PenaltyParams) -> np.ndarray:
    """beta [max(V* - V, 0)]^(1/k), componentwise."""
    if penalty.beta == 0.0:
        return np.zeros_like(surface)
    s = _smooth_pos(payoff - surface, penalty.epsilon)
    return penalty.beta * s ** penalty.exponent


def penalty_jacobian_diag(
    surface: np.ndarray, payoff: np.ndarray, penalty: PenaltyParams
) -> np.ndarray:
    """d(penalty)/dV, a nonpositive diagonal.

    Requires 1/k >= 1 or a positive smoothing radius; below that the bracket
    is not Lipschitz at V = V* and Newton is ill-posed.
    """
    if penalty.beta == 0.0:
        return np.zeros_like(surface)
    p = penalty.exponent
    if p < 1.0 and penalty.epsilon == 0.0:
        raise ValueError(
            "penalty exponent below 1 needs a positive smoothing radius for Newton"
        )
    s = payoff - surface
    sm = _smooth_pos(s, penalty.epsilon)
    dsm = _smooth_pos_deriv(s, penalty.epsilon)
    if p == 1.0:
        return -penalty.beta * dsm
    return -penalty.beta * p * np.where(sm > 0.0, sm, 0.0) ** (p - 1.0) * dsm


class _LinearSolver:
    """One contract over direct and iterative sparse solves of (I - c A)."""

    def __init__(self, mat: sp.csr_matrix, settings: SolverSettings, n: int):
        self.settings = settings
        self.direct = n <= settings.direct_limit
        if self.direct:
            self.lu = spla.splu(mat.tocsc())
        else:
            self.mat = mat.tocsc()
            self.ilu = spla.spilu(self.mat, drop_tol=1e-6, fill_factor=20)

    def solve(self, rhs: np.ndarray, step: int) -> np.ndarray:
        if self.direct:
            return self.lu.solve(rhs)
        pre = spla.LinearOperator(self.mat.shape, self.ilu.solve)
        x, info = spla.bicgstab(
            self.mat,
            rhs,
            rtol=self.settings.linear_tol,
            atol=0.0,
            maxiter=self.settings.linear_max_iter,
            M=pre,
        )
        if info != 0:
            raise SolverError(f"linear solver breakdown at step {step} (info={info})")
        return x


def step(
    v_m: np.ndarray,
    a_mat: sp.csr_matrix,
    f_m: np.ndarray,
    f_mp1: np.ndarray,
    dtau: float,
    settings: SolverSettings,
    penalty: PenaltyParams,
    payoff: np.ndarray,
    step_index: int = 0,
    base_solver: Optional[_LinearSolver] = None,
) -> tuple[np.ndarray, StepDiagnostics]:
    """Advance one theta-Euler step; returns (V^{m+1}, diagnostics).

    ``base_solver`` may carry the factorisation of I - theta dtau A for
    reuse across beta = 0 steps.
    """
    if not np.all(np.isfinite(v_m)):
        raise SolverError(f"non-finite state entering step {step_index}")
    theta = settings.theta
    n_unknowns = v_m.size
    ident = sp.identity(n_unknowns, format="csr")

    g_m = penalty_term(v_m, payoff, penalty)
    rhs = v_m + dtau * (
        (1.0 - theta) * (a_mat @ v_m + g_m + f_m) + theta * f_mp1
    )

    if theta == 0.0:
        v_new = rhs
        diag = StepDiagnostics(step_index, 0, 0.0, float(np.min(v_new - payoff)))
        return v_new, diag

    if penalty.beta == 0.0:
        solver = base_solver or _LinearSolver(
            ident - theta * dtau * a_mat, settings, int(round(math.sqrt(n_unknowns)))
        )
        v_new = solver.solve(rhs, step_index)
        diag = StepDiagnostics(step_index, 0, 0.0, float(np.min(v_new - payoff)))
        return v_new, diag

    # Newton on Phi(v) = v - theta dtau (A v + G(v)) - rhs.
    v = v_m.copy()
    history: List[float] = []
    base = ident - theta * dtau * a_mat
    for it in range(settings.newton_max_iter):
        phi = v - theta * dtau * (a_mat @ v + penalty_term(v, payoff, penalty)) - rhs
        res = float(np.max(np.abs(phi)))
        history.append(res)
        if res <= settings.newton_tol * (1.0 + float(np.max(np.abs(v)))):
            diag = StepDiagnostics(
                step_index, it, res, float(np.min(v - payoff)), history
            )
            return v, diag
        jac_pen = penalty_jacobian_diag(v, payoff, penalty)
        jac = base - theta * dtau * sp.diags(jac_pen)
        solver = _LinearSolver(
            jac.tocsr(), settings, int(round(math.sqrt(n_unknowns)))
        )
        v = v - solver.solve(phi, step_index)
    raise SolverError(
        f"Newton failed to converge at step {step_index}: last residual {history[-1]:.3e}"
    )


def solve(
    spec: ProblemSpec,
    scheme: Scheme,
    grid: Grid2D,
    time_grid: TimeGrid,
    settings: Optional[SolverSettings] = None,
    diagnostics_stream=None,
    diagnostics: Optional[List[StepDiagnostics]] = None,
    operator: Optional[StencilOperator] = None,
) -> PriceSurface:
    """March from the payoff to tau = T; returns the final surface.

    ``diagnostics_stream`` receives one tab-separated line per step
    (step index, Newton iterations, final residual, min(V - payoff));
    ``diagnostics`` collects the full records when a list is passed.
    A pre-assembled ``operator`` may be passed to amortise assembly across
    runs on the same grid and scheme.
    """
    settings = settings or SolverSettings()
    op = operator if operator is not None else assemble_operator(scheme, grid, spec)
    a_mat = op.matrix()
    payoff_vec = payoff_surface(spec, grid).interior_vector()
    penalty = spec.penalty if spec.option_style == AMERICAN else PenaltyParams(beta=0.0)

    v = payoff_vec.copy()
    dtau = time_grid.dtau
    f_levels = [
        op.boundary_vector(spec.boundary_node_values(grid, time_grid.level(m)))
        for m in range(time_grid.steps + 1)
    ]

    base_solver = None
    if penalty.beta == 0.0 and settings.theta > 0.0:
        ident = sp.identity(v.size, format="csr")
        base_solver = _LinearSolver(
            ident - settings.theta * dtau * a_mat, settings, grid.n
        )

    for m in range(time_grid.steps):
        try:
            v, diag = step(
                v,
                a_mat,
                f_levels[m],
                f_levels[m + 1],
                dtau,
                settings,
                penalty,
                payoff_vec,
                step_index=m,
                base_solver=base_solver,
            )
        except SolverError as exc:
            raise SolverError(f"step {m}/{time_grid.steps}: {exc}") from exc
        if diagnostics is not None:
            diagnostics.append(diag)
        if diagnostics_stream is not None:
            diagnostics_stream.write(diag.line() + "\n")

    boundary = spec.boundary_node_values(grid, time_grid.maturity)
    return PriceSurface.from_interior_vector(
        v, grid, time_grid.maturity, spec.payoff, boundary=boundary
    )
