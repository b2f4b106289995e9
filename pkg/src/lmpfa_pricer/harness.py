"""Error studies: reference surfaces, relative L2 errors, table production.

``run_table`` prices every (grid, scheme) cell of a study and measures the
discrete relative L2 error against a configured reference: the analytic
call-on-max surface, a stored surface file, or a self-refined run (fitted
L-MPFA + 2nd-order upwind on a finer grid and time step, bilinearly
interpolated onto the coarse nodes when these do not coincide).

Runs are deterministic for a fixed config: identical configs produce
byte-identical CSV output.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .assembly import Scheme, assemble_operator, dump_matrix
from .grid import Grid2D, build_uniform_grid
from .model import (
    AMERICAN,
    CALL_ON_MAX,
    EUROPEAN,
    MarketParams,
    PenaltyParams,
    PriceSurface,
    ProblemSpec,
)
from .reference import analytic_surface
from .timestepper import SolverError, SolverSettings, TimeGrid, solve


def l2_relative_error(numeric: PriceSurface, reference: PriceSurface, grid: Grid2D) -> float:
    """Measure-weighted relative L2 distance over the interior cells.

    err = sqrt(sum meas(C_ij) (V_ij - V_ij^ref)^2)
        / sqrt(sum meas(C_ij) (V_ij^ref)^2),   i, j = 1..N.
    """
    if numeric.values.shape != reference.values.shape:
        raise ValueError("surfaces live on different grids")
    meas = grid.interior_measures()
    diff = numeric.interior - reference.interior
    denom = math.sqrt(float(np.sum(meas * reference.interior**2)))
    if denom == 0.0:
        raise ZeroDivisionError("reference surface vanishes on the interior")
    return math.sqrt(float(np.sum(meas * diff**2))) / denom


# --------------------------------------------------------------------------
# Surface files
# --------------------------------------------------------------------------

def dump_surface(surface: PriceSurface, path):
    """Write a surface file; values round-trip exactly through 17 digits."""
    grid = surface.grid
    n = grid.n
    with open(path, "w") as fh:
        fh.write(
            f"# lmpfa-surface N={n} xmax={grid.x.x_max:.17g} "
            f"ymax={grid.y.x_max:.17g} tau={surface.tau:.17g} payoff={surface.payoff}\n"
        )
        for i in range(n + 2):
            fh.write(" ".join(f"{v:.17g}" for v in surface.values[i]) + "\n")


def load_surface(path) -> PriceSurface:
    """Read a surface file back; validates the header and the value grid."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# lmpfa-surface "):
            raise ValueError(f"{path}: not a surface file")
        meta = dict(part.split("=", 1) for part in header[2:].split()[1:])
        n = int(meta["N"])
        xmax = float(meta["xmax"])
        ymax = float(meta["ymax"])
        tau = float(meta["tau"])
        payoff = meta["payoff"]
        values = np.loadtxt(fh, ndmin=2)
    if values.shape != (n + 2, n + 2):
        raise ValueError(
            f"{path}: expected {(n + 2, n + 2)} values, found {values.shape}"
        )
    grid = build_uniform_grid(n, xmax, ymax)
    return PriceSurface(values=values, grid=grid, tau=tau, payoff=payoff)


def interpolate_surface(surface: PriceSurface, grid: Grid2D) -> PriceSurface:
    """Surface resampled onto another grid of the same extents (bilinear).

    Nodes that coincide (nested grids) are reproduced exactly.
    """
    sg = surface.grid
    if not (
        math.isclose(sg.x.x_max, grid.x.x_max) and math.isclose(sg.y.x_max, grid.y.x_max)
    ):
        raise ValueError("grid extents do not match the stored surface")
    if sg.n == grid.n and np.allclose(sg.x.nodes, grid.x.nodes):
        return PriceSurface(
            values=surface.values.copy(), grid=grid, tau=surface.tau, payoff=surface.payoff
        )
    interp = RegularGridInterpolator(
        (sg.x.nodes, sg.y.nodes), surface.values, method="linear"
    )
    xn, yn = grid.node_mesh()
    pts = np.stack([xn.ravel(), yn.ravel()], axis=-1)
    values = interp(pts).reshape(xn.shape)
    return PriceSurface(values=values, grid=grid, tau=surface.tau, payoff=surface.payoff)


# --------------------------------------------------------------------------
# Study configuration and execution
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceMode:
    """Reference selector: analytic | stored:<path> | self:<Nref>,<Mref>."""

    kind: str
    path: Optional[str] = None
    n_ref: Optional[int] = None
    m_ref: Optional[int] = None

    @classmethod
    def parse(cls, text: str) -> "ReferenceMode":
        if text == "analytic":
            return cls(kind="analytic")
        if text.startswith("stored:"):
            return cls(kind="stored", path=text.split(":", 1)[1])
        if text.startswith("self:"):
            body = text.split(":", 1)[1]
            n_ref, m_ref = (int(p) for p in body.split(","))
            return cls(kind="self", n_ref=n_ref, m_ref=m_ref)
        raise ValueError(f"unknown reference mode {text!r}")

    def describe(self) -> str:
        if self.kind == "analytic":
            return "analytic"
        if self.kind == "stored":
            return f"stored:{self.path}"
        return f"self:{self.n_ref},{self.m_ref}"


@dataclass(frozen=True)
class RunConfig:
    """One study: problem, schemes, grid/step lists, reference, outputs."""

    spec: ProblemSpec
    schemes: Tuple[Scheme, ...]
    grid_sizes: Tuple[int, ...]
    steps: int = 64
    theta: float = 0.5
    x_max: float = 300.0
    y_max: float = 300.0
    reference: ReferenceMode = ReferenceMode(kind="analytic")
    reference_scheme: Scheme = Scheme.FITTED_LMPFA_UP2
    out_dir: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if not self.grid_sizes:
            raise ValueError("grid size list must be nonempty")

    def settings(self) -> SolverSettings:
        return SolverSettings(theta=self.theta)


@dataclass
class ErrorTable:
    """Relative L2 errors keyed by grid size and scheme; None marks failure."""

    grid_sizes: List[int]
    schemes: List[Scheme]
    entries: Dict[Tuple[int, Scheme], Optional[float]] = field(default_factory=dict)

    def get(self, n: int, scheme: Scheme) -> Optional[float]:
        return self.entries[(n, scheme)]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("grid," + ",".join(s.value for s in self.schemes) + "\n")
        for n in self.grid_sizes:
            cells = []
            for s in self.schemes:
                e = self.entries[(n, s)]
                cells.append("FAILED" if e is None else f"{e:.6f}")
            out.write(f"{n + 1}x{n + 1}," + ",".join(cells) + "\n")
        return out.getvalue()


def _reference_surface(config: RunConfig, grid: Grid2D) -> PriceSurface:
    mode = config.reference
    if mode.kind == "analytic":
        values = analytic_surface(config.spec.market, grid)
        return PriceSurface(
            values=values, grid=grid, tau=config.spec.market.maturity, payoff=CALL_ON_MAX
        )
    if mode.kind == "stored":
        return interpolate_surface(load_surface(mode.path), grid)
    if mode.kind == "self":
        fine = build_uniform_grid(mode.n_ref, config.x_max, config.y_max)
        surface = solve(
            config.spec,
            config.reference_scheme,
            fine,
            TimeGrid(config.spec.market.maturity, mode.m_ref),
            config.settings(),
        )
        return interpolate_surface(surface, grid)
    raise ValueError(f"unknown reference mode {mode.kind!r}")


def run_table(config: RunConfig, verbose: bool = False) -> ErrorTable:
    """Solve every (grid, scheme) cell and tabulate errors vs the reference.

    Solve failures are recorded as missing entries and the run continues.
    """
    table = ErrorTable(grid_sizes=list(config.grid_sizes), schemes=list(config.schemes))
    fine_reference: Optional[PriceSurface] = None
    if config.reference.kind == "self":
        # Solve the fine reference once, then resample per grid.
        fine = build_uniform_grid(config.reference.n_ref, config.x_max, config.y_max)
        fine_reference = solve(
            config.spec,
            config.reference_scheme,
            fine,
            TimeGrid(config.spec.market.maturity, config.reference.m_ref),
            config.settings(),
        )

    for n in config.grid_sizes:
        grid = build_uniform_grid(n, config.x_max, config.y_max)
        if fine_reference is not None:
            reference = interpolate_surface(fine_reference, grid)
        else:
            reference = _reference_surface(config, grid)
        time_grid = TimeGrid(config.spec.market.maturity, config.steps)
        for scheme in config.schemes:
            try:
                operator = assemble_operator(scheme, grid, config.spec)
                surface = solve(
                    config.spec, scheme, grid, time_grid, config.settings(),
                    operator=operator,
                )
                err = l2_relative_error(surface, reference, grid)
            except SolverError:
                table.entries[(n, scheme)] = None
                continue
            table.entries[(n, scheme)] = err
            if verbose:
                print(f"  {n + 1}x{n + 1}  {scheme.value}: {err:.6f}")
    return table


def run_manifest(config: RunConfig) -> dict:
    """Every config value and default in effect, for auditable reproduction."""
    spec = config.spec
    return {
        "option": spec.option_style,
        "payoff": spec.payoff,
        "market": {
            "sigma1": spec.market.sigma1,
            "sigma2": spec.market.sigma2,
            "rho": spec.market.rho,
            "r": spec.market.r,
            "strike": spec.market.strike,
            "maturity": spec.market.maturity,
            "alpha1": spec.market.alpha1,
            "alpha2": spec.market.alpha2,
        },
        "penalty": {
            "beta": spec.penalty.beta,
            "k": spec.penalty.k,
            "epsilon": spec.penalty.epsilon,
        },
        "domain": {"x_max": config.x_max, "y_max": config.y_max},
        "schemes": [s.value for s in config.schemes],
        "grids": [f"{n + 1}x{n + 1}" for n in config.grid_sizes],
        "interior_unknowns": list(config.grid_sizes),
        "steps": config.steps,
        "theta": config.theta,
        "reference": config.reference.describe(),
        "reference_scheme": config.reference_scheme.value,
        "seed": config.seed,
        "boundary_consistent": spec.consistent_data,
    }


def write_outputs(config: RunConfig, table: ErrorTable):
    """Write errors.csv and manifest.json into the configured directory."""
    if config.out_dir is None:
        raise ValueError("config carries no output directory")
    os.makedirs(config.out_dir, exist_ok=True)
    csv_path = os.path.join(config.out_dir, "errors.csv")
    with open(csv_path, "w") as fh:
        fh.write(table.to_csv())
    manifest = run_manifest(config)
    with open(os.path.join(config.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path
