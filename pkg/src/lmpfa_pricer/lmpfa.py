"""Transmissibilities of the MPFA L-method on logically rectangular grids.

Per interaction volume, flux continuity is imposed on two triangles:
T1 = x1 x2 x3 carries the half-edges 1 (lower vertical) and 2 (right
horizontal), T2 = x1 x3 x4 the half-edges 3 (upper vertical) and 4 (left
horizontal).  On each triangle the solution is piecewise linear on three
sub-triangles (one per control volume touched); the auxiliary value at the
interaction-volume centre is eliminated through the base cell's linear
function, two edge-midpoint values remain as unknowns, and the two flux
continuity equations close the local system

    A u = B w,      flux = C u + D w,

so the half-edge fluxes become R w with R = C A^-1 B + D.  The local 2x2
systems are derived mechanically from the continuity equations rather than
transcribed, and validated by linear exactness.

All flux rows are oriented along +x (vertical half-edges) and +y
(horizontal half-edges); assembly applies the outward-normal signs.

The functions are pure; every array argument may carry leading batch
dimensions, so a whole grid of interaction volumes is processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid2D, InteractionVolumeGeometry
from .model import CellTensor

#: Determinant guard for the closed-form 2x2 inverse, relative to |A|^2.
DET_GUARD = 1e-14

#: Condition-number threshold above which a local system is flagged.
COND_FLAG = 1e12

ROTATION = np.array([[0.0, 1.0], [-1.0, 0.0]])


class SingularLocalSystemError(RuntimeError):
    """A local flux-continuity system is numerically singular."""


def _rot(v: np.ndarray) -> np.ndarray:
    """Rotation by -pi/2: (vx, vy) -> (vy, -vx).  Preserves length."""
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def gradient_of_linear(corners, values) -> np.ndarray:
    """Gradient of the linear interpolant on a triangle.

    corners: (..., 3, 2), values: (..., 3).  Exact for affine fields; raises
    on collinear corners (vanishing signed doubled area).
    """
    corners = np.asarray(corners, dtype=float)
    values = np.asarray(values, dtype=float)
    g = _gradient_map(corners[..., 0, :], corners[..., 1, :], corners[..., 2, :])
    return np.einsum("...ik,...k->...i", g, values)


def _gradient_map(q1, q2, q3) -> np.ndarray:
    """(..., 2, 3) map from triangle vertex values to the gradient.

    With a = q2 - q1, c = q3 - q1 and T = a x c (signed doubled area):

        grad g = ( R c (g2 - g1) - R a (g3 - g1) ) / T

    where R is the -pi/2 rotation, so both normals keep their edge's length.
    """
    a = q2 - q1
    c = q3 - q1
    t = a[..., 0] * c[..., 1] - a[..., 1] * c[..., 0]
    if np.any(np.abs(t) == 0.0):
        raise SingularLocalSystemError("collinear triangle corners")
    col2 = _rot(c) / t[..., None]
    col3 = -_rot(a) / t[..., None]
    g = np.empty(np.broadcast_shapes(col2.shape, col3.shape)[:-1] + (2, 3))
    g[..., 1] = col2
    g[..., 2] = col3
    g[..., 0] = -(col2 + col3)
    return g


def triangle_signed_area2(q1, q2, q3):
    """Signed doubled area a x c used as the local scaling T."""
    a = np.asarray(q2, dtype=float) - np.asarray(q1, dtype=float)
    c = np.asarray(q3, dtype=float) - np.asarray(q1, dtype=float)
    return a[..., 0] * c[..., 1] - a[..., 1] * c[..., 0]


def _nMG(normal, tensor, gmap) -> np.ndarray:
    """Row functional n^T M * (gradient map): (..., k)."""
    nm = np.einsum("...i,...ij->...j", normal, tensor)
    return np.einsum("...j,...jk->...k", nm, gmap)


@dataclass(frozen=True)
class LocalTriangleSystem:
    """Assembled local system of one triangle (T1 or T2).

    Continuity side A u = B w and flux side f = C u + D w over the unknowns
    u (two edge-midpoint values) and knowns w (three corner cell values in
    the order: cell across the first half-edge, base cell, cell across the
    second half-edge).  ``areas2`` holds the signed doubled areas of the
    three sub-triangles; ``condition`` is the 2-norm condition number of A,
    flagged when above COND_FLAG.
    """

    a: np.ndarray  # (2, 2)
    b: np.ndarray  # (2, 3)
    c: np.ndarray  # (2, 2)
    d: np.ndarray  # (2, 3)
    areas2: np.ndarray  # (3,)

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.a))

    @property
    def flagged(self) -> bool:
        return self.condition > COND_FLAG

    def flux_map(self) -> np.ndarray:
        """(2, 3) map from corner values to the two half-edge fluxes."""
        u = _solve_2x2(self.a[None], self.b[None])[0]
        return self.c @ u + self.d


def _solve_2x2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched closed-form solve of a (..., 2, 2) against (..., 2, k).

    Guarded by |det| > DET_GUARD * |A|_F^2; failure raises rather than
    regularising, so degenerate geometry cannot silently corrupt results.
    Identically zero local systems (vanishing tensors) yield a zero
    solution: zero diffusion carries zero flux.
    """
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    norm2 = np.sum(a * a, axis=(-2, -1))
    zero = norm2 == 0.0
    bad = (np.abs(det) <= DET_GUARD * norm2) & ~zero
    if np.any(bad):
        idx = np.argwhere(bad)
        raise SingularLocalSystemError(
            f"singular local flux system at batch index {tuple(idx[0])}"
        )
    inv = np.empty_like(a)
    inv[..., 0, 0] = a[..., 1, 1]
    inv[..., 1, 1] = a[..., 0, 0]
    inv[..., 0, 1] = -a[..., 0, 1]
    inv[..., 1, 0] = -a[..., 1, 0]
    safe_det = np.where(zero, 1.0, det)
    inv /= safe_det[..., None, None]
    out = inv @ b
    if np.any(zero):
        out = np.where(zero[..., None, None], 0.0, out)
    return out


def _l_triangle_system(
    e_a, p_base, e_b, m_base, p_a, m_a, p_b, m_b, p5, n_a, n_b
):
    """Local system pieces of one L-triangle (batched).

    The base sub-triangle (e_a, p_base, e_b) lives in the base cell; its
    linear function supplies the value at the centre p5.  The half-edge
    from e_a to p5 (normal n_a) separates the base cell from cell a, whose
    sub-triangle is (p_a, e_a, p5); symmetrically for b with (p5, e_b, p_b).

    Returns (A, B, C, D, areas2) with unknowns u = (v_a, v_b) at the edge
    midpoints and knowns w = (V_a, V_base, V_b).
    """
    g_base = _gradient_map(e_a, p_base, e_b)      # over (v_a, V_base, v_b)
    g_a = _gradient_map(p_a, e_a, p5)             # over (V_a, v_a, v5)
    g_b = _gradient_map(p5, e_b, p_b)             # over (v5, v_b, V_b)

    batch = g_base.shape[:-2]
    # Coordinates z = (v_a, v_b | V_a, V_base, V_b).
    grad_base = np.zeros(batch + (2, 5))
    grad_base[..., 0] = g_base[..., 0]
    grad_base[..., 3] = g_base[..., 1]
    grad_base[..., 1] = g_base[..., 2]

    # Value at the centre from the base cell's linear function.
    dp = p5 - p_base
    p5_of_tri = np.einsum("...i,...ik->...k", dp, g_base)
    p5_z = np.zeros(batch + (5,))
    p5_z[..., 0] = p5_of_tri[..., 0]
    p5_z[..., 3] = 1.0 + p5_of_tri[..., 1]
    p5_z[..., 1] = p5_of_tri[..., 2]

    grad_a = np.zeros(batch + (2, 5))
    grad_a[..., 2] = g_a[..., 0]
    grad_a[..., 0] = g_a[..., 1]
    grad_a += g_a[..., 2:3] * p5_z[..., None, :]

    grad_b = np.zeros(batch + (2, 5))
    grad_b[..., 1] = g_b[..., 1]
    grad_b[..., 4] = g_b[..., 2]
    grad_b += g_b[..., 0:1] * p5_z[..., None, :]

    flux_a_in = _nMG(n_a, m_base, grad_base)
    flux_b_in = _nMG(n_b, m_base, grad_base)
    cont = np.stack(
        [flux_a_in - _nMG(n_a, m_a, grad_a), flux_b_in - _nMG(n_b, m_b, grad_b)],
        axis=-2,
    )
    flux = np.stack([flux_a_in, flux_b_in], axis=-2)

    a_mat = cont[..., :2]
    b_mat = -cont[..., 2:]
    c_mat = flux[..., :2]
    d_mat = flux[..., 2:]
    areas2 = np.stack(
        [
            triangle_signed_area2(p_a, e_a, p5),
            triangle_signed_area2(e_a, p_base, e_b),
            triangle_signed_area2(p5, e_b, p_b),
        ],
        axis=-1,
    )
    return a_mat, b_mat, c_mat, d_mat, areas2


def _geometry_pieces(geom: InteractionVolumeGeometry):
    p1, p2, p3, p4 = (geom.corners[k] for k in range(4))
    e1, e2, e3, e4 = (geom.edge_midpoints[k] for k in range(4))
    n1, n2, n3, n4 = (geom.normals[k] for k in range(4))
    return p1, p2, p3, p4, e1, e2, e3, e4, geom.center, n1, n2, n3, n4


def triangle_local_system(
    geom: InteractionVolumeGeometry, tensors, triangle: int
) -> LocalTriangleSystem:
    """Local system of triangle 1 (half-edges 1, 2) or 2 (half-edges 3, 4).

    ``tensors`` holds the four corner-cell CellTensors in corner order.
    """
    p1, p2, p3, p4, e1, e2, e3, e4, p5, n1, n2, n3, n4 = _geometry_pieces(geom)
    m = [np.asarray(t.as_matrix() if isinstance(t, CellTensor) else t, dtype=float)
         for t in tensors]
    if triangle == 1:
        args = (e1, p2, e2, m[1], p1, m[0], p3, m[2], p5, n1, n2)
    elif triangle == 2:
        args = (e4, p4, e3, m[3], p1, m[0], p3, m[2], p5, n4, n3)
    else:
        raise ValueError("triangle must be 1 or 2")
    a, b, c, d, areas2 = _l_triangle_system(*args)
    return LocalTriangleSystem(a=a, b=b, c=c, d=d, areas2=areas2)


@dataclass(frozen=True)
class Transmissibility:
    """4x4 map from corner cell values to half-edge fluxes.

    Row p is the flux through half-edge p; columns follow the corner order
    (V_{i-1,j-1}, V_{i,j-1}, V_{ij}, V_{i-1,j}).  Rows 1-2 never touch the
    fourth corner and rows 3-4 never touch the second; constant corner data
    produce zero flux.
    """

    matrix: np.ndarray

    def row_sum_defect(self) -> float:
        """Max |row sum| scaled by the row norm (zero for constants)."""
        sums = np.abs(self.matrix.sum(axis=1))
        norms = np.maximum(np.linalg.norm(self.matrix, axis=1), 1e-300)
        return float(np.max(sums / norms))


def transmissibility(geom: InteractionVolumeGeometry, tensors) -> Transmissibility:
    """Transmissibility of one interaction volume from its four cell tensors."""
    sys1 = triangle_local_system(geom, tensors, 1)
    sys2 = triangle_local_system(geom, tensors, 2)
    r = sys1.flux_map()
    s = sys2.flux_map()  # rows (f4, f3) over (V_c1, V_c4, V_c3)
    t = np.zeros((4, 4))
    t[0, :3] = r[0]
    t[1, :3] = r[1]
    t[2, [0, 3, 2]] = s[1]
    t[3, [0, 3, 2]] = s[0]
    return Transmissibility(matrix=t)


def transmissibility_field(grid: Grid2D, tensor_field: np.ndarray) -> np.ndarray:
    """Transmissibilities of all interaction volumes, shape (N+1, N+1, 4, 4).

    ``tensor_field`` is the (N+2, N+2, 2, 2) averaged-tensor array; entry
    [a-1, b-1] of the result is T of R_{a,b}, a, b = 1..N+1.  Pure and
    deterministic; volumes are independent of each other.
    """
    n = grid.n
    xn, yn = grid.x.nodes, grid.y.nodes
    xf, yf = grid.x.faces, grid.y.faces
    ii, jj = np.meshgrid(np.arange(1, n + 2), np.arange(1, n + 2), indexing="ij")

    def pt(xs, ys):
        return np.stack([xs, ys], axis=-1)

    p1 = pt(xn[ii - 1], yn[jj - 1])
    p2 = pt(xn[ii], yn[jj - 1])
    p3 = pt(xn[ii], yn[jj])
    p4 = pt(xn[ii - 1], yn[jj])
    p5 = pt(xf[ii], yf[jj])
    e1 = pt(xf[ii], yn[jj - 1])
    e2 = pt(xn[ii], yf[jj])
    e3 = pt(xf[ii], yn[jj])
    e4 = pt(xn[ii - 1], yf[jj])
    zeros = np.zeros_like(xf[ii])
    n1 = pt(yf[jj] - yn[jj - 1], zeros)
    n2 = pt(zeros, xn[ii] - xf[ii])
    n3 = pt(yn[jj] - yf[jj], zeros)
    n4 = pt(zeros, xf[ii] - xn[ii - 1])

    m1 = tensor_field[ii - 1, jj - 1]
    m2 = tensor_field[ii, jj - 1]
    m3 = tensor_field[ii, jj]
    m4 = tensor_field[ii - 1, jj]

    a1, b1, c1, d1, _ = _l_triangle_system(e1, p2, e2, m2, p1, m1, p3, m3, p5, n1, n2)
    a2, b2, c2, d2, _ = _l_triangle_system(e4, p4, e3, m4, p1, m1, p3, m3, p5, n4, n3)
    r = c1 @ _solve_2x2(a1, b1) + d1
    s = c2 @ _solve_2x2(a2, b2) + d2

    t = np.zeros((n + 1, n + 1, 4, 4))
    t[..., 0, :3] = r[..., 0, :]
    t[..., 1, :3] = r[..., 1, :]
    t[..., 2, 0] = s[..., 1, 0]
    t[..., 2, 3] = s[..., 1, 1]
    t[..., 2, 2] = s[..., 1, 2]
    t[..., 3, 0] = s[..., 0, 0]
    t[..., 3, 3] = s[..., 0, 1]
    t[..., 3, 2] = s[..., 0, 2]
    return t
