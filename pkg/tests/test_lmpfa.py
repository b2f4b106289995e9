"""L-method transmissibilities: gradients, local systems, exactness, locality.

The brute-force oracle rebuilds the flux-continuity construction from
scratch: linear interpolation on each sub-triangle through a 3x3 Vandermonde
solve, the two continuity equations assembled symbolically in the two
edge-midpoint unknowns, solved with numpy.  It shares no code with the
package's gradient-map path.
"""

import numpy as np
import pytest

from lmpfa_pricer.grid import build_grid, build_uniform_grid, interaction_volume
from lmpfa_pricer.lmpfa import (
    SingularLocalSystemError,
    gradient_of_linear,
    transmissibility,
    transmissibility_field,
    triangle_local_system,
)
from lmpfa_pricer.model import CellTensor, MarketParams, averaged_tensor_field

RNG = np.random.default_rng(20240817)


def tri_interp_gradient(corners, values):
    """Oracle gradient: solve the 3x3 affine interpolation system."""
    a = np.column_stack([np.ones(3), corners])
    coef = np.linalg.solve(a, values)
    return coef[1:]


def oracle_transmissibility(geom, tensors):
    """Brute-force 4x4 transmissibility via symbolic unknown propagation.

    Works in the 6-vector z = (u1, u2, u3, u4, w1, w2, w3, w4) where u_p is
    the value at edge midpoint p and w_c the corner values; every linear
    functional is built by interpolating rows and eliminating u with the
    four continuity equations (two per triangle).
    """
    mats = [t.as_matrix() if isinstance(t, CellTensor) else np.asarray(t) for t in tensors]
    p = geom.corners
    e = geom.edge_midpoints
    c = geom.center
    n = geom.normals

    def grad_rows(tri_pts, tri_idx):
        # returns 2x8 gradient map over z for a sub-triangle whose vertex
        # values are linear combinations of z given by tri_idx rows (each a
        # length-8 selector/affine row)
        a = np.column_stack([np.ones(3), tri_pts])
        inv = np.linalg.inv(a)
        rows = np.array(tri_idx)  # 3x8
        return inv[1:, :] @ rows

    def unit(k):
        z = np.zeros(8)
        z[k] = 1.0
        return z

    # value at centre from base-cell linear functions of each triangle
    def center_row(tri_pts, tri_idx):
        a = np.column_stack([np.ones(3), tri_pts])
        inv = np.linalg.inv(a)
        coef = inv @ np.array(tri_idx)
        return coef[0] + c[0] * coef[1] + c[1] * coef[2]

    # Triangle 1: base cell 2, sub-triangles in cells 1 and 3.
    base1_pts = np.array([e[0], p[1], e[1]])
    base1_idx = [unit(0), unit(5), unit(1)]
    c1_row = center_row(base1_pts, base1_idx)
    g_base1 = grad_rows(base1_pts, base1_idx)
    g_c1 = grad_rows(np.array([p[0], e[0], c]), [unit(4), unit(0), c1_row])
    g_c3 = grad_rows(np.array([c, e[1], p[2]]), [c1_row, unit(1), unit(6)])

    # Triangle 2: base cell 4, sub-triangles in cells 1 and 3.
    base2_pts = np.array([e[3], p[3], e[2]])
    base2_idx = [unit(3), unit(7), unit(2)]
    c2_row = center_row(base2_pts, base2_idx)
    g_base2 = grad_rows(base2_pts, base2_idx)
    g_c1b = grad_rows(np.array([p[0], e[3], c]), [unit(4), unit(3), c2_row])
    g_c3b = grad_rows(np.array([c, e[2], p[2]]), [c2_row, unit(2), unit(6)])

    def fl(normal, mat, g):
        return normal @ mat @ g

    cont = np.array(
        [
            fl(n[0], mats[1], g_base1) - fl(n[0], mats[0], g_c1),
            fl(n[1], mats[1], g_base1) - fl(n[1], mats[2], g_c3),
            fl(n[2], mats[3], g_base2) - fl(n[2], mats[2], g_c3b),
            fl(n[3], mats[3], g_base2) - fl(n[3], mats[0], g_c1b),
        ]
    )
    flux = np.array(
        [
            fl(n[0], mats[1], g_base1),
            fl(n[1], mats[1], g_base1),
            fl(n[2], mats[3], g_base2),
            fl(n[3], mats[3], g_base2),
        ]
    )
    u_of_w = np.linalg.solve(cont[:, :4], -cont[:, 4:])
    return flux[:, :4] @ u_of_w + flux[:, 4:]


def spd_tensor(rng):
    a, b = rng.uniform(0.3, 3.0, size=2)
    r = rng.uniform(-0.9, 0.9)
    m12 = r * np.sqrt(a * b)
    return CellTensor(a, m12, b)


def test_gradient_examples():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(gradient_of_linear(tri, np.array([0.0, 1.0, 0.0])), [1, 0])
    assert np.allclose(gradient_of_linear(tri, np.array([2.0, 2.0, 2.0])), [0, 0])
    tri2 = np.array([[1.0, 1.0], [4.0, 2.0], [2.0, 5.0]])
    vals = 3.0 * tri2[:, 0] - 2.0 * tri2[:, 1] + 7.0
    g = gradient_of_linear(tri2, vals)
    assert np.allclose(g, [3.0, -2.0], atol=1e-12)
    assert np.allclose(g, tri_interp_gradient(tri2, vals), atol=1e-12)


def test_gradient_rejects_collinear():
    tri = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(SingularLocalSystemError):
        gradient_of_linear(tri, np.array([0.0, 1.0, 2.0]))


def test_identity_tensor_two_point_fluxes():
    g = build_uniform_grid(4, 5.0, 5.0)
    geom = interaction_volume(g, 2, 2)
    ident = CellTensor(1.0, 0.0, 1.0)
    t = transmissibility(geom, [ident] * 4).matrix
    # flux between horizontally adjacent cells: (V_right - V_left) * len/dist
    # per half-edge of length 1/2 at unit distance
    assert np.allclose(t[0], [-0.5, 0.5, 0.0, 0.0], atol=1e-12)
    assert np.allclose(t[1], [0.0, -0.5, 0.5, 0.0], atol=1e-12)
    assert np.allclose(t[2], [0.0, 0.0, 0.5, -0.5], atol=1e-12)
    assert np.allclose(t[3], [-0.5, 0.0, 0.0, 0.5], atol=1e-12)
    # constant data carry no flux
    assert np.allclose(t @ np.ones(4), 0.0, atol=1e-14)


def test_local_system_matches_bruteforce_oracle():
    xs = np.array([0.0, 0.7, 1.9, 2.4, 3.9, 5.0])
    ys = np.array([0.0, 1.1, 1.6, 3.0, 4.2, 5.0])
    g = build_grid(xs, ys)
    for (i, j) in ((1, 1), (2, 3), (4, 2), (5, 5)):
        geom = interaction_volume(g, i, j)
        tensors = [spd_tensor(RNG) for _ in range(4)]
        t = transmissibility(geom, tensors).matrix
        oracle = oracle_transmissibility(geom, tensors)
        assert np.allclose(t, oracle, rtol=1e-10, atol=1e-12)


def test_diagonal_tensor_scaling_is_linear():
    g = build_uniform_grid(4, 4.0, 4.0)
    geom = interaction_volume(g, 2, 2)
    t1 = transmissibility(geom, [CellTensor(1.0, 0.0, 3.0)] * 4).matrix
    t2 = transmissibility(geom, [CellTensor(2.0, 0.0, 3.0)] * 4).matrix
    # x-direction half-edge fluxes (rows 1 and 3) scale linearly in m11
    assert np.allclose(t2[0], 2.0 * t1[0], atol=1e-12)
    assert np.allclose(t2[2], 2.0 * t1[2], atol=1e-12)


def test_row_sums_and_linear_exactness_randomised():
    """100 random affine fields over random geometry and SPD tensors."""
    xs = np.array([0.0, 0.9, 2.1, 2.8, 4.0, 5.5])
    g = build_grid(xs, np.array([0.0, 1.3, 2.0, 3.4, 4.1, 5.0]))
    for trial in range(100):
        i = int(RNG.integers(1, 6))
        j = int(RNG.integers(1, 6))
        geom = interaction_volume(g, i, j)
        ten = spd_tensor(RNG)
        t = transmissibility(geom, [ten] * 4)
        assert t.row_sum_defect() < 1e-12
        c0, cx, cy = RNG.normal(size=3)
        vals = c0 + cx * geom.corners[:, 0] + cy * geom.corners[:, 1]
        flux = t.matrix @ vals
        grad = np.array([cx, cy])
        exact = geom.normals @ (ten.as_matrix() @ grad)
        scale = np.max(np.abs(exact)) + 1e-12
        assert np.max(np.abs(flux - exact)) <= 1e-10 * max(scale, 1.0)


def test_affine_exact_flux_is_edge_integral():
    # for V(x, y) = x with the identity tensor the flux through each
    # half-edge equals the line integral of the unit normal component
    g = build_uniform_grid(3, 4.0, 4.0)
    geom = interaction_volume(g, 2, 2)
    t = transmissibility(geom, [CellTensor(1.0, 0.0, 1.0)] * 4).matrix
    flux = t @ geom.corners[:, 0]
    lengths = np.abs(geom.normals).sum(axis=1)
    expected = np.array([lengths[0], 0.0, lengths[2], 0.0])
    assert np.allclose(flux, expected, atol=1e-12)


def test_tpfa_reduction_on_diagonal_tensors():
    g = build_uniform_grid(5, 5.0, 5.0)  # unit cells
    geom = interaction_volume(g, 3, 3)
    a, b = 1.7, 0.4
    t = transmissibility(geom, [CellTensor(a, 0.0, b)] * 4).matrix
    # zero weight on the two corners not sharing each half-edge's face
    assert abs(t[0, 2]) < 1e-14 and abs(t[0, 3]) < 1e-14
    assert abs(t[1, 0]) < 1e-14 and abs(t[1, 3]) < 1e-14
    assert abs(t[2, 0]) < 1e-14 and abs(t[2, 1]) < 1e-14
    assert abs(t[3, 1]) < 1e-14 and abs(t[3, 2]) < 1e-14
    # classical two-point value m * (half-edge length) / (centre distance)
    assert abs(t[0, 1] - a * 0.5) <= 1e-10 * a
    assert abs(t[1, 2] - b * 0.5) <= 1e-10 * b


def test_locality_of_tensor_perturbations():
    g = build_uniform_grid(4, 4.0, 4.0)
    geom = interaction_volume(g, 2, 2)
    base = [spd_tensor(RNG) for _ in range(4)]
    t0 = transmissibility(geom, base).matrix
    bumped = list(base)
    bumped[1] = CellTensor(base[1].m11 * 2.0, base[1].m12, base[1].m22)
    t1 = transmissibility(geom, bumped).matrix
    # cell 2 only feeds triangle T1: rows 3, 4 are untouched
    assert np.allclose(t0[2:], t1[2:])
    assert not np.allclose(t0[:2], t1[:2])
    bumped = list(base)
    bumped[3] = CellTensor(base[3].m11, base[3].m12, base[3].m22 * 3.0)
    t2 = transmissibility(geom, bumped).matrix
    assert np.allclose(t0[:2], t2[:2])


def test_structural_zero_columns():
    # rows from triangle T1 never touch corner 4; rows from T2 never corner 2
    g = build_uniform_grid(4, 4.0, 4.0)
    for (i, j) in ((1, 1), (2, 3), (5, 5)):
        geom = interaction_volume(g, i, j)
        t = transmissibility(geom, [spd_tensor(RNG) for _ in range(4)]).matrix
        assert t[0, 3] == 0.0 and t[1, 3] == 0.0
        assert t[2, 1] == 0.0 and t[3, 1] == 0.0


def test_triangle_local_system_shapes_and_condition():
    g = build_uniform_grid(3, 3.0, 3.0)
    geom = interaction_volume(g, 2, 2)
    sys1 = triangle_local_system(geom, [CellTensor(1.0, 0.2, 1.0)] * 4, 1)
    assert sys1.a.shape == (2, 2) and sys1.b.shape == (2, 3)
    assert sys1.c.shape == (2, 2) and sys1.d.shape == (2, 3)
    assert np.all(sys1.areas2 != 0.0)
    assert not sys1.flagged
    with pytest.raises(ValueError):
        triangle_local_system(geom, [CellTensor(1.0, 0.0, 1.0)] * 4, 3)


def test_singular_system_raises_with_location():
    g = build_uniform_grid(3, 3.0, 3.0)
    geom = interaction_volume(g, 2, 2)
    # rank-one tensors aligned so the continuity system degenerates
    bad = CellTensor(0.0, 0.0, 1.0)
    with pytest.raises(SingularLocalSystemError):
        transmissibility(geom, [bad] * 4)


def test_zero_tensor_gives_zero_flux():
    g = build_uniform_grid(3, 3.0, 3.0)
    geom = interaction_volume(g, 2, 2)
    t = transmissibility(geom, [CellTensor(0.0, 0.0, 0.0)] * 4)
    assert np.all(t.matrix == 0.0)


def test_field_matches_per_volume_api():
    g = build_uniform_grid(4, 300.0, 300.0)
    m = MarketParams()
    field = averaged_tensor_field(m, g)
    tt = transmissibility_field(g, field)
    for (i, j) in ((1, 1), (3, 2), (5, 5)):
        geom = interaction_volume(g, i, j)
        cells = geom.cells
        tens = [field[ci, cj] for ci, cj in cells]
        t = transmissibility(geom, tens).matrix
        assert np.allclose(tt[i - 1, j - 1], t, rtol=1e-13, atol=1e-13)


def test_table_parameter_row_sums_on_fine_grid():
    g = build_uniform_grid(49, 300.0, 300.0)
    tt = transmissibility_field(g, averaged_tensor_field(MarketParams(), g))
    sums = np.abs(tt.sum(axis=-1))
    norms = np.maximum(np.linalg.norm(tt, axis=-1), 1e-300)
    assert float(np.max(sums / norms)) < 1e-12
