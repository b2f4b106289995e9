"""Grid construction: node/midpoint conventions, partitions, interaction volumes."""

import numpy as np
import pytest

from lmpfa_pricer.grid import build_grid, build_uniform_grid, interaction_volume


def test_uniform_grid_small_example():
    g = build_uniform_grid(2, 3.0, 3.0)
    assert np.allclose(g.x.nodes, [0.0, 1.0, 2.0, 3.0])
    # interior midpoints 0.5, 1.5, 2.5 with the boundary conventions outside
    assert np.allclose(g.x.faces, [0.0, 0.5, 1.5, 2.5, 3.0])
    assert g.x.widths[1] == 1.0 and g.x.widths[2] == 1.0
    # ghost conventions x_{-1/2} = 0 and x_{N+3/2} = x_max
    assert g.x.faces[0] == 0.0 and g.x.faces[-1] == 3.0


def test_partition_property():
    g = build_uniform_grid(7, 300.0, 250.0)
    total = np.outer(g.x.widths, g.y.widths).sum()
    assert abs(total - 300.0 * 250.0) <= 1e-12 * 300.0 * 250.0
    assert np.all(g.x.widths > 0.0) and np.all(g.y.widths > 0.0)
    assert abs(g.x.widths.sum() - 300.0) <= 1e-12 * 300.0


def test_midpoints_between_nodes():
    rng = np.random.default_rng(7)
    nodes = np.concatenate(([0.0], np.cumsum(rng.uniform(0.5, 2.0, 9))))
    g = build_grid(nodes, nodes)
    assert np.allclose(g.x.faces[1:-1], 0.5 * (nodes[:-1] + nodes[1:]))


def test_interaction_volumes_tile_domain():
    g = build_uniform_grid(5, 10.0, 10.0)
    total = 0.0
    for i in range(1, g.n + 2):
        for j in range(1, g.n + 2):
            geom = interaction_volume(g, i, j)
            dx = geom.corners[1, 0] - geom.corners[0, 0]
            dy = geom.corners[3, 1] - geom.corners[0, 1]
            total += dx * dy
    assert abs(total - 100.0) <= 1e-12 * 100.0


def test_half_edges_cover_each_interior_face_once():
    # The vertical control-volume face at x_{i-1/2} within [y_{j-1}, y_j]
    # splits into half-edges 1 and 3 of R_ij; summed over j they cover the
    # whole face exactly once.
    g = build_uniform_grid(4, 8.0, 8.0)
    for i in range(1, g.n + 2):
        length = 0.0
        for j in range(1, g.n + 2):
            geom = interaction_volume(g, i, j)
            length += geom.normals[0, 0] + geom.normals[2, 0]
        assert abs(length - 8.0) < 1e-12


def test_interaction_volume_geometry_example():
    g = build_uniform_grid(2, 3.0, 3.0)
    geom = interaction_volume(g, 2, 2)
    assert np.allclose(geom.corners, [[1, 1], [2, 1], [2, 2], [1, 2]])
    assert np.allclose(geom.center, [1.5, 1.5])
    # normals orthogonal to their half-edges: vertical half-edges (1, 3)
    # carry x-normals and the horizontal ones (2, 4) y-normals
    assert geom.normals[0, 1] == 0.0 and geom.normals[2, 1] == 0.0
    assert geom.normals[1, 0] == 0.0 and geom.normals[3, 0] == 0.0
    # each normal has the half-edge's length
    assert np.allclose(np.abs(geom.normals).sum(axis=1), 0.5)


def test_boundary_interaction_volume_uses_boundary_nodes():
    g = build_uniform_grid(2, 3.0, 3.0)
    geom = interaction_volume(g, 1, 1)
    assert np.allclose(geom.corners[0], [0.0, 0.0])
    # hand-constructed geometry for the 3-interval axis
    assert np.allclose(geom.center, [0.5, 0.5])
    assert np.allclose(geom.edge_midpoints[0], [0.5, 0.0])
    assert np.allclose(geom.edge_midpoints[3], [0.0, 0.5])


def test_rotation_preserves_length():
    from lmpfa_pricer.lmpfa import ROTATION, _rot

    assert np.allclose(ROTATION @ ROTATION, -np.eye(2))
    rng = np.random.default_rng(3)
    v = rng.normal(size=(20, 2))
    assert np.allclose(np.linalg.norm(_rot(v), axis=1), np.linalg.norm(v, axis=1))


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_uniform_grid(1, 1.0, 1.0)
    with pytest.raises(ValueError):
        build_uniform_grid(4, -1.0, 1.0)
    with pytest.raises(ValueError):
        build_grid([0.0, 1.0, 0.5, 2.0], [0.0, 1.0, 1.5, 2.0])
    g = build_uniform_grid(3, 1.0, 1.0)
    with pytest.raises(IndexError):
        interaction_volume(g, 0, 1)
    with pytest.raises(IndexError):
        interaction_volume(g, 1, g.n + 2)


def test_unknown_count_matches_assembled_dimension():
    # the 50x50 table row corresponds to N = 49 interior unknowns per axis
    from lmpfa_pricer.assembly import assemble_diffusion
    from lmpfa_pricer.model import MarketParams, averaged_tensor_field

    g = build_uniform_grid(49, 300.0, 300.0)
    op = assemble_diffusion(g, averaged_tensor_field(MarketParams(), g))
    assert op.matrix().shape == (49 * 49, 49 * 49)
