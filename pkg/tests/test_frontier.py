import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpexplore import frontier, gpom, scenes
from gpexplore.frontier import FrontierConfig, FrontierMap, MacroAction
from gpexplore.geometry import GridSpec, Pose2, world_to_cell


def gmap(prob, var=1.0, res=1.0):
    prob = np.asarray(prob, dtype=float)
    g = GridSpec((0.0, 0.0), res, prob.shape[1], prob.shape[0])
    var = np.broadcast_to(np.asarray(var, dtype=float), prob.shape).copy()
    return gpom.GaussianMap(g, np.zeros_like(prob), var, prob, np.ones(prob.shape, bool))


class TestGradient:
    def test_constant_is_zero(self):
        assert np.all(frontier.gradient_l1(np.full((5, 7), 0.3)) == 0)

    def test_vertical_step(self):
        f = np.zeros((5, 6))
        f[:, 3:] = 1.0
        g = frontier.gradient_l1(f)
        assert np.all(g[:, 2] == 0.5) and np.all(g[:, 3] == 0.5)
        assert np.all(g[:, [0, 1, 4, 5]] == 0)

    def test_diagonal_step_interior(self):
        iy, ix = np.mgrid[0:8, 0:8]
        f = (ix + iy >= 8).astype(float)
        g = frontier.gradient_l1(f)
        # a cell on the step sees (1 - 0) / 2 along each axis
        assert g[4, 4] == 1.0 and g[3, 5] == 1.0

    def test_divided_by_resolution(self):
        f = np.zeros((4, 4))
        f[:, 2:] = 1.0
        assert np.allclose(frontier.gradient_l1(f, 0.25), 4 * frontier.gradient_l1(f))

    def test_one_sided_border(self):
        f = np.array([[0.0, 1.0, 1.0]])
        assert frontier.gradient_l1(f)[0, 0] == 1.0

    @given(st.integers(0, 1000))
    def test_complement_symmetric(self, seed):
        f = np.random.default_rng(seed).uniform(size=(6, 9))
        assert np.allclose(frontier.gradient_l1(f), frontier.gradient_l1(1 - f), atol=1e-12)


class TestBuildFrontierMap:
    def test_unknown_map_is_half(self):
        m = gmap(np.full((6, 6), 0.5))
        f = frontier.build_frontier_map(m, m)
        assert np.all(f.score == 0) and np.all(f.prob == 0.5)

    def test_rejects_mismatched_grids(self):
        with pytest.raises(ValueError):
            frontier.build_frontier_map(gmap(np.full((3, 3), 0.5)), gmap(np.full((3, 4), 0.5)))

    def test_uncertainty_damping(self):
        p = np.full((5, 8), 0.5)
        p[:, :4] = 0.05
        po = np.full_like(p, 0.5)
        low = frontier.build_frontier_map(gmap(p, 0.1), gmap(po))
        var = np.full_like(p, 0.1)
        var[2, 3] = 0.4
        high = frontier.build_frontier_map(gmap(p, var), gmap(po))
        assert low.score[2, 3] > 0
        assert 0.5 < high.prob[2, 3] < low.prob[2, 3]

    def test_depends_only_on_probabilities_of_obstacle_map(self):
        scene = scenes.corridor_scene()
        m, mo = scene.maps.merged, scene.maps.occupied
        other = gpom.GaussianMap(mo.grid, mo.mu * 3.0, mo.var * 9.0, mo.prob, mo.observed)
        a = frontier.build_frontier_map(m, mo)
        b = frontier.build_frontier_map(m, other)
        assert np.array_equal(a.prob, b.prob)

    def test_clamped(self):
        scene = scenes.corridor_scene()
        f = frontier.build_frontier_map(scene.maps.merged, scene.maps.occupied)
        assert f.prob.min() >= gpom.EPS and f.prob.max() <= 1 - gpom.EPS


@pytest.fixture(scope="module")
def scene():
    return scenes.corridor_scene()


class TestCorridor:
    def test_band_above_half(self, scene):
        f = frontier.build_frontier_map(scene.maps.merged, scene.maps.occupied)
        assert scene.band.sum() == 10
        assert np.all(f.prob[scene.band] > 0.5)

    def test_walls_below_half(self, scene):
        f = frontier.build_frontier_map(scene.maps.merged, scene.maps.occupied)
        assert scene.walls.sum() > 20
        assert np.all(f.prob[scene.walls] < 0.5)

    def test_beta_zero_loses_wall_suppression(self, scene):
        f = frontier.build_frontier_map(scene.maps.merged, scene.maps.occupied, beta=0.0)
        assert np.any(f.prob[scene.walls] > 0.5)

    def test_actions_point_east(self, scene):
        f = frontier.build_frontier_map(scene.maps.merged, scene.maps.occupied)
        acts = frontier.extract_macro_actions(f, scene.maps.merged.prob, Pose2(3.5, 2.0))
        assert len(acts) >= 1
        assert all(a.centroid[0] > 4.0 for a in acts)


def blob_map(sizes_at, shape=(20, 20)):
    """Frontier field with rectangular blobs ((row, col, h, w), ...)."""
    f = np.full(shape, gpom.EPS)
    for r, c, h, w in sizes_at:
        f[r:r + h, c:c + w] = 1 - gpom.EPS
    return FrontierMap(GridSpec((0.0, 0.0), 1.0, shape[1], shape[0]), f)


class TestClusters:
    def test_flat_field_is_empty(self):
        g = GridSpec((0.0, 0.0), 1.0, 10, 10)
        f = FrontierMap(g, np.full((10, 10), 0.5))
        assert frontier.extract_macro_actions(f, np.full((10, 10), 0.1), Pose2(5, 5)) == []

    def test_size_filter(self):
        f = blob_map([(2, 2, 4, 5), (12, 12, 1, 5)])
        acts = frontier.extract_macro_actions(f, np.full((20, 20), 0.1), Pose2(10, 10))
        assert len(acts) == 1 and acts[0].cluster_size == 20

    def test_diagonal_cells_join(self):
        f = blob_map([(0, 0, 1, 1), (1, 1, 1, 1)])
        assert len(frontier.cluster_frontiers(f, 0.6, 1, 10)) == 1

    def test_max_clusters_tie_break(self):
        f = blob_map([(10, 0, 2, 8), (0, 10, 2, 8), (15, 15, 3, 4)])
        kept = frontier.cluster_frontiers(f, 0.6, 1, 2)
        assert [len(c) for c in kept] == [16, 16]
        assert tuple(kept[0][0]) == (0, 10)

    def test_occupied_cells_not_candidates(self):
        f = blob_map([(2, 2, 4, 5)])
        prob = np.full((20, 20), 0.1)
        prob[2:6, 2:7] = 0.9
        assert frontier.extract_macro_actions(f, prob, Pose2(10, 10)) == []


class TestSnapping:
    def test_l_shaped_cluster(self):
        # an L of frontier cells around a block; its centroid falls on the block
        shape = (12, 12)
        f = np.full(shape, gpom.EPS)
        f[2, 2:10] = 1 - gpom.EPS
        f[2:10, 2] = 1 - gpom.EPS
        prob = np.full(shape, 0.1)
        prob[3:10, 3:10] = 0.9
        g = GridSpec((0.0, 0.0), 1.0, 12, 12)
        cells = np.argwhere(f > 0.6)
        cx = (cells[:, 1] + 0.5).mean()
        cy = (cells[:, 0] + 0.5).mean()
        ix, iy = world_to_cell((cx, cy), g)
        assert prob[iy, ix] > 0.5
        acts = frontier.extract_macro_actions(FrontierMap(g, f), prob, Pose2(0.5, 0.5),
                                              FrontierConfig(min_cluster_size=5))
        assert len(acts) == 1
        gx, gy = acts[0].goal
        assert prob[gy, gx] < 0.35
        assert 2 <= gx <= 9 and 2 <= gy <= 9
        best = min(math.hypot(x + 0.5 - cx, y + 0.5 - cy)
                   for y in range(2, 10) for x in range(2, 10) if prob[y, x] < 0.35)
        assert math.hypot(acts[0].centroid[0] - cx, acts[0].centroid[1] - cy) == pytest.approx(best)

    def test_unreachable_removed(self):
        f = blob_map([(2, 2, 4, 5)])
        prob = np.full((20, 20), 0.1)
        prob[:, 9] = 0.9
        assert frontier.extract_macro_actions(f, prob, Pose2(15, 15)) == []


class TestActionInvariants:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_goals_free_and_paths_finite(self, seed):
        rng = np.random.default_rng(seed)
        f = np.where(rng.uniform(size=(16, 16)) < 0.5, 0.9, 0.1)
        prob = np.where(rng.uniform(size=(16, 16)) < 0.15, 0.9, 0.1)
        prob[8, 8] = 0.1
        g = GridSpec((0.0, 0.0), 0.5, 16, 16)
        cfg = FrontierConfig(min_cluster_size=3)
        for a in frontier.extract_macro_actions(FrontierMap(g, f), prob, Pose2(4.25, 4.25), cfg):
            assert isinstance(a, MacroAction)
            assert a.cluster_size >= 3 and a.reachable
            gx, gy = a.goal
            assert prob[gy, gx] < cfg.p_free
            assert a.path[0] == (8, 8) and a.path[-1] == a.goal
