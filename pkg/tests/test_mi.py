import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpexplore import mi, scenes
from gpexplore.geometry import GridSpec, Pose2
from gpexplore.gpom import EPS

from mi_oracle import beam_information, row_case, row_case_information

EAST = Pose2(0.5, 0.5, math.pi)  # with one beam at bearing -pi this looks due east


def row_map(probs, r_max=4.0, s_z=10.0 / 3.0, p_o=0.65):
    probs = np.asarray(probs, dtype=float)[None, :]
    g = GridSpec((0.0, 0.0), 1.0, probs.shape[1], 1)
    cfg = mi.MIConfig(n_z=1, r_max=r_max, s_z=s_z, p_o=p_o)
    return mi.build_mi_map(EAST, probs, g, cfg).info[0]


class TestCellEntropy:
    def test_half(self):
        assert mi.cell_entropy(0.5) == pytest.approx(math.log(2), abs=1e-12)

    def test_deterministic(self):
        assert mi.cell_entropy(EPS) < 2e-5 and mi.cell_entropy(0.0) < 2e-5

    @given(st.floats(0, 1))
    def test_symmetric(self, p):
        assert mi.cell_entropy(p) == pytest.approx(mi.cell_entropy(1 - p), abs=1e-12)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(n_z=0), dict(s_z=0.0), dict(p_o=0.5), dict(p_f=0.7)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            mi.MIConfig(**kw)

    def test_integration_grid(self):
        assert np.allclose(mi.integration_ranges(1.0, 5.0), [0.2, 0.4, 0.6, 0.8, 1.0])
        assert mi.integration_ranges(0.1, 5.0).size == 0


class TestOracle:
    def test_five_unknown_cells(self):
        info = row_map([0.1, 0.5, 0.5, 0.5, 0.5, 0.5], r_max=5.0, s_z=20.0)
        expected = beam_information([0.5] * 5, [0.5, 1.5, 2.5, 3.5, 4.5], 5.0, 20.0, r_max=5.0)
        assert np.max(np.abs(info[1:] - expected)) < 1e-6
        assert expected[0] > 0.1

    @pytest.mark.parametrize("seed", range(60))
    def test_generated_rows(self, seed):
        probs, r_max, s_z, _, _, _ = row_case(seed)
        info = row_map(probs, r_max, s_z)
        assert np.max(np.abs(info - row_case_information(seed))) < 1e-6

    def test_beam_information_direct(self):
        model = mi.MIConfig(r_max=4.0, s_z=5.0).beam_model()
        probs, dist = [0.3, 0.5, 0.8], [0.4, 1.1, 2.7]
        got = mi.beam_information(probs, dist, 2.7, 5.0, model)
        assert np.allclose(got, beam_information(probs, dist, 2.7, 5.0, band=0.2), atol=1e-9)


class TestSemantics:
    def test_deterministic_cells_carry_no_information(self):
        info = row_map([0.1] + [EPS] * 5)
        assert np.all(info[1:] < 1e-4)
        assert info[0] == pytest.approx(mi.cell_entropy(0.1))  # vantage is off every beam

    def test_cells_behind_obstacle_keep_entropy(self):
        probs = [0.1, 0.5, 1 - EPS, 0.5, 0.3]
        info = row_map(probs)
        assert info[3] == pytest.approx(math.log(2)) and info[4] == pytest.approx(mi.cell_entropy(0.3))
        assert info[1] < math.log(2)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.05, 0.6), min_size=4, max_size=4), st.integers(1, 3))
    def test_occlusion_never_adds_information(self, ps, k):
        probs = [0.1] + ps
        blocked = list(probs)
        blocked[k] = 1 - EPS
        a, b = row_map(probs), row_map(blocked)
        assert np.all(b[k + 1:] <= a[k + 1:] + 1e-12) or np.allclose(b[k + 1:], [
            mi.cell_entropy(p) for p in probs[k + 1:]])

    def test_vantage_must_be_free(self):
        g = GridSpec((0.0, 0.0), 1.0, 4, 1)
        with pytest.raises(ValueError):
            mi.build_mi_map(Pose2(0.5, 0.5), np.full((1, 4), 0.5), g, mi.MIConfig(n_z=4))
        with pytest.raises(ValueError):
            mi.build_mi_map(Pose2(9.5, 0.5), np.full((1, 4), 0.1), g, mi.MIConfig(n_z=4))


class TestMultiBeam:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_bounds(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.01, 0.99, size=(16, 16))
        p[8, 8] = 0.1
        g = GridSpec((0.0, 0.0), 0.25, 16, 16)
        m = mi.build_mi_map(Pose2(2.1, 2.1), p, g, mi.MIConfig(n_z=40, r_max=2.0))
        h = mi.cell_entropy(p)
        assert np.all(m.info >= 0) and np.all(m.info <= h + 1e-9)
        assert np.array_equal(m.info[~m.perceived], h[~m.perceived])

    def test_bit_identical(self):
        p = np.random.default_rng(3).uniform(0.01, 0.99, size=(12, 12))
        p[6, 6] = 0.1
        g = GridSpec((0.0, 0.0), 0.25, 12, 12)
        a = mi.build_mi_map(Pose2(1.6, 1.6), p, g)
        b = mi.build_mi_map(Pose2(1.6, 1.6), p.copy(), g)
        assert np.array_equal(a.info, b.info)


class TestTotalInformation:
    def test_deterministic_map(self):
        p = np.full((10, 10), EPS)
        m = mi.build_mi_map(Pose2(1.2, 1.2), p, GridSpec((0.0, 0.0), 0.25, 10, 10))
        assert mi.total_information(m) < 1e-3

    def test_single_visible_cell(self):
        m = mi.build_mi_map(EAST, np.array([[0.1, 0.5, 1 - EPS]]), GridSpec((0, 0), 1.0, 3, 1),
                            mi.MIConfig(n_z=1))
        assert mi.total_information(m) <= math.log(2)

    def test_counts_cells_once(self):
        p = np.full((8, 8), 0.5)
        p[4, 4] = 0.1
        m = mi.build_mi_map(Pose2(1.1, 1.1), p, GridSpec((0.0, 0.0), 0.25, 8, 8))
        assert mi.total_information(m) == pytest.approx(m.info[m.perceived].sum())
        assert mi.total_information(m) <= m.perceived.sum() * math.log(2) + 1e-9

    def test_lower_p_o_sees_less(self):
        scene = scenes.corridor_scene()
        p = scene.maps.merged.prob
        vantage = Pose2(*scenes.CORRIDOR_VANTAGE)
        totals = [mi.total_information(mi.build_mi_map(vantage, p, scene.grid, mi.MIConfig(p_o=po)))
                  for po in (0.95, 0.8, 0.65, 0.55)]
        assert all(a >= b - 1e-9 for a, b in zip(totals, totals[1:]))
