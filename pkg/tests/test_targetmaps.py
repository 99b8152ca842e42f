import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spheremap.errors import ConfigError
from spheremap.targetmaps import (DensityMapConfig, GaussianMapConfig,
                                  KeypointSet, adaptive_sigma, density_map,
                                  gaussian_map, load_annotations,
                                  nearest_neighbor_distances,
                                  save_annotations, shift_keypoints)


def _kps(points, h=64, w=64):
    return KeypointSet(np.array(points, dtype=np.float64), h, w)


class TestKeypointSet:
    def test_bounds_checked(self):
        with pytest.raises(ValueError):
            _kps([[70.0, 3.0]])
        with pytest.raises(ValueError):
            _kps([[3.0, -1.0]])

    def test_empty_ok(self):
        assert len(_kps([])) == 0

    def test_column_quantization(self):
        kps = _kps([[1.0, 10.0 + 1 / 512]])
        # rounds to the nearest 1/256 px
        assert kps.points[0, 1] in (10.0, 10.0 + 1 / 256)


class TestNeighbors:
    def test_brute_force_oracle(self, rng):
        w = 64
        pts = np.stack([rng.uniform(0, 40, 25), rng.uniform(0, w, 25)], axis=1)
        kps = _kps(pts, h=40, w=w)
        got = nearest_neighbor_distances(kps, 3)
        q = kps.points
        for i in range(len(q)):
            dists = []
            for j in range(len(q)):
                if i == j:
                    continue
                dr = q[i, 0] - q[j, 0]
                dc = abs(q[i, 1] - q[j, 1])
                dc = min(dc, w - dc)
                dists.append(np.hypot(dr, dc))
            dists.sort()
            np.testing.assert_allclose(got[i], dists[:3], rtol=1e-12)

    def test_wrap_matters(self):
        kps = _kps([[5.0, 1.0], [5.0, 62.0]])
        wrapped = nearest_neighbor_distances(kps, 1, wrap_azimuth=True)
        flat = nearest_neighbor_distances(kps, 1, wrap_azimuth=False)
        assert wrapped[0][0] == 3.0
        assert flat[0][0] == 61.0

    def test_fewer_neighbors(self):
        kps = _kps([[1.0, 1.0], [2.0, 2.0]])
        out = nearest_neighbor_distances(kps, 3)
        assert len(out[0]) == 1
        assert nearest_neighbor_distances(_kps([[1.0, 1.0]]), 1) == [[]]


class TestAdaptiveSigma:
    def test_formula(self):
        cfg = GaussianMapConfig(mode="adaptive", p_t=0.33, beta=2.5)
        assert adaptive_sigma(3.0, cfg) == pytest.approx(0.99)
        assert adaptive_sigma(100.0, cfg) == 2.5  # capped at beta
        assert adaptive_sigma(None, cfg) == 2.5  # no neighbor


class TestGaussianMap:
    def test_kernel_value_oracle(self):
        # single point, direct kernel evaluation at an offset pixel
        kps = _kps([[32.0, 20.0]])
        cfg = GaussianMapConfig(mode="fixed", sigma=2.0)
        m = gaussian_map(kps, cfg).values
        assert m[32, 20] == 1.0
        d2 = 3.0 ** 2 + 4.0 ** 2
        assert m[35, 24] == pytest.approx(np.exp(-d2 / (2 * 4.0)), rel=1e-12)

    def test_peak_exactly_one(self, rng):
        for _ in range(10):
            n = rng.integers(1, 30)
            pts = np.stack([rng.uniform(0, 63, n), rng.uniform(0, 64, n)], axis=1)
            m = gaussian_map(_kps(pts), GaussianMapConfig(sigma=2.5)).values
            assert m.max() == 1.0

    def test_truncation(self):
        kps = _kps([[32.0, 32.0]])
        m = gaussian_map(kps, GaussianMapConfig(sigma=1.0,
                                                truncation_radius=4.0)).values
        assert m[32, 37] == 0.0  # 5 px > 4 sigma
        assert m[32, 35] > 0.0

    def test_wrap_across_seam(self):
        m = gaussian_map(_kps([[32.0, 0.0]]), GaussianMapConfig(sigma=2.0)).values
        assert m[32, 63] == m[32, 1]

    def test_empty_map_is_zero(self):
        m = gaussian_map(_kps([]), GaussianMapConfig()).values
        assert (m == 0).all()

    def test_invalid_mode(self):
        with pytest.raises(ConfigError):
            GaussianMapConfig(mode="nope")


class TestDensityMap:
    def test_sum_equals_count(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 40))
            pts = np.stack([rng.uniform(0, 63, n), rng.uniform(0, 64, n)], axis=1)
            m = density_map(_kps(pts), DensityMapConfig()).values
            assert abs(m.sum() - n) < 1e-6 * max(n, 1)

    def test_sigma_from_neighbors(self):
        # isolated pair: sigma_i = k * mean(available) / f with one neighbor
        kps = _kps([[20.0, 20.0], [20.0, 28.0]])
        cfg = DensityMapConfig(k_neighbors=3, f=10.0)
        m = density_map(kps, cfg).values
        # sigma = 3 * 8 / 10 = 2.4; mass still sums to 2
        assert abs(m.sum() - 2.0) < 1e-9
        assert m[20, 20] < 1.0  # spread out, not a delta


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 63))
def test_shift_equivariance_exact(offset):
    rng = np.random.default_rng(1234)
    pts = np.stack([rng.uniform(0, 63, 15), rng.uniform(0, 64, 15)], axis=1)
    kps = _kps(pts)
    moved = shift_keypoints(kps, offset)
    for make, cfg in ((gaussian_map, GaussianMapConfig(mode="adaptive")),
                      (gaussian_map, GaussianMapConfig(mode="fixed")),
                      (density_map, DensityMapConfig())):
        base = make(kps, cfg).values
        direct = make(moved, cfg).values
        rolled = np.roll(base, offset, axis=1)
        np.testing.assert_array_equal(direct, rolled)


def test_annotation_round_trip(tmp_path, rng):
    pts = np.stack([rng.uniform(0, 63, 9), rng.uniform(0, 64, 9)], axis=1)
    kps = _kps(pts)
    p = tmp_path / "ann.json"
    save_annotations(p, kps, delta=1.0)
    back, delta = load_annotations(p)
    assert delta == 1.0
    assert (back.height, back.width) == (64, 64)
    np.testing.assert_array_equal(back.points, kps.points)
