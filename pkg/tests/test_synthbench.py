import json

import numpy as np
import pytest

from spheremap.errors import PackingError
from spheremap.geometry import cartesian_to_spherical
from spheremap.projection import (ProjectionConfig, crop_roi,
                                  fill_holes_cubic, project_equirectangular)
from spheremap.synthbench import (SpheroidSpec, generate_dataset,
                                  generate_spheroid, write_dataset)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            SpheroidSpec(a=-1.0)
        with pytest.raises(ValueError):
            SpheroidSpec(bump_amplitude=0.5)
        with pytest.raises(ValueError):
            SpheroidSpec(n_features=100, sample_count=500)


class TestGeneration:
    def test_feature_count_and_band(self, small_sample, roi_config):
        assert len(small_sample.feature_angles) == 60
        theta = small_sample.feature_angles[:, 0]
        assert theta.min() >= 0.235 * 180.0
        assert theta.max() <= 0.765 * 180.0

    def test_normals_unit_and_outward(self, small_sample):
        cloud = small_sample.cloud
        np.testing.assert_allclose(np.linalg.norm(cloud.normals, axis=1), 1.0,
                                   atol=1e-9)
        dots = np.einsum("ij,ij->i", cloud.normals, cloud.positions)
        assert (dots > 0).mean() > 0.999

    def test_bare_ellipsoid_radius_formula(self, rng):
        spec = SpheroidSpec(a=1.0, c=1.3, n_features=0, surface_noise=0.0,
                            sample_count=5000, seed=2)
        sample = generate_spheroid(spec)
        sph = cartesian_to_spherical(sample.cloud.positions)
        t = np.radians(sph[:, 1])
        want = (spec.a * spec.c
                / np.sqrt((spec.c * np.sin(t)) ** 2 + (spec.a * np.cos(t)) ** 2))
        np.testing.assert_allclose(sph[:, 0], want, rtol=1e-9)

    def test_packing_error(self):
        with pytest.raises(PackingError):
            generate_spheroid(SpheroidSpec(n_features=350,
                                           bump_angular_radius=10.0,
                                           sample_count=3500))

    def test_determinism(self):
        spec = SpheroidSpec(n_features=30, sample_count=2000, seed=9)
        a = generate_spheroid(spec)
        b = generate_spheroid(spec)
        np.testing.assert_array_equal(a.cloud.positions, b.cloud.positions)


class TestKeypoints:
    def test_roi_rows_local(self, small_sample, roi_config):
        kps = small_sample.keypoints(roi_config)
        assert kps.height == 96
        assert kps.points[:, 0].min() >= 0
        assert kps.points[:, 0].max() < 96

    def test_rho_maxima_recover_keypoints(self, small_sample, roi_config):
        # projecting the cloud and looking for bumps in rho finds >= 95% of
        # the planted features within 2 px
        grid = crop_roi(fill_holes_cubic(
            project_equirectangular(small_sample.cloud, roi_config)), roi_config)
        rho = grid.rho
        kps = small_sample.keypoints(roi_config)
        hit = 0
        for r, c in kps.points:
            r0, c0 = int(round(r)), int(round(c)) % 360
            rr = slice(max(r0 - 2, 0), min(r0 + 3, rho.shape[0]))
            window = rho[rr, [(c0 + d) % 360 for d in range(-2, 3)]]
            ring_r = slice(max(r0 - 5, 0), min(r0 + 6, rho.shape[0]))
            ring = rho[ring_r, [(c0 + d) % 360 for d in range(-5, 6)]]
            if window.max() >= np.percentile(ring, 75):
                hit += 1
        assert hit / len(kps.points) >= 0.95


class TestDataset:
    def test_manifest_statistics(self):
        samples, manifest = generate_dataset(
            8, {"n_features": (150, 350)}, seed=0,
            base_spec=SpheroidSpec(sample_count=4000))
        counts = [s["n_features"] for s in manifest.specs]
        assert all(150 <= c <= 350 for c in counts)
        assert len(samples) == 8

    def test_same_seed_identical_manifest(self):
        base = SpheroidSpec(sample_count=4000)
        _, m1 = generate_dataset(4, seed=5, base_spec=base)
        _, m2 = generate_dataset(4, seed=5, base_spec=base)
        assert m1.to_json() == m2.to_json()
        _, m3 = generate_dataset(4, seed=6, base_spec=base)
        assert m1.to_json() != m3.to_json()

    def test_write_dataset_layout(self, tmp_path, roi_config):
        samples, manifest = generate_dataset(
            2, seed=1, base_spec=SpheroidSpec(sample_count=4000))
        write_dataset(samples, manifest, tmp_path, roi_config)
        assert (tmp_path / "000.ply").exists()
        assert (tmp_path / "001.json").exists()
        meta = json.loads((tmp_path / "manifest.json").read_text())
        assert meta["seed"] == 1
        ann = json.loads((tmp_path / "000.json").read_text())
        assert ann["width"] == 360 and ann["height"] == 96
