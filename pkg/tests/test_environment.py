"""Environment model tests: workspace geometry, Gaussian mixtures,
Lamb-vortex velocity fields, random generation, and obstacles."""

import math

import numpy as np
import pytest

from hauvplan.environment import (AIR, SEA, MAX_CURRENT_SPEED, MAX_WIND_SPEED,
                                  EnvGenConfig, GaussianFeature, LambVortex,
                                  ObstacleSet, OutOfWorkspaceError,
                                  VelocityField, Workspace, build_info_map,
                                  gaussian_info_value,
                                  generate_random_environment,
                                  lamb_vortex_velocity, normalize_per_side,
                                  random_covariance)


@pytest.fixture
def ws():
    return Workspace()


class TestWorkspace:
    def test_default_shape(self, ws):
        assert ws.shape == (100, 100, 13)
        assert ws.n_points == 130000

    def test_grid_point_positions(self, ws):
        assert np.allclose(ws.grid_to_point(0, 0, 0), [0.0, 0.0, -300.0])
        assert np.allclose(ws.grid_to_point(99, 99, 12), [4950.0, 4950.0, 300.0])
        assert np.allclose(ws.grid_to_point(20, 75, 6), [1000.0, 3750.0, 0.0])

    def test_round_trip(self, ws):
        rng = np.random.default_rng(0)
        for _ in range(50):
            idx = (int(rng.integers(100)), int(rng.integers(100)),
                   int(rng.integers(13)))
            assert ws.point_to_grid(ws.grid_to_point(*idx)) == idx

    def test_continuous_bounds_extend_half_cell(self, ws):
        assert ws.contains([-25.0, 0.0, 0.0])
        assert ws.contains([4975.0, 4975.0, 325.0])
        assert not ws.contains([-25.1, 0.0, 0.0])
        assert not ws.contains([0.0, 0.0, 325.1])

    def test_sea_level_on_layer(self):
        with pytest.raises(ValueError):
            Workspace(z_origin=-310.0)

    def test_layer_medium_split(self, ws):
        media = ws.layer_medium()
        assert list(media[:7]) == [SEA] * 7  # z = -300 .. 0 inclusive
        assert list(media[7:]) == [AIR] * 6


class TestRandomCovariance:
    def test_symmetric_positive_definite_over_seeds(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            c = random_covariance(rng, diag_range=(0.5, 3.0))
            assert np.allclose(c, c.T)
            eig = np.linalg.eigvalsh(c)
            assert eig.min() > 0.0
            assert eig.min() >= 0.5 - 1e-9
            assert eig.max() <= 3.0 + 1e-9

    def test_rejects_bad_range(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            random_covariance(rng, diag_range=(0.0, 1.0))
        with pytest.raises(ValueError):
            random_covariance(rng, diag_range=(2.0, 1.0))


class TestGaussianMixture:
    def test_against_dense_oracle(self):
        """Mixture values agree with a direct inverse/determinant evaluation."""
        rng = np.random.default_rng(42)
        features = []
        for _ in range(4):
            sigma = random_covariance(rng, diag_range=(100.0, 10000.0))
            features.append(GaussianFeature(
                mu=rng.uniform(0, 4950, 3), sigma=sigma,
                g=float(rng.uniform(0.5, 2.0))))
        pts = rng.uniform(-200, 5200, (1000, 3))
        for p in pts:
            expected = 0.0
            for f in features:
                d = p - f.mu
                inv = np.linalg.inv(f.sigma)
                det = np.linalg.det(f.sigma)
                expected += (f.g / math.sqrt((2 * math.pi) ** 3 * det)
                             * math.exp(-0.5 * d @ inv @ d))
            got = gaussian_info_value(p, features)
            assert got == pytest.approx(expected, rel=1e-10)

    def test_feature_validation(self):
        with pytest.raises(ValueError):
            GaussianFeature(mu=np.zeros(3), sigma=np.eye(3), g=0.0)
        asym = np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(ValueError):
            GaussianFeature(mu=np.zeros(3), sigma=asym, g=1.0)
        with pytest.raises(ValueError):
            GaussianFeature(mu=np.zeros(3), sigma=-np.eye(3), g=1.0)


class TestNormalizePerSide:
    def test_min_max_example(self, ws):
        values = np.full(ws.shape, 3.0)
        values[:, :, 7:] = np.linspace(2.0, 4.0, 6)  # air layers
        values[:, :, :7] = 10.0
        values[0, 0, 0] = 2.0
        out, meta = normalize_per_side(values, ws)
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert out[0, 0, 0] == 0.0
        assert out[0, 0, 7] == 0.0 and out[0, 0, 12] == 1.0
        assert meta["air_degenerate"] is False
        assert meta["sea_degenerate"] is False

    def test_degenerate_side_is_zeroed_and_flagged(self, ws):
        values = np.zeros(ws.shape)
        values[:, :, 7:] = np.linspace(1.0, 2.0, 6)
        out, meta = normalize_per_side(values, ws)
        assert meta["sea_degenerate"] is True
        assert np.all(out[:, :, :7] == 0.0)
        assert out[:, :, 7:].max() == 1.0

    def test_rejects_non_finite(self, ws):
        values = np.zeros(ws.shape)
        values[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            normalize_per_side(values, ws)

    def test_idempotent(self, ws):
        rng = np.random.default_rng(5)
        values = rng.uniform(0, 9, ws.shape)
        once, _ = normalize_per_side(values, ws)
        twice, _ = normalize_per_side(once, ws)
        assert np.allclose(once, twice, atol=1e-15)


class TestLambVortex:
    def test_unit_example(self):
        """eta = 2*pi, zeta = 1 at offset (1, 0) gives (0, 1 - 1/e)."""
        v = LambVortex(center=np.zeros(2), eta=2 * math.pi, zeta=1.0)
        u, w = lamb_vortex_velocity([1.0, 0.0, 0.0], v)
        assert u == pytest.approx(0.0, abs=1e-15)
        assert w == pytest.approx(1.0 - math.exp(-1.0), rel=1e-12)

    def test_zero_at_core(self):
        v = LambVortex(center=np.zeros(2), eta=3.0, zeta=2.0)
        u, w = lamb_vortex_velocity([0.0, 0.0, 0.0], v)
        assert u == 0.0 and w == 0.0

    def test_tangential(self):
        """Velocity is perpendicular to the radius vector everywhere."""
        v = LambVortex(center=np.array([10.0, -4.0]), eta=5.0, zeta=30.0)
        rng = np.random.default_rng(1)
        for _ in range(100):
            p = rng.uniform(-200, 200, 2)
            u, w = lamb_vortex_velocity([p[0], p[1], 0.0], v)
            radial = np.array([p[0] - 10.0, p[1] + 4.0])
            assert abs(np.dot([u, w], radial)) < 1e-9 * (1 + np.linalg.norm([u, w]) * np.linalg.norm(radial))

    def test_divergence_free(self):
        """Numerical planar divergence vanishes away from the core."""
        v = LambVortex(center=np.zeros(2), eta=4.0, zeta=50.0)
        h = 1e-4
        rng = np.random.default_rng(2)
        for _ in range(50):
            x, y = rng.uniform(20, 300, 2)
            up, _ = lamb_vortex_velocity([x + h, y, 0.0], v)
            um, _ = lamb_vortex_velocity([x - h, y, 0.0], v)
            _, vp = lamb_vortex_velocity([x, y + h, 0.0], v)
            _, vm = lamb_vortex_velocity([x, y - h, 0.0], v)
            div = (up - um) / (2 * h) + (vp - vm) / (2 * h)
            assert abs(div) < 1e-6

    def test_layer_interpolation(self):
        v = LambVortex(center=np.zeros(2), eta=2.0, zeta=10.0,
                       layers=(0, 4), eta_end=4.0, zeta_end=20.0)
        assert v.params_at_layer(0) == (2.0, 10.0)
        assert v.params_at_layer(4) == (4.0, 20.0)
        assert v.params_at_layer(2) == (3.0, 15.0)


class TestVelocityField:
    def test_superposition_and_w_zero(self, ws):
        v1 = LambVortex(center=np.array([1000.0, 1000.0]), eta=80.0,
                        zeta=300.0, layers=(7, 12))
        v2 = LambVortex(center=np.array([2000.0, 1000.0]), eta=-50.0,
                        zeta=200.0, layers=(7, 12))
        field = VelocityField(ws, vortices=[v1, v2])
        p = np.array([[1500.0, 1200.0, 100.0]])
        got = field.at(p)[0]
        e1 = lamb_vortex_velocity(p[0], v1)
        e2 = lamb_vortex_velocity(p[0], v2)
        assert got[0] == pytest.approx(e1[0] + e2[0], rel=1e-12)
        assert got[1] == pytest.approx(e1[1] + e2[1], rel=1e-12)
        assert got[2] == 0.0

    def test_layer_bands_do_not_leak(self, ws):
        air_vortex = LambVortex(center=np.array([1000.0, 1000.0]), eta=80.0,
                                zeta=300.0, layers=(7, 12))
        field = VelocityField(ws, vortices=[air_vortex])
        below = field.at(np.array([[1300.0, 1000.0, -100.0]]))[0]
        assert np.allclose(below, 0.0)

    def test_out_of_workspace_raises(self, ws):
        field = VelocityField(ws, vortices=[])
        with pytest.raises(OutOfWorkspaceError):
            field.at(np.array([[0.0, 0.0, 1000.0]]))


class TestRandomEnvironment:
    def test_deterministic_per_seed(self):
        a = generate_random_environment(3)
        b = generate_random_environment(3)
        assert np.array_equal(a.info_map.values, b.info_map.values)
        pts = a.workspace.grid_points().reshape(-1, 3)[::997]
        assert np.array_equal(a.velocity_field.at(pts), b.velocity_field.at(pts))

    def test_different_seeds_differ(self):
        a = generate_random_environment(3)
        b = generate_random_environment(4)
        assert not np.array_equal(a.info_map.values, b.info_map.values)

    @pytest.mark.parametrize("seed", [0, 7, 19])
    def test_speed_caps_hold_everywhere(self, seed):
        env = generate_random_environment(seed)
        speeds = env.velocity_field.grid_speeds()
        media = env.workspace.layer_medium()
        assert speeds[:, :, media == AIR].max() <= MAX_WIND_SPEED
        assert speeds[:, :, media == SEA].max() <= MAX_CURRENT_SPEED

    def test_info_map_normalized(self):
        env = generate_random_environment(11)
        assert env.info_map.values.min() >= 0.0
        assert env.info_map.values.max() <= 1.0


class TestObstacles:
    def test_box_boundary_is_inside(self):
        obs = ObstacleSet(boxes=[((0.0, 0.0, -100.0), (100.0, 100.0, 0.0))])
        assert obs.contains(np.array([[100.0, 100.0, 0.0]]))[0]
        assert obs.contains(np.array([[50.0, 50.0, -50.0]]))[0]
        assert not obs.contains(np.array([[100.1, 50.0, -50.0]]))[0]

    def test_empty_set(self):
        obs = ObstacleSet()
        assert len(obs) == 0
        assert not obs.contains(np.array([[0.0, 0.0, 0.0]]))[0]


class TestInfoMapWeights:
    def test_kappa_weights_follow_layers(self, ws):
        f = [GaussianFeature(mu=np.array([2500.0, 2500.0, 100.0]),
                             sigma=np.diag([1e5, 1e5, 1e4]), g=1.0)]
        im = build_info_map(f, ws, kappa_air=3.0, kappa_sea=1.0)
        w = im.kappa_weights()
        assert np.all(w[:, :, 7:] == 3.0)
        assert np.all(w[:, :, :7] == 1.0)
