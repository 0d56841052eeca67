import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bofsae import sae
from bofsae.binio import Reader
from bofsae.errors import ContractError, DecodeError, NumericalError
from bofsae.sae import SaeConfig, SaeLayer

import oracles


def random_layer(rng, d, K, scale=0.5):
    return SaeLayer(
        rng.normal(0, scale, (d, K)),
        rng.normal(0, scale, (d, K)),
        rng.normal(0, scale, K),
        rng.normal(0, scale, d),
    )


class TestActivation:
    def test_symmetry_and_centre(self):
        t = np.linspace(-30, 30, 121)
        np.testing.assert_allclose(sae.activation(t) + sae.activation(-t), 1.0, atol=1e-15)
        assert sae.activation(0.0) == 0.5

    def test_extremes_are_finite(self):
        with np.errstate(all="raise"):
            out = sae.activation(np.array([-1e4, -800.0, 800.0, 1e4]))
        assert np.all(np.isfinite(out))
        assert out[0] == 0.0 and out[-1] == 1.0

    def test_forward_matches_loops(self, rng):
        layer = random_layer(rng, 6, 4)
        x = rng.normal(size=6)
        z, xhat = sae.forward(layer, x)
        z_ref, xhat_ref = oracles.forward(layer.W.tolist(), layer.V.tolist(),
                                          layer.b1.tolist(), layer.b2.tolist(), x.tolist())
        np.testing.assert_allclose(z, z_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(xhat, xhat_ref, rtol=0, atol=1e-12)

    def test_mean_activation_matches_loops(self, rng):
        layer = random_layer(rng, 5, 3)
        X = rng.normal(size=(5, 9))
        zs = [sae.forward(layer, X[:, i])[0] for i in range(9)]
        np.testing.assert_allclose(sae.mean_activation(layer, X), np.mean(zs, axis=0), atol=1e-12)

    def test_shape_contracts(self, rng):
        layer = random_layer(rng, 5, 3)
        with pytest.raises(ContractError):
            sae.forward(layer, np.zeros(4))
        with pytest.raises(ContractError):
            sae.hidden(layer, np.zeros((4, 2)))
        with pytest.raises(ContractError):
            SaeLayer(np.zeros((5, 3)), np.zeros((3, 5)), np.zeros(3), np.zeros(5))


class TestKl:
    def test_zero_at_target(self):
        assert sae.kl_term(0.05, np.full(10, 0.05)) == 0.0

    def test_spot_value(self):
        expected = 0.05 * math.log(0.05 / 0.5) + 0.95 * math.log(0.95 / 0.5)
        assert abs(sae.kl_term(0.05, [0.5]) - expected) < 1e-15
        assert abs(sae.kl_term(0.05, [0.5]) - 0.49463) < 1e-5

    def test_nonnegative_on_grid(self):
        grid = np.linspace(0.001, 0.999, 100)
        for rho in (0.01, 0.05, 0.3):
            assert all(sae.kl_term(rho, [r]) >= 0 for r in grid)

    def test_monotone_away_from_target(self):
        rho = 0.05
        up = [sae.kl_term(rho, [r]) for r in np.linspace(rho, 0.99, 60)]
        down = [sae.kl_term(rho, [r]) for r in np.linspace(rho, 0.001, 60)]
        assert all(b > a for a, b in zip(up, up[1:]))
        assert all(b > a for a, b in zip(down, down[1:]))

    def test_clamped_at_saturation(self):
        v = sae.kl_term(0.05, [0.0, 1.0])
        assert math.isfinite(v) and v > 0

    @given(st.floats(0.01, 0.99), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_property_nonnegative(self, rho, rho_hat):
        assert sae.kl_term(rho, rho_hat) >= 0


class TestObjective:
    def test_matches_literal_formula(self, rng):
        d, K, n = 4, 3, 6
        layer = random_layer(rng, d, K)
        X = rng.normal(size=(d, n))
        cfg = SaeConfig(hidden=K, rho=0.1, beta=0.7)
        expected = oracles.objective(layer.W.tolist(), layer.V.tolist(), layer.b1.tolist(),
                                     layer.b2.tolist(), X, cfg.rho, cfg.beta)
        recon, sparsity, total = sae.batch_loss(layer, X, cfg)
        assert abs(total - expected) < 1e-12
        assert abs(recon + sparsity - total) < 1e-15

    def test_sparsity_linear_in_beta(self, rng):
        layer = random_layer(rng, 4, 3)
        X = rng.normal(size=(4, 10))
        r0, s0, _ = sae.batch_loss(layer, X, SaeConfig(hidden=3, beta=0.0))
        r1, s1, _ = sae.batch_loss(layer, X, SaeConfig(hidden=3, beta=1.0))
        r2, s2, _ = sae.batch_loss(layer, X, SaeConfig(hidden=3, beta=2.5))
        assert s0 == 0.0 and r0 == r1 == r2
        assert abs(s2 - 2.5 * s1) < 1e-12


def check_gradients(seed, d=16, K=8, n=32, beta=3.0, rho=0.05):
    rng = np.random.default_rng(seed)
    layer = random_layer(rng, d, K, scale=0.3)
    X = rng.normal(size=(d, n))
    cfg = SaeConfig(hidden=K, rho=rho, beta=beta)
    analytic = sae.gradients(layer, X, cfg)
    params = [layer.W.copy(), layer.V.copy(), layer.b1.copy(), layer.b2.copy()]

    def loss():
        return sae.batch_loss(SaeLayer(*params), X, cfg)[2]

    worst = 0.0
    for p, g in zip(params, analytic):
        numeric = oracles.central_difference(loss, p, h=1e-5)
        rel = np.linalg.norm(g - numeric) / max(np.linalg.norm(g) + np.linalg.norm(numeric), 1e-12)
        worst = max(worst, rel)
    return worst


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        assert check_gradients(seed) < 1e-4

    def test_gradient_without_sparsity(self):
        assert check_gradients(11, d=5, K=4, n=7, beta=0.0) < 1e-6

    def test_contract(self, rng):
        with pytest.raises(ContractError):
            sae.gradients(random_layer(rng, 4, 2), np.zeros((3, 5)), SaeConfig(hidden=2))


class TestProjection:
    def test_unit_norm(self, rng):
        W = sae.normalize_columns(rng.normal(size=(7, 5)) * 40)
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0, atol=1e-15)

    def test_zero_column_fails(self):
        W = np.ones((3, 2))
        W[:, 1] = 0
        with pytest.raises(NumericalError):
            sae.normalize_columns(W)

    def test_initial_layer_is_projected(self):
        layer, _ = sae.init_layer(20, SaeConfig(hidden=6, seed=4))
        assert layer.column_norm_error() < 1e-12
        assert np.all(layer.b1 == 0) and np.all(layer.b2 == 0)
        r = SaeConfig(hidden=6).init_range(20)
        assert np.all(np.abs(layer.V) <= r) and r == math.sqrt(6 / 26)


class TestTraining:
    def test_descent(self, rng):
        X = rng.normal(size=(16, 256))
        cfg = SaeConfig(hidden=8, learning_rate=0.05, beta=0.1, epochs=50, batch_size=32, seed=2)
        before = sae.batch_loss(sae.init_layer(16, cfg)[0], X, cfg)[2]
        after = sae.batch_loss(sae.train(X, cfg), X, cfg)[2]
        assert after <= 0.99 * before

    def test_sparsity_pull(self, rng):
        X = rng.uniform(size=(16, 256))
        cfg = SaeConfig(hidden=8, rho=0.05, beta=3.0, learning_rate=0.05, epochs=50,
                        batch_size=32, seed=5)
        gap = lambda layer: np.mean(np.abs(sae.mean_activation(layer, X) - cfg.rho))
        assert gap(sae.train(X, cfg)) < gap(sae.init_layer(16, cfg)[0])

    def test_hook_sees_unit_norm(self, rng):
        X = rng.normal(size=(6, 40))
        cfg = SaeConfig(hidden=4, learning_rate=0.1, epochs=3, batch_size=16)
        seen = []
        sae.train(X, cfg, hook=lambda layer, e, s: seen.append((e, s, layer.column_norm_error())))
        assert len(seen) == 3 * 3
        assert max(err for _, _, err in seen) < 1e-9
        assert [s for _, s, _ in seen] == list(range(1, 10))

    def test_deterministic(self, rng):
        X = rng.normal(size=(6, 50))
        cfg = SaeConfig(hidden=5, epochs=4, batch_size=8, seed=9)
        assert sae.train(X, cfg).identical(sae.train(X, cfg))
        other = sae.train(X, SaeConfig(hidden=5, epochs=4, batch_size=8, seed=10))
        assert not sae.train(X, cfg).identical(other)

    def test_saturated_units_stay_finite(self, rng):
        X = rng.normal(size=(4, 20)) * 1e3
        cfg = SaeConfig(hidden=3, epochs=2, batch_size=5, learning_rate=1e-4)
        layer = sae.train(X, cfg)
        assert all(np.all(np.isfinite(a)) for a in (layer.W, layer.V, layer.b1, layer.b2))

    def test_large_weights_no_nan(self, rng):
        layer = SaeLayer(rng.uniform(-100, 100, (6, 4)), rng.uniform(-100, 100, (6, 4)),
                         rng.uniform(-100, 100, 4), rng.uniform(-100, 100, 6))
        X = rng.uniform(-1, 1, (6, 20))
        cfg = SaeConfig(hidden=4)
        with np.errstate(all="raise"):
            values = [*sae.batch_loss(layer, X, cfg), *sae.gradients(layer, X, cfg)]
        assert all(np.all(np.isfinite(v)) for v in values)

    def test_zero_epochs_returns_init(self, rng):
        X = rng.normal(size=(4, 10))
        cfg = SaeConfig(hidden=3, epochs=0, seed=1)
        assert sae.train(X, cfg).identical(sae.init_layer(4, cfg)[0])

    @pytest.mark.parametrize("kw", [dict(rho=0), dict(rho=1), dict(beta=-1),
                                    dict(learning_rate=0), dict(hidden=0), dict(init_scale=-1)])
    def test_config_validation(self, kw):
        with pytest.raises(ContractError):
            SaeConfig(**kw)


class TestPersistence:
    def test_round_trip(self, tmp_path, rng):
        layer = random_layer(rng, 5, 3)
        sae.save_layer(tmp_path / "l.gfl1", layer)
        assert sae.load_layer(tmp_path / "l.gfl1").identical(layer)

    def test_layout(self, rng):
        layer = random_layer(rng, 2, 3)
        blob = sae.layer_bytes(layer)
        assert blob[:4] == b"GFL1"
        assert len(blob) == 12 + 8 * (2 * 6 + 3 + 2)
        first_col = np.frombuffer(blob[12:28], "<f8")
        np.testing.assert_array_equal(first_col, layer.W[:, 0])

    def test_truncated(self, rng):
        blob = sae.layer_bytes(random_layer(rng, 2, 3))
        with pytest.raises(DecodeError):
            sae.read_layer(Reader(blob[:-1]))
        with pytest.raises(DecodeError):
            sae.read_layer(Reader(b"XXXX" + blob[4:]))
