import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vids.errors import VidsError
from vids.stage1 import (VARIANTS, MahalanobisStats, Stage1Config, build_bigan,
                         classify_stage1, fit_thresholds, reconstruction_error,
                         score_windows, stage1_metrics, train_stage1,
                         wgan_gp_value)
from vids.tensor import OptimizerConfig, Tensor, grad, no_grad

from conftest import finite_difference, relative_error


def tiny_config(**kw):
    defaults = dict(variant="M1", latent_dim=6, width_scale=0.1, window=8,
                    epochs=1,
                    optimizer=OptimizerConfig(kind="rmsprop",
                                              learning_rate=2e-4,
                                              batch_size=8))
    defaults.update(kw)
    return Stage1Config(**defaults)


def zero_discriminator(model, bias=0.0):
    for name, t in model.disc_params.tensors.items():
        t.data[:] = 0.0
    model.disc_params["disc.score.bias"].data[:] = bias


class TestBuild:
    def test_m1_layer_counts(self):
        model = build_bigan(tiny_config(variant="M1"))
        assert model.layer_counts() == (5, 4, 4)

    def test_m4_layer_counts(self):
        model = build_bigan(tiny_config(variant="M4"))
        assert model.layer_counts() == (4, 4, 4)

    @pytest.mark.parametrize("variant", sorted(VARIANTS))
    def test_all_variants_build_and_reconstruct(self, variant, rng):
        config = tiny_config(variant=variant)
        model = build_bigan(config)
        x = rng.normal(size=(3, 8, config.window)).astype(np.float32)
        rec = model.reconstruct(x)
        assert rec.shape == x.shape

    def test_latent_shapes(self, rng):
        config = tiny_config(latent_dim=5)
        model = build_bigan(config)
        z = model.encode(rng.normal(size=(4, 8, config.window)).astype(np.float32))
        assert z.shape == (4, 5)
        d = model.discriminate(
            Tensor(rng.normal(size=(4, 8, config.window)).astype(np.float32)), z)
        assert d.shape == (4, 1)

    def test_unknown_variant_rejected(self):
        with pytest.raises(VidsError):
            tiny_config(variant="M9")

    def test_invalid_lambda_rejected(self):
        with pytest.raises(VidsError):
            tiny_config(lambda_gp=-1.0)


class TestValueFunction:
    def test_constant_discriminator_gives_lambda(self, rng):
        model = build_bigan(tiny_config())
        zero_discriminator(model, bias=3.7)
        x = rng.normal(size=(5, 8, 8)).astype(np.float32)
        value = wgan_gp_value(model, x, lambda_gp=10.0)
        assert value.item() == 10.0

    def test_constant_discriminator_lambda_zero(self, rng):
        model = build_bigan(tiny_config())
        zero_discriminator(model, bias=-1.2)
        x = rng.normal(size=(5, 8, 8)).astype(np.float32)
        assert wgan_gp_value(model, x, lambda_gp=0.0).item() == 0.0

    def test_value_matches_straight_line_recomputation(self, rng):
        """Independent step-by-step recomputation of the value from saved
        activations (numpy only, no graph)."""
        config = tiny_config()
        model = build_bigan(config)
        x = rng.normal(size=(4, 8, 8)).astype(np.float64)
        for store in (model.enc_params, model.gen_params, model.disc_params):
            for name, t in store.tensors.items():
                store[name] = Tensor(t.data.astype(np.float64),
                                     requires_grad=True)
        value = wgan_gp_value(model, x, lambda_gp=10.0).item()

        with no_grad():
            z = model.encode(x)
            x_hat = model.generate(z)
            d_real = model.discriminate(Tensor(x), z).data
            d_fake = model.discriminate(x_hat, z).data
        x_pen = Tensor(x_hat.data.copy(), requires_grad=True)
        d_pen = model.discriminate(x_pen, z.detach())
        g = grad(d_pen, x_pen,
                 grad_output=Tensor(np.ones_like(d_pen.data))).data
        norms = np.sqrt((g ** 2).sum(axis=(1, 2)))
        expected = (d_real.mean() - d_fake.mean()
                    + 10.0 * ((norms - 1.0) ** 2).mean())
        assert abs(value - expected) <= 1e-6 * max(1.0, abs(expected))

    def test_gradients_match_finite_differences(self, rng):
        """Full value incl. penalty vs central differences, float64.

        Micro-net below 500 parameters via narrow widths and a short window.
        """
        config = Stage1Config(variant="M1", latent_dim=3, width_scale=0.07,
                              window=4, epochs=1,
                              optimizer=OptimizerConfig(kind="rmsprop",
                                                        learning_rate=2e-4))
        model = build_bigan(config)
        params = []
        for store in (model.enc_params, model.gen_params, model.disc_params):
            for name, t in store.tensors.items():
                t64 = Tensor(t.data.astype(np.float64), requires_grad=True)
                store[name] = t64
                params.append(t64)
        total = sum(p.data.size for p in params)
        assert total <= 500, total
        x = rng.normal(size=(2, 8, 4))

        value = wgan_gp_value(model, x, lambda_gp=10.0)
        analytic = grad(value, params)
        numeric = finite_difference(
            lambda: wgan_gp_value(model, x, lambda_gp=10.0).item(), params)
        for a, n in zip(analytic, numeric):
            assert relative_error(a.data, n) <= 1e-4

    def test_interpolated_penalty_mode_is_seeded(self, rng):
        config = tiny_config(penalty_point="interpolated")
        model = build_bigan(config)
        x = rng.normal(size=(4, 8, 8)).astype(np.float32)
        v1 = wgan_gp_value(model, x, interpolation_seed=3).item()
        v2 = wgan_gp_value(model, x, interpolation_seed=3).item()
        v3 = wgan_gp_value(model, x, interpolation_seed=4).item()
        assert v1 == v2 and v1 != v3


class TestTraining:
    def test_zero_epochs_leaves_parameters_unchanged(self, rng):
        config = tiny_config(epochs=0)
        reference = build_bigan(config)
        x = rng.normal(size=(16, 8, 8)).astype(np.float32)
        model, history = train_stage1(config, x)
        assert history == []
        for ref_store, store in ((reference.enc_params, model.enc_params),
                                 (reference.gen_params, model.gen_params),
                                 (reference.disc_params, model.disc_params)):
            for name in ref_store.tensors:
                np.testing.assert_array_equal(ref_store[name].data,
                                              store[name].data)

    def test_training_is_seed_deterministic(self, rng):
        config = tiny_config(epochs=2)
        x = rng.normal(size=(24, 8, 8)).astype(np.float32)
        m1, h1 = train_stage1(config, x)
        m2, h2 = train_stage1(config, x)
        assert h1 == h2
        for n in m1.disc_params.tensors:
            np.testing.assert_array_equal(m1.disc_params[n].data,
                                          m2.disc_params[n].data)

    def test_bce_variant_trains(self, rng):
        config = tiny_config(variant="M6", epochs=2)
        x = rng.normal(size=(16, 8, 8)).astype(np.float32)
        model, history = train_stage1(config, x)
        assert len(history) == 2
        assert np.isfinite([h["critic_loss"] for h in history]).all()

    def test_wgan_variant_has_no_penalty_term(self, rng):
        config = tiny_config(variant="M5", epochs=1)
        model, _ = train_stage1(config,
                                rng.normal(size=(8, 8, 8)).astype(np.float32))
        assert model.config.loss == "wgan"

    def test_sinusoid_separation(self):
        """Smooth sinusoid windows vs uniform-noise windows: held-out normal
        reconstruction MSE is lower after desk-scale training."""
        rng = np.random.default_rng(3)
        t = np.linspace(0, 2 * np.pi, 8)
        windows = []
        for _ in range(160):
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.5, 1.5)
            base = amp * np.sin(t + phase)
            windows.append(np.tile(base, (8, 1)) +
                           rng.normal(0, 0.05, size=(8, 8)))
        windows = np.array(windows, dtype=np.float32)
        train, held = windows[:128], windows[128:]
        noise = rng.uniform(-2, 2, size=(32, 8, 8)).astype(np.float32)

        config = Stage1Config(
            variant="M1", latent_dim=4, width_scale=0.25, window=8, epochs=200,
            critic_steps=2,
            optimizer=OptimizerConfig(kind="rmsprop", learning_rate=5e-4,
                                      batch_size=32), seed=11)
        model, _ = train_stage1(config, train)
        stats = MahalanobisStats.identity(64)
        held_mse = score_windows(model, held, stats, 0.0)["mse"].mean()
        noise_mse = score_windows(model, noise, stats, 0.0)["mse"].mean()
        assert held_mse < noise_mse


class TestScoring:
    def test_zero_error_all_components(self):
        stats = MahalanobisStats.identity(160)
        x = np.zeros((8, 20))
        mse, dm, combined = reconstruction_error(x, x, stats, alpha=0.5)
        assert mse == 0.0 and dm == 0.0 and combined == 0.0

    def test_euclidean_reduction(self):
        stats = MahalanobisStats.identity(160)
        rec = np.zeros(160)
        rec[0], rec[1] = 3.0, 4.0
        _, dm, _ = reconstruction_error(np.zeros(160), rec, stats, alpha=0.5)
        assert abs(dm - 5.0) <= 1e-12

    def test_worked_combined_score(self):
        stats = MahalanobisStats.identity(160)
        x = np.zeros((8, 20))
        rec = np.zeros((8, 20))
        rec[0, 0], rec[0, 1] = 3.0, 4.0
        mse, dm, combined = reconstruction_error(x, rec, stats, alpha=0.5)
        assert mse == 25.0 / 160.0 == 0.15625
        assert dm == 5.0
        assert combined == 2.578125

    def test_alpha_degeneracies(self, rng):
        stats = MahalanobisStats.identity(160)
        x = rng.normal(size=(8, 20))
        rec = rng.normal(size=(8, 20))
        mse, dm, c0 = reconstruction_error(x, rec, stats, alpha=0.0)
        assert c0 == mse
        _, _, c1 = reconstruction_error(x, rec, stats, alpha=1.0)
        assert c1 == dm

    def test_mahalanobis_under_identity_matches_norm(self, rng):
        stats = MahalanobisStats.identity(32)
        v = rng.normal(size=32)
        assert abs(stats.distance(v) - np.linalg.norm(v)) <= 1e-12

    def test_fit_is_positive_definite_and_symmetric(self, rng):
        data = rng.normal(size=(30, 160))   # n < d: needs the ridge
        stats = MahalanobisStats.fit(data)
        np.testing.assert_allclose(stats.sigma_inv, stats.sigma_inv.T,
                                   atol=1e-8)
        eigvals = np.linalg.eigvalsh(stats.sigma_inv)
        assert eigvals.min() > -1e-8

    def test_shape_mismatch_rejected(self):
        stats = MahalanobisStats.identity(160)
        with pytest.raises(VidsError):
            reconstruction_error(np.zeros((8, 20)), np.zeros((8, 19)), stats, 0.5)


class TestThresholds:
    def test_five_point_fixture(self):
        tm = fit_thresholds([0, 1, 2, 3, 4])
        assert (tm.q1, tm.q3, tm.iqr, tm.ll, tm.ul) == (1.0, 3.0, 2.0, -2.0, 6.0)

    def test_two_point_fixture(self):
        tm = fit_thresholds([0, 100])
        assert (tm.q1, tm.q3, tm.ll, tm.ul) == (25.0, 75.0, -50.0, 150.0)

    def test_constant_scores(self):
        tm = fit_thresholds([3.0, 3.0, 3.0, 3.0])
        assert tm.q1 == tm.q3 == tm.ll == tm.ul == 3.0

    def test_too_few_scores(self):
        with pytest.raises(VidsError):
            fit_thresholds([1.0])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200))
    @settings(max_examples=100, deadline=None)
    def test_band_ordering_invariant(self, scores):
        tm = fit_thresholds(scores)
        assert tm.ll <= tm.q1 <= tm.q3 <= tm.ul
        assert tm.iqr == tm.q3 - tm.q1

    def test_rule_application(self):
        tm = fit_thresholds([0, 1, 2, 3, 4])   # q1=1 q3=3 ll=-2 ul=6
        d = classify_stage1(7.0, tm)
        assert d.anomaly_rule_fired and not d.normal_rule_fired
        assert d.deployed_label == "anomalous"
        assert classify_stage1(7.0, tm, "band_q1q3").deployed_label == "anomalous"

    def test_inside_iqr_is_normal_in_both_modes(self):
        tm = fit_thresholds([0, 1, 2, 3, 4])
        for mode in ("band_llul", "band_q1q3"):
            d = classify_stage1(2.0, tm, mode)
            assert d.deployed_label == "normal"
            assert not d.anomaly_rule_fired and d.normal_rule_fired

    def test_overlap_band_depends_on_mode(self):
        tm = fit_thresholds([0, 1, 2, 3, 4])
        d = classify_stage1(0.5, tm)              # in [ll, q1)
        assert d.anomaly_rule_fired and d.normal_rule_fired
        assert d.deployed_label == "normal"
        assert classify_stage1(0.5, tm, "band_q1q3").deployed_label == "anomalous"

    def test_rules_match_brute_force_on_random_scores(self, rng):
        tm = fit_thresholds(rng.normal(size=200))
        scores = rng.normal(scale=3.0, size=10000)
        for s in scores[:200]:
            d = classify_stage1(float(s), tm)
            assert d.anomaly_rule_fired == (s < tm.q1 or s > tm.q3)
            assert d.normal_rule_fired == (tm.ll <= s <= tm.ul)

    def test_raising_score_above_ul_flips_label(self):
        tm = fit_thresholds([0, 1, 2, 3, 4])
        assert classify_stage1(5.0, tm).deployed_label == "normal"
        assert classify_stage1(6.1, tm).deployed_label == "anomalous"

    def test_unknown_mode_rejected(self):
        tm = fit_thresholds([0, 1, 2, 3, 4])
        with pytest.raises(VidsError):
            classify_stage1(1.0, tm, "llul")


class TestMetrics:
    def test_all_correct(self):
        tm = fit_thresholds([0, 1, 2, 3, 4])
        decisions = [classify_stage1(2.0, tm), classify_stage1(10.0, tm)]
        m = stage1_metrics(decisions, [False, True])
        assert m.normal_recall == 1.0 and m.anomaly_recall == 1.0

    def test_counted_fixture(self, rng):
        """Exactly 10% of anomaly scores land inside [q1, q3]."""
        tm = fit_thresholds([0, 1, 2, 3, 4])   # q1=1, q3=3
        inside = np.full(10, 2.0)
        outside = np.full(90, 50.0)
        scores = np.concatenate([inside, outside])
        decisions = [classify_stage1(float(s), tm) for s in scores]
        m = stage1_metrics(decisions, [True] * 100)
        assert m.anomaly_recall == 0.9
        assert m.normal_recall is None

    def test_empty_class_reported_absent(self):
        tm = fit_thresholds([0, 1, 2, 3, 4])
        m = stage1_metrics([classify_stage1(2.0, tm)], [False])
        assert m.anomaly_recall is None
        assert m.normal_recall == 1.0
