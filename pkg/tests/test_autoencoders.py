import numpy as np
import pytest

from corrvae import autoencoders as ae
from corrvae import corrdata, neural
from corrvae.errors import DataError, NumericalError


def tiny_panel(m=8, seed=1, n_months=140, window=60, stride=4):
    cfg = corrdata.default_market_config(n_assets=m, n_months=n_months)
    returns = corrdata.generate_synthetic_market(cfg, seed=seed)
    return corrdata.rolling_correlations(returns, window=window, stride=stride)


def mean_baseline_mse(x_train, x_val):
    """Oracle: per-sample squared error of predicting the training mean."""
    diff = x_val - x_train.mean(axis=0)
    return float((diff * diff).sum(axis=1).mean())


class TestSplitDataset:
    def test_reference_counts(self):
        train, val = ae.split_dataset(206, 0.30, seed=0)
        assert len(train) == 144 and len(val) == 62

    def test_half_split(self):
        train, val = ae.split_dataset(4, 0.5, seed=0)
        assert len(train) == 2 and len(val) == 2

    def test_deterministic(self):
        a = ae.split_dataset(50, 0.3, seed=9)
        b = ae.split_dataset(50, 0.3, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_disjoint_exhaustive(self):
        train, val = ae.split_dataset(37, 0.25, seed=3)
        combined = np.sort(np.concatenate([train, val]))
        assert np.array_equal(combined, np.arange(37))

    def test_too_small(self):
        with pytest.raises(DataError, match="at least 2"):
            ae.split_dataset(1, 0.3, seed=0)

    def test_bad_fraction(self):
        with pytest.raises(DataError, match="val_fraction"):
            ae.split_dataset(10, 1.0, seed=0)


class TestVaeLoss:
    def test_prior_posterior_match(self):
        enc = ae.LatentEncoding(mu=np.zeros(2), sigma=np.ones(2))
        total, mse, kl = ae.vae_loss(np.ones(4), np.ones(4), enc, beta=1.0)
        assert kl == 0.0 and mse == 0.0 and total == 0.0

    def test_unit_mean_shift(self):
        enc = ae.LatentEncoding(mu=np.array([1.0, 0.0]), sigma=np.ones(2))
        _, _, kl = ae.vae_loss(np.zeros(3), np.zeros(3), enc, beta=1.0)
        assert kl == pytest.approx(0.5, abs=1e-12)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(9)
        rec = rng.standard_normal(9)
        mu = rng.standard_normal(2)
        sigma = rng.uniform(0.2, 2.0, 2)
        beta = 0.7
        total, mse, kl = ae.vae_loss(x, rec, ae.LatentEncoding(mu, sigma), beta)
        # independent symbolic evaluation of the loss definition
        mse_direct = float(np.sum((x - rec) ** 2))
        kl_direct = float(-0.5 * np.sum(1 + np.log(sigma**2) - mu**2 - sigma**2))
        assert mse == pytest.approx(mse_direct, rel=1e-12)
        assert kl == pytest.approx(kl_direct, rel=1e-12)
        assert total == pytest.approx(mse_direct + beta * kl_direct, rel=1e-12)

    def test_beta_zero_total_is_mse(self):
        rng = np.random.default_rng(8)
        enc = ae.LatentEncoding(mu=rng.standard_normal(2), sigma=np.array([0.5, 2.0]))
        total, mse, _ = ae.vae_loss(rng.standard_normal(5), rng.standard_normal(5), enc, 0.0)
        assert total == mse

    def test_kl_nonnegative_zero_iff_standard(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            mu = rng.standard_normal(2) * rng.uniform(0, 2)
            sigma = rng.uniform(0.05, 3.0, 2)
            kl = ae.kl_divergence(mu, sigma)
            assert kl >= -1e-12
            if kl < 1e-10:
                assert np.abs(mu).max() < 1e-4 and np.abs(sigma - 1).max() < 1e-4

    def test_rejects_bad_inputs(self):
        enc = ae.LatentEncoding(mu=np.zeros(2), sigma=np.ones(2))
        with pytest.raises(DataError, match="differ"):
            ae.vae_loss(np.ones(3), np.ones(4), enc, 1.0)
        with pytest.raises(DataError, match="non-finite"):
            ae.vae_loss(np.array([np.nan]), np.array([1.0]), enc, 1.0)
        with pytest.raises(DataError, match="positive"):
            ae.kl_divergence(np.zeros(2), np.array([1.0, 0.0]))


class TestTrainVae:
    def test_paper_default_config(self):
        config = ae.TrainConfig()
        assert config.epochs == 80
        assert config.learning_rate == pytest.approx(1e-4)
        assert config.beta == 1.0
        assert config.batch_size == 16
        assert config.hidden_sizes == (512, 250)
        assert config.val_fraction == 0.30

    def test_memorizes_repeated_matrix(self, small_panel):
        mat = small_panel.matrices[0]
        data = corrdata.MatrixPanel(matrices=[mat] * 12, window=0, stride=0)
        config = ae.TrainConfig(
            epochs=300, learning_rate=2e-3, hidden_sizes=(32, 16), seed=2, beta=1.0
        )
        model, report = ae.train_vae(data, config)
        d = mat.dim * mat.dim
        assert report.final().val_mse < 1e-3 * d  # per-entry MSE below 1e-3
        rec = ae.decode(model, ae.encode(model, mat).mu)
        assert np.abs(rec - mat.values).mean() < 0.05

    def test_beats_mean_baseline(self, small_panel):
        config = ae.TrainConfig(
            epochs=60, learning_rate=1e-3, hidden_sizes=(64, 32), seed=5
        )
        model, report = ae.train_vae(small_panel, config)
        x = small_panel.flat()
        baseline = mean_baseline_mse(x[report.train_indices], x[report.val_indices])
        assert report.final().val_mse < baseline
        assert all(s.train_kl >= 0 and s.val_kl >= 0 for s in report.epochs)

    def test_deterministic(self, small_panel):
        config = ae.TrainConfig(epochs=4, learning_rate=1e-3, hidden_sizes=(24, 12), seed=3)
        m1, r1 = ae.train_vae(small_panel, config)
        m2, r2 = ae.train_vae(small_panel, config)
        for a, b in zip(m1.encoder.weights + m1.decoder.weights,
                        m2.encoder.weights + m2.decoder.weights):
            assert np.array_equal(a, b)
        assert [s.val_mse for s in r1.epochs] == [s.val_mse for s in r2.epochs]

    def test_divergence_aborts_with_epoch(self):
        # magnitudes that overflow the first reconstruction residual
        data = np.full((8, 16), 1e200)
        config = ae.TrainConfig(epochs=3, learning_rate=1e-3, hidden_sizes=(8,), seed=0)
        with pytest.raises(NumericalError, match=r"diverged at epoch \d+"):
            ae.train_vae(data, config)

    def test_report_counts(self, small_vae, small_panel):
        _, report = small_vae
        assert len(report.epochs) == 30
        assert len(report.train_indices) + len(report.val_indices) == len(small_panel)


class TestVaeStepGradient:
    def test_composite_gradient_matches_finite_differences(self):
        """Full-step check: reconstruction + KL through the reparameterized
        sample, against central differences on the encoder weights."""
        rng = np.random.default_rng(4)
        d, nb, beta = 9, 5, 0.7
        enc = neural.init_params(neural.MlpSpec((d, 7, 4), "tanh"), rng)
        dec = neural.init_params(neural.MlpSpec((2, 7, d), "tanh"), rng)
        xb = rng.standard_normal((nb, d))
        eps = rng.standard_normal((nb, 2))

        def loss():
            enc_out, _ = neural.forward(enc, xb)
            mu, logvar = enc_out[:, :2], enc_out[:, 2:]
            z = mu + np.exp(0.5 * logvar) * eps
            rec, _ = neural.forward(dec, z)
            mse = ((rec - xb) ** 2).sum(axis=1)
            kl = 0.5 * (mu * mu + np.expm1(logvar) - logvar).sum(axis=1)
            return float(mse.mean() + beta * kl.mean())

        # analytic gradients, restaged exactly as in the training loop
        enc_out, enc_tape = neural.forward(enc, xb)
        mu, logvar = enc_out[:, :2], enc_out[:, 2:]
        sigma = np.exp(0.5 * logvar)
        z = mu + sigma * eps
        rec, dec_tape = neural.forward(dec, z)
        resid = rec - xb
        _, dz = neural.backward(dec_tape, 2.0 * resid / nb)
        d_mu = dz + beta * mu / nb
        d_logvar = dz * (0.5 * sigma * eps) + beta * 0.5 * np.expm1(logvar) / nb
        enc_grads, _ = neural.backward(enc_tape, np.hstack([d_mu, d_logvar]))

        h = 1e-6
        check_rng = np.random.default_rng(5)
        for _ in range(40):
            li = int(check_rng.integers(len(enc.weights)))
            w = enc.weights[li]
            i = int(check_rng.integers(w.shape[0]))
            j = int(check_rng.integers(w.shape[1]))
            orig = w[i, j]
            w[i, j] = orig + h
            up = loss()
            w[i, j] = orig - h
            down = loss()
            w[i, j] = orig
            fd = (up - down) / (2 * h)
            an = enc_grads.weights[li][i, j]
            assert abs(fd - an) / max(abs(fd), abs(an), 1e-8) < 1e-4


class TestEncodeDecode:
    def test_encode_deterministic(self, small_vae, small_panel):
        model, _ = small_vae
        mat = small_panel.matrices[5]
        e1, e2 = ae.encode(model, mat), ae.encode(model, mat)
        assert np.array_equal(e1.mu, e2.mu) and np.array_equal(e1.sigma, e2.sigma)
        assert e1.mu.shape == (2,) and (e1.sigma > 0).all()

    def test_decode_shape_and_origin(self, small_vae, small_panel):
        from corrvae import linalg

        model, _ = small_vae
        m = small_panel.dim
        raw = ae.decode(model, np.zeros(2))
        assert raw.shape == (m, m)
        linalg.repair_to_correlation(raw).validate()

    def test_latent_scatter_count(self, small_vae, small_panel):
        model, _ = small_vae
        points = np.array([ae.encode(model, m).mu for m in small_panel.matrices])
        assert points.shape == (len(small_panel), 2)

    def test_decode_rejects_bad_input(self, small_vae):
        model, _ = small_vae
        with pytest.raises(DataError, match="non-finite"):
            ae.decode(model, np.array([np.nan, 0.0]))
        with pytest.raises(DataError, match="decoder input"):
            ae.decode(model, np.zeros(3))

    def test_encode_rejects_wrong_size(self, small_vae):
        model, _ = small_vae
        with pytest.raises(DataError, match="encoder expects"):
            ae.encode(model, np.zeros((3, 3)))


class TestTrainAe:
    def test_mse_decreases(self):
        panel = tiny_panel()
        config = ae.TrainConfig(epochs=40, learning_rate=1e-3, hidden_sizes=(32, 16), seed=4)
        _, report = ae.train_ae(panel, config)
        assert report.epochs[-1].train_mse < report.epochs[0].train_mse
        assert all(s.train_kl == 0.0 for s in report.epochs)

    def test_ae_beats_vae_on_median_seed(self):
        panel = tiny_panel()
        ae_final, vae_final = [], []
        for seed in range(5):
            config = ae.TrainConfig(
                epochs=30, learning_rate=1e-3, hidden_sizes=(32, 16), seed=seed
            )
            _, r_ae = ae.train_ae(panel, config)
            _, r_vae = ae.train_vae(panel, config)
            ae_final.append(r_ae.final().val_mse)
            vae_final.append(r_vae.final().val_mse)
        assert np.median(ae_final) <= np.median(vae_final)


class TestLinearAe:
    def test_three_dim_beats_two_dim(self):
        panel = tiny_panel()
        base = dict(epochs=2500, learning_rate=0.01, batch_size=1000, seed=6)
        _, r2 = ae.train_linear_ae(panel, ae.TrainConfig(latent_dim=2, **base))
        _, r3 = ae.train_linear_ae(panel, ae.TrainConfig(latent_dim=3, **base))
        assert r3.final().val_mse <= r2.final().val_mse

    def test_converges_to_pca(self):
        panel = tiny_panel(m=6)
        config = ae.TrainConfig(
            epochs=8000, learning_rate=0.02, batch_size=1000, latent_dim=2, seed=7
        )
        model, report = ae.train_linear_ae(panel, config)
        x = panel.flat()[report.train_indices]
        z, _ = neural.forward(model.encoder, x)
        rec, _ = neural.forward(model.decoder, z)
        lin_mse = float(((x - rec) ** 2).sum(axis=1).mean())
        pca2 = ae.pca_oracle(x, 2)
        assert lin_mse <= pca2 * 1.05
        # PCA optimality: no epoch ever beats the oracle
        assert min(s.train_mse for s in report.epochs) >= pca2 - 1e-9

    def test_rank_one_data_near_zero_mse(self):
        rng = np.random.default_rng(3)
        direction = rng.standard_normal(25)
        base = rng.standard_normal(25)
        data = base + np.outer(rng.standard_normal(30), direction)
        config = ae.TrainConfig(
            epochs=3000, learning_rate=0.02, batch_size=100, latent_dim=2, seed=8
        )
        _, report = ae.train_linear_ae(data, config)
        scale = float((data - data.mean(0)).var())
        assert report.final().val_mse < 1e-4 * scale * data.shape[1]

    def test_rejects_bad_latent_dim(self):
        with pytest.raises(DataError, match="must be 2 or 3"):
            ae.train_linear_ae(np.zeros((4, 9)), ae.TrainConfig(latent_dim=4))


class TestPcaOracle:
    def test_full_rank_zero(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((30, 6))
        assert ae.pca_oracle(x, 6) < 1e-20

    def test_k_zero_is_variance_about_mean(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((40, 5))
        expected = float(((x - x.mean(0)) ** 2).sum(axis=1).mean())
        assert ae.pca_oracle(x, 0) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_k(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((25, 8))
        errs = [ae.pca_oracle(x, k) for k in range(9)]
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))

    def test_k_out_of_range(self):
        with pytest.raises(DataError, match="k must be"):
            ae.pca_oracle(np.zeros((5, 3)), 4)


class TestModelPersistence:
    def test_bundle_round_trip(self, tmp_path, small_vae, small_panel):
        model, _ = small_vae
        out = str(tmp_path / "bundle")
        ae.save_model(model, out, metadata={"seed": 5, "labels": small_panel.labels})
        loaded, meta = ae.load_model(out)
        assert isinstance(loaded, ae.VaeModel)
        assert meta["kind"] == "vae" and meta["seed"] == 5
        assert loaded.beta == model.beta
        mat = small_panel.matrices[0]
        np.testing.assert_array_equal(
            ae.encode(loaded, mat).mu, ae.encode(model, mat).mu
        )

    def test_report_csv(self, tmp_path, small_vae):
        _, report = small_vae
        path = str(tmp_path / "report.csv")
        ae.write_report_csv(report, path)
        lines = open(path).read().strip().splitlines()
        assert lines[0] == "epoch,train_mse,train_kl,val_mse,val_kl"
        assert len(lines) == 1 + len(report.epochs)

    def test_missing_bundle(self, tmp_path):
        with pytest.raises(DataError, match="metadata not found"):
            ae.load_model(str(tmp_path / "none"))
