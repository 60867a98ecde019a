import math

import mpmath
import numpy as np
import pytest

from corrvae import creditrisk as cr
from corrvae.corrdata import CorrelationMatrix
from corrvae.errors import DataError, NumericalError

mpmath.mp.dps = 40


def mp_cdf(x):
    """High-precision normal CDF oracle (mpmath erf series)."""
    return float(0.5 * (1 + mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2))))


def mp_inv_cdf(p, x0=0.0):
    return float(
        mpmath.findroot(
            lambda x: 0.5 * (1 + mpmath.erf(x / mpmath.sqrt(2))) - mpmath.mpf(p), x0
        )
    )


def single_factor_matrix():
    return CorrelationMatrix(labels=["f0"], values=np.array([[1.0]]))


def uniform_matrix(k, rho):
    values = np.full((k, k), rho)
    np.fill_diagonal(values, 1.0)
    return CorrelationMatrix(labels=[f"f{i}" for i in range(k)], values=values)


class TestNormalCdf:
    def test_symmetry_points(self):
        assert cr.normal_cdf(0.0) == 0.5
        assert cr.normal_inv_cdf(0.5) == 0.0

    def test_against_high_precision_oracle(self):
        for x in (-6.0, -1.96, -0.5, 0.1, 1.96, 4.0, 7.5):
            assert cr.normal_cdf(x) == pytest.approx(mp_cdf(x), rel=1e-13, abs=1e-300)

    def test_196_value(self):
        assert cr.normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-12)

    def test_inverse_against_oracle(self):
        for p in (1e-9, 0.02425, 0.3, 0.5, 0.7, 0.97575, 1 - 1e-9):
            x0 = 0.0 if 0.01 < p < 0.99 else math.copysign(5.0, p - 0.5)
            assert cr.normal_inv_cdf(p) == pytest.approx(mp_inv_cdf(p, x0), abs=1e-11)

    def test_round_trip_precision(self):
        grid = np.concatenate(
            [
                np.geomspace(1e-10, 0.5, 3000),
                1.0 - np.geomspace(1e-10, 0.5, 3000),
            ]
        )
        err = np.abs(cr.normal_cdf(cr.normal_inv_cdf(grid)) - grid)
        assert err.max() <= 1e-12

    def test_domain_errors(self):
        for p in (0.0, 1.0, -0.5, 1.5, np.nan):
            with pytest.raises(ValueError, match="domain"):
                cr.normal_inv_cdf(p)

    def test_vectorized(self):
        xs = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(
            cr.normal_cdf(xs), [cr.normal_cdf(float(x)) for x in xs], atol=1e-15
        )


class TestVasicekClosedForm:
    def test_zero_correlation_gives_pd(self):
        assert cr.vasicek_closed_form(0.03, 0.0, 0.999, 0.8, 100.0) == pytest.approx(
            100.0 * 0.8 * 0.03, rel=1e-12
        )

    def test_reference_value(self):
        # independent high-precision evaluation of the formula
        pd_, rho, q = 0.01, 0.2, 0.999
        expected = mp_cdf(
            (mp_inv_cdf(pd_, -2.0) + rho * mp_inv_cdf(q, 3.0)) / math.sqrt(1 - rho**2)
        )
        value = cr.vasicek_closed_form(pd_, rho, q, 1.0, 1.0)
        assert value == pytest.approx(expected, rel=1e-10)
        assert value == pytest.approx(0.0406, abs=5e-4)

    def test_q_to_one_limit(self):
        # strong loading so the conditional PD saturates within fp range
        values = [
            cr.vasicek_closed_form(0.01, 0.9, q, 0.9, 50.0)
            for q in (0.99, 0.9999, 1 - 1e-12)
        ]
        assert values == sorted(values)
        assert values[-1] == pytest.approx(45.0, rel=1e-6)

    def test_domain_checks(self):
        with pytest.raises(DataError):
            cr.vasicek_closed_form(0.0, 0.2, 0.999)
        with pytest.raises(DataError):
            cr.vasicek_closed_form(0.01, 1.0, 0.999)
        with pytest.raises(DataError):
            cr.vasicek_closed_form(0.01, 0.2, 0.0)


class TestVarQuantile:
    def test_hand_case(self):
        dist = cr.LossDistribution.from_samples([0.0] * 99 + [100.0])
        assert cr.var_quantile(dist, 0.995) == 100.0
        assert cr.var_quantile(dist, 0.5) == 0.0

    def test_boundary_conventions(self):
        dist = cr.LossDistribution.from_samples([3.0, 1.0, 2.0])
        assert cr.var_quantile(dist, 0.0) == 1.0
        assert cr.var_quantile(dist, 1.0) == 3.0

    def test_monotone_in_q(self):
        rng = np.random.default_rng(3)
        dist = cr.LossDistribution.from_samples(rng.exponential(size=500))
        qs = np.linspace(0.01, 0.999, 40)
        values = [cr.var_quantile(dist, q) for q in qs]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            cr.LossDistribution.from_samples([])


class TestSimulateLosses:
    def test_pd_zero_no_losses(self):
        port = cr.PortfolioSpec([cr.SubPortfolio("z", 500, 1.0, 0.0, 1.0, 0.5, 0)])
        dist = cr.simulate_losses(
            port, single_factor_matrix(), cr.SimConfig(paths=2000, strata=10, seed=1)
        )
        assert dist.losses.max() == 0.0

    def test_idiosyncratic_default_frequency(self):
        port = cr.PortfolioSpec([cr.SubPortfolio("solo", 1, 1.0, 0.1, 1.0, 0.0, 0)])
        cfg = cr.SimConfig(paths=40_000, strata=1, seed=3)
        dist = cr.simulate_losses(port, single_factor_matrix(), cfg)
        se = math.sqrt(0.1 * 0.9 / cfg.paths)
        assert dist.mean() == pytest.approx(0.1, abs=3 * se)

    def test_homogeneous_matches_closed_form(self):
        port = cr.PortfolioSpec([cr.SubPortfolio("all", 2000, 1.0, 0.01, 1.0, 0.2, 0)])
        cfg = cr.SimConfig(paths=40_000, strata=400, seed=7, quantile=0.999)
        dist = cr.simulate_losses(port, single_factor_matrix(), cfg)
        mc = cr.var_quantile(dist, 0.999)
        closed = cr.vasicek_closed_form(0.01, 0.2, 0.999, 1.0, port.total_ead())
        tol = max(3 * cr.var_standard_error(dist, 0.999), 1.0)
        assert abs(mc - closed) <= tol

    def test_losses_bounded_and_reproducible(self):
        port = cr.PortfolioSpec(
            [
                cr.SubPortfolio("a", 50, 2.0, 0.05, 0.8, 0.4, 0),
                cr.SubPortfolio("b", 30, 1.0, 0.10, 0.5, 0.3, 1),
            ]
        )
        s = uniform_matrix(2, 0.5)
        cfg = cr.SimConfig(paths=5000, strata=50, seed=9)
        d1 = cr.simulate_losses(port, s, cfg)
        d2 = cr.simulate_losses(port, s, cfg)
        assert np.array_equal(d1.losses, d2.losses)
        assert d1.losses.min() >= 0.0
        assert d1.losses.max() <= port.max_loss() + 1e-9

    def test_var_monotone_in_factor_correlation(self):
        subs = [
            cr.SubPortfolio(f"s{j}", 100, 1.0, 0.02, 1.0, 0.5, j) for j in range(3)
        ]
        port = cr.PortfolioSpec(subs)
        cfg = cr.SimConfig(paths=60_000, strata=600, seed=11, quantile=0.999)
        dist_indep = cr.simulate_losses(port, uniform_matrix(3, 0.0), cfg)
        dist_coupled = cr.simulate_losses(port, uniform_matrix(3, 0.8), cfg)
        assert cr.var_quantile(dist_coupled, 0.999) >= cr.var_quantile(dist_indep, 0.999)

    def test_per_obligor_agrees_with_binomial(self):
        port = cr.PortfolioSpec([cr.SubPortfolio("m", 40, 1.0, 0.08, 0.9, 0.45, 0)])
        cfg_a = cr.SimConfig(paths=30_000, strata=300, seed=21)
        cfg_b = cr.SimConfig(paths=30_000, strata=300, seed=22)
        d_bin = cr.simulate_losses(port, single_factor_matrix(), cfg_a)
        d_obl = cr.simulate_losses(
            port, single_factor_matrix(), cfg_b, method="per_obligor"
        )
        se = math.sqrt(d_bin.losses.var() / cfg_a.paths + d_obl.losses.var() / cfg_b.paths)
        assert d_bin.mean() == pytest.approx(d_obl.mean(), abs=3 * se)

    def test_non_psd_matrix_instructs_repair(self):
        bad = CorrelationMatrix(
            labels=list("abc"),
            values=np.array(
                [[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]]
            ),
        )
        port = cr.PortfolioSpec([cr.SubPortfolio("x", 10, 1.0, 0.01, 1.0, 0.2, 0)])
        with pytest.raises(NumericalError, match="repair_to_correlation"):
            cr.simulate_losses(port, bad, cr.SimConfig(paths=100, strata=1, seed=0))

    def test_factor_index_out_of_range(self):
        port = cr.PortfolioSpec([cr.SubPortfolio("x", 10, 1.0, 0.01, 1.0, 0.2, 3)])
        with pytest.raises(DataError, match="out of range"):
            cr.simulate_losses(
                port, uniform_matrix(2, 0.3), cr.SimConfig(paths=100, strata=1, seed=0)
            )

    def test_antithetic_runs(self):
        port = cr.PortfolioSpec([cr.SubPortfolio("a", 100, 1.0, 0.05, 1.0, 0.4, 0)])
        cfg = cr.SimConfig(paths=10_000, strata=100, seed=5, antithetic=True)
        dist = cr.simulate_losses(port, single_factor_matrix(), cfg)
        assert dist.losses.size == 10_000
        with pytest.raises(DataError, match="even"):
            cr.SimConfig(paths=10_001, strata=100, seed=5, antithetic=True).validate()


class TestStratifiedSampler:
    def test_full_stratification_ecdf_bound(self):
        cfg = cr.SimConfig(paths=4096, strata=4096, seed=5)
        z = np.concatenate([blk[:, 0] for _, blk in cr.stratified_normals(cfg, 2)])
        zs = np.sort(z)
        ranks = (np.arange(zs.size) + 1) / zs.size
        assert np.abs(ranks - cr.normal_cdf(zs)).max() <= 1.0 / zs.size + 1e-12

    def test_single_stratum_plain_mc(self):
        cfg = cr.SimConfig(paths=50_000, strata=1, seed=6)
        z = np.concatenate([blk[:, 0] for _, blk in cr.stratified_normals(cfg, 1)])
        # plain draws: mean and sd match N(0,1) at MC accuracy
        assert abs(z.mean()) < 3.0 / math.sqrt(z.size)
        assert z.std() == pytest.approx(1.0, abs=0.02)

    def test_cycle_mean_near_zero(self):
        cfg = cr.SimConfig(paths=10_000, strata=10_000, seed=8)
        z = np.concatenate([blk[:, 0] for _, blk in cr.stratified_normals(cfg, 1)])
        assert abs(z.mean()) < 1e-3

    def test_stratified_mean_matches_plain(self):
        port = cr.PortfolioSpec([cr.SubPortfolio("a", 200, 1.0, 0.03, 1.0, 0.5, 0)])
        plain = cr.simulate_losses(
            port, single_factor_matrix(), cr.SimConfig(paths=40_000, strata=1, seed=13)
        )
        strat = cr.simulate_losses(
            port, single_factor_matrix(),
            cr.SimConfig(paths=40_000, strata=1000, seed=14),
        )
        se = math.sqrt(
            plain.losses.var() / plain.losses.size + strat.losses.var() / strat.losses.size
        )
        assert plain.mean() == pytest.approx(strat.mean(), abs=3 * se)

    def test_validation(self):
        with pytest.raises(DataError, match="paths must be >= strata"):
            cr.SimConfig(paths=10, strata=100).validate()
        with pytest.raises(DataError, match="quantile"):
            cr.SimConfig(paths=100, strata=10, quantile=1.5).validate()


class TestPortfolioSpec:
    def test_json_round_trip(self, tmp_path):
        port = cr.PortfolioSpec(
            [
                cr.SubPortfolio("core", 100, 1.5, 0.02, 0.6, 0.5, 0),
                cr.SubPortfolio("tail", 10, 20.0, 0.10, 0.9, 0.7, 1),
            ]
        )
        path = tmp_path / "port.json"
        import json

        path.write_text(json.dumps(port.to_json_dict()))
        loaded = cr.load_portfolio(str(path))
        assert loaded.sub_portfolios[1].ead == 20.0
        assert loaded.total_ead() == pytest.approx(100 * 1.5 + 10 * 20.0)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"sub_portfolios": [{"name": "x"}]}')
        with pytest.raises(DataError, match="malformed portfolio"):
            cr.load_portfolio(str(path))

    def test_validation_errors(self):
        with pytest.raises(DataError, match="PD"):
            cr.SubPortfolio("x", 1, 1.0, 1.0, 1.0, 0.2, 0).validate()
        with pytest.raises(DataError, match="rho"):
            cr.SubPortfolio("x", 1, 1.0, 0.1, 1.0, 1.0, 0).validate()
        with pytest.raises(DataError, match="EAD must be positive"):
            cr.PortfolioSpec([cr.SubPortfolio("x", 1, 0.0, 0.1, 1.0, 0.2, 0)]).validate()


class TestArtifacts:
    def test_loss_csv_and_var_json(self, tmp_path):
        port = cr.PortfolioSpec([cr.SubPortfolio("a", 50, 1.0, 0.05, 1.0, 0.3, 0)])
        cfg = cr.SimConfig(paths=2000, strata=20, seed=2)
        dist = cr.simulate_losses(port, single_factor_matrix(), cfg)
        csv_path = str(tmp_path / "losses.csv")
        cr.write_loss_distribution_csv(dist, csv_path)
        lines = open(csv_path).read().strip().splitlines()
        assert lines[0] == "loss,weight" and len(lines) == 2001
        report = cr.write_var_report_json(str(tmp_path / "var.json"), dist, cfg)
        assert {"var", "standard_error", "paths", "seed"} <= set(report)
