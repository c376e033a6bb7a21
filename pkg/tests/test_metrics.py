import numpy as np
import pytest
from scipy.stats import norm

from cepnet.channel import (
    QAM16,
    Dataset,
    MultipathConfig,
    build_dataset,
    symbols_to_indices,
)
from cepnet.metrics import (
    BerResult,
    MetricReport,
    Precoder,
    avg_mui_db,
    ber,
    ber_from_received,
    complexity_report,
    detect_qam16,
    mui_db_from_residuals,
    noise_variance,
    rate_from_residuals,
    rate_vs_snr,
    robustness_sweep,
)
from cepnet.learning import loss_db
from cepnet.numerics import SeededRng
from cepnet.solvers import CepnetParams


@pytest.fixture(scope="module")
def small_test_set():
    splits = build_dataset("multipath", (2, 2, 60), MultipathConfig(nt=32, nu=8), 110)
    return splits[2]


def make_params(K=10, alpha=0.01):
    return CepnetParams(w_alpha=np.full(K, alpha), w_beta=np.ones(K))


class TestNoiseVariance:
    def test_zero_db(self):
        assert noise_variance(0.0) == 1.0

    def test_twenty_db(self):
        assert noise_variance(20.0) == pytest.approx(0.01)


class TestPrecoder:
    def test_unknown_name(self):
        with pytest.raises(ValueError):
            Precoder(name="zf")

    def test_cepnet_requires_params(self):
        with pytest.raises(ValueError):
            Precoder(name="cepnet")

    def test_cepnet_k_mismatch(self):
        with pytest.raises(ValueError):
            Precoder(name="cepnet", K=20, params=make_params(K=5))

    def test_solve_shapes(self, small_test_set):
        ds = Dataset(s=small_test_set.s[:4], H=small_test_set.H[:4])
        for p in (
            Precoder(name="rmo_cg", K=3),
            Precoder(name="rmo_gd", K=3),
            Precoder(name="cepnet", K=3, params=make_params(K=3)),
        ):
            X, _ = p.solve(ds.H, ds.s)
            assert X.shape == (4, ds.nt)
            assert np.max(np.abs(np.abs(X) - 1 / np.sqrt(ds.nt))) < 1e-9


class TestRate:
    def test_zero_residual_unit_noise(self):
        R = np.zeros((5, 3))
        rate, ci = rate_from_residuals(R, 0.0)
        assert rate == pytest.approx(1.0)
        assert ci == 0.0

    def test_high_snr_asymptote_slope(self):
        # with zero residual, rate ~ SNR_dB / (10 log10 2); check the
        # increment between consecutive high-SNR points
        R = np.zeros((2, 2))
        slope = 10.0 * np.log10(2.0)
        for lo, hi in ((30, 40), (40, 50)):
            r_lo, _ = rate_from_residuals(R, lo)
            r_hi, _ = rate_from_residuals(R, hi)
            assert r_hi - r_lo == pytest.approx((hi - lo) / slope, rel=1e-3)

    def test_monotone_in_snr(self):
        rng = SeededRng(111)
        R = 0.1 * (rng.standard_normal((50, 4)) + 1j * rng.standard_normal((50, 4)))
        rates = [rate_from_residuals(R, snr)[0] for snr in (-10, 0, 10, 20, 30)]
        assert all(b >= a for a, b in zip(rates, rates[1:]))


class TestDetection:
    def test_exact_points_roundtrip(self):
        assert np.array_equal(detect_qam16(QAM16), np.arange(16))

    def test_tie_breaks_to_lowest_index(self):
        # midpoint between two horizontally adjacent constellation points
        a, b = QAM16[0], QAM16[np.argmin(np.abs(QAM16 - (QAM16[0] + 2 / np.sqrt(10))))]
        mid = (a + b) / 2
        got = detect_qam16(np.array([mid]))[0]
        assert got == min(0, int(np.argmin(np.abs(QAM16 - b))))

    def test_detects_nearest(self):
        rng = SeededRng(112)
        y = QAM16[rng.integers(0, 16, 200)] + 0.01 * (
            rng.standard_normal(200) + 1j * rng.standard_normal(200)
        )
        idx = detect_qam16(y)
        brute = np.array([int(np.argmin(np.abs(QAM16 - v))) for v in y])
        assert np.array_equal(idx, brute)


def awgn_qam16_ber_oracle(snr_db):
    """Semi-analytic Gray-coded 16-QAM AWGN BER.

    Each axis is an independent Gray-coded 4-PAM with levels
    {-3,-1,1,3}/sqrt(10) and per-axis noise sigma^2/2. Enumerate the
    transmitted level x detected level transition probabilities from the
    Gaussian CDF and weight by Gray-bit Hamming distance.
    """
    a = 1.0 / np.sqrt(10.0)
    sigma_axis = np.sqrt(noise_variance(snr_db) / 2.0)
    levels = np.array([-3, -1, 1, 3]) * a
    gray = {-3: (0, 0), -1: (0, 1), 1: (1, 1), 3: (1, 0)}
    bounds = np.array([-np.inf, -2 * a, 0.0, 2 * a, np.inf])
    total = 0.0
    for tx in levels:
        cdf = norm.cdf(bounds, loc=tx, scale=sigma_axis)
        probs = np.diff(cdf)
        for rx, p in zip(levels, probs):
            tb, rb = gray[round(tx / a)], gray[round(rx / a)]
            total += p * (int(tb[0] != rb[0]) + int(tb[1] != rb[1]))
    return total / (4 * 2)  # 4 equiprobable levels, 2 bits per axis


class TestBer:
    def test_noiseless_zero(self):
        rng = SeededRng(113)
        s = QAM16[rng.integers(0, 16, (20, 4))]
        res = ber_from_received(s, symbols_to_indices(s), 300.0, rng, min_errors=0)
        assert res.ber == 0.0

    def test_matches_awgn_oracle(self):
        # precoding bypassed: y = s + n, compare against the Gaussian-CDF
        # transition-matrix oracle within 3 sigma binomial error
        rng = SeededRng(114)
        n = 40000
        s = QAM16[rng.integers(0, 16, (n, 1))]
        ds = Dataset(s=s, H=np.ones((n, 1, 1), dtype=complex))
        for snr in (10.0, 15.0):
            res = ber(None, ds, snr, rng, min_errors=100)
            want = awgn_qam16_ber_oracle(snr)
            sigma = np.sqrt(want * (1 - want) / res.bits)
            assert res.reliable
            assert abs(res.ber - want) < 3 * sigma

    def test_unreliable_flag(self):
        rng = SeededRng(115)
        s = QAM16[rng.integers(0, 16, (5, 2))]
        res = ber_from_received(
            s, symbols_to_indices(s), 300.0, rng, min_errors=100, max_noise_reps=2
        )
        assert not res.reliable

    def test_ci_zero_when_no_bits(self):
        assert BerResult(ber=0.0, errors=0, bits=0, reliable=False).ci == 0.0


class TestMuiMetric:
    def test_matches_loss_db_for_cepnet(self, small_test_set):
        params = make_params(K=8, alpha=0.008)
        p = Precoder(name="cepnet", K=8, params=params)
        got = avg_mui_db(p, small_test_set)
        want = loss_db(params, small_test_set)
        assert got == pytest.approx(want, abs=1e-10)

    def test_perfect_fit_sentinel(self):
        assert mui_db_from_residuals(np.zeros((3, 2))) == float("-inf")

    def test_unit_residual(self):
        assert mui_db_from_residuals(np.ones((4, 4))) == pytest.approx(0.0)


class TestComplexity:
    def test_eval_counts(self, small_test_set):
        ds = Dataset(s=small_test_set.s[:10], H=small_test_set.H[:10])
        K = 6
        precoders = [
            Precoder(name="rmo_cg", K=K),
            Precoder(name="cepnet", K=K, params=make_params(K=K)),
        ]
        report = complexity_report(precoders, ds)
        cg_obj, _ = report.value(solver="rmo_cg", metric="objective_evals_per_solve")
        net_obj, _ = report.value(solver="cepnet", metric="objective_evals_per_solve")
        net_grad, _ = report.value(solver="cepnet", metric="grad_evals_per_solve")
        assert net_obj == 0.0
        assert net_grad == float(K)
        assert cg_obj >= K  # at least one line-search probe per iteration
        assert net_obj < cg_obj


class TestSweeps:
    def test_rate_vs_snr_report_shape(self, small_test_set):
        ds = Dataset(s=small_test_set.s[:20], H=small_test_set.H[:20])
        p = Precoder(name="cepnet", K=5, params=make_params(K=5))
        report = rate_vs_snr([p], ds, [0.0, 10.0], rng=SeededRng(116), with_ber=False)
        assert len(report.select(metric="rate")) == 2
        assert len(report.select(metric="mui_db")) == 1

    def test_robustness_eps_zero_matches_clean(self, small_test_set):
        ds = Dataset(s=small_test_set.s[:20], H=small_test_set.H[:20])
        p = Precoder(name="cepnet", K=5, params=make_params(K=5))
        report = robustness_sweep([p], ds, [0.0], 20.0, rng=SeededRng(117))
        mui, _ = report.value(solver="cepnet", metric="mui_db", eps=0.0)
        assert mui == pytest.approx(avg_mui_db(p, ds), abs=1e-10)

    def test_robustness_monotone_degradation(self, small_test_set):
        ds = Dataset(s=small_test_set.s[:30], H=small_test_set.H[:30])
        p = Precoder(name="cepnet", K=5, params=make_params(K=5))
        report = robustness_sweep(
            [p], ds, [0.1, 0.4], 20.0, rng=SeededRng(118), min_errors=0
        )
        r_low, _ = report.value(solver="cepnet", metric="rate", eps=0.1)
        r_high, _ = report.value(solver="cepnet", metric="rate", eps=0.4)
        assert r_low >= r_high

    def test_eps_grid_validation(self, small_test_set):
        p = Precoder(name="cepnet", K=5, params=make_params(K=5))
        with pytest.raises(ValueError):
            robustness_sweep([p], small_test_set, [0.0, 1.5], 20.0)


class TestMetricReport:
    def test_csv_roundtrip_text(self, tmp_path):
        report = MetricReport()
        report.add("rmo_cg", "mui_db", -12.5, 0.25, 100, snr_db=20.0)
        path = tmp_path / "report.csv"
        report.to_csv(path)
        text = path.read_text()
        lines = text.strip().split("\n")
        assert lines[0].startswith("#")  # convention note
        assert lines[1] == ",".join(MetricReport.COLUMNS)
        assert "rmo_cg" in lines[2]

    def test_value_requires_unique_cell(self):
        report = MetricReport()
        report.add("rmo_cg", "rate", 1.0, 0.0, 10, snr_db=0.0)
        report.add("rmo_cg", "rate", 2.0, 0.0, 10, snr_db=10.0)
        with pytest.raises(KeyError):
            report.value(solver="rmo_cg", metric="rate")
        v, _ = report.value(solver="rmo_cg", metric="rate", snr_db=10.0)
        assert v == 2.0
