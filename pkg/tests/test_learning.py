import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from onebitml.core import SystemConfig, draw_rayleigh_channel, effective_channel, enumerate_symbol_book
from onebitml.exceptions import ConfigurationError, ContractError
from onebitml.learning import (
    TrainConfig,
    count_undertrained,
    denoise,
    dither_noise_equivalent,
    empirical_plus_frequency,
    learn_dl,
    learn_idl,
    learn_naive,
    load_table_csv,
    observe_training,
    save_table_csv,
)


@pytest.fixture(scope="module")
def big_system():
    cfg = SystemConfig(32, 4, 4)
    return cfg, enumerate_symbol_book(cfg)


def _channel(cfg, seed):
    return draw_rayleigh_channel(cfg, np.random.default_rng(seed))


class TestTrainConfig:
    def test_subblock_length_and_default_clamp(self):
        t = TrainConfig(30, 3, 0.5)
        assert t.subblock_length == 10
        assert t.epsilon == pytest.approx(1 / 20)
        assert TrainConfig(30).epsilon == pytest.approx(1 / 60)

    @pytest.mark.parametrize("kwargs", [
        dict(reps_per_symbol=30, num_subblocks=4),
        dict(reps_per_symbol=0),
        dict(reps_per_symbol=30, dither_step=-1.0),
        dict(reps_per_symbol=30, clamp_epsilon=0.5),
        dict(reps_per_symbol=30, clamp_epsilon=0.0),
        dict(reps_per_symbol=30, noise_power_for_denoise=0.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrainConfig(**kwargs)


class TestEmpiricalFrequency:
    def test_fraction(self):
        obs = np.array([1] * 18 + [-1] * 12)
        assert empirical_plus_frequency(obs) == pytest.approx(0.6)

    def test_all_plus(self):
        assert empirical_plus_frequency(np.ones(7)) == 1.0

    def test_complement(self):
        obs = np.random.default_rng(0).choice([-1, 1], size=31)
        assert empirical_plus_frequency(obs) + empirical_plus_frequency(-obs) == pytest.approx(1.0)

    def test_empty(self):
        with pytest.raises(ContractError):
            empirical_plus_frequency(np.array([]))


class TestDenoise:
    def test_half_is_fixed_point(self):
        for sigma2, n0 in [(0.0, 1.0), (3.0, 0.2), (10.0, 5.0)]:
            psi, p = denoise(0.5, sigma2, n0, 0.01)
            assert psi == 0.0 and p == 0.5

    def test_zero_dither_is_clamped_identity(self):
        p_hat = np.array([0.0, 0.01, 0.3, 0.97, 1.0])
        _, refined = denoise(p_hat, 0.0, 0.7, 0.05)
        np.testing.assert_allclose(refined, np.clip(p_hat, 0.05, 0.95), atol=1e-14)

    def test_factor_two(self):
        psi, refined = denoise(norm.cdf(1.0), 3.0, 1.0, 0.01)
        assert psi == pytest.approx(2.0, abs=1e-12)
        assert refined == pytest.approx(norm.cdf(2.0), abs=1e-12)

    def test_round_trip_grid(self):
        worst = 0.0
        for ratio in (0.0, 1.0, 3.0, 10.0):
            for psi in np.linspace(-4, 4, 81):
                n0 = 0.37
                p_hat = norm.cdf(psi / np.sqrt(1 + ratio))
                psi_hat, _ = denoise(p_hat, ratio * n0, n0, 1e-9)
                worst = max(worst, abs(psi_hat - psi))
        assert worst < 1e-7

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 20.0), st.floats(0.01, 10.0))
    def test_monotone(self, a, b, sigma2, n0):
        eps = 0.02
        lo, hi = sorted((a, b))
        _, p_lo = denoise(lo, sigma2, n0, eps)
        _, p_hi = denoise(hi, sigma2, n0, eps)
        assert p_lo <= p_hi
        if eps < lo < hi < 1 - eps and hi - lo > 1e-9:
            assert p_lo < p_hi

    def test_estimated_noise_scales_psi(self):
        sigma2, n0, n0_hat = 1.0, 0.5, 0.2
        psi, _ = denoise(0.8, sigma2, n0, 0.01)
        psi_hat, _ = denoise(0.8, sigma2, n0_hat, 0.01)
        assert psi_hat / psi == pytest.approx(np.sqrt((1 + sigma2 / n0_hat) / (1 + sigma2 / n0)))

    def test_dither_units(self):
        np.testing.assert_array_equal(dither_noise_equivalent([0.0, 0.25]), [0.0, 0.5])


class TestNaive:
    def test_high_snr_mostly_saturated(self, big_system):
        cfg, book = big_system
        cfg = cfg.with_snr_db(30.0)
        table = learn_naive(book, _channel(cfg, 1), cfg, TrainConfig(30), np.random.default_rng(2))
        frac = np.mean((table.p_plus == 0) | (table.p_plus == 1))
        assert frac > 0.9
        assert table.p_plus.shape == (256, 64)

    def test_deterministic(self, big_system):
        cfg, book = big_system
        H = _channel(cfg, 3)
        a = learn_naive(book, H, cfg, TrainConfig(30), np.random.default_rng(4))
        b = learn_naive(book, H, cfg, TrainConfig(30), np.random.default_rng(4))
        np.testing.assert_array_equal(a.p_plus, b.p_plus)

    def test_converges_to_true_likelihood(self):
        cfg = SystemConfig.from_snr_db(4, 1, 4, snr_db=0.0)
        book = enumerate_symbol_book(cfg)
        H = _channel(cfg, 5)
        n = 100_000
        table = learn_naive(book, H, cfg, TrainConfig(n), np.random.default_rng(6))
        truth = norm.cdf(effective_channel(H, book, cfg))
        se = np.sqrt(truth * (1 - truth) / n)
        assert np.all(np.abs(table.p_plus - truth) <= 3 * se + 1e-12)


class TestDL:
    def test_zero_dither_is_clamped_naive(self, big_system):
        cfg, book = big_system
        cfg = cfg.with_snr_db(12.0)
        H = _channel(cfg, 7)
        train = TrainConfig(30)
        naive = learn_naive(book, H, cfg, train, np.random.default_rng(8))
        dl = learn_dl(book, H, cfg, train, 0.0, np.random.default_rng(8))
        np.testing.assert_array_equal(dl.raw_plus, naive.p_plus)
        np.testing.assert_allclose(dl.p_plus, np.clip(naive.p_plus, 1 / 60, 1 - 1 / 60), atol=1e-12)

    def test_equals_idl_single_subblock(self, big_system):
        cfg, book = big_system
        cfg = cfg.with_snr_db(15.0)
        H = _channel(cfg, 9)
        dl = learn_dl(book, H, cfg, TrainConfig(30), 0.5, np.random.default_rng(10))
        idl, _ = learn_idl(book, H, cfg, TrainConfig(30, 1, 0.0, initial_dither_var=0.5),
                           np.random.default_rng(10))
        assert np.array_equal(dl.p_plus, idl.p_plus)
        assert np.array_equal(dl.log_plus, idl.log_plus)
        assert np.array_equal(dl.log_minus, idl.log_minus)

    def test_entries_strictly_inside(self, big_system):
        cfg, book = big_system
        cfg = cfg.with_snr_db(30.0)
        dl = learn_dl(book, _channel(cfg, 11), cfg, TrainConfig(30), 0.5, np.random.default_rng(12))
        assert np.all(np.isfinite(dl.log_plus)) and np.all(np.isfinite(dl.log_minus))
        # finite log of both outcomes means neither probability is 0 or 1
        assert np.all(dl.log_plus <= 0) and np.all(dl.log_minus <= 0)
        assert np.all(np.logaddexp(dl.log_plus, dl.log_minus) == pytest.approx(0.0, abs=1e-12))
        assert np.all((dl.p_plus >= 0) & (dl.p_plus <= 1))

    def test_statistical_consistency(self):
        cfg = SystemConfig.from_snr_db(8, 1, 4, snr_db=0.0)
        book = enumerate_symbol_book(cfg)
        H = _channel(cfg, 13)
        n = 100_000
        sigma2 = cfg.noise_power
        table = learn_dl(book, H, cfg, TrainConfig(n), sigma2, np.random.default_rng(14))
        psi = effective_channel(H, book, cfg)
        truth = norm.cdf(psi)
        # delta method through denoise: refined = Phi(c q), q = Phi^-1(p_d)
        c = np.sqrt(1 + 2 * sigma2 / cfg.noise_power)
        p_d = norm.cdf(psi / c)
        q = psi / c
        se = np.sqrt(p_d * (1 - p_d) / n) * c * norm.pdf(c * q) / norm.pdf(q)
        inside = np.abs(table.p_plus - truth) <= 3 * se
        assert inside.mean() >= 0.95


class TestIDL:
    def setup_method(self):
        self.cfg = SystemConfig.from_snr_db(32, 4, 4, snr_db=20.0)
        self.book = enumerate_symbol_book(self.cfg)
        self.H = _channel(self.cfg, 15)
        self.train = TrainConfig(30, 3, 0.5)

    def test_requires_divisor(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(30, 7, 0.5)

    def test_variance_updates_follow_indicator(self):
        rec = observe_training(self.book.vectors_real, self.H, self.cfg, self.train,
                               np.random.default_rng(16))
        hist = rec.subblock_variances
        assert np.all(hist[:, 0] == 0.0)
        final = rec.final_state.variances
        for n in range(3):
            block = rec.observations[:, n * 10:(n + 1) * 10]
            flat = np.all(block == 1, axis=1) | np.all(block == -1, axis=1)
            nxt = hist[:, n + 1] if n < 2 else final
            np.testing.assert_array_equal(nxt - hist[:, n], np.where(flat, 0.5, 0.0))
        np.testing.assert_array_equal(
            rec.final_state.indicators,
            (np.all(rec.observations[:, 20:] == 1, axis=1) | np.all(rec.observations[:, 20:] == -1, axis=1)),
        )
        # at 20 dB many first sub-blocks are flat, some are not
        first_flat = hist[:, 1] > 0
        assert 0.2 < first_flat.mean() < 0.95

    def test_indicator_can_revert(self):
        rec = observe_training(self.book.vectors_real, self.H, self.cfg, TrainConfig(30, 5, 0.5),
                               np.random.default_rng(17))
        steps = np.diff(np.concatenate([rec.subblock_variances,
                                        rec.final_state.variances[:, None]], axis=1), axis=1)
        assert set(np.unique(steps)) <= {0.0, 0.5}
        # some antenna stalls and then grows again
        stalled_then_grew = (steps[..., :-1] == 0) & (steps[..., 1:] == 0.5)
        assert stalled_then_grew.any()

    def test_entry_is_mean_of_subblock_refinements(self):
        rng_a, rng_b = np.random.default_rng(18), np.random.default_rng(18)
        table, state = learn_idl(self.book, self.H, self.cfg, self.train, rng_a)
        rec = observe_training(self.book.vectors_real, self.H, self.cfg, self.train, rng_b)
        n0 = self.cfg.noise_power
        expected = np.zeros_like(table.p_plus)
        for k in range(0, 256, 37):
            blk = rec.block(k)
            for n in range(3):
                sub = blk.subblock(n)
                for i in range(64):
                    p_hat = np.mean(sub[:, i] == 1)
                    p_hat = min(max(p_hat, 0.05), 0.95)
                    var = blk.per_subblock_variances[n, i]
                    psi = np.sqrt(1 + 2 * var / n0) * norm.ppf(p_hat)
                    expected[k, i] += norm.cdf(psi) / 3
            np.testing.assert_allclose(table.p_plus[k], expected[k], rtol=1e-12, atol=1e-15)
        np.testing.assert_array_equal(state.variances, rec.final_state.variances)
        np.testing.assert_allclose(np.exp(table.log_plus), table.p_plus, rtol=1e-10, atol=1e-300)
        np.testing.assert_allclose(np.exp(table.log_minus), 1 - table.p_plus, rtol=1e-9, atol=1e-15)

    def test_raw_frequency_is_whole_block(self):
        table, _ = learn_idl(self.book, self.H, self.cfg, self.train, np.random.default_rng(19))
        rec = observe_training(self.book.vectors_real, self.H, self.cfg, self.train,
                               np.random.default_rng(19))
        np.testing.assert_array_equal(table.raw_plus, np.mean(rec.observations == 1, axis=1))

    def test_entries_finite_logs(self):
        cfg = self.cfg.with_snr_db(30.0)
        table, _ = learn_idl(self.book, self.H, cfg, self.train, np.random.default_rng(20))
        assert np.all(np.isfinite(table.log_plus)) and np.all(np.isfinite(table.log_minus))


class TestUndertrained:
    def test_none(self):
        assert count_undertrained(np.full((4, 6), 0.5)) == 0.0

    def test_half_row(self):
        raw = np.full((1, 64), 0.4)
        raw[0, :32] = 0.0
        assert count_undertrained(raw) == 32

    def test_average_over_rows(self):
        raw = np.array([[0.0, 1.0, 0.5], [0.2, 0.5, 1.0]])
        assert count_undertrained(raw) == 1.5

    def test_domain(self):
        with pytest.raises(ContractError):
            count_undertrained(np.array([[1.2]]))

    def test_naive_high_snr_near_2nr(self, big_system):
        cfg, book = big_system
        cfg = cfg.with_snr_db(30.0)
        counts = [count_undertrained(learn_naive(book, _channel(cfg, s), cfg, TrainConfig(30),
                                                 np.random.default_rng(100 + s)).raw_plus)
                  for s in range(5)]
        assert 58 < np.mean(counts) <= 64

    def test_ordering_at_25db(self, big_system):
        cfg, book = big_system
        cfg = cfg.with_snr_db(25.0)
        sums = np.zeros(4)
        for s in range(200):
            H = _channel(cfg, 1000 + s)
            rng = np.random.default_rng(5000 + s)
            sums += [
                count_undertrained(learn_naive(book, H, cfg, TrainConfig(30), rng).raw_plus),
                count_undertrained(learn_dl(book, H, cfg, TrainConfig(30), 0.5, rng).raw_plus),
                count_undertrained(learn_idl(book, H, cfg, TrainConfig(30, 3, 0.5), rng)[0].raw_plus),
                count_undertrained(learn_idl(book, H, cfg, TrainConfig(30, 5, 0.5), rng)[0].raw_plus),
            ]
        naive, dl, idl3, idl5 = sums / 200
        assert naive > dl > idl3 > idl5


def test_table_csv_round_trip(tmp_path, big_system):
    cfg, book = big_system
    table, _ = learn_idl(book, _channel(cfg, 21), cfg, TrainConfig(30, 3, 0.5),
                         np.random.default_rng(22))
    path = tmp_path / "table.csv"
    save_table_csv(table, path)
    loaded = load_table_csv(path)
    np.testing.assert_array_equal(loaded.p_plus, table.p_plus)
    assert loaded.method == "idl"
    assert loaded.train.num_subblocks == 3
    lines = path.read_text().splitlines()
    assert lines[2].startswith("k,p0,p1")
    assert len(lines) == 3 + 256
