import numpy as np
import pytest

from artcoord.correlation import (
    ChannelDelayCorrelationMatrix,
    NormStats,
    acf_from_track,
    acf_to_track,
    apply_norm,
    apply_stats_array,
    build_acf,
    correlation_vector,
    delayed_correlation,
    fit_norm_stats,
    fit_stats_array,
    load_acf,
    pair_order,
    save_acf,
)
from artcoord.features import FeatureTrack


def triple_loop_acf(x, max_delay):
    """Naive reference: explicit sums over channels, channels, delays."""
    m, n = x.shape
    out = np.zeros((m * m, max_delay + 1))
    for i in range(m):
        for j in range(m):
            for d in range(max_delay + 1):
                acc = 0.0
                for t in range(n - d):
                    acc += x[i, t] * x[j, t + d]
                out[i * m + j, d] = acc / (n - d)
    return out


class TestDelayedCorrelation:
    def test_worked_example(self):
        assert delayed_correlation([1, 2, 3, 4], [1, 0, 1, 0], 1) == pytest.approx(2 / 3)

    def test_zero_signal(self):
        assert delayed_correlation([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], 2) == 0.0

    def test_constant_unit_signal(self):
        assert delayed_correlation([1, 1, 1, 1], [1, 1, 1, 1], 0) == 1.0

    def test_delay_out_of_range(self):
        with pytest.raises(ValueError, match="delay"):
            delayed_correlation([1, 2, 3], [1, 2, 3], 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="equal-length"):
            delayed_correlation([1, 2, 3], [1, 2], 0)


class TestCorrelationVector:
    def test_worked_example(self):
        v = correlation_vector([1, 0, 1, 0], [0, 1, 0, 1], 2)
        np.testing.assert_allclose(v, [0.0, 2 / 3, 0.0])

    def test_zero_max_delay(self):
        v = correlation_vector([1.0, 2.0], [3.0, 4.0], 0)
        assert v.shape == (1,)
        assert v[0] == pytest.approx((3 + 8) / 2)

    def test_autocorrelation_peaks_at_zero_lag(self):
        # positively autocorrelated smooth signal: lag 0 dominates the sweep.
        # (A stationary smoothed-noise signal is used rather than a plain
        # sinusoid: with the N-d divisor, dropping the near-zero boundary
        # products of a sinusoid can nudge small positive lags fractionally
        # above lag 0.)
        rng = np.random.default_rng(42)
        x = np.zeros(5000)
        for t in range(1, x.size):
            x[t] = 0.95 * x[t - 1] + rng.normal()
        x = (x - x.mean()) / x.std()
        v = correlation_vector(x, x, 30)
        assert np.argmax(v) == 0
        assert v[0] == pytest.approx(1.0, abs=1e-9)

    def test_too_large_delay(self):
        with pytest.raises(ValueError, match="max delay"):
            correlation_vector([1, 2, 3], [1, 2, 3], 3)


class TestBuildAcf:
    def test_shape_8_channels(self):
        rng = np.random.default_rng(0)
        acf = build_acf(rng.normal(size=(8, 1000)), 50)
        assert acf.shape == (64, 51)
        assert acf.n_channels == 8 and acf.max_delay == 50

    def test_shape_12_channels(self):
        rng = np.random.default_rng(1)
        acf = build_acf(rng.normal(size=(12, 1000)), 50)
        assert acf.shape == (144, 51)

    def test_accepts_feature_track(self):
        rng = np.random.default_rng(2)
        track = FeatureTrack(data=rng.normal(size=(3, 200)).astype(np.float32), frame_rate=100.0)
        acf = build_acf(track, 10)
        assert acf.shape == (9, 11)

    def test_white_noise_single_channel(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(1, 10_000))
        x = (x - x.mean()) / x.std()
        acf = build_acf(x, 20)
        assert acf.data[0, 0] == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.abs(acf.data[0, 1:]) < 0.05)

    def test_row_order_is_row_major(self):
        assert pair_order(3) == ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2))
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 50))
        acf = build_acf(x, 5)
        for k, (i, j) in enumerate(acf.row_order):
            np.testing.assert_allclose(acf.data[k], correlation_vector(x[i], x[j], 5), atol=1e-12)

    def test_lag_zero_symmetry(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 80))
        acf = build_acf(x, 6)
        m = 4
        for i in range(m):
            for j in range(m):
                assert acf.data[i * m + j, 0] == acf.data[j * m + i, 0]

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            m = int(rng.integers(1, 5))
            d = int(rng.integers(0, 21))
            n = int(rng.integers(d + 1, 201))
            x = rng.normal(size=(m, n))
            ours = build_acf(x, d).data
            oracle = triple_loop_acf(x, d)
            np.testing.assert_allclose(ours, oracle, rtol=1e-6, atol=1e-12)

    def test_shift_moves_cross_correlation_peak(self):
        # deterministic pulse train pair: delaying one channel by s frames
        # moves the cross-correlation peak to lag s
        n = 600
        base = np.zeros(n)
        base[::50] = 1.0
        for shift in (3, 11, 24):
            delayed = np.zeros(n)
            delayed[shift:] = base[: n - shift]
            v = correlation_vector(base, delayed, 40)
            assert int(np.argmax(v)) == shift

    def test_too_short_segment(self):
        with pytest.raises(ValueError, match="too short"):
            build_acf(np.zeros((2, 50)), 50)


class TestNormStats:
    def test_single_matrix(self):
        rng = np.random.default_rng(7)
        acf = build_acf(rng.normal(size=(2, 60)), 4)
        stats = fit_norm_stats([acf])
        np.testing.assert_array_equal(stats.mean, acf.data)
        np.testing.assert_array_equal(stats.std, 0.0)

    def test_opposite_pair(self):
        rng = np.random.default_rng(8)
        a = build_acf(rng.normal(size=(2, 60)), 4)
        neg = ChannelDelayCorrelationMatrix(data=-a.data, n_channels=2, max_delay=4)
        stats = fit_norm_stats([a, neg])
        np.testing.assert_allclose(stats.mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(stats.std, np.abs(a.data), atol=1e-12)
        # applying to A gives sign(A) wherever A is non-degenerate
        normed = apply_norm(a, stats)
        live = stats.std >= 1e-8
        np.testing.assert_allclose(normed.data[live], np.sign(a.data)[live], atol=1e-9)

    def test_identical_matrices_zero_std(self):
        rng = np.random.default_rng(9)
        acf = build_acf(rng.normal(size=(2, 60)), 4)
        stats = fit_norm_stats([acf] * 5)
        np.testing.assert_allclose(stats.std, 0.0, atol=1e-12)
        # mean matrix normalizes to zero (degenerate cells map to 0 too)
        np.testing.assert_array_equal(apply_norm(acf, stats).data, 0.0)

    def test_degenerate_cells_map_to_zero(self):
        stats = NormStats(mean=np.array([[1.0, 2.0]]), std=np.array([[0.0, 4.0]]))
        x = np.array([[9.0, 10.0]])
        np.testing.assert_allclose(apply_stats_array(x, stats), [[0.0, 2.0]])

    def test_roundtrip_statistics(self):
        rng = np.random.default_rng(10)
        acfs = [build_acf(rng.normal(size=(3, 120)), 6) for _ in range(40)]
        stats = fit_norm_stats(acfs)
        normed = np.stack([apply_norm(a, stats).data for a in acfs])
        live = stats.std >= 1e-8
        assert np.all(np.abs(normed.mean(axis=0)[live]) < 1e-5)
        np.testing.assert_allclose(normed.std(axis=0)[live], 1.0, atol=1e-4)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(11)
        a = build_acf(rng.normal(size=(2, 60)), 4)
        b = build_acf(rng.normal(size=(3, 60)), 4)
        with pytest.raises(ValueError, match="shape"):
            fit_norm_stats([a, b])
        with pytest.raises(ValueError, match="shape"):
            apply_norm(b, fit_norm_stats([a]))

    def test_empty_list(self):
        with pytest.raises(ValueError, match="empty"):
            fit_norm_stats([])

    def test_fit_stats_array_population_std(self):
        stack = np.array([[[1.0]], [[3.0]]])
        stats = fit_stats_array(stack)
        assert stats.mean[0, 0] == 2.0
        assert stats.std[0, 0] == 1.0  # population, not sample


class TestAcfCache:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(12)
        acf = build_acf(rng.normal(size=(4, 300)), 12)
        path = tmp_path / "seg.acft"
        save_acf(path, acf)
        loaded = load_acf(path)
        assert loaded.n_channels == 4 and loaded.max_delay == 12
        np.testing.assert_allclose(loaded.data, acf.data, atol=1e-6)

    def test_track_frame_rate_zero_marks_cache(self):
        rng = np.random.default_rng(13)
        acf = build_acf(rng.normal(size=(2, 60)), 3)
        track = acf_to_track(acf)
        assert track.frame_rate == 0.0
        assert track.channel_names[1] == "r00x01"
        back = acf_from_track(track)
        assert back.n_channels == 2

    def test_non_square_rows_rejected(self):
        track = FeatureTrack(data=np.zeros((5, 4), dtype=np.float32), frame_rate=0.0)
        with pytest.raises(ValueError, match="square"):
            acf_from_track(track)
