import numpy as np
import pytest

from artcoord import featio
from artcoord.errors import FormatError
from artcoord.features import (
    GLOTTAL_CHANNELS,
    TV_CHANNELS,
    FeatureTrack,
    assemble_tv8,
    load_tv_track,
    normalize_channels,
    segment_track,
)


def track(data, frame_rate=100.0, names=()):
    return FeatureTrack(data=np.asarray(data, dtype=np.float32), frame_rate=frame_rate,
                        channel_names=tuple(names))


class TestFeatureTrack:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            track([[1.0, np.nan]])

    def test_rejects_duplicate_names(self):
        with pytest.raises(ValueError, match="unique"):
            track([[1, 2], [3, 4]], names=("a", "a"))

    def test_auto_names(self):
        t = track([[1, 2], [3, 4]])
        assert t.channel_names == ("ch00", "ch01")

    def test_duration(self):
        assert track(np.zeros((6, 500))).duration == pytest.approx(5.0)


class TestNormalize:
    def test_three_point_channel(self):
        # population std of [1,2,3] is sqrt(2/3); normalized = +-sqrt(3/2)
        t = normalize_channels(track([[1.0, 2.0, 3.0]]))
        expected = [-np.sqrt(1.5), 0.0, np.sqrt(1.5)]
        np.testing.assert_allclose(t.data[0], expected, atol=1e-6)

    def test_constant_channel_zeros(self):
        t = normalize_channels(track([[5.0, 5.0, 5.0]]))
        np.testing.assert_array_equal(t.data[0], [0.0, 0.0, 0.0])

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        t = track(rng.normal(2.0, 3.0, size=(4, 400)))
        once = normalize_channels(t)
        twice = normalize_channels(once)
        np.testing.assert_allclose(once.data, twice.data, atol=1e-6)

    def test_output_statistics(self):
        rng = np.random.default_rng(2)
        data = rng.normal(5.0, 10.0, size=(6, 2000))
        data[3] = 7.25  # degenerate channel
        t = normalize_channels(track(data))
        out = t.data.astype(np.float64)
        mu = out.mean(axis=1)
        sd = out.std(axis=1)
        assert np.all(np.abs(mu) < 1e-6)
        assert sd[3] == 0.0
        live = [0, 1, 2, 4, 5]
        np.testing.assert_allclose(sd[live], 1.0, atol=1e-6)


def brute_force_segments(n_frames, frame_rate):
    """Independent window enumerator for the segmentation rules."""
    min_f = int(round(10.0 * frame_rate))
    seg_f = int(round(20.0 * frame_rate))
    shift_f = int(round(5.0 * frame_rate))
    if n_frames < min_f:
        return []
    if n_frames <= seg_f:
        return [(0, n_frames)]
    spans = []
    start = 0
    while start + seg_f <= n_frames:
        spans.append((start, start + seg_f))
        start += shift_f
    return spans


class TestSegmentation:
    def test_45_second_recording(self):
        t = track(np.zeros((2, 4500)))
        segs = segment_track(t, label=1, recording_id="rec")
        assert len(segs) == 6
        assert [s.start_time for s in segs] == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0]
        assert all(s.duration == pytest.approx(20.0) for s in segs)
        assert all(s.label == 1 and s.recording_id == "rec" for s in segs)

    def test_15_second_recording_kept_whole(self):
        segs = segment_track(track(np.zeros((2, 1500))))
        assert len(segs) == 1
        assert segs[0].duration == pytest.approx(15.0)
        assert segs[0].track.n_frames == 1500

    def test_8_second_recording_discarded(self):
        assert segment_track(track(np.zeros((2, 800)))) == []

    def test_boundaries(self):
        assert len(segment_track(track(np.zeros((1, 999))))) == 0
        assert len(segment_track(track(np.zeros((1, 1000))))) == 1
        assert len(segment_track(track(np.zeros((1, 2000))))) == 1
        assert len(segment_track(track(np.zeros((1, 2001))))) == 1
        assert len(segment_track(track(np.zeros((1, 2500))))) == 2

    def test_matches_brute_force_over_grid(self):
        # all durations 0..300 s on a 0.1 s grid at 100 Hz
        for tenth in range(0, 3001):
            n = tenth * 10
            if n == 0:
                continue
            segs = segment_track(track(np.zeros((1, n))))
            expected = brute_force_segments(n, 100.0)
            got = [(int(round(s.start_time * 100)), int(round(s.end_time * 100))) for s in segs]
            assert got == expected, f"duration {tenth / 10}s"

    def test_closed_form_count(self):
        for tenth in range(1, 3001):
            seconds = tenth / 10
            n = tenth * 10
            count = len(segment_track(track(np.zeros((1, n)))))
            if seconds < 10:
                assert count == 0
            elif seconds <= 20:
                assert count == 1
            else:
                assert count == int(np.floor((seconds - 20) / 5)) + 1

    def test_segment_frames_consistent_with_duration(self):
        segs = segment_track(track(np.zeros((3, 3456))))
        for s in segs:
            assert abs(s.track.n_frames - s.duration * 100.0) <= 1


class TestAssembleTv8:
    @staticmethod
    def tv(n_frames, frame_rate=100.0):
        rng = np.random.default_rng(0)
        return track(rng.normal(size=(6, n_frames)), frame_rate, TV_CHANNELS)

    @staticmethod
    def glottal(n_frames, frame_rate=100.0):
        p = np.linspace(0, 1, n_frames, dtype=np.float32)
        return track(np.vstack([p, 1 - p]), frame_rate, GLOTTAL_CHANNELS)

    def test_equal_lengths(self):
        out = assemble_tv8(self.tv(100), self.glottal(100))
        assert out.data.shape == (8, 100)
        assert out.channel_names == TV_CHANNELS + GLOTTAL_CHANNELS

    def test_trim_to_min(self):
        out = assemble_tv8(self.tv(101), self.glottal(100))
        assert out.data.shape == (8, 100)

    def test_rate_mismatch(self):
        with pytest.raises(ValueError, match="frame rate"):
            assemble_tv8(self.tv(100, 100.0), self.glottal(100, 50.0))

    def test_frame_count_gap_too_large(self):
        with pytest.raises(ValueError, match="too far apart"):
            assemble_tv8(self.tv(103), self.glottal(100))

    def test_channel_count_validation(self):
        bad = track(np.zeros((5, 100)), 100.0, TV_CHANNELS[:5])
        with pytest.raises(ValueError, match="TV channels"):
            assemble_tv8(bad, self.glottal(100))


class TestAcftFormat:
    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        t = track(rng.normal(size=(6, 500)), 100.0, TV_CHANNELS)
        path = tmp_path / "t.acft"
        featio.write_track(path, t)
        loaded = featio.read_track(path)
        np.testing.assert_array_equal(loaded.data, t.data)
        assert loaded.frame_rate == 100.0
        assert loaded.channel_names == TV_CHANNELS
        # second write is byte-identical
        featio.write_track(tmp_path / "t2.acft", loaded)
        assert (tmp_path / "t.acft").read_bytes() == (tmp_path / "t2.acft").read_bytes()

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            featio.track_from_bytes(b"NOPE" + b"\x00" * 64)

    def test_truncated(self, tmp_path):
        t = track(np.zeros((2, 50)))
        raw = featio.track_to_bytes(t)
        with pytest.raises(FormatError, match="truncated"):
            featio.track_from_bytes(raw[:-8])


class TestLoadTvTrack:
    def test_roundtrip_and_duration(self, tmp_path):
        rng = np.random.default_rng(4)
        t = track(rng.normal(size=(6, 500)), 100.0, TV_CHANNELS)
        path = tmp_path / "tv.acft"
        featio.write_track(path, t)
        loaded = load_tv_track(path)
        np.testing.assert_array_equal(loaded.data, t.data)
        assert loaded.duration == pytest.approx(5.0)

    def test_reorders_to_canonical(self, tmp_path):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(6, 40)).astype(np.float32)
        shuffled = (TV_CHANNELS[3], TV_CHANNELS[0], TV_CHANNELS[1],
                    TV_CHANNELS[5], TV_CHANNELS[2], TV_CHANNELS[4])
        path = tmp_path / "tv.acft"
        featio.write_track(path, track(data, 100.0, shuffled))
        loaded = load_tv_track(path)
        assert loaded.channel_names == TV_CHANNELS
        for i, name in enumerate(TV_CHANNELS):
            np.testing.assert_array_equal(loaded.data[i], data[shuffled.index(name)])

    def test_five_channels_rejected(self, tmp_path):
        path = tmp_path / "bad.acft"
        featio.write_track(path, track(np.zeros((5, 40)), 100.0, TV_CHANNELS[:5]))
        with pytest.raises(FormatError, match="6 channels"):
            load_tv_track(path)

    def test_wrong_names_rejected(self, tmp_path):
        path = tmp_path / "bad.acft"
        featio.write_track(path, track(np.zeros((6, 40)), 100.0))
        with pytest.raises(FormatError, match="channel names"):
            load_tv_track(path)
