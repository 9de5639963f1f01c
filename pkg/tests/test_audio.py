import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prosobench.audio import (
    AnalysisConfig,
    AudioBuffer,
    frame_signal,
    mel_band_edges,
    mel_filterbank,
    mel_spectrogram,
    preemphasize,
    read_wav,
    silence_mask,
    write_wav,
)
from prosobench.errors import ContractViolation, UnsupportedFormatError

SR = 24000


def sine(freq, seconds=1.0, amp=0.5, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), sr)


class TestPreemphasis:
    def test_zero_coeff_is_identity(self):
        x = sine(100, 0.1)
        y = preemphasize(x, 0.0)
        np.testing.assert_array_equal(y.samples, x.samples)

    def test_constant_signal(self):
        x = AudioBuffer(np.ones(3), SR)
        y = preemphasize(x, 0.97)
        np.testing.assert_allclose(y.samples, [1.0, 0.03, 0.03])

    def test_matches_elementwise_formula(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-1, 1, 100)
        y = preemphasize(AudioBuffer(x, SR), 0.97).samples
        expected = np.empty(100)
        expected[0] = x[0]
        for n in range(1, 100):
            expected[n] = x[n] - 0.97 * x[n - 1]
        np.testing.assert_allclose(y, expected, rtol=0, atol=1e-15)

    def test_empty_input(self):
        y = preemphasize(AudioBuffer(np.zeros(0), SR), 0.5)
        assert len(y) == 0

    def test_coeff_range_enforced(self):
        with pytest.raises(ContractViolation):
            preemphasize(sine(100, 0.01), 1.0)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-0.2, 0.2, 500)
        a = 3.5
        lhs = preemphasize(AudioBuffer(a * x, SR), 0.97).samples
        rhs = a * preemphasize(AudioBuffer(x, SR), 0.97).samples
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestFraming:
    def test_one_second_default_framing(self):
        frames = frame_signal(sine(200, 1.0), AnalysisConfig())
        assert frames.shape == (98, 600)  # 1 + (24000 - 600) // 240

    def test_shorter_than_frame(self):
        frames = frame_signal(AudioBuffer(np.zeros(599), SR), AnalysisConfig())
        assert frames.shape[0] == 0

    def test_exactly_one_frame(self):
        frames = frame_signal(AudioBuffer(np.zeros(600), SR), AnalysisConfig())
        assert frames.shape[0] == 1

    def test_frame_offsets(self):
        cfg = AnalysisConfig()
        x = np.arange(1200, dtype=np.float64)
        frames = frame_signal(AudioBuffer(x / 1200, SR), cfg, window=False)
        np.testing.assert_allclose(frames[1], x[240:840] / 1200)

    @given(n=st.integers(600, 50000), frame_ms=st.sampled_from([20.0, 25.0]),
           hop_ms=st.sampled_from([5.0, 10.0, 12.5]))
    @settings(max_examples=40, deadline=None)
    def test_frame_count_formula(self, n, frame_ms, hop_ms):
        cfg = AnalysisConfig(frame_ms=frame_ms, hop_ms=hop_ms)
        frames = frame_signal(AudioBuffer(np.zeros(n), SR), cfg, window=False)
        expected = 1 + (n - cfg.frame_length) // cfg.hop_length
        assert frames.shape[0] == expected


class TestMelSpectrogram:
    def test_shape_default_config(self):
        mel = mel_spectrogram(sine(200, 1.0), AnalysisConfig())
        assert mel.frames.shape == (98, 80)

    def test_all_zero_input_hits_floor(self):
        cfg = AnalysisConfig()
        mel = mel_spectrogram(AudioBuffer(np.zeros(SR), SR), cfg)
        np.testing.assert_allclose(mel.frames, np.log(cfg.log_floor))

    def test_sine_argmax_in_expected_band(self):
        cfg = AnalysisConfig()
        mel = mel_spectrogram(sine(1000, 0.5), cfg)
        edges = mel_band_edges(cfg)
        argmax = np.argmax(mel.frames, axis=1)
        for band in argmax:
            # 1 kHz must fall inside the triangular support of the winning band.
            assert edges[band] < 1000.0 < edges[band + 2]

    def test_floor_lower_bound(self):
        cfg = AnalysisConfig()
        mel = mel_spectrogram(sine(440, 0.3, amp=0.01), cfg)
        assert np.all(mel.frames >= np.log(cfg.log_floor) - 1e-12)

    def test_trailing_zeros_invariance(self):
        # Signal ending exactly on a frame boundary: extra zeros shorter than
        # one hop do not start a new frame and leave the output unchanged.
        cfg = AnalysisConfig()
        n = cfg.frame_length + 13 * cfg.hop_length
        rng = np.random.default_rng(3)
        x = rng.uniform(-0.5, 0.5, n)
        base = mel_spectrogram(AudioBuffer(x, SR), cfg)
        for extra in (1, 100, cfg.hop_length - 1):
            padded = mel_spectrogram(AudioBuffer(np.concatenate([x, np.zeros(extra)]), SR), cfg)
            np.testing.assert_array_equal(padded.frames, base.frames)

    def test_filterbank_shape_and_normalization(self):
        cfg = AnalysisConfig()
        bank = mel_filterbank(cfg)
        assert bank.shape == (80, 513)
        assert np.all(bank >= 0)
        assert np.all(bank.sum(axis=1) > 0)


class TestSilenceMask:
    def test_constant_tone_has_no_silence(self):
        mask = silence_mask(sine(200, 0.5), AnalysisConfig())
        assert mask.num_silent == 0

    def test_trailing_zeros_are_silent(self):
        x = np.concatenate([sine(200, 0.5).samples, np.zeros(SR // 2)])
        mask = silence_mask(AudioBuffer(x, SR), AnalysisConfig())
        assert mask.mask[-10:].all()
        assert not mask.mask[:10].any()

    def test_minus_60db_tail_below_minus_40_threshold(self):
        loud = sine(200, 0.5, amp=1.0).samples
        quiet = sine(200, 0.5, amp=0.001).samples
        mask = silence_mask(AudioBuffer(np.concatenate([loud, quiet]), SR),
                            AnalysisConfig(), threshold_db=-40.0)
        n = len(mask)
        assert mask.mask[n // 2 + 3:].all()
        assert not mask.mask[: n // 2 - 3].any()

    def test_length_matches_mel_frames(self):
        cfg = AnalysisConfig()
        for seconds in (0.1, 0.5, 1.234):
            x = sine(150, seconds)
            assert len(silence_mask(x, cfg)) == mel_spectrogram(x, cfg).num_frames

    def test_all_zero_signal_fully_silent(self):
        mask = silence_mask(AudioBuffer(np.zeros(SR), SR), AnalysisConfig())
        assert mask.mask.all()

    def test_threshold_must_be_negative(self):
        with pytest.raises(ContractViolation):
            silence_mask(sine(100, 0.1), AnalysisConfig(), threshold_db=0.0)


class TestWavIO:
    def test_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(7)
        x = AudioBuffer(rng.uniform(-0.9, 0.9, 1000), SR)
        path = tmp_path / "probe.wav"
        write_wav(path, x)
        y = read_wav(path)
        assert y.sample_rate == SR
        assert np.max(np.abs(y.samples - x.samples)) <= 2 ** -15

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_wav(tmp_path / "nope.wav")

    def test_stereo_rejected(self, tmp_path):
        import wave
        path = tmp_path / "stereo.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(2)
            wf.setsampwidth(2)
            wf.setframerate(SR)
            wf.writeframes(b"\x00\x00\x00\x00" * 100)
        with pytest.raises(UnsupportedFormatError):
            read_wav(path)

    def test_8bit_rejected(self, tmp_path):
        import wave
        path = tmp_path / "eight.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(1)
            wf.setframerate(SR)
            wf.writeframes(b"\x80" * 100)
        with pytest.raises(UnsupportedFormatError):
            read_wav(path)


class TestAnalysisConfig:
    def test_rejects_small_fft(self):
        with pytest.raises(ContractViolation):
            AnalysisConfig(fft_size=512)  # < 600-sample frame

    def test_rejects_bad_band(self):
        with pytest.raises(ContractViolation):
            AnalysisConfig(fmin=13000.0)

    def test_round_trips_as_dict(self):
        cfg = AnalysisConfig(n_mels=32)
        assert AnalysisConfig.from_dict(cfg.to_dict()) == cfg
