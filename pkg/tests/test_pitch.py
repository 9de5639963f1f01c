import numpy as np
import pytest

from prosobench.audio import AnalysisConfig, AudioBuffer
from prosobench.errors import ContractViolation
from prosobench.pitch import (
    PitchConfig,
    PitchContour,
    estimate_autocorr,
    estimate_cepstral,
    estimate_yin,
    track_pitch,
    vote_pitch,
)

SR = 24000


def sine(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(seconds * SR)) / SR
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), SR)


def square(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(seconds * SR)) / SR
    return AudioBuffer(amp * np.sign(np.sin(2 * np.pi * freq * t)), SR)


def pulse_train(freq, seconds=1.0, amp=0.5):
    n = int(seconds * SR)
    x = np.zeros(n)
    period = SR / freq
    marks = np.round(np.arange(0, n, period)).astype(int)
    x[marks[marks < n]] = amp
    return AudioBuffer(x, SR)


def noise(seconds=1.0, amp=0.3, seed=11):
    rng = np.random.default_rng(seed)
    return AudioBuffer(amp * rng.standard_normal(int(seconds * SR)).clip(-3, 3) / 3, SR)


def silence(seconds=0.5):
    return AudioBuffer(np.zeros(int(seconds * SR)), SR)


@pytest.fixture(scope="module")
def cfg():
    return PitchConfig()


class TestAutocorr:
    def test_200hz_sine(self, cfg):
        c = estimate_autocorr(sine(200), cfg)
        assert c.voiced.all()
        assert np.all(np.abs(c.voiced_f0 - 200.0) <= 2.0)

    def test_noise_mostly_unvoiced(self, cfg):
        c = estimate_autocorr(noise(), cfg)
        assert (~c.voiced).mean() >= 0.9

    def test_silence_all_unvoiced(self, cfg):
        c = estimate_autocorr(silence(), cfg)
        assert not c.voiced.any()


class TestYin:
    def test_200hz_sine(self, cfg):
        c = estimate_yin(sine(200), cfg)
        assert c.voiced.all()
        assert np.all(np.abs(c.voiced_f0 - 200.0) <= 1.0)

    def test_square_wave_no_octave_error(self, cfg):
        c = estimate_yin(square(100), cfg)
        voiced_f0 = c.voiced_f0
        assert voiced_f0.size >= 0.9 * len(c)
        assert np.all(np.abs(voiced_f0 - 100.0) <= 1.0)

    def test_noise_mostly_unvoiced(self, cfg):
        c = estimate_yin(noise(), cfg)
        assert (~c.voiced).mean() >= 0.9

    def test_silence_all_unvoiced(self, cfg):
        c = estimate_yin(silence(), cfg)
        assert not c.voiced.any()


class TestCepstral:
    def test_pulse_train_200hz(self, cfg):
        c = estimate_cepstral(pulse_train(200), cfg)
        assert c.voiced.mean() > 0.9
        assert np.all(np.abs(c.voiced_f0 - 200.0) <= 4.0)

    def test_pure_high_sine_unvoiced_majority(self, cfg):
        c = estimate_cepstral(sine(4000), cfg)
        assert (~c.voiced).mean() > 0.5

    def test_silence_all_unvoiced(self, cfg):
        c = estimate_cepstral(silence(), cfg)
        assert not c.voiced.any()


class TestVoting:
    def make(self, f0s, voiced):
        n = len(f0s[0])
        return [PitchContour(np.array(f, dtype=float), np.array(v, dtype=bool))
                for f, v in zip(f0s, voiced)]

    def test_unanimous(self, cfg):
        tracks = self.make([[200.0]] * 3, [[True]] * 3)
        voted = vote_pitch(tracks, cfg)
        assert voted.voiced[0] and voted.f0[0] == 200.0

    def test_median_suppresses_octave_error(self, cfg):
        tracks = self.make([[200.0], [201.0], [400.0]], [[True]] * 3)
        voted = vote_pitch(tracks, cfg)
        assert voted.f0[0] == 201.0

    def test_quorum_of_one_is_unvoiced(self, cfg):
        tracks = self.make([[200.0], [0.0], [0.0]], [[True], [False], [False]])
        voted = vote_pitch(tracks, cfg)
        assert not voted.voiced[0]

    def test_mismatched_lengths_rejected(self, cfg):
        tracks = self.make([[200.0, 200.0], [200.0], [200.0]],
                           [[True, True], [True], [True]])
        with pytest.raises(ContractViolation):
            vote_pitch(tracks, cfg)

    def test_voted_within_contributing_range(self, cfg):
        rng = np.random.default_rng(5)
        n = 50
        tracks = []
        for _ in range(3):
            f0 = rng.uniform(100, 400, n)
            voiced = rng.uniform(size=n) < 0.8
            tracks.append(PitchContour(f0, voiced))
        voted = vote_pitch(tracks, cfg)
        for k in range(n):
            if voted.voiced[k]:
                est = [t.f0[k] for t in tracks if t.voiced[k]]
                assert min(est) <= voted.f0[k] <= max(est)

    def test_permutation_invariance(self, cfg):
        rng = np.random.default_rng(9)
        n = 30
        tracks = [PitchContour(rng.uniform(80, 450, n), rng.uniform(size=n) < 0.7)
                  for _ in range(3)]
        a = vote_pitch(tracks, cfg)
        b = vote_pitch([tracks[2], tracks[0], tracks[1]], cfg)
        np.testing.assert_array_equal(a.f0, b.f0)
        np.testing.assert_array_equal(a.voiced, b.voiced)


class TestEstimatorProperties:
    @pytest.mark.parametrize("estimator", [estimate_autocorr, estimate_yin, estimate_cepstral])
    def test_frame_count_matches(self, estimator, cfg):
        audio = sine(220, 0.7)
        expected = AnalysisConfig().num_frames(len(audio))
        assert len(estimator(audio, cfg)) == expected

    @pytest.mark.parametrize("estimator", [estimate_autocorr, estimate_yin])
    @pytest.mark.parametrize("base", [110.0, 150.0, 210.0])
    def test_octave_doubling_consistency(self, estimator, base, cfg):
        lo = estimator(sine(base), cfg)
        hi = estimator(sine(2 * base), cfg)
        assert lo.voiced.mean() > 0.9 and hi.voiced.mean() > 0.9
        ratio = np.median(hi.voiced_f0) / np.median(lo.voiced_f0)
        assert abs(ratio - 2.0) <= 0.04

    def test_cepstral_octave_consistency(self, cfg):
        lo = estimate_cepstral(pulse_train(150), cfg)
        hi = estimate_cepstral(pulse_train(300), cfg)
        assert lo.voiced.mean() > 0.8 and hi.voiced.mean() > 0.8
        ratio = np.median(hi.voiced_f0) / np.median(lo.voiced_f0)
        assert abs(ratio - 2.0) <= 0.04


class TestTrackPitch:
    def test_tone_then_silence(self, cfg):
        x = np.concatenate([sine(230, 0.5).samples, np.zeros(SR // 2)])
        voted = track_pitch(AudioBuffer(x, SR))
        n = len(voted)
        assert voted.voiced[: n // 3].all()
        assert not voted.voiced[-n // 3:].any()
        assert np.all(np.abs(voted.f0[voted.voiced] - 230.0) <= 3.0)

    def test_contour_dump_format(self, cfg):
        voted = track_pitch(sine(200, 0.2))
        lines = voted.dump_lines(hop_sec=0.01)
        assert len(lines) == len(voted)
        time, f0, flag = lines[0].split("\t")
        assert flag in ("0", "1")
        float(time), float(f0)
