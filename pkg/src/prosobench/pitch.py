"""Three fundamental-frequency estimators and a voting combiner.

Each estimator produces one (f0, voiced) pair per analysis frame using the
shared framing from `audio`. The voting combiner marks a frame voiced when a
quorum of estimators agrees and takes the per-frame median of the voiced
estimates, which suppresses single-estimator octave errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .audio import AnalysisConfig, AudioBuffer, SilenceMask, frame_signal, silence_mask
from .errors import ContractViolation

# Frames with mean-square below this are treated as unvoiced outright.
ENERGY_FLOOR = 1e-10


@dataclass
class PitchConfig:
    fmin_search: float = 50.0
    fmax_search: float = 500.0
    yin_threshold: float = 0.15
    acf_voicing_threshold: float = 0.3
    # Cepstral peak height above the in-band median; periodic frames score
    # well above 0.3, noise stays under 0.1.
    cepstral_prominence: float = 0.2
    voicing_quorum: int = 2

    def validate(self, sample_rate: int) -> None:
        if not 0 < self.fmin_search < self.fmax_search < sample_rate / 2:
            raise ContractViolation(
                f"search band [{self.fmin_search}, {self.fmax_search}] invalid at {sample_rate} Hz")

    def lag_range(self, sample_rate: int) -> tuple[int, int]:
        """Inclusive lag bounds corresponding to the search band."""
        lag_min = max(2, int(np.floor(sample_rate / self.fmax_search)))
        lag_max = int(np.ceil(sample_rate / self.fmin_search))
        return lag_min, lag_max


@dataclass
class PitchContour:
    """Frame-wise f0 in Hz with voicing flags; f0 is meaningful only where voiced."""

    f0: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0.shape != self.voiced.shape:
            raise ContractViolation("f0 and voiced arrays must have equal length")
        self.f0 = np.where(self.voiced, self.f0, 0.0)

    def __len__(self) -> int:
        return int(self.f0.size)

    @property
    def voiced_f0(self) -> np.ndarray:
        return self.f0[self.voiced]

    def dump_lines(self, hop_sec: float) -> list[str]:
        """`time\tf0\tvoiced` rows, f0 = 0 on unvoiced frames."""
        out = []
        for k in range(len(self)):
            f0 = self.f0[k] if self.voiced[k] else 0.0
            out.append(f"{k * hop_sec:.3f}\t{f0:.3f}\t{int(self.voiced[k])}")
        return out


def _parabolic_refine(values: np.ndarray, idx: int) -> float:
    """Sub-sample peak/dip position from the three points around idx."""
    if idx <= 0 or idx >= values.size - 1:
        return float(idx)
    a, b, c = values[idx - 1], values[idx], values[idx + 1]
    denom = a - 2.0 * b + c
    if abs(denom) < 1e-30:
        return float(idx)
    shift = 0.5 * (a - c) / denom
    return float(idx) + float(np.clip(shift, -0.5, 0.5))


def _clamp_f0(f0: float, config: PitchConfig) -> float:
    return float(np.clip(f0, config.fmin_search, config.fmax_search))


def estimate_autocorr(audio: AudioBuffer, config: PitchConfig,
                      analysis: Optional[AnalysisConfig] = None) -> PitchContour:
    """Peak of the window-compensated normalized autocorrelation per frame.

    Dividing the windowed-frame ACF by the window's own ACF removes the taper
    decay so a periodic frame peaks near 1 at the true lag; a small
    regularizer keeps the large-lag region (where the window ACF vanishes)
    from amplifying noise.
    """
    analysis = analysis or AnalysisConfig(sample_rate=audio.sample_rate)
    config.validate(audio.sample_rate)
    frames = frame_signal(audio, analysis, window=True)
    n = frames.shape[0]
    f0 = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    if n == 0:
        return PitchContour(f0, voiced)
    frame_len = analysis.frame_length
    lag_min, lag_max = config.lag_range(audio.sample_rate)
    lag_max = min(lag_max, frame_len - 1)
    fft_n = 1
    while fft_n < 2 * frame_len:
        fft_n *= 2
    window = np.hanning(frame_len)
    w_acf = np.fft.irfft(np.abs(np.fft.rfft(window, fft_n)) ** 2)[:frame_len]
    comp = np.maximum(w_acf, 0.0) + 0.02 * w_acf[0]
    spec = np.fft.rfft(frames, n=fft_n, axis=1)
    acf = np.fft.irfft(np.abs(spec) ** 2, axis=1)[:, :frame_len]
    # A periodic frame also peaks at multiples of its period; preferring the
    # smallest lag within a small margin of the maximum avoids sub-octave picks.
    octave_margin = 0.07
    for k in range(n):
        r0 = acf[k, 0]
        if r0 < ENERGY_FLOOR:
            continue
        rho = (acf[k] / comp) / (r0 / comp[0])
        band = rho[lag_min:lag_max + 1]
        best = float(np.max(band))
        if best < config.acf_voicing_threshold:
            continue
        local_max = np.flatnonzero(
            (band >= best - octave_margin)
            & (band >= np.roll(band, 1)) & (band >= np.roll(band, -1)))
        peak = int(local_max[0]) + lag_min if local_max.size else int(np.argmax(band)) + lag_min
        lag = _parabolic_refine(rho, peak)
        voiced[k] = True
        f0[k] = _clamp_f0(audio.sample_rate / lag, config)
    return PitchContour(f0, voiced)


def estimate_yin(audio: AudioBuffer, config: PitchConfig,
                 analysis: Optional[AnalysisConfig] = None) -> PitchContour:
    """First dip of the cumulative-mean-normalized difference below threshold."""
    analysis = analysis or AnalysisConfig(sample_rate=audio.sample_rate)
    config.validate(audio.sample_rate)
    x = audio.samples
    win = analysis.frame_length
    hop = analysis.hop_length
    n = analysis.num_frames(x.size)
    f0 = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    if n == 0:
        return PitchContour(f0, voiced)
    lag_min, lag_max = config.lag_range(audio.sample_rate)
    lag_max = min(lag_max, win - 1)
    ext_len = win + lag_max
    fft_n = 1
    while fft_n < win + ext_len:
        fft_n *= 2
    padded = np.concatenate([x, np.zeros(ext_len)])
    for k in range(n):
        start = k * hop
        frame = padded[start:start + win]
        ext = padded[start:start + ext_len]
        if np.mean(frame ** 2) < ENERGY_FLOOR:
            continue
        # d(tau) = sum_{i<win} (x[i] - x[i+tau])^2 via the correlation identity.
        cum = np.concatenate([[0.0], np.cumsum(ext ** 2)])
        energy0 = cum[win] - cum[0]
        energy_tau = cum[win + np.arange(lag_max + 1)] - cum[np.arange(lag_max + 1)]
        corr = np.fft.irfft(np.fft.rfft(ext, fft_n) * np.conj(np.fft.rfft(frame, fft_n)), fft_n)
        d = energy0 + energy_tau - 2.0 * corr[: lag_max + 1]
        d = np.maximum(d, 0.0)
        # Cumulative mean normalization.
        cmnd = np.ones(lag_max + 1)
        running = np.cumsum(d[1:])
        taus = np.arange(1, lag_max + 1)
        nonzero = running > 0
        cmnd[1:][nonzero] = d[1:][nonzero] * taus[nonzero] / running[nonzero]
        dip = None
        tau = lag_min
        while tau <= lag_max:
            if cmnd[tau] < config.yin_threshold:
                while tau + 1 <= lag_max and cmnd[tau + 1] < cmnd[tau]:
                    tau += 1
                dip = tau
                break
            tau += 1
        if dip is None:
            continue
        lag = _parabolic_refine(cmnd, dip)
        voiced[k] = True
        f0[k] = _clamp_f0(audio.sample_rate / lag, config)
    return PitchContour(f0, voiced)


def estimate_cepstral(audio: AudioBuffer, config: PitchConfig,
                      analysis: Optional[AnalysisConfig] = None) -> PitchContour:
    """Quefrency of the dominant real-cepstrum peak within the search band."""
    analysis = analysis or AnalysisConfig(sample_rate=audio.sample_rate)
    config.validate(audio.sample_rate)
    frames = frame_signal(audio, analysis, window=True)
    n = frames.shape[0]
    f0 = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    if n == 0:
        return PitchContour(f0, voiced)
    lag_min, lag_max = config.lag_range(audio.sample_rate)
    fft_n = max(analysis.fft_size, 2048)
    lag_max = min(lag_max, fft_n // 2 - 1)
    spec = np.abs(np.fft.rfft(frames, n=fft_n, axis=1))
    # Light spectral smoothing fills the nulls between window sidelobes so an
    # isolated spectral line cannot masquerade as a harmonic comb.
    kernel = np.ones(5) / 5.0
    smooth = np.apply_along_axis(lambda s: np.convolve(s, kernel, mode="same"), 1, spec)
    cepstrum = np.fft.irfft(np.log(smooth + 1e-12), axis=1)
    for k in range(n):
        if np.mean(frames[k] ** 2) < ENERGY_FLOOR:
            continue
        band = cepstrum[k, lag_min:lag_max + 1]
        peak = int(np.argmax(band)) + lag_min
        prominence = cepstrum[k, peak] - float(np.median(band))
        if prominence < config.cepstral_prominence:
            continue
        lag = _parabolic_refine(cepstrum[k], peak)
        voiced[k] = True
        f0[k] = _clamp_f0(audio.sample_rate / lag, config)
    return PitchContour(f0, voiced)


def vote_pitch(tracks: list[PitchContour], config: PitchConfig) -> PitchContour:
    """Quorum voicing plus per-frame median over the voiced estimates."""
    if len(tracks) != 3:
        raise ContractViolation(f"expected 3 pitch tracks, got {len(tracks)}")
    lengths = {len(t) for t in tracks}
    if len(lengths) != 1:
        raise ContractViolation(f"pitch tracks have mismatched lengths: {sorted(lengths)}")
    n = lengths.pop()
    f0 = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    for k in range(n):
        estimates = [t.f0[k] for t in tracks if t.voiced[k]]
        if len(estimates) >= config.voicing_quorum:
            voiced[k] = True
            f0[k] = float(np.median(estimates))
    return PitchContour(f0, voiced)


def track_pitch(audio: AudioBuffer, config: Optional[PitchConfig] = None,
                analysis: Optional[AnalysisConfig] = None,
                silence: Optional[SilenceMask] = None) -> PitchContour:
    """Run all three estimators, force silent frames unvoiced, and vote."""
    config = config or PitchConfig()
    analysis = analysis or AnalysisConfig(sample_rate=audio.sample_rate)
    if silence is None:
        silence = silence_mask(audio, analysis)
    tracks = [
        estimate_autocorr(audio, config, analysis),
        estimate_yin(audio, config, analysis),
        estimate_cepstral(audio, config, analysis),
    ]
    for t in tracks:
        if len(t) != len(silence):
            raise ContractViolation("silence mask length does not match frame count")
        t.voiced &= ~silence.mask
        t.f0 = np.where(t.voiced, t.f0, 0.0)
    return vote_pitch(tracks, config)
