"""Mel inversion and Griffin-Lim phase reconstruction for playback.

Quality is deliberately modest: this path exists so the lever UI can play
audio and the evaluation loop can measure pitch/energy/tilt from generated
mels. Reconstruction inverts the analysis chain: pseudo-inverse mel
filterbank, iterative phase estimation, then de-emphasis to undo the
analysis-side pre-emphasis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .audio import AnalysisConfig, AudioBuffer, MelSpectrogram, mel_filterbank
from .errors import ContractViolation

_pinv_cache: dict[str, np.ndarray] = {}


@dataclass
class LinearSpectrogram:
    """T x (fft_size//2 + 1) non-negative magnitudes."""

    magnitudes: np.ndarray
    config: AnalysisConfig = field(default_factory=AnalysisConfig)

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        if self.magnitudes.ndim != 2:
            raise ContractViolation("linear spectrogram must be 2-D")
        if self.magnitudes.size and (np.any(self.magnitudes < 0)
                                     or not np.all(np.isfinite(self.magnitudes))):
            raise ContractViolation("linear magnitudes must be finite and non-negative")

    @property
    def num_frames(self) -> int:
        return int(self.magnitudes.shape[0])


def _filterbank_pinv(config: AnalysisConfig) -> np.ndarray:
    key = config.config_hash()
    if key not in _pinv_cache:
        _pinv_cache[key] = np.linalg.pinv(mel_filterbank(config))
    return _pinv_cache[key]


def mel_to_linear(mel: MelSpectrogram) -> LinearSpectrogram:
    """Pseudo-inverse of the mel filterbank per frame, clamped at zero."""
    config = mel.config
    n_bins = config.fft_size // 2 + 1
    if mel.frames.ndim != 2 or mel.frames.shape[1] != config.n_mels:
        raise ContractViolation(
            f"mel has {mel.frames.shape[1] if mel.frames.ndim == 2 else '?'} bands, "
            f"config says {config.n_mels}")
    if mel.num_frames == 0:
        return LinearSpectrogram(np.zeros((0, n_bins)), config)
    linear_mel = np.exp(mel.frames)
    mags = linear_mel @ _filterbank_pinv(config).T
    return LinearSpectrogram(np.maximum(mags, 0.0), config)


def _stft(x: np.ndarray, config: AnalysisConfig) -> np.ndarray:
    frame_len, hop = config.frame_length, config.hop_length
    n_frames = config.num_frames(x.size)
    if n_frames == 0:
        return np.zeros((0, config.fft_size // 2 + 1), dtype=complex)
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hanning(frame_len)[None, :]
    return np.fft.rfft(frames, n=config.fft_size, axis=1)


def _istft(spec: np.ndarray, config: AnalysisConfig) -> np.ndarray:
    """Least-squares inverse STFT (windowed overlap-add, window-power normalized)."""
    frame_len, hop = config.frame_length, config.hop_length
    n_frames = spec.shape[0]
    if n_frames == 0:
        return np.zeros(0)
    window = np.hanning(frame_len)
    frames = np.fft.irfft(spec, n=config.fft_size, axis=1)[:, :frame_len]
    length = (n_frames - 1) * hop + frame_len
    out = np.zeros(length)
    norm = np.zeros(length)
    for k in range(n_frames):
        lo = k * hop
        out[lo:lo + frame_len] += frames[k] * window
        norm[lo:lo + frame_len] += window ** 2
    # Clamping the window-power normalizer fades the first/last half-frame
    # instead of amplifying it; an unclamped divide turns the sparse edge
    # coverage into loud bursts that corrupt level measurements downstream.
    floor = 0.5 * norm.max() if norm.size else 1.0
    return out / np.maximum(norm, max(floor, 1e-10))


def spectral_convergence(spec: np.ndarray, target: np.ndarray) -> float:
    denom = np.linalg.norm(target)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(np.abs(spec) - target) / denom)


def reconstruct(spec: LinearSpectrogram, iterations: int = 50,
                magnitude_power: float = 1.2) -> tuple[AudioBuffer, list[float]]:
    """Griffin-Lim without final peak normalization; returns the convergence trace.

    The un-normalized output keeps the absolute scale implied by the
    spectrogram, which the evaluation loop needs for energy measurement.
    """
    if iterations < 0:
        raise ContractViolation("iterations must be >= 0")
    config = spec.config
    if spec.num_frames == 0:
        return AudioBuffer(np.zeros(0), config.sample_rate), []
    target = spec.magnitudes ** magnitude_power
    x = _istft(target.astype(complex), config)  # zero-phase start
    trace = [spectral_convergence(_stft(x, config), target)]
    for _ in range(iterations):
        phase = np.angle(_stft(x, config))
        x = _istft(target * np.exp(1j * phase), config)
        trace.append(spectral_convergence(_stft(x, config), target))
    if config.preemphasis > 0:
        x = sps.lfilter([1.0], [1.0, -config.preemphasis], x)
    return AudioBuffer(x, config.sample_rate), trace


def griffin_lim(spec: LinearSpectrogram, iterations: int = 50,
                magnitude_power: float = 1.2) -> AudioBuffer:
    """Phase reconstruction with the output peak-normalized to 0.95."""
    audio, _ = reconstruct(spec, iterations, magnitude_power)
    if len(audio) == 0:
        return audio
    peak = float(np.max(np.abs(audio.samples)))
    if peak > 0:
        return AudioBuffer(audio.samples * (0.95 / peak), audio.sample_rate)
    return audio
