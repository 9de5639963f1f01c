"""Audio I/O, framing, STFT magnitude, mel filterbank, and silence detection.

All analysis paths share the framing defined here: 25 ms Hann frames with a
10 ms hop by default, frame count T = 1 + floor((N - frame_len) / hop).
Samples are normalized floats in [-1, 1]; integer PCM exists only at the WAV
boundary.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ContractViolation, UnsupportedFormatError

DEFAULT_SAMPLE_RATE = 24000


@dataclass
class AudioBuffer:
    """Mono sample sequence with its sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ContractViolation(f"audio must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ContractViolation(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ContractViolation("audio contains non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass
class AnalysisConfig:
    """Shared framing and mel parameters.

    The paper-scale setup is 80 mel bands; the desk-scale model default is 32.
    Window and FFT size are not dictated upstream: Hann window, FFT 1024 at
    24 kHz (600-sample frames zero-padded).
    """

    sample_rate: int = DEFAULT_SAMPLE_RATE
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 1024
    n_mels: int = 80
    fmin: float = 50.0
    fmax: float = 12000.0
    preemphasis: float = 0.97
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ContractViolation("sample_rate must be positive")
        if self.fft_size < self.frame_length:
            raise ContractViolation(
                f"fft_size {self.fft_size} < frame length {self.frame_length} samples")
        if self.fft_size & (self.fft_size - 1):
            raise ContractViolation("fft_size must be a power of two")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ContractViolation(
                f"need 0 <= fmin < fmax <= Nyquist, got [{self.fmin}, {self.fmax}]")
        if self.n_mels < 1:
            raise ContractViolation("n_mels must be >= 1")
        if not 0 <= self.preemphasis < 1:
            raise ContractViolation("preemphasis must be in [0, 1)")
        if self.log_floor <= 0:
            raise ContractViolation("log_floor must be positive")

    @property
    def frame_length(self) -> int:
        return int(round(self.frame_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_length:
            return 0
        return 1 + (n_samples - self.frame_length) // self.hop_length

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisConfig":
        return cls(**d)

    def config_hash(self) -> str:
        import hashlib
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MelSpectrogram:
    """T x n_mels matrix of log-mel magnitudes plus the config that produced it."""

    frames: np.ndarray
    config: AnalysisConfig = field(default_factory=AnalysisConfig)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            self.frames = self.frames.reshape(-1, self.config.n_mels)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])


@dataclass
class SilenceMask:
    """Per-frame boolean, True where the frame is silence."""

    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)

    def __len__(self) -> int:
        return int(self.mask.size)

    @property
    def num_silent(self) -> int:
        return int(self.mask.sum())


def preemphasize(audio: AudioBuffer, coeff: float) -> AudioBuffer:
    """First-order pre-emphasis: y[0] = x[0], y[n] = x[n] - coeff * x[n-1]."""
    if not 0 <= coeff < 1:
        raise ContractViolation(f"preemphasis coeff must be in [0, 1), got {coeff}")
    x = audio.samples
    if x.size == 0:
        return AudioBuffer(x.copy(), audio.sample_rate)
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - coeff * x[:-1]
    return AudioBuffer(y, audio.sample_rate)


def frame_signal(audio: AudioBuffer, config: AnalysisConfig, window: bool = True) -> np.ndarray:
    """Slice into overlapping frames; frame k covers [k*hop, k*hop + frame_len).

    Returns a (T, frame_len) array, Hann-windowed unless window=False.
    """
    frame_len = config.frame_length
    hop = config.hop_length
    x = audio.samples
    n_frames = config.num_frames(x.size)
    if n_frames == 0:
        return np.zeros((0, frame_len))
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx]
    if window:
        frames = frames * np.hanning(frame_len)[None, :]
    return frames


def _mel_of_hz(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _hz_of_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: AnalysisConfig) -> np.ndarray:
    """Triangular area-normalized filterbank, shape (n_mels, fft_size//2 + 1)."""
    n_bins = config.fft_size // 2 + 1
    fft_freqs = np.linspace(0.0, config.sample_rate / 2.0, n_bins)
    mel_edges = np.linspace(_mel_of_hz(config.fmin), _mel_of_hz(config.fmax), config.n_mels + 2)
    hz_edges = _hz_of_mel(mel_edges)
    bank = np.zeros((config.n_mels, n_bins))
    for m in range(config.n_mels):
        lo, center, hi = hz_edges[m], hz_edges[m + 1], hz_edges[m + 2]
        rising = (fft_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - fft_freqs) / max(hi - center, 1e-12)
        tri = np.maximum(0.0, np.minimum(rising, falling))
        # Area normalization keeps wide high bands from dominating.
        bank[m] = tri * (2.0 / max(hi - lo, 1e-12))
    return bank


def mel_band_edges(config: AnalysisConfig) -> np.ndarray:
    """Hz edges of the triangular filters, shape (n_mels + 2,)."""
    mel_edges = np.linspace(_mel_of_hz(config.fmin), _mel_of_hz(config.fmax), config.n_mels + 2)
    return _hz_of_mel(mel_edges)


def stft_magnitude(audio: AudioBuffer, config: AnalysisConfig) -> np.ndarray:
    """|STFT| of Hann-windowed frames, shape (T, fft_size//2 + 1)."""
    frames = frame_signal(audio, config, window=True)
    if frames.shape[0] == 0:
        return np.zeros((0, config.fft_size // 2 + 1))
    return np.abs(np.fft.rfft(frames, n=config.fft_size, axis=1))


def mel_spectrogram(audio: AudioBuffer, config: AnalysisConfig) -> MelSpectrogram:
    """Log-mel magnitudes of the pre-emphasized signal, floored at log_floor."""
    emphasized = preemphasize(audio, config.preemphasis)
    mag = stft_magnitude(emphasized, config)
    bank = mel_filterbank(config)
    mel = mag @ bank.T
    logmel = np.log(np.maximum(mel, config.log_floor))
    return MelSpectrogram(logmel, config)


def silence_mask(audio: AudioBuffer, config: AnalysisConfig, threshold_db: float = -40.0) -> SilenceMask:
    """Mark frames whose RMS sits more than |threshold_db| below the loudest frame."""
    if threshold_db >= 0:
        raise ContractViolation(f"threshold_db must be negative, got {threshold_db}")
    frames = frame_signal(audio, config, window=False)
    if frames.shape[0] == 0:
        return SilenceMask(np.zeros(0, dtype=bool))
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    peak = rms.max()
    if peak <= 0.0:
        return SilenceMask(np.ones(frames.shape[0], dtype=bool))
    level_db = 20.0 * np.log10(np.maximum(rms, 1e-300) / peak)
    return SilenceMask(level_db < threshold_db)


def read_wav(path) -> AudioBuffer:
    """Read a 16-bit PCM mono WAV into normalized floats."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            n = wf.getnframes()
            raw = wf.readframes(n)
    except wave.Error as exc:
        raise UnsupportedFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if n_channels != 1:
        raise UnsupportedFormatError(f"{path}: expected mono, got {n_channels} channels")
    if sampwidth != 2:
        raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, audio: AudioBuffer) -> None:
    """Write normalized floats as 16-bit PCM mono WAV (values clipped to [-1, 1])."""
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(pcm.tobytes())
