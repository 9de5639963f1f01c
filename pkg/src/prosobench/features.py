"""The five per-utterance prosodic features and their [-1, 1] normalization.

Features: average log-pitch and log-pitch range of voiced speech, average
log-phone duration, energy in dB (mean absolute amplitude over non-silent
frames), and spectral tilt (first-order all-pole predictor coefficient,
averaged over voiced frames). Normalization projects [M - 3*sigma, M + 3*sigma]
onto [-1, 1] per feature and clips; M is the corpus median and sigma the
population standard deviation.

Natural log is used for every log feature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .audio import AnalysisConfig, AudioBuffer, SilenceMask, frame_signal, read_wav, silence_mask
from .errors import (
    AllSilentError,
    AlignmentParseError,
    ContractViolation,
    DegenerateFeatureError,
    EmptyAlignmentError,
    FeatureExtractionError,
    InsufficientVoicingError,
)
from .pitch import PitchConfig, PitchContour, track_pitch

FEATURE_NAMES = ("pitch", "pitch_range", "duration", "energy", "tilt")
FEATURE_UNITS = {
    "pitch": "log_hz",
    "pitch_range": "log_hz",
    "duration": "log_sec",
    "energy": "db",
    "tilt": "ratio",
}
DEFAULT_SILENCE_LABELS = frozenset({"sil", "sp", ""})


@dataclass
class ProsodyVector:
    """Five prosodic features, either raw or normalized (space_tag)."""

    log_pitch: float
    log_pitch_range: float
    log_duration: float
    energy_db: float
    spectral_tilt: float
    space_tag: str = "raw"

    def __post_init__(self):
        if self.space_tag not in ("raw", "normalized"):
            raise ContractViolation(f"space_tag must be raw|normalized, got {self.space_tag}")
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise ContractViolation(f"prosody vector has non-finite components: {values}")
        if self.space_tag == "normalized" and np.any(np.abs(values) > 1.0 + 1e-9):
            raise ContractViolation(f"normalized vector outside [-1, 1]: {values}")

    def as_array(self) -> np.ndarray:
        return np.array([self.log_pitch, self.log_pitch_range, self.log_duration,
                         self.energy_db, self.spectral_tilt], dtype=np.float64)

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, (float(v) for v in self.as_array())))

    @classmethod
    def from_array(cls, values, space_tag: str = "raw") -> "ProsodyVector":
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (5,):
            raise ContractViolation(f"prosody vector must have 5 components, got shape {v.shape}")
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]), float(v[4]), space_tag)

    @classmethod
    def from_dict(cls, d: dict, space_tag: str = "raw") -> "ProsodyVector":
        return cls.from_array([d[name] for name in FEATURE_NAMES], space_tag)


@dataclass
class FeatureStats:
    median: float
    sigma: float
    unit: str


@dataclass
class NormStats:
    """Per-feature median and standard deviation for the [-1, 1] projection."""

    features: dict[str, FeatureStats]
    corpus_size: int = 0
    config_hash: str = ""
    analysis_config: Optional[dict] = None

    def __post_init__(self):
        missing = set(FEATURE_NAMES) - set(self.features)
        extra = set(self.features) - set(FEATURE_NAMES)
        if missing or extra:
            raise ContractViolation(f"stats must cover exactly {FEATURE_NAMES}; "
                                    f"missing={sorted(missing)} extra={sorted(extra)}")
        for name, fs in self.features.items():
            if fs.sigma <= 0:
                raise ContractViolation(f"sigma must be positive for {name}, got {fs.sigma}")

    def to_dict(self) -> dict:
        out = {
            "features": {name: {"median": fs.median, "sigma": fs.sigma, "unit": fs.unit}
                         for name, fs in self.features.items()},
            "corpus_size": self.corpus_size,
            "config_hash": self.config_hash,
        }
        if self.analysis_config is not None:
            out["analysis_config"] = self.analysis_config
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        feats = {name: FeatureStats(sub["median"], sub["sigma"], sub.get("unit", ""))
                 for name, sub in d["features"].items()}
        return cls(feats, d.get("corpus_size", 0), d.get("config_hash", ""),
                   d.get("analysis_config"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "NormStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class PhoneAlignment:
    """Time-ordered, non-overlapping (phone, start_sec, end_sec) segments."""

    segments: list[tuple[str, float, float]] = field(default_factory=list)

    def __post_init__(self):
        prev_end = 0.0
        for i, (label, start, end) in enumerate(self.segments):
            if start < 0 or end <= start:
                raise ContractViolation(
                    f"segment {i} ({label!r}) has invalid times [{start}, {end}]")
            if start < prev_end - 1e-9:
                raise ContractViolation(
                    f"segment {i} ({label!r}) overlaps the previous segment")
            prev_end = end

    def __len__(self) -> int:
        return len(self.segments)

    def durations(self, exclude_labels: Iterable[str] = DEFAULT_SILENCE_LABELS) -> list[float]:
        excluded = set(exclude_labels)
        return [end - start for label, start, end in self.segments if label not in excluded]

    @property
    def total_span(self) -> float:
        if not self.segments:
            return 0.0
        return self.segments[-1][2] - self.segments[0][1]

    def dump_lines(self) -> list[str]:
        # repr keeps the float64 text round trip exact, which keeps alignment-
        # driven durations exact through save/parse.
        return [f"{label}\t{start!r}\t{end!r}" for label, start, end in self.segments]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.dump_lines()) + "\n")


def parse_alignment(path) -> PhoneAlignment:
    """Parse a `phone<TAB>start_sec<TAB>end_sec` TSV into a PhoneAlignment."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such alignment file: {path}")
    segments: list[tuple[str, float, float]] = []
    prev_end = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise AlignmentParseError(f"{path}:{lineno}: expected 3 tab-separated fields")
        label = parts[0]
        try:
            start, end = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise AlignmentParseError(f"{path}:{lineno}: bad number ({exc})") from exc
        if end <= start or start < 0:
            raise AlignmentParseError(f"{path}:{lineno}: reversed or negative segment")
        if prev_end is not None and start < prev_end - 1e-9:
            raise AlignmentParseError(f"{path}:{lineno}: segments out of order")
        segments.append((label, start, end))
        prev_end = end
    if not segments:
        raise EmptyAlignmentError(f"{path}: alignment file has no segments")
    return PhoneAlignment(segments)


def utterance_pitch_features(contour: PitchContour) -> tuple[float, float]:
    """(mean log-f0, Q0.95 - Q0.05 of log-f0) over voiced frames."""
    voiced = contour.voiced_f0
    if voiced.size < 2:
        raise InsufficientVoicingError(
            f"need >= 2 voiced frames for pitch features, got {voiced.size}")
    log_f0 = np.log(voiced)
    q05, q95 = np.quantile(log_f0, [0.05, 0.95], method="linear")
    return float(np.mean(log_f0)), float(q95 - q05)


def mean_log_duration(alignment: PhoneAlignment,
                      exclude_labels: Iterable[str] = DEFAULT_SILENCE_LABELS) -> float:
    """Mean of ln(duration_sec) over non-excluded phones."""
    durations = alignment.durations(exclude_labels)
    if not durations:
        raise EmptyAlignmentError("no phones left after excluding silence labels")
    return float(np.mean(np.log(durations)))


def _sample_mask_from_frames(mask: SilenceMask, config: AnalysisConfig, n_samples: int) -> np.ndarray:
    """Per-sample mask covering every sample inside at least one non-silent frame."""
    keep = np.zeros(n_samples, dtype=bool)
    frame_len, hop = config.frame_length, config.hop_length
    for k in np.flatnonzero(~mask.mask):
        keep[k * hop: k * hop + frame_len] = True
    return keep


def utterance_energy(audio: AudioBuffer, mask: SilenceMask,
                     config: Optional[AnalysisConfig] = None) -> float:
    """20*log10 of the mean absolute amplitude over samples in non-silent frames."""
    config = config or AnalysisConfig(sample_rate=audio.sample_rate)
    if len(mask) != config.num_frames(len(audio)):
        raise ContractViolation("silence mask length does not match frame count")
    if len(mask) == 0 or mask.mask.all():
        raise AllSilentError("utterance has no non-silent frames")
    keep = _sample_mask_from_frames(mask, config, len(audio))
    mean_abs = float(np.mean(np.abs(audio.samples[keep])))
    if mean_abs <= 0:
        raise AllSilentError("non-silent frames contain only zero samples")
    return 20.0 * math.log10(mean_abs)


def frame_tilt(frames: np.ndarray) -> np.ndarray:
    """Per-frame first-order predictor coefficient a1 with A(z) = 1 + a1*z^-1.

    Uses unbiased autocorrelation estimates at lags 0 and 1 on the raw frame
    samples; the ratio is clipped to [-1, 1]. Heavily low-passed frames
    approach -1, an alternating-sign signal gives exactly +1.
    """
    if frames.ndim != 2 or frames.shape[1] < 2:
        raise ContractViolation("frames must be (T, W) with W >= 2")
    w = frames.shape[1]
    r0 = np.sum(frames ** 2, axis=1) / w
    r1 = np.sum(frames[:, :-1] * frames[:, 1:], axis=1) / (w - 1)
    tilt = np.zeros(frames.shape[0])
    ok = r0 > 0
    tilt[ok] = -np.clip(r1[ok] / r0[ok], -1.0, 1.0)
    return tilt


def utterance_spectral_tilt(audio: AudioBuffer, contour: PitchContour,
                            config: Optional[AnalysisConfig] = None) -> float:
    """Mean first-order all-pole coefficient over voiced frames."""
    config = config or AnalysisConfig(sample_rate=audio.sample_rate)
    frames = frame_signal(audio, config, window=False)
    if len(contour) != frames.shape[0]:
        raise ContractViolation("pitch contour length does not match frame count")
    voiced_idx = np.flatnonzero(contour.voiced)
    if voiced_idx.size == 0:
        raise InsufficientVoicingError("no voiced frames for spectral tilt")
    tilts = frame_tilt(frames[voiced_idx])
    energetic = np.sum(frames[voiced_idx] ** 2, axis=1) > 0
    if not energetic.any():
        raise InsufficientVoicingError("voiced frames carry no energy")
    return float(np.mean(tilts[energetic]))


def extract_prosody(audio: AudioBuffer, alignment: PhoneAlignment,
                    analysis: Optional[AnalysisConfig] = None,
                    pitch_config: Optional[PitchConfig] = None,
                    silence_threshold_db: float = -40.0,
                    exclude_labels: Iterable[str] = DEFAULT_SILENCE_LABELS) -> ProsodyVector:
    """Assemble the five raw features from audio plus alignment."""
    analysis = analysis or AnalysisConfig(sample_rate=audio.sample_rate)
    pitch_config = pitch_config or PitchConfig()
    mask = silence_mask(audio, analysis, silence_threshold_db)
    if len(mask) == 0 or mask.mask.all():
        raise AllSilentError("utterance is entirely silent")
    try:
        contour = track_pitch(audio, pitch_config, analysis, mask)
        log_pitch, log_range = utterance_pitch_features(contour)
    except (InsufficientVoicingError, ContractViolation) as exc:
        raise FeatureExtractionError("pitch", exc) from exc
    try:
        log_dur = mean_log_duration(alignment, exclude_labels)
    except EmptyAlignmentError as exc:
        raise FeatureExtractionError("duration", exc) from exc
    try:
        energy = utterance_energy(audio, mask, analysis)
    except AllSilentError as exc:
        raise FeatureExtractionError("energy", exc) from exc
    try:
        tilt = utterance_spectral_tilt(audio, contour, analysis)
    except InsufficientVoicingError as exc:
        raise FeatureExtractionError("tilt", exc) from exc
    return ProsodyVector(log_pitch, log_range, log_dur, energy, tilt, "raw")


def extract_prosody_from_files(wav_path, alignment_path,
                               analysis: Optional[AnalysisConfig] = None,
                               pitch_config: Optional[PitchConfig] = None) -> ProsodyVector:
    audio = read_wav(wav_path)
    alignment = parse_alignment(alignment_path)
    return extract_prosody(audio, alignment, analysis, pitch_config)


def _lower_median(values: np.ndarray) -> float:
    """Median taking the lower of the two central order statistics on even counts."""
    ordered = np.sort(values)
    return float(ordered[(ordered.size - 1) // 2])


def fit_norm_stats(vectors: Sequence[ProsodyVector], config_hash: str = "",
                   analysis_config: Optional[dict] = None) -> NormStats:
    """Per-feature median and population standard deviation over a corpus."""
    if len(vectors) < 2:
        raise ContractViolation(f"need >= 2 vectors to fit stats, got {len(vectors)}")
    for v in vectors:
        if v.space_tag != "raw":
            raise ContractViolation("stats must be fitted on raw vectors")
    matrix = np.stack([v.as_array() for v in vectors])
    features = {}
    for i, name in enumerate(FEATURE_NAMES):
        column = matrix[:, i]
        sigma = float(np.std(column))  # population, ddof=0
        if sigma <= 0:
            raise DegenerateFeatureError(f"feature {name} has zero variance across the corpus")
        features[name] = FeatureStats(_lower_median(column), sigma, FEATURE_UNITS[name])
    return NormStats(features, corpus_size=len(vectors), config_hash=config_hash,
                     analysis_config=analysis_config)


def normalize(vector: ProsodyVector, stats: NormStats) -> ProsodyVector:
    """Project each feature via (x - M) / (3*sigma) and clip to [-1, 1]."""
    if vector.space_tag != "raw":
        raise ContractViolation("normalize expects a raw vector")
    out = []
    for name, value in zip(FEATURE_NAMES, vector.as_array()):
        fs = stats.features[name]
        out.append(float(np.clip((value - fs.median) / (3.0 * fs.sigma), -1.0, 1.0)))
    return ProsodyVector.from_array(out, "normalized")


def denormalize(b: float, median: float, sigma: float) -> float:
    """Inverse projection M + 3*sigma*b for b in [-1, 1]."""
    if not -1.0 - 1e-12 <= b <= 1.0 + 1e-12:
        raise ContractViolation(f"normalized value must be in [-1, 1], got {b}")
    if sigma <= 0:
        raise ContractViolation(f"sigma must be positive, got {sigma}")
    return median + 3.0 * sigma * b


def denormalize_vector(vector: ProsodyVector, stats: NormStats) -> ProsodyVector:
    if vector.space_tag != "normalized":
        raise ContractViolation("denormalize expects a normalized vector")
    out = []
    for name, value in zip(FEATURE_NAMES, vector.as_array()):
        fs = stats.features[name]
        out.append(denormalize(float(value), fs.median, fs.sigma))
    return ProsodyVector.from_array(out, "raw")
