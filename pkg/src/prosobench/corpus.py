"""Deterministic parametric "speech" renderer and corpus generator.

Each utterance is a band-unlimited pulse train following a slowly modulated
F0 trajectory, shaped by a fixed per-phone resonator envelope and a
first-order recursive tilt filter, with the global gain calibrated so the
measured energy hits the requested target. The renderer knows its own F0
trajectory, phone boundaries, energy, and tilt exactly, which makes the
generated corpus a ground-truth oracle for the feature extractors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

from .audio import AnalysisConfig, AudioBuffer, silence_mask, write_wav
from .errors import ContractViolation
from .features import (
    PhoneAlignment,
    ProsodyVector,
    _sample_mask_from_frames,
    frame_tilt,
)

SIL_LABEL = "sil"

# Documented parameter ranges; render_utterance rejects specs outside them.
# Tilt bounds reflect what the smoothed-pulse excitation can realize; energy
# bounds keep the calibrated gain clear of clipping at worst-case crest factor.
F0_MEAN_RANGE = (80.0, 450.0)
RANGE_FACTOR_RANGE = (1.0, 2.5)
ENERGY_DB_RANGE = (-40.0, -24.0)
TILT_RANGE = (-0.997, -0.9)

# Fixed Hann pulse width: keeps the pre-tilt spectral shape (and hence the
# reachable tilt band) independent of F0 so corpus tilt and pitch stay
# uncorrelated.
PULSE_WIDTH = 12


def default_vocab(n: int = 20) -> list[str]:
    """Doubled-letter phone labels AA, BB, CC, ..."""
    if not 1 <= n <= 26:
        raise ContractViolation(f"vocab size must be in [1, 26], got {n}")
    return [chr(ord("A") + i) * 2 for i in range(n)]


@dataclass
class UtteranceSpec:
    """Full parametric description of one rendered utterance."""

    phone_ids: Sequence[int]
    f0_mean: float
    f0_range_factor: float
    phone_dur_ms: object  # scalar applied to every phone, or one value per phone
    energy_db: float
    tilt: float
    seed: int = 0
    envelope_seed: int = 0
    sample_rate: int = 24000
    # Silence plan: leading/trailing hops plus optional one-hop gaps after phones.
    lead_sil_hops: int = 3
    tail_sil_hops: int = 3
    gaps_after: Optional[Sequence[bool]] = None

    def durations_ms(self) -> list[float]:
        if np.isscalar(self.phone_dur_ms):
            return [float(self.phone_dur_ms)] * len(self.phone_ids)
        durs = [float(d) for d in self.phone_dur_ms]
        if len(durs) != len(self.phone_ids):
            raise ContractViolation("phone_dur_ms list must match phone count")
        return durs

    def validate(self, hop_ms: float = 10.0) -> None:
        if len(self.phone_ids) == 0:
            raise ContractViolation("utterance needs at least one phone")
        lo, hi = F0_MEAN_RANGE
        if not lo <= self.f0_mean <= hi:
            raise ContractViolation(f"f0_mean {self.f0_mean} outside documented {F0_MEAN_RANGE}")
        if not RANGE_FACTOR_RANGE[0] <= self.f0_range_factor <= RANGE_FACTOR_RANGE[1]:
            raise ContractViolation(f"f0_range_factor {self.f0_range_factor} outside "
                                    f"documented {RANGE_FACTOR_RANGE}")
        span = math.sqrt(self.f0_range_factor)
        if self.f0_mean * span > 500.0 or self.f0_mean / span < 50.0:
            raise ContractViolation("F0 trajectory leaves the 50-500 Hz search band")
        for d in self.durations_ms():
            if d < 2 * hop_ms:
                raise ContractViolation(f"phone duration {d} ms below two hops ({2 * hop_ms} ms)")
        if not ENERGY_DB_RANGE[0] <= self.energy_db <= ENERGY_DB_RANGE[1]:
            raise ContractViolation(f"energy_db {self.energy_db} outside documented {ENERGY_DB_RANGE}")
        if not TILT_RANGE[0] <= self.tilt <= TILT_RANGE[1]:
            raise ContractViolation(f"tilt {self.tilt} outside documented {TILT_RANGE}")
        if self.gaps_after is not None and len(self.gaps_after) != len(self.phone_ids):
            raise ContractViolation("gaps_after must match phone count")


@dataclass
class RenderedUtterance:
    audio: AudioBuffer
    alignment: PhoneAlignment
    ground_truth: ProsodyVector
    model_phone_ids: list[int]  # phone ids plus explicit silence tokens


@dataclass
class CorpusConfig:
    size: int = 500
    vocab_size: int = 20
    phones_per_utt: tuple[int, int] = (5, 15)
    f0_mean_range: tuple[float, float] = (170.0, 300.0)
    range_factor_range: tuple[float, float] = (1.15, 1.9)
    dur_base_ms_range: tuple[float, float] = (65.0, 185.0)
    dur_jitter: tuple[float, float] = (0.85, 1.18)
    energy_db_range: tuple[float, float] = (-38.0, -26.0)
    tilt_range: tuple[float, float] = (-0.995, -0.948)
    gap_probability: float = 0.2
    lead_sil_hops: tuple[int, int] = (3, 6)
    seed: int = 7
    sample_rate: int = 24000

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        d = dict(d)
        for key in ("phones_per_utt", "f0_mean_range", "range_factor_range",
                    "dur_base_ms_range", "dur_jitter", "energy_db_range",
                    "tilt_range", "lead_sil_hops"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class ManifestEntry:
    utt_id: str
    wav_path: str
    alignment_path: str
    phone_ids: list[int]
    ground_truth: dict


@dataclass
class CorpusManifest:
    config: CorpusConfig
    vocab: list[str]
    entries: list[ManifestEntry] = field(default_factory=list)

    @property
    def sil_id(self) -> int:
        return len(self.vocab)

    @property
    def model_vocab(self) -> list[str]:
        return self.vocab + [SIL_LABEL]


def _phone_envelope(phone_id: int, envelope_seed: int, sample_rate: int):
    """Fixed per-phone coloring: direct path plus two seeded resonators.

    The unit direct path keeps the fundamental intact for pitch tracking and
    tilt shaping; the resonators and a light FIR give each phone a
    recognizable spectral signature.
    """
    rng = np.random.default_rng(np.random.SeedSequence([envelope_seed, phone_id]))
    fc1 = rng.uniform(500.0, 2400.0)
    fc2 = rng.uniform(2800.0, 7500.0)
    q1 = rng.uniform(2.0, 4.0)
    q2 = rng.uniform(2.0, 4.0)
    g1 = rng.uniform(0.4, 1.2)
    g2 = rng.uniform(0.4, 1.2)
    fir = np.array([1.0, rng.uniform(-0.35, 0.35), rng.uniform(-0.2, 0.2)])
    b1, a1 = sps.iirpeak(fc1 / (sample_rate / 2), q1)
    b2, a2 = sps.iirpeak(fc2 / (sample_rate / 2), q2)
    return (b1, a1), (b2, a2), g1, g2, fir


def _apply_envelope(segment: np.ndarray, env) -> np.ndarray:
    (b1, a1), (b2, a2), g1, g2, fir = env
    y = segment + g1 * sps.lfilter(b1, a1, segment) + g2 * sps.lfilter(b2, a2, segment)
    return np.convolve(y, fir)[: segment.size]


def _pulse_train(phase: np.ndarray) -> np.ndarray:
    """Unit impulses (linearly split between neighbours) at each 2*pi crossing."""
    out = np.zeros(phase.size)
    if phase.size < 2:
        return out
    two_pi = 2.0 * math.pi
    first = math.ceil(phase[0] / two_pi)
    last = math.floor(phase[-1] / two_pi)
    if last < first:
        return out
    crossings = np.arange(first, last + 1) * two_pi
    right = np.searchsorted(phase, crossings)
    right = np.clip(right, 1, phase.size - 1)
    left = right - 1
    u = (crossings - phase[left]) / np.maximum(phase[right] - phase[left], 1e-12)
    u = np.clip(u, 0.0, 1.0)
    np.add.at(out, left, 1.0 - u)
    np.add.at(out, right, u)
    return out


@dataclass
class _Layout:
    """Sample-accurate segment plan shared by rendering and ground truth."""

    segments: list[tuple[str, float, float]]       # label, exact start/end seconds
    phone_spans: list[tuple[int, int, int]]        # phone_id, start/end samples
    total_samples: int


def _plan_layout(spec: UtteranceSpec, vocab: list[str], hop_s: float) -> _Layout:
    gaps = spec.gaps_after or [False] * len(spec.phone_ids)
    durations_s = [d / 1000.0 for d in spec.durations_ms()]
    sr = spec.sample_rate
    segments: list[tuple[str, float, float]] = []
    phone_spans: list[tuple[int, int, int]] = []
    t = 0.0
    if spec.lead_sil_hops > 0:
        end = t + spec.lead_sil_hops * hop_s
        segments.append((SIL_LABEL, t, end))
        t = end
    for i, (pid, dur) in enumerate(zip(spec.phone_ids, durations_s)):
        if not 0 <= pid < len(vocab):
            raise ContractViolation(f"phone id {pid} outside vocabulary of {len(vocab)}")
        end = t + dur
        segments.append((vocab[pid], t, end))
        phone_spans.append((pid, round(t * sr), round(end * sr)))
        t = end
        if gaps[i]:
            gap_end = t + hop_s
            segments.append((SIL_LABEL, t, gap_end))
            t = gap_end
    if spec.tail_sil_hops > 0:
        end = t + spec.tail_sil_hops * hop_s
        segments.append((SIL_LABEL, t, end))
        t = end
    return _Layout(segments, phone_spans, round(t * sr))


def _f0_trajectory(spec: UtteranceSpec, n_samples: int) -> np.ndarray:
    """Slow log-sinusoid spanning [f0/sqrt(rf), f0*sqrt(rf)]."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5EED]))
    mod_hz = rng.uniform(0.8, 1.4)
    phase0 = rng.uniform(0.0, 2.0 * math.pi)
    t = np.arange(n_samples) / spec.sample_rate
    half_log_span = 0.5 * math.log(spec.f0_range_factor)
    return spec.f0_mean * np.exp(half_log_span * np.sin(2.0 * math.pi * mod_hz * t + phase0))


def _measure_tilt(x: np.ndarray, config: AnalysisConfig, voiced_frames: np.ndarray) -> float:
    frame_len, hop = config.frame_length, config.hop_length
    idx = np.arange(frame_len)[None, :] + hop * np.arange(voiced_frames.size)[:, None]
    frames = x[idx][voiced_frames]
    if frames.shape[0] == 0:
        return 0.0
    return float(np.mean(frame_tilt(frames)))


def render_utterance_detail(spec: UtteranceSpec, vocab: Optional[list[str]] = None,
                            analysis: Optional[AnalysisConfig] = None) -> RenderedUtterance:
    """Render audio + alignment + ground-truth prosody for a spec."""
    analysis = analysis or AnalysisConfig(sample_rate=spec.sample_rate)
    spec.validate(analysis.hop_ms)
    vocab = vocab or default_vocab(max(spec.phone_ids) + 1 if spec.phone_ids else 1)
    hop_s = analysis.hop_ms / 1000.0
    layout = _plan_layout(spec, vocab, hop_s)
    n = layout.total_samples
    f0 = _f0_trajectory(spec, n)
    phase = 2.0 * math.pi * np.cumsum(f0) / spec.sample_rate

    raw = np.zeros(n)
    for pid, s0, s1 in layout.phone_spans:
        env = _phone_envelope(pid, spec.envelope_seed, spec.sample_rate)
        pulses = np.convolve(_pulse_train(phase[s0:s1]), np.hanning(PULSE_WIDTH))[: s1 - s0]
        # DC blocker (zero at 0 Hz, pole at ~19 Hz): kills the pulse train's DC
        # so the tilt pole shapes the harmonics instead of amplifying drift,
        # while staying flat across the pitch band.
        excitation = sps.lfilter([1.0, -1.0], [1.0, -0.995], pulses)
        raw[s0:s1] = _apply_envelope(excitation, env)

    # Ground-truth voicing: frames whose center lies inside a phone segment.
    n_frames = analysis.num_frames(n)
    centers = analysis.hop_length * np.arange(n_frames) + analysis.frame_length // 2
    voiced_truth = np.zeros(n_frames, dtype=bool)
    for _, s0, s1 in layout.phone_spans:
        voiced_truth |= (centers >= s0) & (centers < s1)

    # First-order tilt filter; the coefficient is calibrated by bisection so
    # the measured frame tilt over voiced frames lands on the target.
    # measured tilt decreases monotonically as the pole moves toward 1.
    def tilted(rho: float) -> np.ndarray:
        return sps.lfilter([1.0], [1.0, -rho], raw)

    lo, hi = -0.85, 0.99995
    x = tilted(hi)
    if _measure_tilt(x, analysis, voiced_truth) > spec.tilt:
        pass  # most negative achievable; keep hi
    else:
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            x_mid = tilted(mid)
            measured = _measure_tilt(x_mid, analysis, voiced_truth)
            if abs(measured - spec.tilt) < 2e-4:
                x = x_mid
                break
            if measured > spec.tilt:
                lo = mid
            else:
                hi = mid
            x = x_mid

    # Gain calibration: the silence mask is level-relative, hence gain-invariant,
    # so one multiplicative step lands exactly on the target energy.
    buf = AudioBuffer(x / max(np.max(np.abs(x)), 1e-12), spec.sample_rate)
    mask = silence_mask(buf, analysis)
    keep = _sample_mask_from_frames(mask, analysis, n)
    mean_abs = float(np.mean(np.abs(buf.samples[keep]))) if keep.any() else 0.0
    if mean_abs <= 0:
        raise ContractViolation("rendered utterance has no measurable energy")
    gain = 10.0 ** (spec.energy_db / 20.0) / mean_abs
    samples = buf.samples * gain
    peak = float(np.max(np.abs(samples)))
    if peak > 0.999:
        raise ContractViolation(
            f"energy target {spec.energy_db} dB would clip (peak {peak:.3f}); "
            "spec outside documented range")
    audio = AudioBuffer(samples, spec.sample_rate)

    final_tilt = _measure_tilt(samples, analysis, voiced_truth)
    log_f0_truth = np.log(f0[np.minimum(centers[voiced_truth], n - 1)])
    q05, q95 = np.quantile(log_f0_truth, [0.05, 0.95], method="linear")
    durations = [e - s for label, s, e in layout.segments if label != SIL_LABEL]
    truth = ProsodyVector(
        log_pitch=float(np.mean(log_f0_truth)),
        log_pitch_range=float(q95 - q05),
        log_duration=float(np.mean(np.log(durations))),
        energy_db=spec.energy_db,
        spectral_tilt=final_tilt,
        space_tag="raw",
    )

    sil_id = len(vocab)
    model_ids = []
    for label, _, _ in layout.segments:
        model_ids.append(sil_id if label == SIL_LABEL else vocab.index(label))
    return RenderedUtterance(audio, PhoneAlignment(layout.segments), truth, model_ids)


def render_utterance(spec: UtteranceSpec, vocab: Optional[list[str]] = None) -> tuple[AudioBuffer, PhoneAlignment]:
    rendered = render_utterance_detail(spec, vocab)
    return rendered.audio, rendered.alignment


def generate_corpus(config: CorpusConfig, out_dir) -> CorpusManifest:
    """Render a corpus to disk: WAVs, alignment TSVs, and a JSONL manifest."""
    if config.size < 1:
        raise ContractViolation(f"corpus size must be >= 1, got {config.size}")
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "align").mkdir(parents=True, exist_ok=True)
    vocab = default_vocab(config.vocab_size)
    manifest = CorpusManifest(config=config, vocab=vocab)
    root = np.random.default_rng(np.random.SeedSequence(config.seed))
    for i in range(config.size):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, i]))
        n_phones = int(rng.integers(config.phones_per_utt[0], config.phones_per_utt[1] + 1))
        base_dur = rng.uniform(*config.dur_base_ms_range)
        spec = UtteranceSpec(
            phone_ids=rng.integers(0, config.vocab_size, n_phones).tolist(),
            f0_mean=float(rng.uniform(*config.f0_mean_range)),
            f0_range_factor=float(rng.uniform(*config.range_factor_range)),
            phone_dur_ms=(base_dur * rng.uniform(*config.dur_jitter, n_phones)).tolist(),
            energy_db=float(rng.uniform(*config.energy_db_range)),
            tilt=float(rng.uniform(*config.tilt_range)),
            seed=int(rng.integers(0, 2 ** 31 - 1)),
            envelope_seed=config.seed,
            sample_rate=config.sample_rate,
            lead_sil_hops=int(rng.integers(config.lead_sil_hops[0], config.lead_sil_hops[1] + 1)),
            tail_sil_hops=int(rng.integers(config.lead_sil_hops[0], config.lead_sil_hops[1] + 1)),
            gaps_after=(rng.uniform(size=n_phones) < config.gap_probability).tolist(),
        )
        rendered = render_utterance_detail(spec, vocab)
        utt_id = f"utt_{i:04d}"
        wav_path = out_dir / "wav" / f"{utt_id}.wav"
        align_path = out_dir / "align" / f"{utt_id}.tsv"
        write_wav(wav_path, rendered.audio)
        rendered.alignment.save(align_path)
        manifest.entries.append(ManifestEntry(
            utt_id=utt_id,
            wav_path=str(wav_path.relative_to(out_dir)),
            alignment_path=str(align_path.relative_to(out_dir)),
            phone_ids=rendered.model_phone_ids,
            ground_truth=rendered.ground_truth.as_dict(),
        ))
    del root
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest


def save_manifest(manifest: CorpusManifest, path) -> None:
    lines = [json.dumps({"config": manifest.config.to_dict(), "vocab": manifest.vocab},
                        sort_keys=True)]
    for e in manifest.entries:
        lines.append(json.dumps({
            "utt_id": e.utt_id, "wav": e.wav_path, "align": e.alignment_path,
            "phone_ids": e.phone_ids, "ground_truth": e.ground_truth,
        }, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ContractViolation(f"{path}: empty manifest")
    header = json.loads(lines[0])
    manifest = CorpusManifest(config=CorpusConfig.from_dict(header["config"]),
                              vocab=list(header["vocab"]))
    for ln in lines[1:]:
        d = json.loads(ln)
        manifest.entries.append(ManifestEntry(
            utt_id=d["utt_id"], wav_path=d["wav"], alignment_path=d["align"],
            phone_ids=list(d["phone_ids"]), ground_truth=dict(d["ground_truth"])))
    return manifest
