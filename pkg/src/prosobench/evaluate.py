"""Objective bias-sweep evaluation: synthesize across a bias grid, measure the
prosodic features of the outputs, and report measured-vs-target statistics.

Each prosodic dimension is varied independently over the grid (absolute bias
mode) while the others sit at zero; the all-zero point is synthesized once per
sentence and shared across dimensions. Pitch, energy, and tilt are measured
from Griffin-Lim audio; duration comes from attention-derived phone spans, so
no forced alignment of synthetic output is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as scistats

from .audio import AnalysisConfig, AudioBuffer, MelSpectrogram, SilenceMask
from .errors import ContractViolation, EvaluationError, ProsobenchError
from .features import FEATURE_NAMES, NormStats
from .features import utterance_energy, utterance_pitch_features, utterance_spectral_tilt
from .model import SynthesisResult, TTSModel
from .pitch import PitchConfig, PitchContour, track_pitch
from .vocoder import mel_to_linear, reconstruct

REPORT_SCHEMA_VERSION = 1


def sweep_utterance_count(dims: int, grid_size: int, sentences: int,
                          systems: int = 1, baseline_sentences: int = 0,
                          grid_has_zero: bool = True) -> int:
    """Total utterances for a full sweep, deduplicating the shared zero point."""
    total = dims * grid_size * sentences * systems + baseline_sentences
    if grid_has_zero and dims > 0:
        total -= (dims - 1) * systems * sentences
    return total


@dataclass
class SweepRecord:
    sentence_idx: int
    dim: Optional[int]              # None for the shared all-zero synthesis
    bias_value: float
    result: SynthesisResult


@dataclass
class SweepSet:
    records: list[SweepRecord]
    grid: list[float]
    dims: list[int]
    sentences: list[list[int]]
    truncation_rate: float
    warnings: list[str] = field(default_factory=list)
    wrap_sil_id: Optional[int] = None


def default_grid(points: int = 9) -> list[float]:
    return [round(x, 6) for x in np.linspace(-1.0, 1.0, points)]


def bias_sweep(model: TTSModel, sentences: Sequence[Sequence[int]],
               grid: Optional[Sequence[float]] = None,
               dims: Optional[Sequence[int]] = None,
               max_frames: int = 600,
               wrap_sil_id: Optional[int] = None) -> SweepSet:
    """Synthesize every (dimension, grid value, sentence) cell in absolute mode.

    `wrap_sil_id` prepends/appends a silence token to every sentence so the
    inputs match the training distribution; those positions are excluded from
    attention-span duration measurement downstream.
    """
    if not sentences:
        raise ContractViolation("bias_sweep needs at least one sentence")
    grid = list(grid) if grid is not None else default_grid()
    if not grid:
        raise ContractViolation("bias_sweep needs a non-empty grid")
    dims = list(dims) if dims is not None else list(range(5))
    records: list[SweepRecord] = []
    truncated = 0
    zero_cache: dict[int, SynthesisResult] = {}
    for si, sentence in enumerate(sentences):
        ids = list(sentence)
        if wrap_sil_id is not None:
            ids = [wrap_sil_id] + ids + [wrap_sil_id]
        for d in dims:
            for g in grid:
                if g == 0.0:
                    if si not in zero_cache:
                        zero_cache[si] = model.synthesize(ids, [0.0] * 5,
                                                          "absolute", max_frames)
                        records.append(SweepRecord(si, None, 0.0, zero_cache[si]))
                    continue
                bias = [0.0] * 5
                bias[d] = g
                result = model.synthesize(ids, bias, "absolute", max_frames)
                records.append(SweepRecord(si, d, g, result))
    for r in records:
        truncated += int(r.result.truncated)
    rate = truncated / max(len(records), 1)
    warnings = []
    if rate > 0.10:
        warnings.append(f"truncation rate {rate:.1%} exceeds 10%")
    return SweepSet(records, grid, dims, [list(s) for s in sentences], rate, warnings,
                    wrap_sil_id)


def eval_pitch_config() -> PitchConfig:
    """Voicing thresholds relaxed for noisy-narrowband Griffin-Lim audio.

    Mel inversion from a coarse filterbank smears harmonics into humps; the
    default thresholds tuned for clean periodic audio leave too few voiced
    frames to aggregate.
    """
    return PitchConfig(fmin_search=100.0, fmax_search=470.0, yin_threshold=0.4,
                       acf_voicing_threshold=0.18, cepstral_prominence=0.1)


def mel_silence_mask(logmel: np.ndarray, n_frames: int, threshold_db: float = -40.0) -> SilenceMask:
    """Silence decided from the generated mel itself.

    Griffin-Lim noise sits above the waveform-domain silence threshold, but
    the synthesized mel states silence explicitly via its floor.
    """
    level = np.mean(np.exp(logmel), axis=1)
    peak = float(level.max()) if level.size else 0.0
    if peak <= 0:
        return SilenceMask(np.ones(n_frames, dtype=bool))
    db = 20.0 * np.log10(np.maximum(level, 1e-300) / peak)
    mask = db < threshold_db
    if mask.size >= n_frames:
        return SilenceMask(mask[:n_frames])
    return SilenceMask(np.concatenate([mask, np.ones(n_frames - mask.size, dtype=bool)]))


def condition_contour(contour: PitchContour, octave_tol: float = 0.45,
                      median_width: int = 5) -> PitchContour:
    """Snap octave-class outliers toward the utterance median and median-smooth.

    Tracking a reconstruction hump occasionally flips to half/double
    frequency; those flips inflate the pitch-range quantiles far more than
    they move the mean.
    """
    f0 = contour.f0.copy()
    voiced = contour.voiced.copy()
    vf = f0[voiced]
    if vf.size == 0:
        return contour
    med = float(np.median(vf))
    for k in np.flatnonzero(voiced):
        dev = np.log(f0[k] / med)
        if abs(dev) > octave_tol:
            for cand in (f0[k] / 2.0, f0[k] * 2.0):
                if abs(np.log(cand / med)) <= octave_tol:
                    f0[k] = cand
                    break
            else:
                voiced[k] = False
    n = f0.size
    half = median_width // 2
    smoothed = f0.copy()
    for k in np.flatnonzero(voiced):
        lo, hi = max(0, k - half), min(n, k + half + 1)
        window_voiced = voiced[lo:hi]
        if window_voiced.sum() >= 2:
            smoothed[k] = np.median(f0[lo:hi][window_voiced])
    return PitchContour(smoothed, voiced)


def measure_attention_duration(result: SynthesisResult, hop_sec: float,
                               frames_per_step: int,
                               exclude_positions: Sequence[int] = ()) -> float:
    """Mean log phone duration from argmax-attention span lengths."""
    path = result.attention_path
    if path.size == 0:
        raise EvaluationError("empty attention path")
    positions, counts = np.unique(path, return_counts=True)
    keep = ~np.isin(positions, list(exclude_positions))
    if not keep.any():
        raise EvaluationError("no phone positions attended")
    spans = counts[keep] * frames_per_step * hop_sec
    return float(np.mean(np.log(spans)))


def measure_record(mel: np.ndarray, result: SynthesisResult, analysis: AnalysisConfig,
                   pitch_config: PitchConfig, hop_sec: float, frames_per_step: int,
                   gl_iterations: int = 50,
                   audio: Optional[AudioBuffer] = None,
                   exclude_positions: Sequence[int] = ()) -> dict[str, float]:
    """Raw feature measurements of one synthesized utterance.

    Returns a dict with whichever of the five features could be measured.
    Pitch, energy, and tilt come from un-normalized Griffin-Lim audio
    (magnitude power 1.0 so levels stay faithful); duration comes from the
    attention path.
    """
    out: dict[str, float] = {}
    out["duration"] = measure_attention_duration(result, hop_sec, frames_per_step,
                                                 exclude_positions)
    if audio is None:
        spec = mel_to_linear(MelSpectrogram(mel, analysis))
        audio, _ = reconstruct(spec, gl_iterations, magnitude_power=1.0)
    if len(audio) < analysis.frame_length:
        return out
    mask = mel_silence_mask(mel, analysis.num_frames(len(audio)))
    if not mask.mask.all():
        try:
            out["energy"] = utterance_energy(audio, mask, analysis)
        except ProsobenchError:
            pass
    contour = condition_contour(track_pitch(audio, pitch_config, analysis, mask))
    try:
        log_pitch, log_range = utterance_pitch_features(contour)
        out["pitch"] = log_pitch
        out["pitch_range"] = log_range
    except ProsobenchError:
        pass
    try:
        out["tilt"] = utterance_spectral_tilt(audio, contour, analysis)
    except ProsobenchError:
        pass
    return out


@dataclass
class FeatureSweepStats:
    grid: list[float]
    mean: list[float]
    std: list[float]
    n: list[int]
    pearson_r: float
    spearman_rho: float


@dataclass
class SweepReport:
    features: dict[str, FeatureSweepStats]
    total_utterances: int
    failed_utterances: int
    truncation_rate: float
    warnings: list[str]
    config: dict
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "total_utterances": self.total_utterances,
            "failed_utterances": self.failed_utterances,
            "truncation_rate": self.truncation_rate,
            "warnings": list(self.warnings),
            "config": self.config,
            "features": {
                name: {"grid": fs.grid, "mean": fs.mean, "std": fs.std, "n": fs.n,
                       "pearson_r": fs.pearson_r, "spearman_rho": fs.spearman_rho}
                for name, fs in self.features.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        feats = {name: FeatureSweepStats(sub["grid"], sub["mean"], sub["std"], sub["n"],
                                         sub["pearson_r"], sub["spearman_rho"])
                 for name, sub in d["features"].items()}
        return cls(feats, d["total_utterances"], d["failed_utterances"],
                   d["truncation_rate"], list(d["warnings"]), d["config"],
                   d.get("schema_version", REPORT_SCHEMA_VERSION))


def measure_sweep(sweep: SweepSet, stats: NormStats, analysis: AnalysisConfig,
                  pitch_config: Optional[PitchConfig] = None, gl_iterations: int = 50,
                  frames_per_step: int = 2, max_failure_rate: float = 0.05) -> SweepReport:
    """Measure every synthesized utterance and aggregate per (feature, grid value)."""
    pitch_config = pitch_config or eval_pitch_config()
    hop_sec = analysis.hop_ms / 1000.0
    pairs: dict[int, list[tuple[float, float]]] = {d: [] for d in range(5)}
    failed = 0
    for record in sweep.records:
        exclude: tuple[int, ...] = ()
        if sweep.wrap_sil_id is not None:
            wrapped_len = len(sweep.sentences[record.sentence_idx]) + 2
            exclude = (0, wrapped_len - 1)
        try:
            measured = measure_record(record.result.mel, record.result, analysis,
                                      pitch_config, hop_sec, frames_per_step, gl_iterations,
                                      exclude_positions=exclude)
        except ProsobenchError:
            failed += 1
            continue
        wanted = sweep.dims if record.dim is None else [record.dim]
        missing = False
        for d in wanted:
            name = FEATURE_NAMES[d]
            if name not in measured:
                missing = True
                continue
            fs = stats.features[name]
            normalized = float(np.clip((measured[name] - fs.median) / (3.0 * fs.sigma), -1, 1))
            pairs[d].append((record.bias_value, normalized))
        if missing:
            failed += 1
    total = len(sweep.records)
    if total and failed / total > max_failure_rate:
        raise EvaluationError(
            f"{failed}/{total} utterances unmeasurable (> {max_failure_rate:.0%})")
    features: dict[str, FeatureSweepStats] = {}
    for d in sweep.dims:
        name = FEATURE_NAMES[d]
        data = pairs[d]
        grid_sorted = sorted(sweep.grid)
        means, stds, ns = [], [], []
        for g in grid_sorted:
            values = np.array([m for b, m in data if b == g])
            ns.append(int(values.size))
            means.append(float(values.mean()) if values.size else float("nan"))
            stds.append(float(values.std()) if values.size else float("nan"))
        targets = np.array([b for b, _ in data])
        measured_vals = np.array([m for _, m in data])
        if targets.size >= 2 and np.std(targets) > 0 and np.std(measured_vals) > 0:
            pearson = float(scistats.pearsonr(targets, measured_vals)[0])
        else:
            pearson = float("nan")
        valid = [(g, m) for g, m in zip(grid_sorted, means) if np.isfinite(m)]
        if len(valid) >= 2:
            rho = float(scistats.spearmanr([g for g, _ in valid], [m for _, m in valid])[0])
        else:
            rho = float("nan")
        features[name] = FeatureSweepStats(grid_sorted, means, stds, ns, pearson, rho)
    return SweepReport(
        features=features,
        total_utterances=total,
        failed_utterances=failed,
        truncation_rate=sweep.truncation_rate,
        warnings=list(sweep.warnings),
        config={"grid": sweep.grid, "dims": sweep.dims,
                "n_sentences": len(sweep.sentences), "gl_iterations": gl_iterations,
                "analysis": analysis.to_dict()},
    )


# -- rendering ----------------------------------------------------------------

def render_report(report: SweepReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if fmt == "csv":
        lines = ["feature,target_bias,n,mean_measured,std_measured"]
        for name, fs in report.features.items():
            for g, n, m, s in zip(fs.grid, fs.n, fs.mean, fs.std):
                lines.append(f"{name},{g},{n},{m:.6f},{s:.6f}")
        return "\n".join(lines) + "\n"
    if fmt == "svg":
        return _render_svg(report)
    raise ContractViolation(f"unknown report format {fmt!r}")


def _render_svg(report: SweepReport) -> str:
    """One panel per feature: target bias on x, measured mean +/- std on y."""
    panel_w, panel_h, margin = 220, 220, 40
    names = list(report.features)
    width = len(names) * panel_w
    height = panel_h + 2 * margin
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']

    def sx(panel_idx, v):
        inner = panel_w - 2 * margin
        return panel_idx * panel_w + margin + (v + 1.0) / 2.0 * inner

    def sy(v):
        inner = panel_h - margin
        return margin + (1.0 - (v + 1.0) / 2.0) * inner

    for i, name in enumerate(names):
        fs = report.features[name]
        x0, x1 = sx(i, -1), sx(i, 1)
        parts.append(f'<g id="panel-{name}">')
        parts.append(f'<rect x="{x0:.1f}" y="{sy(1):.1f}" width="{x1 - x0:.1f}" '
                     f'height="{sy(-1) - sy(1):.1f}" fill="none" stroke="#444"/>')
        parts.append(f'<line x1="{x0:.1f}" y1="{sy(-1):.1f}" x2="{x1:.1f}" y2="{sy(1):.1f}" '
                     f'stroke="#bbb" stroke-dasharray="4 3"/>')
        parts.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{margin - 12}" font-size="13" '
                     f'text-anchor="middle">{name} (r={fs.pearson_r:.2f})</text>')
        points = []
        for g, m, s in zip(fs.grid, fs.mean, fs.std):
            if not np.isfinite(m):
                continue
            px, py = sx(i, g), sy(max(-1.0, min(1.0, m)))
            if np.isfinite(s):
                y_lo, y_hi = sy(max(-1.0, m - s)), sy(min(1.0, m + s))
                parts.append(f'<line x1="{px:.1f}" y1="{y_lo:.1f}" x2="{px:.1f}" '
                             f'y2="{y_hi:.1f}" stroke="#d62728"/>')
            parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="3" fill="#1f77b4"/>')
            points.append(f"{px:.1f},{py:.1f}")
        if len(points) >= 2:
            parts.append(f'<polyline points="{" ".join(points)}" fill="none" stroke="#1f77b4"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts)
