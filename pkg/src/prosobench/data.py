"""Corpus loading, batching, and the training loop."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .audio import AnalysisConfig, mel_spectrogram, read_wav
from .corpus import CorpusManifest, load_manifest
from .errors import ContractViolation
from .features import NormStats, ProsodyVector, extract_prosody, normalize, parse_alignment
from .model import Batch, TTSModel


@dataclass
class Example:
    utt_id: str
    phone_ids: list[int]
    mel: np.ndarray        # (T, n_mels) log-mel target
    prosody: np.ndarray    # (5,) normalized


def analysis_for(n_mels: int, sample_rate: int = 24000) -> AnalysisConfig:
    return AnalysisConfig(sample_rate=sample_rate, n_mels=n_mels)


def load_examples(corpus_dir, stats: NormStats, n_mels: int,
                  features_path=None, use_ground_truth: bool = False,
                  manifest: Optional[CorpusManifest] = None) -> list[Example]:
    """Build training examples: log-mel targets plus normalized prosody.

    Prosody supervision comes from (in order of preference) a feature-dump
    JSONL, the extraction pipeline run on the audio, or the manifest's
    ground-truth vectors when `use_ground_truth` is set.
    """
    corpus_dir = Path(corpus_dir)
    manifest = manifest or load_manifest(corpus_dir / "manifest.jsonl")
    analysis = analysis_for(n_mels, manifest.config.sample_rate)
    dumped: dict[str, dict] = {}
    if features_path is not None:
        for line in Path(features_path).read_text().splitlines():
            if line.strip():
                d = json.loads(line)
                dumped[d["utt_id"]] = d["raw"]
    examples = []
    for entry in manifest.entries:
        audio = read_wav(corpus_dir / entry.wav_path)
        mel = mel_spectrogram(audio, analysis).frames
        if entry.utt_id in dumped:
            raw = ProsodyVector.from_dict(dumped[entry.utt_id])
        elif use_ground_truth:
            raw = ProsodyVector.from_dict(entry.ground_truth)
        else:
            alignment = parse_alignment(corpus_dir / entry.alignment_path)
            raw = extract_prosody(audio, alignment)
        examples.append(Example(entry.utt_id, list(entry.phone_ids), mel,
                                normalize(raw, stats).as_array()))
    return examples


def extract_corpus_features(corpus_dir, manifest: Optional[CorpusManifest] = None,
                            progress: Optional[Callable[[int, int], None]] = None) -> list[dict]:
    """Run the extraction pipeline over a corpus; one record per utterance."""
    corpus_dir = Path(corpus_dir)
    manifest = manifest or load_manifest(corpus_dir / "manifest.jsonl")
    records = []
    for i, entry in enumerate(manifest.entries):
        audio = read_wav(corpus_dir / entry.wav_path)
        alignment = parse_alignment(corpus_dir / entry.alignment_path)
        raw = extract_prosody(audio, alignment)
        records.append({"utt_id": entry.utt_id, "raw": raw.as_dict()})
        if progress:
            progress(i + 1, len(manifest.entries))
    return records


def make_batch(examples: list[Example], frames_per_step: int, pad_value: float) -> Batch:
    bsz = len(examples)
    tin = max(len(e.phone_ids) for e in examples)
    ids = np.zeros((bsz, tin), dtype=np.int64)
    in_lengths = np.zeros(bsz, dtype=np.int64)
    mel_lengths = np.array([e.mel.shape[0] for e in examples], dtype=np.int64)
    tfr = int(math.ceil(mel_lengths.max() / frames_per_step)) * frames_per_step
    n_mels = examples[0].mel.shape[1]
    mel = np.full((bsz, tfr, n_mels), pad_value)
    prosody = np.zeros((bsz, 5))
    for b, e in enumerate(examples):
        ids[b, :len(e.phone_ids)] = e.phone_ids
        in_lengths[b] = len(e.phone_ids)
        mel[b, :e.mel.shape[0]] = e.mel
        prosody[b] = e.prosody
    return Batch(ids, in_lengths, mel, mel_lengths, prosody)


def batch_plan(examples: list[Example], batch_size: int) -> list[list[int]]:
    """Length-bucketed index groups (stable order; shuffle happens per epoch)."""
    order = sorted(range(len(examples)), key=lambda i: (examples[i].mel.shape[0], i))
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def train_model(model: TTSModel, examples: list[Example], steps: int,
                batch_size: int = 8, lr: float = 1e-3, clip_norm: float = 5.0,
                seed: int = 0, log_path=None,
                progress: Optional[Callable[[dict], None]] = None) -> list[dict]:
    """Deterministic training loop; returns (and optionally writes) the loss log."""
    if not examples:
        raise ContractViolation("cannot train on an empty example list")
    pad_value = float(np.log(1e-5))
    plan = batch_plan(examples, batch_size)
    optimizer = ad.Adam(model.params(), lr=lr, clip_norm=clip_norm)
    log: list[dict] = []
    epoch = 0
    out = open(log_path, "w") if log_path else None
    try:
        while len(log) < steps:
            order = np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(len(plan))
            for bi in order:
                if len(log) >= steps:
                    break
                group = [examples[i] for i in plan[bi]]
                batch = make_batch(group, model.config.frames_per_step, pad_value)
                losses = model.train_step(batch, optimizer)
                record = {"step": losses["step"], "mel_l1": losses["mel_l1"],
                          "stop_bce": losses["stop_bce"], "prosody_mse": losses["prosody_mse"],
                          "grad_norm": losses["grad_norm"], "total": losses["total"]}
                log.append(record)
                if out:
                    out.write(json.dumps(record) + "\n")
                if progress:
                    progress(record)
            epoch += 1
    finally:
        if out:
            out.close()
    return log
