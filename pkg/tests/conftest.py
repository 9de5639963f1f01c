import json

import numpy as np
import pytest

from prosobench.corpus import CorpusConfig, generate_corpus, load_manifest
from prosobench.data import analysis_for, extract_corpus_features, load_examples, train_model
from prosobench.features import NormStats, ProsodyVector, fit_norm_stats
from prosobench.model import ModelConfig, TTSModel, save_checkpoint


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """Small rendered corpus shared by CLI/service/data tests."""
    out = tmp_path_factory.mktemp("mini_corpus")
    config = CorpusConfig(size=10, seed=21, phones_per_utt=(4, 7),
                          dur_base_ms_range=(60.0, 110.0))
    manifest = generate_corpus(config, out)
    return out, manifest


@pytest.fixture(scope="session")
def mini_stats(mini_corpus, tmp_path_factory):
    corpus_dir, manifest = mini_corpus
    records = extract_corpus_features(corpus_dir, manifest)
    feats_path = tmp_path_factory.mktemp("stats") / "features.jsonl"
    feats_path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    vectors = [ProsodyVector.from_dict(r["raw"]) for r in records]
    stats = fit_norm_stats(vectors, config_hash=analysis_for(32).config_hash())
    stats_path = feats_path.parent / "stats.json"
    stats.save(stats_path)
    return stats_path, feats_path, stats


@pytest.fixture(scope="session")
def tiny_checkpoint(mini_corpus, mini_stats, tmp_path_factory):
    """Desk-architecture model trained a couple of steps; not converged."""
    corpus_dir, manifest = mini_corpus
    stats_path, feats_path, stats = mini_stats
    examples = load_examples(corpus_dir, stats, n_mels=32,
                             features_path=feats_path, manifest=manifest)
    model = TTSModel(ModelConfig(vocab=manifest.model_vocab, n_mels=32), seed=5)
    train_model(model, examples, steps=2, batch_size=4, seed=5)
    path = tmp_path_factory.mktemp("ckpt") / "tiny.ckpt"
    save_checkpoint(model, path, norm_stats_hash=stats.config_hash)
    return path, model
