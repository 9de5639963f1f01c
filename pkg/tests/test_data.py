import numpy as np
import pytest

from prosobench.data import batch_plan, load_examples, make_batch, train_model
from prosobench.errors import ContractViolation
from prosobench.model import ModelConfig, TTSModel


class TestLoadExamples:
    def test_examples_match_manifest(self, mini_corpus, mini_stats):
        corpus_dir, manifest = mini_corpus
        _, feats_path, stats = mini_stats
        examples = load_examples(corpus_dir, stats, n_mels=32,
                                 features_path=feats_path, manifest=manifest)
        assert len(examples) == len(manifest.entries)
        for ex, entry in zip(examples, manifest.entries):
            assert ex.phone_ids == entry.phone_ids
            assert ex.mel.shape[1] == 32
            assert np.all(np.abs(ex.prosody) <= 1.0)

    def test_ground_truth_fallback(self, mini_corpus, mini_stats):
        corpus_dir, manifest = mini_corpus
        _, _, stats = mini_stats
        examples = load_examples(corpus_dir, stats, n_mels=32,
                                 use_ground_truth=True, manifest=manifest)
        assert len(examples) == len(manifest.entries)


class TestBatching:
    def test_make_batch_pads_and_masks(self, mini_corpus, mini_stats):
        corpus_dir, manifest = mini_corpus
        _, feats_path, stats = mini_stats
        examples = load_examples(corpus_dir, stats, n_mels=32,
                                 features_path=feats_path, manifest=manifest)
        batch = make_batch(examples[:4], frames_per_step=2, pad_value=-11.5)
        assert batch.phone_ids.shape[0] == 4
        assert batch.mel.shape[1] % 2 == 0
        for b in range(4):
            assert batch.in_lengths[b] == len(examples[b].phone_ids)
            assert batch.mel_lengths[b] == examples[b].mel.shape[0]
            np.testing.assert_array_equal(
                batch.mel[b, :batch.mel_lengths[b]], examples[b].mel)

    def test_plan_covers_all_examples_once(self, mini_corpus, mini_stats):
        corpus_dir, manifest = mini_corpus
        _, feats_path, stats = mini_stats
        examples = load_examples(corpus_dir, stats, n_mels=32,
                                 features_path=feats_path, manifest=manifest)
        plan = batch_plan(examples, batch_size=3)
        flat = [i for group in plan for i in group]
        assert sorted(flat) == list(range(len(examples)))


class TestTrainLoop:
    def test_empty_examples_rejected(self):
        model = TTSModel(ModelConfig(vocab=["AA", "sil"], embedding_dim=4,
                                     encoder_hidden=3, prosody_hidden=3,
                                     decoder_hidden=5, n_mels=4, attention_dim=4,
                                     location_filters=2, location_width=3), seed=0)
        with pytest.raises(ContractViolation):
            train_model(model, [], steps=1)

    def test_log_schema_and_determinism(self, mini_corpus, mini_stats, tmp_path):
        corpus_dir, manifest = mini_corpus
        _, feats_path, stats = mini_stats
        examples = load_examples(corpus_dir, stats, n_mels=32,
                                 features_path=feats_path, manifest=manifest)

        def run():
            model = TTSModel(ModelConfig(vocab=manifest.model_vocab, n_mels=32), seed=3)
            return train_model(model, examples, steps=3, batch_size=4, seed=3)

        log_a, log_b = run(), run()
        assert log_a == log_b
        assert [r["step"] for r in log_a] == [1, 2, 3]
        assert set(log_a[0]) == {"step", "mel_l1", "stop_bce", "prosody_mse",
                                 "grad_norm", "total"}
