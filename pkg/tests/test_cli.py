import json

import numpy as np
import pytest

from prosobench.cli import main
from prosobench.corpus import load_manifest


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestGenCorpus:
    def test_generates_and_reports(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "gen-corpus", "--out", str(tmp_path / "c"),
                               "--size", "3", "--seed", "11")
        assert code == 0
        info = json.loads(out)
        assert info["size"] == 3
        assert (tmp_path / "c" / "manifest.jsonl").exists()


class TestExtract:
    def test_prints_raw_and_normalized(self, mini_corpus, mini_stats, tmp_path, capsys):
        corpus_dir, manifest = mini_corpus
        stats_path, _, _ = mini_stats
        entry = manifest.entries[0]
        code, out, _ = run_cli(capsys, "extract",
                               "--wav", str(corpus_dir / entry.wav_path),
                               "--align", str(corpus_dir / entry.alignment_path),
                               "--stats", str(stats_path))
        assert code == 0
        payload = json.loads(out)
        assert set(payload) == {"raw", "normalized"}
        assert set(payload["raw"]) == {"pitch", "pitch_range", "duration", "energy", "tilt"}
        assert all(abs(v) <= 1 for v in payload["normalized"].values())

    def test_missing_wav_is_domain_error(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "extract", "--wav", str(tmp_path / "no.wav"),
                               "--align", str(tmp_path / "no.tsv"))
        assert code == 1
        assert "no.wav" in err


class TestSynth:
    def test_writes_wav(self, tiny_checkpoint, tmp_path, capsys):
        ckpt_path, _ = tiny_checkpoint
        out_wav = tmp_path / "u.wav"
        code, out, _ = run_cli(capsys, "synth", "--ckpt", str(ckpt_path),
                               "--phones", "AA BB CC",
                               "--bias", "duration=0.5",
                               "--mode", "absolute",
                               "--max-frames", "40",
                               "--out", str(out_wav))
        assert code == 0
        assert out_wav.exists()
        payload = json.loads(out)
        assert payload["applied"]["duration"] == 0.5
        assert payload["applied"]["pitch"] == 0.0

    def test_bias_out_of_range_is_usage_error(self, tiny_checkpoint, capsys):
        ckpt_path, _ = tiny_checkpoint
        code, _, err = run_cli(capsys, "synth", "--ckpt", str(ckpt_path),
                               "--phones", "AA BB", "--bias", "duration=1.5")
        assert code == 2
        assert "[-1, 1]" in err

    def test_unknown_phone_is_usage_error(self, tiny_checkpoint, capsys):
        ckpt_path, _ = tiny_checkpoint
        code, _, err = run_cli(capsys, "synth", "--ckpt", str(ckpt_path),
                               "--phones", "AA XYZ")
        assert code == 2
        assert "XYZ" in err

    def test_unknown_flag_exits_2(self, tiny_checkpoint):
        with pytest.raises(SystemExit) as excinfo:
            main(["synth", "--ckpt", "x", "--phones", "AA", "--frobnicate"])
        assert excinfo.value.code == 2


class TestReport:
    def test_render_csv_from_sweep_json(self, tmp_path, capsys):
        from prosobench.evaluate import SweepReport, FeatureSweepStats, render_report
        report = SweepReport(
            features={"pitch": FeatureSweepStats([-1.0, 1.0], [-0.8, 0.8],
                                                 [0.1, 0.1], [2, 2], 0.99, 1.0)},
            total_utterances=4, failed_utterances=0, truncation_rate=0.0,
            warnings=[], config={})
        sweep_path = tmp_path / "sweep.json"
        sweep_path.write_text(render_report(report, "json"))
        out_path = tmp_path / "report.csv"
        code, out, _ = run_cli(capsys, "report", "--sweep", str(sweep_path),
                               "--format", "csv", "--out", str(out_path))
        assert code == 0
        lines = out_path.read_text().strip().splitlines()
        assert lines[0].startswith("feature,")
        assert len(lines) == 3

    def test_svg_output(self, tmp_path, capsys):
        from prosobench.evaluate import SweepReport, FeatureSweepStats, render_report
        report = SweepReport(
            features={name: FeatureSweepStats([-1.0, 1.0], [-0.5, 0.5], [0.0, 0.0],
                                              [1, 1], 1.0, 1.0)
                      for name in ["pitch", "pitch_range", "duration", "energy", "tilt"]},
            total_utterances=2, failed_utterances=0, truncation_rate=0.0,
            warnings=[], config={})
        sweep_path = tmp_path / "sweep.json"
        sweep_path.write_text(render_report(report, "json"))
        code, out, _ = run_cli(capsys, "report", "--sweep", str(sweep_path),
                               "--format", "svg")
        assert code == 0
        assert out.count("panel-") == 5


class TestConfigPrecedence:
    def test_flag_beats_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"size": 5, "seed": 1}))
        code, out, _ = run_cli(capsys, "--config", str(cfg), "gen-corpus",
                               "--out", str(tmp_path / "c"), "--size", "2")
        assert code == 0
        assert json.loads(out)["size"] == 2  # flag wins over config's 5

    def test_config_beats_default(self, tmp_path, capsys):
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"size": 4}))
        code, out, _ = run_cli(capsys, "--config", str(cfg), "gen-corpus",
                               "--out", str(tmp_path / "c2"))
        assert code == 0
        assert json.loads(out)["size"] == 4


class TestTrainPipeline:
    def test_fit_stats_and_train_smoke(self, mini_corpus, tmp_path, capsys):
        corpus_dir, _ = mini_corpus
        stats_path = tmp_path / "stats.json"
        feats_path = tmp_path / "features.jsonl"
        code, out, _ = run_cli(capsys, "fit-stats", "--corpus", str(corpus_dir),
                               "--out", str(stats_path),
                               "--features-out", str(feats_path))
        assert code == 0
        assert stats_path.exists() and feats_path.exists()
        ckpt = tmp_path / "m.ckpt"
        log = tmp_path / "log.jsonl"
        code, out, _ = run_cli(capsys, "train", "--corpus", str(corpus_dir),
                               "--stats", str(stats_path), "--features", str(feats_path),
                               "--out", str(ckpt), "--steps", "2", "--log", str(log))
        assert code == 0
        assert ckpt.exists()
        records = [json.loads(l) for l in log.read_text().splitlines()]
        assert len(records) == 2
        assert set(records[0]) >= {"step", "mel_l1", "stop_bce", "prosody_mse", "grad_norm"}
