"""Command-line interface: extract, fit-stats, gen-corpus, train, synth, sweep,
report, serve.

Exit codes: 0 success, 1 domain error, 2 usage error. Diagnostics go to
stderr; data goes to stdout or the requested output files. An optional JSON
config file supplies defaults; explicit flags win over the config file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio import AnalysisConfig, read_wav, write_wav
from .corpus import CorpusConfig, generate_corpus, load_manifest
from .data import analysis_for, extract_corpus_features, load_examples, train_model
from .errors import ProsobenchError
from .features import (
    FEATURE_NAMES,
    NormStats,
    ProsodyVector,
    extract_prosody,
    fit_norm_stats,
    normalize,
    parse_alignment,
)
from .model import ModelConfig, TTSModel, load_checkpoint, save_checkpoint
from .evaluate import (
    SweepReport,
    bias_sweep,
    default_grid,
    measure_sweep,
    render_report,
)
from .vocoder import griffin_lim, mel_to_linear
from .audio import MelSpectrogram


class UsageError(Exception):
    pass


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc


def _setting(args, config: dict, name: str, default):
    """Precedence: explicit flag > config file > built-in default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _parse_bias(pairs: list[str]) -> list[float]:
    bias = dict.fromkeys(FEATURE_NAMES, 0.0)
    for pair in pairs or []:
        if "=" not in pair:
            raise UsageError(f"bias must be name=value, got {pair!r}")
        name, _, raw = pair.partition("=")
        if name not in bias:
            raise UsageError(f"unknown bias dimension {name!r}; "
                             f"choose from {', '.join(FEATURE_NAMES)}")
        try:
            value = float(raw)
        except ValueError as exc:
            raise UsageError(f"bias value for {name} is not a number: {raw!r}") from exc
        if not -1.0 <= value <= 1.0:
            raise UsageError(f"bias {name}={value} outside [-1, 1]")
        bias[name] = value
    return [bias[n] for n in FEATURE_NAMES]


def _parse_dims(spec: str) -> list[int]:
    names = [s.strip() for s in spec.split(",") if s.strip()]
    dims = []
    for n in names:
        if n not in FEATURE_NAMES:
            raise UsageError(f"unknown feature {n!r}; choose from {', '.join(FEATURE_NAMES)}")
        dims.append(FEATURE_NAMES.index(n))
    return dims


def cmd_gen_corpus(args, config):
    corpus = CorpusConfig(
        size=int(_setting(args, config, "size", 500)),
        vocab_size=int(_setting(args, config, "vocab-size", 20)),
        seed=int(_setting(args, config, "seed", 7)),
    )
    manifest = generate_corpus(corpus, args.out)
    print(json.dumps({"corpus": str(args.out), "size": len(manifest.entries),
                      "vocab": manifest.vocab}))
    return 0


def cmd_extract(args, config):
    audio = read_wav(args.wav)
    alignment = parse_alignment(args.align)
    raw = extract_prosody(audio, alignment, AnalysisConfig(sample_rate=audio.sample_rate))
    out = {"raw": raw.as_dict()}
    if args.stats:
        stats = NormStats.load(args.stats)
        out["normalized"] = normalize(raw, stats).as_dict()
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_fit_stats(args, config):
    manifest = load_manifest(Path(args.corpus) / "manifest.jsonl")
    print(f"extracting features from {len(manifest.entries)} utterances...",
          file=sys.stderr)
    records = extract_corpus_features(args.corpus, manifest)
    vectors = [ProsodyVector.from_dict(r["raw"]) for r in records]
    n_mels = int(_setting(args, config, "n-mels", 32))
    analysis = analysis_for(n_mels, manifest.config.sample_rate)
    stats = fit_norm_stats(vectors, config_hash=analysis.config_hash(),
                           analysis_config=analysis.to_dict())
    if args.features_out:
        with open(args.features_out, "w") as f:
            for record, vector in zip(records, vectors):
                record["normalized"] = normalize(vector, stats).as_dict()
                f.write(json.dumps(record) + "\n")
    stats.save(args.out)
    print(json.dumps(stats.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_train(args, config):
    stats = NormStats.load(args.stats)
    manifest = load_manifest(Path(args.corpus) / "manifest.jsonl")
    n_mels = int(_setting(args, config, "n-mels", 32))
    steps = int(_setting(args, config, "steps", 3000))
    seed = int(_setting(args, config, "seed", 0))
    batch_size = int(_setting(args, config, "batch-size", 8))
    lr = float(_setting(args, config, "lr", 1e-3))
    print(f"loading {len(manifest.entries)} examples...", file=sys.stderr)
    examples = load_examples(args.corpus, stats, n_mels,
                             features_path=args.features, manifest=manifest)
    model = TTSModel(ModelConfig(vocab=manifest.model_vocab, n_mels=n_mels), seed=seed)

    def progress(rec):
        if rec["step"] % 50 == 0:
            print(f"step {rec['step']}: total {rec['total']:.4f} "
                  f"mel {rec['mel_l1']:.4f} stop {rec['stop_bce']:.4f} "
                  f"prosody {rec['prosody_mse']:.4f}", file=sys.stderr)

    train_model(model, examples, steps, batch_size=batch_size, lr=lr, seed=seed,
                log_path=args.log, progress=progress)
    save_checkpoint(model, args.out, norm_stats_hash=stats.config_hash,
                    extra={"analysis_config": analysis_for(n_mels).to_dict()})
    print(json.dumps({"checkpoint": str(args.out), "steps": model.trained_steps}))
    return 0


def _resolve_phones(model: TTSModel, phones: str) -> list[int]:
    label_to_id = {label: i for i, label in enumerate(model.config.vocab)}
    tokens = phones.split()
    unknown = [t for t in tokens if t not in label_to_id]
    if unknown:
        raise UsageError(f"unknown phone labels: {' '.join(unknown)}")
    if not tokens:
        raise UsageError("empty phone sequence")
    return [label_to_id[t] for t in tokens]


def cmd_synth(args, config):
    model, _ = load_checkpoint(args.ckpt)
    ids = _resolve_phones(model, args.phones)
    bias = _parse_bias(args.bias)
    mode = _setting(args, config, "mode", "absolute")
    max_frames = int(_setting(args, config, "max-frames", 600))
    result = model.synthesize(ids, bias, mode, max_frames)
    analysis = AnalysisConfig(n_mels=model.config.n_mels)
    if args.out:
        audio = griffin_lim(mel_to_linear(MelSpectrogram(result.mel, analysis)),
                            iterations=int(_setting(args, config, "gl-iterations", 50)))
        write_wav(args.out, audio)
    print(json.dumps({
        "frames": result.num_frames,
        "predicted": dict(zip(FEATURE_NAMES, result.predicted.tolist())),
        "applied": dict(zip(FEATURE_NAMES, result.applied.tolist())),
        "truncated": result.truncated,
        "wav": str(args.out) if args.out else None,
    }, indent=2, sort_keys=True))
    return 0


def cmd_sweep(args, config):
    model, _ = load_checkpoint(args.ckpt)
    stats = NormStats.load(args.stats)
    rng = np.random.default_rng(int(_setting(args, config, "seed", 2024)))
    if args.sentences:
        lines = [ln for ln in Path(args.sentences).read_text().splitlines() if ln.strip()]
        sentences = [_resolve_phones(model, ln) for ln in lines]
    else:
        n = int(_setting(args, config, "n-sentences", 20))
        # sample from the phone vocabulary, excluding the trailing silence token
        n_phones = len(model.config.vocab) - 1
        sentences = [rng.integers(0, n_phones, int(rng.integers(5, 16))).tolist()
                     for _ in range(n)]
    grid = default_grid(int(_setting(args, config, "grid-points", 9)))
    dims = _parse_dims(args.dims) if args.dims else list(range(5))
    vocab = model.config.vocab
    wrap_sil = vocab.index("sil") if "sil" in vocab else None
    print(f"sweeping {len(dims)} dims x {len(grid)} values x {len(sentences)} sentences...",
          file=sys.stderr)
    sweep = bias_sweep(model, sentences, grid, dims,
                       max_frames=int(_setting(args, config, "max-frames", 600)),
                       wrap_sil_id=wrap_sil)
    report = measure_sweep(sweep, stats, analysis_for(model.config.n_mels),
                           gl_iterations=int(_setting(args, config, "gl-iterations", 40)),
                           frames_per_step=model.config.frames_per_step)
    Path(args.out).write_text(render_report(report, "json"))
    summary = {name: {"pearson_r": fs.pearson_r, "spearman_rho": fs.spearman_rho}
               for name, fs in report.features.items()}
    print(json.dumps({"report": str(args.out), "truncation_rate": report.truncation_rate,
                      "correlations": summary}, indent=2, sort_keys=True))
    return 0


def cmd_report(args, config):
    report = SweepReport.from_dict(json.loads(Path(args.sweep).read_text()))
    rendered = render_report(report, args.format)
    if args.out:
        Path(args.out).write_text(rendered)
        print(json.dumps({"written": str(args.out), "format": args.format}))
    else:
        print(rendered)
    return 0


def cmd_serve(args, config):
    import uvicorn
    from .service import create_app
    model, _ = load_checkpoint(args.ckpt)
    stats = NormStats.load(args.stats)
    app = create_app(model, stats, analysis_for(model.config.n_mels), ui_dir=args.ui)
    host = _setting(args, config, "host", "127.0.0.1")
    port = int(_setting(args, config, "port", 8080))
    print(f"serving on http://{host}:{port}", file=sys.stderr)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prosobench",
                                     description="Prosody-controllable TTS workbench")
    parser.add_argument("--config", help="JSON config file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="render a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_gen_corpus)

    p = sub.add_parser("extract", help="extract prosodic features from a WAV + alignment")
    p.add_argument("--wav", required=True)
    p.add_argument("--align", required=True)
    p.add_argument("--stats")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("fit-stats", help="extract corpus features and fit normalization stats")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--features-out")
    p.add_argument("--n-mels", type=int)
    p.set_defaults(fn=cmd_fit_stats)

    p = sub.add_parser("train", help="train the seq2seq model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--features")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-mels", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--log")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("synth", help="synthesize one utterance")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--bias", action="append", metavar="NAME=VALUE")
    p.add_argument("--mode", choices=["absolute", "additive"])
    p.add_argument("--out")
    p.add_argument("--max-frames", type=int)
    p.add_argument("--gl-iterations", type=int)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("sweep", help="run the bias-sweep evaluation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sentences")
    p.add_argument("--n-sentences", type=int)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--dims")
    p.add_argument("--seed", type=int)
    p.add_argument("--gl-iterations", type=int)
    p.add_argument("--max-frames", type=int)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="render a sweep report as json/csv/svg")
    p.add_argument("--sweep", required=True)
    p.add_argument("--format", choices=["json", "csv", "svg"], default="json")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--ui", help="directory of built UI assets to serve at /ui")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(args.config)
        return args.fn(args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ProsobenchError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
