"""Command-line pipeline: decode, build, featurize, train, eval, stats, selftest.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import load_audio, read_jsonl, write_jsonl
from .errors import ConfigHashMismatch, InputError, InvariantViolation, MalformedArtifact

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this pipeline reserves 2 for invariant violations."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _read_rows(path) -> list[dict]:
    try:
        return list(read_jsonl(path))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_decode(args) -> int:
    from .ais import decode_lines

    try:
        with open(args.inp, encoding="ascii", errors="replace") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {args.inp}: {exc}") from None
    records, summary = decode_lines(lines, args.salt.encode(), verify_checksum=not args.no_verify)
    write_jsonl(args.out, (r.to_dict() for r in records))
    print(f"decoded {len(records)} records from {summary.lines} lines "
          f"({summary.statics} static, {summary.skipped} skipped)", file=sys.stderr)
    return EXIT_OK


def cmd_build(args) -> int:
    from .ais import DecodedAisRecord
    from .config import load_config
    from .corpus import AudioSegmentRef, build_manifest, pair_audio_with_ais

    cfg = load_config(args.config)
    corpus_cfg = cfg.corpus
    records = sorted((DecodedAisRecord.from_dict(r) for r in _read_rows(args.ais)), key=lambda r: r.ais_timestamp)
    index = [AudioSegmentRef.from_dict(r) for r in _read_rows(args.audio)]
    pairs, skips = pair_audio_with_ais(
        records, index,
        max_skew_ms=args.max_skew if args.max_skew is not None else corpus_cfg.max_skew_ms,
        keep_ambiguous=args.keep_ambiguous or corpus_cfg.keep_ambiguous,
    )
    manifest = build_manifest(
        pairs,
        granularity=args.granularity or corpus_cfg.granularity,
        corpus_id=args.corpus_id or corpus_cfg.corpus_id,
        seed=args.seed if args.seed is not None else cfg.seed,
        eval_fraction=args.eval_fraction if args.eval_fraction is not None else corpus_cfg.eval_fraction,
    )
    write_jsonl(args.out, (row.to_dict() for row in manifest))
    report = {"records_in": len(records), "pairs": len(pairs), "rows": len(manifest),
              "skipped": dict(sorted(skips.counts.items())), "skipped_total": skips.total}
    if args.report:
        _write_json(args.report, report)
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def cmd_featurize(args) -> int:
    from .config import load_config
    from .dsp import get_profile
    from .features import featurize, write_features

    if args.config:
        cfg = load_config(args.config)
        dsp, profile = cfg.dsp, cfg.profile
    else:
        dsp, profile = get_profile(args.profile), args.profile
    fs = featurize(_read_rows(args.manifest), dsp, jobs=args.jobs, profile=profile)
    write_features(args.out, fs)
    print(f"featurized {len(fs)} segments ({dsp.target_frames}x{dsp.n_mels}) -> {args.out}", file=sys.stderr)
    return EXIT_OK


def train_from_artifacts(rows: list[dict], features, cfg, log=None):
    """Train a dual encoder on the manifest's train split; returns (model, vocab, result)."""
    import torch

    from .bpe import bpe_train
    from .corpus import query_list
    from .model import DualEncoder
    from .train import PairDataset, Trainer

    torch.manual_seed(cfg.seed)
    feats = features.as_mapping()
    train_rows = [r for r in rows if r.get("split", "train") == "train"]
    if not train_rows:
        raise InputError("manifest has no train-split rows")
    missing = sorted({r["segment_id"] for r in train_rows} - set(feats))
    if missing:
        raise InputError(f"{len(missing)} train segments have no features, e.g. {missing[0]!r}")
    data = PairDataset(
        specs=[feats[r["segment_id"]][0] for r in train_rows],
        n_frames=[feats[r["segment_id"]][1] for r in train_rows],
        captions=[r["caption"] for r in train_rows],
        categories=[r["category"] for r in train_rows],
        segment_ids=[r["segment_id"] for r in train_rows],
    )
    prompts = query_list() + list(cfg.eval.extra_prompts)
    vocab = bpe_train(data.captions + prompts, cfg.model.vocab_size, cfg.model.max_len)
    if (cfg.model.spec_frames, cfg.model.spec_mels) != (features.dsp_config.target_frames, features.dsp_config.n_mels):
        raise ConfigHashMismatch("model spectrogram shape does not match the feature file")
    model = DualEncoder(cfg.model)
    result = Trainer(model, vocab, cfg.train).fit(data, on_epoch=log)
    return model, vocab, result


def cmd_train(args) -> int:
    import torch

    from .checkpoint import save_checkpoint
    from .config import PipelineConfig, load_config
    from .features import dsp_hash, read_features

    torch.set_num_threads(1)
    features = read_features(args.features)
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = PipelineConfig.from_dict({"profile": features.header.get("profile") or "default",
                                        "dsp": features.dsp_config.to_dict()})
    if features.config_hash != dsp_hash(cfg.dsp):
        raise ConfigHashMismatch(
            f"features were computed with DSP config {features.config_hash}, config asks for {dsp_hash(cfg.dsp)}")
    rows = _read_rows(args.manifest)
    epochs_path = Path(args.log) if args.log else Path(str(args.out) + ".epochs.csv")
    with open(epochs_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr", "tau"])

        def log(e):
            writer.writerow([e.epoch, f"{e.loss:.8g}", f"{e.lr:.8g}", f"{e.tau:.8g}"])

        model, vocab, result = train_from_artifacts(rows, features, cfg, log)
    corpus_ids = sorted({r.get("corpus_id", "default") for r in rows})
    save_checkpoint(args.out, model, vocab, extra={
        "pipeline_config": cfg.to_dict(),
        "config_hash": cfg.stage_hash("model", "train"),
        "features_config_hash": features.config_hash,
        "train_corpus_id": corpus_ids[0] if len(corpus_ids) == 1 else ",".join(corpus_ids),
        "steps": result.steps,
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
    })
    print(f"trained {result.steps} steps, loss {result.initial_loss:.4f} -> {result.final_loss:.4f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    import torch

    from .checkpoint import load_checkpoint
    from .config import PipelineConfig, load_config
    from .corpus import query_list
    from .evalkit import EvalProtocol, run_protocol
    from .features import featurize, read_features

    torch.set_num_threads(1)
    try:
        model, vocab, header = load_checkpoint(args.ckpt)
    except (OSError, KeyError) as exc:
        raise MalformedArtifact(f"cannot load checkpoint {args.ckpt}: {exc}") from None
    cfg = load_config(args.config) if args.config else PipelineConfig.from_dict(header["pipeline_config"], env={})
    rows = _read_rows(args.manifest)
    if args.features:
        features = read_features(args.features)
    else:
        features = featurize(rows, PipelineConfig.from_dict(header["pipeline_config"], env={}).dsp)
    if features.config_hash != header["features_config_hash"]:
        raise ConfigHashMismatch(
            f"feature config {features.config_hash} differs from the checkpoint's {header['features_config_hash']}")
    test_ids = sorted({r.get("corpus_id", "default") for r in rows})
    protocol = EvalProtocol(
        train_corpus_id=header.get("train_corpus_id", "default"),
        test_corpus_id=args.test_corpus or ",".join(test_ids),
        mode=args.mode or cfg.eval.mode,
        targets=args.targets or cfg.eval.targets,
    )
    prompts = query_list() + list(cfg.eval.extra_prompts)
    report = run_protocol(protocol, model, vocab, rows, features.as_mapping(), prompts, ks=tuple(cfg.eval.ks))
    out = report.to_dict()
    out["checkpoint_config_hash"] = header["config_hash"]
    out["features_config_hash"] = features.config_hash
    _write_json(args.out, out)
    print(" ".join(f"{k}={out[k]:.2f}" for k in (*(f"R@{k}" for k in cfg.eval.ks), "top1")), file=sys.stderr)
    return EXIT_OK


def cmd_stats(args) -> int:
    from .corpus import AudioTextPair, corpus_stats
    from .dsp import DspConfig, dominant_frequency

    manifest = [AudioTextPair.from_dict(r) for r in _read_rows(args.manifest)]
    freqs = {}
    if not args.no_audio:
        for row in manifest:
            sid = row.segment.segment_id
            if sid in freqs or not Path(row.segment.file_path).exists():
                continue
            samples, rate = load_audio(row.segment.file_path)
            samples = samples[: row.segment.duration * rate // 1000]
            freqs[sid] = dominant_frequency(samples, DspConfig(sample_rate=rate, fmax=rate / 2))
    report = corpus_stats(manifest, freqs)
    report.write_csv(args.out)
    print(json.dumps({"segments": report.total_count, "duration_ms": report.total_duration_ms}), file=sys.stderr)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest(verbose=not args.quiet)
    return EXIT_OK if not failures else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oceanforge", description="Underwater acoustic target recognition pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    d = sub.add_parser("decode", help="decode an AIS message log into JSONL records")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--salt", default="oceanforge")
    d.add_argument("--no-verify", action="store_true", help="skip NMEA checksum verification")
    d.set_defaults(func=cmd_decode)

    b = sub.add_parser("build", help="pair records with audio segments into a caption manifest")
    b.add_argument("--ais", required=True, help="decoded records (JSONL)")
    b.add_argument("--audio", required=True, help="audio segment index (JSONL)")
    b.add_argument("--out", required=True)
    b.add_argument("--granularity", choices=["coarse", "fine", "both"])
    b.add_argument("--corpus-id")
    b.add_argument("--max-skew", type=int, help="max |record time - segment| in ms")
    b.add_argument("--keep-ambiguous", action="store_true")
    b.add_argument("--eval-fraction", type=float)
    b.add_argument("--seed", type=int)
    b.add_argument("--config")
    b.add_argument("--report", help="write the pairing/skip counts as JSON")
    b.set_defaults(func=cmd_build)

    f = sub.add_parser("featurize", help="compute log-mel features for manifest segments")
    f.add_argument("--manifest", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--profile", default="default", choices=["default", "imagebind128"])
    f.add_argument("--config")
    f.add_argument("--jobs", type=int, default=1)
    f.set_defaults(func=cmd_featurize)

    t = sub.add_parser("train", help="contrastive training of LoRA adapters and heads")
    t.add_argument("--manifest", required=True)
    t.add_argument("--features", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="per-epoch CSV (default: <out>.epochs.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="retrieval / zero-shot / supervised evaluation")
    e.add_argument("--mode", choices=["retrieval", "zeroshot", "zero_shot", "supervised"])
    e.add_argument("--ckpt", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--features")
    e.add_argument("--config")
    e.add_argument("--targets", choices=["prompts", "captions"])
    e.add_argument("--test-corpus", help="override the test corpus id taken from the manifest")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="per-category corpus statistics as CSV")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-audio", action="store_true", help="skip dominant-frequency analysis")
    s.set_defaults(func=cmd_stats)

    st = sub.add_parser("selftest", help="run the built-in property checks")
    st.add_argument("--quiet", action="store_true")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"oceanforge {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, OSError, ValueError, KeyError) as exc:
        print(f"oceanforge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
