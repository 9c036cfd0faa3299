"""``sigver`` command line: synth, extract, align, gradcheck, train, evaluate.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error, 3 protocol error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dtw as dtw_mod
from .diff.checkpoint import CheckpointError
from .diff.nn import ConfigError
from .diff.ops import ShapeError
from .evaluation import PairSpec, ProtocolError, build_comparisons, check_disjoint, run_protocol
from .features import FeatureError, extract_time_functions, znormalize_channels
from .signature_io import (
    SignatureError,
    atomic_write_bytes,
    atomic_write_text,
    generate_synthetic_dataset,
    load_dataset,
    parse_signature,
    read_manifest,
    resample_uniform,
    write_dataset,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_PROTOCOL = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4

log = logging.getLogger("sigver")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(args, event: str, **fields) -> None:
    """Human line on stdout, or one JSON object per line with ``--json``."""
    if getattr(args, "json", False):
        print(json.dumps({"event": event, **fields}, sort_keys=True), flush=True)
    else:
        detail = " ".join(f"{k}={v}" for k, v in fields.items())
        print(f"{event}: {detail}" if detail else event, flush=True)


# ------------------------------------------------------------------ subcommands


def _comparison_records(sigs, seed: int) -> list[dict]:
    return [{
        "enrolled_path": f"{c.enrolled.subject_id}/{c.enrolled.sample_id}.tsv",
        "questioned_path": f"{c.questioned.subject_id}/{c.questioned.sample_id}.tsv",
        "label": c.label,
        "enrolled_subject": c.enrolled.subject_id,
        "questioned_subject": c.questioned.subject_id,
    } for c in build_comparisons(sigs, seed=seed)]


def _write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=1) + "\n")


def cmd_synth(args) -> int:
    sigs = generate_synthetic_dataset(args.subjects, args.genuine, args.forgeries, args.seed)
    out = Path(args.out)
    manifest = write_dataset(sigs, out)
    comparisons = _comparison_records(sigs, args.seed)
    _write_json(out / "comparisons.json", comparisons)
    if args.val_subjects:
        subjects = sorted({s.subject_id for s in sigs})
        if not 0 < args.val_subjects < len(subjects):
            raise SignatureError(f"--val-subjects must be between 1 and {len(subjects) - 1}")
        held_out = set(subjects[-args.val_subjects:])
        entries = json.loads(manifest.read_text(encoding="utf-8"))
        _write_json(out / "train.json", [e for e in entries if e["subject_id"] not in held_out])
        _write_json(out / "val.json", [e for e in entries if e["subject_id"] in held_out])
        _write_json(out / "val_comparisons.json",
                    _comparison_records([s for s in sigs if s.subject_id in held_out], args.seed))
    _emit(args, "synth", signatures=len(sigs), manifest=str(manifest),
          comparisons=len(comparisons))
    return EXIT_OK


def cmd_extract(args) -> int:
    sig = parse_signature(args.input, args.format)
    fs = extract_time_functions(resample_uniform(sig, args.rate))
    if not args.raw:
        fs = znormalize_channels(fs)
    atomic_write_text(Path(args.out), fs.to_tsv())
    _emit(args, "extract", samples=fs.length, out=args.out)
    return EXIT_OK


def cmd_align(args) -> int:
    from .features import signature_features

    a = signature_features(parse_signature(args.enrolled, args.format), args.rate)
    b = signature_features(parse_signature(args.questioned, args.format), args.rate)
    pair = dtw_mod.prepare_pair(a, b, args.label)
    atomic_write_bytes(Path(args.out), pair.to_bytes())
    _emit(args, "align", valid_length=pair.valid_length, out=args.out, backend=dtw_mod.BACKEND)
    return EXIT_OK


def gradcheck_variant(variant: str, seed: int = 0, max_entries: int | None = None):
    """Float64 check of the full Siamese loss at reduced dimensions."""
    from .diff import grad_check, ops
    from .model import ModelConfig, SiameseModel

    cfg = ModelConfig.reduced(variant, seed=seed)
    model = SiameseModel(cfg, dtype=np.float64)
    rng = np.random.default_rng(seed)
    # the difference-aware head cancels any shift shared by both embeddings,
    # so embedding biases have exactly zero gradient at init; move off that point
    for p in model.head.parameters().values():
        p.data = p.data + rng.normal(0.0, 0.1, size=p.shape)
    a = rng.normal(size=(2, cfg.input_length, cfg.input_channels))
    b = rng.normal(size=(2, cfg.input_length, cfg.input_channels))
    y = np.array([1.0, 0.0])
    return grad_check(lambda: ops.binary_cross_entropy_with_logits(model.pair_logits(a, b), y),
                      model.parameters(), max_entries=max_entries, seed=seed, kink_guard=True)


def cmd_gradcheck(args) -> int:
    report = gradcheck_variant(args.variant, args.seed, args.max_entries)
    ok = report.max_relative_error <= GRADCHECK_TOL
    _emit(args, "gradcheck", variant=args.variant, dtype="float64",
          max_relative_error=report.max_relative_error, entries=report.checked_entries,
          skipped_kinks=report.skipped_kinks,
          passed=ok)
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_train(args) -> int:
    from .model import ModelConfig
    from .training import TrainHyper, format_log, train

    train_set = load_dataset(args.train_manifest)
    val_set = load_dataset(args.val_manifest)
    config = ModelConfig(variant=args.variant, seed=args.seed)
    hyper = TrainHyper(lr=args.lr, batch=args.batch, max_epochs=args.epochs,
                       patience=args.patience, pairs_per_epoch=args.pairs_per_epoch,
                       seed=args.seed, threads=args.threads)
    log_lines: list[str] = []

    def on_epoch(record):
        line = format_log(record)
        log_lines.append(line)
        print(line, flush=True)

    result = train(config, train_set, val_set, hyper, checkpoint_path=args.out, on_epoch=on_epoch)
    if args.log:
        atomic_write_text(Path(args.log), "\n".join(log_lines) + "\n")
    _emit(args, "train", best_epoch=result.state.best_epoch,
          best_val_eer=result.state.best_validation_eer, checkpoint=args.out)
    return EXIT_OK


def load_comparisons(manifest_path: str | Path) -> list[PairSpec]:
    """Comparison manifest -> PairSpec list (paths relative to the manifest).

    Subjects come from optional ``enrolled_subject``/``questioned_subject``
    fields, else from a ``manifest.json`` dataset manifest next to it.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise SignatureError(f"{manifest_path}: comparison manifest must be a JSON array")
    root = manifest_path.parent
    subject_of: dict[str, str] = {}
    label_of: dict[str, str] = {}
    dataset_manifest = root / "manifest.json"
    if dataset_manifest.exists():
        for e in read_manifest(dataset_manifest):
            key = str((root / e.path).resolve())
            subject_of[key], label_of[key] = e.subject_id, e.label
    cache: dict[str, object] = {}

    def load(rel: str, subject: str | None):
        path = Path(rel) if Path(rel).is_absolute() else root / rel
        key = str(path.resolve())
        if key not in cache:
            sid = subject or subject_of.get(key, "")
            cache[key] = parse_signature(path, "canonical_tsv", subject_id=sid,
                                         sample_id=str(Path(rel).with_suffix("")),
                                         label=label_of.get(key, "genuine"))
        return cache[key]

    out = []
    for k, item in enumerate(raw):
        try:
            out.append(PairSpec(load(item["enrolled_path"], item.get("enrolled_subject")),
                                load(item["questioned_path"], item.get("questioned_subject")),
                                item["label"]))
        except KeyError as exc:
            raise SignatureError(f"{manifest_path}: entry {k} lacks {exc}") from None
    return out


def cmd_evaluate(args) -> int:
    from .model import SiameseModel
    from .pipeline import PairPreparer

    model, meta, _ = SiameseModel.load(args.model)
    comparisons = load_comparisons(args.manifest)
    train_subjects = set(meta.get("train_subjects", []))
    eval_subjects = {s for c in comparisons for s in (c.enrolled.subject_id, c.questioned.subject_id)}
    check_disjoint(train_subjects, eval_subjects)
    report = run_protocol(model, comparisons, PairPreparer(),
                          meta={"variant": model.config.variant, "comparisons": len(comparisons)})
    report.write(args.out_dir, svg=args.svg)
    _emit(args, "evaluate", eer_random=report.eer_random, eer_skilled=report.eer_skilled,
          eer_overall=report.eer_overall, out_dir=args.out_dir)
    return EXIT_OK


# ------------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--json", action="store_true", help="machine-readable JSON log lines")

    parser = _Parser(prog="sigver", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--genuine", type=int, required=True)
    p.add_argument("--forgeries", type=int, required=True)
    p.add_argument("--val-subjects", type=int, default=0,
                   help="also write train.json, val.json and val_comparisons.json holding out the last N subjects")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common], help="dump the 23 time functions as TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("canonical_tsv", "legacy7"), default="canonical_tsv")
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--raw", action="store_true", help="skip per-channel z-normalisation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("align", parents=[common], help="write a DTW-aligned pair record")
    p.add_argument("--enrolled", required=True)
    p.add_argument("--questioned", required=True)
    p.add_argument("--format", choices=("canonical_tsv", "legacy7"), default="canonical_tsv")
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--label", choices=("match", "nonmatch_random", "nonmatch_skilled"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("gradcheck", parents=[common], help="float64 finite-difference check")
    p.add_argument("--variant", default="vanilla")
    p.add_argument("--f64", action="store_true",
                   help="float64 verification mode (always used; float32 checks are unreliable)")
    p.add_argument("--max-entries", type=int, default=None,
                   help="probe at most this many coordinates per parameter")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", parents=[common], help="train one configuration")
    p.add_argument("--variant", required=True)
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--val-manifest", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--pairs-per-epoch", type=int, default=256)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="checkpoint path (config written to <out>.json)")
    p.add_argument("--log", help="also write the JSON-lines epoch log here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="EER/DET report for a comparison list")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--svg", action="store_true", help="also write det.svg (needs matplotlib)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"sigver: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProtocolError as exc:
        msg = str(exc) if str(exc).startswith("protocol error") else f"protocol error: {exc}"
        print(msg.splitlines()[0], file=sys.stderr)
        return EXIT_PROTOCOL
    except (SignatureError, FeatureError, dtw_mod.AlignmentError, ConfigError, ShapeError,
            CheckpointError, ValueError) as exc:
        print(f"validation error: {str(exc).splitlines()[0]}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
