"""Command-line surface: train, predict, generate, eval, sample, sweep.

Every flag has a config-file equivalent; ``--set section.key=value``
overrides win over the file. Outputs are JSON or JSONL for machine
consumption. Exit codes: 0 success, 2 usage/config, 3 data error,
4 provider transport error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .backend import CachedProvider
from .config import build_provider, load_config
from .correlation import init_correlation, load_checkpoint, map_to_labels
from .data import load_dataset, read_label_paths, sample_few_shot, write_dataset
from .errors import ConfigError, ContractError, DataError, FewtypeError, TransportError
from .generation import generate_instances, predict_type_word
from .hierarchy import build_hierarchy, load_extra_names, parse_label_path
from .metrics import evaluate
from .prompts import render_typing
from .training import load_run_data, train

SWEEPABLE = ("alpha", "epsilon", "instances", "reg_weight", "aug_weight", "lr", "beam_width")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fewtype", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry (dotted key)")
        p.add_argument("--seed", type=int, default=None, help="shortcut for --set seed=N")

    p = sub.add_parser("train", help="train the correlation matrix")
    add_config_args(p)
    p.add_argument("--out", default=None, help="output directory (checkpoint + run log)")
    p.add_argument("--resume", default=None, help="resume from a state checkpoint")

    p = sub.add_parser("predict", help="label mentions with a trained checkpoint")
    add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="JSONL mentions (id,text,start,end)")
    p.add_argument("--out", default=None, help="output JSONL (default stdout)")

    p = sub.add_parser("generate", help="emit generated instances for mentions")
    add_config_args(p)
    p.add_argument("--input", required=True, help="JSONL mentions (id,text,start,end)")
    p.add_argument("--checkpoint", default=None, help="optional trained checkpoint")
    p.add_argument("--out", default=None, help="output JSONL (default stdout)")

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--gold", required=True, help="JSONL with id and gold label")
    p.add_argument("--pred", required=True, help="JSONL with id and predicted label")
    p.add_argument("--extra-names", default=None, help="optional hierarchy names file")

    p = sub.add_parser("sample", help="draw a seeded K-shot train/dev split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--shots", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-dev", required=True)

    p = sub.add_parser("sweep", help="grid over one hyperparameter")
    add_config_args(p)
    p.add_argument("--param", required=True,
                   help=f"hyperparameter to vary ({', '.join(SWEEPABLE)} or a dotted key)")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True, help="directory for per-cell run logs")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "train": cmd_train,
        "predict": cmd_predict,
        "generate": cmd_generate,
        "eval": cmd_eval,
        "sample": cmd_sample,
        "sweep": cmd_sweep,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        _report(exc)
        return 2
    except (DataError, ContractError) as exc:
        _report(exc)
        return 3
    except TransportError as exc:
        _report(exc)
        return 4
    except FewtypeError as exc:
        _report(exc)
        return 1


def _report(exc: Exception) -> None:
    record = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def _load_config(args):
    overrides = list(args.overrides)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _iter_mentions(path: str):
    """Prediction-time mention rows; the label field is optional."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "text", "start", "end"):
                if key not in obj:
                    raise DataError(f"{path}:{lineno}: missing field {key!r}")
            text = str(obj["text"])
            start, end = int(obj["start"]), int(obj["end"])
            if not 0 <= start < end <= len(text):
                raise DataError(f"{path}:{lineno}: span ({start}, {end}) outside text")
            yield str(obj["id"]), text, text[start:end]


def _open_out(path: str | None):
    if path is None:
        return sys.stdout
    return open(path, "w", encoding="utf-8")


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out_dir = args.out or cfg.out
    if out_dir is None:
        raise ConfigError("train needs an output directory (--out or config 'out')")
    result = train(cfg, out_dir=out_dir, resume_from=args.resume)
    print(json.dumps({
        "best_epoch": result.best_epoch,
        "best_dev_acc": None if result.best_dev_acc != result.best_dev_acc else result.best_dev_acc,
        "checkpoint": str(Path(out_dir) / "checkpoint.json"),
        "runlog": str(Path(out_dir) / "runlog.jsonl"),
    }, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    provider = CachedProvider(build_provider(cfg.provider))
    cm, _, _ = load_checkpoint(args.checkpoint, provider.vocab())
    out = _open_out(args.out)
    try:
        for mid, text, mention in _iter_mentions(args.input):
            prompt = render_typing(cfg.templates, text, mention)
            dist = provider.mask_distributions(prompt)[0]
            label = cm.labels[int(np.argmax(map_to_labels(cm, dist)))]
            out.write(json.dumps({"id": mid, "label": str(label)}, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    provider = CachedProvider(build_provider(cfg.provider))
    if args.checkpoint is not None:
        cm, _, _ = load_checkpoint(args.checkpoint, provider.vocab())
    else:
        hierarchy, _, _ = load_run_data(cfg)
        cm = init_correlation(hierarchy, provider, cfg.hyper.alpha)
    out = _open_out(args.out)
    try:
        for mid, text, mention in _iter_mentions(args.input):
            type_id, _ = predict_type_word(provider, cm, cfg.templates, text, mention)
            for inst in generate_instances(
                provider, cm, cfg.templates,
                example_id=mid, context=text, mention=mention,
                type_word_id=type_id,
                instances=cfg.hyper.instances,
                beam_width=cfg.hyper.beam_width,
            ):
                out.write(json.dumps({
                    "source_id": inst.source_id,
                    "type_word": inst.type_word,
                    "surface": inst.surface,
                    "score": inst.score,
                    "k": inst.mask_count,
                }, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _read_labeled(path: str) -> dict[str, str]:
    rows: dict[str, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "id" not in obj or "label" not in obj:
                raise DataError(f"{path}:{lineno}: need 'id' and 'label'")
            rows[str(obj["id"])] = str(obj["label"])
    return rows


def cmd_eval(args) -> int:
    gold = _read_labeled(args.gold)
    pred = _read_labeled(args.pred)
    missing = sorted(set(gold) - set(pred))
    if missing:
        raise DataError(f"predictions missing for ids: {', '.join(missing[:5])}")
    extra_names = load_extra_names(args.extra_names) if args.extra_names else None
    paths = {parse_label_path(v) for v in gold.values()}
    paths |= {parse_label_path(v) for v in pred.values()}
    hierarchy = build_hierarchy(paths, extra_names)
    pairs = [
        (parse_label_path(gold[i]), parse_label_path(pred[i])) for i in sorted(gold)
    ]
    result = evaluate(pairs, hierarchy)
    print(f"{'metric':<16} value")
    print(f"{'strict_acc':<16} {result.strict_acc:.4f}")
    print(f"{'loose_micro_f1':<16} {result.loose_micro_f1:.4f}")
    print(f"{'loose_macro_f1':<16} {result.loose_macro_f1:.4f}")
    print(json.dumps(result.as_dict(), sort_keys=True))
    return 0


def cmd_sample(args) -> int:
    paths = set(read_label_paths(args.corpus))
    hierarchy = build_hierarchy(paths)
    corpus = load_dataset(args.corpus, hierarchy)
    train_split, dev_split = sample_few_shot(corpus, args.shots, args.seed)
    write_dataset(args.out_train, train_split)
    write_dataset(args.out_dev, dev_split)
    print(json.dumps({
        "train": args.out_train, "dev": args.out_dev,
        "train_size": len(train_split), "dev_size": len(dev_split),
    }, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value")
    key = args.param if "." in args.param else f"hyper.{args.param}"
    out_root = Path(args.out)
    summary = []
    for value in values:
        overrides = list(args.overrides) + [f"{key}={value}"]
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        cell_dir = out_root / f"{args.param}={value}"
        result = train(cfg, out_dir=cell_dir)
        summary.append({
            "param": args.param,
            "value": value,
            "best_epoch": result.best_epoch,
            "best_dev_acc": None if result.best_dev_acc != result.best_dev_acc
            else result.best_dev_acc,
            "runlog": str(cell_dir / "runlog.jsonl"),
        })
    print(json.dumps({"sweep": summary}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
