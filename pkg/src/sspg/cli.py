"""Command-line interface: ``python -m sspg <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import DatasetError, load_dataset, make_synthetic, write_dataset
from .evaluation import evaluate, train_relation_classifier
from .segmental import viterbi_segment
from .training import DECODERS, Config, generate, load_model, save_model, train
from .model import MODEL_KINDS


class CliError(Exception):
    pass


def _config(args) -> Config:
    """Config file (if any), then command-line overrides."""
    obj = json.loads(Path(args.config).read_text(encoding="utf-8")) if getattr(args, "config", None) else {}
    model = getattr(args, "model", None) or obj.get("model", "sspg")
    base = Config.defaults(model).to_json()
    base.update(obj)
    base["model"] = model
    for key in ("seed", "epochs", "decoder", "data", "out"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if getattr(args, "beam_k", None) is not None:
        base["beam_k"] = args.beam_k
    return Config.from_json(base)


def _dataset(path):
    if not path:
        raise CliError("--data is required")
    if not Path(path).exists():
        raise CliError(f"dataset not found: {path}")
    return load_dataset(path)


def _split(dataset, name):
    examples = dataset.examples.get(name)
    if examples is None:
        raise CliError(f"unknown split {name!r}")
    if not examples:
        raise CliError(f"split {name!r} is empty")
    return examples


def cmd_train(args) -> int:
    config = _config(args)
    dataset = _dataset(config.data)
    if not dataset.train:
        raise CliError("training split is empty")
    out = Path(config.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    result = train(config, dataset, log_path=out / "train_log.jsonl", verbose=not args.quiet)
    save_model(out / "model.ckpt", result.model, config, result.history)
    print(f"best epoch {result.best_epoch}; checkpoint {out / 'model.ckpt'}", file=sys.stderr)
    return 0


def write_generations(results, path: Path) -> None:
    lines, sidecar = [], []
    for i, r in enumerate(results):
        lines.append(" ".join(r.text.splitlines()))
        sidecar.append({"index": i, "text": r.text, "score": r.score, "truncated": r.truncated,
                        "counts": r.component_counts(),
                        "segments": [{"text": s, "component": c, "logp": lp} for s, c, lp in r.segments]})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    Path(str(path) + ".components.jsonl").write_text(
        "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in sidecar), encoding="utf-8")


def cmd_generate(args) -> int:
    model, saved = load_model(args.checkpoint)
    decoder = args.decoder or ("unmixed" if model.config.segmental else "beam")
    if decoder == "beam" and model.config.kind != "pg":
        raise CliError(f"decoder 'beam' needs a pg model, checkpoint is {model.config.kind}")
    if decoder in ("unmixed", "dynamic") and not model.config.segmental:
        raise CliError(f"decoder {decoder!r} needs an sspg or ssd model, checkpoint is pg")
    k = args.beam_k if args.beam_k is not None else 1
    examples = _split(_dataset(args.data), args.split)
    max_chars = saved.max_chars if saved else 256
    results = generate(model, examples, decoder, k, max_chars)
    write_generations(results, Path(args.out))
    return 0


def cmd_evaluate(args) -> int:
    dataset = _dataset(args.data)
    examples = _split(dataset, args.split)
    generations = Path(args.generations).read_text(encoding="utf-8").splitlines()
    if len(generations) != len(examples):
        raise CliError(f"{len(generations)} generations but {len(examples)} examples in split {args.split!r}")
    classifier = None
    if dataset.train and len({ex.triple.relation for ex in dataset.train}) >= 2:
        classifier = train_relation_classifier(dataset.train, seed=args.seed or 0)
    report = evaluate(generations, examples, classifier)
    text = json.dumps(report, indent=2, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


ABLATION_ROWS = [
    ("BPE +copy +beam search (PG)", "pg", "beam"),
    ("SSPG +copy +unmixed", "sspg", "unmixed"),
    ("SSPG +copy +dynamic", "sspg", "dynamic"),
    ("SSPG -copy +unmixed", "ssd", "unmixed"),
    ("SSPG -copy +dynamic", "ssd", "dynamic"),
]


def run_ablation(config: Config, dataset, split: str = "valid", verbose: bool = False) -> list[dict]:
    """Train one model per kind and score each (model, decoder) row."""
    from .evaluation import bleu, corpus_chrf

    examples = dataset.examples[split]
    refs = [ex.references for ex in examples]
    models = {}
    rows = []
    for name, kind, decoder in ABLATION_ROWS:
        if kind not in models:
            overrides = config.to_json()
            overrides.pop("model")
            if kind == "pg":
                overrides.update(dropout=Config.defaults("pg").dropout)
            models[kind] = train(Config.defaults(kind, **overrides), dataset, verbose=verbose).model
        hyps = [r.text for r in generate(models[kind], examples, decoder, config.beam_k, config.max_chars)]
        rows.append({"model": name, "kind": kind, "decoder": decoder,
                     "chrf_pp": corpus_chrf(hyps, refs, word_n=2), "bleu": bleu(hyps, refs)})
    return rows


def ablation_markdown(rows: list[dict]) -> str:
    lines = ["| Model | chrF++ | BLEU |", "|---|---:|---:|"]
    lines += [f"| {r['model']} | {r['chrf_pp']:.2f} | {r['bleu']:.2f} |" for r in rows]
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    config = _config(args)
    dataset = _dataset(config.data)
    _split(dataset, args.split)
    rows = run_ablation(config, dataset, args.split, verbose=not args.quiet)
    out = Path(config.out or "ablation")
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    (out / "ablation.md").write_text(ablation_markdown(rows), encoding="utf-8")
    sys.stdout.write(ablation_markdown(rows))
    return 0


def cmd_segment(args) -> int:
    model, _ = load_model(args.checkpoint)
    if not model.config.segmental:
        raise CliError("segmentation needs an sspg or ssd checkpoint")
    lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    # segmentations are conditioned on an empty-ish source: the delimiter frame only
    src = [model.src_vocab.eos_id]
    out = ["|".join(viterbi_segment(model, src, line)) if line else "" for line in lines]
    text = "".join(line + "\n" for line in out)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_synthetic(args) -> int:
    dataset = make_synthetic(args.seed or 0, args.n_train, args.n_eval)
    write_dataset(dataset, args.out)
    print(json.dumps(dataset.counts()), file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sspg", description="Segmental pointer-generator data-to-text models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON config file")
            p.add_argument("--model", choices=MODEL_KINDS)
            p.add_argument("--epochs", type=int)
        p.add_argument("--data", help="dataset .jsonl file or directory of split files")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--beam-k", dest="beam_k", type=int)
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode a split with a trained checkpoint")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--decoder", choices=DECODERS)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_generate, out="generations.txt")

    p = sub.add_parser("evaluate", help="score generations against a split")
    common(p, config=False)
    p.add_argument("--generations", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train the ablation grid and tabulate chrF++/BLEU")
    common(p)
    p.add_argument("--decoder", choices=DECODERS)
    p.add_argument("--split", default="valid")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("segment", help="Viterbi segmentation of text lines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("synthetic", help="write the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", dest="n_train", type=int, default=1500)
    p.add_argument("--n-eval", dest="n_eval", type=int, default=200)
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DatasetError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
