"""Command-line entry point: ``topicfuse {pretrain,train,eval,explain,profile,pareto}``.

Exit codes: 0 success, 2 usage/IO/config error (the message names the
path or line), 3 checkpoint error, 4 corpus error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import checkpoint, costing, nvdm, trainer
from .config import Config, load_config
from .corpus import Document, load_corpus, read_stopwords, to_bow
from .exceptions import CheckpointError, ConfigError, ContractError, CorpusError

EXIT_USAGE = 2
EXIT_CHECKPOINT = 3
EXIT_CORPUS = 4

log = logging.getLogger("topicfuse")


class UsageError(Exception):
    pass


# ---- shared helpers ------------------------------------------------------------------


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg = cfg.with_overrides(**{"train.seeds": (args.seed,)})
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: str, what: str) -> Path:
    if not path:
        raise UsageError(f"config key {what} is not set")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file not found: {p}")
    return p


def _corpus(cfg: Config):
    paths = [_require(cfg[f"corpus.{s}"], f"corpus.{s}") for s in ("train", "dev", "test")]
    corpus = load_corpus(*paths)
    stop = read_stopwords(_require(cfg["corpus.stopwords"], "corpus.stopwords")) if cfg["corpus.stopwords"] else ()
    return corpus, stop


class _Stream:
    """Append JSON records to a file, flushing each one."""

    def __init__(self, path: Path):
        self.fh = open(path, "w", encoding="utf-8")

    def write(self, rec: dict) -> None:
        self.fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def _nvdm_echo(tc: trainer.TrainConfig) -> dict:
    return {"n_topics": tc.n_topics, "nvdm_hidden": tc.nvdm_hidden, "nvdm_lr": tc.nvdm_lr,
            "nvdm_epochs": tc.nvdm_epochs, "samples": tc.samples, "f_min": tc.f_min, "seed": tc.seeds[0]}


# ---- commands ------------------------------------------------------------------------


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    tc = replace(cfg.train_config(), mode="nvdm_pretrain")
    corpus, stop = _corpus(cfg)
    data = trainer.prepare_corpus(corpus, tc, stop)
    res = trainer.pretrain_nvdm(data, tc, tc.seeds[0])
    out = _out(args)
    checkpoint.save_nvdm(out / "nvdm.ckpt", res.params, data.vocab, _nvdm_echo(tc))
    (out / "topics.txt").write_text(nvdm.topic_report(res.params, data.vocab), encoding="utf-8")
    best = res.dev_elbo[res.best_epoch - 1] if res.best_epoch else float("nan")
    print(f"nvdm: Z={data.vocab.size} K={tc.n_topics} best_epoch={res.best_epoch} dev_elbo={best:.3f}")
    print(f"wrote {out / 'nvdm.ckpt'} and {out / 'topics.txt'}")
    return 0


def _reference_f1(path: str | None) -> float | None:
    if not path:
        return None
    recs = _read_records(Path(path))
    for rec, _ in reversed(recs):
        if rec.get("epoch") == "summary":
            return float(rec["test_f1"])
    raise UsageError(f"{path}: no summary record to use as reference")


def cmd_train(args) -> int:
    cfg = _config(args)
    tc = cfg.train_config()
    if tc.mode == "nvdm_pretrain":
        return cmd_pretrain(args)
    corpus, stop = _corpus(cfg)
    nv, vocab = None, None
    if tc.mode in ("topicfused", "bert_avg_dtr"):
        if args.nvdm:
            nv, vocab = checkpoint.load_nvdm(_require(args.nvdm, "--nvdm"))
    if tc.mode in ("bert_avg", "bert_avg_dtr") and tc.p != 1:
        raise UsageError("baseline modes use the whole sequence; set train.p=1")
    data = trainer.prepare_corpus(corpus, tc, stop, vocab=vocab)
    if tc.mode in ("topicfused", "bert_avg_dtr") and nv is None:
        log.info("no --nvdm checkpoint given; pretraining the topic model first")
        nv = trainer.pretrain_nvdm(data, tc, tc.seeds[0]).params
    reference = _reference_f1(args.reference)
    out = _out(args)
    stream = _Stream(out / f"metrics-{tc.label}.jsonl")
    runs = []
    try:
        for seed in tc.seeds:
            if tc.mode in ("bert_avg", "bert_avg_dtr"):
                model, metrics = trainer.run_baseline(data, tc, nv, seed)
            else:
                model, metrics = trainer.finetune_joint(data, nv, tc, seed)
            if reference is not None and not math.isnan(metrics.test_f1):
                metrics.rtn = trainer.retention(metrics.test_f1, reference)
            for rec in metrics.epoch_records():
                stream.write(rec)
            stream.write(metrics.final_record())
            checkpoint.save_model(out / f"model-{tc.label}-seed{seed}.ckpt", model)
            runs.append(metrics)
            print(f"{tc.label} seed={seed} best_epoch={metrics.best_epoch} "
                  f"dev_f1={metrics.dev_f1:.3f} test_f1={metrics.test_f1:.3f}")
        summary = trainer.summarize(runs, reference)
        stream.write(summary)
    finally:
        stream.close()
    print(f"{tc.label} test_f1={summary['test_f1']:.3f} +/- {summary['test_f1_std']:.3f} ({summary['std_kind']})")
    return 0


def _load_model(path: str):
    return checkpoint.load_model(_require(path, "model checkpoint"))


def cmd_eval(args) -> int:
    cfg = _config(args)
    model = _load_model(args.model)
    corpus, _ = _corpus(cfg)
    docs = getattr(corpus, args.split)
    if not docs:
        raise CorpusError(f"split {args.split} is empty")
    split = trainer.encode_split(docs, model.vocab, model.seq_vocab, model.config.p, model.config.max_len)
    report = trainer.evaluate(model, split)
    rec = {
        "split": args.split, "macro_f1": round(report.macro_f1, 6),
        "precision": [round(float(v), 6) for v in report.precision],
        "recall": [round(float(v), 6) for v in report.recall],
        "f1": [round(float(v), 6) for v in report.f1],
    }
    print(f"macro-F1: {report.macro_f1:.3f}")
    print(json.dumps(rec, sort_keys=True))
    return 0


def explain(model, text: str, top_m: int = 10) -> list[str]:
    """Lines describing the prediction for one document and its dominant topic."""
    doc = Document("doc", 0, text)
    split = trainer.encode_split([doc], model.vocab, model.seq_vocab, model.config.p, model.config.max_len)
    label = int(model.predict(split)[0])
    lines = [f"label: {label}"]
    if top_m == 0:
        return lines
    if model.nvdm is None or model.vocab is None:
        return lines + ["topic: none"]
    bow = to_bow(doc, model.vocab)
    if bow.is_empty:
        return lines + ["topic: none"]
    state = nvdm.encode(bow, model.nvdm, mode="deterministic")
    k = nvdm.dominant_topic(state)
    lines.append(f"topic: {k}")
    m = min(top_m, model.vocab.size)
    lines += [f"  {w}\t{v:.4f}" for w, v in nvdm.topic_terms(model.nvdm, k, m, model.vocab)]
    return lines


def cmd_explain(args) -> int:
    if args.top_m < 0:
        raise UsageError("--top-m must be >= 0")
    model = _load_model(args.model)
    text = _require(args.document, "document").read_text(encoding="utf-8")
    print("\n".join(explain(model, text, args.top_m)))
    return 0


def _lengths(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"invalid --lengths value: {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise UsageError(f"--lengths must be positive integers, got {text!r}")
    return vals


def cmd_profile(args) -> int:
    cfg = _config(args)
    lengths = _lengths(args.lengths)
    base = costing.ComplexityInputs(b=cfg["train.batch"], N=max(lengths), p=1, H_B=cfg["enc.hidden"],
                                    n_l=cfg["enc.layers"], n_b=args.batches)
    spo = args.seconds_per_op if args.seconds_per_op is not None else costing.REUTERS8_SECONDS_PER_OP
    text = costing.curve_csv(costing.cost_curve(lengths, base, spo, cfg["enc.heads"]))
    (_out(args) / "profile.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _read_records(path: Path) -> list[tuple[dict, int]]:
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                raise UsageError(f"{path}:{lineno}: malformed record (not JSON)") from None
            if not isinstance(rec, dict):
                raise UsageError(f"{path}:{lineno}: malformed record (not an object)")
            out.append((rec, lineno))
    return out


def pareto_points(paths: list[str]) -> list[costing.ParetoPoint]:
    """One point per summary record (or per final record when a file has no summary)."""
    points = []
    for name in paths:
        path = Path(name)
        recs = _read_records(path)
        chosen = [(r, n) for r, n in recs if r.get("epoch") == "summary"]
        if not chosen:
            chosen = [(r, n) for r, n in recs if r.get("epoch") in ("final", None)]
        for rec, lineno in chosen:
            try:
                label = str(rec["run_id"])
                f1 = float(rec["test_f1"])
                hours = float(rec["hours"]) if "hours" in rec else float(rec["wall_s"]) / 3600.0
            except (KeyError, TypeError, ValueError):
                raise UsageError(f"{path}:{lineno}: malformed record (needs run_id, test_f1, wall_s or hours)") from None
            if not (math.isfinite(f1) and math.isfinite(hours)) or hours < 0:
                raise UsageError(f"{path}:{lineno}: malformed record (non-finite or negative value)")
            points.append(costing.ParetoPoint(label, f1, hours, costing.estimate_co2(hours)))
    if not points:
        raise UsageError("no usable records in the given metrics files")
    return points


def cmd_pareto(args) -> int:
    text = costing.frontier_csv(pareto_points(args.metrics))
    (_out(args) / "pareto.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


# ---- parser ---------------------------------------------------------------------------


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags; SUPPRESS keeps them from resetting values given earlier
    def d(value):
        return argparse.SUPPRESS if suppress else value

    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=d(None), help="flat key=value configuration file")
    g.add_argument("--seed", type=int, default=d(None), help="run a single seed instead of train.seeds")
    g.add_argument("--out", default=d("."), help="output directory (default: current)")
    g.add_argument("-v", "--verbose", action="store_true", default=d(False), help="log per-epoch progress")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="topicfuse", parents=[_global_flags(suppress=False)],
                                     description="Topic-model + transformer complementary fine-tuning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", parents=[common], help="pretrain the NVDM and write nvdm.ckpt + topics.txt")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", parents=[common], help="joint fine-tuning or a baseline, per config mode")
    p.add_argument("--nvdm", help="pretrained NVDM checkpoint (topicfused / bert_avg_dtr)")
    p.add_argument("--reference", help="metrics file whose summary test F1 is the retention reference")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="macro-F1 of a model checkpoint on a split")
    p.add_argument("model")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", parents=[common], help="prediction plus dominant-topic terms for one document")
    p.add_argument("model")
    p.add_argument("document", help="plain-text file holding one document")
    p.add_argument("--top-m", type=int, default=10)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("profile", parents=[common], help="predicted cost per sequence length (CSV)")
    p.add_argument("--lengths", default="32,64,128,256,512")
    p.add_argument("--batches", type=int, default=1225, help="batches per epoch (n_b)")
    p.add_argument("--seconds-per-op", type=float, default=None)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("pareto", parents=[common], help="F1-vs-hours frontier from metrics files (CSV)")
    p.add_argument("metrics", nargs="+")
    p.set_defaults(func=cmd_pareto)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        msg = str(exc) if exc.filename is None else f"file not found: {exc.filename}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except CorpusError as exc:
        print(f"corpus error: {exc}", file=sys.stderr)
        return EXIT_CORPUS
    except (UsageError, ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
