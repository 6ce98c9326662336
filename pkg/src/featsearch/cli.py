"""Command-line entry point: ``featsearch <subcommand> [options]``.

Artifacts live under ``--out-dir`` (default ``featsearch_out``)::

    vocab.txt            tokenizer merges
    model.fsk            relevance model checkpoint (+ model.report.json)
    index.fsi            embedding index for the catalog
    student_L1_D32.fsk   distilled students
    eval_*.txt / .json   evaluation reports

Exit codes: 0 ok, 2 usage or configuration error, 3 bad data, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .baselines import bm25_search, build_lexical_index, fts_search
from .catalog import (
    QUERY_KINDS,
    FeatureCatalog,
    QueryRecord,
    bundled_path,
    bundled_queryset,
    index_text,
    load_catalog,
    load_queryset,
    synthesize_pairs,
)
from .encoder import EncoderConfig, ModelParams, init_params, load_checkpoint, param_count, save_checkpoint
from .errors import ConfigError, FeatSearchError, ValidationError
from .evalkit import Bm25Engine, FtsEngine, NeuralEngine, evaluate, render_report
from .index import build_index, load_index, save_index, search
from .tokenizer import Vocab, build_vocab
from .trainers import (
    ContrastiveHyper,
    DistillHyper,
    MlmHyper,
    TrainReport,
    distill,
    hyper_from_json,
    mlm_pretrain,
    train_relevance,
)

log = logging.getLogger("featsearch")

DEFAULT_OUT = "featsearch_out"
DEFAULT_VOCAB_SIZE = 1000
KIND_ALIASES = {"exact": "exact_keyword", "relaxed": "relaxed_keyword", "sentence": "sentence"}
SWEEP_HITS = (5, 10, 20)
RECIPE_SECTION = {"demo": "train", "sweep": "distill"}


@dataclass
class RunConfig:
    """Everything a subcommand needs; built from flags layered over an optional JSON file."""

    command: str
    catalog: Path | None = None
    queryset: str | None = None
    out_dir: Path = Path(DEFAULT_OUT)
    vocab: Path | None = None
    model: Path | None = None
    index: Path | None = None
    seed: int = 0
    topk: int = 5
    threshold: float | None = None
    compare: list[str] = field(default_factory=list)
    engines: list[str] = field(default_factory=lambda: ["neural"])
    query: str | None = None
    students: list[tuple[int, int]] = field(default_factory=list)
    model_overrides: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)
    verbose: int = 0

    @property
    def vocab_path(self) -> Path:
        return self.vocab or self.out_dir / "vocab.txt"

    @property
    def model_path(self) -> Path:
        return self.model or self.out_dir / "model.fsk"

    @property
    def index_path(self) -> Path:
        return self.index or self.out_dir / "index.fsi"


# -- loading helpers -----------------------------------------------------------


def _require(path: Path, what: str, hint: str = "") -> Path:
    if not Path(path).exists():
        raise ConfigError(f"{what} not found: {path}" + (f" ({hint})" if hint else ""))
    return Path(path)


def _catalog(cfg: RunConfig) -> FeatureCatalog:
    path = cfg.catalog if cfg.catalog is not None else bundled_path("catalog.json")
    return load_catalog(_require(path, "catalog"))


def _vocab(cfg: RunConfig, catalog: FeatureCatalog | None = None) -> Vocab:
    """Load the vocabulary, building and saving it from catalog texts when absent."""
    if cfg.vocab_path.exists():
        return Vocab.load(cfg.vocab_path)
    if cfg.vocab is not None:
        raise ConfigError(f"vocabulary not found: {cfg.vocab}")
    catalog = catalog or _catalog(cfg)
    vocab = build_vocab(catalog.texts(), int(cfg.hyper.get("vocab_size", DEFAULT_VOCAB_SIZE)))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(cfg.vocab_path)
    log.info("built vocabulary of %d tokens -> %s", vocab.size, cfg.vocab_path)
    return vocab


def _model(cfg: RunConfig, path: Path | None = None) -> ModelParams:
    return load_checkpoint(_require(path or cfg.model_path, "model checkpoint", "run `featsearch train` first"))


def _encoder_config(cfg: RunConfig, vocab: Vocab, **defaults) -> EncoderConfig:
    spec = {"layers": 2, "hidden": 64, "max_seq_len": 64, **defaults, **cfg.model_overrides}
    hidden = spec["hidden"]
    spec.setdefault("heads", 4 if hidden % 4 == 0 else 1)
    spec.setdefault("ffn_dim", 4 * hidden)
    return EncoderConfig(vocab_size=vocab.size, **spec)


def _queries(cfg: RunConfig, catalog: FeatureCatalog) -> list[list[QueryRecord]]:
    """Query sets named by ``--queryset``: a file path, a kind alias, or ``all`` for the bundled sets."""
    name = cfg.queryset or "all"
    if name == "all":
        return [bundled_queryset(k) for k in QUERY_KINDS]
    if name in KIND_ALIASES or name in QUERY_KINDS:
        return [bundled_queryset(KIND_ALIASES.get(name, name))]
    records = load_queryset(_require(Path(name), "query set"), catalog)
    by_kind: dict[str, list[QueryRecord]] = {}
    for r in records:
        by_kind.setdefault(r.kind, []).append(r)
    return list(by_kind.values())


def _write_report(report: TrainReport, path: Path) -> None:
    report.save(path)
    log.info("final loss %.5f after %d epochs -> %s", report.final_loss, len(report.epoch_losses), path)


# -- subcommands -----------------------------------------------------------------


def cmd_validate(cfg: RunConfig) -> int:
    catalog = _catalog(cfg)
    pairs = synthesize_pairs(catalog)
    print(f"catalog {catalog.version or '-'}: {len(catalog)} entries, {len(pairs)} training pairs")
    for records in _queries(cfg, catalog):
        if records:
            for r in records:
                bad = r.gold_ids - set(catalog.ids)
                if bad:
                    raise ValidationError(f"query {r.text!r}: unknown gold id {sorted(bad)[0]!r}")
            print(f"queries {records[0].kind}: {len(records)}")
    return 0


def cmd_vocab(cfg: RunConfig) -> int:
    catalog = _catalog(cfg)
    vocab = build_vocab(catalog.texts(), int(cfg.hyper.get("vocab_size", DEFAULT_VOCAB_SIZE)))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(cfg.vocab_path)
    print(f"vocabulary: {vocab.size} tokens ({len(vocab.merges)} merges) -> {cfg.vocab_path}")
    return 0


def cmd_pretrain(cfg: RunConfig) -> int:
    catalog = _catalog(cfg)
    vocab = _vocab(cfg, catalog)
    params = init_params(_encoder_config(cfg, vocab), cfg.seed)
    hyper = hyper_from_json(MlmHyper, cfg.hyper, seed=cfg.seed)
    params, report = mlm_pretrain(params, catalog.texts(), hyper, vocab)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "pretrained.fsk"
    save_checkpoint(params, out)
    _write_report(report, out.with_suffix(".report.json"))
    print(f"pretrained -> {out} (masked accuracy {report.metrics['masked_accuracy']:.3f})")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    catalog = _catalog(cfg)
    vocab = _vocab(cfg, catalog)
    init = cfg.hyper.get("init")
    if init:
        params = load_checkpoint(_require(Path(init), "initial checkpoint"))
        if params.config.vocab_size != vocab.size:
            raise ConfigError(f"{init}: vocab_size {params.config.vocab_size} != vocabulary size {vocab.size}")
    else:
        params = init_params(_encoder_config(cfg, vocab), cfg.seed)
    hyper = hyper_from_json(ContrastiveHyper, cfg.hyper, seed=cfg.seed)
    params, report = train_relevance(params, synthesize_pairs(catalog), hyper, vocab)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, cfg.model_path)
    _write_report(report, cfg.model_path.with_suffix(".report.json"))
    print(f"model {params.config.layers}x{params.config.hidden} -> {cfg.model_path} "
          f"(final loss {report.final_loss:.4f}, {report.wall_seconds:.0f}s)")
    return 0


def _student_config(cfg: RunConfig, teacher: ModelParams, layers: int, hidden: int) -> EncoderConfig:
    t = teacher.config
    heads = cfg.model_overrides.get("heads") or next(h for h in (4, 2, 1) if hidden % h == 0)
    return EncoderConfig(layers, hidden, heads, cfg.model_overrides.get("ffn_dim") or 4 * hidden,
                         t.vocab_size, t.max_seq_len)


def _distill_one(cfg, teacher, vocab, corpus, layers, hidden) -> tuple[ModelParams, TrainReport, Path]:
    s_cfg = _student_config(cfg, teacher, layers, hidden)
    if param_count(s_cfg)[0] > param_count(teacher.config)[0]:
        log.warning("student %dx%d is larger than its teacher", layers, hidden)
    hyper = hyper_from_json(DistillHyper, cfg.hyper, student_config=s_cfg, corpus=corpus, seed=cfg.seed)
    student, report = distill(teacher, hyper, vocab)
    out = cfg.out_dir / f"student_L{layers}_D{hidden}.fsk"
    save_checkpoint(student, out)
    _write_report(report, out.with_suffix(".report.json"))
    return student, report, out


def distill_corpus(catalog: FeatureCatalog) -> list[str]:
    """Sentences the student imitates the teacher on: every catalog text, de-duplicated in order."""
    return list(dict.fromkeys(catalog.texts()))


def cmd_distill(cfg: RunConfig) -> int:
    catalog = _catalog(cfg)
    vocab = _vocab(cfg, catalog)
    teacher = _model(cfg)
    layers = cfg.model_overrides.get("layers", 1)
    hidden = cfg.model_overrides.get("hidden", teacher.config.hidden)
    _, report, out = _distill_one(cfg, teacher, vocab, distill_corpus(catalog), layers, hidden)
    m = report.metrics
    print(f"student {layers}x{hidden} -> {out} (mse {m['initial_mse']:.5f} -> {m['final_mse']:.5f})")
    return 0


def _sentence_hits(params, vocab, catalog, queries) -> dict[str, float]:
    index = build_index(params, vocab, catalog)
    report = evaluate(NeuralEngine(index, params, vocab), queries, hits_ks=SWEEP_HITS)
    return report.percentages()


def cmd_sweep(cfg: RunConfig) -> int:
    catalog = _catalog(cfg)
    vocab = _vocab(cfg, catalog)
    teacher = _model(cfg)
    queries = [q for qs in _queries(cfg, catalog) for q in qs if q.kind == "sentence"]
    if not queries:
        raise ValidationError("the sweep needs a sentence query set")
    students = cfg.students or [(1, teacher.config.hidden), (1, teacher.config.hidden // 2)]
    corpus = distill_corpus(catalog)

    rows = [("teacher", teacher.config, _sentence_hits(teacher, vocab, catalog, queries), "")]
    for layers, hidden in students:
        try:
            student, _, _ = _distill_one(cfg, teacher, vocab, corpus, layers, hidden)
            rows.append(("student", student.config, _sentence_hits(student, vocab, catalog, queries), ""))
        except FeatSearchError as exc:
            log.error("student %dx%d failed: %s", layers, hidden, exc)
            rows.append(("student", None, {}, f"failed: {exc}"))

    header = f"{'model':8} {'L':>2} {'D':>4} {'size KB':>9} " + " ".join(f"{'H@' + str(k):>6}" for k in SWEEP_HITS)
    lines = [header, "-" * len(header)]
    payload = []
    for role, c, hits, note in rows:
        if c is None:
            lines.append(f"{role:8} {note}")
            payload.append({"role": role, "error": note})
            continue
        size = param_count(c)[1]
        cells = " ".join(f"{hits['H@' + str(k)]:6.1f}" for k in SWEEP_HITS)
        lines.append(f"{role:8} {c.layers:>2} {c.hidden:>4} {size / 1024:9.1f} {cells}")
        payload.append({"role": role, "layers": c.layers, "hidden": c.hidden, "bytes": size, "hits": hits})
    table = "\n".join(lines) + "\n"
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "sweep.txt").write_text(table, encoding="utf-8")
    (cfg.out_dir / "sweep.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(table, end="")
    return 0


def cmd_index(cfg: RunConfig) -> int:
    catalog = _catalog(cfg)
    vocab = _vocab(cfg, catalog)
    index = build_index(_model(cfg), vocab, catalog)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_index(index, cfg.index_path)
    print(f"index: {len(index)} features x {index.dim} dims -> {cfg.index_path}")
    return 0


def _search_columns(cfg, catalog, index, params, vocab, lexical) -> Callable[[str], list[list[tuple[str, float]]]]:
    def run(query: str):
        cols = [search(index, params, vocab, query, cfg.topk, cfg.threshold).hits]
        for name in cfg.compare:
            fn = fts_search if name == "fts" else bm25_search
            cols.append(fn(lexical, query, cfg.topk).hits)
        return cols

    return run


def _render_hits(catalog: FeatureCatalog, cols: list[list[tuple[str, float]]], names: list[str]) -> str:
    if len(cols) == 1:
        if not cols[0]:
            return "  (no results)"
        return "\n".join(f"{i:>3}. {s:7.4f}  {index_text(catalog[fid])}" for i, (fid, s) in enumerate(cols[0], 1))
    width = max([len(n) for n in names] + [len(fid) + 9 for col in cols for fid, _ in col])
    lines = [("     " + "  ".join(n.ljust(width) for n in names)).rstrip()]
    for i in range(max(len(c) for c in cols)):
        cells = [f"{c[i][0]} ({c[i][1]:.2f})" if i < len(c) else "" for c in cols]
        lines.append((f"{i + 1:>3}. " + "  ".join(cell.ljust(width) for cell in cells)).rstrip())
    return "\n".join(lines)


def cmd_search(cfg: RunConfig, stdin=None) -> int:
    catalog = _catalog(cfg)
    vocab = _vocab(cfg, catalog)
    params = _model(cfg)
    index = load_index(_require(cfg.index_path, "index", "run `featsearch index` first"), params, vocab)
    lexical = build_lexical_index(catalog) if cfg.compare else None
    run = _search_columns(cfg, catalog, index, params, vocab, lexical)
    names = ["neural", *cfg.compare]
    if cfg.query is not None:
        print(_render_hits(catalog, run(cfg.query), names))
        return 0
    stdin = stdin or sys.stdin
    interactive = stdin.isatty()
    while True:
        if interactive:
            print("query> ", end="", flush=True)
        line = stdin.readline()
        if not line:
            break
        text = line.strip()
        if not text:
            continue
        if not interactive:
            print(f"> {text}")
        print(_render_hits(catalog, run(text), names), flush=True)
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    catalog = _catalog(cfg)
    engines = []
    for name in dict.fromkeys(cfg.engines + cfg.compare):
        if name == "neural":
            vocab = _vocab(cfg, catalog)
            params = _model(cfg)
            index = load_index(_require(cfg.index_path, "index", "run `featsearch index` first"), params, vocab)
            engines.append(NeuralEngine(index, params, vocab, cfg.threshold))
        elif name == "fts":
            engines.append(FtsEngine(build_lexical_index(catalog)))
        else:
            engines.append(Bm25Engine(build_lexical_index(catalog)))
    catalog_fp = _catalog_fingerprint(catalog)
    for records in _queries(cfg, catalog):
        reports = [evaluate(e, records, prf_k=cfg.topk, catalog_fingerprint=catalog_fp) for e in engines]
        print(render_report(reports, cfg.out_dir, tag=records[0].kind))
    return 0


def _catalog_fingerprint(catalog: FeatureCatalog) -> str:
    import hashlib

    blob = "\n".join(f"{e.id}\t{index_text(e)}" for e in catalog).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def cmd_demo(cfg: RunConfig) -> int:
    """vocab -> train -> index -> eval on the bundled fixtures, comparing against both baselines."""
    for step in (cmd_vocab, cmd_train, cmd_index):
        step(cfg)
    cfg.engines, cfg.compare = ["neural", "fts", "bm25"], []
    return cmd_eval(cfg)


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "validate": cmd_validate,
    "vocab": cmd_vocab,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "distill": cmd_distill,
    "sweep": cmd_sweep,
    "index": cmd_index,
    "search": cmd_search,
    "eval": cmd_eval,
    "demo": cmd_demo,
}

HELP = {
    "validate": "check a catalog and query sets",
    "vocab": "build the tokenizer vocabulary from catalog texts",
    "pretrain": "optional masked-token pretraining on catalog texts",
    "train": "contrastive training of the relevance model",
    "distill": "distill the model into a smaller student",
    "sweep": "distill several students and tabulate size against Hits@K",
    "index": "embed the catalog into a search index",
    "search": "search once, or read queries from stdin until end of input",
    "eval": "score engines on query sets",
    "demo": "vocab, train, index and eval on the bundled data",
}


# -- argument parsing ---------------------------------------------------------------


def _engine_list(text: str) -> list[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    bad = [n for n in names if n not in ("neural", "fts", "bm25")]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown engine(s): {', '.join(bad)}")
    return names


def _student_list(text: str) -> list[tuple[int, int]]:
    try:
        return [tuple(int(v) for v in item.lower().split("x")) for item in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"students must look like 1x32,1x16, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--catalog", type=Path, help="catalog JSON (default: bundled sample)")
    common.add_argument("--queryset", help="JSONL path, or exact / relaxed / sentence / all for bundled sets")
    common.add_argument("--out-dir", type=Path, help=f"artifact directory (default: {DEFAULT_OUT})")
    common.add_argument("--vocab", type=Path, help="vocabulary file (default: OUT/vocab.txt)")
    common.add_argument("--model", type=Path, help="model checkpoint (default: OUT/model.fsk)")
    common.add_argument("--index", type=Path, help="index file (default: OUT/index.fsi)")
    common.add_argument("--config", type=Path, help="JSON file of option and hyperparameter overrides")
    common.add_argument("--seed", type=int)
    common.add_argument("--layers", type=int)
    common.add_argument("--dim", type=int, help="hidden size")
    common.add_argument("--heads", type=int)
    common.add_argument("--ffn-dim", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float, dest="learning_rate")
    common.add_argument("--vocab-size", type=int)
    common.add_argument("--topk", type=int)
    common.add_argument("--threshold", type=float)
    common.add_argument("--compare", type=_engine_list, help="extra engines, e.g. fts,bm25")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="featsearch", description="Semantic search over a settings catalog.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
        if name == "search":
            p.add_argument("query", nargs="?", help="omit to read queries from stdin")
        if name == "eval":
            p.add_argument("--engines", type=_engine_list, help="default: neural")
        if name == "train":
            p.add_argument("--init", help="start from this checkpoint (e.g. a pretrained one)")
            p.add_argument("--temperature", type=float)
            p.add_argument("--dropout", type=float)
            p.add_argument("--batch-size", type=int)
        if name == "sweep":
            p.add_argument("--students", type=_student_list, help="LxD list, e.g. 1x64,1x32,2x32")
    return parser


_MODEL_KEYS = {"layers": "layers", "dim": "hidden", "hidden": "hidden", "heads": "heads",
               "ffn_dim": "ffn_dim", "max_seq_len": "max_seq_len"}
_PLAIN_KEYS = ("catalog", "queryset", "out_dir", "vocab", "model", "index", "seed", "topk",
               "threshold", "compare", "engines", "query", "students", "verbose")


def load_recipe() -> dict:
    """The bundled default hyperparameters, one section per training command."""
    return json.loads(bundled_path("recipe.json").read_text(encoding="utf-8"))


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Layer explicit flags over the ``--config`` file over defaults."""
    layered: dict = {}
    if args.config is None:
        layered = dict(load_recipe().get(RECIPE_SECTION.get(args.command, args.command), {}))
    else:
        try:
            layered = json.loads(_require(args.config, "config file").read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(layered, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
    layered.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")})
    if not layered.get("verbose"):
        layered.pop("verbose", None)

    cfg = RunConfig(args.command)
    for key, value in layered.items():
        if key in _MODEL_KEYS:
            cfg.model_overrides[_MODEL_KEYS[key]] = int(value)
        elif key in _PLAIN_KEYS:
            setattr(cfg, key, value)
        else:
            cfg.hyper[key] = value
    for key in ("catalog", "out_dir", "vocab", "model", "index"):
        value = getattr(cfg, key)
        if value is not None:
            setattr(cfg, key, Path(value))
    for key in ("compare", "engines"):
        if isinstance(getattr(cfg, key), str):
            setattr(cfg, key, _engine_list(getattr(cfg, key)))
    if isinstance(cfg.students, str):
        cfg.students = _student_list(cfg.students)
    if cfg.topk < 1:
        raise ConfigError(f"--topk must be >= 1, got {cfg.topk}")
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except FeatSearchError as exc:
        print(f"featsearch {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except argparse.ArgumentTypeError as exc:
        print(f"featsearch {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
