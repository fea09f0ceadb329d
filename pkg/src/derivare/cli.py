"""Command-line entry point: ``derivare {ingest,index,ask,render,eval}``.

Configuration lives in an INI file (``--config``); every setting that has a
flag can be overridden on the command line.  Relative paths in the config
file are resolved against the file's own directory.

Exit codes: 0 success, 1 user or configuration error, 2 provider failure
(including derivations the model could not complete).
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import core, engine, evaluation, ingest, retrieval
from .errors import ConfigError, DerivareError, ProviderError
from .provider import DEFAULT_API_KEY_ENV, HashingEmbedder, MockProvider, RemoteProvider


@dataclass
class ProviderSettings:
    kind: str = "mock"
    endpoint: str = ""
    chat_model: str = ""
    embedding_model: str = ""
    rerank_model: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    query_prefix: str = ""
    passage_prefix: str = ""
    script: Path | None = None
    embedding_dim: int = 256


@dataclass
class AppConfig:
    corpus_dir: Path = Path("corpus")
    chunks_path: Path = Path("chunks.jsonl")
    index_path: Path = Path("index.jsonl")
    max_chars: int = ingest.DEFAULT_MAX_CHARS
    overlap_chars: int = ingest.DEFAULT_OVERLAP_CHARS
    k: int = 3
    rerank: bool = False
    rerank_pool: int = 10
    mode: str = "whole"
    max_steps: int = engine.DEFAULT_MAX_STEPS
    language: str = "en"
    few_shots_path: Path | None = None
    max_context_chars: int = engine.DEFAULT_MAX_CONTEXT_CHARS
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    rubric_path: Path | None = None
    parallelism: int = 4

    def retrieval_config(self) -> retrieval.RetrievalConfig:
        return retrieval.RetrievalConfig(k=self.k, rerank=self.rerank, rerank_pool=max(self.rerank_pool, self.k))

    def engine_config(self) -> engine.EngineConfig:
        try:
            mode = engine.Mode(self.mode)
        except ValueError:
            raise ConfigError(f"unknown engine mode {self.mode!r}; use one-step or whole") from None
        few_shots = engine.load_few_shots(self.few_shots_path) if self.few_shots_path else None
        return engine.EngineConfig(mode=mode, max_steps=self.max_steps, language=self.language, few_shots=few_shots)


def load_config(path: str | Path | None) -> AppConfig:
    cfg = AppConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser()
    parser.read(path, encoding="utf-8")
    base = path.resolve().parent

    def p(section: str, key: str) -> Path | None:
        raw = parser.get(section, key, fallback="").strip()
        return (base / raw) if raw else None

    try:
        cfg.corpus_dir = p("corpus", "dir") or cfg.corpus_dir
        cfg.chunks_path = p("store", "chunks") or cfg.chunks_path
        cfg.index_path = p("store", "index") or cfg.index_path
        cfg.max_chars = parser.getint("chunking", "max_chars", fallback=cfg.max_chars)
        cfg.overlap_chars = parser.getint("chunking", "overlap_chars", fallback=cfg.overlap_chars)
        cfg.k = parser.getint("retrieval", "k", fallback=cfg.k)
        cfg.rerank = parser.getboolean("retrieval", "rerank", fallback=cfg.rerank)
        cfg.rerank_pool = parser.getint("retrieval", "rerank_pool", fallback=cfg.rerank_pool)
        cfg.mode = parser.get("engine", "mode", fallback=cfg.mode)
        cfg.max_steps = parser.getint("engine", "max_steps", fallback=cfg.max_steps)
        cfg.language = parser.get("engine", "language", fallback=cfg.language)
        cfg.few_shots_path = p("engine", "few_shots")
        cfg.max_context_chars = parser.getint("engine", "max_context_chars", fallback=cfg.max_context_chars)
        cfg.rubric_path = p("eval", "rubric")
        cfg.parallelism = parser.getint("eval", "parallelism", fallback=cfg.parallelism)
        prov = cfg.provider
        for key in ("kind", "endpoint", "chat_model", "embedding_model", "rerank_model",
                    "api_key_env", "query_prefix", "passage_prefix"):
            setattr(prov, key, parser.get("provider", key, fallback=getattr(prov, key)))
        prov.script = p("provider", "script")
        prov.embedding_dim = parser.getint("provider", "embedding_dim", fallback=prov.embedding_dim)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


def apply_overrides(cfg: AppConfig, args: argparse.Namespace) -> AppConfig:
    if getattr(args, "k", None) is not None:
        cfg.k = args.k
    if getattr(args, "mode", None) is not None:
        cfg.mode = args.mode
    if getattr(args, "provider", None) is not None:
        cfg.provider = replace(cfg.provider, kind=args.provider)
    if getattr(args, "mock_script", None) is not None:
        cfg.provider = replace(cfg.provider, script=Path(args.mock_script))
    return cfg


def build_provider(settings: ProviderSettings):
    if settings.kind == "mock":
        embedder = HashingEmbedder(settings.embedding_dim)
        if settings.script is None:
            return MockProvider([], embedder=embedder)
        if not settings.script.is_file():
            raise ConfigError(f"mock script {settings.script} not found")
        return MockProvider.from_json(settings.script, embedder=embedder)
    if settings.kind == "remote":
        if not settings.endpoint or not settings.chat_model:
            raise ConfigError("remote provider needs provider.endpoint and provider.chat_model")
        return RemoteProvider(
            settings.endpoint,
            settings.chat_model,
            settings.embedding_model or None,
            settings.rerank_model or None,
            api_key_env=settings.api_key_env,
            query_prefix=settings.query_prefix,
            passage_prefix=settings.passage_prefix,
        )
    raise ConfigError(f"unknown provider kind {settings.kind!r}; use mock or remote")


# -- commands -------------------------------------------------------------


def _need_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} {path} not found")
    return path


def cmd_ingest(cfg: AppConfig, args: argparse.Namespace) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ingest.SkippedFileWarning)
        docs = ingest.load_corpus(cfg.corpus_dir)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    chunks = ingest.chunk_corpus(docs, cfg.max_chars, cfg.overlap_chars)
    out = Path(args.out) if args.out else cfg.chunks_path
    out.parent.mkdir(parents=True, exist_ok=True)
    ingest.write_chunks(out, chunks)
    print(f"wrote {len(chunks)} chunks from {len(docs)} documents to {out}")
    return 0


def cmd_index(cfg: AppConfig, args: argparse.Namespace) -> int:
    chunks = ingest.read_chunks(_need_file(cfg.chunks_path, "chunk store"))
    index = retrieval.build_index(chunks, build_provider(cfg.provider))
    out = Path(args.out) if args.out else cfg.index_path
    out.parent.mkdir(parents=True, exist_ok=True)
    index.save(out)
    print(f"indexed {len(index)} chunks (dim {index.dim}) into {out}")
    return 0


class _Answerer:
    """Shared state for answering many questions with one strategy."""

    def __init__(self, cfg: AppConfig, strategy: engine.GenerationStrategy, provider) -> None:
        self.cfg = cfg
        self.strategy = strategy
        self.provider = provider
        self.rcfg = cfg.retrieval_config()
        self.ecfg = cfg.engine_config()
        self._index = None
        self._docs = None

    def _retrieve(self, question: str):
        if self._index is None:
            chunks = ingest.read_chunks(_need_file(self.cfg.chunks_path, "chunk store"))
            self._index = retrieval.EmbeddingIndex.load(_need_file(self.cfg.index_path, "index"), chunks)
        scorer = self.provider if self.rcfg.rerank else None
        return retrieval.retrieve_top_k(self._index, question, self.rcfg, self.provider, scorer)

    def answer(self, question: str) -> tuple[str | None, core.DerivationTree | None]:
        if self.strategy is engine.GenerationStrategy.LONG_CONTEXT:
            if self._docs is None:
                self._docs = ingest.load_corpus(self.cfg.corpus_dir)
            text = engine.answer_long_context(
                question, self._docs, self.provider,
                language=self.cfg.language, max_context_chars=self.cfg.max_context_chars,
            )
            return text, None
        hits = self._retrieve(question)
        if self.strategy is engine.GenerationStrategy.PLAIN_RAG:
            return engine.answer_plain_rag(question, hits, self.provider, language=self.cfg.language), None
        tree = engine.run_derivation(question, hits, self.provider, self.ecfg)
        return tree.answer, tree


def cmd_ask(cfg: AppConfig, args: argparse.Namespace) -> int:
    strategy = engine.GenerationStrategy(args.strategy)
    answerer = _Answerer(cfg, strategy, build_provider(cfg.provider))
    answer, tree = answerer.answer(args.question)
    if tree is not None:
        print(core.render_tree(tree, "ascii"))
        print()
        for note in core.validation_notes(tree):
            print(f"note: {note.message}", file=sys.stderr)
        if args.out:
            Path(args.out).write_text(core.render_tree(tree, "json") + "\n", encoding="utf-8")
        if answer is None:
            print(f"error: derivation did not finish: {tree.abort_reason}", file=sys.stderr)
            return 2
    print(answer)
    return 0


def cmd_render(cfg: AppConfig, args: argparse.Namespace) -> int:
    path = _need_file(Path(args.tree), "tree file")
    try:
        tree = core.parse_tree_json(path.read_text(encoding="utf-8"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path} is not a derivation tree: {exc}") from None
    text = core.render_tree(tree, args.format)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_eval(cfg: AppConfig, args: argparse.Namespace) -> int:
    strategy = engine.GenerationStrategy(args.strategy)
    records = evaluation.read_dataset(_need_file(Path(args.dataset), "dataset"), strategy)
    provider = build_provider(cfg.provider)
    rubric = evaluation.ScoreRubric.from_json(cfg.rubric_path) if cfg.rubric_path else None

    answerer = None
    filled = []
    for rec in records:
        if rec.candidate_answer:
            filled.append(rec)
            continue
        answerer = answerer or _Answerer(cfg, strategy, provider)
        answer, tree = answerer.answer(rec.question)
        filled.append(replace(rec, candidate_answer=answer or "", derivation=tree))

    out_dir = Path(args.out) if args.out else Path(".")
    verdicts, summary = evaluation.run_eval(
        filled, provider, rubric, parallelism=cfg.parallelism, out_dir=out_dir
    )
    print(
        f"n={summary.n} excluded={summary.excluded} acceptable={summary.pct_acceptable:.1f}% "
        f"avg={summary.average:.2f} std={summary.std_dev:.2f} "
        f"counts={json.dumps({str(k): v for k, v in summary.counts.items()})}"
    )
    return 0


# -- argument parsing -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI configuration file")
    common.add_argument("--provider", choices=["remote", "mock"], help="override provider.kind")
    common.add_argument("--mock-script", metavar="PATH", help="JSON script for the mock provider")
    common.add_argument("--out", metavar="PATH", help="output file (or directory for eval)")

    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--strategy", choices=[s.value for s in engine.GenerationStrategy], default="derivation")
    gen.add_argument("--k", type=int, help="number of chunks to retrieve")
    gen.add_argument("--mode", choices=[m.value for m in engine.Mode], help="derivation mode")

    parser = argparse.ArgumentParser(prog="derivare", description="Derivation-prompting RAG toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="chunk the corpus into a chunk store")
    sub.add_parser("index", parents=[common], help="embed the chunk store into an index")
    ask = sub.add_parser("ask", parents=[common, gen], help="answer one question")
    ask.add_argument("question")
    render = sub.add_parser("render", parents=[common], help="render a saved derivation tree")
    render.add_argument("tree")
    render.add_argument("--format", choices=["ascii", "dot", "json"], default="ascii")
    ev = sub.add_parser("eval", parents=[common, gen], help="generate answers and judge them")
    ev.add_argument("dataset")
    return parser


COMMANDS = {"ingest": cmd_ingest, "index": cmd_index, "ask": cmd_ask, "render": cmd_render, "eval": cmd_eval}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except ProviderError as exc:
        print(f"error: provider failure: {exc}", file=sys.stderr)
        return 2
    except (DerivareError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
