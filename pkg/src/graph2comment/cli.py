"""Command-line entry point: build-graph, train, generate, stats, grad-check."""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import reporting, training
from .corpus import (Article, CorpusError, TokenizerConfig, build_vocab,
                     load_corpus)
from .keywords import (KeywordSet, TextRankConfig, extract_keywords,
                       load_token_file)
from .model import CommentModel, Hyperparams
from .topic_graph import build_graph, corpus_stats, export_graph
from .training import CheckpointError, TrainConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class UsageError(Exception):
    """Bad flags or config keys; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class _Flag:
    name: str
    kind: str  # int | float | str | bool
    default: object
    help: str
    choices: tuple = ()
    required: bool = False


_HP = Hyperparams()
_TR = TextRankConfig()
_TC = TrainConfig()

_TOKENIZER = _Flag("tokenizer", "str", "whitespace", "token splitting mode",
                   choices=("whitespace", "char"))
_LEXICON = _Flag("lexicon", "str", None, "file of named-entity tokens, one per line")
_STOPWORDS = _Flag("stopwords", "str", None, "stop-word file, one token per line")
_LENIENT = _Flag("lenient", "bool", False, "skip malformed corpus lines with a warning")
_CONFIG = _Flag("config", "str", None, "key=value file supplying defaults; flags win")
_GRAPH_FLAGS = (
    _Flag("topk", "int", _TR.top_k, "max keywords ranked by graph scoring"),
    _Flag("window", "int", _TR.window, "co-occurrence window for keyword ranking"),
    _Flag("edge-strategy", "str", "structural", "edge weighting scheme",
          choices=("structural", "tfidf")),
    _Flag("isolate-title", "bool", False,
          "keep the title vertex out of keyword matching"),
)
_SHAPE_FLAGS = (
    _Flag("embed-dim", "int", _HP.embed_dim, "embedding and hidden width"),
    _Flag("heads", "int", _HP.attention_heads, "self-attention heads"),
    _Flag("sa-layers", "int", _HP.self_attention_layers, "self-attention layers"),
    _Flag("decoder-layers", "int", _HP.decoder_layers, "decoder LSTM layers"),
    _Flag("gcn-layers", "int", _HP.gcn_layers, "graph convolution layers"),
)

_COMMANDS: dict[str, tuple[_Flag, ...]] = {
    "build-graph": (
        _Flag("input", "str", None, "corpus file (one JSON record per line)",
              required=True),
        _Flag("out", "str", None, "output directory, one graph file per article",
              required=True),
        _Flag("format", "str", "dot", "graph serialization",
              choices=("dot", "structured")),
        _LEXICON, _STOPWORDS, _TOKENIZER, *_GRAPH_FLAGS, _LENIENT, _CONFIG,
    ),
    "train": (
        _Flag("corpus", "str", None, "training corpus file", required=True),
        _Flag("out", "str", None, "output directory for checkpoints and log",
              required=True),
        _Flag("epochs", "int", _HP.epochs, "training epochs"),
        _Flag("batch", "int", _HP.batch_size, "examples accumulated per optimizer step"),
        _Flag("lr", "float", _HP.learning_rate, "initial Adam learning rate"),
        _Flag("lr-decay", "float", _HP.lr_decay, "learning-rate factor per epoch"),
        _Flag("seed", "int", 0, "random seed for init, shuffling and dropout"),
        _Flag("vocab-size", "int", _HP.vocab_size, "vocabulary cap incl. specials"),
        _Flag("dropout", "float", _HP.dropout, "dropout rate"),
        _Flag("grad-clip", "float", _TC.grad_clip, "global gradient-norm bound"),
        _Flag("no-grad-clip", "bool", False, "disable gradient clipping"),
        _Flag("max-steps", "int", None, "stop after this many optimizer steps"),
        _Flag("resume", "str", None, "checkpoint to continue from"),
        *_SHAPE_FLAGS, _LEXICON, _STOPWORDS, _TOKENIZER, *_GRAPH_FLAGS,
        _LENIENT, _CONFIG,
    ),
    "generate": (
        _Flag("checkpoint", "str", None, "trained checkpoint file", required=True),
        _Flag("corpus", "str", None, "articles to comment on", required=True),
        _Flag("out", "str", None, "output file (one JSON line per article)",
              required=True),
        _Flag("beam", "int", 1, "beam size; 1 means greedy"),
        _Flag("max-len", "int", None, "comment length cap (default: model setting)"),
        _LENIENT, _CONFIG,
    ),
    "stats": (
        _Flag("input", "str", None, "generated-comment file", required=True),
        _Flag("out", "str", None, "output directory for stats.tsv and stats.png",
              required=True),
        _STOPWORDS, _TOKENIZER, _CONFIG,
    ),
    "grad-check": (
        _Flag("seed", "int", 0, "seed for the synthetic article and probes"),
        _Flag("eps", "float", 1e-5, "finite-difference step"),
        _Flag("samples", "int", 64, "max probed coordinates per tensor"),
        _Flag("embed-dim", "int", 16, "embedding width of the checked model"),
        _Flag("heads", "int", 2, "self-attention heads"),
        _Flag("sa-layers", "int", 1, "self-attention layers"),
        _Flag("decoder-layers", "int", 2, "decoder LSTM layers"),
        _Flag("gcn-layers", "int", 1, "graph convolution layers"),
        _Flag("corrupt-backward", "bool", False,
              "negative-control hook: perturb analytic gradients so the check "
              "must fail"),
        _CONFIG,
    ),
}

_TRUE_WORDS = frozenset({"1", "true", "yes", "on"})
_FALSE_WORDS = frozenset({"0", "false", "no", "off"})


def build_parser() -> _Parser:
    parser = _Parser(prog="graph2comment",
                     description="Topic-graph comment generation pipeline.")
    subs = parser.add_subparsers(dest="command", metavar="COMMAND")
    descriptions = {
        "build-graph": "Build a topic interaction graph per article.",
        "train": "Train the graph-to-sequence comment model.",
        "generate": "Generate comments for articles from a checkpoint.",
        "stats": "Summarize a generated-comment file (TSV + figure).",
        "grad-check": "Verify model gradients against finite differences.",
    }
    for cmd, flags in _COMMANDS.items():
        sub = subs.add_parser(cmd, help=descriptions[cmd],
                              description=descriptions[cmd])
        for f in flags:
            opt = "--" + f.name
            if f.kind == "bool":
                sub.add_argument(opt, action="store_const", const=True,
                                 default=None, help=f.help)
            else:
                conv = {"int": int, "float": float, "str": str}[f.kind]
                kwargs = {"type": conv, "default": None, "help": f.help}
                if f.choices:
                    kwargs["choices"] = list(f.choices)
                sub.add_argument(opt, **kwargs)
    return parser


def _convert(flag: _Flag, text: str):
    if flag.kind == "bool":
        low = text.lower()
        if low in _TRUE_WORDS:
            return True
        if low in _FALSE_WORDS:
            return False
        raise UsageError(f"config key {flag.name!r} expects a boolean, got {text!r}")
    conv = {"int": int, "float": float, "str": str}[flag.kind]
    try:
        value = conv(text)
    except ValueError:
        raise UsageError(f"config key {flag.name!r} expects {flag.kind}, got {text!r}")
    if flag.choices and value not in flag.choices:
        raise UsageError(f"config key {flag.name!r} must be one of "
                         f"{', '.join(flag.choices)}; got {text!r}")
    return value


def _read_config(path, flags_by_name):
    """key=value lines; '#' starts a comment; keys are the kebab-case flags."""
    values = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"cannot read config file {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in flags_by_name:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key.replace("-", "_")] = _convert(flags_by_name[key], text.strip())
    return values


def _merge_options(command: str, ns: argparse.Namespace) -> argparse.Namespace:
    """Defaults, then config-file values, then explicit flags."""
    flags = _COMMANDS[command]
    merged = {f.name.replace("-", "_"): f.default for f in flags}
    if ns.config is not None:
        merged.update(_read_config(ns.config, {f.name: f for f in flags}))
    for key, value in vars(ns).items():
        if key != "command" and value is not None:
            merged[key] = value
    for f in flags:
        if f.required and merged[f.name.replace("-", "_")] is None:
            raise UsageError(f"{command}: --{f.name} is required")
    return argparse.Namespace(**merged)


def _load_tokens(path) -> frozenset:
    if path is None:
        return frozenset()
    try:
        return frozenset(load_token_file(path))
    except OSError as e:
        raise CorpusError(f"cannot read token file {path}: {e}") from e


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _graph_pipeline(a) -> dict:
    return {
        "tokenizer": a.tokenizer,
        "lexicon": sorted(_load_tokens(a.lexicon)),
        "stopwords": sorted(_load_tokens(a.stopwords)),
        "textrank": asdict(TextRankConfig(window=a.window, top_k=a.topk)),
        "edge_strategy": a.edge_strategy,
        "isolate_title": bool(a.isolate_title),
    }


def _build_graphs(articles, pipeline: dict, max_vertex_tokens: int):
    """Article -> (article, graph) pairs under one pipeline description."""
    lexicon = frozenset(pipeline["lexicon"])
    stopwords = frozenset(pipeline["stopwords"])
    trcfg = TextRankConfig(**pipeline["textrank"])
    strategy = pipeline["edge_strategy"]
    stats = corpus_stats(articles) if strategy == "tfidf" else None
    out = []
    for art in articles:
        kw = extract_keywords(art, lexicon, trcfg, stopwords)
        graph = build_graph(art, kw, strategy=strategy, stats=stats,
                            isolate_title=pipeline["isolate_title"],
                            max_vertex_tokens=max_vertex_tokens)
        out.append((art, graph))
    return out


def _safe_filename(article_id: str, used: set) -> str:
    base = re.sub(r"[^\w.-]", "_", article_id) or "article"
    name = base
    n = 1
    while name in used:
        n += 1
        name = f"{base}_{n}"
    used.add(name)
    return name


def _cmd_build_graph(a) -> int:
    tokenizer = TokenizerConfig(a.tokenizer)
    articles = load_corpus(a.input, tokenizer, lenient=bool(a.lenient), warn=_warn)
    pipeline = _graph_pipeline(a)
    os.makedirs(a.out, exist_ok=True)
    ext = "dot" if a.format == "dot" else "json"
    used: set = set()
    for art, graph in _build_graphs(articles, pipeline, _HP.max_vertex_tokens):
        name = _safe_filename(art.id, used)
        path = os.path.join(a.out, f"{name}.{ext}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(export_graph(graph, format=a.format))
            fh.write("\n")
    print(f"wrote {len(articles)} graph file(s) to {a.out}")
    return EXIT_OK


def _cmd_train(a) -> int:
    tokenizer = TokenizerConfig(a.tokenizer)
    articles = load_corpus(a.corpus, tokenizer, lenient=bool(a.lenient), warn=_warn)
    pipeline = _graph_pipeline(a)

    if a.resume is not None:
        ckpt = training.load_checkpoint(a.resume)
        model, adam_state = training.model_from_checkpoint(ckpt)
        pipeline = ckpt.pipeline or pipeline
        start_epoch, start_step = ckpt.epoch, ckpt.step
    else:
        vocab = build_vocab(articles, max_size=a.vocab_size)
        hp = Hyperparams(
            batch_size=a.batch, embed_dim=a.embed_dim, hidden_size=a.embed_dim,
            gcn_layers=a.gcn_layers, vocab_size=a.vocab_size,
            attention_heads=a.heads, self_attention_layers=a.sa_layers,
            decoder_layers=a.decoder_layers, dropout=a.dropout,
            learning_rate=a.lr, epochs=a.epochs, lr_decay=a.lr_decay,
        )
        model = CommentModel(vocab, hp, seed=a.seed)
        adam_state, start_epoch, start_step = None, 0, 0

    pairs = []
    for art, graph in _build_graphs(articles, pipeline, model.hp.max_vertex_tokens):
        for comment in art.comments:
            if comment:
                pairs.append((graph, list(comment)))
    if not pairs:
        raise CorpusError("corpus contains no (article, comment) training pairs")

    cfg = TrainConfig(batch_size=a.batch, lr=a.lr, epochs=a.epochs,
                      lr_decay=a.lr_decay, seed=a.seed,
                      grad_clip=None if a.no_grad_clip else a.grad_clip,
                      max_steps=a.max_steps)
    os.makedirs(a.out, exist_ok=True)
    log_path = os.path.join(a.out, "train_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def log_fn(record):
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")

        result = training.train(pairs, model, cfg, log_fn=log_fn, out_dir=a.out,
                                pipeline=pipeline, start_epoch=start_epoch,
                                adam_state=adam_state, start_step=start_step)
    final = os.path.join(a.out, "checkpoint.ckpt")
    training.save_checkpoint(final, model, result.adam_state, epoch=result.epoch,
                             step=result.step, seed=cfg.seed, pipeline=pipeline)
    if result.epoch_losses:
        print(f"trained on {len(pairs)} pair(s); "
              f"final epoch mean loss {result.epoch_losses[-1]:.6f}")
    else:
        print(f"trained on {len(pairs)} pair(s); no epochs run")
    print(f"checkpoint: {final}")
    return EXIT_OK


def _cmd_generate(a) -> int:
    ckpt = training.load_checkpoint(a.checkpoint)
    model, _ = training.model_from_checkpoint(ckpt)
    pipeline = ckpt.pipeline
    if not pipeline:
        pipeline = {"tokenizer": "whitespace", "lexicon": [], "stopwords": [],
                    "textrank": asdict(TextRankConfig()),
                    "edge_strategy": "structural", "isolate_title": False}
    tokenizer = TokenizerConfig(pipeline["tokenizer"])
    articles = load_corpus(a.corpus, tokenizer, lenient=bool(a.lenient), warn=_warn)
    with open(a.out, "w", encoding="utf-8") as fh:
        for art, graph in _build_graphs(articles, pipeline,
                                        model.hp.max_vertex_tokens):
            tokens, score = model.generate(graph, beam_size=a.beam,
                                           max_len=a.max_len)
            fh.write(json.dumps({"id": art.id, "comment": " ".join(tokens),
                                 "score": score}, ensure_ascii=False) + "\n")
    print(f"wrote {len(articles)} comment(s) to {a.out}")
    return EXIT_OK


def _cmd_stats(a) -> int:
    records = reporting.read_generated(a.input)
    stopwords = _load_tokens(a.stopwords)
    toks = reporting.tokenize_comments(records, TokenizerConfig(a.tokenizer))
    st = reporting.compute_stats(toks, stopwords)
    os.makedirs(a.out, exist_ok=True)
    tsv_path = os.path.join(a.out, "stats.tsv")
    png_path = os.path.join(a.out, "stats.png")
    reporting.write_stats_tsv(st, tsv_path)
    reporting.render_stats_figure(toks, png_path, stopwords)
    print(f"comments\t{st.comments}")
    print(f"unique_tokens\t{st.unique_tokens}")
    print(f"mean_length\t{st.mean_length:.6f}")
    print(f"distinct_ratio\t{st.distinct_ratio:.6f}")
    print(f"report: {tsv_path} {png_path}")
    return EXIT_OK


def _tiny_article(rng) -> tuple[Article, KeywordSet, list[str]]:
    """Random 3-sentence article with 2 keyword tokens for the gradient check."""
    words = [f"w{i}" for i in range(10)]
    sentences = []
    for _ in range(3):
        n = int(rng.integers(4, 7))
        sentences.append(tuple(rng.choice(words, size=n).tolist()))
    k1 = sentences[0][0]
    k2 = next((t for t in sentences[1] + sentences[2] if t != k1),
              words[0] if words[0] != k1 else words[1])
    title = (k1, *rng.choice(words, size=2).tolist())
    article = Article(id="grad-check", title_tokens=title,
                      sentences=tuple(sentences), comments=())
    kw = KeywordSet(keywords=tuple(sorted({k1, k2})),
                    scores={k1: float("inf"), k2: float("inf")})
    target = rng.choice(words, size=4).tolist() + [k2]
    return article, kw, target


def _cmd_grad_check(a) -> int:
    rng = np.random.default_rng(a.seed)
    article, kw, target = _tiny_article(rng)
    graph = build_graph(article, kw)
    vocab = build_vocab([article], max_size=64)
    hp = Hyperparams(embed_dim=a.embed_dim, hidden_size=a.embed_dim,
                     attention_heads=a.heads, self_attention_layers=a.sa_layers,
                     decoder_layers=a.decoder_layers, gcn_layers=a.gcn_layers,
                     dropout=0.0, vocab_size=64)
    model = CommentModel(vocab, hp, seed=a.seed)

    grad_transform = None
    if a.corrupt_backward:
        def grad_transform(grads):
            return [g * 1.01 + 1e-3 for g in grads]

    err = ad.grad_check(lambda: model.loss(graph, target, train=False),
                        model.params.values(), eps=a.eps, max_samples=a.samples,
                        seed=a.seed, grad_transform=grad_transform)
    ok = err < 1e-4
    print(f"max relative error: {err:.6e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


_HANDLERS = {
    "build-graph": _cmd_build_graph,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "stats": _cmd_stats,
    "grad-check": _cmd_grad_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args = _merge_options(ns.command, ns)
        return _HANDLERS[ns.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        # config dataclasses validate flag values (batch size, beam, rates)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
