"""Summary statistics and plots for generated-comment files."""

from __future__ import annotations

import collections
import json
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .corpus import CorpusError, TokenizerConfig, tokenize  # noqa: E402


@dataclass(frozen=True)
class GenerationStats:
    comments: int
    unique_tokens: int
    mean_length: float
    distinct_ratio: float


def read_generated(path) -> list[dict]:
    """Parse a generation output file: one {id, comment, score} object per line."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if "comment" not in obj:
                raise CorpusError(f"{path}:{lineno}: missing 'comment' field")
            records.append(obj)
    return records


def compute_stats(comment_tokens, stopwords=frozenset()) -> GenerationStats:
    """Unique non-stop-word token count, mean length, distinct-comment ratio."""
    comment_tokens = [list(toks) for toks in comment_tokens]
    n = len(comment_tokens)
    if n == 0:
        return GenerationStats(0, 0, 0.0, 0.0)
    unique = {t for toks in comment_tokens for t in toks if t not in stopwords}
    total_len = sum(len(toks) for toks in comment_tokens)
    distinct = len({tuple(toks) for toks in comment_tokens})
    return GenerationStats(comments=n, unique_tokens=len(unique),
                           mean_length=total_len / n, distinct_ratio=distinct / n)


def write_stats_tsv(stats: GenerationStats, path) -> None:
    rows = [("comments", stats.comments),
            ("unique_tokens", stats.unique_tokens),
            ("mean_length", f"{stats.mean_length:.6f}"),
            ("distinct_ratio", f"{stats.distinct_ratio:.6f}")]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\n")
        for key, value in rows:
            fh.write(f"{key}\t{value}\n")


def render_stats_figure(comment_tokens, path, stopwords=frozenset(),
                        top_k: int = 20) -> None:
    """Two panels: comment-length histogram and the most frequent tokens."""
    comment_tokens = [list(toks) for toks in comment_tokens]
    lengths = [len(toks) for toks in comment_tokens]
    counts = collections.Counter(
        t for toks in comment_tokens for t in toks if t not in stopwords)
    top = counts.most_common(top_k)

    fig, (ax_len, ax_tok) = plt.subplots(1, 2, figsize=(11, 4))
    if lengths:
        ax_len.hist(lengths, bins=range(0, max(lengths) + 2), color="#4878b0",
                    edgecolor="white")
    ax_len.set_xlabel("comment length (tokens)")
    ax_len.set_ylabel("comments")
    ax_len.set_title("Length distribution")
    if top:
        labels, values = zip(*top)
        ax_tok.barh(range(len(top))[::-1], values, color="#b04848")
        ax_tok.set_yticks(range(len(top))[::-1])
        ax_tok.set_yticklabels(labels)
    ax_tok.set_xlabel("frequency")
    ax_tok.set_title(f"Top {top_k} tokens")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def tokenize_comments(records, tokenizer: TokenizerConfig):
    return [tokenize(rec["comment"], tokenizer) for rec in records]
