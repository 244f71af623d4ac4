"""Keyword extraction: entity lexicon hits plus TextRank over co-occurrences."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import Article


@dataclass(frozen=True)
class TextRankConfig:
    window: int = 5
    damping: float = 0.85
    max_iters: int = 100
    tol: float = 1e-6
    top_k: int = 10

    def __post_init__(self):
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if not 0.0 < self.damping < 1.0:
            raise ValueError(f"damping must be in (0,1), got {self.damping}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")


@dataclass(frozen=True)
class KeywordSet:
    """Keywords ordered by descending score (ties lexicographic)."""

    keywords: tuple[str, ...]
    scores: dict[str, float]


def cooccurrence_graph(sentences, window: int, stopwords=frozenset()):
    """Undirected simple graph linking candidate tokens within `window` positions.

    Candidacy excludes stop words; window distance is measured on the original
    token positions of each sentence.
    """
    neighbors: dict[str, set[str]] = {}
    for sent in sentences:
        for i, tok in enumerate(sent):
            if tok in stopwords:
                continue
            neighbors.setdefault(tok, set())
            for j in range(i + 1, min(i + window, len(sent))):
                other = sent[j]
                if other in stopwords or other == tok:
                    continue
                neighbors.setdefault(other, set())
                neighbors[tok].add(other)
                neighbors[other].add(tok)
    return neighbors


def textrank(sentences, cfg: TextRankConfig = TextRankConfig(),
             stopwords=frozenset()) -> dict[str, float]:
    """Iterate S(v) = (1-d) + d * sum_{u~v} S(u)/deg(u) to a fixed point.

    Returns the final score of every candidate token; empty input gives an
    empty map. Isolated candidates settle at 1-d.
    """
    graph = cooccurrence_graph(sentences, cfg.window, stopwords)
    if not graph:
        return {}
    scores = {tok: 1.0 for tok in graph}
    d = cfg.damping
    for _ in range(cfg.max_iters):
        new_scores = {}
        for tok, nbrs in graph.items():
            rank = sum(scores[u] / len(graph[u]) for u in nbrs)
            new_scores[tok] = (1.0 - d) + d * rank
        delta = max(abs(new_scores[t] - scores[t]) for t in graph)
        scores = new_scores
        if delta < cfg.tol:
            break
    return scores


def extract_keywords(article: Article, lexicon=frozenset(),
                     cfg: TextRankConfig = TextRankConfig(),
                     stopwords=frozenset()) -> KeywordSet:
    """Keywords = verbatim lexicon hits in title/content, then top TextRank tokens.

    Lexicon hits rank first (infinite score); the result holds at most
    cfg.top_k TextRank keywords on top of the lexicon hits. Comments never
    influence the result.
    """
    article_tokens = set(article.title_tokens)
    for sent in article.sentences:
        article_tokens.update(sent)

    scores: dict[str, float] = {}
    for tok in article_tokens & set(lexicon):
        scores[tok] = math.inf

    ranked = textrank([article.title_tokens, *article.sentences], cfg, stopwords)
    candidates = sorted(ranked.items(), key=lambda kv: (-kv[1], kv[0]))
    taken = 0
    for tok, score in candidates:
        if taken >= cfg.top_k:
            break
        if tok in scores:
            continue
        scores[tok] = score
        taken += 1

    ordered = tuple(sorted(scores, key=lambda t: (-scores[t], t)))
    return KeywordSet(keywords=ordered, scores=scores)


def load_token_file(path) -> set[str]:
    """One token per line, UTF-8; blank lines ignored. For lexicon/stop words."""
    with open(path, encoding="utf-8") as fh:
        return {line.strip() for line in fh if line.strip()}
