"""Topic interaction graph: sentence-to-keyword clustering, edges, adjacency."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import Article
from .keywords import KeywordSet

KIND_KEYWORD = "keyword"
KIND_TITLE = "title"
KIND_EMPTY = "empty"

# Sentence id used for the title sentence; content sentences are 0..n-1.
TITLE_SENTENCE_ID = -1

DEFAULT_MAX_VERTEX_TOKENS = 100


@dataclass(frozen=True)
class Vertex:
    kind: str
    keyword: str | None
    tokens: tuple[str, ...]
    sentence_ids: tuple[int, ...]

    @property
    def label(self) -> str:
        return self.keyword if self.kind == KIND_KEYWORD else self.kind.capitalize()


@dataclass(frozen=True)
class TopicGraph:
    """Vertices ordered Title first, keywords in keyword order, Empty last."""

    vertices: tuple[Vertex, ...]
    edges: dict[tuple[int, int], float] = field(default_factory=dict)
    title_index: int = 0

    def weight(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return self.edges.get((min(i, j), max(i, j)), 0.0)

    def keyword_vertex_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.vertices) if v.kind == KIND_KEYWORD]


@dataclass(frozen=True)
class CorpusStats:
    """Document frequencies for tf-idf edge weights (one document per article)."""

    doc_freq: dict[str, int]
    n_docs: int


def corpus_stats(articles) -> CorpusStats:
    df: Counter[str] = Counter()
    for art in articles:
        tokens = set(art.title_tokens)
        for sent in art.sentences:
            tokens.update(sent)
        df.update(tokens)
    return CorpusStats(dict(df), len(articles))


def _truncate(tokens, max_tokens: int):
    return tuple(tokens[:max_tokens])


def build_graph(article: Article, kw: KeywordSet, strategy: str = "structural",
                stats: CorpusStats | None = None, isolate_title: bool = False,
                max_vertex_tokens: int = DEFAULT_MAX_VERTEX_TOKENS) -> TopicGraph:
    """Cluster sentences by keyword into vertices and weight the edges.

    A sentence joins vertex v_k for every keyword k it contains (exact token
    match); sentences matching nothing go to the Empty vertex, which only
    exists if some sentence needs it. The title sentence lives in the Title
    vertex and, unless isolate_title is set, also participates in keyword
    matching so Title-keyword edges can arise. Structural edge weight is the
    number of shared sentences; the tfidf strategy uses cosine similarity of
    the vertices' tf-idf vectors instead.
    """
    if strategy not in ("structural", "tfidf"):
        raise ValueError(f"unknown edge strategy: {strategy!r}")
    if strategy == "tfidf" and stats is None:
        raise ValueError("tfidf strategy requires corpus stats")

    sentences = {TITLE_SENTENCE_ID: tuple(article.title_tokens)}
    sentences.update({i: sent for i, sent in enumerate(article.sentences)})

    assigned: dict[str, list[int]] = {k: [] for k in kw.keywords}
    orphans: list[int] = []
    for sid in sorted(sentences):
        if sid == TITLE_SENTENCE_ID and isolate_title:
            continue
        tokens = set(sentences[sid])
        hits = [k for k in kw.keywords if k in tokens]
        for k in hits:
            assigned[k].append(sid)
        if not hits and sid != TITLE_SENTENCE_ID:
            orphans.append(sid)

    vertices = [Vertex(KIND_TITLE, None, _truncate(article.title_tokens, max_vertex_tokens),
                       (TITLE_SENTENCE_ID,))]
    for k in kw.keywords:
        tokens = [k]
        for sid in assigned[k]:
            tokens.extend(sentences[sid])
        vertices.append(Vertex(KIND_KEYWORD, k, _truncate(tokens, max_vertex_tokens),
                               tuple(assigned[k])))
    if orphans:
        tokens = []
        for sid in orphans:
            tokens.extend(sentences[sid])
        vertices.append(Vertex(KIND_EMPTY, None, _truncate(tokens, max_vertex_tokens),
                               tuple(orphans)))

    edges: dict[tuple[int, int], float] = {}
    for i in range(len(vertices)):
        for j in range(i + 1, len(vertices)):
            if strategy == "structural":
                w = float(len(set(vertices[i].sentence_ids) & set(vertices[j].sentence_ids)))
            else:
                w = edge_weight_tfidf(vertices[i], vertices[j], stats)
            if w > 0.0:
                edges[(i, j)] = w
    return TopicGraph(tuple(vertices), edges, title_index=0)


def _tfidf_vector(tokens, stats: CorpusStats) -> dict[str, float]:
    counts = Counter(tokens)
    vec = {}
    for tok, tf in counts.items():
        # Smoothed idf keeps every weight positive, so cosine lands in [0,1].
        idf = math.log((1.0 + stats.n_docs) / (1.0 + stats.doc_freq.get(tok, 0))) + 1.0
        vec[tok] = tf * idf
    return vec


def edge_weight_tfidf(v_i: Vertex, v_j: Vertex, stats: CorpusStats) -> float:
    """Cosine similarity of the two vertices' tf-idf vectors."""
    a = _tfidf_vector(v_i.tokens, stats)
    b = _tfidf_vector(v_j.tokens, stats)
    dot = sum(w * b[t] for t, w in a.items() if t in b)
    if dot == 0.0:
        return 0.0
    na = math.sqrt(sum(w * w for w in a.values()))
    nb = math.sqrt(sum(w * w for w in b.values()))
    return dot / (na * nb)


def adjacency_matrix(g: TopicGraph) -> np.ndarray:
    n = len(g.vertices)
    a = np.zeros((n, n))
    for (i, j), w in g.edges.items():
        a[i, j] = w
        a[j, i] = w
    return a


def normalized_adjacency(g: TopicGraph) -> np.ndarray:
    """D^{-1/2} (A + I) D^{-1/2} with degrees taken after adding self-loops."""
    a_tilde = adjacency_matrix(g) + np.eye(len(g.vertices))
    d_inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def _weight_label(w: float) -> str:
    return str(int(w)) if w == int(w) else f"{w:.6g}"


def export_graph(g: TopicGraph, format: str = "dot") -> str:
    if format == "dot":
        lines = ["graph topics {"]
        for i, v in enumerate(g.vertices):
            lines.append(f'  v{i} [label="{v.label}"];')
        for (i, j), w in sorted(g.edges.items()):
            lines.append(f'  v{i} -- v{j} [label="{_weight_label(w)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    if format == "structured":
        payload = {
            "vertices": [
                {"kind": v.kind, "keyword": v.keyword, "tokens": list(v.tokens),
                 "sentence_ids": list(v.sentence_ids)}
                for v in g.vertices
            ],
            "edges": [[i, j, w] for (i, j), w in sorted(g.edges.items())],
            "title_index": g.title_index,
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)
    raise ValueError(f"unknown export format: {format!r}")


def parse_graph(text: str) -> TopicGraph:
    """Inverse of export_graph(format='structured')."""
    payload = json.loads(text)
    vertices = tuple(
        Vertex(v["kind"], v["keyword"], tuple(v["tokens"]), tuple(v["sentence_ids"]))
        for v in payload["vertices"]
    )
    edges = {(int(i), int(j)): float(w) for i, j, w in payload["edges"]}
    return TopicGraph(vertices, edges, title_index=int(payload["title_index"]))
