"""Shared factories for randomized tests; everything is seed-driven."""

import numpy as np
import pytest

from graph2comment.corpus import Article, Vocab, build_vocab
from graph2comment.keywords import KeywordSet
from graph2comment.model import CommentModel, Hyperparams
from graph2comment.topic_graph import build_graph

WORDS = [f"w{i}" for i in range(12)]


def rand_article(rng, words=WORDS, max_sentences=8, art_id="a0",
                 with_comments=False):
    n_sent = int(rng.integers(1, max_sentences + 1))
    sentences = tuple(
        tuple(rng.choice(words, size=int(rng.integers(2, 7))).tolist())
        for _ in range(n_sent))
    title = tuple(rng.choice(words, size=int(rng.integers(1, 4))).tolist())
    comments = ()
    if with_comments:
        comments = tuple(
            tuple(rng.choice(words, size=int(rng.integers(1, 5))).tolist())
            for _ in range(int(rng.integers(1, 3))))
    return Article(id=art_id, title_tokens=title, sentences=sentences,
                   comments=comments)


def rand_keywordset(rng, article, max_k=4):
    """Keywords drawn from tokens that actually occur in the article."""
    present = sorted({t for s in article.sentences for t in s}
                     | set(article.title_tokens))
    k = int(rng.integers(0, min(max_k, len(present)) + 1))
    chosen = sorted(rng.choice(present, size=k, replace=False).tolist()) if k else []
    scores = {tok: float(len(chosen) - i) for i, tok in enumerate(chosen)}
    return KeywordSet(keywords=tuple(chosen), scores=scores)


def rand_graph(rng, words=WORDS, max_sentences=8, max_k=4, **kwargs):
    article = rand_article(rng, words=words, max_sentences=max_sentences)
    kw = rand_keywordset(rng, article, max_k=max_k)
    return build_graph(article, kw, **kwargs), article, kw


def small_hyperparams(embed_dim=16, heads=2, sa_layers=1, decoder_layers=2,
                      gcn_layers=1, dropout=0.0, vocab_size=64, **kwargs):
    return Hyperparams(embed_dim=embed_dim, hidden_size=embed_dim,
                       attention_heads=heads, self_attention_layers=sa_layers,
                       decoder_layers=decoder_layers, gcn_layers=gcn_layers,
                       dropout=dropout, vocab_size=vocab_size, **kwargs)


def small_model(articles, seed=0, **hp_kwargs) -> CommentModel:
    hp = small_hyperparams(**hp_kwargs)
    vocab = build_vocab(articles, max_size=hp.vocab_size)
    return CommentModel(vocab, hp, seed=seed)


def vocab_of(words, max_size=64) -> Vocab:
    return Vocab.from_tokens(sorted(words), max_size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
