"""Corpus ingestion: record parsing, sentence splitting, tokenization, vocabulary."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field

# Sentence terminators cover the Chinese/Latin punctuation seen in the corpus.
SENTENCE_TERMINATORS = "。！？!?."

_SENT_RE = re.compile(
    "[^{t}]*[{t}]+|[^{t}]+".format(t=re.escape(SENTENCE_TERMINATORS))
)

PAD, UNK, BOS, EOS = 0, 1, 2, 3
PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN = "<pad>", "<unk>", "<bos>", "<eos>"
_SPECIALS = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN]


class CorpusError(ValueError):
    """Malformed or unreadable corpus data."""


@dataclass(frozen=True)
class TokenizerConfig:
    # "whitespace": corpus is pre-segmented, split on whitespace.
    # "char": split CJK runs into single characters, keep Latin/digit runs whole.
    mode: str = "whitespace"

    def __post_init__(self):
        if self.mode not in ("whitespace", "char"):
            raise ValueError(f"unknown tokenizer mode: {self.mode!r}")


@dataclass(frozen=True)
class RawRecord:
    id: str
    title: str
    content: str
    comments: tuple[str, ...] = ()


@dataclass(frozen=True)
class Article:
    id: str
    title_tokens: tuple[str, ...]
    sentences: tuple[tuple[str, ...], ...]
    comments: tuple[tuple[str, ...], ...] = ()


def split_sentences(text: str) -> list[str]:
    """Split on terminal punctuation, keeping terminators with their sentence.

    The concatenation of the returned pieces equals the input; nothing is
    dropped here (token-empty sentences are dropped later, at Article build).
    """
    if not text:
        return []
    return _SENT_RE.findall(text)


def _is_latin_or_digit(ch: str) -> bool:
    return ch.isascii() and ch.isalnum()


def tokenize(text: str, tokenizer: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Tokenize a string deterministically.

    whitespace mode assumes pre-segmented text. char mode is the fallback for
    unsegmented CJK: contiguous ASCII letter/digit runs stay whole, every other
    non-space character becomes its own token.
    """
    if tokenizer.mode == "whitespace":
        return text.split()
    tokens: list[str] = []
    run = ""
    for ch in text:
        if _is_latin_or_digit(ch):
            run += ch
            continue
        if run:
            tokens.append(run)
            run = ""
        if not ch.isspace():
            tokens.append(ch)
    if run:
        tokens.append(run)
    return tokens


def _parse_record(obj, lineno: int) -> RawRecord:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: record is not an object")
    for key in ("id", "title", "content"):
        if key not in obj:
            raise CorpusError(f"line {lineno}: missing field {key!r}")
        if not isinstance(obj[key], str):
            raise CorpusError(f"line {lineno}: field {key!r} is not a string")
    if obj["id"] == "":
        raise CorpusError(f"line {lineno}: empty id")
    comments = obj.get("comments", [])
    if not isinstance(comments, list) or any(not isinstance(c, str) for c in comments):
        raise CorpusError(f"line {lineno}: field 'comments' is not a list of strings")
    return RawRecord(obj["id"], obj["title"], obj["content"], tuple(comments))


def article_from_record(record: RawRecord, tokenizer: TokenizerConfig = TokenizerConfig()) -> Article:
    sentences = []
    for sent in split_sentences(record.content):
        toks = tokenize(sent, tokenizer)
        if toks:
            sentences.append(tuple(toks))
    return Article(
        id=record.id,
        title_tokens=tuple(tokenize(record.title, tokenizer)),
        sentences=tuple(sentences),
        comments=tuple(tuple(tokenize(c, tokenizer)) for c in record.comments),
    )


def load_corpus(path, tokenizer: TokenizerConfig = TokenizerConfig(),
                lenient: bool = False, warn=None) -> list[Article]:
    """Read a JSON-lines corpus file into Articles.

    Each line is an object with string fields id/title/content and an array
    field comments. Malformed lines raise CorpusError naming the line, or are
    skipped (reported through `warn`) when lenient is set.
    """
    articles = []
    seen_ids = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"cannot read corpus file {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise CorpusError(f"line {lineno}: invalid record ({e.msg})") from e
                record = _parse_record(obj, lineno)
                if record.id in seen_ids:
                    raise CorpusError(f"line {lineno}: duplicate id {record.id!r}")
            except CorpusError as e:
                if not lenient:
                    raise
                if warn is not None:
                    warn(str(e))
                continue
            seen_ids.add(record.id)
            articles.append(article_from_record(record, tokenizer))
    return articles


@dataclass
class Vocab:
    """Shared token table with reserved PAD/UNK/BOS/EOS ids."""

    token_to_id: dict[str, int]
    id_to_token: list[str]
    max_size: int

    PAD: int = field(default=PAD, init=False)
    UNK: int = field(default=UNK, init=False)
    BOS: int = field(default=BOS, init=False)
    EOS: int = field(default=EOS, init=False)

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def decode(self, idx: int) -> str:
        return self.id_to_token[idx]

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @classmethod
    def from_tokens(cls, ordered_tokens, max_size: int) -> "Vocab":
        id_to_token = list(_SPECIALS) + list(ordered_tokens)[: max_size - len(_SPECIALS)]
        return cls({t: i for i, t in enumerate(id_to_token)}, id_to_token, max_size)


def build_vocab(articles, max_size: int = 60000) -> Vocab:
    """Frequency-ranked vocabulary over titles, content and comments.

    One shared table serves encoder, decoder and keywords. Ties in frequency
    break lexicographically for reproducibility.
    """
    if max_size < len(_SPECIALS):
        raise ValueError(f"max_size must be >= {len(_SPECIALS)}, got {max_size}")
    counts: Counter[str] = Counter()
    for art in articles:
        counts.update(art.title_tokens)
        for sent in art.sentences:
            counts.update(sent)
        for comment in art.comments:
            counts.update(comment)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab.from_tokens((t for t, _ in ranked), max_size)
