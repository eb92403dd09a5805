"""Seed keyword dictionaries and multilingual text matching.

A dictionary is a curated per-language, per-event term list. Matching runs in
one of two modes: ``token`` for space-delimited scripts, ``substring`` for
scriptio continua (Thai and friends), where whole-word boundaries do not
exist. Mode is detected from the script of the terms and can be overridden
per dictionary file.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import yaml

logger = logging.getLogger(__name__)

TOKEN = "token"
SUBSTRING = "substring"

# Scripts written without inter-word spaces. Substring matching is the only
# safe default for these; everything else defaults to token matching.
_SPACELESS_RANGES = (
    (0x0E00, 0x0E7F),   # Thai
    (0x0E80, 0x0EFF),   # Lao
    (0x1000, 0x109F),   # Myanmar
    (0x1780, 0x17FF),   # Khmer
    (0x3040, 0x30FF),   # Japanese kana
    (0x3400, 0x4DBF),   # CJK extension A
    (0x4E00, 0x9FFF),   # CJK unified
)


class LexiconError(Exception):
    """Raised for unusable dictionary files."""


def normalize(text: str) -> str:
    """NFC-normalize and case-fold text. All matching happens on this form."""
    return unicodedata.normalize("NFC", text).casefold()


def _is_word_char(ch: str) -> bool:
    # Separators, punctuation, symbols and controls break tokens; letters,
    # digits and combining marks (needed for Thai/Devanagari) do not.
    return unicodedata.category(ch)[0] not in "ZPSC"


def tokenize(text: str) -> list[str]:
    """Split normalized text on whitespace/punctuation into tokens."""
    return [tok for tok, _, _ in tokenize_spans(text)]


def tokenize_spans(text: str) -> list[tuple[str, int, int]]:
    """Tokenize, keeping (token, start, end) character offsets into `text`."""
    spans = []
    start = None
    for i, ch in enumerate(text):
        if _is_word_char(ch):
            if start is None:
                start = i
        elif start is not None:
            spans.append((text[start:i], start, i))
            start = None
    if start is not None:
        spans.append((text[start:], start, len(text)))
    return spans


def _is_spaceless(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _SPACELESS_RANGES)


def prefers_substring_match(text: str) -> bool:
    """True when the majority of letters belong to scripts without spaces."""
    letters = [ch for ch in text if ch.isalpha()]
    if not letters:
        return False
    spaceless = sum(1 for ch in letters if _is_spaceless(ch))
    return spaceless * 2 > len(letters)


@dataclass(frozen=True)
class Dictionary:
    """Curated keyword list for one (language, event type) pair."""

    lang: str
    event_type: str
    terms: tuple[str, ...]
    match_mode: str

    def __post_init__(self):
        if not self.terms:
            raise LexiconError("dictionary has no terms")
        if self.match_mode not in (TOKEN, SUBSTRING):
            raise LexiconError(f"unknown match_mode {self.match_mode!r}")


@dataclass(frozen=True)
class Query:
    """Logical OR over normalized terms, evaluated under one match mode."""

    terms: tuple[str, ...]
    mode: str

    def extended(self, extra_terms: Iterable[str]) -> "Query":
        """Union with additional (already meaningful) terms, order-preserving."""
        merged = list(self.terms)
        for term in extra_terms:
            t = normalize(term)
            if t and t not in merged:
                merged.append(t)
        return Query(terms=tuple(merged), mode=self.mode)


def _normalize_terms(raw_terms: Sequence[str]) -> list[str]:
    terms = []
    for raw in raw_terms:
        term = normalize(str(raw).strip())
        if not term:
            logger.warning("dropping term that is empty after normalization: %r", raw)
            continue
        if term in terms:
            logger.warning("duplicate term after normalization: %r", raw)
            continue
        terms.append(term)
    return terms


def make_dictionary(lang: str, event_type: str, terms: Sequence[str],
                    match_mode: str | None = None) -> Dictionary:
    """Build a dictionary from raw terms, defaulting the mode by script."""
    normalized = _normalize_terms(terms)
    if not normalized:
        raise LexiconError("dictionary term list is empty")
    if match_mode is None:
        match_mode = SUBSTRING if prefers_substring_match(" ".join(normalized)) else TOKEN
    return Dictionary(lang=lang, event_type=event_type,
                      terms=tuple(normalized), match_mode=match_mode)


def load_dictionary(path: str | Path) -> Dictionary:
    """Load a dictionary file (YAML with keys lang, event_type, terms, match_mode)."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise LexiconError(f"cannot read dictionary {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise LexiconError(f"malformed dictionary {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise LexiconError(f"dictionary {path} is not a mapping")
    for key in ("lang", "event_type", "terms"):
        if key not in data:
            raise LexiconError(f"dictionary {path} is missing key {key!r}")
    if not isinstance(data["terms"], list):
        raise LexiconError(f"dictionary {path}: terms must be a list")
    return make_dictionary(str(data["lang"]), str(data["event_type"]),
                           data["terms"], data.get("match_mode"))


def build_query(dictionary: Dictionary, extra_terms: Iterable[str] = ()) -> Query:
    """Query matching any dictionary term (plus optional expansion terms)."""
    query = Query(terms=dictionary.terms, mode=dictionary.match_mode)
    return query.extended(extra_terms) if extra_terms else query


def _token_seq_count(tokens: list[str], needle: tuple[str, ...]) -> int:
    n = len(needle)
    if n == 0 or n > len(tokens):
        return 0
    return sum(1 for i in range(len(tokens) - n + 1) if tuple(tokens[i:i + n]) == needle)


def count_term(term: str, text: str, mode: str, tokens: list[str] | None = None) -> int:
    """Occurrences of a normalized term in normalized text under a mode.

    Token mode counts contiguous token-sequence matches (multi-word terms
    allowed); substring mode counts non-overlapping codepoint occurrences.
    """
    if mode == SUBSTRING:
        return text.count(term)
    if tokens is None:
        tokens = tokenize(text)
    return _token_seq_count(tokens, tuple(tokenize(term)))


def match_text(query: Query, text: str) -> bool:
    """True iff any query term occurs in the text under the query's mode."""
    norm = normalize(text)
    if query.mode == SUBSTRING:
        return any(term in norm for term in query.terms)
    tokens = tokenize(norm)
    return any(count_term(term, norm, TOKEN, tokens) > 0 for term in query.terms)


def match_post(query: Query, post) -> bool:
    """True iff the post text matches the query (see `match_text`)."""
    return match_text(query, post.text)
