"""Coverage expansion: learn new keywords from kept evidence, then score
text-only posts against the widened term set.

The posts that survived image filtering are a labelled "relevant" sample;
their frequent terms extend the seed dictionary, and a cumulative TF-IDF
score ranks image-less posts so the top slice can be fed to geolocation.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Post
from .lexicon import (SUBSTRING, TOKEN, Query, count_term, normalize,
                      prefers_substring_match, tokenize)

logger = logging.getLogger(__name__)

SCORER_CUMULATIVE = "cumulative"
SCORER_COSINE = "cosine"

_URL_OR_HANDLE = re.compile(r"https?://\S+|www\.\S+|@\w+")


class ExpandError(Exception):
    """Raised for unusable expansion inputs."""


@dataclass(frozen=True)
class TermStats:
    term: str
    tf_relevant: int        # occurrences in the kept (image-bearing) set
    df_corpus: int          # documents containing the term in the text-only set

    def __post_init__(self):
        if self.tf_relevant < 0 or self.df_corpus < 0:
            raise ValueError("term counts must be >= 0")


@dataclass(frozen=True)
class ScoredPost:
    post_id: str
    score: float
    promising: bool = False

    def __post_init__(self):
        if self.score < 0:
            raise ValueError("score must be >= 0")


def load_stopwords(path: str | Path) -> frozenset[str]:
    """One stopword per line; blank lines and '#' comments ignored."""
    words = set()
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line and not line.startswith("#"):
                words.add(normalize(line))
    return frozenset(words)


def _seed_token_blocklist(seed_terms: Iterable[str]) -> frozenset[str]:
    """Seed terms plus each token inside multi-word seed terms, so keyword
    extraction cannot hand back a fragment of what it was seeded with."""
    blocked = set()
    for term in seed_terms:
        blocked.add(normalize(term))
        blocked.update(tokenize(normalize(term)))
    return frozenset(blocked)


def strip_noise(text: str) -> str:
    """Remove URLs and @handles before tokenization; hashtag markers fall
    away in tokenization, keeping the tag word itself."""
    return _URL_OR_HANDLE.sub(" ", text)


def extract_keywords(relevant_texts: Sequence[str], seed: Query,
                     k: int, stopwords: frozenset[str] = frozenset()
                     ) -> list[str]:
    """Top-k most frequent novel terms in the relevant texts.

    Drops stopwords, seed terms, and terms shorter than two codepoints;
    ties break lexicographically so the result is stable.
    """
    if k < 0:
        raise ExpandError("k must be >= 0")
    if k == 0:
        return []
    blocked = _seed_token_blocklist(seed.terms) | stopwords
    counts: Counter[str] = Counter()
    for text in relevant_texts:
        for token in tokenize(normalize(strip_noise(text))):
            if len(token) >= 2 and token not in blocked:
                counts[token] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [term for term, _ in ranked[:k]]


def build_term_stats(terms: Sequence[str], relevant_texts: Sequence[str],
                     corpus: Sequence[Post]) -> list[TermStats]:
    """Frequency bookkeeping for the keyword report."""
    stats = []
    prepared = [_prepare(p.text) for p in corpus]
    for term in terms:
        needle = normalize(term)
        tf = sum(tokenize(normalize(strip_noise(t))).count(needle)
                 for t in relevant_texts)
        df = sum(1 for text, mode, tokens in prepared
                 if count_term(needle, text, mode, tokens=tokens) > 0)
        stats.append(TermStats(term=needle, tf_relevant=tf, df_corpus=df))
    return stats


def _prepare(raw: str) -> tuple[str, str, list[str]]:
    text = normalize(raw)
    mode = SUBSTRING if prefers_substring_match(text) else TOKEN
    return text, mode, tokenize(text)


def document_frequencies(corpus: Sequence[Post], terms: Sequence[str]
                         ) -> dict[str, int]:
    """df(term) = number of posts containing the term, each post matched in
    its own script's mode."""
    prepared = [_prepare(p.text) for p in corpus]
    return {
        term: sum(1 for text, mode, tokens in prepared
                  if count_term(term, text, mode, tokens=tokens) > 0)
        for term in terms
    }


def idf(n_docs: int, df: int) -> float:
    """Smoothed inverse document frequency, positive for any df <= n_docs."""
    return math.log(n_docs / (1 + df)) + 1.0


def score_posts(corpus: Sequence[Post], query_terms: Sequence[str],
                scorer: str = SCORER_CUMULATIVE) -> list[ScoredPost]:
    """Score each post against the term set.

    The default cumulative scorer is sum over terms of tf * idf with raw
    occurrence counts; the cosine alternative normalizes the post's term
    vector against the query's idf vector.
    """
    if not corpus:
        raise ExpandError("cannot score an empty corpus")
    if scorer not in (SCORER_CUMULATIVE, SCORER_COSINE):
        raise ExpandError(f"unknown scorer {scorer!r}")
    terms = list(dict.fromkeys(normalize(t) for t in query_terms))
    n_docs = len(corpus)
    dfs = document_frequencies(corpus, terms)
    weights = {t: idf(n_docs, dfs[t]) for t in terms}

    scored = []
    for post in corpus:
        text, mode, tokens = _prepare(post.text)
        tfs = {t: count_term(t, text, mode, tokens=tokens) for t in terms}
        if scorer == SCORER_CUMULATIVE:
            score = sum(tfs[t] * weights[t] for t in terms)
        else:
            doc = [tfs[t] * weights[t] for t in terms]
            query = [weights[t] for t in terms]
            dot = sum(d * q for d, q in zip(doc, query))
            norm = math.hypot(*doc) * math.hypot(*query)
            score = dot / norm if norm else 0.0
        scored.append(ScoredPost(post_id=post.id, score=score))
    return scored


def select_promising(scored: Sequence[ScoredPost], p: float) -> list[ScoredPost]:
    """Posts at or above the nearest-rank p-quantile of scores.

    The cutoff is the score at index floor(p * N) of the ascending sort,
    so at least ceil((1 - p) * N) posts qualify and ties at the cutoff can
    only enlarge the slice. Output is sorted by descending score, ties by
    post id.
    """
    if not 0 < p < 1:
        raise ExpandError("p must be in (0, 1)")
    if not scored:
        return []
    ordered = sorted(s.score for s in scored)
    # Epsilon absorbs float error when p * N sits a hair below an integer.
    index = min(int(p * len(ordered) + 1e-9), len(ordered) - 1)
    cutoff = ordered[index]
    promising = [replace(s, promising=True) for s in scored if s.score >= cutoff]
    promising.sort(key=lambda s: (-s.score, s.post_id))
    return promising


def scored_to_csv(scored: Sequence[ScoredPost], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["post_id", "score", "promising"])
        for s in scored:
            writer.writerow([s.post_id, f"{s.score:.9f}", str(s.promising).lower()])


def keyword_report(stats: Sequence[TermStats]) -> str:
    """Plain-text listing of learned terms with their frequencies."""
    lines = ["new keywords (term, occurrences in kept set, documents in text-only set)"]
    lines.extend(f"  {s.term}  tf={s.tf_relevant}  df={s.df_corpus}" for s in stats)
    return "\n".join(lines) + "\n"
