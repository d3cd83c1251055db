"""Surface statistics: tokens, counts, readability formulas, edit similarities,
lexical complexity and dependency depth.

Counting rules are fixed so ARI values are reproducible bit-for-bit:

* a word is a maximal run of letters/digits, apostrophes allowed word-internally;
* ``n_chars`` counts only characters inside words;
* a sentence ends at ``.``, ``!`` or ``?`` followed by whitespace or end of text,
  and non-empty text without a terminator is one sentence.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .corpus import MAX_GRADE, MIN_GRADE, Lexicon, ParsedSentence

WORD_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")
_TERMINATOR_RE = re.compile(r"[.!?]+(?=\s|$)")
_ALPHA_RE = re.compile(r"[^\W\d_]+(?:['’][^\W\d_]+)*")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")


class UndefinedInputError(ValueError):
    """A formula was applied to text with no words or no sentences."""


@dataclass(frozen=True)
class TextStats:
    n_words: int
    n_chars: int
    n_sentences: int
    max_dep_depth: int | None = None
    word_rank: float | None = None
    mean_aoa: float | None = None


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences; spans without any word are dropped."""
    spans = []
    start = 0
    for m in _TERMINATOR_RE.finditer(text):
        spans.append((start, m.end()))
        start = m.end()
    if start < len(text):
        spans.append((start, len(text)))
    return [(a, b) for a, b in spans if WORD_RE.search(text, a, b)]


def words(text: str) -> list[str]:
    return WORD_RE.findall(text)


def tokenize(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    """Return ``(word_tokens, sentence_spans)``."""
    return words(text), sentence_spans(text)


def is_alphabetic(token: str) -> bool:
    return _ALPHA_RE.fullmatch(token) is not None


def count_syllables(word: str) -> int:
    w = word.lower()
    count = len(_VOWEL_GROUP_RE.findall(w))
    if count > 1 and w.endswith("e") and not w.endswith(("ee", "le")):
        count -= 1
    return max(count, 1)


def text_stats(
    text: str,
    parse: ParsedSentence | None = None,
    freq: Lexicon | None = None,
    aoa: Lexicon | None = None,
) -> TextStats:
    toks, spans = tokenize(text)
    return TextStats(
        n_words=len(toks),
        n_chars=sum(len(t) for t in toks),
        n_sentences=len(spans),
        max_dep_depth=tree_depth(parse) if parse is not None else None,
        word_rank=word_rank(toks, freq) if freq is not None else None,
        mean_aoa=mean_aoa(toks, aoa) if aoa is not None else None,
    )


# ---------------------------------------------------------------------------
# readability


def ari(stats: TextStats) -> float:
    """Automated Readability Index, unrounded."""
    if stats.n_words < 1 or stats.n_sentences < 1:
        raise UndefinedInputError("ARI needs at least one word and one sentence")
    return 4.71 * (stats.n_chars / stats.n_words) + 0.5 * (stats.n_words / stats.n_sentences) - 21.43


def ari_grade(text: str) -> int:
    """ARI rounded half-up to an integer US grade and clamped to [1, 13]."""
    if not text or not text.strip():
        raise UndefinedInputError("empty text has no grade")
    score = ari(text_stats(text))
    return int(min(max(math.floor(score + 0.5), MIN_GRADE), MAX_GRADE))


def flesch_reading_ease(text: str) -> float:
    toks, spans = tokenize(text)
    if not toks or not spans:
        raise UndefinedInputError("Flesch Reading Ease needs at least one word and one sentence")
    syllables = sum(count_syllables(t) for t in toks)
    return 206.835 - 1.015 * (len(toks) / len(spans)) - 84.6 * (syllables / len(toks))


# ---------------------------------------------------------------------------
# edit similarities


def levenshtein_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        append = cur.append
        for j, cb in enumerate(b, start=1):
            sub = prev[j - 1] + (ca != cb)
            ins = cur[j - 1] + 1
            dele = prev[j] + 1
            append(min(sub, ins, dele))
        prev = cur
    return prev[-1]


def levenshtein_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein_distance(a, b) / longest


def min_substitutions(a: str, b: str) -> int:
    """Substitutions in a minimum-cost edit script, preferring fewer substitutions on ties."""
    # cells hold (cost, substitutions), compared lexicographically
    prev = [(j, 0) for j in range(len(b) + 1)]
    for i, ca in enumerate(a, start=1):
        cur = [(i, 0)]
        for j, cb in enumerate(b, start=1):
            c, s = prev[j - 1]
            diag = (c, s) if ca == cb else (c + 1, s + 1)
            up = prev[j]
            left = cur[j - 1]
            cur.append(min(diag, (up[0] + 1, up[1]), (left[0] + 1, left[1])))
        prev = cur
    return prev[-1][1]


def replace_levenshtein_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - min_substitutions(a, b) / longest


# ---------------------------------------------------------------------------
# lexical complexity


def _require_kind(lex: Lexicon, kind: str) -> None:
    if lex.kind != kind:
        raise ValueError(f"expected a {kind} lexicon, got {lex.kind}")


def word_rank(tokens, lex: Lexicon) -> float:
    """Third quartile (linear interpolation) of log frequency ranks of alphabetic tokens."""
    _require_kind(lex, "frequency_rank")
    logs = [math.log(lex.lookup(t)) for t in tokens if is_alphabetic(t)]
    if not logs:
        return 0.0
    return float(np.percentile(logs, 75))


def mean_aoa(tokens, lex: Lexicon) -> float:
    _require_kind(lex, "age_of_acquisition")
    ages = [lex.lookup(t) for t in tokens if is_alphabetic(t)]
    if not ages:
        return float(np.mean(list(lex.entries.values()))) if lex.entries else lex.default_value
    return float(np.mean(ages))


# ---------------------------------------------------------------------------
# syntax


def tree_depth(parse: ParsedSentence) -> int:
    """Maximum depth of the dependency tree, counting the root as depth 1."""
    heads = parse.heads
    depth = [0] * (len(heads) + 1)
    best = 0
    for start in range(1, len(heads) + 1):
        path = []
        node = start
        while node != 0 and depth[node] == 0:
            path.append(node)
            node = heads[node - 1]
        d = depth[node] if node != 0 else 0
        for n in reversed(path):
            d += 1
            depth[n] = d
        best = max(best, depth[start])
    return best
