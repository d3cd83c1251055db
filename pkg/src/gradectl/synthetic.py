"""Deterministic synthetic fixtures.

The licensed grade-level corpus cannot be shipped, so tests and demos run on
generated data with the same shape: pseudo-English sources, grade-conditioned
references produced by the rule simplifier under hidden per-record controls,
CoNLL-U parses and both lexicons.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from . import textstats
from .control import ControlVector, quantize
from .corpus import DatasetRecord, Lexicon, ParsedSentence, make_lexicon, save_dataset, write_conllu, write_lexicon
from .simplify import rule_simplify

VOCAB_SIZE = 3000
DEFAULT_SIZES = {"train": 2000, "dev": 200, "test": 500}

_ONSETS = list("bcdfghklmnprstvw")
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "ou"]
_CODAS = ["", "", "n", "r", "s", "t", "l", "m"]
_PIECE_RE = re.compile(textstats.WORD_RE.pattern + r"|,")


def make_lexicons(seed: int = 0, size: int = VOCAB_SIZE) -> tuple[Lexicon, Lexicon]:
    """Frequency-rank and age-of-acquisition lexicons over pseudo-words.

    Rarer words get more syllables and higher acquisition ages.
    """
    rng = np.random.default_rng(seed)
    words: list[str] = []
    seen: set[str] = set()
    rank = 1
    while len(words) < size:
        span = math.log(rank) / math.log(size)
        n_syll = 1 + int(3.2 * span + rng.uniform(0, 0.8))
        word = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS) for _ in range(n_syll))
        if word in seen:
            continue
        seen.add(word)
        words.append(word)
        rank += 1
    freq = make_lexicon("frequency_rank", {w: i for i, w in enumerate(words, start=1)})
    ages = {}
    for i, w in enumerate(words, start=1):
        age = 2.5 + 11.0 * math.log(i) / math.log(size) + rng.normal(0, 0.8)
        ages[w] = float(round(min(max(age, 1.0), 25.0), 2))
    aoa = make_lexicon("age_of_acquisition", ages)
    return freq, aoa


def _sample_rank(rng, difficulty: float, size: int) -> int:
    u = rng.uniform() ** (1.6 - difficulty)
    return int(min(max(round(size ** u), 1), size))


def make_source(rng, words: list[str], difficulty: float) -> str:
    sentences = []
    n_sent = 2 if rng.uniform() < 0.3 else 1
    for _ in range(n_sent):
        n_clauses = int(rng.integers(2, 4 + (difficulty > 0.5)))
        clauses = []
        for _ in range(n_clauses):
            n = int(rng.integers(4, 8 + int(3 * difficulty)))
            clauses.append(" ".join(words[_sample_rank(rng, difficulty, len(words)) - 1] for _ in range(n)))
        text = ", ".join(clauses)
        sentences.append(text[0].upper() + text[1:] + ".")
    return " ".join(sentences)


def synthetic_parse(text: str, record_id: str, side: str) -> ParsedSentence:
    """A deterministic dependency tree whose depth grows with clause nesting.

    Each clause hangs off the previous clause's head; inside a clause words
    form short chains. Later sentences attach to the first sentence's root.
    """
    tokens: list[tuple[str, int]] = []
    first_root = None
    for a, b in textstats.sentence_spans(text):
        pieces = _PIECE_RE.findall(text[a:b])
        clauses, cur = [], []
        for p in pieces:
            if p == ",":
                if cur:
                    clauses.append(cur)
                cur = []
            else:
                cur.append(p)
        if cur:
            clauses.append(cur)
        prev_head = None
        for clause in clauses:
            head_idx = len(tokens) + 1
            if prev_head is None:
                parent = first_root or 0
            else:
                parent = prev_head
            tokens.append((clause[0], parent))
            if first_root is None:
                first_root = head_idx
            for j, word in enumerate(clause[1:], start=1):
                idx = len(tokens) + 1
                tokens.append((word, head_idx if j % 3 == 1 else idx - 1))
            prev_head = head_idx
    return ParsedSentence(record_id, side, tuple(tokens))


def hidden_controls(rng, source_grade: int, target_grade: int, n_words: int, n_clauses: int) -> ControlVector:
    gap = source_grade - target_grade
    w = 1.0 - 0.055 * gap - 0.004 * (n_words - 25) + rng.normal(0, 0.03)
    wr = 1.0 - 0.035 * gap + rng.normal(0, 0.03)
    dtd = 1.5 if gap >= 3 and n_clauses >= 2 else 1.0
    return quantize(ControlVector(min(max(w, 0.35), 1.0), 1.0, 1.0, min(max(wr, 0.5), 1.0), dtd))


def make_records(n: int, prefix: str, freq: Lexicon, seed: int):
    """``n`` graded records with references plus their source/reference parses."""
    rng = np.random.default_rng(seed)
    words = sorted(freq.entries, key=freq.entries.get)
    frequent = words[:50]
    records, parses = [], []
    for i in range(n):
        rid = f"{prefix}-{i:05d}"
        source = make_source(rng, words, float(rng.uniform()))
        sg = textstats.ari_grade(source)
        tg = 1 if sg == 1 else int(rng.integers(max(1, sg - 8), sg))
        n_words = len(textstats.words(source))
        n_clauses = source.count(",") + 1
        v = hidden_controls(rng, sg, tg, n_words, n_clauses)
        reference = rule_simplify(source, v, freq)
        if rng.uniform() < 0.3:
            ref_words = reference.split(" ")
            k = int(rng.integers(0, len(ref_words)))
            if re.fullmatch(r"[a-z]+", ref_words[k]):
                ref_words[k] = frequent[int(rng.integers(0, len(frequent)))]
                reference = " ".join(ref_words)
        records.append(DatasetRecord(rid, source, reference, sg, tg))
        parses.append(synthetic_parse(source, rid, "source"))
        parses.append(synthetic_parse(reference, rid, "reference"))
    return records, parses


def write_fixture(out_dir, seed: int = 0, sizes: dict | None = None) -> dict[str, Path]:
    """Write ``<split>.jsonl``, ``parses.conllu``, ``freq.tsv`` and ``aoa.tsv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sizes = sizes or DEFAULT_SIZES
    freq, aoa = make_lexicons(seed)
    paths = {"freq": out_dir / "freq.tsv", "aoa": out_dir / "aoa.tsv", "conllu": out_dir / "parses.conllu"}
    write_lexicon(freq, paths["freq"])
    write_lexicon(aoa, paths["aoa"])
    all_parses = []
    for k, (split, n) in enumerate(sizes.items()):
        records, parses = make_records(n, split, freq, seed * 1000 + k + 1)
        paths[split] = out_dir / f"{split}.jsonl"
        save_dataset(records, paths[split])
        all_parses.extend(parses)
    write_conllu(all_parses, paths["conllu"])
    return paths


def latent_factor_dataset(n: int = 5000, seed: int = 0, noise: float = 1.0):
    """Seven features and five targets that share one latent factor.

    Each target is a loading on the common factor plus its own feature term
    and independent noise.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 7))
    latent = np.sin(X[:, 0]) + 0.5 * X[:, 1] * X[:, 2] + 0.3 * X[:, 3]
    loadings = np.array([1.0, 0.9, 0.8, 0.7, 0.6])
    own = np.column_stack([0.3 * X[:, 4], 0.3 * X[:, 5], 0.3 * X[:, 6], -0.3 * X[:, 4], 0.2 * X[:, 5] ** 2])
    Y = latent[:, None] * loadings + own + rng.normal(0, noise, size=(n, 5))
    return X, Y
