"""Source-side feature vectors for the control predictor."""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .. import textstats
from ..corpus import DatasetRecord, Lexicon, ParsedSentence

FEATURE_NAMES = (
    "n_words",
    "n_chars",
    "max_dep_depth",
    "word_rank",
    "mean_aoa",
    "source_grade",
    "target_grade",
)
FEATURE_SCHEMA_VERSION = 1


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class SourceFeatures:
    n_words: int
    n_chars: int
    max_dep_depth: int
    word_rank: float
    mean_aoa: float
    source_grade: int
    target_grade: int

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


def resolve_source_grade(record: DatasetRecord) -> int:
    """The record's source grade, or its ARI grade when absent."""
    if record.source_grade is not None:
        return record.source_grade
    return textstats.ari_grade(record.source)


def extract_features(
    record: DatasetRecord,
    parse: ParsedSentence | None,
    freq: Lexicon,
    aoa: Lexicon,
    target_grade: int | None = None,
) -> SourceFeatures:
    tg = target_grade if target_grade is not None else record.target_grade
    if tg is None:
        raise FeatureError(f"record {record.id!r}: missing target grade")
    if parse is None:
        raise FeatureError(f"record {record.id!r}: missing source parse (max_dep_depth)")
    stats = textstats.text_stats(record.source, parse=parse, freq=freq, aoa=aoa)
    return SourceFeatures(
        n_words=stats.n_words,
        n_chars=stats.n_chars,
        max_dep_depth=stats.max_dep_depth,
        word_rank=stats.word_rank,
        mean_aoa=stats.mean_aoa,
        source_grade=resolve_source_grade(record),
        target_grade=int(tg),
    )


class SourceFeatureExtractor(TransformerMixin, BaseEstimator):
    """Map records to the 7-column feature matrix (stateless)."""

    def __init__(self, freq=None, aoa=None, parses=None):
        self.freq = freq
        self.aoa = aoa
        self.parses = parses

    def fit(self, records=None, y=None):
        if self.freq is None or self.aoa is None:
            raise FeatureError("both a frequency and an age-of-acquisition lexicon are required")
        self.feature_names_out_ = np.array(FEATURE_NAMES, dtype=object)
        return self

    def transform(self, records):
        parses = self.parses or {}
        rows = [
            extract_features(r, parses.get((r.id, "source")), self.freq, self.aoa).as_array()
            for r in records
        ]
        return np.vstack(rows) if rows else np.empty((0, len(FEATURE_NAMES)))

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)
