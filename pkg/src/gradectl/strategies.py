"""How control inputs are set per record, and the resolve -> simplify -> score pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import metrics
from .control import (
    AvgGradeTable,
    ControlVector,
    compute_controls,
    format_control_prefix,
    format_grade_prefix,
    quantize,
)
from .corpus import DatasetRecord, Lexicon, ParsedSentence
from .predictor import ControlPredictor, extract_features, resolve_source_grade
from .simplify import SimplifierRequest

log = logging.getLogger(__name__)

VARIANTS = ("corpus-level", "avg-grade", "cp-single", "cp-multi", "oracle", "grade-tokens")


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class Strategy:
    variant: str
    vector: ControlVector | None = None
    table: AvgGradeTable | None = None
    predictor: ControlPredictor | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise StrategyError(f"unknown strategy {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "corpus-level" and self.vector is None:
            raise StrategyError("corpus-level strategy needs a control vector")
        if self.variant == "avg-grade" and self.table is None:
            raise StrategyError("avg-grade strategy needs an average table")
        if self.variant in ("cp-single", "cp-multi"):
            if self.predictor is None:
                raise StrategyError(f"{self.variant} strategy needs a trained predictor")
            want = self.variant.split("-")[1]
            if self.predictor.mode != want:
                raise StrategyError(f"{self.variant} strategy got a {self.predictor.mode!r} predictor")

    @property
    def low_level(self) -> bool:
        return self.variant != "grade-tokens"

    @classmethod
    def corpus_level(cls, vector: ControlVector) -> "Strategy":
        return cls("corpus-level", vector=quantize(vector))

    @classmethod
    def avg_grade(cls, table: AvgGradeTable) -> "Strategy":
        return cls("avg-grade", table=table)

    @classmethod
    def cp(cls, predictor: ControlPredictor) -> "Strategy":
        return cls(f"cp-{predictor.mode}", predictor=predictor)

    @classmethod
    def oracle(cls) -> "Strategy":
        return cls("oracle")

    @classmethod
    def grade_tokens(cls) -> "Strategy":
        return cls("grade-tokens")


@dataclass
class Resources:
    freq: Lexicon
    aoa: Lexicon | None = None
    parses: Mapping[tuple[str, str], ParsedSentence] = field(default_factory=dict)

    def parse(self, record_id: str, side: str) -> ParsedSentence | None:
        return self.parses.get((record_id, side))


def oracle_controls(record: DatasetRecord, res: Resources, include_optional: bool = False) -> ControlVector:
    """Oracle vector from the record's pair; DTD falls back to 1.0 without parses."""
    if record.reference is None:
        raise StrategyError(f"record {record.id!r}: oracle controls need a reference")
    src, ref = res.parse(record.id, "source"), res.parse(record.id, "reference")
    has_parses = src is not None and ref is not None
    if not has_parses:
        log.warning("record %s: missing parse, DTD set to 1.00", record.id)
    return compute_controls(record.source, record.reference, res.freq,
                            (src, ref) if has_parses else None,
                            include_dtd=has_parses, include_optional=include_optional)


def resolve_controls(strategy: Strategy, record: DatasetRecord, res: Resources) -> ControlVector | None:
    """Quantized control vector for ``record`` (``None`` for grade tokens)."""
    v = strategy.variant
    if v == "grade-tokens":
        return None
    if v == "corpus-level":
        return strategy.vector
    if v == "oracle":
        return quantize(oracle_controls(record, res))
    if record.target_grade is None:
        raise StrategyError(f"record {record.id!r}: {v} needs a target grade")
    if v == "avg-grade":
        return quantize(strategy.table.lookup(resolve_source_grade(record), record.target_grade))
    if res.aoa is None:
        raise StrategyError(f"{v} needs an age-of-acquisition lexicon")
    features = extract_features(record, res.parse(record.id, "source"), res.freq, res.aoa)
    return strategy.predictor.predict_controls([features])[0]


def resolve_input(strategy: Strategy, record: DatasetRecord, res: Resources) -> str:
    if strategy.variant == "grade-tokens":
        if record.target_grade is None:
            raise StrategyError(f"record {record.id!r}: grade tokens need a target grade")
        return format_grade_prefix(resolve_source_grade(record), record.target_grade, record.source)
    return format_control_prefix(resolve_controls(strategy, record, res), record.source)


def resolve_batch(strategy: Strategy, records: Sequence[DatasetRecord], res: Resources):
    """Resolve every record; returns ``(inputs, controls, failures)`` keyed by record id.

    Predictor variants featurize record by record and predict in one batch.
    """
    failures: dict[str, str] = {}
    inputs: dict[str, str] = {}
    controls: dict[str, ControlVector] = {}
    if strategy.variant in ("cp-single", "cp-multi"):
        if res.aoa is None:
            raise StrategyError(f"{strategy.variant} needs an age-of-acquisition lexicon")
        ready, feats = [], []
        for record in records:
            try:
                if record.target_grade is None:
                    raise StrategyError(f"record {record.id!r}: {strategy.variant} needs a target grade")
                feats.append(extract_features(record, res.parse(record.id, "source"), res.freq, res.aoa))
                ready.append(record)
            except ValueError as exc:
                log.warning("record %s: %s", record.id, exc)
                failures[record.id] = str(exc)
        vectors = strategy.predictor.predict_controls(feats) if feats else []
        for record, vec in zip(ready, vectors):
            controls[record.id] = vec
            inputs[record.id] = format_control_prefix(vec, record.source)
        return {r.id: inputs[r.id] for r in records if r.id in inputs}, controls, failures
    for record in records:
        try:
            if strategy.low_level:
                vec = resolve_controls(strategy, record, res)
                controls[record.id] = vec
                inputs[record.id] = format_control_prefix(vec, record.source)
            else:
                inputs[record.id] = resolve_input(strategy, record, res)
        except ValueError as exc:
            log.warning("record %s: %s", record.id, exc)
            failures[record.id] = str(exc)
    return inputs, controls, failures


@dataclass
class PipelineResult:
    report: metrics.EvalReport
    inputs: dict[str, str]
    outputs: dict[str, str]
    controls: dict[str, ControlVector]


def run_pipeline(
    records: Sequence[DatasetRecord],
    strategy: Strategy,
    simplifier,
    res: Resources,
    *,
    max_n: int = 4,
    timeout: float = 30.0,
    adequacy: Mapping[str, float] | None = None,
) -> PipelineResult:
    """Resolve inputs, generate outputs and score them.

    Records that fail to resolve or simplify are listed in
    ``report.failures`` and left out of every metric.
    """
    if not records:
        raise StrategyError("empty dataset")
    inputs, controls, failures = resolve_batch(strategy, records, res)

    requests = [SimplifierRequest(rid, text, timeout) for rid, text in inputs.items()]
    outputs: dict[str, str] = {}
    for req, resp in zip(requests, simplifier.simplify_batch(requests)):
        if isinstance(resp, Exception):
            failures[req.id] = f"{type(resp).__name__}: {resp}"
        else:
            outputs[req.id] = resp.output
    if not outputs:
        raise StrategyError("no record produced an output")

    done = [r for r in records if r.id in outputs]
    scored = [r for r in done if r.reference is not None]
    sari_scores = [metrics.sari(r.source, outputs[r.id], [r.reference], max_n) for r in scored]
    if sari_scores:
        corpus = metrics.corpus_sari(sari_scores)
        refs = [r.reference for r in scored]
        outs = [outputs[r.id] for r in scored]
        acc = metrics.ari_accuracy(outs, refs)
        over_under = metrics.over_under_report(outs, refs)
        graded = [(r.target_grade, s) for r, s in zip(scored, sari_scores) if r.target_grade is not None]
        edit_ops = metrics.edit_report_by_grade(graded) if graded else []
    else:
        corpus = metrics.SariScore(0.0, 0.0, 0.0, 0.0, max_n)
        acc, over_under, edit_ops = None, {}, []
    unchanged = metrics.pct_unchanged([r.source for r in done], [outputs[r.id] for r in done])
    vectors = [controls[r.id] for r in done if r.id in controls]
    distribution = metrics.control_distribution_report({strategy.variant: vectors}) if vectors else {}
    adequacy_mean = None
    if adequacy:
        hits = [adequacy[r.id] for r in done if r.id in adequacy]
        adequacy_mean = sum(hits) / len(hits) if hits else None
    report = metrics.EvalReport(
        strategy=strategy.variant,
        n_records=len(done),
        sari=corpus,
        ari_accuracy=acc,
        pct_unchanged=unchanged,
        edit_ops=edit_ops,
        over_under=over_under,
        distribution=distribution,
        adequacy=adequacy_mean,
        failures=failures,
    )
    return PipelineResult(report, inputs, outputs, controls)


def corpus_objective(records: Sequence[DatasetRecord], simplifier, max_n: int = 4):
    """Objective for corpus-level search: corpus SARI of one vector applied to every record."""
    scored = [r for r in records if r.reference is not None]
    if not scored:
        raise StrategyError("search objective needs records with references")

    def objective(vector: ControlVector) -> float:
        requests = [SimplifierRequest(r.id, format_control_prefix(vector, r.source)) for r in scored]
        results = simplifier.simplify_batch(requests)
        scores = []
        for r, resp in zip(scored, results):
            out = r.source if isinstance(resp, Exception) else resp.output
            scores.append(metrics.sari(r.source, out, [r.reference], max_n))
        return metrics.corpus_sari(scores).sari

    return objective
