"""SARI, ARI accuracy, %unchanged and the analysis reports built on them.

SARI here uses n-gram *sets* per sentence. With several references the KEEP
and DEL operations weight each n-gram by the share of references that keep
(or delete) it, ADD uses the union of reference n-grams. Empty-set
conventions for every component:

* system set and reference set both empty -> 1
* system set empty, reference set non-empty -> 0
* system set non-empty, reference set empty -> precision 0
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import textstats
from .control import PRIMARY, ControlVector
from .predictor.model import pearson


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class SariScore:
    sari: float
    add_f1: float
    keep_f1: float
    del_p: float
    max_n: int = 4

    def to_json(self) -> dict:
        return {"sari": self.sari, "add_f1": self.add_f1, "keep_f1": self.keep_f1,
                "del_p": self.del_p, "max_n": self.max_n}


def sari_tokens(text: str) -> list[str]:
    return [t.lower() for t in textstats.words(text)]


def ngram_set(tokens: Sequence[str], n: int) -> set:
    return {tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)}


def _score(n_sys: int, n_ref: int, precision: float, recall: float | None) -> float:
    if n_sys == 0:
        return 1.0 if n_ref == 0 else 0.0
    if n_ref == 0:
        return 0.0
    if recall is None:
        return precision
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _sari_ngram(src: set, out: set, refs: list[set]) -> tuple[float, float, float]:
    k = len(refs)
    ref_count = Counter(g for r in refs for g in r)
    ref_union = set(ref_count)

    add_sys = out - src
    add_ref = ref_union - src
    add_good = len(add_sys & add_ref)
    add = _score(len(add_sys), len(add_ref),
                 add_good / len(add_sys) if add_sys else 0.0,
                 add_good / len(add_ref) if add_ref else 0.0)

    keep_sys = out & src
    keep_ref = src & ref_union
    keep = _score(len(keep_sys), len(keep_ref),
                  sum(ref_count[g] for g in keep_sys) / k / len(keep_sys) if keep_sys else 0.0,
                  len(keep_sys & keep_ref) / len(keep_ref) if keep_ref else 0.0)

    del_sys = src - out
    del_ref = {g for g in src if ref_count[g] < k}
    dele = _score(len(del_sys), len(del_ref),
                  sum(k - ref_count[g] for g in del_sys) / k / len(del_sys) if del_sys else 0.0,
                  None)
    return add, keep, dele


def sari_from_tokens(source, output, references, max_n: int = 4) -> SariScore:
    if not references:
        raise MetricError("SARI needs at least one reference")
    if max_n < 1:
        raise MetricError("max_n must be >= 1")
    totals = np.zeros(3)
    for n in range(1, max_n + 1):
        totals += _sari_ngram(ngram_set(source, n), ngram_set(output, n),
                              [ngram_set(r, n) for r in references])
    add, keep, dele = totals / max_n
    return SariScore(100.0 * (add + keep + dele) / 3.0, add, keep, dele, max_n)


def sari(source: str, output: str, references: Sequence[str], max_n: int = 4) -> SariScore:
    """Sentence-level SARI on lower-cased word tokens."""
    if isinstance(references, str):
        raise MetricError("references must be a list of strings")
    return sari_from_tokens(sari_tokens(source), sari_tokens(output),
                            [sari_tokens(r) for r in references], max_n)


def corpus_sari(scores: Sequence[SariScore]) -> SariScore:
    """Mean of sentence-level components."""
    if not scores:
        raise MetricError("no scores to aggregate")
    add = float(np.mean([s.add_f1 for s in scores]))
    keep = float(np.mean([s.keep_f1 for s in scores]))
    dele = float(np.mean([s.del_p for s in scores]))
    return SariScore(100.0 * (add + keep + dele) / 3.0, add, keep, dele, scores[0].max_n)


# ---------------------------------------------------------------------------
# grade metrics


def _paired(a, b):
    if len(a) != len(b):
        raise MetricError(f"length mismatch ({len(a)} vs {len(b)})")


def ari_accuracy(outputs: Sequence[str], references: Sequence[str]) -> float:
    """Percent of pairs whose ARI grades differ by at most one."""
    _paired(outputs, references)
    if not outputs:
        raise MetricError("no pairs to score")
    hits = sum(abs(textstats.ari_grade(o) - textstats.ari_grade(r)) <= 1
               for o, r in zip(outputs, references))
    return 100.0 * hits / len(outputs)


def pct_unchanged(sources: Sequence[str], outputs: Sequence[str]) -> float:
    _paired(sources, outputs)
    if not sources:
        raise MetricError("no pairs to score")
    same = sum(s.strip() == o.strip() for s, o in zip(sources, outputs))
    return 100.0 * same / len(sources)


def over_under_report(outputs: Sequence[str], references: Sequence[str]) -> dict[int, int]:
    """Histogram of ``ari_grade(output) - ari_grade(reference)``."""
    _paired(outputs, references)
    if not outputs:
        raise MetricError("empty input")
    diffs = Counter(textstats.ari_grade(o) - textstats.ari_grade(r) for o, r in zip(outputs, references))
    return dict(sorted(diffs.items()))


@dataclass(frozen=True)
class GradeEditRow:
    target_grade: int
    count: int
    add_f1: float
    keep_f1: float
    del_p: float


def edit_report_by_grade(items: Iterable[tuple[int, SariScore]]) -> list[GradeEditRow]:
    """Mean SARI components per target grade from ``(target_grade, score)`` pairs."""
    groups: dict[int, list[SariScore]] = {}
    for grade, score in items:
        if grade is None:
            continue
        groups.setdefault(int(grade), []).append(score)
    if not groups:
        raise MetricError("no graded records")
    return [
        GradeEditRow(
            grade,
            len(scores),
            float(np.mean([s.add_f1 for s in scores])),
            float(np.mean([s.keep_f1 for s in scores])),
            float(np.mean([s.del_p for s in scores])),
        )
        for grade, scores in sorted(groups.items())
    ]


# ---------------------------------------------------------------------------
# control analyses


def control_metric_correlation(
    vectors: Sequence[ControlVector], metrics: Mapping[str, Sequence[float]]
) -> dict[tuple[str, str], float | None]:
    """Pearson r between every control dimension and every metric column."""
    if len(vectors) < 3:
        raise MetricError("need at least 3 samples")
    for name, values in metrics.items():
        if len(values) != len(vectors):
            raise MetricError(f"metric {name!r} has {len(values)} values for {len(vectors)} samples")
    controls = np.vstack([v.primary() for v in vectors])
    return {
        (dim, name): pearson(controls[:, k], values)
        for k, dim in enumerate(PRIMARY)
        for name, values in metrics.items()
    }


QUANTILES = (("min", 0), ("q1", 25), ("median", 50), ("q3", 75), ("max", 100))


def control_distribution_report(
    by_strategy: Mapping[str, Sequence[ControlVector]]
) -> dict[str, dict[str, dict[str, float]]]:
    """Five-number summary per control dimension per strategy."""
    out = {}
    for strategy, vectors in by_strategy.items():
        if not vectors:
            raise MetricError(f"empty strategy bucket {strategy!r}")
        arr = np.vstack([v.primary() for v in vectors])
        out[strategy] = {
            dim: {label: float(np.percentile(arr[:, k], q)) for label, q in QUANTILES}
            for k, dim in enumerate(PRIMARY)
        }
    return out


def iqr(summary: Mapping[str, float]) -> float:
    return summary["q3"] - summary["q1"]


# ---------------------------------------------------------------------------
# reports


def load_adequacy_scores(path) -> dict[str, float]:
    """Externally computed adequacy scores, JSONL ``{"id": ..., "adequacy": ...}``."""
    scores = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                scores[str(obj["id"])] = float(obj["adequacy"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise MetricError(f"{path}:{lineno}: expected {{'id', 'adequacy'}}") from None
    return scores


@dataclass
class EvalReport:
    strategy: str
    n_records: int
    sari: SariScore
    ari_accuracy: float | None
    pct_unchanged: float
    edit_ops: list[GradeEditRow]
    over_under: dict[int, int]
    distribution: dict
    adequacy: float | None = None
    failures: dict[str, str] = field(default_factory=dict)
    correlation: dict | None = None

    def summary(self) -> dict:
        return {
            "strategy": self.strategy,
            "n_records": self.n_records,
            "n_failures": len(self.failures),
            "sari": self.sari.to_json(),
            "ari_accuracy": self.ari_accuracy,
            "pct_unchanged": self.pct_unchanged,
            "adequacy": self.adequacy,
            "failures": dict(sorted(self.failures.items())),
        }


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_edit_ops(rows: Sequence[GradeEditRow], path) -> None:
    _write_csv(Path(path), ["target_grade", "count", "add_f1", "keep_f1", "del_p"],
               [(r.target_grade, r.count, r.add_f1, r.keep_f1, r.del_p) for r in rows])


def write_over_under(hist: Mapping[int, int], path) -> None:
    total = sum(hist.values())
    _write_csv(Path(path), ["grade_difference", "count", "fraction"],
               [(d, c, c / total) for d, c in sorted(hist.items())])


def write_correlation(table: Mapping[tuple[str, str], float | None], path) -> None:
    _write_csv(Path(path), ["control", "metric", "pearson_r"],
               [(dim, metric, r) for (dim, metric), r in table.items()])


def write_distribution(report: Mapping[str, dict], path) -> None:
    rows = []
    for strategy, dims in report.items():
        for dim, summary in dims.items():
            rows.append((strategy, dim, *(summary[label] for label, _ in QUANTILES)))
    _write_csv(Path(path), ["strategy", "control", *(label for label, _ in QUANTILES)], rows)


def write_report(report: EvalReport, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "edit_ops": out_dir / "report_edit_ops.csv",
        "over_under": out_dir / "report_over_under.csv",
        "distribution": out_dir / "report_distribution.csv",
        "summary": out_dir / "summary.json",
    }
    write_edit_ops(report.edit_ops, paths["edit_ops"])
    write_over_under(report.over_under, paths["over_under"])
    write_distribution(report.distribution, paths["distribution"])
    if report.correlation is not None:
        paths["correlation"] = out_dir / "report_correlation.csv"
        write_correlation(report.correlation, paths["correlation"])
    paths["summary"].write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
