"""Control vectors: oracle computation from pairs, quantization, input prefixes
and per-grade-pair averages."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import textstats
from .corpus import MAX_GRADE, MIN_GRADE, Lexicon, ParsedSentence

PRIMARY = ("w", "c", "l", "wr", "dtd")
OPTIONAL = ("rl", "cc")

GRID_STEP = 0.05
GRID_MIN = 0.05
GRID_MAX = 2.00
_GRID_LO, _GRID_HI = 1, 40  # grid indices of GRID_MIN and GRID_MAX

RATIO_DIRECTIONS = ("mixed", "target_over_source", "source_over_target")


class ControlError(ValueError):
    pass


@dataclass(frozen=True)
class ControlVector:
    w: float
    c: float
    l: float  # noqa: E741
    wr: float
    dtd: float
    rl: float | None = None
    cc: float | None = None

    def primary(self) -> np.ndarray:
        return np.array([self.w, self.c, self.l, self.wr, self.dtd], dtype=float)

    @classmethod
    def from_primary(cls, values: Sequence[float]) -> "ControlVector":
        if len(values) != len(PRIMARY):
            raise ControlError(f"expected {len(PRIMARY)} values, got {len(values)}")
        return cls(*(float(v) for v in values))

    @classmethod
    def ones(cls) -> "ControlVector":
        return cls(1.0, 1.0, 1.0, 1.0, 1.0)

    def items(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                yield f.name, value

    def to_json(self, record_id: str | None = None) -> dict:
        out = {"id": record_id} if record_id is not None else {}
        out.update(self.items())
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ControlVector":
        try:
            return cls(**{name: obj[name] for name in PRIMARY}, **{k: obj.get(k) for k in OPTIONAL})
        except KeyError as exc:
            raise ControlError(f"control vector missing field {exc}") from None


def _ratio(num: float, den: float) -> float:
    if den == 0:
        raise ControlError("ratio with zero denominator")
    return num / den


def copy_rate(source_tokens: Sequence[str], target_tokens: Sequence[str]) -> float:
    """Share of target tokens that also occur in the source (case-insensitive)."""
    if not target_tokens:
        raise ControlError("zero-length target")
    vocab = {t.lower() for t in source_tokens}
    return sum(t.lower() in vocab for t in target_tokens) / len(target_tokens)


def compute_controls(
    source: str,
    target: str,
    freq: Lexicon,
    parses: tuple[ParsedSentence, ParsedSentence] | None = None,
    *,
    include_dtd: bool = True,
    include_optional: bool = True,
    ratio_direction: str = "mixed",
) -> ControlVector:
    """Oracle control vector for a source/target pair.

    With the default ``ratio_direction="mixed"`` W, C and WR are target/source
    and DTD is source/target. ``target_over_source`` and ``source_over_target``
    apply one direction to all four ratios. ``include_dtd=False`` sets DTD to 1.
    """
    if ratio_direction not in RATIO_DIRECTIONS:
        raise ControlError(f"unknown ratio direction {ratio_direction!r}")
    if not source.strip():
        raise ControlError("empty source")
    src_tokens = textstats.words(source)
    tgt_tokens = textstats.words(target)
    if not tgt_tokens:
        raise ControlError("zero-length target")
    if not src_tokens:
        raise ControlError("source has no words")

    def ratio(src_value, tgt_value, natural="ts"):
        if ratio_direction == "target_over_source" or (ratio_direction == "mixed" and natural == "ts"):
            return _ratio(tgt_value, src_value)
        return _ratio(src_value, tgt_value)

    w = ratio(len(src_tokens), len(tgt_tokens))
    c = ratio(sum(map(len, src_tokens)), sum(map(len, tgt_tokens)))
    l = textstats.levenshtein_similarity(source, target)  # noqa: E741
    wr_src = textstats.word_rank(src_tokens, freq)
    wr_tgt = textstats.word_rank(tgt_tokens, freq)
    if ratio_direction == "source_over_target":
        wr = 1.0 if wr_tgt == 0 else wr_src / wr_tgt
    else:
        wr = 1.0 if wr_src == 0 else wr_tgt / wr_src
    if include_dtd:
        if parses is None or parses[0] is None or parses[1] is None:
            raise ControlError("missing parse for DTD")
        dtd = ratio(textstats.tree_depth(parses[0]), textstats.tree_depth(parses[1]), natural="st")
    else:
        dtd = 1.0
    rl = cc = None
    if include_optional:
        rl = textstats.replace_levenshtein_similarity(source, target)
        cc = copy_rate(src_tokens, tgt_tokens)
    return ControlVector(w, c, l, wr, dtd, rl, cc)


# ---------------------------------------------------------------------------
# quantization


def quantize_value(x: float) -> float:
    """Nearest 0.05 step (ties up), clamped to [0.05, 2.00]."""
    if not math.isfinite(x):
        raise ControlError(f"cannot quantize {x!r}")
    k = math.floor(x / GRID_STEP + 0.5 + 1e-9)
    k = min(max(k, _GRID_LO), _GRID_HI)
    return round(k * GRID_STEP, 2)


def quantize(v: ControlVector) -> ControlVector:
    return ControlVector(**{name: None if value is None else quantize_value(value)
                            for name, value in ((f.name, getattr(v, f.name)) for f in fields(v))})


def is_on_grid(x: float) -> bool:
    k = x / GRID_STEP
    return abs(k - round(k)) < 1e-9 and _GRID_LO <= round(k) <= _GRID_HI


def is_quantized(v: ControlVector) -> bool:
    return all(is_on_grid(value) for _, value in v.items())


def grid_values() -> np.ndarray:
    return np.round(np.arange(_GRID_LO, _GRID_HI + 1) * GRID_STEP, 2)


# ---------------------------------------------------------------------------
# model inputs

_PREFIX_RE = re.compile(
    r"^W_(\d+\.\d\d) C_(\d+\.\d\d) L_(\d+\.\d\d) WR_(\d+\.\d\d) DTD_(\d+\.\d\d) (.*)$", re.S
)
_GRADE_PREFIX_RE = re.compile(r"^SG_(\d+) TG_(\d+) (.*)$", re.S)


def format_control_prefix(v: ControlVector, source: str) -> str:
    if not is_quantized(v):
        raise ControlError(f"control vector is not quantized: {v}")
    return f"W_{v.w:.2f} C_{v.c:.2f} L_{v.l:.2f} WR_{v.wr:.2f} DTD_{v.dtd:.2f} {source}"


def parse_control_prefix(text: str) -> tuple[ControlVector, str]:
    m = _PREFIX_RE.match(text)
    if m is None:
        raise ControlError(f"not a control-prefixed input: {text[:60]!r}")
    return ControlVector.from_primary([float(g) for g in m.groups()[:5]]), m.group(6)


def format_grade_prefix(sg: int, tg: int, source: str) -> str:
    for g in (sg, tg):
        if isinstance(g, bool) or int(g) != g or not MIN_GRADE <= g <= MAX_GRADE:
            raise ControlError(f"grade out of range: {g!r}")
    return f"SG_{int(sg)} TG_{int(tg)} {source}"


def parse_grade_prefix(text: str) -> tuple[int, int, str]:
    m = _GRADE_PREFIX_RE.match(text)
    if m is None:
        raise ControlError(f"not a grade-prefixed input: {text[:60]!r}")
    return int(m.group(1)), int(m.group(2)), m.group(3)


def strip_prefix(text: str) -> str:
    """Source text with any control or grade prefix removed."""
    for regex, group in ((_PREFIX_RE, 6), (_GRADE_PREFIX_RE, 3)):
        m = regex.match(text)
        if m:
            return m.group(group)
    return text


# ---------------------------------------------------------------------------
# grade-pair averages


@dataclass(frozen=True)
class AvgGradeTable:
    """Mean oracle vector per (source grade, target grade); unseen pairs get the global mean."""

    entries: dict
    global_mean: ControlVector
    global_count: int

    def lookup(self, source_grade: int, target_grade: int) -> ControlVector:
        hit = self.entries.get((source_grade, target_grade))
        return hit[0] if hit is not None else self.global_mean

    def count(self, source_grade: int, target_grade: int) -> int:
        hit = self.entries.get((source_grade, target_grade))
        return hit[1] if hit is not None else 0

    def to_json(self) -> dict:
        return {
            "global": {"count": self.global_count, **dict(zip(PRIMARY, self.global_mean.primary().tolist()))},
            "pairs": [
                {"source_grade": sg, "target_grade": tg, "count": n, **dict(zip(PRIMARY, v.primary().tolist()))}
                for (sg, tg), (v, n) in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AvgGradeTable":
        entries = {
            (row["source_grade"], row["target_grade"]): (ControlVector.from_json(row), row["count"])
            for row in obj["pairs"]
        }
        return cls(entries, ControlVector.from_json(obj["global"]), obj["global"]["count"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AvgGradeTable":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_avg_grade_table(items: Iterable[tuple[int, int, ControlVector]]) -> AvgGradeTable:
    """Average oracle vectors from ``(source_grade, target_grade, vector)`` triples."""
    groups: dict[tuple[int, int], list[np.ndarray]] = {}
    for sg, tg, vec in items:
        if sg is None or tg is None:
            raise ControlError("every record needs source and target grade")
        groups.setdefault((int(sg), int(tg)), []).append(vec.primary())
    if not groups:
        raise ControlError("cannot build an average table from empty input")
    entries = {
        key: (ControlVector.from_primary(np.mean(rows, axis=0)), len(rows))
        for key, rows in sorted(groups.items())
    }
    everything = np.concatenate([np.stack(rows) for rows in groups.values()])
    return AvgGradeTable(entries, ControlVector.from_primary(everything.mean(axis=0)), len(everything))


# ---------------------------------------------------------------------------
# serialization


def write_controls(rows: Iterable[tuple[str, ControlVector]], path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for record_id, vec in rows:
            fh.write(json.dumps(vec.to_json(record_id)) + "\n")
            n += 1
    return n


def read_controls(path) -> dict[str, ControlVector]:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "id" not in obj:
                raise ControlError(f"{path}:{lineno}: missing id")
            out[str(obj["id"])] = ControlVector.from_json(obj)
    return out
