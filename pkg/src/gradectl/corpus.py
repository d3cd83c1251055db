"""Shared data model and loaders for datasets, dependency parses and lexicons."""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

MIN_GRADE = 1
MAX_GRADE = 13

SIDES = ("source", "reference", "output")


class CorpusError(ValueError):
    """Raised when an input file violates its format or invariants."""


def _check_grade(value, what: str, where: str) -> int | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise CorpusError(f"{where}: {what} must be an integer, got {value!r}")
    value = int(value)
    if not MIN_GRADE <= value <= MAX_GRADE:
        raise CorpusError(f"{where}: grade out of range ({what}={value})")
    return value


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    source: str
    reference: str | None = None
    source_grade: int | None = None
    target_grade: int | None = None
    system_output: str | None = None

    def __post_init__(self):
        if not self.source or not self.source.strip():
            raise CorpusError(f"record {self.id!r}: empty source")
        _check_grade(self.source_grade, "source_grade", f"record {self.id!r}")
        _check_grade(self.target_grade, "target_grade", f"record {self.id!r}")

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class ParsedSentence:
    """A dependency tree; ``tokens`` holds ``(form, head)`` with head 0 for the root."""

    record_id: str
    side: str
    tokens: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if self.side not in SIDES:
            raise CorpusError(f"unknown side {self.side!r}")
        validate_tree([h for _, h in self.tokens], f"{self.record_id}/{self.side}")

    @property
    def heads(self) -> list[int]:
        return [h for _, h in self.tokens]


def validate_tree(heads: list[int], where: str = "tree") -> None:
    n = len(heads)
    if n == 0:
        raise CorpusError(f"{where}: empty sentence")
    for i, h in enumerate(heads, start=1):
        if not 0 <= h <= n:
            raise CorpusError(f"{where}: head index out of range (token {i} -> {h})")
        if h == i:
            raise CorpusError(f"{where}: token {i} is its own head")
    roots = heads.count(0)
    if roots != 1:
        raise CorpusError(f"{where}: multiple roots" if roots > 1 else f"{where}: no root")
    # every token must reach the root without revisiting a node
    for start in range(1, n + 1):
        seen = set()
        node = start
        while node != 0:
            if node in seen:
                raise CorpusError(f"{where}: cycle through token {start}")
            seen.add(node)
            node = heads[node - 1]


@dataclass(frozen=True)
class Lexicon:
    kind: str
    entries: Mapping[str, float]
    default_value: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in ("frequency_rank", "age_of_acquisition"):
            raise CorpusError(f"unknown lexicon kind {self.kind!r}")

    def lookup(self, word: str) -> float:
        return self.entries.get(word.lower(), self.default_value)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def make_lexicon(kind: str, entries: Mapping[str, float]) -> Lexicon:
    """Build a lexicon with the OOV default for its kind.

    Unknown words get the maximum rank (rarest) for frequency lexicons and the
    mean age for age-of-acquisition lexicons.
    """
    entries = {w.lower(): float(v) for w, v in entries.items()}
    for word, value in entries.items():
        if not word:
            raise CorpusError("empty word field")
        if not math.isfinite(value):
            raise CorpusError(f"non-numeric value for {word!r}")
        if kind == "frequency_rank" and value < 1:
            raise CorpusError(f"frequency rank must be >= 1 ({word!r}: {value})")
        if kind == "age_of_acquisition" and not 0 < value <= 25:
            raise CorpusError(f"age of acquisition must be in (0, 25] ({word!r}: {value})")
    if not entries:
        default = 1.0 if kind == "frequency_rank" else 10.0
    elif kind == "frequency_rank":
        default = max(entries.values())
    else:
        default = statistics.fmean(entries.values())
    return Lexicon(kind, entries, default)


# ---------------------------------------------------------------------------
# loaders

_RECORD_KEYS = {"id", "source", "reference", "source_grade", "target_grade", "system_output"}


def _record_from_obj(obj, where: str) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: expected a JSON object")
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        raise CorpusError(f"{where}: unknown keys {sorted(unknown)}")
    if "id" not in obj or "source" not in obj:
        raise CorpusError(f"{where}: missing 'id' or 'source'")
    for key in ("source", "reference", "system_output"):
        if obj.get(key) is not None and not isinstance(obj[key], str):
            raise CorpusError(f"{where}: {key} must be a string")
    try:
        return DatasetRecord(
            id=str(obj["id"]),
            source=obj["source"],
            reference=obj.get("reference"),
            source_grade=_check_grade(obj.get("source_grade"), "source_grade", where),
            target_grade=_check_grade(obj.get("target_grade"), "target_grade", where),
            system_output=obj.get("system_output"),
        )
    except CorpusError as exc:
        if str(exc).startswith(where):
            raise
        raise CorpusError(f"{where}: {exc}") from None


def _parse_tsv_line(line: str, header: list[str], where: str) -> dict:
    cells = line.split("\t")
    if len(cells) != len(header):
        raise CorpusError(f"{where}: expected {len(header)} columns, got {len(cells)}")
    obj = {}
    for key, cell in zip(header, cells):
        if cell == "":
            continue
        if key in ("source_grade", "target_grade"):
            try:
                obj[key] = int(cell)
            except ValueError:
                raise CorpusError(f"{where}: {key} must be an integer") from None
        else:
            obj[key] = cell
    return obj


def load_dataset(path, format: str | None = None) -> list[DatasetRecord]:
    """Read records in file order; ``format`` is ``jsonl`` or ``tsv`` (guessed from the suffix)."""
    path = Path(path)
    if format is None:
        format = "tsv" if path.suffix.lower() == ".tsv" else "jsonl"
    if format not in ("jsonl", "tsv"):
        raise CorpusError(f"unknown dataset format {format!r}")
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    header = None
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        where = f"{path.name}:{lineno}"
        if format == "jsonl":
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed line ({exc.msg})") from None
        else:
            if header is None:
                header = line.split("\t")
                if "id" not in header or "source" not in header:
                    raise CorpusError(f"{where}: TSV header must name 'id' and 'source'")
                continue
            obj = _parse_tsv_line(line, header, where)
        record = _record_from_obj(obj, where)
        if record.id in seen:
            raise CorpusError(f"{where}: duplicate id {record.id!r}")
        seen.add(record.id)
        records.append(record)
    return records


def save_dataset(records: Iterable[DatasetRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def _flush_block(comments: dict, rows: list, where: str, out: dict) -> None:
    sent_id = comments.get("sent_id")
    if sent_id is None:
        raise CorpusError(f"{where}: missing sent_id comment")
    record_id, sep, side = sent_id.rpartition("/")
    if not sep or not record_id:
        raise CorpusError(f"{where}: sent_id must be '<record_id>/<side>', got {sent_id!r}")
    if side not in SIDES:
        raise CorpusError(f"{where}: unknown side {side!r} in sent_id")
    if (record_id, side) in out:
        raise CorpusError(f"{where}: duplicate sent_id {sent_id!r}")
    expected = 1
    tokens = []
    for lineno, idx, form, head in rows:
        if idx != expected:
            raise CorpusError(f"line {lineno}: token ids must be consecutive (expected {expected}, got {idx})")
        expected += 1
        tokens.append((form, head))
    try:
        out[(record_id, side)] = ParsedSentence(record_id, side, tuple(tokens))
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from None


def load_conllu(path) -> dict[tuple[str, str], ParsedSentence]:
    """Read a CoNLL-U sidecar keyed by ``(record_id, side)``.

    Multiword-token ranges (``3-4``) and empty nodes (``5.1``) are skipped.
    """
    out: dict[tuple[str, str], ParsedSentence] = {}
    comments: dict[str, str] = {}
    rows: list = []
    block_start = 1
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            if rows:
                _flush_block(comments, rows, f"{path.name}:{block_start}", out)
            elif comments:
                raise CorpusError(f"{path.name}:{block_start}: sentence block without tokens")
            comments, rows = {}, []
            block_start = lineno + 1
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                comments[key.strip()] = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise CorpusError(f"{path.name}:{lineno}: expected 10 columns, got {len(cols)}")
        if "-" in cols[0] or "." in cols[0]:
            continue
        try:
            idx = int(cols[0])
            head = int(cols[6])
        except ValueError:
            raise CorpusError(f"{path.name}:{lineno}: non-integer ID or HEAD") from None
        rows.append((lineno, idx, cols[1], head))
    if rows:
        _flush_block(comments, rows, f"{path.name}:{block_start}", out)
    return out


def write_conllu(parses: Iterable[ParsedSentence], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for parse in parses:
            fh.write(f"# sent_id = {parse.record_id}/{parse.side}\n")
            for i, (form, head) in enumerate(parse.tokens, start=1):
                deprel = "root" if head == 0 else "dep"
                fh.write(f"{i}\t{form}\t_\t_\t_\t_\t{head}\t{deprel}\t_\t_\n")
            fh.write("\n")


def load_lexicon(path, kind: str) -> Lexicon:
    """Read a ``word<TAB>value`` file; later duplicates overwrite earlier ones."""
    entries: dict[str, float] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            word, sep, value = line.partition("\t")
            where = f"{path.name}:{lineno}"
            if not sep:
                raise CorpusError(f"{where}: expected word<TAB>value")
            word = word.strip().lower()
            if not word:
                raise CorpusError(f"{where}: empty word field")
            try:
                number = float(value)
            except ValueError:
                raise CorpusError(f"{where}: non-numeric value {value!r}") from None
            if not math.isfinite(number):
                raise CorpusError(f"{where}: non-numeric value {value!r}")
            entries[word] = number
    try:
        return make_lexicon(kind, entries)
    except CorpusError as exc:
        raise CorpusError(f"{path.name}: {exc}") from None


def write_lexicon(lexicon: Lexicon, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for word, value in lexicon.entries.items():
            text = str(int(value)) if float(value).is_integer() else repr(float(value))
            fh.write(f"{word}\t{text}\n")
