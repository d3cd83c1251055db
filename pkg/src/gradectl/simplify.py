"""Generator adapters that turn a prefixed input into simplified text.

Every adapter exposes ``simplify(request) -> SimplifierResponse`` and
``simplify_batch(requests) -> list`` (responses or exceptions, in request
order).
"""

from __future__ import annotations

import json
import logging
import math
import re
import shlex
import subprocess
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import textstats
from .control import (
    AvgGradeTable,
    ControlError,
    ControlVector,
    parse_control_prefix,
    parse_grade_prefix,
    quantize,
)
from .corpus import Lexicon

log = logging.getLogger(__name__)

ADAPTERS = ("replay", "external", "rule")


class SimplifierError(RuntimeError):
    pass


class SimplifierTimeout(SimplifierError):
    pass


class ProtocolError(SimplifierError):
    pass


@dataclass(frozen=True)
class SimplifierRequest:
    id: str
    prefixed_input: str
    timeout: float = 30.0

    def __post_init__(self):
        if not self.prefixed_input:
            raise ValueError(f"request {self.id!r}: empty input")


@dataclass(frozen=True)
class SimplifierResponse:
    id: str
    output: str
    latency: float
    adapter: str


class _Adapter:
    adapter = ""

    def simplify(self, request: SimplifierRequest) -> SimplifierResponse:
        raise NotImplementedError

    def simplify_batch(self, requests: Sequence[SimplifierRequest]) -> list:
        out = []
        for req in requests:
            try:
                out.append(self.simplify(req))
            except SimplifierError as exc:
                out.append(exc)
        return out

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------------------
# replay


class ReplaySimplifier(_Adapter):
    """Return pre-generated outputs verbatim."""

    adapter = "replay"

    def __init__(self, outputs: dict[str, str]):
        self.outputs = dict(outputs)

    @classmethod
    def from_file(cls, path) -> "ReplaySimplifier":
        """JSONL with ``{"id", "output"}`` (or dataset lines carrying ``system_output``)."""
        outputs: dict[str, str] = {}
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    raise SimplifierError(f"{path.name}:{lineno}: malformed line") from None
                text = obj.get("output", obj.get("system_output"))
                if "id" not in obj or not isinstance(text, str):
                    raise SimplifierError(f"{path.name}:{lineno}: expected 'id' and 'output'")
                key = str(obj["id"])
                if key in outputs:
                    raise SimplifierError(f"{path.name}:{lineno}: duplicate id {key!r}")
                outputs[key] = text
        return cls(outputs)

    def simplify(self, request):
        start = time.perf_counter()
        try:
            text = self.outputs[request.id]
        except KeyError:
            raise SimplifierError(f"unknown id {request.id!r}") from None
        return SimplifierResponse(request.id, text, time.perf_counter() - start, self.adapter)


# ---------------------------------------------------------------------------
# external: subprocess line protocol


class SubprocessSimplifier(_Adapter):
    """Talk to a child process over JSON lines.

    Requests ``{"id", "input"}`` go to the child's stdin; responses
    ``{"id", "output"}`` are read from stdout in any order and matched by id.
    Up to ``max_in_flight`` requests are outstanding in ``simplify_batch``.
    """

    adapter = "external"

    def __init__(self, command, max_in_flight: int = 16):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.max_in_flight = max(1, int(max_in_flight))
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            encoding="utf-8",
            bufsize=1,
        )
        self._lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._pending: dict[str, tuple[Future, float]] = {}
        self._expired: set[str] = set()
        self._dead: SimplifierError | None = None
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _fail_all(self, exc: SimplifierError) -> None:
        with self._lock:
            pending, self._pending = self._pending, {}
        for fut, _ in pending.values():
            if not fut.done():
                fut.set_exception(exc)

    def _read_loop(self) -> None:
        for line in self._proc.stdout:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rid, output = str(obj["id"]), obj["output"]
                if not isinstance(output, str):
                    raise TypeError
            except (json.JSONDecodeError, KeyError, TypeError):
                self._fail_all(ProtocolError(f"malformed response line: {line.strip()[:80]!r}"))
                continue
            with self._lock:
                entry = self._pending.pop(rid, None)
                late = rid in self._expired
                self._expired.discard(rid)
            if entry is None:
                if not late:
                    self._fail_all(ProtocolError(f"response for unknown id {rid!r}"))
                continue
            fut, sent = entry
            fut.set_result(SimplifierResponse(rid, output, time.perf_counter() - sent, self.adapter))
        code = self._proc.wait()
        self._dead = SimplifierError(f"simplifier process exited with code {code}")
        self._fail_all(self._dead)

    def submit(self, request: SimplifierRequest) -> Future:
        fut: Future = Future()
        if self._dead is not None:
            fut.set_exception(self._dead)
            return fut
        line = json.dumps({"id": request.id, "input": request.prefixed_input}, ensure_ascii=False)
        with self._lock:
            if request.id in self._pending:
                raise ProtocolError(f"id {request.id!r} is already in flight")
            self._pending[request.id] = (fut, time.perf_counter())
        try:
            with self._write_lock:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            with self._lock:
                self._pending.pop(request.id, None)
            fut.set_exception(self._dead or SimplifierError("simplifier process is not accepting input"))
        return fut

    def simplify(self, request):
        fut = self.submit(request)
        try:
            return fut.result(timeout=request.timeout)
        except FutureTimeout:
            with self._lock:
                if self._pending.pop(request.id, None) is not None:
                    self._expired.add(request.id)
            raise SimplifierTimeout(f"request {request.id!r} timed out after {request.timeout}s") from None

    def simplify_batch(self, requests):
        def one(req):
            try:
                return self.simplify(req)
            except SimplifierError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(one, requests))

    @property
    def returncode(self):
        return self._proc.poll()

    def close(self) -> None:
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._reader.join(timeout=5)


# ---------------------------------------------------------------------------
# external: HTTP


class HttpSimplifier(_Adapter):
    """POST ``{"id", "input"}`` to ``<url>/simplify`` and expect ``{"id", "output"}``."""

    adapter = "external"

    def __init__(self, url: str, max_in_flight: int = 16):
        self.url = url.rstrip("/") + "/simplify"
        self.max_in_flight = max(1, int(max_in_flight))

    def _post(self, request: SimplifierRequest) -> SimplifierResponse:
        body = json.dumps({"id": request.id, "input": request.prefixed_input}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        start = time.perf_counter()
        try:
            with urllib.request.urlopen(req, timeout=request.timeout) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as exc:
            raise SimplifierError(f"HTTP {exc.code} from {self.url}") from None
        except (TimeoutError, OSError) as exc:
            if isinstance(exc, TimeoutError) or "timed out" in str(exc):
                raise SimplifierTimeout(f"request {request.id!r} timed out after {request.timeout}s") from None
            raise SimplifierError(f"cannot reach {self.url}: {exc}") from None
        try:
            obj = json.loads(payload)
            rid, output = str(obj["id"]), obj["output"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise ProtocolError("malformed response") from None
        if rid != request.id:
            raise ProtocolError(f"id mismatch: sent {request.id!r}, got {rid!r}")
        return SimplifierResponse(rid, output, time.perf_counter() - start, self.adapter)

    def simplify(self, request):
        # the socket timeout bounds each read; the outer wait bounds the whole request
        pool = ThreadPoolExecutor(max_workers=1)
        try:
            return pool.submit(self._post, request).result(timeout=request.timeout)
        except FutureTimeout:
            raise SimplifierTimeout(f"request {request.id!r} timed out after {request.timeout}s") from None
        finally:
            pool.shutdown(wait=False)

    def simplify_batch(self, requests):
        def one(req):
            try:
                return self.simplify(req)
            except SimplifierError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(one, requests))


# ---------------------------------------------------------------------------
# rule-based stand-in

_PIECE_RE = re.compile(textstats.WORD_RE.pattern + r"|[^\w\s]")
_TERMINAL = set(".!?")


def _split_sentences(text: str) -> list[list[str]]:
    return [_PIECE_RE.findall(text[a:b]) for a, b in textstats.sentence_spans(text)]


def _is_word(piece: str) -> bool:
    return textstats.WORD_RE.fullmatch(piece) is not None


def _detok(pieces: list[str]) -> str:
    out = ""
    for p in pieces:
        if out and _is_word(p):
            out += " "
        out += p
    return out


def _body_tail(pieces: list[str]) -> tuple[list[str], list[str]]:
    end = len(pieces)
    while end > 0 and not _is_word(pieces[end - 1]):
        end -= 1
    tail = pieces[end:]
    if not any(p in _TERMINAL for p in tail):
        tail = tail + ["."]
    return pieces[:end], tail


def _capitalize(word: str) -> str:
    return word[:1].upper() + word[1:]


class RuleSimplifier(_Adapter):
    """Deterministic controllable stand-in for a neural generator.

    Honors W (trailing-word deletion), WR (frequent-word substitution) and DTD
    (sentence splitting at a comma). Grade-prefixed inputs are mapped to
    controls through ``grade_table`` when one is given and echoed otherwise.
    """

    adapter = "rule"

    def __init__(self, freq: Lexicon, grade_table: AvgGradeTable | None = None):
        if freq.kind != "frequency_rank":
            raise ValueError("rule simplifier needs a frequency-rank lexicon")
        self.freq = freq
        self.grade_table = grade_table
        best: dict[str, tuple[float, str]] = {}
        for word, rank in freq.entries.items():
            if not textstats.is_alphabetic(word):
                continue
            key = word[0]
            if key not in best or (rank, word) < best[key]:
                best[key] = (rank, word)
        self._replacement = {k: w for k, (_, w) in best.items()}

    def controls_for(self, prefixed_input: str) -> tuple[ControlVector, str]:
        try:
            return parse_control_prefix(prefixed_input)
        except ControlError:
            pass
        try:
            sg, tg, source = parse_grade_prefix(prefixed_input)
        except ControlError:
            return ControlVector.ones(), prefixed_input
        if self.grade_table is None:
            return ControlVector.ones(), source
        return quantize(self.grade_table.lookup(sg, tg)), source

    def rewrite(self, source: str, v: ControlVector) -> str:
        return rule_simplify(source, v, self.freq, replacements=self._replacement)

    def simplify(self, request):
        start = time.perf_counter()
        v, source = self.controls_for(request.prefixed_input)
        return SimplifierResponse(request.id, self.rewrite(source, v), time.perf_counter() - start, self.adapter)


def _replacement_table(freq: Lexicon) -> dict[str, str]:
    return RuleSimplifier(freq)._replacement


def rule_simplify(source: str, v: ControlVector, freq: Lexicon, replacements=None) -> str:
    """Apply the deterministic W -> WR -> DTD rewrite pipeline to ``source``."""
    drop = v.w < 1.0
    lexical = v.wr < 1.0
    split = v.dtd > 1.0
    if not (drop or lexical or split):
        return source
    sentences = _split_sentences(source)
    if not sentences:
        return source
    parts = [_body_tail(s) for s in sentences]

    if drop:
        trimmed = []
        for body, tail in parts:
            positions = [i for i, p in enumerate(body) if _is_word(p)]
            keep = max(1, math.floor(v.w * len(positions) + 1e-9))
            if keep < len(positions):
                body = body[: positions[keep - 1] + 1]
            trimmed.append((body, tail))
        parts = trimmed

    if lexical:
        if replacements is None:
            replacements = _replacement_table(freq)
        parts = _substitute(parts, v.wr, freq, replacements, source)

    if split:
        out = []
        for body, tail in parts:
            commas = [i for i, p in enumerate(body) if p == ","]
            cut = commas[(len(commas) - 1) // 2] if commas else None
            left = body[:cut] if cut is not None else []
            right = body[cut + 1:] if cut is not None else []
            if any(map(_is_word, left)) and any(map(_is_word, right)):
                k = next(i for i, p in enumerate(right) if _is_word(p))
                right = right[:k] + [_capitalize(right[k])] + right[k + 1:]
                out.append((left, ["."]))
                out.append((right, tail))
            else:
                out.append((body, tail))
        parts = out

    return " ".join(_detok(body + tail) for body, tail in parts)


def _substitute(parts, wr, freq, replacements, source):
    src_wr = textstats.word_rank(textstats.words(source), freq)
    if src_wr == 0:
        return parts
    target = wr * src_wr
    bodies = [list(body) for body, _ in parts]

    def current():
        return textstats.word_rank([p for b in bodies for p in b if _is_word(p)], freq)

    if current() <= target:
        return parts
    candidates = []
    for si, body in enumerate(bodies):
        words = [p for p in body if _is_word(p) and textstats.is_alphabetic(p)]
        if not words:
            continue
        logs = [math.log(freq.lookup(p)) for p in words]
        q3 = float(np.percentile(logs, 75))
        for pi, p in enumerate(body):
            if _is_word(p) and textstats.is_alphabetic(p):
                lr = math.log(freq.lookup(p))
                if lr > q3:
                    candidates.append((-lr, si, pi))
    for _, si, pi in sorted(candidates):
        word = bodies[si][pi]
        repl = replacements.get(word[0].lower())
        if repl is None or freq.lookup(repl) >= freq.lookup(word):
            continue
        bodies[si][pi] = _capitalize(repl) if word[0].isupper() else repl
        if current() <= target:
            break
    return [(b, tail) for b, (_, tail) in zip(bodies, parts)]


# ---------------------------------------------------------------------------


def make_simplifier(spec: str, freq: Lexicon | None = None, grade_table: AvgGradeTable | None = None,
                    jobs: int = 16):
    """Build an adapter from ``replay:<file> | exec:<cmd> | http:<url> | rule``."""
    kind, _, arg = spec.partition(":")
    if kind == "rule":
        if freq is None:
            raise SimplifierError("rule simplifier needs a frequency lexicon")
        return RuleSimplifier(freq, grade_table)
    if kind == "replay":
        if not arg:
            raise SimplifierError("replay simplifier needs an outputs file")
        return ReplaySimplifier.from_file(arg)
    if kind == "exec":
        if not arg:
            raise SimplifierError("exec simplifier needs a command")
        return SubprocessSimplifier(arg, max_in_flight=jobs)
    if kind in ("http", "https"):
        url = arg if arg.startswith(("http://", "https://")) else f"{kind}:{arg}"
        return HttpSimplifier(url, max_in_flight=jobs)
    raise SimplifierError(f"unknown simplifier spec {spec!r}")
