"""Tokenization, truncation and JSONL corpus ingestion.

Tokens are lowercased but keep character offsets into the original text, so
anything that needs the raw casing can slice the source string.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

MAX_ARTICLE = 400
MAX_SUMMARY = 90

_NUMBER_WORDS = (
    "zero|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|thirteen|"
    "fourteen|fifteen|sixteen|seventeen|eighteen|nineteen|twenty|thirty|forty|"
    "fifty|sixty|seventy|eighty|ninety|hundred|thousand|million|billion|dozen"
)
_DIGITS = r"\d+(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?"
_COMPOUND_HEAD = rf"(?:{_DIGITS}|(?:{_NUMBER_WORDS})(?![^\W\d_]))"

# Order matters: the first alternative that matches at a position wins.
_TOKEN_RE = re.compile(
    rf"""
    (?P<time>\d{{1,2}}:\d{{2}}(?!\d))
    | (?P<money>[£$€](?:{_DIGITS})(?:bn|m|k)?(?![^\W_]))
    | (?P<compound>{_COMPOUND_HEAD}(?:-[^\W_]+)+)
    | (?P<number>(?:{_DIGITS})[^\W\d_]*)
    | (?P<word>[^\W_]+)
    | (?P<other>\S)
    """,
    re.VERBOSE | re.IGNORECASE,
)


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int


@dataclass
class CorpusRecord:
    """An (article, summary) pair; token lists are the working representation."""

    id: str
    article: list[Token]
    summary: list[Token]
    article_text: str = ""
    summary_text: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def article_words(self) -> list[str]:
        return [t.text for t in self.article]

    @property
    def summary_words(self) -> list[str]:
        return [t.text for t in self.summary]

    @classmethod
    def from_text(cls, id: str, article: str, summary: str) -> "CorpusRecord":
        return cls(id, tokenize(article), tokenize(summary), article, summary)


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into lowercased tokens.

    Numbers keep their internal punctuation ("4.2", "6,500", "16:45"), a
    currency symbol stays attached to its amount ("£6,500") and hyphenated
    compounds led by a numeral ("four-car") stay whole.  Everything else is
    split on whitespace and punctuation.
    """
    return [
        Token(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)
    ]


def words(text: str) -> list[str]:
    return [t.text for t in tokenize(text)]


def truncate(
    record: CorpusRecord, max_article: int = MAX_ARTICLE, max_summary: int = MAX_SUMMARY
) -> CorpusRecord:
    if max_article < 1 or max_summary < 1:
        raise ValueError("truncation limits must be >= 1")
    if len(record.article) <= max_article and len(record.summary) <= max_summary:
        return record
    return CorpusRecord(
        record.id,
        record.article[:max_article],
        record.summary[:max_summary],
        record.article_text,
        record.summary_text,
        dict(record.meta),
    )


class JsonlError(ValueError):
    """Malformed JSONL input; carries the 1-based line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(lineno, obj)`` for each data line; header lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise JsonlError(path, lineno, "expected a JSON object")
            if "_header" in obj:
                continue
            yield lineno, obj


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False) + "\n"


def write_jsonl(path: str | Path, rows: Iterable[dict], header: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write(dumps_line({"_header": header}))
        for row in rows:
            fh.write(dumps_line(row))


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    records = []
    for lineno, obj in iter_jsonl(path):
        missing = [k for k in ("id", "article", "summary") if k not in obj]
        if missing:
            raise JsonlError(path, lineno, f"missing field(s): {', '.join(missing)}")
        if not all(isinstance(obj[k], str) for k in ("article", "summary")):
            raise JsonlError(path, lineno, "article and summary must be strings")
        records.append(CorpusRecord.from_text(str(obj["id"]), obj["article"], obj["summary"]))
    return records


def write_corpus(path: str | Path, records: Iterable[CorpusRecord], header: dict | None = None) -> None:
    write_jsonl(
        path,
        ({"id": r.id, "article": r.article_text, "summary": r.summary_text} for r in records),
        header,
    )
