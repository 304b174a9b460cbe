"""Weakly supervised training data from (article, summary) pairs.

Every gold summary yields a VERIFIED instance.  Its UNVERIFIED sibling is made
by swapping summary quantities for same-type quantities taken from the
article.  Records that admit no swap produce neither instance, which keeps the
two classes exactly balanced.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .quantities import QuantitySpan, QuantityType, tag_quantities
from .text import CorpusRecord, Token


class Tag(enum.IntEnum):
    B_V = 0
    I_V = 1
    B_U = 2
    I_U = 3
    O = 4

    @property
    def label(self) -> str:
        return self.name.replace("_", "-")

    @classmethod
    def parse(cls, label: str) -> "Tag":
        return cls[label.replace("-", "_")]


NUM_TAGS = len(Tag)
TAG_NAMES = tuple(t.label for t in Tag)


class Verdict(str, enum.Enum):
    VERIFIED = "VERIFIED"
    UNVERIFIED = "UNVERIFIED"


class MalformedTags(ValueError):
    pass


def check_bio(tags: Sequence[int]) -> None:
    """Raise ``MalformedTags`` unless ``tags`` is a legal BIO sequence."""
    prev = None
    for j, t in enumerate(tags):
        t = Tag(t)
        if t == Tag.I_V and prev not in (Tag.B_V, Tag.I_V):
            raise MalformedTags(f"I-V at position {j} does not continue a V entity")
        if t == Tag.I_U and prev not in (Tag.B_U, Tag.I_U):
            raise MalformedTags(f"I-U at position {j} does not continue a U entity")
        prev = t


def mask_from_tags(tags: Sequence[int]) -> list[int]:
    return [0 if t == Tag.O else 1 for t in tags]


@dataclass
class LabeledInstance:
    record: CorpusRecord
    y: list[int]
    m: list[int]
    z: Verdict
    # (qtype, start, end) of every entity span in the summary, U or V
    spans: list[tuple[QuantityType, int, int]] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.record.summary)
        if not (len(self.y) == len(self.m) == n):
            raise ValueError(f"label lengths {len(self.y)}/{len(self.m)} != summary length {n}")
        check_bio(self.y)
        if self.m != mask_from_tags(self.y):
            raise ValueError("m must be 1 exactly where y is not O")
        has_u = any(t in (Tag.B_U, Tag.I_U) for t in self.y)
        if self.z == Verdict.VERIFIED and has_u:
            raise ValueError("VERIFIED instance carries U tags")
        if self.z == Verdict.UNVERIFIED and Tag.B_U not in self.y:
            raise ValueError("UNVERIFIED instance has no B-U tag")

    @property
    def variant(self) -> str:
        return self.z.value.lower()

    def to_json(self) -> dict:
        return {
            "id": self.record.id,
            "variant": self.variant,
            "article_tokens": self.record.article_words,
            "summary_tokens": self.record.summary_words,
            "y": [Tag(t).label for t in self.y],
            "m": list(self.m),
            "z": self.z.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledInstance":
        def toks(words):
            out, pos = [], 0
            for w in words:
                out.append(Token(w, pos, pos + len(w)))
                pos += len(w) + 1
            return out

        art, summ = obj["article_tokens"], obj["summary_tokens"]
        rec = CorpusRecord(str(obj["id"]), toks(art), toks(summ), " ".join(art), " ".join(summ))
        y = [Tag.parse(t) for t in obj["y"]]
        return cls(rec, [int(t) for t in y], [int(v) for v in obj["m"]], Verdict(obj["z"]))


class Discard:
    """Marker returned by ``perturb`` when no summary quantity can be swapped."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "DISCARD"

    def __bool__(self) -> bool:
        return False


DISCARD = Discard()


def _bio(n: int, spans: Iterable[tuple[int, int, bool]]) -> list[int]:
    y = [int(Tag.O)] * n
    for start, end, verified in spans:
        y[start] = Tag.B_V if verified else Tag.B_U
        for j in range(start + 1, end):
            y[j] = Tag.I_V if verified else Tag.I_U
    return [int(t) for t in y]


def label_verified(record: CorpusRecord) -> LabeledInstance:
    spans = tag_quantities(record.summary)
    y = _bio(len(record.summary), ((s.token_start, s.token_end, True) for s in spans))
    return LabeledInstance(
        record, y, mask_from_tags(y), Verdict.VERIFIED,
        [(s.qtype, s.token_start, s.token_end) for s in spans],
    )


def _record_key(record_id: str) -> int:
    return int.from_bytes(hashlib.sha256(record_id.encode("utf-8")).digest()[:8], "little")


def span_rng(seed: int, record_id: str, span_index: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, record, span); order independent."""
    key = [seed & 0xFFFFFFFFFFFFFFFF, _record_key(record_id)]
    return np.random.Generator(np.random.Philox(key=key, counter=[span_index, 0, 0, 0]))


def replacement_pool(span: QuantitySpan, article_spans: Sequence[QuantitySpan]) -> list[QuantitySpan]:
    """Article spans of the same type but a different value, one per value."""
    seen: set[str] = set()
    pool = []
    for a in article_spans:
        if a.qtype != span.qtype or a.normalized == span.normalized or a.normalized in seen:
            continue
        seen.add(a.normalized)
        pool.append(a)
    return pool


def perturb(record: CorpusRecord, rng_seed: int, policy: str = "all") -> LabeledInstance | Discard:
    """Build the UNVERIFIED counterpart of ``record``'s summary.

    ``policy="all"`` swaps every summary quantity that has a candidate;
    ``policy="one"`` swaps a single randomly chosen one.
    """
    if policy not in ("all", "one"):
        raise ValueError(f"unknown perturbation policy {policy!r}")
    summary_spans = tag_quantities(record.summary)
    article_spans = tag_quantities(record.article)
    pools = [replacement_pool(s, article_spans) for s in summary_spans]
    replaceable = [k for k, pool in enumerate(pools) if pool]
    if not replaceable:
        return DISCARD
    if policy == "one":
        pick = span_rng(rng_seed, record.id, len(summary_spans)).integers(len(replaceable))
        replaceable = [replaceable[int(pick)]]

    choices: dict[int, QuantitySpan] = {}
    for k in replaceable:
        pool = pools[k]
        choices[k] = pool[int(span_rng(rng_seed, record.id, k).integers(len(pool)))]

    return _splice(record, summary_spans, choices)


def _splice(record: CorpusRecord, summary_spans: Sequence[QuantitySpan],
            choices: dict[int, QuantitySpan]) -> LabeledInstance:
    src = record.summary_text
    old = record.summary
    have_text = bool(src) and all(src[t.char_start:t.char_end].lower() == t.text for t in old)
    new_tokens: list[Token] = []
    labeled: list[tuple[int, int, bool]] = []
    spans_out: list[tuple[QuantityType, int, int]] = []
    pieces: list[str] = []
    cursor = 0  # position in src
    out_len = 0

    def emit(text: str, raw: str) -> None:
        nonlocal out_len
        new_tokens.append(Token(text, out_len, out_len + len(raw)))
        pieces.append(raw)
        out_len += len(raw)

    def gap(upto_char: int) -> None:
        nonlocal cursor, out_len
        sep = src[cursor:upto_char] if have_text else (" " if new_tokens else "")
        pieces.append(sep)
        out_len += len(sep)
        cursor = upto_char

    starts = {s.token_start: k for k, s in enumerate(summary_spans)}
    j = 0
    while j < len(old):
        k = starts.get(j)
        if k is not None and k in choices:
            span = summary_spans[k]
            repl = choices[k]
            gap(old[j].char_start)
            begin = len(new_tokens)
            art = record.article[repl.token_start:repl.token_end]
            for idx, tok in enumerate(art):
                if idx:
                    sep = record.article_text[art[idx - 1].char_end:tok.char_start] if record.article_text else " "
                    pieces.append(sep or "")
                    out_len += len(sep or "")
                raw = record.article_text[tok.char_start:tok.char_end] if record.article_text else tok.text
                emit(tok.text, raw)
            labeled.append((begin, len(new_tokens), False))
            spans_out.append((span.qtype, begin, len(new_tokens)))
            cursor = old[span.token_end - 1].char_end
            j = span.token_end
            continue
        if k is not None:
            span = summary_spans[k]
            begin = len(new_tokens)
            labeled.append((begin, begin + len(span), True))
            spans_out.append((span.qtype, begin, begin + len(span)))
        gap(old[j].char_start)
        raw = src[old[j].char_start:old[j].char_end] if have_text else old[j].text
        emit(old[j].text, raw)
        cursor = old[j].char_end
        j += 1
    if have_text:
        pieces.append(src[cursor:])

    text = "".join(pieces)
    new_record = CorpusRecord(record.id, list(record.article), new_tokens,
                              record.article_text, text, dict(record.meta))
    y = _bio(len(new_tokens), labeled)
    return LabeledInstance(new_record, y, mask_from_tags(y), Verdict.UNVERIFIED, spans_out)


def build_dataset(corpus: Iterable[CorpusRecord], rng_seed: int,
                  policy: str = "all") -> list[LabeledInstance]:
    """VERIFIED/UNVERIFIED pairs for every perturbable record, sorted by id."""
    out: list[LabeledInstance] = []
    for record in sorted(corpus, key=lambda r: r.id):
        negative = perturb(record, rng_seed, policy)
        if isinstance(negative, Discard):
            continue
        out.append(label_verified(record))
        out.append(negative)
    return out


def split_dataset(instances: Sequence[LabeledInstance], fractions=(0.8, 0.1, 0.1),
                  seed: int = 0) -> tuple[list[LabeledInstance], ...]:
    """Split by record id so VERIFIED/UNVERIFIED siblings stay together."""
    ids = sorted({inst.record.id for inst in instances})
    order = np.random.default_rng(seed).permutation(len(ids))
    ids = [ids[i] for i in order]
    bounds = np.cumsum([0] + [round(f * len(ids)) for f in fractions[:-1]])
    groups = {}
    for g, (lo, hi) in enumerate(zip(bounds, list(bounds[1:]) + [len(ids)])):
        for rid in ids[lo:hi]:
            groups[rid] = g
    parts: list[list[LabeledInstance]] = [[] for _ in fractions]
    for inst in instances:
        parts[groups[inst.record.id]].append(inst)
    return tuple(parts)
