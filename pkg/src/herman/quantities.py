"""Rule-based recognizer for quantity entities.

Seven entity types are recognized with a small fixed grammar over lowercased
tokens.  Matching is longest-match, left to right; when two types match the
same number of tokens the one earlier in ``PRECEDENCE`` wins.

Grammar summary (``NUM`` is a numeral phrase: digits such as ``6,500`` or
``4.2``, or number words such as ``twenty-five`` / ``three million``; ``MOD``
is an optional leading modifier such as ``more than`` or ``about``):

========  ==============================================================
PERCENT   MOD NUM (``%`` | ``percent`` | ``per cent``)
MONEY     MOD ``£6,500`` [scale] | MOD ``$`` NUM [scale] | MOD NUM currency-word
TIME      ``16:45`` | NUM (``am``|``pm``) | ``10pm`` | ``midnight`` | ``noon``
DATE      weekday | [day] month [year] | month day [year] | year 1900-2099 |
          [``the``] decade (``1980s``) | yesterday/today/tomorrow/tonight
QUANTITY  MOD NUM unit | ``5km``
ORDINAL   ``first`` ... ``twentieth`` | ``21st``
CARDINAL  MOD NUM | several/hundreds/thousands/millions | ``four-car``
========  ==============================================================
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Callable, Sequence

from .text import Token


class QuantityType(str, enum.Enum):
    DATE = "DATE"
    TIME = "TIME"
    PERCENT = "PERCENT"
    MONEY = "MONEY"
    QUANTITY = "QUANTITY"
    ORDINAL = "ORDINAL"
    CARDINAL = "CARDINAL"


PRECEDENCE = (
    QuantityType.PERCENT,
    QuantityType.MONEY,
    QuantityType.TIME,
    QuantityType.DATE,
    QuantityType.QUANTITY,
    QuantityType.ORDINAL,
    QuantityType.CARDINAL,
)


@dataclass(frozen=True)
class QuantitySpan:
    qtype: QuantityType
    token_start: int
    token_end: int
    surface: str
    normalized: str

    def __len__(self) -> int:
        return self.token_end - self.token_start

    def shifted(self, offset: int) -> "QuantitySpan":
        return QuantitySpan(
            self.qtype, self.token_start + offset, self.token_end + offset,
            self.surface, self.normalized,
        )

    def to_json(self) -> dict:
        return {
            "type": self.qtype.value,
            "start": self.token_start,
            "end": self.token_end,
            "surface": self.surface,
            "normalized": self.normalized,
        }


# --- lexicons ---------------------------------------------------------------

_UNITS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
    "thirteen": 13, "fourteen": 14, "fifteen": 15, "sixteen": 16,
    "seventeen": 17, "eighteen": 18, "nineteen": 19,
}
_TENS = {
    "twenty": 20, "thirty": 30, "forty": 40, "fifty": 50, "sixty": 60,
    "seventy": 70, "eighty": 80, "ninety": 90,
}
_SCALES = {"hundred": 100, "thousand": 1000, "million": 10**6, "billion": 10**9}
_MONEY_SCALES = {**_SCALES, "m": 10**6, "bn": 10**9, "k": 1000}
QUANTIFIERS = frozenset({"several", "hundreds", "thousands", "millions"})

MODIFIERS = (
    ("more", "than"), ("at", "least"), ("at", "most"), ("up", "to"),
    ("over",), ("about",), ("nearly",), ("almost",),
)

ORDINAL_WORDS = {
    "first": 1, "second": 2, "third": 3, "fourth": 4, "fifth": 5, "sixth": 6,
    "seventh": 7, "eighth": 8, "ninth": 9, "tenth": 10, "eleventh": 11,
    "twelfth": 12, "thirteenth": 13, "fourteenth": 14, "fifteenth": 15,
    "sixteenth": 16, "seventeenth": 17, "eighteenth": 18, "nineteenth": 19,
    "twentieth": 20,
}

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")
MONTHS = {
    "january": "january", "jan": "january", "february": "february", "feb": "february",
    "march": "march", "april": "april", "apr": "april", "may": "may", "june": "june",
    "july": "july", "august": "august", "aug": "august", "september": "september",
    "sept": "september", "sep": "september", "october": "october", "oct": "october",
    "november": "november", "nov": "november", "december": "december", "dec": "december",
}
# Month names that are also common English words only count next to a numeral.
_AMBIGUOUS_MONTHS = frozenset({"may", "march", "jan", "apr", "aug", "sep", "sept", "oct", "nov", "dec", "feb"})
RELATIVE_DAYS = frozenset({"yesterday", "today", "tomorrow", "tonight"})

CURRENCY_SYMBOLS = "£$€"
_CURRENCY_WORDS = {
    "pounds": "£", "pound": "£", "dollars": "$", "dollar": "$",
    "euros": "€", "euro": "€", "pence": "p", "cents": "c",
}

_UNIT_CANON = {
    "mile": "miles", "miles": "miles", "km": "km", "kilometre": "km", "kilometres": "km",
    "kilometer": "km", "kilometers": "km", "kg": "kg", "kilogram": "kg", "kilograms": "kg",
    "kilos": "kg", "tonne": "tonnes", "tonnes": "tonnes", "ton": "tons", "tons": "tons",
    "metre": "metres", "metres": "metres", "meter": "metres", "meters": "metres",
    "cm": "cm", "centimetres": "cm", "mm": "mm", "millimetres": "mm",
    "foot": "feet", "feet": "feet", "ft": "feet", "inch": "inches", "inches": "inches",
    "yard": "yards", "yards": "yards", "litre": "litres", "litres": "litres",
    "liter": "litres", "liters": "litres", "gallon": "gallons", "gallons": "gallons",
    "mph": "mph", "kmh": "kmh", "acre": "acres", "acres": "acres", "hectare": "hectares",
    "hectares": "hectares", "gram": "grams", "grams": "grams", "lb": "lb", "lbs": "lb",
    "ounce": "ounces", "ounces": "ounces", "sq": "sq",
}

_DIGITS_RE = re.compile(r"^(?:\d+(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)$")
_CLOCK_RE = re.compile(r"^([01]?\d|2[0-3]):([0-5]\d)$")
_GLUED_TIME_RE = re.compile(r"^(\d{1,2})(?:[.:](\d{2}))?(am|pm)$")
_MONEY_TOKEN_RE = re.compile(r"^([£$€])(\d+(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)(bn|m|k)?$")
_ORDINAL_DIGIT_RE = re.compile(r"^(\d+)(st|nd|rd|th)$")
_DECADE_RE = re.compile(r"^(1[89]|20)\d0s$")
_YEAR_RE = re.compile(r"^(19|20)\d\d$")
_GLUED_UNIT_RE = re.compile(r"^(\d+(?:\.\d+)?)([a-z]+)$")


# --- numeral phrases --------------------------------------------------------

def word_value(tok: str) -> int | None:
    """Value of a single number word, including ``twenty-five`` forms."""
    if tok in _UNITS:
        return _UNITS[tok]
    if tok in _TENS:
        return _TENS[tok]
    if tok == "dozen":
        return 12
    if tok in _SCALES:
        return _SCALES[tok]
    head, sep, tail = tok.partition("-")
    if sep and head in _TENS and tail in _UNITS and 0 < _UNITS[tail] < 10:
        return _TENS[head] + _UNITS[tail]
    return None


def digits_value(tok: str) -> Decimal | None:
    if _DIGITS_RE.match(tok):
        return Decimal(tok.replace(",", ""))
    return None


def numeral_at(toks: Sequence[str], i: int) -> tuple[int, Decimal] | None:
    """Longest numeral phrase starting at ``i`` as ``(length, value)``."""
    if i >= len(toks):
        return None
    first = toks[i]
    value = digits_value(first)
    if value is None:
        w = word_value(first)
        if w is None:
            return None
        value = Decimal(w)
    length = 1
    total = Decimal(0)
    while i + length < len(toks):
        nxt = toks[i + length]
        if nxt == "dozen":
            value *= 12
            length += 1
            continue
        if nxt in _SCALES:
            scale = _SCALES[nxt]
            if scale == 100:
                value *= scale
            else:
                total += value * scale
                value = Decimal(0)
            length += 1
            continue
        w = word_value(nxt)
        # "two hundred five", never "five six"
        if w is not None and w < 100 and length > 1 and toks[i + length - 1] in _SCALES:
            value += w
            length += 1
            continue
        break
    return length, total + value


def format_number(value: Decimal) -> str:
    if value == value.to_integral_value():
        return str(int(value))
    return format(value.normalize(), "f")


def _modifier_len(toks: Sequence[str], i: int) -> int:
    for mod in MODIFIERS:
        if tuple(toks[i:i + len(mod)]) == mod:
            return len(mod)
    return 0


def _with_modifier(rule: Callable[[Sequence[str], int], int]) -> Callable[[Sequence[str], int], int]:
    def wrapped(toks: Sequence[str], i: int) -> int:
        k = _modifier_len(toks, i)
        if k:
            n = rule(toks, i + k)
            if n:
                return k + n
        return rule(toks, i)
    wrapped.__name__ = rule.__name__
    return wrapped


def _is_compound(tok: str) -> bool:
    if "-" not in tok:
        return False
    head = tok.split("-", 1)[0]
    if word_value(tok) is not None:
        return False
    return digits_value(head) is not None or word_value(head) is not None


# --- per-type rules: each returns the match length at i (0 = no match) ------

@_with_modifier
def _cardinal(toks: Sequence[str], i: int) -> int:
    if i >= len(toks):
        return 0
    if toks[i] in QUANTIFIERS or _is_compound(toks[i]):
        return 1
    num = numeral_at(toks, i)
    return num[0] if num else 0


@_with_modifier
def _percent(toks: Sequence[str], i: int) -> int:
    num = numeral_at(toks, i)
    if not num:
        return 0
    j = i + num[0]
    if j < len(toks) and toks[j] in ("%", "percent"):
        return num[0] + 1
    if tuple(toks[j:j + 2]) == ("per", "cent"):
        return num[0] + 2
    return 0


@_with_modifier
def _money(toks: Sequence[str], i: int) -> int:
    if i >= len(toks):
        return 0
    m = _MONEY_TOKEN_RE.match(toks[i])
    if m:
        if m.group(3) is None and i + 1 < len(toks) and toks[i + 1] in _MONEY_SCALES:
            return 2
        return 1
    if toks[i] in CURRENCY_SYMBOLS and len(toks[i]) == 1:
        num = numeral_at(toks, i + 1)
        if num:
            j = i + 1 + num[0]
            if j < len(toks) and toks[j] in ("m", "bn"):
                return num[0] + 2
            return num[0] + 1
        return 0
    num = numeral_at(toks, i)
    if num:
        j = i + num[0]
        if j < len(toks) and toks[j] in _CURRENCY_WORDS:
            return num[0] + 1
    return 0


def _time(toks: Sequence[str], i: int) -> int:
    if i >= len(toks):
        return 0
    tok = toks[i]
    if tok in ("midnight", "noon") or _CLOCK_RE.match(tok):
        return 1
    m = _GLUED_TIME_RE.match(tok)
    if m and 1 <= int(m.group(1)) <= 12:
        return 1
    if i + 1 < len(toks) and toks[i + 1] in ("am", "pm"):
        num = numeral_at(toks, i)
        if num and num[0] == 1 and 1 <= num[1] <= 12:
            return 2
    return 0


def _day_number(tok: str) -> int | None:
    m = _ORDINAL_DIGIT_RE.match(tok)
    if m:
        tok = m.group(1)
    if tok.isdigit() and 1 <= int(tok) <= 31 and len(tok) <= 2:
        return int(tok)
    return None


def _is_year(tok: str) -> bool:
    return bool(_YEAR_RE.match(tok))


def _date(toks: Sequence[str], i: int) -> int:
    if i >= len(toks):
        return 0
    tok = toks[i]
    if tok in WEEKDAYS or tok in RELATIVE_DAYS:
        return 1
    if _DECADE_RE.match(tok):
        return 1
    if tok == "the" and i + 1 < len(toks) and _DECADE_RE.match(toks[i + 1]):
        return 2
    best = 0
    # day [of] month [year]
    if _day_number(tok) is not None:
        j = i + 1
        if j < len(toks) and toks[j] == "of":
            j += 1
        if j < len(toks) and toks[j] in MONTHS:
            j += 1
            if j < len(toks) and _is_year(toks[j]):
                j += 1
            best = max(best, j - i)
    # month [day] [,] [year]
    if tok in MONTHS:
        j = i + 1
        has_num = False
        if j < len(toks) and _day_number(toks[j]) is not None:
            j += 1
            has_num = True
            if j + 1 < len(toks) and toks[j] == "," and _is_year(toks[j + 1]):
                j += 2
            elif j < len(toks) and _is_year(toks[j]):
                j += 1
        elif j < len(toks) and _is_year(toks[j]):
            j += 1
            has_num = True
        if has_num or tok not in _AMBIGUOUS_MONTHS:
            best = max(best, j - i)
    if _is_year(tok):
        best = max(best, 1)
    return best


@_with_modifier
def _quantity(toks: Sequence[str], i: int) -> int:
    if i >= len(toks):
        return 0
    m = _GLUED_UNIT_RE.match(toks[i])
    if m and m.group(2) in _UNIT_CANON:
        return 1
    num = numeral_at(toks, i)
    if num:
        j = i + num[0]
        if j < len(toks) and toks[j] == "square" and j + 1 < len(toks) and toks[j + 1] in _UNIT_CANON:
            return num[0] + 2
        if j < len(toks) and toks[j] in _UNIT_CANON:
            return num[0] + 1
    return 0


def _ordinal(toks: Sequence[str], i: int) -> int:
    if i >= len(toks):
        return 0
    tok = toks[i]
    return 1 if tok in ORDINAL_WORDS or _ORDINAL_DIGIT_RE.match(tok) else 0


_RULES = {
    QuantityType.PERCENT: _percent,
    QuantityType.MONEY: _money,
    QuantityType.TIME: _time,
    QuantityType.DATE: _date,
    QuantityType.QUANTITY: _quantity,
    QuantityType.ORDINAL: _ordinal,
    QuantityType.CARDINAL: _cardinal,
}


def match_at(toks: Sequence[str], i: int) -> tuple[QuantityType, int] | None:
    """Best ``(type, length)`` match starting exactly at ``i``."""
    best = None
    for qtype in PRECEDENCE:
        n = _RULES[qtype](toks, i)
        if n and (best is None or n > best[1]):
            best = (qtype, n)
    return best


def tag_quantities(tokens: Sequence[Token] | Sequence[str]) -> list[QuantitySpan]:
    """Find quantity spans in a token sequence.

    Accepts ``Token`` objects or plain lowercased strings.
    """
    toks = [t if isinstance(t, str) else t.text for t in tokens]
    spans = []
    i = 0
    while i < len(toks):
        hit = match_at(toks, i)
        if hit is None:
            i += 1
            continue
        qtype, n = hit
        surface = " ".join(toks[i:i + n])
        spans.append(QuantitySpan(qtype, i, i + n, surface, _normalize(qtype, toks[i:i + n])))
        i += n
    return spans


# --- normalization ----------------------------------------------------------

def _strip_modifier(toks: list[str]) -> list[str]:
    k = _modifier_len(toks, 0)
    return toks[k:] if k and len(toks) > k else toks


def _numeral_str(toks: list[str]) -> tuple[str, int]:
    num = numeral_at(toks, 0)
    if num is None:
        return " ".join(toks), len(toks)
    return format_number(num[1]), num[0]


def _norm_cardinal(toks: list[str]) -> str:
    if len(toks) == 1 and toks[0] in QUANTIFIERS:
        return toks[0]
    if len(toks) == 1 and _is_compound(toks[0]):
        head, rest = toks[0].split("-", 1)
        value = digits_value(head)
        if value is None:
            value = Decimal(word_value(head))
        return f"{format_number(value)}-{rest}"
    return _numeral_str(toks)[0]


def _norm_percent(toks: list[str]) -> str:
    return _numeral_str(toks)[0] + "%"


def _norm_money(toks: list[str]) -> str:
    m = _MONEY_TOKEN_RE.match(toks[0])
    if m:
        value = Decimal(m.group(2).replace(",", ""))
        scale = m.group(3) or (toks[1] if len(toks) > 1 else None)
        if scale:
            value *= _MONEY_SCALES[scale]
        return m.group(1) + format_number(value)
    if toks[0] in CURRENCY_SYMBOLS:
        num = numeral_at(toks, 1)
        value = num[1]
        rest = toks[1 + num[0]:]
        if rest and rest[0] in _MONEY_SCALES:
            value *= _MONEY_SCALES[rest[0]]
        return toks[0] + format_number(value)
    num = numeral_at(toks, 0)
    unit = _CURRENCY_WORDS[toks[num[0]]]
    if unit in ("p", "c"):
        return format_number(num[1]) + unit
    return unit + format_number(num[1])


def _norm_time(toks: list[str]) -> str:
    tok = toks[0]
    if tok == "midnight":
        return "00:00"
    if tok == "noon":
        return "12:00"
    m = _CLOCK_RE.match(tok)
    if m:
        return f"{int(m.group(1)):02d}:{m.group(2)}"
    m = _GLUED_TIME_RE.match(tok)
    if m:
        hour, minute, ampm = int(m.group(1)), m.group(2) or "00", m.group(3)
    else:
        hour, minute, ampm = int(numeral_at(toks, 0)[1]), "00", toks[1]
    hour = hour % 12 + (12 if ampm == "pm" else 0)
    return f"{hour:02d}:{minute}"


def _norm_date(toks: list[str]) -> str:
    if toks[0] == "the":
        toks = toks[1:]
    if len(toks) == 1 and (toks[0] in WEEKDAYS or toks[0] in RELATIVE_DAYS
                           or _DECADE_RE.match(toks[0]) or _is_year(toks[0])):
        return toks[0]
    day = month = year = None
    for tok in toks:
        if tok in MONTHS and month is None:
            month = MONTHS[tok]
        elif _is_year(tok) and (month is not None or day is not None):
            year = tok
        elif _day_number(tok) is not None and day is None:
            day = str(_day_number(tok))
    return " ".join(p for p in (day, month, year) if p)


def _norm_quantity(toks: list[str]) -> str:
    m = _GLUED_UNIT_RE.match(toks[0])
    if len(toks) == 1 and m:
        return f"{format_number(Decimal(m.group(1)))} {_UNIT_CANON[m.group(2)]}"
    number, n = _numeral_str(toks)
    unit = toks[n:]
    canon = [_UNIT_CANON.get(u, u) for u in unit]
    return " ".join([number, *canon])


def _norm_ordinal(toks: list[str]) -> str:
    tok = toks[0]
    if tok in ORDINAL_WORDS:
        n = ORDINAL_WORDS[tok]
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10 if n not in (11, 12, 13) else 0, "th")
        return f"{n}{suffix}"
    return tok


_NORMALIZERS = {
    QuantityType.CARDINAL: _norm_cardinal,
    QuantityType.PERCENT: _norm_percent,
    QuantityType.MONEY: _norm_money,
    QuantityType.TIME: _norm_time,
    QuantityType.DATE: _norm_date,
    QuantityType.QUANTITY: _norm_quantity,
    QuantityType.ORDINAL: _norm_ordinal,
}


def _normalize(qtype: QuantityType, toks: Sequence[str]) -> str:
    toks = list(toks)
    if qtype in (QuantityType.CARDINAL, QuantityType.PERCENT, QuantityType.MONEY,
                 QuantityType.QUANTITY):
        toks = _strip_modifier(toks)
    return _NORMALIZERS[qtype](toks)


def normalize(span: QuantitySpan) -> str:
    """Canonical form of a span, used for value comparison across texts."""
    return _normalize(span.qtype, span.surface.split(" "))


def make_span(qtype: QuantityType, toks: Sequence[str], start: int) -> QuantitySpan:
    toks = list(toks)
    return QuantitySpan(qtype, start, start + len(toks), " ".join(toks), _normalize(qtype, toks))
