"""Synthetic news-like corpus with planted quantities, plus re-ranking beams.

Each article states a handful of facts, one per sentence, each tying a
subject to a quantity.  The summary restates one or two of those facts.  The
generator is deterministic given its seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .text import CorpusRecord

SUBJECTS = (
    "council", "hospital", "company", "club", "airport", "school", "charity",
    "museum", "bank", "railway", "university", "police force", "fire service",
    "factory", "festival", "library", "supermarket", "zoo", "brewery", "theatre",
    "stadium", "harbour", "prison", "court", "orchestra", "bakery", "farm",
    "mine", "ferry operator", "bus operator", "water board", "energy firm",
    "tech firm", "housing trust", "sports centre", "golf club", "rugby club",
    "cricket club", "film studio", "newspaper",
)

_NUMBER_WORDS = ("two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "twelve")
_WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
_MONTHS = ("January", "February", "April", "June", "July", "August", "September",
           "October", "November", "December")
_ORDINALS = ("first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth")
_UNITS = ("miles", "km", "tonnes", "metres", "acres")


def _cardinal(rng: random.Random) -> str:
    if rng.random() < 0.3:
        return rng.choice(_NUMBER_WORDS)
    return rng.choice(("12", "15", "20", "24", "30", "35", "40", "45", "50", "60", "75", "80",
                       "90", "120", "150", "200", "250", "300", "400", "500", "1,200", "2,500"))


def _money(rng: random.Random) -> str:
    n = rng.choice((2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 40, 50))
    form = rng.random()
    if form < 0.4:
        return f"£{n}m"
    if form < 0.7:
        return f"£{n},000"
    return f"${n}m"


def _percent(rng: random.Random) -> str:
    return f"{rng.choice((2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 20, 25, 30, 40))}%"


def _date(rng: random.Random) -> str:
    form = rng.random()
    if form < 0.45:
        return rng.choice(_WEEKDAYS)
    if form < 0.8:
        return f"{rng.randint(1, 28)} {rng.choice(_MONTHS)}"
    return str(rng.randint(1990, 2019))


def _time(rng: random.Random) -> str:
    if rng.random() < 0.6:
        return f"{rng.randint(6, 22):02d}:{rng.choice((0, 15, 20, 30, 45)):02d}"
    return f"{rng.randint(1, 11)}pm"


def _ordinal(rng: random.Random) -> str:
    return rng.choice(_ORDINALS)


def _quantity(rng: random.Random) -> str:
    return f"{rng.choice((3, 5, 8, 10, 12, 20, 25, 40, 60, 100))} {rng.choice(_UNITS)}"


# type -> (value generator, article templates, summary templates)
FACTS = {
    "CARDINAL": (_cardinal,
                 ("The {s} said {v} people had been affected.", "The {s} now employs {v} staff.",
                  "Officials at the {s} counted {v} complaints."),
                 ("the {s} said {v} people had been affected", "the {s} employs {v} staff",
                  "the {s} received {v} complaints")),
    "MONEY": (_money,
              ("The {s} was fined {v} by regulators.", "The {s} will invest {v} in new buildings.",
               "Repairs at the {s} cost {v}."),
              ("the {s} has been fined {v}", "the {s} is to invest {v}",
               "repairs to the {s} cost {v}")),
    "PERCENT": (_percent,
                ("Profits at the {s} rose by {v} last year.", "Visitor numbers at the {s} fell {v}.",
                 "The {s} raised its prices by {v}."),
                ("profits at the {s} rose {v}", "visitors to the {s} fell by {v}",
                 "the {s} has raised prices by {v}")),
    "DATE": (_date,
             ("The {s} will close on {v}.", "The {s} opened its doors on {v}.",
              "A meeting at the {s} is planned for {v}."),
             ("the {s} will close on {v}", "the {s} opened on {v}",
              "a meeting is planned at the {s} on {v}")),
    "TIME": (_time,
             ("The alarm at the {s} sounded at {v}.", "The {s} was evacuated at {v}.",
              "Staff left the {s} at {v}."),
             ("an alarm sounded at the {s} at {v}", "the {s} was evacuated at {v}",
              "staff left the {s} at {v}")),
    "ORDINAL": (_ordinal,
                ("The {s} finished {v} in the regional rankings.", "It is the {v} time the {s} has been inspected.",
                 "The {s} came {v} in the awards."),
                ("the {s} came {v} in regional rankings", "the {s} was inspected for the {v} time",
                 "the {s} was placed {v} in the awards")),
    "QUANTITY": (_quantity,
                 ("The {s} sits {v} from the town.", "A road of {v} was built near the {s}.",
                  "The {s} covers {v}."),
                 ("the {s} is {v} from the town", "a {v} road was built near the {s}",
                  "the {s} covers {v}")),
}

FILLERS = (
    "A spokesman said the situation was being monitored.",
    "Local people have welcomed the news.",
    "Further details are expected to be announced soon.",
    "The decision was made after a long review.",
    "Campaigners said they would continue to press for change.",
    "The announcement was made in a statement.",
)

SUMMARY_TAILS = ("", ", officials said", ", a report has found", ", it has emerged",
                 ", according to new figures", " after a review")


@dataclass
class Fact:
    qtype: str
    subject: str
    value: str
    template: int


def _fact_sentence(fact: Fact) -> str:
    return FACTS[fact.qtype][1][fact.template].format(s=fact.subject, v=fact.value)


def _summary_clause(fact: Fact, value: str | None = None) -> str:
    return FACTS[fact.qtype][2][fact.template].format(s=fact.subject, v=value or fact.value)


def _draw_facts(rng: random.Random, n_facts: int, focus: str, same_type: int) -> list[Fact]:
    subjects = rng.sample(SUBJECTS, n_facts)
    types = [focus] * same_type
    others = [t for t in FACTS if t != focus]
    types += [rng.choice(others) for _ in range(n_facts - same_type)]
    rng.shuffle(types)
    facts, used = [], set()
    # same-type facts never share a template, so the wording around a value
    # tells the facts apart
    templates = {t: rng.sample(range(3), 3) for t in FACTS}
    for subj, qtype in zip(subjects, types):
        gen = FACTS[qtype][0]
        for _ in range(50):
            value = gen(rng)
            if (qtype, value.lower()) not in used:
                break
        used.add((qtype, value.lower()))
        facts.append(Fact(qtype, subj, value, templates[qtype].pop()))
    return facts


def _capitalise(text: str) -> str:
    return text[:1].upper() + text[1:]


def make_record(rng: random.Random, idx: int) -> tuple[CorpusRecord, list[Fact], list[Fact]]:
    focus = rng.choice(list(FACTS))
    n_facts = rng.randint(3, 5)
    # a few articles hold a single quantity of the focus type, so nothing can be swapped
    same_type = 1 if rng.random() < 0.08 else rng.randint(2, min(3, n_facts))
    facts = _draw_facts(rng, n_facts, focus, same_type)
    focus_facts = [f for f in facts if f.qtype == focus]
    chosen = [rng.choice(focus_facts)]
    if rng.random() < 0.3:
        extra = [f for f in facts if f is not chosen[0]]
        chosen.append(rng.choice(extra))
    sentences = [_fact_sentence(f) for f in facts]
    for _ in range(rng.randint(1, 2)):
        sentences.insert(rng.randrange(len(sentences) + 1), rng.choice(FILLERS))
    article = " ".join(sentences)
    clauses = [_summary_clause(f) for f in chosen]
    summary = _capitalise(" and ".join(clauses)) + rng.choice(SUMMARY_TAILS) + "."
    return CorpusRecord.from_text(f"toy-{idx:04d}", article, summary), facts, chosen


def toy_corpus(n: int = 500, seed: int = 0) -> list[CorpusRecord]:
    rng = random.Random(seed)
    return [make_record(rng, i)[0] for i in range(n)]


@dataclass
class ToyBeam:
    id: str
    article: str
    candidates: list[str]
    faithful: int


def toy_beams(n: int = 200, k: int = 5, seed: int = 1, id_offset: int = 10_000) -> list[ToyBeam]:
    """Beams where exactly one candidate carries the article's true quantities.

    Corrupted candidates move another same-type article value into the fact
    (or, when the article has none, an unseen value) and vary the wording,
    so neither length nor wording identifies the faithful one.
    """
    rng = random.Random(seed)
    beams = []
    idx = 0
    while len(beams) < n:
        record, facts, chosen = make_record(rng, id_offset + idx)
        idx += 1
        fact = chosen[0]
        alternatives = [f.value for f in facts if f.qtype == fact.qtype and f.value.lower() != fact.value.lower()]
        gen = FACTS[fact.qtype][0]
        wrong: list[str] = []
        pool = list(alternatives)
        rng.shuffle(pool)
        tries = 0
        while len(wrong) < k - 1 and tries < 500:
            tries += 1
            value = pool.pop() if pool else gen(rng)
            if value.lower() == fact.value.lower() or value in wrong:
                continue
            if value.lower() in record.article_text.lower() and value not in alternatives:
                continue
            wrong.append(value)
        if len(wrong) < k - 1:
            continue
        rest = [_summary_clause(f) for f in chosen[1:]]
        tails = rng.sample(SUMMARY_TAILS, k)

        def render(value: str, tail: str) -> str:
            return _capitalise(" and ".join([_summary_clause(fact, value), *rest])) + tail + "."

        cands = [render(v, t) for v, t in zip(wrong, tails[1:])]
        faithful = rng.randrange(k)
        cands.insert(faithful, render(fact.value, tails[0]))
        beams.append(ToyBeam(f"beam-{len(beams):04d}", record.article_text, cands, faithful))
    return beams
