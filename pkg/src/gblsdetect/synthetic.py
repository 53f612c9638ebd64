"""Templated synthetic corpus: harassing, neutral, critical and sarcastic messages with identity tags.

Critical messages (label 0) use negative but non-insulting vocabulary and
sarcastic ones (label 1) use positive words, so the corpus contains the two
hard cases of real moderation data.  Their shares, plus a little label noise,
are kept small enough that a keyword oracle over :data:`INSULTS` still scores
above 0.95.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .text import RawRecord, text_tokens

GROUPS: dict[str, tuple[str, ...]] = {
    "religion": ("muslim", "christian", "jewish", "hindu"),
    "race": ("black", "asian", "latino", "white"),
    "gender": ("women", "men", "girls", "trans"),
    "disability": ("disabled", "autistic", "deaf", "blind"),
}

INSULTS = (
    "idiot", "stupid", "loser", "moron", "pathetic", "worthless", "disgusting", "ugly", "dumb",
    "trash", "garbage", "freak", "scum", "clown", "fucking", "retard", "creep", "vile",
)

_TARGETS = ("you", "your kind", "people like you", "this guy", "she", "he", "that user")
_VERBS = ("are", "is", "are such a", "is a", "are a total", "are just a")
_THREATS = (
    "nobody wants you here", "go away and never come back", "shut up forever", "log off and disappear",
    "everyone laughs at you", "you should be ashamed",
)
_FILLERS = ("", "", "", "lol", "seriously", "honestly", "tbh", "again", "today", "smh", "ok")
_TOPICS = (
    "the match", "the new phone", "my homework", "the concert", "this recipe", "the weather",
    "the movie", "our project", "the train", "the library", "the election debate", "the game update",
)
_NEUTRAL = (
    "just finished {topic} and it was great",
    "does anyone know when {topic} starts",
    "thanks for sharing {topic} with me",
    "i really enjoyed {topic} today",
    "can we talk about {topic} later",
    "looking forward to {topic} this weekend",
    "{topic} was nice , good job everyone",
    "happy to help with {topic} if you need",
)
_NEUTRAL_GROUP = (
    "the {member} community event about {topic} was lovely",
    "great talk by {member} speakers on {topic}",
    "my {member} friends recommended {topic}",
    "respect to the {member} volunteers who organised {topic}",
)
_CRITICAL = (
    "your argument about {topic} is invalid and ignores the data",
    "i think {topic} was poorly planned and wrong",
    "this analysis of {topic} is weak and the numbers are wrong",
    "i disagree , the report on {topic} is misleading",
    "the review of {topic} was disappointing and unfair",
)
_BULLY = (
    "{target} {verb} {insult}",
    "{target} {verb} {insult} {insult2} , {threat}",
    "wow {target} {verb} {insult} , {threat}",
    "{threat} , {insult} !",
    "hey {insult} , {threat}",
    "{target} {verb} so {insult} it hurts",
)
_BULLY_GROUP = (
    "all {member} people are {insult}",
    "{member} people are {insult} and {threat}",
    "typical {member} {insult} , {threat}",
    "go back to where you came from you {member} {insult}",
)
_SARCASTIC = (
    "wow you are so smart , a real genius",
    "great job ruining {topic} again , genius",
    "what a brilliant idea , said no one ever",
)


@dataclass
class CorpusSpec:
    n: int = 2000
    bully_share: float = 0.5
    sarcastic_share: float = 0.02  # of all texts, labelled 1
    critical_share: float = 0.12  # of all texts, labelled 0
    group_share: float = 0.35
    label_noise: float = 0.02  # fraction of labels flipped at random
    seed: int = 13


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def generate_corpus(spec: CorpusSpec | None = None, **overrides) -> list[RawRecord]:
    """Deterministic corpus of ``spec.n`` labelled texts."""
    spec = spec or CorpusSpec(**overrides)
    rng = np.random.default_rng(spec.seed)
    records: list[RawRecord] = []
    group_names = sorted(GROUPS)
    n_bully = int(round(spec.n * spec.bully_share))
    n_sarc = int(round(spec.n * spec.sarcastic_share))
    n_crit = int(round(spec.n * spec.critical_share))
    kinds = ["bully"] * (n_bully - n_sarc) + ["sarcastic"] * n_sarc
    kinds += ["critical"] * n_crit + ["neutral"] * (spec.n - n_bully - n_crit)
    for kind in kinds:
        topic = _pick(rng, _TOPICS)
        tagged = rng.random() < spec.group_share and kind in ("bully", "neutral")
        group = _pick(rng, group_names) if tagged else None
        member = _pick(rng, GROUPS[group]) if group else ""
        if kind == "bully":
            tmpl = _pick(rng, _BULLY_GROUP if group else _BULLY)
            insult = _pick(rng, INSULTS)
            text = tmpl.format(
                target=_pick(rng, _TARGETS),
                verb=_pick(rng, _VERBS),
                insult=insult,
                insult2=_pick(rng, INSULTS),
                threat=_pick(rng, _THREATS),
                member=member,
            )
            if rng.random() < 0.15:
                text = text.upper()
            label = 1
        elif kind == "sarcastic":
            text = _pick(rng, _SARCASTIC).format(topic=topic)
            label = 1
        elif kind == "critical":
            text = _pick(rng, _CRITICAL).format(topic=topic)
            label = 0
        else:
            tmpl = _pick(rng, _NEUTRAL_GROUP if group else _NEUTRAL)
            text = tmpl.format(topic=topic, member=member)
            label = 0
        filler = _pick(rng, _FILLERS)
        if filler:
            text = f"{text} {filler}" if rng.random() < 0.5 else f"{filler} {text}"
        if rng.random() < 0.1:
            text += " !!!"
        if rng.random() < spec.label_noise:
            label = 1 - label
        records.append(RawRecord(text, label, frozenset({group}) if group else frozenset()))
    order = rng.permutation(len(records))
    return [records[i] for i in order]


def keyword_oracle(text: str) -> int:
    """Label 1 iff any insult keyword occurs (the reference separability check)."""
    toks = set(text_tokens(text))
    return int(any(w in toks for w in INSULTS))
