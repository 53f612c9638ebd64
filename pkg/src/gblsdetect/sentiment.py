"""Lexicon and rule based sentiment scoring (VADER-style heuristics).

Scores are the four affect features fused into the text representation:
positive, negative and neutral shares plus a bounded compound score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

NEGATION_SCALAR = -0.74
BOOSTER_INCREMENT = 0.293
CAPS_INCREMENT = 0.733
EXCLAMATION_INCREMENT = 0.292
MAX_EXCLAMATIONS = 3
NEGATION_WINDOW = 3
NORMALIZATION_ALPHA = 15.0

DEFAULT_BOOSTERS: dict[str, float] = {
    w: BOOSTER_INCREMENT
    for w in (
        "absolutely", "completely", "extremely", "really", "so", "such", "totally", "very",
        "incredibly", "utterly", "seriously", "truly", "highly", "deeply", "most", "fully",
    )
} | {w: -BOOSTER_INCREMENT for w in ("barely", "hardly", "slightly", "somewhat", "kinda", "little", "partly")}

DEFAULT_NEGATIONS = frozenset(
    {
        "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "nowhere", "cannot",
        "can't", "don't", "doesn't", "didn't", "isn't", "aren't", "wasn't", "weren't", "won't",
        "wouldn't", "shouldn't", "couldn't", "ain't", "without",
    }
)


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class SentimentLexicon:
    valences: Mapping[str, float]
    boosters: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_BOOSTERS))
    negations: frozenset[str] = DEFAULT_NEGATIONS

    def __len__(self) -> int:
        return len(self.valences)


@dataclass(frozen=True)
class SentimentScores:
    pos: float
    neg: float
    neu: float
    compound: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.pos, self.neg, self.neu, self.compound)


def parse_lexicon(text: str, source: str = "<lexicon>") -> SentimentLexicon:
    valences: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise LexiconError(f"{source}:{lineno}: expected token<TAB>valence")
        token = parts[0].strip().lower()
        try:
            value = float(parts[1])
        except ValueError as exc:
            raise LexiconError(f"{source}:{lineno}: bad valence {parts[1]!r}") from exc
        if not math.isfinite(value) or not -4.0 <= value <= 4.0:
            raise LexiconError(f"{source}:{lineno}: valence {value} outside [-4, 4]")
        if token in valences:
            raise LexiconError(f"{source}:{lineno}: duplicate token {token!r}")
        valences[token] = value
    return SentimentLexicon(valences)


def load_lexicon(path: str | Path | None = None) -> SentimentLexicon:
    """Load a ``token<TAB>valence`` file; ``None`` loads the bundled demo lexicon."""
    if path is None:
        text = resources.files("gblsdetect").joinpath("data/lexicon.tsv").read_text(encoding="utf-8")
        return parse_lexicon(text, "bundled lexicon")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise LexiconError(f"cannot read lexicon {path}: {exc}") from exc
    return parse_lexicon(text, str(path))


def _is_caps(token: str) -> bool:
    letters = [c for c in token if c.isalpha()]
    return len(letters) >= 2 and all(c.isupper() for c in letters)


def _sign(x: float) -> float:
    return 1.0 if x > 0 else -1.0 if x < 0 else 0.0


def token_valences(tokens: Sequence[str], lexicon: SentimentLexicon) -> list[float]:
    """Per-token valence after caps, negation and booster rules (0 for non-lexicon tokens)."""
    lowered = [t.lower() for t in tokens]
    out = []
    for i, tok in enumerate(lowered):
        v = lexicon.valences.get(tok, 0.0)
        if v == 0.0:
            out.append(0.0)
            continue
        if _is_caps(tokens[i]):
            v += _sign(v) * CAPS_INCREMENT
        if any(w in lexicon.negations for w in lowered[max(0, i - NEGATION_WINDOW) : i]):
            v *= NEGATION_SCALAR
        if i > 0 and lowered[i - 1] in lexicon.boosters:
            v += _sign(v) * lexicon.boosters[lowered[i - 1]]
        out.append(v)
    return out


def compound_from_sum(total: float, alpha: float = NORMALIZATION_ALPHA) -> float:
    return total / math.sqrt(total * total + alpha)


def score(tokens: Sequence[str], lexicon: SentimentLexicon) -> SentimentScores:
    """Score a token sequence (case preserved, so ALL-CAPS emphasis is visible)."""
    vals = token_valences(tokens, lexicon)
    total = sum(vals)
    bangs = min(sum(1 for t in tokens if t == "!"), MAX_EXCLAMATIONS)
    emphasis = bangs * EXCLAMATION_INCREMENT if total != 0.0 else 0.0
    total += _sign(total) * emphasis

    pos_mass = sum(v for v in vals if v > 0)
    neg_mass = -sum(v for v in vals if v < 0)
    if emphasis:
        if total > 0:
            pos_mass += emphasis
        else:
            neg_mass += emphasis
    neu_mass = float(
        sum(1 for t, v in zip(tokens, vals) if v == 0.0 and any(c.isalnum() for c in t))
    )
    mass = pos_mass + neg_mass + neu_mass
    if mass == 0.0:
        return SentimentScores(0.0, 0.0, 1.0, 0.0)
    pos, neg = pos_mass / mass, neg_mass / mass
    return SentimentScores(pos, neg, max(0.0, 1.0 - pos - neg), compound_from_sum(total))
