"""Text normalisation, tokenisation, vocabulary, dataset loading and splitting."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK, CLS = 0, 1, 2
RESERVED = ("[PAD]", "[UNK]", "[CLS]")

URL_TOKEN = "<url>"
USER_TOKEN = "<user>"

EMOTICONS = frozenset(
    {":)", ":(", ":-)", ":-(", ":d", ":D", ":p", ":P", ";)", ";-)", ":'(", ":/", ":|", "<3", "xd", "XD", ":o", ":O"}
)
_KEEP_WHOLE = EMOTICONS | {URL_TOKEN, USER_TOKEN}
_PUNCT = set(string.punctuation)

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_USER_RE = re.compile(r"@\w+")
_REPEAT_RE = re.compile(r"(.)\1{3,}", re.DOTALL)
_WS_RE = re.compile(r"\s+")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    text: str
    label: int
    subgroups: frozenset[str] = frozenset()


@dataclass(frozen=True)
class RowError:
    line: int
    reason: str


@dataclass
class EncodedExample:
    ids: np.ndarray
    attention_mask: np.ndarray
    label: int | None = None
    subgroups: frozenset[str] = frozenset()


def normalize(text: str, lowercase: bool = True) -> str:
    """Social-media hygiene: sentinels for URLs and mentions, repeat truncation, whitespace collapse."""
    text = _URL_RE.sub(f" {URL_TOKEN} ", text)
    text = _USER_RE.sub(f" {USER_TOKEN} ", text)
    if lowercase:
        text = text.lower()
    text = _REPEAT_RE.sub(lambda m: m.group(1) * 3, text)
    return _WS_RE.sub(" ", text).strip()


def tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    for chunk in text.split():
        if chunk in _KEEP_WHOLE:
            tokens.append(chunk)
            continue
        lead: list[str] = []
        trail: list[str] = []
        i, j = 0, len(chunk)
        while j > i and chunk[j - 1] in _PUNCT and chunk[i:j] not in _KEEP_WHOLE:
            trail.append(chunk[j - 1])
            j -= 1
        while i < j and chunk[i] in _PUNCT and chunk[i:j] not in _KEEP_WHOLE:
            lead.append(chunk[i])
            i += 1
        tokens.extend(lead)
        if i < j:
            tokens.append(chunk[i:j])
        tokens.extend(reversed(trail))
    return tokens


class Vocabulary:
    """Dense token ids with reserved PAD=0, UNK=1, CLS=2."""

    def __init__(self, tokens: Sequence[str], min_frequency: int = 1):
        self.min_frequency = min_frequency
        self.itos: list[str] = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def to_tsv(self) -> str:
        return "".join(f"{tok}\t{i}\n" for i, tok in enumerate(self.itos))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    @classmethod
    def from_tsv(cls, text: str) -> "Vocabulary":
        pairs = []
        for line in text.splitlines():
            if not line:
                continue
            tok, idx = line.rsplit("\t", 1)
            pairs.append((int(idx), tok))
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))) or tuple(t for _, t in pairs[:3]) != RESERVED:
            raise ValueError("vocabulary ids are not dense or reserved ids are missing")
        return cls([t for _, t in pairs[3:]])

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_tsv(Path(path).read_text(encoding="utf-8"))


def build_vocab(corpus: Iterable[Sequence[str]], min_frequency: int = 1) -> Vocabulary:
    """Vocabulary from tokenised texts, ordered by (count desc, token)."""
    counts: Counter[str] = Counter()
    n = 0
    for tokens in corpus:
        counts.update(tokens)
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_frequency), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_frequency=min_frequency)


def encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    body = [vocab.lookup(t) for t in tokens[: max_len - 1]]
    ids = np.full(max_len, PAD, dtype=np.int64)
    ids[0] = CLS
    ids[1 : 1 + len(body)] = body
    mask = np.zeros(max_len, dtype=bool)
    mask[: 1 + len(body)] = True
    return ids, mask


def text_tokens(text: str) -> list[str]:
    return tokenize(normalize(text))


def encode_batch(texts: Sequence[str], vocab: Vocabulary, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = [encode(text_tokens(t), vocab, max_len) for t in texts]
    if not pairs:
        return np.zeros((0, max_len), dtype=np.int64), np.zeros((0, max_len), dtype=bool)
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def _parse_label(value) -> int:
    if isinstance(value, bool):
        raise ValueError(f"unknown label value {value!r}")
    if isinstance(value, (int, float)) and value in (0, 1):
        return int(value)
    if isinstance(value, str) and value.strip() in ("0", "1"):
        return int(value.strip())
    raise ValueError(f"unknown label value {value!r}")


def _make_record(text, label, groups) -> RawRecord:
    if not isinstance(text, str):
        raise ValueError("text must be a string")
    if not normalize(text):
        raise ValueError("text is empty after normalization")
    lab = _parse_label(label)
    if groups is None or groups == "":
        tags: frozenset[str] = frozenset()
    elif isinstance(groups, str):
        tags = frozenset(g.strip() for g in groups.split("|") if g.strip())
    elif isinstance(groups, list) and all(isinstance(g, str) for g in groups):
        tags = frozenset(g.strip() for g in groups if g.strip())
    else:
        raise ValueError(f"bad subgroups field {groups!r}")
    return RawRecord(text, lab, tags)


@dataclass
class LoadReport:
    records: list[RawRecord]
    errors: list[RowError] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.records) + len(self.errors)


def load_dataset(path: str | Path, fmt: str | None = None, max_error_rate: float = 0.10) -> LoadReport:
    """Read ``text,label[,subgroups]`` rows from CSV (with header) or JSONL.

    Malformed rows are collected in the report; more than ``max_error_rate``
    of them aborts with :class:`DatasetError`.
    """
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".json") else "csv"
    if fmt not in ("csv", "jsonl"):
        raise DatasetError(f"unknown dataset format {fmt!r}")
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc

    report = LoadReport([])
    if fmt == "csv":
        reader = csv.reader(io.StringIO(raw, newline=""))
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty CSV")
        cols = [h.strip().lower() for h in header]
        if "text" not in cols or "label" not in cols:
            raise DatasetError(f"{path}: CSV header must contain text,label")
        ti, li = cols.index("text"), cols.index("label")
        gi = cols.index("subgroups") if "subgroups" in cols else None
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            try:
                if len(row) < max(ti, li) + 1:
                    raise ValueError("too few fields")
                groups = row[gi] if gi is not None and gi < len(row) else None
                report.records.append(_make_record(row[ti], row[li], groups))
            except ValueError as exc:
                report.errors.append(RowError(lineno, str(exc)))
    else:
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("row is not an object")
                report.records.append(_make_record(obj.get("text"), obj.get("label"), obj.get("subgroups")))
            except ValueError as exc:
                report.errors.append(RowError(lineno, str(exc)))

    if report.n_rows == 0:
        raise DatasetError(f"{path}: no rows")
    if len(report.errors) > max_error_rate * report.n_rows:
        raise DatasetError(
            f"{path}: {len(report.errors)}/{report.n_rows} malformed rows exceeds {max_error_rate:.0%}"
        )
    for err in report.errors:
        log.warning("%s line %d skipped: %s", path, err.line, err.reason)
    return report


def write_dataset(records: Sequence[RawRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() in (".jsonl", ".json"):
        with path.open("w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps({"text": r.text, "label": r.label, "subgroups": sorted(r.subgroups)}) + "\n")
        return
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["text", "label", "subgroups"])
        for r in records:
            w.writerow([r.text, r.label, "|".join(sorted(r.subgroups))])


@dataclass
class DatasetSplit:
    train: list[RawRecord]
    val: list[RawRecord]
    test: list[RawRecord]


def _half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _allocate(sizes: Sequence[int], ratios: Sequence[float]) -> list[tuple[int, int]]:
    """Per-group (train, val) counts whose totals match the ungrouped rounding.

    Each group gets the floor of its share; leftover slots go to the largest
    fractional remainders, so no split is starved by many small groups.
    """
    total = sum(sizes)
    alloc = [[0, 0] for _ in sizes]
    room = list(sizes)
    for k in (0, 1):
        target = min(_half_up(ratios[k] * total), sum(room))
        quotas = [ratios[k] * n for n in sizes]
        for g, q in enumerate(quotas):
            alloc[g][k] = min(int(np.floor(q)), room[g])
        order = sorted(range(len(sizes)), key=lambda g: (-(quotas[g] - np.floor(quotas[g])), g))
        short = target - sum(a[k] for a in alloc)
        while short > 0:
            moved = False
            for g in order:
                if short and room[g] - alloc[g][k] > 0:
                    alloc[g][k] += 1
                    short -= 1
                    moved = True
            if not moved:
                break
        for g in range(len(sizes)):
            room[g] -= alloc[g][k]
    return [(a[0], a[1]) for a in alloc]


def split(records: Sequence[RawRecord], ratios: Sequence[float], seed: int, stratified: bool = True) -> DatasetSplit:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    parts: list[list[RawRecord]] = [[], [], []]
    if stratified:
        groups = [[r for r in records if r.label == lab] for lab in (0, 1)]
    else:
        groups = [list(records)]
    counts = _allocate([len(g) for g in groups], ratios)
    for group, (n_train, n_val) in zip(groups, counts):
        order = rng.permutation(len(group))
        parts[0].extend(group[i] for i in order[:n_train])
        parts[1].extend(group[i] for i in order[n_train : n_train + n_val])
        parts[2].extend(group[i] for i in order[n_train + n_val :])
    for name, part in zip(("train", "val", "test"), parts):
        if not part:
            raise ValueError(f"empty {name} split")
    shuffled = [[part[i] for i in rng.permutation(len(part))] for part in parts]
    return DatasetSplit(*shuffled)
