"""Run configuration: one JSON tree covering data, model, selection, head and training.

Example (every key optional; omitted keys take the defaults below)::

    {
      "seed": 7,
      "out": "runs/synthetic",
      "lexicon": null,
      "data": {"path": null, "format": null, "ratios": [0.7, 0.15, 0.15],
               "synthetic": {"n": 2000, "seed": 13}},
      "encoder": {"d_model": 96, "n_layers": 2, "max_len": 24},
      "selector": {"method": "mi"},
      "gbls": {"hidden_dim": 216, "n_heads": 8},
      "train": {"epochs": 6, "contrastive_weight": 0.5}
    }

With ``data.path`` null the bundled synthetic generator supplies the corpus.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .encoder import EncoderConfig
from .gbls import GBLSConfig
from .select import SelectorConfig
from .synthetic import CorpusSpec
from .train import TrainConfig


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class DataConfig:
    path: str | None = None
    format: str | None = None  # "csv" | "jsonl"; inferred from the suffix when None
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    stratified: bool = True
    max_error_rate: float = 0.10
    synthetic: CorpusSpec = field(default_factory=CorpusSpec)


@dataclass
class RunConfig:
    seed: int = 7
    out: str = "runs/default"
    lexicon: str | None = None
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(max_len=24))
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    gbls: GBLSConfig = field(default_factory=GBLSConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def train_config(self) -> TrainConfig:
        """Training settings with the run seed and the nested selector/head configs applied."""
        cfg = copy.deepcopy(self.train)
        cfg.seed = self.seed
        cfg.selector = copy.deepcopy(self.selector)
        cfg.gbls = copy.deepcopy(self.gbls)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        # the nested copies live at top level only
        d["train"].pop("gbls")
        d["train"].pop("selector")
        d["train"].pop("seed")
        return d

    def digest(self) -> str:
        """sha256 of the canonical JSON tree without the output directory."""
        d = self.to_dict()
        d.pop("out")
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def validate(self) -> None:
        for label, p in (("lexicon", self.lexicon), ("data.path", self.data.path)):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{label} file not found: {p}")
        r = self.data.ratios
        if len(r) != 3 or any(x <= 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
            raise ConfigError(f"data.ratios must be three positive numbers summing to 1, got {list(r)}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


def _build(cls, tree, where: str):
    if tree is None:
        return cls()
    if not isinstance(tree, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(tree) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**tree)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(tree: dict) -> RunConfig:
    tree = dict(tree)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(tree) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    for section in ("data", "encoder", "selector", "gbls", "train"):
        if tree.get(section) is not None and not isinstance(tree[section], dict):
            raise ConfigError(f"{section} must be an object")
    data_tree = dict(tree.pop("data", None) or {})
    synth = _build(CorpusSpec, data_tree.pop("synthetic", None), "data.synthetic")
    if "ratios" in data_tree:
        data_tree["ratios"] = tuple(data_tree["ratios"])
    data = _build(DataConfig, {**data_tree, "synthetic": synth}, "data")
    enc_tree = tree.pop("encoder", None) or {}
    encoder = _build(EncoderConfig, {"max_len": 24, **enc_tree}, "encoder")
    selector = _build(SelectorConfig, tree.pop("selector", None), "selector")
    head = _build(GBLSConfig, tree.pop("gbls", None), "gbls")
    train_tree = dict(tree.pop("train", None) or {})
    for k in ("gbls", "selector", "seed"):
        if k in train_tree:
            raise ConfigError(f"train.{k} is not allowed; set it at the top level")
    train = _build(TrainConfig, train_tree, "train")
    try:
        cfg = RunConfig(data=data, encoder=encoder, selector=selector, gbls=head, train=train, **tree)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError("seed must be an integer")
    return cfg


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        tree = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(tree)
