"""Two-stage training: encoder fine-tuning, feature extraction and the GBLS head."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint, gbls
from . import tensor as T
from .encoder import Encoder, EncoderConfig
from .gbls import GBLSConfig
from .metrics import BiasReport, MetricsReport, compute_gmb, compute_metrics, select_threshold
from .optim import Adam, restore, snapshot, xavier_uniform, zeros
from .select import SelectionMask, SelectorConfig, apply_mask, fit_selector
from .sentiment import SentimentLexicon, load_lexicon, score
from .tensor import Tensor
from .text import DatasetSplit, RawRecord, Vocabulary, build_vocab, encode, normalize, tokenize

log = logging.getLogger(__name__)

SENTIMENT_DIM = 4


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class TrainConfig:
    epochs: int = 6
    batch_size: int = 32
    learning_rate: float = 2e-3
    contrastive_weight: float = 0.5
    temperature: float = 0.1
    patience: int = 2
    use_sentiment: bool = True
    vocab_min_frequency: int = 1
    seed: int = 7
    gbls: GBLSConfig = field(default_factory=GBLSConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)

    def __post_init__(self):
        if self.contrastive_weight < 0:
            raise ValueError("contrastive weight must be non-negative")
        if self.contrastive_weight > 0 and self.batch_size < 2:
            raise ValueError("contrastive loss needs batch_size >= 2")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def l2_normalize(z: Tensor, eps: float = 1e-12) -> Tensor:
    return z / T.power((z * z).sum(axis=-1, keepdims=True) + eps, 0.5)


def supervised_contrastive(z: Tensor, labels, temperature: float = 0.1) -> Tensor:
    """In-batch supervised contrastive loss on L2-normalised rows of ``z``.

    Positives are the other samples with the same label; anchors without a
    positive contribute nothing, and a single-class batch yields exactly 0.
    """
    y = np.asarray(labels).reshape(-1)
    n = y.size
    if n < 2:
        raise ValueError("contrastive loss needs at least 2 samples")
    if np.unique(y).size < 2:
        return Tensor(0.0)
    zn = l2_normalize(z)
    sim = (zn @ zn.T) * (1.0 / temperature)
    off_diag = ~np.eye(n, dtype=bool)
    logprob = T.log_softmax(sim, mask=off_diag)
    pos = (y[:, None] == y[None, :]) & off_diag
    n_pos = pos.sum(axis=1)
    valid = n_pos > 0
    weights = np.where(valid[:, None], pos / np.maximum(n_pos, 1)[:, None], 0.0)
    return -(logprob * Tensor(weights)).sum() * (1.0 / valid.sum())


# ---------------------------------------------------------------------------
# stage 1
# ---------------------------------------------------------------------------


@dataclass
class Stage1History:
    epochs: list[dict] = field(default_factory=list)
    batches: list[dict] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_cls,train_con,val_loss,val_acc"]
        for r in self.epochs:
            lines.append(
                f"{r['epoch']},{r['train_loss']!r},{r['train_cls']!r},{r['train_con']!r},{r['val_loss']!r},{r['val_acc']!r}"
            )
        return "\n".join(lines) + "\n"


def init_head(dim: int, seed: int) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    return {"stage1.head.w": xavier_uniform(rng, dim, 1), "stage1.head.b": zeros(1)}


def stage1_loss(
    encoder: Encoder,
    head: dict[str, Tensor],
    ids: np.ndarray,
    mask: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator | None,
    training: bool = True,
    contrastive: bool = True,
) -> tuple[Tensor, Tensor, Tensor | None]:
    """``(total, L_cls, L_con)`` for one batch, total = L_cls + w * L_con."""
    z = encoder.forward(ids, mask, training=training, rng=rng)
    logit = (z @ head["stage1.head.w"] + head["stage1.head.b"]).reshape(len(y))
    l_cls = T.bce_with_logits(logit, y)
    if not contrastive:
        return l_cls, l_cls, None
    l_con = supervised_contrastive(z, y, config.temperature)
    return l_cls + config.contrastive_weight * l_con, l_cls, l_con


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    out = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:
        # batch norm cannot train on a single example
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def _eval_stage1(encoder, head, ids, mask, y, batch_size: int = 256) -> tuple[float, float]:
    logits = []
    with T.no_grad():
        for s in range(0, len(y), batch_size):
            z = encoder.forward(ids[s : s + batch_size], mask[s : s + batch_size], training=False)
            logits.append((z @ head["stage1.head.w"] + head["stage1.head.b"]).data.reshape(-1))
    logit = np.concatenate(logits)
    loss = float(np.mean(np.maximum(logit, 0) - logit * y + np.log1p(np.exp(-np.abs(logit)))))
    acc = float(np.mean((logit >= 0) == (y > 0.5)))
    return loss, acc


def stage1_finetune(
    encoder: Encoder,
    train: tuple[np.ndarray, np.ndarray, np.ndarray],
    val: tuple[np.ndarray, np.ndarray, np.ndarray],
    config: TrainConfig,
    contrastive: bool = True,
) -> Stage1History:
    """Fine-tune ``encoder`` in place with BCE + weighted contrastive loss.

    A temporary linear head supplies the classification loss and is
    discarded afterwards.  Early stopping restores the epoch with the lowest
    validation loss.
    """
    ids, mask, y = train
    vids, vmask, vy = val
    y = np.asarray(y, dtype=np.float64)
    vy = np.asarray(vy, dtype=np.float64)
    if config.contrastive_weight > 0 and contrastive and config.batch_size < 2:
        raise ValueError("contrastive loss needs batch_size >= 2")
    rng = np.random.default_rng(config.seed + 1)
    head = init_head(encoder.config.output_dim, config.seed + 2)
    params = {**encoder.params, **head}
    opt = Adam(params, lr=config.learning_rate)
    hist = Stage1History()
    best = (math.inf, snapshot(params), encoder.copy_bn())
    stale = 0
    for epoch in range(config.epochs):
        sums = np.zeros(3)
        seen = 0
        for step, idx in enumerate(_batches(len(y), config.batch_size, rng)):
            opt.zero_grad()
            total, l_cls, l_con = stage1_loss(encoder, head, ids[idx], mask[idx], y[idx], config, rng, True, contrastive)
            total.backward()
            opt.step()
            con = l_con.item() if l_con is not None else 0.0
            hist.batches.append(
                {"epoch": epoch, "step": step, "total": total.item(), "cls": l_cls.item(), "con": con}
            )
            sums += np.array([total.item(), l_cls.item(), con]) * len(idx)
            seen += len(idx)
        val_loss, val_acc = _eval_stage1(encoder, head, vids, vmask, vy)
        sums /= seen
        hist.epochs.append(
            {
                "epoch": epoch,
                "train_loss": float(sums[0]),
                "train_cls": float(sums[1]),
                "train_con": float(sums[2]),
                "val_loss": val_loss,
                "val_acc": val_acc,
            }
        )
        log.info("stage1 epoch %d train %.4f val %.4f acc %.3f", epoch, sums[0], val_loss, val_acc)
        if val_loss < best[0]:
            best = (val_loss, snapshot(params), encoder.copy_bn())
            hist.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    restore(params, best[1])
    encoder.restore_bn(best[2])
    return hist


# ---------------------------------------------------------------------------
# detector: everything needed at inference time
# ---------------------------------------------------------------------------


def cased_tokens(text: str) -> list[str]:
    """Tokens of the normalised text with case kept (for sentiment emphasis)."""
    return tokenize(normalize(text, lowercase=False))


def sentiment_features(token_lists: Sequence[Sequence[str]], lexicon: SentimentLexicon) -> np.ndarray:
    if not token_lists:
        return np.zeros((0, SENTIMENT_DIM))
    return np.array([score(toks, lexicon).as_tuple() for toks in token_lists], dtype=np.float64)


@dataclass
class Detector:
    vocab: Vocabulary
    encoder: Encoder
    lexicon: SentimentLexicon
    use_sentiment: bool
    gbls_config: GBLSConfig | None = None
    gbls_params: dict[str, Tensor] | None = None
    mask: SelectionMask | None = None
    scaler_mean: np.ndarray | None = None
    scaler_std: np.ndarray | None = None
    threshold: float = 0.5
    lexicon_path: str | None = None

    # -- encoding ---------------------------------------------------------------
    def encode_tokens(self, token_lists: Sequence[Sequence[str]]) -> tuple[np.ndarray, np.ndarray]:
        max_len = self.encoder.config.max_len
        pairs = [encode([t.lower() for t in toks], self.vocab, max_len) for toks in token_lists]
        return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])

    def fused_from_arrays(
        self, ids: np.ndarray, mask: np.ndarray, sentiment: np.ndarray | None, batch_size: int = 256
    ) -> np.ndarray:
        chunks = []
        with T.no_grad():
            for s in range(0, len(ids), batch_size):
                chunks.append(self.encoder.forward(ids[s : s + batch_size], mask[s : s + batch_size]).data)
        feats = np.concatenate(chunks) if chunks else np.zeros((0, self.encoder.config.output_dim))
        if self.use_sentiment:
            feats = np.concatenate([feats, sentiment], axis=1)
        return feats

    def fused_from_tokens(self, token_lists: Sequence[Sequence[str]], batch_size: int = 256) -> np.ndarray:
        """Encoder vector, optionally concatenated with the four sentiment scores."""
        ids, mask = self.encode_tokens(token_lists)
        sent = sentiment_features(token_lists, self.lexicon) if self.use_sentiment else None
        return self.fused_from_arrays(ids, mask, sent, batch_size)

    def extract_features(self, texts: Sequence[str]) -> np.ndarray:
        return self.fused_from_tokens([cased_tokens(t) for t in texts])

    def head_input(self, fused: np.ndarray) -> np.ndarray:
        return (apply_mask(fused, self.mask) - self.scaler_mean) / self.scaler_std

    # -- prediction ------------------------------------------------------------
    def proba_from_tokens(self, token_lists: Sequence[Sequence[str]]) -> np.ndarray:
        x = self.head_input(self.fused_from_tokens(token_lists))
        return gbls.predict_proba(x, self.gbls_params, self.gbls_config)

    def proba_from_arrays(self, ids: np.ndarray, mask: np.ndarray, sentiment: np.ndarray | None) -> np.ndarray:
        x = self.head_input(self.fused_from_arrays(ids, mask, sentiment))
        return gbls.predict_proba(x, self.gbls_params, self.gbls_config)

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return self.proba_from_tokens([cased_tokens(t) for t in texts])

    def predict(self, texts: Sequence[str]) -> np.ndarray:
        return gbls.predict_with_threshold(self.predict_proba(texts), self.threshold)

    def prob_from_embeddings(self, emb: Tensor, mask: np.ndarray, sentiment: np.ndarray | None) -> Tensor:
        """Differentiable probability given input embeddings ``(B, n, d)``.

        ``sentiment`` rows are held fixed (they do not depend on embeddings).
        """
        z = self.encoder.forward_embeddings(emb, mask, training=False)
        if self.use_sentiment:
            z = T.concat([z, Tensor(np.broadcast_to(sentiment, (z.shape[0], SENTIMENT_DIM)))], axis=1)
        cols = np.zeros((z.shape[1], self.mask.indices.size))
        cols[self.mask.indices, np.arange(self.mask.indices.size)] = 1.0
        x = (z @ Tensor(cols) - Tensor(self.scaler_mean)) * Tensor(1.0 / self.scaler_std)
        return gbls.forward(x, self.gbls_params, self.gbls_config).prob

    # -- persistence -------------------------------------------------------------
    def tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.state())
        out.update({k: v.data for k, v in self.gbls_params.items()})
        out["pipeline.select.indices"] = self.mask.indices.astype(np.float64)
        out["pipeline.select.scores"] = self.mask.scores
        out["pipeline.scaler.mean"] = self.scaler_mean
        out["pipeline.scaler.std"] = self.scaler_std
        out["pipeline.threshold"] = np.array(self.threshold)
        return out

    def manifest(self) -> dict:
        return {
            "encoder": self.encoder.config.to_dict(),
            "gbls": self.gbls_config.to_dict(),
            "selector_method": self.mask.method,
            "use_sentiment": self.use_sentiment,
            "lexicon": self.lexicon_path,
        }

    def save(self, directory: str | Path, digest: str) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        ckpt = directory / "model.ckpt"
        checkpoint.save(ckpt, self.tensors(), digest)
        self.vocab.save(directory / "vocab.tsv")
        (directory / "model.json").write_text(
            json.dumps({"config_digest": digest, **self.manifest()}, indent=2, sort_keys=True) + "\n"
        )
        return ckpt

    @classmethod
    def load(cls, path: str | Path) -> tuple["Detector", str]:
        """Load from a checkpoint file (or its directory); returns ``(detector, digest)``."""
        path = Path(path)
        ckpt = path / "model.ckpt" if path.is_dir() else path
        tensors, digest = checkpoint.load(ckpt)
        meta = json.loads((ckpt.parent / "model.json").read_text())
        if meta.get("config_digest") != digest:
            raise checkpoint.CheckpointError("checkpoint digest does not match model.json")
        vocab = Vocabulary.load(ckpt.parent / "vocab.tsv")
        enc = Encoder(EncoderConfig(**meta["encoder"]))
        enc.load_state(tensors)
        gcfg = GBLSConfig(**meta["gbls"])
        gparams = {k: Tensor(v, requires_grad=True) for k, v in tensors.items() if k.startswith("gbls.")}
        mask = SelectionMask(
            tensors["pipeline.select.indices"].astype(np.int64),
            tensors["pipeline.select.scores"],
            method=meta["selector_method"],
        )
        det = cls(
            vocab=vocab,
            encoder=enc,
            lexicon=load_lexicon(meta.get("lexicon")),
            use_sentiment=meta["use_sentiment"],
            gbls_config=gcfg,
            gbls_params=gparams,
            mask=mask,
            scaler_mean=tensors["pipeline.scaler.mean"],
            scaler_std=tensors["pipeline.scaler.std"],
            threshold=float(tensors["pipeline.threshold"]),
            lexicon_path=meta.get("lexicon"),
        )
        return det, digest


# ---------------------------------------------------------------------------
# end-to-end
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    detector: Detector
    metrics: MetricsReport
    bias: BiasReport | None
    stage1: Stage1History
    gbls_history: gbls.GBLSHistory
    val_metrics: MetricsReport
    test_prob: np.ndarray
    timings: dict[str, float] = field(default_factory=dict)


def _arrays(det: Detector, records: Sequence[RawRecord]):
    toks = [cased_tokens(r.text) for r in records]
    ids, mask = det.encode_tokens(toks)
    return ids, mask, np.array([r.label for r in records], dtype=np.float64), toks


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def run_pipeline(
    split: DatasetSplit,
    encoder_config: EncoderConfig,
    config: TrainConfig,
    lexicon: SentimentLexicon | None = None,
    lexicon_path: str | None = None,
    stage1_cache: dict | None = None,
) -> PipelineResult:
    """Stage 1 -> extraction -> selection -> GBLS -> threshold -> test scoring.

    Vocabulary, selection mask, feature scaling and threshold all come from
    the train/validation splits; the test split is only scored.
    ``stage1_cache`` lets several runs that share encoder settings reuse one
    fine-tuned encoder.
    """
    timings: dict[str, float] = {}
    stage = "setup"
    try:
        t0 = time.perf_counter()
        lexicon = lexicon or load_lexicon(lexicon_path)
        vocab = build_vocab(
            (tokenize(normalize(r.text)) for r in split.train), min_frequency=config.vocab_min_frequency
        )
        enc_cfg = EncoderConfig(**{**encoder_config.to_dict(), "vocab_size": len(vocab)})
        encoder = Encoder(enc_cfg, seed=config.seed)
        det = Detector(vocab, encoder, lexicon, config.use_sentiment, lexicon_path=lexicon_path)
        tr = _arrays(det, split.train)
        va = _arrays(det, split.val)
        te = _arrays(det, split.test)

        stage = "stage1"
        stage1_fields = {k: v for k, v in config.to_dict().items() if k not in ("gbls", "selector", "use_sentiment")}
        key = _digest({"encoder": enc_cfg.to_dict(), "train": stage1_fields, "vocab": vocab.itos})
        if stage1_cache is not None and key in stage1_cache:
            state, hist = stage1_cache[key]
            encoder.load_state(state)
        else:
            hist = stage1_finetune(encoder, tr[:3], va[:3], config)
            if stage1_cache is not None:
                stage1_cache[key] = ({k: v.copy() for k, v in encoder.state().items()}, hist)
        timings["stage1"] = time.perf_counter() - t0

        stage = "extract"
        f_tr = det.fused_from_tokens(tr[3])
        f_va = det.fused_from_tokens(va[3])
        f_te = det.fused_from_tokens(te[3])

        stage = "select"
        det.mask = fit_selector(f_tr, tr[2], config.selector)
        s_tr = apply_mask(f_tr, det.mask)
        det.scaler_mean = s_tr.mean(axis=0)
        sd = s_tr.std(axis=0)
        det.scaler_std = np.where(sd > 1e-12, sd, 1.0)

        stage = "stage2"
        t1 = time.perf_counter()
        gcfg = GBLSConfig(**{**config.gbls.to_dict(), "input_dim": int(det.mask.indices.size)})
        x_tr, x_va, x_te = det.head_input(f_tr), det.head_input(f_va), det.head_input(f_te)
        det.gbls_config = gcfg
        det.gbls_params, ghist = gbls.train(x_tr, tr[2], x_va, va[2], gcfg, seed=config.seed + 3)
        timings["stage2"] = time.perf_counter() - t1

        stage = "threshold"
        p_va = gbls.predict_proba(x_va, det.gbls_params, gcfg)
        det.threshold = select_threshold(p_va, va[2])

        stage = "evaluate"
        p_te = gbls.predict_proba(x_te, det.gbls_params, gcfg)
        metrics = compute_metrics(p_te, te[2], det.threshold)
        bias = None
        if any(r.subgroups for r in split.test):
            bias = compute_gmb(p_te, te[2], [r.subgroups for r in split.test])
        timings["total"] = time.perf_counter() - t0
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc
    return PipelineResult(
        detector=det,
        metrics=metrics,
        bias=bias,
        stage1=hist,
        gbls_history=ghist,
        val_metrics=compute_metrics(p_va, va[2], det.threshold),
        test_prob=p_te,
        timings=timings,
    )
