"""The quantity verification model: encoders, attention, CRF tag head and verdict head."""

from __future__ import annotations

import copy
import io
import json
import struct
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import crf
from .nn import autograd as ag
from .nn.autograd import Tensor
from .nn.layers import (
    ParamStore,
    add_linear,
    add_lstm,
    additive_attention,
    bilstm,
    embed,
    linear,
    load_embedding_file,
)
from .nn.optim import NumericError, adam_step, clip_global_norm
from .quantities import tag_quantities
from .synth import NUM_TAGS, LabeledInstance, Verdict
from .text import MAX_ARTICLE, MAX_SUMMARY, Token, words

PAD, UNK = "<pad>", "<unk>"
PROB_FLOOR = 1e-12
LOSS_MODES = ("sequence", "token-marginal")
POOLINGS = ("entity", "mean")
MATCH_TERMS = ("lexical", "embedding", "none")


class ConfigError(ValueError):
    pass


@dataclass
class HermanConfig:
    hidden: int = 256
    embed: int = 100
    vocab: int = 50_000
    alpha: float = 0.66
    lr: float = 0.001
    clip_norm: float = 5.0
    batch_size: int = 32
    max_article: int = MAX_ARTICLE
    max_summary: int = MAX_SUMMARY
    seed: int = 0
    loss_mode: str = "sequence"
    patience: int = 3
    max_epochs: int = 30
    m_embed: int = 4
    # wiring switches
    match_attention: str = "lexical"
    match_gain: float = 10.0
    product_features: bool = True
    z_pool: str = "entity"
    m_input: bool = True
    m_emission: bool = True

    def validate(self) -> "HermanConfig":
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("hidden", "embed", "vocab", "batch_size", "max_article", "max_summary",
                     "max_epochs", "m_embed"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vocab < 3:
            raise ConfigError("vocab must leave room for padding and unknown tokens")
        if self.lr < 0 or self.clip_norm <= 0:
            raise ConfigError("lr must be >= 0 and clip_norm > 0")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.match_attention not in MATCH_TERMS:
            raise ConfigError(f"match_attention must be one of {MATCH_TERMS}, got {self.match_attention!r}")
        if self.z_pool not in POOLINGS:
            raise ConfigError(f"z_pool must be one of {POOLINGS}, got {self.z_pool!r}")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "HermanConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return asdict(self)


class Vocab:
    """Word to index map with reserved padding (0) and unknown (1) entries."""

    def __init__(self, words: Sequence[str]):
        if list(words[:2]) != [PAD, UNK]:
            raise ValueError("vocabulary must start with the padding and unknown tokens")
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate vocabulary entries")

    @classmethod
    def build(cls, token_lists: Iterable[Sequence[str]], max_size: int) -> "Vocab":
        counts = Counter(w for toks in token_lists for w in toks)
        ranked = sorted(counts, key=lambda w: (-counts[w], w))
        return cls([PAD, UNK] + [w for w in ranked if w not in (PAD, UNK)][: max_size - 2])

    def __len__(self) -> int:
        return len(self.words)

    def ids(self, toks: Sequence[str]) -> list[int]:
        return [self.index.get(w, 1) for w in toks]


@dataclass
class HermanOutput:
    tag_sequence: list[int]
    tag_marginals: np.ndarray
    z_prob: float
    m: list[int] = field(default_factory=list)
    truncated: bool = False

    @property
    def verdict(self) -> Verdict:
        return Verdict.VERIFIED if self.z_prob > 0.5 else Verdict.UNVERIFIED


@dataclass
class Batch:
    article: np.ndarray       # (B, a) word ids
    article_mask: np.ndarray  # (B, a) 1 for real tokens
    summary: np.ndarray       # (B, n)
    summary_mask: np.ndarray  # (B, n)
    m: np.ndarray             # (B, n) entity mask, 0 on padding
    y: np.ndarray             # (B, n) gold tags, O on padding
    z: np.ndarray             # (B,) 1.0 for VERIFIED
    lengths: np.ndarray       # (B,) summary lengths
    same_word: np.ndarray     # (B, n, a) 1 where summary token j equals article token i

    @classmethod
    def build(cls, vocab: Vocab, items: Sequence[tuple[Sequence[str], Sequence[str], Sequence[int],
                                                     Sequence[int] | None, float | None]]) -> "Batch":
        """``items`` holds (article words, summary words, m, y or None, z or None)."""
        if not items:
            raise ValueError("empty batch")
        B = len(items)
        a = max(len(it[0]) for it in items)
        n = max(len(it[1]) for it in items)
        if a == 0 or n == 0:
            raise ValueError("article and summary must be non-empty")
        out = cls(np.zeros((B, a), np.int64), np.zeros((B, a)), np.zeros((B, n), np.int64),
                  np.zeros((B, n)), np.zeros((B, n)), np.full((B, n), 4, np.int64),
                  np.zeros(B), np.zeros(B, np.int64), np.zeros((B, n, a)))
        for b, (art, summ, m, y, z) in enumerate(items):
            if not art or not summ:
                raise ValueError("article and summary must be non-empty")
            if len(m) != len(summ):
                raise ValueError(f"mask length {len(m)} != summary length {len(summ)}")
            out.article[b, :len(art)] = vocab.ids(art)
            out.article_mask[b, :len(art)] = 1.0
            out.summary[b, :len(summ)] = vocab.ids(summ)
            out.summary_mask[b, :len(summ)] = 1.0
            out.m[b, :len(summ)] = m
            if y is not None:
                out.y[b, :len(summ)] = y
            out.z[b] = 0.0 if z is None else z
            out.lengths[b] = len(summ)
            out.same_word[b, :len(summ), :len(art)] = (
                np.asarray(summ, dtype=object)[:, None] == np.asarray(art, dtype=object)[None, :])
        return out

    @classmethod
    def from_instances(cls, vocab: Vocab, instances: Sequence[LabeledInstance]) -> "Batch":
        return cls.build(vocab, [
            (i.record.article_words, i.record.summary_words, i.m, i.y,
             1.0 if i.z == Verdict.VERIFIED else 0.0)
            for i in instances
        ])


# -- parameters -------------------------------------------------------------------

def feature_width(cfg: HermanConfig) -> int:
    return (6 if cfg.product_features else 4) * cfg.hidden


def init_params(cfg: HermanConfig, vocab_size: int, seed: int | None = None) -> ParamStore:
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    H, E = cfg.hidden, cfg.embed
    store = ParamStore({"hidden": H, "embed": E, "vocab_size": vocab_size})
    store.add("embed.words", rng.normal(size=(vocab_size, E)))
    dec_in = E
    if cfg.m_input:
        store.add("embed.m", rng.normal(size=(2, cfg.m_embed)))
        dec_in += cfg.m_embed
    add_lstm(store, "article.fwd", E, H, rng)
    add_lstm(store, "article.bwd", E, H, rng)
    add_lstm(store, "summary.fwd", dec_in, H, rng)
    add_lstm(store, "summary.bwd", dec_in, H, rng)
    add_linear(store, "attn.query", 2 * H, H, rng, bias=False)
    add_linear(store, "attn.key", 2 * H, H, rng)
    store.add("attn.v", rng.uniform(-1, 1, size=H) / np.sqrt(H))
    if cfg.match_attention != "none":
        store.add("attn.match_gain", np.full(1, cfg.match_gain))
    F = feature_width(cfg)
    add_linear(store, "emit", F + (1 if cfg.m_emission else 0), NUM_TAGS, rng)
    add_linear(store, "verdict.hidden", F, H, rng)
    add_linear(store, "verdict.out", H, 1, rng)
    store.add("crf.transitions", np.zeros((NUM_TAGS, NUM_TAGS)))
    store.add("crf.start", np.zeros(NUM_TAGS))
    store.add("crf.end", np.zeros(NUM_TAGS))
    return store


def crf_params(store: ParamStore) -> crf.CrfParams:
    return crf.CrfParams(store["crf.transitions"].data, store["crf.start"].data, store["crf.end"].data)


# -- forward and loss ---------------------------------------------------------------

def forward(store: ParamStore, cfg: HermanConfig, batch: Batch) -> tuple[Tensor, Tensor]:
    """Emission scores ``(B, n, 5)`` and verdict probabilities ``(B,)``."""
    table = store["embed.words"]
    art_emb = embed(batch.article, table)
    sum_emb = embed(batch.summary, table)
    art = bilstm(art_emb, store, "article", batch.article_mask)
    dec_in = sum_emb
    if cfg.m_input:
        dec_in = ag.concat([sum_emb, embed(batch.m.astype(np.int64), store["embed.m"])], axis=-1)
    summ = bilstm(dec_in, store, "summary", batch.summary_mask)

    # direct word-identity evidence between summary and article tokens
    extra = None
    if cfg.match_attention == "lexical":
        extra = Tensor(batch.same_word) * store["attn.match_gain"]
    elif cfg.match_attention == "embedding":
        extra = (sum_emb @ ag.swapaxes(art_emb, 1, 2)) * store["attn.match_gain"]
    ctx, _ = additive_attention(summ, art, store["attn.query.W"], store["attn.key.W"],
                                store["attn.v"], store["attn.key.b"], batch.article_mask, extra)
    parts = [summ, ctx]
    if cfg.product_features:
        parts.append(summ * ctx)
    feats = ag.concat(parts, axis=-1)

    emit_in = feats
    if cfg.m_emission:
        emit_in = ag.concat([feats, Tensor(batch.m[..., None])], axis=-1)
    emissions = linear(emit_in, store, "emit")

    weights = batch.summary_mask
    if cfg.z_pool == "entity":
        ent = batch.m * batch.summary_mask
        has_ent = ent.sum(axis=1, keepdims=True) > 0
        weights = np.where(has_ent, ent, batch.summary_mask)
    weights = weights / weights.sum(axis=1, keepdims=True)
    pooled = ag.sum_(feats * Tensor(weights[..., None]), axis=1)
    hidden = ag.tanh(linear(pooled, store, "verdict.hidden"))
    z_prob = ag.sigmoid(ag.reshape(linear(hidden, store, "verdict.out"), (-1,)))
    return emissions, z_prob


def crf_nll(emissions: Tensor, store: ParamStore, batch: Batch, mode: str = "sequence") -> Tensor:
    """Per-sequence tag loss ``(B,)`` as one fused node with an exact gradient."""
    T, S, E = store["crf.transitions"], store["crf.start"], store["crf.end"]
    params = crf.CrfParams(T.data, S.data, E.data)
    fn = crf.nll_and_grad if mode == "sequence" else crf.token_nll_and_grad
    values, grads = [], []
    for b, n in enumerate(batch.lengths):
        v, g = fn(emissions.data[b, :n], batch.y[b, :n], params)
        values.append(v)
        grads.append(g)

    def back(g_out):
        g_em = np.zeros_like(emissions.data)
        g_t, g_s, g_e = np.zeros_like(T.data), np.zeros_like(S.data), np.zeros_like(E.data)
        for b, (n, g) in enumerate(zip(batch.lengths, grads)):
            w = g_out[b]
            g_em[b, :n] = w * g.emissions
            g_t += w * g.transitions
            g_s += w * g.start
            g_e += w * g.end
        return ((emissions, g_em), (T, g_t), (S, g_s), (E, g_e))

    return ag.custom(np.asarray(values), (emissions, T, S, E), back)


def verdict_bce(z_prob: Tensor, z: np.ndarray) -> Tensor:
    p = ag.clip(z_prob, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return -(Tensor(z) * ag.log(p) + Tensor(1.0 - z) * ag.log(1.0 - p))


def combine(tag_loss: Tensor, z_loss: Tensor, alpha: float) -> Tensor:
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * tag_loss + (1.0 - alpha) * z_loss


def batch_loss(store: ParamStore, cfg: HermanConfig, batch: Batch) -> Tensor:
    """Mean combined loss over the batch."""
    emissions, z_prob = forward(store, cfg, batch)
    per_item = combine(crf_nll(emissions, store, batch, cfg.loss_mode), verdict_bce(z_prob, batch.z),
                       cfg.alpha)
    return ag.mean(per_item)


def _words(text) -> list[str]:
    if isinstance(text, str):
        return words(text)
    return [t if isinstance(t, str) else t.text for t in text]


# -- the model object -------------------------------------------------------------------

CHECKPOINT_MAGIC = b"HRMN"
CHECKPOINT_VERSION = 1


class Herman:
    """Configuration, vocabulary and parameters bundled for inference and persistence."""

    def __init__(self, cfg: HermanConfig, vocab: Vocab, store: ParamStore | None = None):
        self.cfg = cfg.validate()
        self.vocab = vocab
        self.store = store if store is not None else init_params(cfg, len(vocab))

    # inference ---------------------------------------------------------------
    def predict_batch(self, items) -> list[HermanOutput]:
        """``items``: (article words, summary words, m) triples."""
        batch = Batch.build(self.vocab, [(a, s, m, None, None) for a, s, m in items])
        with ag.no_grad():
            emissions, z_prob = forward(self.store, self.cfg, batch)
        params = crf_params(self.store)
        outs = []
        for b, n in enumerate(batch.lengths):
            e = emissions.data[b, :n]
            m = [int(v) for v in batch.m[b, :n]]
            outs.append(HermanOutput(
                crf.viterbi(e, params, m),
                crf.marginals(e, params, m, constrained=True),
                float(z_prob.data[b]),
                m,
            ))
        return outs

    def predict(self, instances: Sequence[LabeledInstance], batch_size: int = 64) -> list[HermanOutput]:
        """Outputs for labelled instances, using each instance's stored entity mask."""
        outs: list[HermanOutput] = []
        for k in range(0, len(instances), batch_size):
            chunk = instances[k:k + batch_size]
            outs.extend(self.predict_batch(
                [(i.record.article_words, i.record.summary_words, i.m) for i in chunk]))
        return outs

    def verify(self, article: str | Sequence[Token] | Sequence[str],
               summary: str | Sequence[Token] | Sequence[str]) -> HermanOutput:
        art, summ = _words(article), _words(summary)
        if not art or not summ:
            raise ValueError("article and summary must be non-empty")
        truncated = len(summ) > self.cfg.max_summary or len(art) > self.cfg.max_article
        art, summ = art[:self.cfg.max_article], summ[:self.cfg.max_summary]
        m = [0] * len(summ)
        for span in tag_quantities(summ):
            for j in range(span.token_start, span.token_end):
                m[j] = 1
        out = self.predict_batch([(art, summ, m)])[0]
        out.truncated = truncated
        return out

    def loss(self, instances: Sequence[LabeledInstance], batch_size: int = 64) -> float:
        """Mean combined loss over ``instances`` (no gradient)."""
        total = 0.0
        with ag.no_grad():
            for k in range(0, len(instances), batch_size):
                chunk = instances[k:k + batch_size]
                total += batch_loss(self.store, self.cfg, Batch.from_instances(self.vocab, chunk)).item() * len(chunk)
        return total / len(instances)

    # persistence -------------------------------------------------------------
    def save(self, path: str | Path, header: dict | None = None) -> None:
        block = json.dumps({"config": self.cfg.to_dict(), "vocab": self.vocab.words,
                            "meta": self.store.meta, "header": header or {}},
                           sort_keys=True).encode("utf-8")
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        buf.write(struct.pack("<I", CHECKPOINT_VERSION))
        buf.write(struct.pack("<Q", len(block)))
        buf.write(block)
        buf.write(struct.pack("<I", len(self.store)))
        for name, t in self.store:
            raw = name.encode("utf-8")
            buf.write(struct.pack("<I", len(raw)))
            buf.write(raw)
            buf.write(struct.pack("<I", t.data.ndim))
            buf.write(struct.pack(f"<{t.data.ndim}Q", *t.data.shape))
            buf.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "Herman":
        data = Path(path).read_bytes()
        pos = 0

        def take(size: int) -> bytes:
            nonlocal pos
            if pos + size > len(data):
                raise ValueError(f"{path}: truncated checkpoint")
            chunk = data[pos:pos + size]
            pos += size
            return chunk

        if take(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", take(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (block_len,) = struct.unpack("<Q", take(8))
        block = json.loads(take(block_len).decode("utf-8"))
        cfg = HermanConfig.from_dict(block["config"])
        store = ParamStore(block.get("meta", {}))
        (count,) = struct.unpack("<I", take(4))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", take(4))
            name = take(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", take(4))
            shape = struct.unpack(f"<{rank}Q", take(8 * rank))
            size = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
            store.add(name, values)
        if pos != len(data):
            raise ValueError(f"{path}: trailing bytes after tensors")
        model = cls(cfg, Vocab(block["vocab"]), store)
        model.header = block.get("header", {})
        return model


# -- training -----------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: Herman
    log: list[dict]
    best_epoch: int
    stopped_early: bool


def train(train_set: Sequence[LabeledInstance], val_set: Sequence[LabeledInstance],
          cfg: HermanConfig, embedding_file: str | Path | None = None,
          on_epoch: Callable[[dict], None] | None = None,
          clock: Callable[[], float] = time.time) -> TrainResult:
    """Mini-batch Adam with early stopping on validation loss.

    Returns the parameters from the best validation epoch.  The log has one
    row per epoch: ``{epoch, train_loss, val_loss, seed, timestamp}``.
    """
    cfg.validate()
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    vocab = Vocab.build((i.record.article_words + i.record.summary_words for i in train_set), cfg.vocab)
    model = Herman(cfg, vocab)
    if embedding_file is not None:
        load_embedding_file(embedding_file, vocab.index, model.store["embed.words"].data)
    rng = np.random.default_rng(cfg.seed)
    order = list(train_set)
    best_val, best_state, best_epoch = np.inf, None, 0
    bad_epochs, step, log = 0, 0, []
    stopped_early = False
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(order))
        total = 0.0
        for k in range(0, len(perm), cfg.batch_size):
            chunk = [order[i] for i in perm[k:k + cfg.batch_size]]
            model.store.zero_grad()
            loss = batch_loss(model.store, cfg, Batch.from_instances(vocab, chunk))
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite training loss at epoch {epoch}, step {step + 1}")
            loss.backward()
            grads, _ = clip_global_norm(model.store.grads(), cfg.clip_norm)
            step += 1
            adam_step(model.store, grads, step, cfg.lr)
            total += loss.item() * len(chunk)
        val_loss = model.loss(val_set)
        if not np.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        row = {"epoch": epoch, "train_loss": total / len(order), "val_loss": val_loss,
               "seed": cfg.seed, "timestamp": clock()}
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if val_loss < best_val:
            best_val, best_epoch, bad_epochs = val_loss, epoch, 0
            best_state = {n: t.data.copy() for n, t in model.store}
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                stopped_early = True
                break
    for name, values in best_state.items():
        model.store[name].data = values
    model.store.moments.clear()
    return TrainResult(model, log, best_epoch, stopped_early)


def clone(model: Herman) -> Herman:
    return Herman(copy.deepcopy(model.cfg), Vocab(model.vocab.words), copy.deepcopy(model.store))
