"""Layers built on the autodiff core: LSTM, BiLSTM, additive attention, MLP."""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor

MASKED_SCORE = -1e30


class ParamStore:
    """Named trainable tensors plus optimizer state and architecture metadata."""

    def __init__(self, meta: Mapping | None = None):
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self.meta: dict = dict(meta or {})
        self.frozen: set[str] = set()
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    def trainable(self):
        return [(n, t) for n, t in self.params.items() if n not in self.frozen]

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {
            n: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for n, t in self.trainable()
        }

    def count(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.params.items()}


# -- initialisation -------------------------------------------------------------

def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_lstm(store: ParamStore, prefix: str, in_dim: int, hidden: int,
             rng: np.random.Generator) -> None:
    store.add(f"{prefix}.W", uniform_init(rng, (in_dim, 4 * hidden), in_dim))
    store.add(f"{prefix}.U", uniform_init(rng, (hidden, 4 * hidden), hidden))
    bias = np.zeros(4 * hidden)
    bias[hidden:2 * hidden] = 1.0  # forget gate
    store.add(f"{prefix}.b", bias)


def add_linear(store: ParamStore, prefix: str, in_dim: int, out_dim: int,
               rng: np.random.Generator, bias: bool = True) -> None:
    store.add(f"{prefix}.W", uniform_init(rng, (in_dim, out_dim), in_dim))
    if bias:
        store.add(f"{prefix}.b", np.zeros(out_dim))


# -- LSTM -----------------------------------------------------------------------

def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, W: Tensor, U: Tensor, b: Tensor,
              mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """One LSTM step, gates ordered input/forget/candidate/output.

    Works on single vectors or on a batch (leading dimension).  Where
    ``mask`` is 0 the previous state is carried through unchanged.
    """
    hidden = U.shape[0]
    if W.shape != (x.shape[-1], 4 * hidden) or h_prev.shape[-1] != hidden or c_prev.shape[-1] != hidden:
        raise ShapeError(
            f"lstm_step dims: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, W {W.shape}, U {U.shape}"
        )
    xd, hd, cd = x.data, h_prev.data, c_prev.data
    z = xd @ W.data + hd @ U.data + b.data
    i = ag._sigmoid(z[..., :hidden])
    f = ag._sigmoid(z[..., hidden:2 * hidden])
    g = np.tanh(z[..., 2 * hidden:3 * hidden])
    o = ag._sigmoid(z[..., 3 * hidden:])
    c_new = f * cd + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64)[..., None]
        h_out = m * h_new + (1.0 - m) * hd
        c_out = m * c_new + (1.0 - m) * cd
    else:
        m = None
        h_out, c_out = h_new, c_new

    def back(grad):
        gh, gc = grad[..., :hidden], grad[..., hidden:]
        if m is not None:
            gh_new, gc_new = m * gh, m * gc
            gh_carry, gc_carry = (1.0 - m) * gh, (1.0 - m) * gc
        else:
            gh_new, gc_new = gh, gc
            gh_carry = gc_carry = 0.0
        gcn = gc_new + gh_new * o * (1.0 - tc * tc)
        dz = np.concatenate([
            gcn * g * i * (1.0 - i),
            gcn * cd * f * (1.0 - f),
            gcn * i * (1.0 - g * g),
            gh_new * tc * o * (1.0 - o),
        ], axis=-1)
        if xd.ndim == 1:
            gW = np.outer(xd, dz)
            gU = np.outer(hd, dz)
            gb = dz
        else:
            gW = xd.T @ dz
            gU = hd.T @ dz
            gb = dz.sum(axis=0)
        return (
            (x, dz @ W.data.T),
            (h_prev, dz @ U.data.T + gh_carry),
            (c_prev, gcn * f + gc_carry),
            (W, gW), (U, gU), (b, gb),
        )

    hc = ag.custom(np.concatenate([h_out, c_out], axis=-1), (x, h_prev, c_prev, W, U, b), back)
    return hc[..., :hidden], hc[..., hidden:]


def lstm(xs: Tensor, store: ParamStore, prefix: str, mask: np.ndarray | None = None,
         reverse: bool = False) -> Tensor:
    """Run an LSTM over ``xs`` of shape ``(batch, time, dim)``; returns ``(batch, time, hidden)``."""
    batch, steps, _ = xs.shape
    W, U, b = store[f"{prefix}.W"], store[f"{prefix}.U"], store[f"{prefix}.b"]
    hidden = U.shape[0]
    h = Tensor(np.zeros((batch, hidden)))
    c = Tensor(np.zeros((batch, hidden)))
    outs: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        step_mask = None if mask is None else mask[:, t]
        h, c = lstm_step(xs[:, t, :], h, c, W, U, b, step_mask)
        outs[t] = h
    return ag.stack(outs, axis=1)


def bilstm(xs: Tensor, store: ParamStore, prefix: str, mask: np.ndarray | None = None) -> Tensor:
    """Concatenated forward/backward states, ``(batch, time, 2*hidden)``.

    Padding must sit at the end of each row; masked steps carry state, so the
    backward direction starts fresh at each row's last real token.
    """
    if xs.shape[1] == 0:
        raise ShapeError("bilstm needs a non-empty sequence")
    fwd = lstm(xs, store, f"{prefix}.fwd", mask)
    bwd = lstm(xs, store, f"{prefix}.bwd", mask, reverse=True)
    return ag.concat([fwd, bwd], axis=-1)


# -- attention and feed-forward --------------------------------------------------

def additive_attention(query: Tensor, keys: Tensor, Wq: Tensor, Wk: Tensor, v: Tensor,
                       bk: Tensor | None = None, key_mask: np.ndarray | None = None,
                       extra_scores: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """``score = v . tanh(Wq q + Wk k)``; returns ``(context, weights)``.

    Shapes: query ``(B, n, Dq)``, keys ``(B, a, Dk)`` -> context ``(B, n, Dk)``,
    weights ``(B, n, a)``.  ``extra_scores`` (same shape as the weights) is
    added before the softmax.
    """
    if keys.shape[-2] == 0:
        raise ShapeError("attention needs at least one key")
    q = query @ Wq
    k = keys @ Wk
    if bk is not None:
        k = k + bk
    B, n, A = q.shape
    a = k.shape[1]
    hidden = ag.tanh(ag.reshape(q, (B, n, 1, A)) + ag.reshape(k, (B, 1, a, A)))
    scores = hidden @ v
    if extra_scores is not None:
        scores = scores + extra_scores
    if key_mask is not None:
        bias = np.where(np.asarray(key_mask, dtype=bool), 0.0, MASKED_SCORE)[:, None, :]
        scores = scores + bias
    weights = ag.softmax(scores, axis=-1)
    return weights @ keys, weights


def linear(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    out = x @ store[f"{prefix}.W"]
    if f"{prefix}.b" in store:
        out = out + store[f"{prefix}.b"]
    return out


def mlp(x: Tensor, store: ParamStore, prefixes: Sequence[str]) -> Tensor:
    """tanh hidden layers followed by a linear output layer."""
    for p in prefixes[:-1]:
        x = ag.tanh(linear(x, store, p))
    return linear(x, store, prefixes[-1])


def embed(ids, table: Tensor) -> Tensor:
    return ag.take_rows(table, ids)


# -- embedding files ---------------------------------------------------------------

def load_embedding_file(path: str | Path, vocab: Mapping[str, int], table: np.ndarray) -> int:
    """Overwrite rows of ``table`` with vectors from a GloVe-format text file.

    Returns the number of vocabulary words found.  Lines whose width does not
    match the table are rejected.
    """
    dim = table.shape[1]
    found = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            idx = vocab.get(word)
            if idx is not None:
                table[idx] = np.asarray(values, dtype=np.float64)
                found += 1
    return found
