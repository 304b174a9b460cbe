"""Linear-chain CRF over the five verification tags.

Scores follow the usual decomposition

    score(y) = start[y_1] + sum_j E[j, y_j] + sum_j T[y_{j-1}, y_j] + end[y_n]

All recursions run in log space.  Constraints (BIO legality and the per-token
entity mask ``m``) are applied by setting forbidden scores to ``-inf``; they
are used for decoding and, optionally, for marginals.  Training uses the
unconstrained partition function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .synth import NUM_TAGS, Tag, check_bio

NEG_INF = -np.inf


def _bio_transitions() -> np.ndarray:
    allowed = np.ones((NUM_TAGS, NUM_TAGS), dtype=bool)
    allowed[:, Tag.I_V] = False
    allowed[:, Tag.I_U] = False
    allowed[Tag.B_V, Tag.I_V] = allowed[Tag.I_V, Tag.I_V] = True
    allowed[Tag.B_U, Tag.I_U] = allowed[Tag.I_U, Tag.I_U] = True
    return allowed


ALLOWED_TRANSITIONS = _bio_transitions()
ALLOWED_START = np.array([t not in (Tag.I_V, Tag.I_U) for t in Tag])
ALLOWED_END = np.ones(NUM_TAGS, dtype=bool)
_ENTITY_LABELS = np.array([t != Tag.O for t in Tag])


@dataclass
class CrfParams:
    transitions: np.ndarray = field(default_factory=lambda: np.zeros((NUM_TAGS, NUM_TAGS)))
    start: np.ndarray = field(default_factory=lambda: np.zeros(NUM_TAGS))
    end: np.ndarray = field(default_factory=lambda: np.zeros(NUM_TAGS))

    def constrained(self) -> "CrfParams":
        return CrfParams(
            np.where(ALLOWED_TRANSITIONS, self.transitions, NEG_INF),
            np.where(ALLOWED_START, self.start, NEG_INF),
            np.where(ALLOWED_END, self.end, NEG_INF),
        )


def allowed_by_mask(m: Sequence[int]) -> np.ndarray:
    """``(n, 5)`` boolean: m_j = 1 permits only entity tags, m_j = 0 only O."""
    m = np.asarray(m, dtype=bool)
    return np.where(m[:, None], _ENTITY_LABELS[None, :], ~_ENTITY_LABELS[None, :])


def _lse(a: np.ndarray, axis=None) -> np.ndarray:
    """log-sum-exp that returns -inf (not nan) for all -inf slices."""
    a = np.asarray(a, dtype=np.float64)
    hi = np.max(a, axis=axis, keepdims=True)
    hi[~np.isfinite(hi)] = 0.0
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - hi), axis=axis, keepdims=True)) + hi
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())


def _prepare(emissions, params: CrfParams, m=None, constrained: bool = False, allowed=None):
    e = np.asarray(emissions, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] != NUM_TAGS or e.shape[0] < 1:
        raise ValueError(f"emissions must be (n>=1, {NUM_TAGS}), got {e.shape}")
    p = params.constrained() if constrained else params
    if m is not None:
        if len(m) != e.shape[0]:
            raise ValueError(f"mask length {len(m)} != sequence length {e.shape[0]}")
        e = np.where(allowed_by_mask(m), e, NEG_INF)
    if allowed is not None:
        e = np.where(allowed, e, NEG_INF)
    return e, p


def _forward_backward(e: np.ndarray, p: CrfParams):
    n = e.shape[0]
    alpha = np.empty_like(e)
    beta = np.empty_like(e)
    alpha[0] = p.start + e[0]
    for j in range(1, n):
        alpha[j] = _lse(alpha[j - 1][:, None] + p.transitions, axis=0) + e[j]
    beta[n - 1] = p.end
    for j in range(n - 2, -1, -1):
        beta[j] = _lse(p.transitions + (e[j + 1] + beta[j + 1])[None, :], axis=1)
    log_z = float(_lse(alpha[n - 1] + p.end))
    return alpha, beta, log_z


@dataclass
class Expectations:
    """Log partition plus the expected feature counts under the model."""

    log_z: float
    node: np.ndarray  # (n, 5) marginals
    edge: np.ndarray  # (5, 5) expected transition counts


def expectations(e: np.ndarray, p: CrfParams) -> Expectations:
    alpha, beta, log_z = _forward_backward(e, p)
    if not np.isfinite(log_z):
        # every path is forbidden: no mass anywhere
        return Expectations(log_z, np.zeros_like(e), np.zeros((NUM_TAGS, NUM_TAGS)))
    node = np.exp(alpha + beta - log_z)
    xi = alpha[:-1, :, None] + p.transitions[None] + (e[1:] + beta[1:])[:, None, :] - log_z
    edge = np.exp(xi).sum(axis=0)
    return Expectations(log_z, node, edge)


def log_partition(emissions, params: CrfParams, m=None, constrained: bool = False) -> float:
    e, p = _prepare(emissions, params, m, constrained)
    return _forward_backward(e, p)[2]


def sequence_score(emissions, tags: Sequence[int], params: CrfParams) -> float:
    e = np.asarray(emissions, dtype=np.float64)
    tags = np.asarray(tags, dtype=int)
    s = params.start[tags[0]] + e[np.arange(len(tags)), tags].sum() + params.end[tags[-1]]
    if len(tags) > 1:
        s += params.transitions[tags[:-1], tags[1:]].sum()
    return float(s)


def marginals(emissions, params: CrfParams, m=None, constrained: bool = False) -> np.ndarray:
    """Per-position tag probabilities, ``(n, 5)``; rows sum to one."""
    e, p = _prepare(emissions, params, m, constrained)
    return expectations(e, p).node


def nll(emissions, gold: Sequence[int], params: CrfParams) -> float:
    """Sequence negative log-likelihood under the unconstrained model."""
    return nll_and_grad(emissions, gold, params)[0]


@dataclass
class CrfGrad:
    emissions: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    end: np.ndarray


def _gold_counts(tags: np.ndarray, n: int) -> CrfGrad:
    onehot = np.zeros((n, NUM_TAGS))
    onehot[np.arange(n), tags] = 1.0
    trans = np.zeros((NUM_TAGS, NUM_TAGS))
    np.add.at(trans, (tags[:-1], tags[1:]), 1.0)
    return CrfGrad(onehot, trans, onehot[0].copy(), onehot[-1].copy())


def nll_and_grad(emissions, gold: Sequence[int], params: CrfParams) -> tuple[float, CrfGrad]:
    """``log Z - score(gold)`` and its gradient (expected minus observed counts)."""
    e, p = _prepare(emissions, params)
    tags = np.asarray(gold, dtype=int)
    if len(tags) != e.shape[0]:
        raise ValueError(f"gold length {len(tags)} != sequence length {e.shape[0]}")
    check_bio(tags)
    ex = expectations(e, p)
    obs = _gold_counts(tags, e.shape[0])
    value = ex.log_z - sequence_score(e, tags, p)
    grad = CrfGrad(ex.node - obs.emissions, ex.edge - obs.transitions,
                   ex.node[0] - obs.start, ex.node[-1] - obs.end)
    return value, grad


def token_nll_and_grad(emissions, gold: Sequence[int], params: CrfParams) -> tuple[float, CrfGrad]:
    """``-sum_j log p(y_j)`` using CRF marginals, with its exact gradient.

    ``log p(y_j) = log Z_j - log Z`` where ``Z_j`` clamps position j to y_j, so
    the gradient is a difference of expected counts under the free and the
    clamped models.
    """
    e, p = _prepare(emissions, params)
    tags = np.asarray(gold, dtype=int)
    if len(tags) != e.shape[0]:
        raise ValueError(f"gold length {len(tags)} != sequence length {e.shape[0]}")
    check_bio(tags)
    n = e.shape[0]
    free = expectations(e, p)
    value = 0.0
    g_e = np.zeros_like(e)
    g_t = np.zeros((NUM_TAGS, NUM_TAGS))
    g_s = np.zeros(NUM_TAGS)
    g_end = np.zeros(NUM_TAGS)
    for j in range(n):
        clamp = np.full(NUM_TAGS, NEG_INF)
        clamp[tags[j]] = e[j, tags[j]]
        e_j = e.copy()
        e_j[j] = clamp
        c = expectations(e_j, p)
        value += free.log_z - c.log_z
        g_e += free.node - c.node
        g_t += free.edge - c.edge
        g_s += free.node[0] - c.node[0]
        g_end += free.node[-1] - c.node[-1]
    return value, CrfGrad(g_e, g_t, g_s, g_end)


def viterbi(emissions, params: CrfParams, mask_m: Sequence[int] | None = None,
            constrained: bool = True) -> list[int]:
    """Best tag sequence under BIO legality and the entity mask.

    Ties go to the lowest tag index at every step of the backtrace.
    """
    e, p = _prepare(emissions, params, mask_m, constrained)
    n = e.shape[0]
    delta = p.start + e[0]
    back = np.zeros((n, NUM_TAGS), dtype=int)
    for j in range(1, n):
        cand = delta[:, None] + p.transitions
        back[j] = np.argmax(cand, axis=0)
        delta = cand[back[j], np.arange(NUM_TAGS)] + e[j]
    final = delta + p.end
    if not np.isfinite(final).any():
        raise ValueError("no tag sequence satisfies the constraints")
    path = [int(np.argmax(final))]
    for j in range(n - 1, 0, -1):
        path.append(int(back[j][path[-1]]))
    return path[::-1]
