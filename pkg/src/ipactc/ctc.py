"""CTC loss via forward-backward dynamic programming in log space.

The label sequence y is expanded to z = (blank, y1, blank, ..., yL, blank)
of length S = 2L+1.  The forward lattice alpha[t, s] holds the log total
probability of all prefix paths that sit in state s at frame t, including
the emission at t; beta[t, s] holds the log total probability of suffix
paths covering frames t+1..T-1.  At every t, logsumexp(alpha[t] + beta[t])
equals the full log likelihood, which is what the gradient uses.

A transition into state s may come from s (stay), s-1, or s-2; the skip from
s-2 is allowed only when z[s] is a real label different from z[s-2], which
is exactly what forces a blank between repeated labels.

The gradient is taken with respect to pre-softmax logits u, where the frame
posteriors are softmax(u[t]):  d(-log P)/du[t, k] = p[t, k] - occ[t, k],
with occ the posterior occupancy of symbol k at frame t summed over lattice
states.  Each gradient row therefore sums to zero.

ctc_brute_force enumerates every length-T path and keeps the ones that
collapse to y.  It is the testing oracle for the lattice recursion and is
deliberately independent of it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .numerics import log_sum_exp

BLANK_ID = 0

NEG_INF = -math.inf


class InfeasibleAlignmentError(ValueError):
    """No length-T path collapses to the requested labels."""


class InstanceTooLargeError(ValueError):
    """Brute-force enumeration guard tripped."""


@dataclass(frozen=True)
class CtcInstance:
    """Per-frame log posteriors (T x V, rows log-sum to 0) plus target labels."""

    log_probs: np.ndarray
    labels: tuple[int, ...]

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 2 or lp.shape[0] < 1 or lp.shape[1] < 2:
            raise ValueError(f"log_probs must be T x V with T>=1, V>=2, got {lp.shape}")
        row_mass = np.array([log_sum_exp(row) for row in lp])
        if np.max(np.abs(row_mass)) > 1e-8:
            raise ValueError("log_probs rows must normalize to probability 1")
        labels = tuple(int(y) for y in self.labels)
        V = lp.shape[1]
        if any(y < 1 or y >= V for y in labels):
            raise ValueError(f"labels must lie in [1, {V}), got {labels}")
        object.__setattr__(self, "log_probs", lp)
        object.__setattr__(self, "labels", labels)

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.log_probs.shape[1]


@dataclass(frozen=True)
class CtcResult:
    log_likelihood: float
    grad_logits: np.ndarray  # T x V, d(-log P)/d u[t, k]


def extend_labels(labels) -> np.ndarray:
    """Blank-interleaved label sequence z of length 2L+1."""
    z = np.full(2 * len(labels) + 1, BLANK_ID, dtype=np.int64)
    z[1::2] = labels
    return z


def min_frames(labels) -> int:
    """Feasibility bound: L plus one frame per adjacent repeated label."""
    labels = tuple(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def collapse_path(path, blank: int = BLANK_ID) -> list[int]:
    """Remove consecutive duplicates, then remove blanks, in that order."""
    out = []
    prev = None
    for p in path:
        p = int(p)
        if p != prev:
            out.append(p)
        prev = p
    return [p for p in out if p != blank]


def _skip_allowed(z: np.ndarray) -> np.ndarray:
    """allow[s]: transition s-2 -> s may skip the blank between labels."""
    S = len(z)
    allow = np.zeros(S, dtype=bool)
    if S >= 3:
        allow[2:] = (z[2:] != BLANK_ID) & (z[2:] != z[:-2])
    return allow


def _forward_lattice(log_probs: np.ndarray, z: np.ndarray) -> np.ndarray:
    T = log_probs.shape[0]
    S = len(z)
    emit = log_probs[:, z]  # T x S
    allow = _skip_allowed(z)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        if S >= 3:
            acc[2:][allow[2:]] = np.logaddexp(acc[2:][allow[2:]], prev[:-2][allow[2:]])
        alpha[t] = acc + emit[t]
    return alpha


def _backward_lattice(log_probs: np.ndarray, z: np.ndarray) -> np.ndarray:
    T = log_probs.shape[0]
    S = len(z)
    emit = log_probs[:, z]
    allow = _skip_allowed(z)
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        if S >= 3:
            acc[:-2][allow[2:]] = np.logaddexp(acc[:-2][allow[2:]], nxt[2:][allow[2:]])
        beta[t] = acc
    return beta


def ctc_log_likelihood(instance: CtcInstance) -> float:
    """ln P(y | X); -inf when T is too short for the labels."""
    z = extend_labels(instance.labels)
    alpha = _forward_lattice(instance.log_probs, z)
    tail = alpha[-1, -1]
    if len(z) > 1:
        tail = np.logaddexp(tail, alpha[-1, -2])
    return float(tail)


def ctc_grad(instance: CtcInstance) -> CtcResult:
    """Loss and gradient with respect to pre-softmax logits."""
    z = extend_labels(instance.labels)
    lp = instance.log_probs
    T, V = lp.shape
    alpha = _forward_lattice(lp, z)
    beta = _backward_lattice(lp, z)
    loglik = alpha[-1, -1]
    if len(z) > 1:
        loglik = np.logaddexp(loglik, alpha[-1, -2])
    loglik = float(loglik)
    if loglik == NEG_INF:
        raise InfeasibleAlignmentError(
            f"labels of length {len(instance.labels)} need at least "
            f"{min_frames(instance.labels)} frames, got {T}"
        )
    # posterior occupancy of each state, then scattered onto symbols
    state_post = np.exp(alpha + beta - loglik)  # T x S, entries in [0, 1]
    occ = np.zeros((T, V))
    for s, sym in enumerate(z):
        occ[:, sym] += state_post[:, s]
    grad = np.exp(lp) - occ
    return CtcResult(log_likelihood=loglik, grad_logits=grad)


def ctc_brute_force(instance: CtcInstance, guard: int = 10**7) -> float:
    """Enumeration oracle: log-sum over every path whose collapse equals y."""
    T, V = instance.log_probs.shape
    if V**T > guard:
        raise InstanceTooLargeError(f"V^T = {V}^{T} exceeds the {guard} path guard")
    labels = list(instance.labels)
    lp = instance.log_probs
    total = NEG_INF
    for path in itertools.product(range(V), repeat=T):
        if collapse_path(path) != labels:
            continue
        logp = 0.0
        for t, sym in enumerate(path):
            logp += lp[t, sym]
        total = np.logaddexp(total, logp)
    return float(total)
