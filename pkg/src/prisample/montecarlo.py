"""Vectorised replicate engine for Monte Carlo checks.

Each function takes a block of independent trials (rows) over one fixed weight
vector (columns) and returns dense per-trial weight estimates. The streaming
reservoirs in :mod:`prisample.samplers` are the reference; tests pin the two
paths to identical output on shared alphas.

Trials are processed in chunks, each drawn from its own child generator, so
results do not depend on chunk scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .model import SchemeTag, SeededGenerator
from .samplers import solve_threshold

__all__ = [
    "RunningMoments",
    "chunks",
    "priority_block",
    "threshold_block",
    "uniform_block",
    "wr_block",
    "estimate_block",
]

CHUNK_ELEMENTS = 1 << 21


@dataclass
class Block:
    """Per-trial weight estimates plus the quantities some checks need."""

    est: np.ndarray  # (t, n) weight estimates
    tau: Optional[np.ndarray] = None  # (t,) threshold, priority schemes only
    sampled: Optional[np.ndarray] = None  # (t, n) bool
    distinct: Optional[np.ndarray] = None  # (t,) number of distinct sampled items

    def var_est(self, weights: np.ndarray) -> np.ndarray:
        """Per-item variance estimates tau * max(0, tau - w) on sampled items."""
        tau = self.tau[:, None]
        v = tau * np.maximum(0.0, tau - weights[None, :])
        return np.where(self.sampled, v, 0.0)


def chunks(trials: int, n: int, gen: SeededGenerator, chunk_elements: int = CHUNK_ELEMENTS) -> Iterator[tuple[int, SeededGenerator]]:
    """Yield (rows, child generator) pairs covering ``trials`` rows."""
    per = max(1, chunk_elements // max(n, 1))
    index = 0
    done = 0
    while done < trials:
        t = min(per, trials - done)
        yield t, gen.spawn(index)
        index += 1
        done += t


def top_order(q: np.ndarray, m: int) -> np.ndarray:
    """Column indices of the m highest priorities per row, best first.

    Equal priorities are ranked by lower column index, matching the streaming
    tie rule when ids follow column order.
    """
    t, n = q.shape
    m = min(m, n)
    if m == 0:
        return np.empty((t, 0), dtype=np.int64)
    ids = np.broadcast_to(np.arange(n), q.shape)
    if m < n and np.all(q > 0):
        part = np.argpartition(-q, m - 1, axis=1)[:, :m]
        qp = np.take_along_axis(q, part, axis=1)
        order = np.lexsort((np.take_along_axis(ids, part, axis=1), -qp), axis=1)
        return np.take_along_axis(part, order, axis=1)
    order = np.lexsort((ids, -q), axis=1)
    return order[:, :m]


def priority_block(weights: np.ndarray, k: int, alphas: np.ndarray) -> Block:
    t, n = alphas.shape
    q = weights[None, :] / alphas
    sampled = np.zeros((t, n), dtype=bool)
    rows = np.arange(t)[:, None]
    if n <= k:
        sampled[:] = True
        tau = np.zeros(t)
    else:
        order = top_order(q, k + 1)
        sampled[rows, order[:, :k]] = True
        tau = q[np.arange(t), order[:, k]]
    est = np.where(sampled, np.maximum(weights[None, :], tau[:, None]), 0.0)
    return Block(est, tau, sampled, sampled.sum(axis=1))


def threshold_block(weights: np.ndarray, k: int, alphas: np.ndarray, tau_thr: Optional[float] = None) -> Block:
    t, n = alphas.shape
    if tau_thr is None:
        tau_thr = solve_threshold(weights, k)
    if tau_thr <= 0:
        sampled = np.ones((t, n), dtype=bool)
    else:
        sampled = weights[None, :] / alphas > tau_thr
    tau = np.full(t, tau_thr)
    est = np.where(sampled, np.maximum(weights[None, :], tau_thr), 0.0)
    return Block(est, tau, sampled, sampled.sum(axis=1))


def uniform_block(weights: np.ndarray, k: int, keys: np.ndarray) -> Block:
    """Uniform k-subset per row: the k smallest of i.i.d. uniform keys."""
    t, n = keys.shape
    sampled = np.zeros((t, n), dtype=bool)
    if k >= n:
        sampled[:] = True
        scale = 1.0
    elif k > 0:
        idx = np.argpartition(keys, k - 1, axis=1)[:, :k]
        sampled[np.arange(t)[:, None], idx] = True
        scale = n / k
    else:
        scale = 0.0
    est = np.where(sampled, scale * weights[None, :], 0.0)
    return Block(est, None, sampled, sampled.sum(axis=1))


def wr_draws(weights: np.ndarray, k: int, uniforms: np.ndarray) -> np.ndarray:
    """Slot contents (t, k): index i with probability w_i / W per slot."""
    cum = np.cumsum(weights)
    total = cum[-1]
    idx = np.searchsorted(cum, uniforms * total, side="right")
    return np.minimum(idx, len(weights) - 1)


def wr_counts(n: int, draws: np.ndarray) -> np.ndarray:
    t = draws.shape[0]
    flat = (np.arange(t)[:, None] * n + draws).ravel()
    return np.bincount(flat, minlength=t * n).reshape(t, n)


def wr_block(weights: np.ndarray, k: int, uniforms: np.ndarray, mode: str = "presence") -> Block:
    n = len(weights)
    counts = wr_counts(n, wr_draws(weights, k, uniforms))
    total = weights.sum()
    present = counts > 0
    if mode == "count":
        est = counts * (total / k)
    else:
        p = -np.expm1(k * np.log1p(-np.minimum(weights / total, 1.0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            est = np.where(present, weights[None, :] / p[None, :], 0.0)
    return Block(est, None, present, present.sum(axis=1))


def estimate_block(scheme: SchemeTag, weights: np.ndarray, k: int, t: int, gen: SeededGenerator,
                   tau_thr: Optional[float] = None) -> Block:
    """Draw ``t`` fresh trials of ``scheme`` from ``gen``."""
    n = len(weights)
    if scheme is SchemeTag.PRI:
        return priority_block(weights, k, gen.alphas((t, n)))
    if scheme is SchemeTag.THR:
        return threshold_block(weights, k, gen.alphas((t, n)), tau_thr)
    if scheme is SchemeTag.UR:
        return uniform_block(weights, k, gen.alphas((t, n)))
    if scheme is SchemeTag.WR:
        return wr_block(weights, k, gen.alphas((t, k)), "presence")
    if scheme is SchemeTag.WR_COUNT:
        return wr_block(weights, k, gen.alphas((t, k)), "count")
    raise ValueError(f"unknown scheme {scheme!r}")


class RunningMoments:
    """Column-wise mean and variance merged chunk by chunk (Chan et al.)."""

    def __init__(self, shape=()):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        nb = x.shape[0]
        if nb == 0:
            return
        mb = x.mean(axis=0)
        m2b = ((x - mb) ** 2).sum(axis=0)
        na = self.count
        n = na + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta ** 2 * (na * nb / n)
        self.count = n

    @property
    def var(self) -> np.ndarray:
        return self.m2 / max(self.count - 1, 1)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.var / max(self.count, 1))
