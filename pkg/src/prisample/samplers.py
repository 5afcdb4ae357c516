"""Streaming reservoirs for priority, threshold, uniform and weighted sampling.

Priority-ordered containers hold ``(priority, -id, PrioritizedItem)`` tuples.
Ids are unique within a stream, so plain tuple comparison realises the
"higher priority, earlier id wins ties" order and never reaches the payload.

The heap and the relaxed buffer count key comparisons so their work can be
measured directly.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .model import ItemRecord, PrioritizedItem, PrioritySample, SeededGenerator, prioritize

__all__ = [
    "DualRelaxedReservoir",
    "PriorityReservoir",
    "RelaxedBuffer",
    "ThresholdReservoir",
    "ThresholdSample",
    "UniformReservoir",
    "UniformSample",
    "WeightedWithReplacement",
    "WeightedWRSample",
    "relaxed_dual_finalize",
    "solve_threshold",
    "expected_size",
    "prioritized_stream",
]


def _entry(p: PrioritizedItem) -> tuple:
    return (p.priority, -p.item.id, p)


def _finalize_entries(k: int, top: list, items_seen: int) -> PrioritySample:
    """Turn the (up to) k+1 best entries into a sample."""
    top = sorted(top, reverse=True)
    if items_seen <= k:
        return PrioritySample(k, tuple(e[2] for e in top), 0.0, items_seen)
    return PrioritySample(k, tuple(e[2] for e in top[:k]), top[k][0], items_seen)


class _CountingMinHeap:
    """Binary min-heap with a comparison counter."""

    __slots__ = ("data", "comparisons")

    def __init__(self) -> None:
        self.data: list = []
        self.comparisons = 0

    def __len__(self) -> int:
        return len(self.data)

    def push(self, x) -> None:
        data = self.data
        data.append(x)
        pos = len(data) - 1
        cmp = 0
        while pos > 0:
            parent = (pos - 1) >> 1
            cmp += 1
            if x < data[parent]:
                data[pos] = data[parent]
                pos = parent
            else:
                break
        data[pos] = x
        self.comparisons += cmp

    def pop(self):
        data = self.data
        last = data.pop()
        if not data:
            return last
        top = data[0]
        size = len(data)
        pos = 0
        cmp = 0
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            right = child + 1
            if right < size:
                cmp += 1
                if data[right] < data[child]:
                    child = right
            cmp += 1
            if data[child] < last:
                data[pos] = data[child]
                pos = child
            else:
                break
        data[pos] = last
        self.comparisons += cmp
        return top

    def peek(self):
        return self.data[0]


class PriorityReservoir:
    """Keeps the k+1 highest-priority items seen so far in a min-heap.

    Each arrival is pushed and, once the heap exceeds k+1 entries, the minimum
    is popped. This is the plain O(log k) per item scheme.
    """

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("k must be nonnegative")
        self.k = k
        self.items_seen = 0
        self._heap = _CountingMinHeap()

    @property
    def comparisons(self) -> int:
        return self._heap.comparisons

    def insert(self, pitem: PrioritizedItem) -> None:
        self._heap.push(_entry(pitem))
        if len(self._heap) > self.k + 1:
            self._heap.pop()
        self.items_seen += 1

    def extend(self, pitems: Iterable[PrioritizedItem]) -> None:
        for p in pitems:
            self.insert(p)

    def finalize(self) -> PrioritySample:
        return _finalize_entries(self.k, list(self._heap.data), self.items_seen)

    def heap_items(self) -> list[PrioritizedItem]:
        return [e[2] for e in self._heap.data]


def _select_top(pool: list, m: int, rng: random.Random) -> tuple[list, int]:
    """Return the m largest entries of ``pool`` (unordered) and the comparisons used.

    Quickselect with a random pivot: expected linear time.
    """
    if m <= 0:
        return [], 0
    kept: list = []
    comparisons = 0
    while len(pool) > m:
        pivot = pool[rng.randrange(len(pool))]
        hi = [x for x in pool if x > pivot]
        lo = [x for x in pool if x < pivot]
        comparisons += 2 * len(pool)
        if len(hi) >= m:
            pool = hi
        else:
            kept += hi
            kept.append(pivot)
            m -= len(hi) + 1
            if m == 0:
                return kept, comparisons
            pool = lo
    kept += pool
    return kept, comparisons


class RelaxedBuffer:
    """Unordered buffer of capacity 2k+2 holding a superset of the top k+1.

    Arrivals are appended in O(1). When the buffer fills it is cut back to its
    k+1 best entries by linear-time selection, so the work per arrival is
    constant on average. ``auto_cleanup=False`` leaves the cut to the owner
    (used by :class:`DualRelaxedReservoir`).
    """

    def __init__(self, k: int, *, auto_cleanup: bool = True, pivot_seed: int = 0):
        if k < 0:
            raise ValueError("k must be nonnegative")
        self.k = k
        self.capacity = 2 * k + 2
        self.auto_cleanup = auto_cleanup
        self.entries: list = []
        self.items_seen = 0
        self.cleanups = 0
        self.comparisons = 0
        self.partition_threshold: Optional[float] = None
        self._rng = random.Random(pivot_seed)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def insert(self, pitem: PrioritizedItem) -> None:
        self.entries.append(_entry(pitem))
        self.items_seen += 1
        if self.auto_cleanup and self.full:
            self.cleanup()

    def extend(self, pitems: Iterable[PrioritizedItem]) -> None:
        for p in pitems:
            self.insert(p)

    def cleanup(self) -> None:
        keep = self.k + 1
        if len(self.entries) <= keep:
            return
        top, cmp = _select_top(self.entries, keep, self._rng)
        self.entries = top
        self.partition_threshold = min(top)[0]
        self.comparisons += cmp + len(top) - 1
        self.cleanups += 1

    def top_entries(self) -> list:
        top, cmp = _select_top(self.entries, self.k + 1, self._rng)
        self.comparisons += cmp
        return top

    def finalize(self) -> PrioritySample:
        return _finalize_entries(self.k, self.top_entries(), self.items_seen)


class DualRelaxedReservoir:
    """Two relaxed buffers: one collects while the other is being cleaned.

    In a concurrent deployment the retired buffer is cleaned in the background;
    here the cleanup runs at hand-off, which gives the same contents.
    """

    def __init__(self, k: int, *, pivot_seed: int = 0):
        self.k = k
        self.buffers = (
            RelaxedBuffer(k, auto_cleanup=False, pivot_seed=pivot_seed),
            RelaxedBuffer(k, auto_cleanup=False, pivot_seed=pivot_seed + 1),
        )
        self.active = 0
        self.items_seen = 0

    @property
    def comparisons(self) -> int:
        return sum(b.comparisons for b in self.buffers)

    def insert(self, pitem: PrioritizedItem) -> None:
        buf = self.buffers[self.active]
        buf.insert(pitem)
        self.items_seen += 1
        if buf.full:
            self.active ^= 1
            buf.cleanup()

    def extend(self, pitems: Iterable[PrioritizedItem]) -> None:
        for p in pitems:
            self.insert(p)

    def finalize(self) -> PrioritySample:
        collecting = self.buffers[self.active]
        cleaned = self.buffers[self.active ^ 1]
        return relaxed_dual_finalize(collecting, cleaned, self.items_seen)


def relaxed_dual_finalize(
    buf_a: RelaxedBuffer, buf_b: RelaxedBuffer, items_seen: Optional[int] = None
) -> PrioritySample:
    """Top k+1 over the union of two buffers' contents."""
    if buf_a.k != buf_b.k:
        raise ValueError("buffers disagree on k")
    k = buf_a.k
    if items_seen is None:
        items_seen = buf_a.items_seen + buf_b.items_seen
    top, cmp = _select_top(buf_a.entries + buf_b.entries, k + 1, buf_a._rng)
    buf_a.comparisons += cmp
    return _finalize_entries(k, top, items_seen)


# --------------------------------------------------------------------------
# threshold sampling


@dataclass(frozen=True)
class ThresholdSample:
    """Items whose priority exceeds a threshold chosen for expected size k."""

    k: int
    entries: tuple[PrioritizedItem, ...]
    threshold: float
    items_seen: int

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[int]:
        return [e.id for e in self.entries]


def solve_threshold(weights, k: float) -> float:
    """Offline solution of sum(min(1, w / tau)) = k.

    Returns 0 when there are no more than k positive weights (nothing needs to
    be dropped).
    """
    w = np.sort(np.asarray(weights, dtype=np.float64))[::-1]
    w = w[w > 0]
    n = len(w)
    if n <= k:
        return 0.0
    # try m = number of items that are certain (w >= tau), largest first
    tail = np.cumsum(w[::-1])[::-1]  # tail[m] = sum(w[m:])
    for m in range(int(math.ceil(k))):
        tau = tail[m] / (k - m)
        if w[m] <= tau and (m == 0 or w[m - 1] >= tau):
            return float(tau)
    raise ArithmeticError("no threshold found")  # pragma: no cover


def expected_size(weights, tau: float) -> float:
    w = np.asarray(weights, dtype=np.float64)
    if tau <= 0:
        return float(np.count_nonzero(w >= 0))
    return float(np.minimum(1.0, w / tau).sum())


class ThresholdReservoir:
    """Threshold sample of expected size k maintained over a stream.

    ``L`` holds the items with weight at least the current threshold (keyed by
    weight), ``U`` the total weight of the others, so that
    sum(min(1, w/tau)) = |L| + U/tau. Each arrival raises the threshold until
    that sum is k again, then evicts sampled items whose priority fell to or
    below it.
    """

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = k
        self.tau = 0.0
        self.items_seen = 0
        self.small_total = 0.0  # U
        self._large: list = []  # L as a min-heap of (weight, id)
        self._sample = _CountingMinHeap()

    @property
    def large_count(self) -> int:
        return len(self._large)

    def insert(self, pitem: PrioritizedItem) -> None:
        w = pitem.weight
        self.items_seen += 1
        self._sample.push(_entry(pitem))
        if w >= self.tau:
            heapq.heappush(self._large, (w, pitem.id))
        else:
            self.small_total += w
        if self.items_seen <= self.k:
            return  # everything is kept while n <= k
        self._raise_threshold()
        heap = self._sample
        while len(heap) and heap.peek()[0] <= self.tau:
            heap.pop()

    def extend(self, pitems: Iterable[PrioritizedItem]) -> None:
        for p in pitems:
            self.insert(p)

    def _raise_threshold(self) -> None:
        large = self._large
        k = self.k
        old = self.tau
        while True:
            m = len(large)
            if m >= k:
                # tau* would be infinite or negative: the lightest large item must go
                w_min, _ = heapq.heappop(large)
                self.small_total += w_min
                continue
            tau_star = self.small_total / (k - m)
            w_min = large[0][0] if large else math.inf
            if tau_star < w_min:
                break
            heapq.heappop(large)
            self.small_total += w_min
        if tau_star < old * (1.0 - 1e-12):
            raise AssertionError(f"threshold decreased from {old!r} to {tau_star!r}")
        self.tau = max(tau_star, old)

    def finalize(self) -> ThresholdSample:
        entries = sorted(self._sample.data, reverse=True)
        return ThresholdSample(self.k, tuple(e[2] for e in entries), self.tau, self.items_seen)


# --------------------------------------------------------------------------
# uniform and weighted reservoirs


@dataclass(frozen=True)
class UniformSample:
    k: int
    items: tuple[ItemRecord, ...]
    items_seen: int

    def __len__(self) -> int:
        return len(self.items)


class UniformReservoir:
    """Classic uniform reservoir without replacement."""

    def __init__(self, k: int, gen: SeededGenerator):
        if k < 0:
            raise ValueError("k must be nonnegative")
        self.k = k
        self.gen = gen
        self.slots: list[ItemRecord] = []
        self.items_seen = 0

    def insert(self, item: ItemRecord) -> None:
        n = self.items_seen
        if n < self.k:
            self.slots.append(item)
        elif self.k > 0:
            j = self.gen.index(n + 1)
            if j < self.k:
                self.slots[j] = item
        self.items_seen = n + 1

    def extend(self, items: Iterable[ItemRecord]) -> None:
        for it in items:
            self.insert(it)

    def finalize(self) -> UniformSample:
        return UniformSample(self.k, tuple(self.slots), self.items_seen)


@dataclass(frozen=True)
class WeightedWRSample:
    k: int
    slots: tuple[Optional[ItemRecord], ...]
    total_weight: float
    items_seen: int

    def multiplicity(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for it in self.slots:
            if it is not None:
                counts[it.id] = counts.get(it.id, 0) + 1
        return counts

    def distinct_items(self) -> dict[int, ItemRecord]:
        return {it.id: it for it in self.slots if it is not None}


class WeightedWithReplacement:
    """k independent slots, each holding item i with probability w_i / W.

    Every arrival visits all k slots, so the cost is Theta(k) per item.
    """

    def __init__(self, k: int, gen: SeededGenerator):
        if k < 0:
            raise ValueError("k must be nonnegative")
        self.k = k
        self.gen = gen
        self.slots: list[Optional[ItemRecord]] = [None] * k
        self.total_weight = 0.0
        self.items_seen = 0

    def insert(self, item: ItemRecord) -> None:
        w = item.weight
        denom = self.total_weight + w
        p = w / denom if denom > 0 else 0.0
        alpha = self.gen.alpha
        slots = self.slots
        for j in range(self.k):
            if alpha() <= p:
                slots[j] = item
        self.total_weight = denom
        self.items_seen += 1

    def extend(self, items: Iterable[ItemRecord]) -> None:
        for it in items:
            self.insert(it)

    def finalize(self) -> WeightedWRSample:
        return WeightedWRSample(self.k, tuple(self.slots), self.total_weight, self.items_seen)


def prioritized_stream(items: Iterable[ItemRecord], gen: SeededGenerator):
    """Attach a fresh alpha to every item, in arrival order."""
    for it in items:
        yield prioritize(it, gen.alpha())
