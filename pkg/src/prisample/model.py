"""Core record types, the seeded alpha source, and priority construction.

Every scheme in the package draws its randomness from :class:`SeededGenerator`
so that a (seed, stream) pair reproduces a sample bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

__all__ = [
    "ItemRecord",
    "PrioritizedItem",
    "PrioritySample",
    "SchemeTag",
    "SeededGenerator",
    "compare",
    "draw_alpha",
    "prioritize",
    "raw_to_alpha",
]

# alpha = (j + 0.5) / 2**52 for j in [0, 2**52): exact in binary64, so the
# result can never round onto 0.0 or 1.0.
_ALPHA_SHIFT = np.uint64(12)
_ALPHA_SCALE = 2.0 ** -52
_CHUNK = 4096


class SchemeTag(str, enum.Enum):
    PRI = "PRI"
    THR = "THR"
    UR = "U-R"
    WR = "W+R"  # presence estimator
    WR_COUNT = "W+R/count"  # duplicate-count estimator

    @property
    def base(self) -> "SchemeTag":
        return SchemeTag.WR if self is SchemeTag.WR_COUNT else self


@dataclass(frozen=True, slots=True)
class ItemRecord:
    """One weighted stream element.

    ``attributes`` are free-form string pairs used only for post-hoc subset
    selection; ``secondary`` is an optional second variable estimated through
    the same sample.
    """

    id: int
    weight: float
    attributes: Mapping[str, str] = field(default_factory=dict)
    secondary: Optional[float] = None

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"item id must be nonnegative, got {self.id}")
        if not (self.weight >= 0.0) or math.isinf(self.weight):
            raise ValueError(f"item {self.id}: weight must be finite and >= 0, got {self.weight!r}")


@dataclass(frozen=True, slots=True)
class PrioritizedItem:
    item: ItemRecord
    alpha: float
    priority: float

    @property
    def id(self) -> int:
        return self.item.id

    @property
    def weight(self) -> float:
        return self.item.weight

    @property
    def key(self) -> tuple[float, int]:
        """Sort key: larger key means higher priority (ties go to the earlier id)."""
        return (self.priority, -self.item.id)


@dataclass(frozen=True)
class PrioritySample:
    """The k highest-priority items of a stream together with the threshold.

    ``entries`` are ordered from highest to lowest priority. When the stream
    held no more than ``k`` items everything is kept and ``threshold`` is 0.
    """

    k: int
    entries: tuple[PrioritizedItem, ...]
    threshold: float
    items_seen: int

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[int]:
        return [e.id for e in self.entries]


def raw_to_alpha(raw: np.ndarray) -> np.ndarray:
    """Map raw uint64 words to doubles strictly inside (0, 1)."""
    return ((raw >> _ALPHA_SHIFT).astype(np.float64) + 0.5) * _ALPHA_SCALE


class SeededGenerator:
    """Reproducible source of uniform alphas and bounded integers.

    Backed by PCG64. Single draws are served from a cached block of raw words,
    so drawing ``m`` values one at a time yields exactly the same sequence as
    a single call to :meth:`alphas` with ``size=m``.
    """

    def __init__(self, seed: int = 0, *, spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(spawn_key)
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=self.spawn_key)
        self._bits = np.random.PCG64(ss)
        self._buf = np.empty(0, dtype=np.uint64)
        self._pos = 0
        self.position = 0  # raw words consumed so far

    def spawn(self, index: int) -> "SeededGenerator":
        """Independent child stream, determined only by (seed, key, index)."""
        return SeededGenerator(self.seed, spawn_key=self.spawn_key + (int(index),))

    def _raw(self, size: int) -> np.ndarray:
        avail = len(self._buf) - self._pos
        if size <= avail:
            out = self._buf[self._pos:self._pos + size]
            self._pos += size
        else:
            head = self._buf[self._pos:]
            out = np.concatenate([head, self._bits.random_raw(size - avail)])
            self._buf = np.empty(0, dtype=np.uint64)
            self._pos = 0
        self.position += size
        return out

    def _raw_one(self) -> int:
        if self._pos >= len(self._buf):
            self._buf = self._bits.random_raw(_CHUNK)
            self._pos = 0
        u = int(self._buf[self._pos])
        self._pos += 1
        self.position += 1
        return u

    def alpha(self) -> float:
        return ((self._raw_one() >> 12) + 0.5) * _ALPHA_SCALE

    def alphas(self, size) -> np.ndarray:
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = int(np.prod(shape))
        return raw_to_alpha(self._raw(count)).reshape(shape)

    def index(self, m: int) -> int:
        """Uniform integer in [0, m) by multiply-shift (bias below m / 2**64)."""
        if m <= 0:
            raise ValueError("m must be positive")
        return (self._raw_one() * m) >> 64


def draw_alpha(gen: SeededGenerator) -> float:
    return gen.alpha()


def prioritize(item: ItemRecord, alpha: float) -> PrioritizedItem:
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha!r}")
    w = item.weight
    if w == 0.0:
        return PrioritizedItem(item, alpha, 0.0)
    # w / alpha may overflow to +inf; inf still orders correctly via the id tie-break
    return PrioritizedItem(item, alpha, w / alpha)


def compare(a: PrioritizedItem, b: PrioritizedItem) -> int:
    """Return 1 if ``a`` outranks ``b``, -1 if ``b`` outranks ``a``, 0 if same item."""
    ka, kb = a.key, b.key
    if ka > kb:
        return 1
    if ka < kb:
        return -1
    return 0
