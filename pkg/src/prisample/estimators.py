"""Weight, variance and subset-sum estimates from finalized samples.

All estimators are Horvitz-Thompson style: an unsampled item contributes 0
and a sampled one contributes its weight divided by its inclusion
probability. For priority and threshold samples that reduces to
``max(w, tau)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

from .model import ItemRecord, PrioritySample, SchemeTag
from .samplers import ThresholdSample, UniformSample, WeightedWRSample

__all__ = [
    "Contribution",
    "EstimateReport",
    "SubsetPredicate",
    "item_estimates",
    "pri_variance_estimate",
    "pri_weight_estimate",
    "scheme_of",
    "secondary_estimate",
    "subset_estimate",
    "thr_weight_estimate",
    "uwr_weight_estimate",
    "wwr_inclusion_probability",
    "wwr_weight_estimate",
]

AnySample = Union[PrioritySample, ThresholdSample, UniformSample, WeightedWRSample]

PRESENCE = "presence"
COUNT = "count"


@dataclass(frozen=True)
class SubsetPredicate:
    """Conjunction of attribute equalities plus an optional closed weight range."""

    equals: tuple[tuple[str, str], ...] = ()
    weight_range: Optional[tuple[float, float]] = None

    def __call__(self, item: ItemRecord) -> bool:
        attrs = item.attributes
        for key, value in self.equals:
            if attrs.get(key) != value:
                return False
        if self.weight_range is not None:
            lo, hi = self.weight_range
            if not (lo <= item.weight <= hi):
                return False
        return True

    @classmethod
    def parse(cls, terms: Iterable[str] = (), weight_range: Optional[str] = None) -> "SubsetPredicate":
        """Build from ``key=value`` strings and an optional ``lo:hi`` range.

        Either end of the range may be empty (``:100`` or ``5:``).
        """
        pairs = []
        for term in terms:
            key, sep, value = term.partition("=")
            if not sep or not key:
                raise ValueError(f"expected key=value, got {term!r}")
            pairs.append((key.strip(), value.strip()))
        rng = None
        if weight_range:
            lo_s, sep, hi_s = weight_range.partition(":")
            if not sep:
                raise ValueError(f"expected lo:hi, got {weight_range!r}")
            lo = float(lo_s) if lo_s.strip() else -math.inf
            hi = float(hi_s) if hi_s.strip() else math.inf
            if lo > hi:
                raise ValueError(f"empty weight range {weight_range!r}")
            rng = (lo, hi)
        return cls(tuple(pairs), rng)

    @property
    def keys(self) -> set[str]:
        return {k for k, _ in self.equals}


@dataclass(frozen=True)
class Contribution:
    id: int
    weight_estimate: float
    variance_estimate: float


@dataclass(frozen=True)
class EstimateReport:
    scheme: str
    k: int
    estimate: float
    variance: float
    contributions: tuple[Contribution, ...]
    items_seen: int
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "k": self.k,
            "items_seen": self.items_seen,
            "estimate": self.estimate,
            "variance": self.variance,
            "contributions": [
                {"id": c.id, "weight_estimate": c.weight_estimate, "variance_estimate": c.variance_estimate}
                for c in self.contributions
            ],
            "notes": list(self.notes),
        }


def _find(entries, id_: int):
    for e in entries:
        if e.id == id_:
            return e
    return None


def _fixed_threshold_variance(w: float, tau: float) -> float:
    # unbiased for w * max(0, tau - w), the variance of max(w, tau) w.p. min(1, w/tau)
    return tau * max(0.0, tau - w)


def _ht_variance(est: float, p: float) -> float:
    # certain items contribute nothing, even when est * est overflows
    return 0.0 if p >= 1.0 else est * est * (1.0 - p)


# --------------------------------------------------------------------------
# per-item estimators


def pri_weight_estimate(sample: PrioritySample, id_: int) -> float:
    e = _find(sample.entries, id_)
    if e is None:
        return 0.0
    return max(e.weight, sample.threshold)


def pri_variance_estimate(sample: PrioritySample, id_: int) -> float:
    e = _find(sample.entries, id_)
    if e is None:
        return 0.0
    return _fixed_threshold_variance(e.weight, sample.threshold)


def secondary_estimate(sample: Union[PrioritySample, ThresholdSample], id_: int) -> float:
    """Unbiased estimate of the item's secondary value: max(1, tau/w) * x."""
    e = _find(sample.entries, id_)
    if e is None:
        return 0.0
    x = e.item.secondary
    if x is None:
        raise ValueError(f"item {id_} carries no secondary value")
    if e.weight == 0.0:
        raise ValueError(
            f"item {id_} has zero weight; sample on |secondary| instead of skipping it"
        )
    return max(1.0, sample.threshold / e.weight) * x


def thr_weight_estimate(sample: ThresholdSample, id_: int) -> float:
    e = _find(sample.entries, id_)
    if e is None:
        return 0.0
    return max(e.weight, sample.threshold)


def uwr_weight_estimate(sample: UniformSample, id_: int) -> float:
    for it in sample.items:
        if it.id == id_:
            return max(1.0, sample.items_seen / sample.k) * it.weight
    return 0.0


def wwr_inclusion_probability(w: float, total: float, k: int) -> float:
    """Probability 1 - (1 - w/W)^k that an item shows up in at least one slot."""
    if total <= 0 or w <= 0:
        return 0.0
    if w >= total:
        return 1.0
    return -math.expm1(k * math.log1p(-w / total))


def wwr_weight_estimate(sample: WeightedWRSample, id_: int, mode: str = PRESENCE) -> float:
    counts = sample.multiplicity()
    c = counts.get(id_, 0)
    if c == 0:
        return 0.0
    if mode == COUNT:
        return c * sample.total_weight / sample.k
    if mode != PRESENCE:
        raise ValueError(f"unknown W+R estimator mode {mode!r}")
    w = sample.distinct_items()[id_].weight
    return w / wwr_inclusion_probability(w, sample.total_weight, sample.k)


# --------------------------------------------------------------------------
# whole-sample views


def scheme_of(sample: AnySample, mode: str = PRESENCE) -> SchemeTag:
    if isinstance(sample, PrioritySample):
        return SchemeTag.PRI
    if isinstance(sample, ThresholdSample):
        return SchemeTag.THR
    if isinstance(sample, UniformSample):
        return SchemeTag.UR
    if isinstance(sample, WeightedWRSample):
        return SchemeTag.WR_COUNT if mode == COUNT else SchemeTag.WR
    raise TypeError(f"not a sample: {type(sample).__name__}")


def item_estimates(sample: AnySample, mode: str = PRESENCE) -> list[tuple[ItemRecord, float, float]]:
    """(item, weight estimate, variance estimate) for every sampled item."""
    out = []
    if isinstance(sample, (PrioritySample, ThresholdSample)):
        tau = sample.threshold
        for e in sample.entries:
            w = e.weight
            out.append((e.item, max(w, tau), _fixed_threshold_variance(w, tau)))
    elif isinstance(sample, UniformSample):
        if sample.k == 0:
            return out
        scale = sample.items_seen / sample.k if sample.items_seen > sample.k else 1.0
        p = 1.0 / scale
        for it in sample.items:
            est = scale * it.weight
            out.append((it, est, _ht_variance(est, p)))
    elif isinstance(sample, WeightedWRSample):
        counts = sample.multiplicity()
        total, k = sample.total_weight, sample.k
        for id_, it in sorted(sample.distinct_items().items()):
            if mode == COUNT:
                est = counts[id_] * total / k
                var = est * (total - est) / (k - 1) if k > 1 else 0.0
            else:
                p = wwr_inclusion_probability(it.weight, total, k)
                est = it.weight / p
                var = _ht_variance(est, p)
            out.append((it, est, max(var, 0.0)))
    else:
        raise TypeError(f"not a sample: {type(sample).__name__}")
    return out


def subset_estimate(
    sample: AnySample,
    predicate: Callable[[ItemRecord], bool] = SubsetPredicate(),
    mode: str = PRESENCE,
) -> EstimateReport:
    """Sum weight and variance estimates over the sampled items the predicate selects.

    The variance sum is unbiased for priority samples with k >= 2 (estimates
    are uncorrelated) and for threshold samples (independent inclusion). For
    the other schemes it ignores covariance, which the report notes.
    """
    scheme = scheme_of(sample, mode)
    contributions = []
    for item, est, var in item_estimates(sample, mode):
        if predicate(item):
            contributions.append(Contribution(item.id, est, var))
    contributions.sort(key=lambda c: c.id)
    notes = []
    if scheme is SchemeTag.PRI and sample.k == 1 and sample.items_seen > 1:
        notes.append("k=1: true variance is infinite; the variance estimate is unreliable")
    if scheme in (SchemeTag.UR, SchemeTag.WR, SchemeTag.WR_COUNT):
        notes.append("variance sums per-item terms and ignores covariance under this scheme")
    if scheme is SchemeTag.WR_COUNT and sample.k == 1:
        notes.append("k=1: duplicate-count variance cannot be estimated; reported as 0")
    return EstimateReport(
        scheme=scheme.value,
        k=sample.k,
        estimate=math.fsum(c.weight_estimate for c in contributions),
        variance=math.fsum(c.variance_estimate for c in contributions),
        contributions=tuple(contributions),
        items_seen=sample.items_seen,
        notes=tuple(notes),
    )


def secondary_subset_estimate(
    sample: Union[PrioritySample, ThresholdSample],
    predicate: Callable[[ItemRecord], bool] = SubsetPredicate(),
) -> float:
    return math.fsum(
        secondary_estimate(sample, e.id) for e in sample.entries if predicate(e.item)
    )
