"""Synthetic weighted traces.

Four weight laws are available:

``unit``         n items of weight 1
``pareto``       n items, Pareto(shape) with minimum ``scale``
``large-small``  ``l`` items of weight ``N`` followed by ``n`` unit items
``table1-mix``   a four-application flow mix: per-application flow counts
                 and byte totals, one dominant flow per application,
                 truncated-Pareto bodies, and an 8x8 input/output interface
                 label per flow

A spec is written inline as ``law:key=value,...``, e.g.
``table1-mix:n=10000,seed=3`` or ``large-small:l=3,N=1e6,n=1000``, or given as
a JSON file with the same keys plus ``"law"``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .model import ItemRecord, SeededGenerator

__all__ = ["FLOW_MIX", "Trace", "TraceSpec", "generate_trace"]

LAWS = ("unit", "pareto", "large-small", "table1-mix")


@dataclass(frozen=True)
class AppStats:
    bytes: int
    flows: int
    max_flow: int
    min_flow: int


# Measured per-application aggregates (bytes, flows, largest and smallest
# flow). "other" is whatever the three named applications leave over; its
# largest flow is unknown, so it is capped at the largest non-ftp maximum.
_ALL = AppStats(4265677642, 85680, 3372865057, 28)
FLOW_MIX = {
    "ftp": AppStats(3394832734, 727, 3372865057, 40),
    "web": AppStats(80120429, 7787, 3139196, 40),
    "dns": AppStats(4083277, 40767, 621812, 40),
    "other": AppStats(
        _ALL.bytes - 3394832734 - 80120429 - 4083277,
        _ALL.flows - 727 - 7787 - 40767,
        3139196,
        28,
    ),
}
_PLANTED = ("ftp", "web", "dns")  # applications whose maximum flow is reproduced
INTERFACES = 8


@dataclass(frozen=True)
class TraceSpec:
    law: str
    n: int
    seed: int = 0
    shape: float = 1.1
    scale: float = 1.0
    large_count: int = 0
    large_weight: float = 1.0
    proportions: Optional[dict] = None  # table1-mix flow-count fractions by application

    def __post_init__(self) -> None:
        if self.law not in LAWS:
            raise ValueError(f"unknown weight law {self.law!r}; expected one of {', '.join(LAWS)}")
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if self.law == "pareto" and (self.shape <= 0 or self.scale <= 0):
            raise ValueError("pareto needs shape > 0 and scale > 0")
        if self.law == "large-small":
            if self.large_count < 0 or self.large_weight <= 0:
                raise ValueError("large-small needs l >= 0 and N > 0")
            if self.large_count >= self.n:
                raise ValueError("large-small needs l < n")
        if self.proportions is not None:
            if set(self.proportions) != set(FLOW_MIX):
                raise ValueError(f"proportions must cover exactly {sorted(FLOW_MIX)}")
            vals = list(self.proportions.values())
            if any(v < 0 for v in vals) or abs(math.fsum(vals) - 1.0) > 1e-9:
                raise ValueError("proportions must be nonnegative and sum to 1")

    @classmethod
    def parse(cls, text: str) -> "TraceSpec":
        """Parse an inline spec string, or load a JSON spec file if ``text`` is a path."""
        if os.path.isfile(text):
            with open(text, encoding="utf-8") as fh:
                data = json.load(fh)
            law = data.pop("law")
            return cls._from_params(law, {k: str(v) if not isinstance(v, dict) else v for k, v in data.items()})
        law, _, rest = text.partition(":")
        params = {}
        for part in filter(None, (p.strip() for p in rest.split(","))):
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError(f"expected key=value in trace spec, got {part!r}")
            params[key.strip()] = value.strip()
        return cls._from_params(law.strip(), params)

    @classmethod
    def _from_params(cls, law: str, params: dict) -> "TraceSpec":
        params = dict(params)
        props = params.pop("proportions", None)
        app_props = {a: float(params.pop(a)) for a in list(params) if a in FLOW_MIX}
        if app_props:
            props = app_props
        kwargs = {}
        for key, value in params.items():
            if key == "n":
                kwargs["n"] = int(float(value))
            elif key == "seed":
                kwargs["seed"] = int(value)
            elif key == "shape":
                kwargs["shape"] = float(value)
            elif key == "scale":
                kwargs["scale"] = float(value)
            elif key in ("l", "large"):
                kwargs["large_count"] = int(float(value))
            elif key == "N":
                kwargs["large_weight"] = float(value)
            else:
                raise ValueError(f"unknown trace parameter {key!r}")
        if law == "large-small":
            # n counts the small items; the stream holds l + n items
            kwargs["n"] = kwargs.get("n", 0) + kwargs.get("large_count", 0)
        if "n" not in kwargs:
            raise ValueError("trace spec needs n")
        if props is not None:
            props = {k: float(v) for k, v in props.items()}
        return cls(law=law, proportions=props, **kwargs)


@dataclass
class Trace:
    spec: TraceSpec
    items: list[ItemRecord]
    summary: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        return np.array([it.weight for it in self.items], dtype=np.float64)

    def __iter__(self):
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)


def _trunc_pareto_mean(a: float, lo: float, hi: float) -> float:
    r = (lo / hi) ** a
    if abs(a - 1.0) < 1e-9:
        return lo * math.log(hi / lo) / (1.0 - r)
    return a * lo ** a * (hi ** (1.0 - a) - lo ** (1.0 - a)) / ((1.0 - a) * (1.0 - r))


def _fit_shape(mean: float, lo: float, hi: float) -> float:
    """Shape whose Pareto truncated to [lo, hi] has the given mean."""
    f = lambda log_a: math.log(_trunc_pareto_mean(math.exp(log_a), lo, hi)) - math.log(mean)
    return math.exp(optimize.brentq(f, math.log(1e-3), math.log(50.0)))


def _trunc_pareto(u: np.ndarray, a: float, lo: float, hi: float) -> np.ndarray:
    r = (lo / hi) ** a
    return lo * (1.0 - u * (1.0 - r)) ** (-1.0 / a)


def _allocate(n: int, fractions: dict) -> dict:
    """Largest-remainder split of n into integer counts, at least one per positive fraction."""
    raw = {k: n * f for k, f in fractions.items()}
    counts = {k: int(math.floor(v)) for k, v in raw.items()}
    for k, f in fractions.items():
        if f > 0 and counts[k] == 0:
            counts[k] = 1
    short = n - sum(counts.values())
    order = sorted(fractions, key=lambda k: raw[k] - math.floor(raw[k]), reverse=True)
    i = 0
    while short > 0:
        counts[order[i % len(order)]] += 1
        short -= 1
        i += 1
    while short < 0:
        big = max(counts, key=counts.get)
        counts[big] -= 1
        short += 1
    return counts


def _table1_mix(spec: TraceSpec, gen: SeededGenerator) -> tuple[list[ItemRecord], dict]:
    n = spec.n
    fractions = spec.proportions or {a: s.flows / _ALL.flows for a, s in FLOW_MIX.items()}
    counts = _allocate(n, fractions)
    total_bytes = n * (_ALL.bytes / _ALL.flows)
    flows = []  # (app, weight)
    for app in FLOW_MIX:
        stats = FLOW_MIX[app]
        c = counts[app]
        if c == 0:
            continue
        target = total_bytes * stats.bytes / _ALL.bytes
        sizes = []
        body_target = target
        body_count = c
        if app in _PLANTED:
            top = target * stats.max_flow / stats.bytes
            sizes.append(top)
            body_target -= top
            body_count -= 1
            body_mean = (stats.bytes - stats.max_flow) / max(stats.flows - 1, 1)
        else:
            body_mean = stats.bytes / stats.flows
        if body_count > 0:
            a = _fit_shape(body_mean, stats.min_flow, stats.max_flow)
            body = _trunc_pareto(gen.alphas(body_count), a, stats.min_flow, stats.max_flow)
            body *= body_target / body.sum()
            sizes.extend(body.tolist())
        flows.extend((app, s) for s in sizes)
    order = np.argsort(gen.alphas(len(flows)), kind="stable")
    popularity = 1.0 / np.arange(1, INTERFACES + 1)
    cdf = np.cumsum(popularity / popularity.sum())
    ins = np.minimum(np.searchsorted(cdf, gen.alphas(len(flows))), INTERFACES - 1)
    outs = np.minimum(np.searchsorted(cdf, gen.alphas(len(flows))), INTERFACES - 1)
    items = []
    for new_id, src in enumerate(order):
        app, w = flows[src]
        attrs = {"app": app, "in": str(int(ins[new_id])), "out": str(int(outs[new_id]))}
        items.append(ItemRecord(new_id, float(w), attrs))
    return items, {"flows_by_label": counts}


def generate_trace(spec: TraceSpec) -> Trace:
    """Deterministic stream for ``spec``; ``summary`` carries the totals."""
    gen = SeededGenerator(spec.seed)
    extra: dict = {}
    if spec.law == "unit":
        items = [ItemRecord(i, 1.0) for i in range(spec.n)]
    elif spec.law == "pareto":
        w = spec.scale * gen.alphas(spec.n) ** (-1.0 / spec.shape)
        items = [ItemRecord(i, float(x)) for i, x in enumerate(w)]
    elif spec.law == "large-small":
        ell = spec.large_count
        items = [ItemRecord(i, spec.large_weight, {"size": "large"}) for i in range(ell)]
        items += [ItemRecord(i, 1.0, {"size": "small"}) for i in range(ell, spec.n)]
    else:
        items, extra = _table1_mix(spec, gen)
    label_key = {"table1-mix": "app", "large-small": "size"}.get(spec.law)
    totals: dict = {}
    if label_key:
        for it in items:
            lab = it.attributes[label_key]
            totals[lab] = totals.get(lab, 0.0) + it.weight
    total = math.fsum(it.weight for it in items)
    summary = {"items": len(items), "total_weight": total, "label_totals": totals}
    if total > 0 and totals:
        summary["label_shares"] = {k: v / total for k, v in totals.items()}
    summary.update(extra)
    return Trace(spec, items, summary)
