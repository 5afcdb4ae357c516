"""CSV ingestion and the JSON sample store.

Input CSV: a header row naming at least ``id`` and ``weight``; an optional
``secondary`` column; every other column becomes a string attribute.

Persisted samples are JSON with ``format_version: 1``. Floats are written
with ``repr`` precision so a reload reproduces every weight, priority and
threshold bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from typing import IO, Iterator, Optional, Union

from .model import ItemRecord, PrioritizedItem, PrioritySample, SchemeTag
from .samplers import ThresholdSample, UniformSample, WeightedWRSample

FORMAT_VERSION = 1

Sample = Union[PrioritySample, ThresholdSample, UniformSample, WeightedWRSample]


class InputError(ValueError):
    """Malformed input; the message names the offending line."""


class CountingReader:
    """Line iterator over a text stream that refuses a second pass."""

    def __init__(self, fh: IO[str]):
        self._fh = fh
        self.lines = 0
        self.passes = 0

    def __iter__(self):
        self.passes += 1
        if self.passes > 1:
            raise RuntimeError("input stream read more than once")
        for line in self._fh:
            self.lines += 1
            yield line


def _parse_weight(text: str, lineno: int) -> float:
    try:
        w = float(text)
    except ValueError:
        raise InputError(f"line {lineno}: weight {text!r} is not a number") from None
    if not math.isfinite(w):
        raise InputError(f"line {lineno}: weight must be finite")
    if w < 0:
        raise InputError(
            f"line {lineno}: negative weight {text}; put signed values in the 'secondary' "
            "column and sample on their absolute value"
        )
    return w


def read_records(lines) -> Iterator[ItemRecord]:
    """Parse flow records lazily from an iterable of CSV lines."""
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("line 1: empty input, expected a header row") from None
    header = [h.strip() for h in header]
    if header and header[0].startswith("﻿"):
        header[0] = header[0][1:]
    missing = [c for c in ("id", "weight") if c not in header]
    if missing:
        raise InputError(f"line 1: header lacks required column(s) {', '.join(missing)}")
    if len(set(header)) != len(header):
        raise InputError("line 1: duplicate column names in header")
    i_id, i_w = header.index("id"), header.index("weight")
    i_sec = header.index("secondary") if "secondary" in header else None
    attr_cols = [(j, h) for j, h in enumerate(header) if h not in ("id", "weight", "secondary")]
    seen: set[int] = set()
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            id_ = int(row[i_id])
        except ValueError:
            raise InputError(f"line {lineno}: id {row[i_id]!r} is not an integer") from None
        if id_ < 0:
            raise InputError(f"line {lineno}: id must be nonnegative")
        if id_ in seen:
            raise InputError(f"line {lineno}: duplicate id {id_}")
        seen.add(id_)
        w = _parse_weight(row[i_w].strip(), lineno)
        sec = None
        if i_sec is not None and row[i_sec].strip():
            try:
                sec = float(row[i_sec])
            except ValueError:
                raise InputError(f"line {lineno}: secondary {row[i_sec]!r} is not a number") from None
        yield ItemRecord(id_, w, {h: row[j] for j, h in attr_cols}, sec)


# --------------------------------------------------------------------------
# persistence


def _item_dict(item: ItemRecord) -> dict:
    return {
        "id": item.id,
        "weight": item.weight,
        "attributes": dict(item.attributes),
        "secondary": item.secondary,
    }


def sample_to_dict(sample: Sample, seed: Optional[int], variant: str = "") -> dict:
    doc: dict = {"format_version": FORMAT_VERSION, "seed": seed, "k": sample.k, "n": sample.items_seen}
    if isinstance(sample, (PrioritySample, ThresholdSample)):
        doc["scheme"] = (SchemeTag.PRI if isinstance(sample, PrioritySample) else SchemeTag.THR).value
        doc["threshold"] = sample.threshold
        doc["entries"] = [
            {**_item_dict(e.item), "priority": e.priority, "alpha": e.alpha} for e in sample.entries
        ]
    elif isinstance(sample, UniformSample):
        doc["scheme"] = SchemeTag.UR.value
        doc["threshold"] = None
        doc["entries"] = [_item_dict(it) for it in sample.items]
    elif isinstance(sample, WeightedWRSample):
        doc["scheme"] = SchemeTag.WR.value
        doc["threshold"] = None
        doc["total_weight"] = sample.total_weight
        counts = sample.multiplicity()
        order = []
        for it in sample.slots:
            if it is not None and it.id not in order:
                order.append(it.id)
        items = sample.distinct_items()
        doc["entries"] = [{**_item_dict(items[i]), "count": counts[i]} for i in order]
        doc["slots"] = [None if it is None else it.id for it in sample.slots]
    else:
        raise TypeError(f"not a sample: {type(sample).__name__}")
    if variant:
        doc["variant"] = variant
    return doc


def _item(e: dict) -> ItemRecord:
    return ItemRecord(int(e["id"]), float(e["weight"]), dict(e.get("attributes") or {}), e.get("secondary"))


def sample_from_dict(doc: dict) -> Sample:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise InputError(f"unsupported sample format_version {version!r}")
    scheme = doc.get("scheme")
    k, n = int(doc["k"]), int(doc["n"])
    entries = doc.get("entries", [])
    if scheme in (SchemeTag.PRI.value, SchemeTag.THR.value):
        pitems = tuple(PrioritizedItem(_item(e), float(e["alpha"]), float(e["priority"])) for e in entries)
        cls = PrioritySample if scheme == SchemeTag.PRI.value else ThresholdSample
        return cls(k, pitems, float(doc["threshold"]), n)
    if scheme == SchemeTag.UR.value:
        return UniformSample(k, tuple(_item(e) for e in entries), n)
    if scheme == SchemeTag.WR.value:
        by_id = {int(e["id"]): _item(e) for e in entries}
        if "slots" in doc:
            slots = [None if i is None else by_id[int(i)] for i in doc["slots"]]
        else:
            slots = []
            for e in entries:
                slots.extend([by_id[int(e["id"])]] * int(e["count"]))
            slots.extend([None] * (k - len(slots)))
        return WeightedWRSample(k, tuple(slots), float(doc["total_weight"]), n)
    raise InputError(f"unknown scheme {scheme!r} in sample file")


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def save_sample(path: str, sample: Sample, seed: Optional[int], variant: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(sample_to_dict(sample, seed, variant)))


def load_sample(path: str) -> Sample:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not a JSON sample ({exc})") from None
    try:
        return sample_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed sample ({exc})") from None
