import io
import math

import pytest
from hypothesis import given, strategies as st

from prisample.cli import build_sample
from prisample.estimators import SubsetPredicate, subset_estimate
from prisample.store import (
    CountingReader,
    InputError,
    load_sample,
    read_records,
    sample_from_dict,
    sample_to_dict,
    save_sample,
)


def _csv(text):
    return list(read_records(io.StringIO(text)))


def test_reads_records_with_attributes_and_secondary():
    recs = _csv("id,weight,app,secondary\n1,2.5,web,-3\n2,0,dns,\n")
    assert recs[0].weight == 2.5 and recs[0].attributes == {"app": "web"} and recs[0].secondary == -3.0
    assert recs[1].secondary is None


@pytest.mark.parametrize("text,line", [
    ("id,app\n1,x\n", 1),
    ("id,weight\n1,2\n2,abc\n", 3),
    ("id,weight\n1,2\nx,2\n", 3),
    ("id,weight\n1,2\n1,3\n", 3),
    ("id,weight\n1,2,3\n", 2),
    ("id,weight\n1,-2\n", 2),
    ("", 1),
])
def test_errors_name_the_line(text, line):
    with pytest.raises(InputError, match=f"line {line}:"):
        _csv(text)


def test_negative_weight_guidance():
    with pytest.raises(InputError, match="secondary"):
        _csv("id,weight\n1,-2\n")


def test_counting_reader_refuses_second_pass():
    r = CountingReader(io.StringIO("a\nb\n"))
    assert list(r) == ["a\n", "b\n"] and r.lines == 2
    with pytest.raises(RuntimeError):
        list(r)


records_st = st.lists(
    st.tuples(st.floats(0, 1e300, allow_subnormal=True), st.sampled_from(["a", "b", "ü"]),
              st.one_of(st.none(), st.floats(-1e6, 1e6))),
    min_size=1, max_size=40,
)


@pytest.mark.parametrize("scheme", ["pri", "thr", "uwr", "wwr", "pri-relaxed"])
@given(rows=records_st, k=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_round_trip_is_bit_exact(tmp_path_factory, scheme, rows, k, seed):
    from prisample.model import ItemRecord

    items = [ItemRecord(i, w, {"app": a}, s) for i, (w, a, s) in enumerate(rows)]
    sample = build_sample(iter(items), scheme, k, seed)
    path = tmp_path_factory.mktemp("s") / "s.json"
    save_sample(str(path), sample, seed)
    back = load_sample(str(path))
    assert back == sample
    pred = SubsetPredicate.parse(["app=a"])
    assert subset_estimate(back, pred) == subset_estimate(sample, pred)


def test_rejects_unknown_version():
    with pytest.raises(InputError):
        sample_from_dict({"format_version": 2})


def test_infinite_priority_survives(tmp_path):
    from prisample.model import ItemRecord

    items = [ItemRecord(0, 1e308), ItemRecord(1, 1.0)]
    s = build_sample(iter(items), "pri", 1, 0)
    doc = sample_to_dict(s, 0)
    save_sample(str(tmp_path / "x.json"), s, 0)
    assert load_sample(str(tmp_path / "x.json")) == s
    assert doc["threshold"] == s.threshold and math.isfinite(s.threshold)
