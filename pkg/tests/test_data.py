import random

import pytest
from hypothesis import given, settings, strategies as st

from graphfraud import data
from graphfraud.data import Dataset, Provenance, Transaction, parse_transactions, summarize, validate
from graphfraud.errors import EmptyDatasetError, HeaderMismatchError, RowValidationError

from conftest import txn

HEADER = ",".join(data.COLUMNS) + "\n"


def write(tmp_path, body, header=HEADER):
    p = tmp_path / "t.csv"
    p.write_text(header + body)
    return p


def test_parse_four_rows(tmp_path, tiny_dataset):
    p = tmp_path / "d.csv"
    data.write_transactions(tiny_dataset, p)
    ds = parse_transactions(p)
    assert len(ds) == 4
    assert ds.provenance is Provenance.INGESTED
    assert ds == tiny_dataset


def test_header_only_gives_empty_dataset(tmp_path):
    assert len(parse_transactions(write(tmp_path, ""))) == 0


def test_negative_amount_strict_and_lenient(tmp_path):
    p = write(tmp_path, "T1,c1,m1,-5,1704067200,5411,k1,online,CA,0\n")
    with pytest.raises(RowValidationError) as info:
        parse_transactions(p)
    err = info.value.errors[0]
    assert (err.line, err.field) == (2, "amount_cents")
    assert "line 2" in str(info.value)
    ds = parse_transactions(p, strict=False)
    assert len(ds) == 0
    assert len(ds.rejected) == 1


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_transactions(tmp_path / "nope.csv")


def test_header_mismatch(tmp_path):
    with pytest.raises(HeaderMismatchError):
        parse_transactions(write(tmp_path, "", header="a,b,c\n"))


def test_wrong_column_count_reported(tmp_path):
    p = write(tmp_path, "T1,c1,m1,5\nT2,c1,m1,5,1704067200,5411,k1,online,,\n")
    ds = parse_transactions(p, strict=False)
    assert len(ds) == 1
    assert ds.rejected[0].line == 2
    assert ds[0].label is None and ds[0].merchant_state is None


@pytest.mark.parametrize(
    "row, field",
    [
        ("T1,c1,m1,5,0,5411,k1,online,CA,0", "timestamp"),
        ("T1,c1,m1,5,1704067200,10000,k1,online,CA,0", "mcc"),
        ("T1,c1,m1,5,1704067200,5411,k1,phone,CA,0", "txn_type"),
        ("T1,c1,m1,5,1704067200,5411,k1,online,California,0", "merchant_state"),
        ("T1,c1,m1,5,1704067200,5411,k1,online,CA,2", "label"),
        ("T1,c1,m1,5.5,1704067200,5411,k1,online,CA,0", "amount_cents"),
    ],
)
def test_field_validation(tmp_path, row, field):
    with pytest.raises(RowValidationError) as info:
        parse_transactions(write(tmp_path, row + "\n"))
    assert info.value.errors[0].field == field


def test_validate_clean(small_synth):
    assert validate(small_synth.subset(range(10))).ok


def test_validate_duplicate_ids():
    a = txn(0, "c1", "m1")
    b = Transaction("T0", "c2", "m1", 5, 1_704_067_200, 5411, "k", "online", "CA", 0)
    report = validate(Dataset((a, txn(1, "c1", "m2"), b)))
    assert len(report) == 1
    v = report.violations[0]
    assert v.kind == "duplicate-id" and v.rows == (0, 2)


def test_validate_missing_label():
    ds = Dataset((txn(0, "c1", "m1"), txn(1, "c2", "m1", label=None)))
    report = validate(ds)
    assert [v.kind for v in report.violations] == ["missing-label"]
    # an all-unlabeled dataset is a valid scoring input
    assert validate(Dataset((txn(0, "c1", "m1", label=None),))).ok


def test_summarize_counts(tiny_dataset):
    s = summarize(tiny_dataset)
    assert s.as_tuple() == (4, 3, 2, 1, 0.25)


def test_summarize_all_legit():
    s = summarize(Dataset((txn(0, "c1", "m1"), txn(1, "c2", "m1"))))
    assert s.n_fraud == 0 and s.fraud_rate == 0.0


def test_summarize_empty():
    with pytest.raises(EmptyDatasetError):
        summarize(Dataset(()))


def test_summary_is_order_independent(small_synth):
    recs = list(small_synth.records)
    random.Random(1).shuffle(recs)
    assert summarize(Dataset(recs)) == summarize(small_synth)


_ids = st.text("abcXYZ019-_", min_size=1, max_size=6)
_txn = st.builds(
    Transaction,
    txn_id=_ids,
    consumer_id=_ids,
    merchant_id=_ids,
    amount=st.integers(0, 10**9),
    timestamp=st.integers(1, 2**40),
    mcc=st.integers(0, 9999),
    card_id=_ids,
    txn_type=st.sampled_from(data.TXN_TYPES),
    merchant_state=st.one_of(st.none(), st.sampled_from(["CA", "NY", "TX"])),
    label=st.one_of(st.none(), st.sampled_from([0, 1])),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(_txn, max_size=8, unique_by=lambda t: t.txn_id))
def test_serialize_parse_round_trip(tmp_path_factory, records):
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    ds = Dataset(records)
    data.write_transactions(ds, p)
    back = parse_transactions(p)
    assert back == ds
    assert data.dumps(back) == data.dumps(ds)
