"""Transaction schema, file ingestion, validation and summary statistics.

File format: comma-separated text with a header row. Columns, in order::

    txn_id, consumer_id, merchant_id, amount_cents, timestamp, mcc,
    card_id, txn_type, merchant_state, label

``merchant_state`` and ``label`` may be empty. An empty label marks the row
as unlabeled (scoring mode).
"""
from __future__ import annotations

import csv
import enum
import io
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from graphfraud.errors import EmptyDatasetError, HeaderMismatchError, RowValidationError

SCHEMA_VERSION = 1
COLUMNS = (
    "txn_id",
    "consumer_id",
    "merchant_id",
    "amount_cents",
    "timestamp",
    "mcc",
    "card_id",
    "txn_type",
    "merchant_state",
    "label",
)
TXN_TYPES = ("online", "in_store", "other")
UNKNOWN_STATE = "UNKNOWN"
LEGIT, FRAUD = 0, 1


class Provenance(str, enum.Enum):
    INGESTED = "ingested"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True, slots=True)
class Transaction:
    txn_id: str
    consumer_id: str
    merchant_id: str
    amount: int  # USD cents
    timestamp: int  # epoch seconds, UTC
    mcc: int
    card_id: str
    txn_type: str
    merchant_state: str | None = None
    label: int | None = None

    def __post_init__(self):
        for name in ("txn_id", "consumer_id", "merchant_id", "card_id"):
            if not getattr(self, name):
                raise ValueError(f"{name}: must be non-empty")
        if self.amount < 0:
            raise ValueError(f"amount_cents: must be >= 0, got {self.amount}")
        if self.timestamp <= 0:
            raise ValueError(f"timestamp: must be > 0, got {self.timestamp}")
        if not 0 <= self.mcc <= 9999:
            raise ValueError(f"mcc: must be in [0, 9999], got {self.mcc}")
        if self.txn_type not in TXN_TYPES:
            raise ValueError(f"txn_type: must be one of {TXN_TYPES}, got {self.txn_type!r}")
        if self.merchant_state is not None and (
            len(self.merchant_state) != 2 or not self.merchant_state.isalpha()
            or not self.merchant_state.isupper()
        ):
            raise ValueError(f"merchant_state: expected 2-letter code, got {self.merchant_state!r}")
        if self.label not in (None, LEGIT, FRAUD):
            raise ValueError(f"label: must be 0, 1 or empty, got {self.label!r}")


@dataclass(frozen=True)
class RowError:
    line: int
    field: str
    reason: str


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered, immutable collection of transactions."""

    records: tuple[Transaction, ...]
    provenance: Provenance = Provenance.INGESTED
    schema_version: int = SCHEMA_VERSION
    rejected: tuple[RowError, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.records, self.provenance, self.schema_version) == (
            other.records, other.provenance, other.schema_version
        )

    __hash__ = None

    def subset(self, indices) -> Dataset:
        return Dataset(tuple(self.records[i] for i in indices), self.provenance, self.schema_version)

    @property
    def is_labeled(self) -> bool:
        return any(t.label is not None for t in self.records)

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        """Columnar numpy view used by the numeric pipeline."""
        recs = self.records
        return {
            "amount": np.fromiter((t.amount for t in recs), dtype=np.int64, count=len(recs)),
            "timestamp": np.fromiter((t.timestamp for t in recs), dtype=np.int64, count=len(recs)),
            "mcc": np.fromiter((t.mcc for t in recs), dtype=np.int64, count=len(recs)),
            "label": np.fromiter(
                (-1 if t.label is None else t.label for t in recs), dtype=np.int64, count=len(recs)
            ),
        }

    @property
    def labels(self) -> np.ndarray:
        """Labels as int64, with -1 for unlabeled rows."""
        return self.columns["label"]


# --- serialization ---------------------------------------------------------

def _format_row(t: Transaction) -> list[str]:
    return [
        t.txn_id,
        t.consumer_id,
        t.merchant_id,
        str(t.amount),
        str(t.timestamp),
        f"{t.mcc:04d}",
        t.card_id,
        t.txn_type,
        t.merchant_state or "",
        "" if t.label is None else str(t.label),
    ]


def dumps(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    writer.writerows(_format_row(t) for t in dataset.records)
    return buf.getvalue()


def write_transactions(dataset: Dataset, path) -> None:
    from graphfraud._io import atomic_write_text

    atomic_write_text(path, dumps(dataset))


def _int_field(raw: str, name: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name}: not an integer: {raw!r}") from None


def _parse_row(row: list[str]) -> Transaction:
    (txn_id, consumer_id, merchant_id, amount, ts, mcc, card_id, txn_type, state, label) = row
    return Transaction(
        txn_id=txn_id,
        consumer_id=consumer_id,
        merchant_id=merchant_id,
        amount=_int_field(amount, "amount_cents"),
        timestamp=_int_field(ts, "timestamp"),
        mcc=_int_field(mcc, "mcc"),
        card_id=card_id,
        txn_type=txn_type,
        merchant_state=state or None,
        label=None if label == "" else _int_field(label, "label"),
    )


def parse_transactions(path, schema_version: int = SCHEMA_VERSION, strict: bool = True) -> Dataset:
    """Read a transaction file.

    In strict mode (the default) any bad row raises ``RowValidationError``
    listing every rejected line. In lenient mode bad rows are skipped and
    recorded on ``Dataset.rejected``.
    """
    if schema_version != SCHEMA_VERSION:
        raise HeaderMismatchError(f"unsupported schema_version {schema_version}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"transaction file not found: {path}")
    records: list[Transaction] = []
    errors: list[RowError] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COLUMNS:
            raise HeaderMismatchError(
                f"{path}: header must be {','.join(COLUMNS)}, got {','.join(header or [])!r}"
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(COLUMNS):
                errors.append(RowError(line, "*", f"expected {len(COLUMNS)} columns, got {len(row)}"))
                continue
            try:
                records.append(_parse_row(row))
            except ValueError as exc:
                name, _, reason = str(exc).partition(": ")
                errors.append(RowError(line, name, reason))
    if errors and strict:
        raise RowValidationError(errors)
    return Dataset(tuple(records), Provenance.INGESTED, schema_version, rejected=tuple(errors))


# --- validation ------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str  # "duplicate-id" | "missing-label" | "invalid-field"
    rows: tuple[int, ...]  # 0-based record positions
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def __bool__(self):
        return bool(self.violations)

    def __len__(self):
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(dataset: Dataset, labeled: bool | None = None) -> ValidationReport:
    """Report every invariant violation in ``dataset``.

    ``labeled=None`` infers the mode: a dataset with any label present is
    treated as labeled and must be labeled throughout.
    """
    out: list[Violation] = []
    positions = defaultdict(list)
    for i, t in enumerate(dataset.records):
        positions[t.txn_id].append(i)
    for txn_id, rows in positions.items():
        if len(rows) > 1:
            out.append(Violation("duplicate-id", tuple(rows), f"txn_id {txn_id!r} appears at rows {rows}"))
    if labeled is None:
        labeled = dataset.is_labeled
    if labeled:
        for i, t in enumerate(dataset.records):
            if t.label is None:
                out.append(Violation("missing-label", (i,), f"txn_id {t.txn_id!r} has no label"))
    for i, t in enumerate(dataset.records):
        # records built with object.__setattr__ or similar can bypass __post_init__
        try:
            Transaction.__post_init__(t)
        except ValueError as exc:
            out.append(Violation("invalid-field", (i,), f"txn_id {t.txn_id!r}: {exc}"))
    return ValidationReport(tuple(out))


# --- summary ---------------------------------------------------------------

SUMMARY_QUANTILES = (0.25, 0.5, 0.75, 0.95, 0.99)


@dataclass(frozen=True)
class DatasetSummary:
    n_txns: int
    n_consumers: int
    n_merchants: int
    n_fraud: int
    fraud_rate: float
    amount_quantiles: tuple[tuple[float, int], ...]

    def as_tuple(self):
        return (self.n_txns, self.n_consumers, self.n_merchants, self.n_fraud, self.fraud_rate)

    def to_text(self) -> str:
        lines = [
            f"n_txns={self.n_txns}",
            f"n_consumers={self.n_consumers}",
            f"n_merchants={self.n_merchants}",
            f"n_fraud={self.n_fraud}",
            f"fraud_rate={self.fraud_rate!r}",
        ]
        lines += [f"amount_q{q:g}={c}" for q, c in self.amount_quantiles]
        return "\n".join(lines) + "\n"


def summarize(dataset: Dataset) -> DatasetSummary:
    if not len(dataset):
        raise EmptyDatasetError("cannot summarize an empty dataset")
    labels = Counter(t.label for t in dataset.records)
    n_labeled = labels[LEGIT] + labels[FRAUD]
    n_fraud = labels[FRAUD]
    amounts = dataset.columns["amount"]
    quantiles = tuple(
        (q, int(np.quantile(amounts, q, method="inverted_cdf"))) for q in SUMMARY_QUANTILES
    )
    return DatasetSummary(
        n_txns=len(dataset),
        n_consumers=len({t.consumer_id for t in dataset.records}),
        n_merchants=len({t.merchant_id for t in dataset.records}),
        n_fraud=n_fraud,
        fraud_rate=n_fraud / n_labeled if n_labeled else 0.0,
        amount_quantiles=quantiles,
    )
