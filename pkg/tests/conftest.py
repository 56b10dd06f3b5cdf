import pytest

from graphfraud.data import Dataset, Transaction
from graphfraud.synth import GenConfig, generate

ACCEPTANCE_RESULTS = []


def txn(i, consumer, merchant, label=0, amount=1000, ts=1_704_067_200, mcc=5411,
        card=None, txn_type="online", state="CA"):
    return Transaction(
        txn_id=f"T{i}",
        consumer_id=consumer,
        merchant_id=merchant,
        amount=amount,
        timestamp=ts + i,
        mcc=mcc,
        card_id=card or f"K-{consumer}",
        txn_type=txn_type,
        merchant_state=state,
        label=label,
    )


@pytest.fixture
def tiny_dataset():
    """4 transactions, 3 consumers, 2 merchants, 1 fraud."""
    return Dataset((
        txn(0, "c1", "m1"),
        txn(1, "c2", "m1", label=1, amount=250),
        txn(2, "c3", "m2", state="NY"),
        txn(3, "c1", "m2", amount=99999),
    ))


@pytest.fixture(scope="session")
def small_synth():
    return generate(GenConfig(n_consumers=200, n_merchants=12, n_txns=3000, fraud_rate=0.03, seed=5))


@pytest.fixture(scope="session")
def toy_separable():
    """20 transactions, planted rule exact (signal_strength=1)."""
    return generate(GenConfig(n_consumers=5, n_merchants=4, n_txns=20, fraud_rate=0.3,
                              signal_strength=1.0, seed=2))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
