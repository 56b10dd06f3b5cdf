"""Seeded synthetic transaction generator with a plantable fraud pattern.

Randomness comes from numpy's PCG64 bit generator. A ``SeedSequence`` built
from ``GenConfig.seed`` is spawned into one independent child stream per
generation stage, so stages never share state and output is reproducible
bit-for-bit for a given seed and numpy version.

Planted fraud model
-------------------
``round(n_txns * fraud_rate)`` transactions are fraud. A share
``signal_strength`` of them is *planted*: they come in bursts of 3 to 6
transactions on one card, at 3 or more distinct merchants within 30 minutes,
all under an atypical (high-risk) MCC. The rest are ordinary transactions
whose label is flipped uniformly at random. Ordinary transactions are
post-processed so that none of them matches the planted rule, which makes
the rule exact at ``signal_strength=1`` and absent at ``signal_strength=0``.
Amounts for fraud and legit rows share one truncated log-normal, so amount
alone never carries signal.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from graphfraud.data import Dataset, Provenance, Transaction, TXN_TYPES
from graphfraud.errors import ConfigError

TYPICAL_MCCS = (
    4121, 4814, 5311, 5411, 5651, 5661, 5691, 5712, 5732, 5812,
    5814, 5912, 5942, 5945, 5964, 5968, 5977, 5992, 5995, 5999,
)
ATYPICAL_MCCS = (4829, 6051, 6540, 7995)
# ordered by prior weight; the Zipf skew is applied along this order
STATES = (
    "CA", "TX", "NY", "FL", "IL", "PA", "OH", "GA", "NC", "MI",
    "NJ", "VA", "WA", "AZ", "MA", "TN", "IN", "MO", "MD", "WI",
)
REUSE_WINDOW_SECONDS = 3600
MIN_REUSE_MERCHANTS = 3
BURST_SPAN_SECONDS = 1800
BURST_SIZES = (3, 6)
ATYPICAL_LEGIT_RATE = 0.02
TXN_TYPE_PROBS = (0.85, 0.10, 0.05)
SECONDS_PER_DAY = 86_400
# relative activity per UTC hour: quiet overnight, peaking in the evening
_HOURLY = np.array(
    [3, 2, 1, 1, 1, 2, 3, 5, 7, 8, 9, 10, 11, 10, 9, 9, 10, 11, 12, 13, 12, 10, 7, 5],
    dtype=float,
)


@dataclass(frozen=True)
class GenConfig:
    n_consumers: int = 2000
    n_merchants: int = 30
    n_txns: int = 100_000
    fraud_rate: float = 0.0021
    seed: int = 0
    amount_median_cents: int = 3500
    amount_sigma: float = 1.25
    amount_cap_cents: int = 1_000_000
    state_skew: float = 1.5
    signal_strength: float = 0.8
    start_timestamp: int = 1_704_067_200  # 2024-01-01T00:00:00Z
    n_days: int = 14

    def validate(self) -> None:
        problems = []
        if self.n_consumers < 1:
            problems.append("n_consumers must be >= 1")
        if self.n_merchants < 1:
            problems.append("n_merchants must be >= 1")
        if self.n_txns < 1:
            problems.append("n_txns must be >= 1")
        if not 0.0 < self.fraud_rate < 1.0:
            problems.append("fraud_rate must be in (0, 1)")
        if not 0 <= self.seed < 2**64:
            problems.append("seed must be a 64-bit unsigned integer")
        if not 0.0 <= self.signal_strength <= 1.0:
            problems.append("signal_strength must be in [0, 1]")
        if self.signal_strength > 0 and self.n_merchants < MIN_REUSE_MERCHANTS:
            problems.append(f"planting fraud needs n_merchants >= {MIN_REUSE_MERCHANTS}")
        if self.amount_median_cents < 1 or self.amount_sigma <= 0:
            problems.append("amount_median_cents must be >= 1 and amount_sigma > 0")
        if self.amount_cap_cents < self.amount_median_cents:
            problems.append("amount_cap_cents must be >= amount_median_cents")
        if self.state_skew < 0:
            problems.append("state_skew must be >= 0")
        if self.start_timestamp <= 0 or self.n_days < 1:
            problems.append("start_timestamp must be > 0 and n_days >= 1")
        if problems:
            raise ConfigError("invalid GenConfig: " + "; ".join(problems))

    @classmethod
    def from_mapping(cls, values: dict) -> GenConfig:
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown GenConfig keys: {sorted(unknown)}")
        kwargs = {}
        for name, raw in values.items():
            default = getattr(cls, name)
            kwargs[name] = type(default)(raw)
        return cls(**kwargs)


def _fraud_counts(config: GenConfig) -> tuple[int, int]:
    n_fraud = round(config.n_txns * config.fraud_rate)
    planted = round(n_fraud * config.signal_strength)
    if 0 < planted < BURST_SIZES[0]:
        planted = BURST_SIZES[0] if n_fraud >= BURST_SIZES[0] else 0
    return n_fraud, planted


def _lognormal_cdf(x: float, median: float, sigma: float) -> float:
    return 0.5 * (1.0 + math.erf(math.log(x / median) / (sigma * math.sqrt(2.0))))


@dataclass(frozen=True)
class PlantSpec:
    rule: str
    atypical_mccs: tuple[int, ...]
    reuse_window_seconds: int
    min_distinct_merchants: int
    burst_span_seconds: int
    signal_strength: float
    deterministic_rule: bool
    labels_independent_of_features: bool
    n_txns: int
    fraud_rate: float
    expected_fraud_count: float
    fraud_count: int
    planted_count: int
    random_count: int
    p_amount_below_250usd: float
    p_amount_above_1000usd: float

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> PlantSpec:
        raw = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        kwargs = {}
        for f in fields(cls):
            value = raw[f.name]
            if f.name == "atypical_mccs":
                kwargs[f.name] = tuple(int(v) for v in value.split(",") if v)
            elif f.type in ("bool",):
                kwargs[f.name] = value == "true"
            elif f.type == "int":
                kwargs[f.name] = int(value)
            elif f.type == "float":
                kwargs[f.name] = float(value)
            else:
                kwargs[f.name] = value
        return cls(**kwargs)


def plant_summary(config: GenConfig) -> PlantSpec:
    """Describe the planted rule and the marginal statistics ``generate`` targets."""
    config.validate()
    n_fraud, planted = _fraud_counts(config)
    median = float(config.amount_median_cents)
    cap_mass = _lognormal_cdf(config.amount_cap_cents, median, config.amount_sigma)
    below = min(_lognormal_cdf(25_000, median, config.amount_sigma) / cap_mass, 1.0)
    above = max(1.0 - _lognormal_cdf(100_000, median, config.amount_sigma) / cap_mass, 0.0)
    s = config.signal_strength
    if s == 1.0:
        rule = "fraud iff card used at >= 3 distinct merchants within +/-1h and mcc is atypical"
    elif s == 0.0:
        rule = "labels assigned uniformly at random; independent of all features"
    else:
        rule = (
            "planted fraud: card used at >= 3 distinct merchants within +/-1h with atypical mcc; "
            "remaining fraud labels assigned uniformly at random"
        )
    return PlantSpec(
        rule=rule,
        atypical_mccs=ATYPICAL_MCCS,
        reuse_window_seconds=REUSE_WINDOW_SECONDS,
        min_distinct_merchants=MIN_REUSE_MERCHANTS,
        burst_span_seconds=BURST_SPAN_SECONDS,
        signal_strength=s,
        deterministic_rule=s == 1.0,
        labels_independent_of_features=s == 0.0,
        n_txns=config.n_txns,
        fraud_rate=config.fraud_rate,
        expected_fraud_count=config.n_txns * config.fraud_rate,
        fraud_count=n_fraud,
        planted_count=planted,
        random_count=n_fraud - planted,
        p_amount_below_250usd=below,
        p_amount_above_1000usd=above,
    )


def _amounts(rng: np.random.Generator, n: int, config: GenConfig) -> np.ndarray:
    mu = math.log(config.amount_median_cents)
    out = rng.lognormal(mu, config.amount_sigma, size=n)
    over = out > config.amount_cap_cents
    while over.any():
        out[over] = rng.lognormal(mu, config.amount_sigma, size=int(over.sum()))
        over = out > config.amount_cap_cents
    return np.maximum(np.rint(out), 1).astype(np.int64)


def _burst_sizes(total: int, rng: np.random.Generator) -> list[int]:
    lo, hi = BURST_SIZES
    sizes = []
    remaining = total
    while remaining > 0:
        if remaining <= hi:
            b = remaining
        else:
            b = int(rng.integers(lo, hi + 1))
            if remaining - b < lo:
                b = remaining - lo
        sizes.append(b)
        remaining -= b
    return sizes


def generate(config: GenConfig) -> Dataset:
    """Generate ``config.n_txns`` labeled transactions, sorted by timestamp."""
    from graphfraud.features import card_reuse_counts

    config.validate()
    n_fraud, planted = _fraud_counts(config)
    root = np.random.SeedSequence(config.seed)
    rng_entities, rng_ordinary, rng_bursts, rng_fix, rng_flip = (
        np.random.Generator(np.random.PCG64(s)) for s in root.spawn(5)
    )
    nc, nm = config.n_consumers, config.n_merchants

    # entities
    consumer_w = rng_entities.gamma(2.0, 1.0, size=nc)
    consumer_w /= consumer_w.sum()
    n_cards = 1 + rng_entities.binomial(2, 0.3, size=nc)
    merchant_w = rng_entities.gamma(1.5, 1.0, size=nm)
    merchant_w /= merchant_w.sum()
    merchant_mcc = rng_entities.choice(np.array(TYPICAL_MCCS), size=nm)
    state_w = 1.0 / np.arange(1, len(STATES) + 1) ** config.state_skew
    merchant_state = rng_entities.choice(len(STATES), size=nm, p=state_w / state_w.sum())

    hour_p = _HOURLY / _HOURLY.sum()
    typical = np.array(TYPICAL_MCCS)
    atypical = np.array(ATYPICAL_MCCS)

    # ordinary traffic
    n_ord = config.n_txns - planted
    r = rng_ordinary
    o_consumer = r.choice(nc, size=n_ord, p=consumer_w)
    o_card = np.floor(r.random(n_ord) * n_cards[o_consumer]).astype(np.int64)
    o_merchant = r.choice(nm, size=n_ord, p=merchant_w)
    day = r.integers(0, config.n_days, size=n_ord)
    hour = r.choice(24, size=n_ord, p=hour_p)
    o_time = config.start_timestamp + day * SECONDS_PER_DAY + hour * 3600 + r.integers(0, 3600, size=n_ord)
    u = r.random(n_ord)
    o_mcc = np.where(u < 0.8, merchant_mcc[o_merchant], r.choice(typical, size=n_ord))
    o_mcc = np.where(r.random(n_ord) < ATYPICAL_LEGIT_RATE, r.choice(atypical, size=n_ord), o_mcc)
    o_amount = _amounts(r, n_ord, config)
    o_type = r.choice(len(TXN_TYPES), size=n_ord, p=TXN_TYPE_PROBS)

    # planted bursts
    r = rng_bursts
    b_cols = {k: [] for k in ("consumer", "card", "merchant", "time", "mcc")}
    window_end = config.start_timestamp + config.n_days * SECONDS_PER_DAY - BURST_SPAN_SECONDS
    for size in _burst_sizes(planted, r):
        c = int(r.choice(nc, p=consumer_w))
        card = int(r.integers(0, n_cards[c]))
        t0 = int(r.integers(config.start_timestamp, window_end))
        offsets = np.sort(r.integers(0, BURST_SPAN_SECONDS + 1, size=size))
        merchants = r.permutation(nm)[: min(size, nm)]
        if size > nm:
            merchants = np.concatenate([merchants, r.choice(nm, size=size - nm)])
        b_cols["consumer"].append(np.full(size, c))
        b_cols["card"].append(np.full(size, card))
        b_cols["merchant"].append(merchants)
        b_cols["time"].append(t0 + offsets)
        b_cols["mcc"].append(np.full(size, int(r.choice(atypical))))
    if planted:
        b = {k: np.concatenate(v).astype(np.int64) for k, v in b_cols.items()}
    else:
        b = {k: np.zeros(0, dtype=np.int64) for k in b_cols}
    b_amount = _amounts(r, planted, config)

    consumer = np.concatenate([o_consumer, b["consumer"]])
    card = np.concatenate([o_card, b["card"]])
    merchant = np.concatenate([o_merchant, b["merchant"]])
    times = np.concatenate([o_time, b["time"]]).astype(np.int64)
    mcc = np.concatenate([o_mcc, b["mcc"]]).astype(np.int64)
    amount = np.concatenate([o_amount, b_amount])
    ttype = np.concatenate([o_type, np.zeros(planted, dtype=np.int64)])
    is_planted = np.concatenate([np.zeros(n_ord, bool), np.ones(planted, bool)])

    # no ordinary transaction may match the planted rule
    card_key = consumer * 4 + card
    reuse = card_reuse_counts(card_key, times, merchant, REUSE_WINDOW_SECONDS)
    clash = ~is_planted & (reuse >= MIN_REUSE_MERCHANTS) & np.isin(mcc, atypical)
    mcc[clash] = rng_fix.choice(typical, size=int(clash.sum()))

    label = is_planted.astype(np.int64)
    flips = rng_flip.choice(n_ord, size=n_fraud - planted, replace=False)
    label[flips] = 1

    order = np.lexsort((np.arange(times.shape[0]), times))
    width = max(7, len(str(config.n_txns)))
    records = []
    for k, i in enumerate(order):
        c = int(consumer[i])
        m = int(merchant[i])
        records.append(
            Transaction(
                txn_id=f"T{k:0{width}d}",
                consumer_id=f"C{c:05d}",
                merchant_id=f"M{m:03d}",
                amount=int(amount[i]),
                timestamp=int(times[i]),
                mcc=int(mcc[i]),
                card_id=f"K{c:05d}-{int(card[i])}",
                txn_type=TXN_TYPES[int(ttype[i])],
                merchant_state=STATES[int(merchant_state[m])],
                label=int(label[i]),
            )
        )
    return Dataset(tuple(records), Provenance.SYNTHETIC)
