import math

import numpy as np
import pytest

from graphfraud import data
from graphfraud.errors import ConfigError
from graphfraud.features import dataset_card_reuse
from graphfraud.metrics import amount_histogram
from graphfraud.synth import ATYPICAL_MCCS, MIN_REUSE_MERCHANTS, GenConfig, PlantSpec, generate, plant_summary


def test_exact_row_count_and_valid(small_synth):
    assert len(small_synth) == 3000
    assert data.validate(small_synth).ok
    assert small_synth.provenance is data.Provenance.SYNTHETIC


def test_same_seed_byte_identical():
    cfg = GenConfig(n_txns=5000, fraud_rate=0.0021, seed=7)
    assert data.dumps(generate(cfg)) == data.dumps(generate(cfg))


def test_different_seed_differs():
    a = generate(GenConfig(n_txns=500, fraud_rate=0.05, seed=1))
    b = generate(GenConfig(n_txns=500, fraud_rate=0.05, seed=2))
    assert data.dumps(a) != data.dumps(b)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_consumers": 0},
        {"n_merchants": 0},
        {"fraud_rate": 0.0},
        {"fraud_rate": 1.0},
        {"signal_strength": 1.5},
        {"seed": -1},
        {"n_merchants": 2, "signal_strength": 0.5},
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        generate(GenConfig(**{"n_txns": 100, **kwargs}))


def _rule_mask(ds):
    reuse = dataset_card_reuse(ds)
    mcc = ds.columns["mcc"]
    return (reuse >= MIN_REUSE_MERCHANTS) & np.isin(mcc, ATYPICAL_MCCS)


def test_signal_one_rule_is_exact():
    ds = generate(GenConfig(n_consumers=300, n_merchants=20, n_txns=20_000, fraud_rate=0.01,
                            signal_strength=1.0, seed=3))
    assert np.array_equal(_rule_mask(ds), ds.labels == 1)
    spec = plant_summary(GenConfig(signal_strength=1.0))
    assert spec.deterministic_rule and not spec.labels_independent_of_features


def test_signal_zero_has_no_planted_pattern():
    ds = generate(GenConfig(n_consumers=300, n_merchants=20, n_txns=20_000, fraud_rate=0.01,
                            signal_strength=0.0, seed=3))
    assert not _rule_mask(ds).any()
    spec = plant_summary(GenConfig(signal_strength=0.0))
    assert spec.labels_independent_of_features and not spec.deterministic_rule
    assert spec.planted_count == 0


def test_partial_signal_counts():
    cfg = GenConfig(n_txns=20_000, fraud_rate=0.01, signal_strength=0.7, seed=4)
    ds = generate(cfg)
    spec = plant_summary(cfg)
    assert spec.fraud_count == 200 and spec.planted_count == 140
    assert int(ds.labels.sum()) == 200
    assert int((_rule_mask(ds) & (ds.labels == 1)).sum()) == 140
    assert not (_rule_mask(ds) & (ds.labels == 0)).any()


def test_plant_summary_full_scale():
    spec = plant_summary(GenConfig(n_txns=2_840_000, fraud_rate=0.0021))
    assert spec.expected_fraud_count == pytest.approx(5964.0)
    assert spec.fraud_count == 5964


def test_plant_spec_text_round_trip():
    spec = plant_summary(GenConfig(signal_strength=0.3))
    assert PlantSpec.from_text(spec.to_text()) == spec


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_empirical_fraud_rate_converges(seed):
    cfg = GenConfig(n_txns=50_000, fraud_rate=0.0021, seed=seed)
    rate = generate(cfg).labels.mean()
    assert abs(rate - 0.0021) / 0.0021 <= 0.1


def test_summary_fraud_count_near_config():
    ds = generate(GenConfig(n_txns=100_000, fraud_rate=0.0021, seed=9))
    assert abs(data.summarize(ds).n_fraud - 210) <= 21


def _truncated_lognormal_bucket_mass(lo, hi, cfg):
    def cdf(x):
        if x <= 0:
            return 0.0
        return 0.5 * (1 + math.erf(math.log(x / cfg.amount_median_cents) / (cfg.amount_sigma * math.sqrt(2))))
    return (cdf(min(hi, cfg.amount_cap_cents)) - cdf(lo)) / cdf(cfg.amount_cap_cents)


def test_expected_fraud_amount_buckets_decrease_above_250():
    cfg = GenConfig()
    masses = [_truncated_lognormal_bucket_mass(lo, lo + 25_000, cfg) for lo in range(25_000, 1_000_000, 25_000)]
    assert all(a >= b for a, b in zip(masses, masses[1:]))


def test_empirical_fraud_amount_buckets_decrease_where_populated():
    cfg = GenConfig(n_txns=60_000, fraud_rate=0.2, seed=1)
    ds = generate(cfg)
    hist = dict(amount_histogram(ds, 25_000, fraud_only=True))
    n_fraud = int(ds.labels.sum())
    # buckets with an expected count of 100+ are well above sampling noise
    populated = [lo for lo in range(25_000, 1_000_000, 25_000)
                 if n_fraud * _truncated_lognormal_bucket_mass(lo, lo + 25_000, cfg) >= 100]
    assert len(populated) >= 2
    counts = [hist.get(lo, 0) for lo in populated]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
