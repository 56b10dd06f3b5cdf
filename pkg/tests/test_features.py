import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphfraud.data import Dataset
from graphfraud.errors import DimensionMismatchError, MissingEmbeddingError, NonFiniteError
from graphfraud.features import (
    NUMERIC_FIELDS,
    EmbeddingFileError,
    FusionConfig,
    StubSemanticProvider,
    build_features,
    card_reuse_counts,
    encode_edge,
    encode_edges,
    fit_tabular,
    import_embeddings,
    init_node_features,
    raw_numerics,
    semantic_text,
)
from graphfraud.graph import build_graph
from graphfraud.synth import GenConfig, generate

from conftest import txn


def test_constant_amounts_standardize_to_zero():
    ds = Dataset([txn(i, "c", "m", amount=500, ts=1_704_067_200 - i) for i in range(3)])
    with pytest.warns(RuntimeWarning, match="zero variance"):
        enc = fit_tabular(ds)
    cols = ds.columns
    z = enc.standardize(raw_numerics(cols["amount"], cols["timestamp"]))
    assert np.array_equal(z[:, 0], np.zeros(3))
    assert enc.std[0] == 1.0


def test_two_row_standardization_hand_values():
    ds = Dataset([txn(0, "c", "m", amount=100), txn(1, "c", "m", amount=300)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # hour/day columns are nearly constant here
        enc = fit_tabular(ds)
    assert enc.mean[0] == pytest.approx((math.log(100) + math.log(300)) / 2, abs=1e-12)
    assert enc.mean[0] == pytest.approx(5.1545, abs=1e-4)
    cols = ds.columns
    z = enc.standardize(raw_numerics(cols["amount"], cols["timestamp"]))
    assert z[:, 0] == pytest.approx([-1.0, 1.0], abs=1e-12)


def test_train_split_statistics(small_synth):
    enc = fit_tabular(small_synth)
    cols = small_synth.columns
    z = enc.standardize(raw_numerics(cols["amount"], cols["timestamp"]))
    assert np.abs(z.mean(axis=0)).max() <= 1e-9
    assert np.abs(z.std(axis=0) - 1.0).max() <= 1e-9


def test_statistics_come_from_train_only(small_synth):
    train = small_synth.subset(range(1000))
    enc = fit_tabular(train)
    ref = raw_numerics(train.columns["amount"], train.columns["timestamp"])
    assert np.allclose(enc.mean, ref.mean(axis=0), rtol=0, atol=1e-12)


def test_unseen_mcc_uses_oov_row():
    train = Dataset([txn(0, "c", "m", mcc=5411, amount=10), txn(1, "c", "m", mcc=5732, amount=20)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        enc = fit_tabular(train)
    assert enc.rows("mcc", [7995]).tolist() == [0]
    assert np.array_equal(enc.lookup("mcc", [7995])[0], enc.tables["mcc"][0])
    assert enc.rows("merchant_state", ["ZZ"]).tolist() == [0]


def test_stub_is_deterministic_and_unit_norm():
    a, b = StubSemanticProvider(16, seed=3), StubSemanticProvider(16, seed=3)
    text = "Grocery Stores and Supermarkets | online | CA"
    assert np.array_equal(a.embed(text), b.embed(text))
    assert np.linalg.norm(a.embed(text)) == pytest.approx(1.0, abs=1e-12)
    assert not np.array_equal(a.embed(text), StubSemanticProvider(16, seed=4).embed(text))


@settings(max_examples=200, deadline=None)
@given(st.text(min_size=1, max_size=40))
def test_stub_unit_norm_property(text):
    v = StubSemanticProvider(8).embed(text)
    assert v.shape == (8,)
    assert abs(np.linalg.norm(v) - 1.0) <= 1e-9


def test_semantic_text_uses_mcc_description():
    t = txn(0, "c", "m", mcc=7995, state=None)
    assert semantic_text(t) == "Betting and Casino Gambling | online | UNKNOWN"


@pytest.fixture
def encoder_and_data(small_synth):
    return fit_tabular(small_synth, d_cat=2), small_synth


def test_concat_dimension():
    # d_sem = 8, d_tab = 5 -> 13
    sem = np.arange(8.0)
    tab = np.arange(5.0)
    from graphfraud.features import fuse

    assert fuse(sem, tab, FusionConfig("concat")).shape == (13,)


def test_encode_edge_dimensions(encoder_and_data):
    enc, ds = encoder_and_data
    sem = StubSemanticProvider(8)
    assert enc.dim == 4 + 4 * 2
    v = encode_edge(ds[0], enc, sem, FusionConfig("concat"))
    assert v.shape == (8 + enc.dim,)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 0.3])
def test_weighted_fusion(encoder_and_data, alpha):
    enc, ds = encoder_and_data
    sem = StubSemanticProvider(enc.dim)
    t = ds[5]
    out = encode_edge(t, enc, sem, FusionConfig("weighted", alpha))
    s = sem.embed_transaction(t)
    tab = enc.encode([t], [1])[0]
    if alpha == 1.0:
        assert np.array_equal(out, s)
    elif alpha == 0.0:
        assert np.array_equal(out, tab)
    else:
        assert np.allclose(out, alpha * s + (1 - alpha) * tab, atol=1e-15)


def test_weighted_fusion_dim_mismatch(encoder_and_data):
    enc, ds = encoder_and_data
    with pytest.raises(DimensionMismatchError):
        encode_edge(ds[0], enc, StubSemanticProvider(enc.dim + 1), FusionConfig("weighted", 0.5))


def test_batch_encoding_matches_single(encoder_and_data):
    enc, ds = encoder_and_data
    sem = StubSemanticProvider(8)
    fusion = FusionConfig()
    from graphfraud.features import dataset_card_reuse

    reuse = dataset_card_reuse(ds)
    batch = encode_edges(ds, enc, sem, fusion, reuse)
    for i in (0, 17, 2999):
        assert np.array_equal(batch[i], encode_edge(ds[i], enc, sem, fusion, int(reuse[i])))


def test_card_reuse_counts():
    card = [0, 0, 0, 0, 1]
    times = [100, 200, 3701, 20_000, 150]
    merch = [0, 1, 2, 0, 0]
    # t=200 reaches both neighbours (3500 s away); the window is inclusive, so t=100 misses t=3701 by 1 s
    assert card_reuse_counts(card, times, merch, 3600).tolist() == [2, 3, 2, 1, 1]


@pytest.mark.filterwarnings("ignore:zero variance")
def test_node_features_layout(tiny_dataset):
    enc = fit_tabular(tiny_dataset, d_cat=3)
    g = build_graph(tiny_dataset)
    X = init_node_features(g, tiny_dataset, enc)
    assert X.shape == (5, 2 + len(NUMERIC_FIELDS) + 1 + 3)
    assert X[:3, :2].tolist() == [[1, 0]] * 3
    assert X[3:, :2].tolist() == [[0, 1]] * 2
    assert not X[:3, -3:].any()
    # consumer c2 has a single transaction: its mean equals that transaction
    cols = tiny_dataset.columns
    z = enc.standardize(raw_numerics(cols["amount"], cols["timestamp"]))
    assert np.allclose(X[1, 2:6], z[1], atol=1e-15)
    assert X[1, 6] == pytest.approx(math.log(2))
    assert np.array_equal(X[3, -3:], enc.lookup("mcc", [5411])[0])


def test_identical_histories_identical_rows():
    ds = Dataset([
        txn(0, "a", "m", amount=10), txn(1, "b", "m", amount=10),
        txn(2, "a", "n", amount=70), txn(3, "b", "n", amount=70),
    ])
    # same timestamps so the two consumers' multisets really are identical
    ds = Dataset([t.__class__(**{**{f: getattr(t, f) for f in t.__slots__}, "timestamp": 1_704_067_200 + (i // 2)})
                  for i, t in enumerate(ds)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        enc = fit_tabular(ds, d_cat=2)
    X = init_node_features(build_graph(ds), ds, enc)
    assert np.array_equal(X[0], X[1])


def test_import_embeddings(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("# header\nT0 1 2 3 4\nT1 0 0 0 1\nT2 -1 0.5 2 3e-2\n")
    prov = import_embeddings(p, 4)
    assert len(prov) == 3
    assert prov.lookup("T2").tolist() == [-1, 0.5, 2, 0.03]
    with pytest.raises(MissingEmbeddingError):
        prov.lookup("T9")


def test_import_embeddings_errors(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("T0 1 2 3 4\nT1 1 2 3\n")
    with pytest.raises(DimensionMismatchError, match="T1"):
        import_embeddings(p, 4)
    p.write_text("T0 1 2\nT0 1 2\n")
    with pytest.raises(EmbeddingFileError, match="duplicate"):
        import_embeddings(p, 2)
    p.write_text("T0 1 nan\n")
    with pytest.raises(NonFiniteError):
        import_embeddings(p, 2)


@pytest.mark.filterwarnings("ignore:zero variance")
def test_file_provider_in_pipeline(tmp_path, tiny_dataset):
    p = tmp_path / "emb.txt"
    p.write_text("".join(f"{t.txn_id} {i} 1 0\n" for i, t in enumerate(tiny_dataset)))
    prov = import_embeddings(p, 3)
    enc = fit_tabular(tiny_dataset, d_cat=2)
    fs = build_features(build_graph(tiny_dataset), tiny_dataset, enc, prov, FusionConfig())
    assert fs.edge_features[:, :3].tolist() == [[i, 1, 0] for i in range(4)]


@settings(max_examples=15, deadline=None)
@given(
    st.integers(1, 30), st.integers(1, 8), st.integers(1, 400),
    st.floats(0.01, 0.5), st.floats(0.0, 1.0), st.integers(0, 2**32),
)
def test_features_always_finite(nc, nm, n, rate, signal, seed):
    if signal > 0 and nm < 3:
        nm = 3
    ds = generate(GenConfig(n_consumers=nc, n_merchants=nm, n_txns=n, fraud_rate=rate,
                            signal_strength=signal, seed=seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        enc = fit_tabular(ds, d_cat=3)
    fs = build_features(build_graph(ds), ds, enc, StubSemanticProvider(4), FusionConfig())
    assert np.all(np.isfinite(fs.node_features)) and np.all(np.isfinite(fs.edge_features))
