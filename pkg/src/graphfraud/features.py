"""Node and edge feature construction.

Edge features fuse two views of a transaction: a tabular encoding of its
structured fields and a semantic embedding from a pluggable provider. Node
features summarize the transactions incident to each node.
"""
from __future__ import annotations

import hashlib
import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from graphfraud import kernels
from graphfraud.data import TXN_TYPES, UNKNOWN_STATE, Dataset, Transaction
from graphfraud.errors import (
    DimensionMismatchError,
    EmptyDatasetError,
    GraphFraudError,
    MissingEmbeddingError,
    NonFiniteError,
)
from graphfraud.mcc import describe

NUMERIC_FIELDS = ("log_amount", "hour_sin", "hour_cos", "day_index")
CATEGORICAL_FIELDS = ("mcc", "txn_type", "merchant_state", "card_reuse")
REUSE_WINDOW_SECONDS = 3600
REUSE_BUCKETS = 5  # 1, 2, 3, 4, 5+ distinct merchants
OOV = 0


# --- card reuse ------------------------------------------------------------

def card_reuse_counts(card, times, merchant, window=REUSE_WINDOW_SECONDS) -> np.ndarray:
    """Distinct merchants seen on the same card within ``[t - window, t + window]``.

    ``card`` and ``merchant`` are integer codes; ``merchant`` must lie in
    ``[0, merchant.max()]``. Result is aligned with the inputs.
    """
    card = np.asarray(card, dtype=np.int64)
    times = np.asarray(times, dtype=np.int64)
    merchant = np.asarray(merchant, dtype=np.int64)
    if card.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((times, card))
    counts = kernels.window_distinct_counts(
        card[order], times[order], merchant[order], int(merchant.max()) + 1, int(window)
    )
    out = np.empty_like(counts)
    out[order] = counts
    return out


def dataset_card_reuse(dataset: Dataset, window=REUSE_WINDOW_SECONDS) -> np.ndarray:
    cards: dict[str, int] = {}
    merchants: dict[str, int] = {}
    card = np.fromiter((cards.setdefault(t.card_id, len(cards)) for t in dataset), np.int64, len(dataset))
    merch = np.fromiter(
        (merchants.setdefault(t.merchant_id, len(merchants)) for t in dataset), np.int64, len(dataset)
    )
    return card_reuse_counts(card, dataset.columns["timestamp"], merch, window)


def reuse_bucket(count):
    return np.clip(np.asarray(count, dtype=np.int64), 1, REUSE_BUCKETS) - 1


# --- tabular encoder -------------------------------------------------------

def raw_numerics(amount, timestamp) -> np.ndarray:
    amount = np.asarray(amount, dtype=np.float64)
    timestamp = np.asarray(timestamp, dtype=np.int64)
    hour = (timestamp % 86_400) / 3600.0
    angle = 2.0 * math.pi * hour / 24.0
    return np.column_stack(
        [
            np.log(np.maximum(amount, 1.0)),
            np.sin(angle),
            np.cos(angle),
            (timestamp // 86_400).astype(np.float64),
        ]
    )


def _categorical_values(txns) -> dict[str, list]:
    return {
        "mcc": [t.mcc for t in txns],
        "txn_type": [t.txn_type for t in txns],
        "merchant_state": [t.merchant_state or UNKNOWN_STATE for t in txns],
    }


@dataclass
class TabularEncoder:
    """Standardized numerics followed by one embedding per categorical field.

    Row 0 of every embedding table is the out-of-vocabulary row.
    """

    mean: np.ndarray
    std: np.ndarray
    vocab: dict[str, dict]
    tables: dict[str, np.ndarray]
    d_cat: int
    seed: int = 0

    @property
    def dim(self) -> int:
        return len(NUMERIC_FIELDS) + len(CATEGORICAL_FIELDS) * self.d_cat

    def standardize(self, numerics: np.ndarray) -> np.ndarray:
        return (numerics - self.mean) / self.std

    def lookup(self, name: str, values) -> np.ndarray:
        rows = self.rows(name, values)
        return self.tables[name][rows]

    def rows(self, name: str, values) -> np.ndarray:
        if name == "card_reuse":
            return reuse_bucket(values) + 1
        vocab = self.vocab[name]
        return np.fromiter((vocab.get(v, OOV) for v in values), np.int64, len(values))

    def encode(self, txns, reuse_counts) -> np.ndarray:
        txns = list(txns)
        amount = [t.amount for t in txns]
        ts = [t.timestamp for t in txns]
        cats = _categorical_values(txns)
        parts = [self.standardize(raw_numerics(amount, ts).reshape(len(txns), -1))]
        for name in ("mcc", "txn_type", "merchant_state"):
            parts.append(self.lookup(name, cats[name]))
        parts.append(self.lookup("card_reuse", reuse_counts))
        return np.hstack(parts)

    def state(self) -> dict:
        """Plain-data form for checkpoints (JSON metadata + arrays)."""
        return {
            "meta": {
                "d_cat": self.d_cat,
                "seed": self.seed,
                "vocab": {k: list(v.keys()) for k, v in self.vocab.items()},
            },
            "arrays": {"mean": self.mean, "std": self.std, **{f"table_{k}": v for k, v in self.tables.items()}},
        }

    @classmethod
    def from_state(cls, meta: dict, arrays: dict) -> TabularEncoder:
        vocab = {k: {v: i + 1 for i, v in enumerate(values)} for k, values in meta["vocab"].items()}
        tables = {k: arrays[f"table_{k}"] for k in CATEGORICAL_FIELDS}
        return cls(arrays["mean"], arrays["std"], vocab, tables, meta["d_cat"], meta["seed"])


def fit_tabular(train: Dataset, d_cat: int = 8, seed: int = 0) -> TabularEncoder:
    """Fit standardizer statistics and vocabularies on the training split only.

    Embedding tables are fixed seeded Gaussian vectors scaled by
    ``1/sqrt(d_cat)``; they are not updated during training.
    """
    if not len(train):
        raise EmptyDatasetError("cannot fit a tabular encoder on an empty training split")
    cols = train.columns
    numerics = raw_numerics(cols["amount"], cols["timestamp"])
    mean = numerics.mean(axis=0)
    std = numerics.std(axis=0)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if flat.any():
        names = [n for n, f in zip(NUMERIC_FIELDS, flat) if f]
        warnings.warn(f"zero variance in {names}; stddev clamped to 1", RuntimeWarning, stacklevel=2)
        std = np.where(flat, 1.0, std)
        # exact zeros for constant columns, whatever the rounding in mean()
        mean = np.where(flat, numerics[0], mean)

    cats = _categorical_values(train.records)
    vocab = {
        "mcc": sorted(set(cats["mcc"])),
        "txn_type": list(TXN_TYPES),
        "merchant_state": sorted(set(cats["merchant_state"])),
        "card_reuse": list(range(REUSE_BUCKETS)),
    }
    streams = np.random.SeedSequence(seed).spawn(len(CATEGORICAL_FIELDS))
    tables = {}
    for name, ss in zip(CATEGORICAL_FIELDS, streams):
        rng = np.random.Generator(np.random.PCG64(ss))
        tables[name] = rng.standard_normal((len(vocab[name]) + 1, d_cat)) / math.sqrt(d_cat)
    return TabularEncoder(
        mean=mean,
        std=std,
        vocab={k: {v: i + 1 for i, v in enumerate(vals)} for k, vals in vocab.items()},
        tables=tables,
        d_cat=d_cat,
        seed=seed,
    )


# --- semantic providers ----------------------------------------------------

def semantic_text(txn: Transaction) -> str:
    return f"{describe(txn.mcc)} | {txn.txn_type} | {txn.merchant_state or UNKNOWN_STATE}"


_TOKEN = re.compile(r"[a-z0-9]+")


class StubSemanticProvider:
    """Deterministic stand-in for an LLM embedding service.

    Each unigram and bigram of the lower-cased text is hashed (BLAKE2b keyed
    by ``seed``) into a seed for a Gaussian vector; the sum is scaled to unit
    length. Identical text always yields the identical vector.
    """

    kind = "stub"

    def __init__(self, dim: int = 16, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _gram_vector(self, gram: str) -> np.ndarray:
        key = self.seed.to_bytes(8, "little")
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=16, key=key).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
        return rng.standard_normal(self.dim)

    def embed(self, text: str) -> np.ndarray:
        hit = self._cache.get(text)
        if hit is not None:
            return hit.copy()
        tokens = _TOKEN.findall(text.lower())
        grams = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
        if not grams:
            grams = [text]
        vec = np.zeros(self.dim)
        for g in grams:
            vec += self._gram_vector(g)
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # cancelling grams; astronomically unlikely
            vec = self._gram_vector(grams[0])
            norm = np.linalg.norm(vec)
        vec = vec / norm
        self._cache[text] = vec
        return vec.copy()

    def embed_transaction(self, txn: Transaction) -> np.ndarray:
        return self.embed(semantic_text(txn))

    def embed_many(self, txns) -> np.ndarray:
        return np.vstack([self.embed_transaction(t) for t in txns]) if txns else np.zeros((0, self.dim))


class EmbeddingFileError(GraphFraudError):
    pass


class FileSemanticProvider:
    """Serves vectors computed elsewhere, keyed by ``txn_id``."""

    kind = "file"

    def __init__(self, vectors: dict[str, np.ndarray], dim: int, source: str = ""):
        self.vectors = vectors
        self.dim = dim
        self.source = source

    def __len__(self):
        return len(self.vectors)

    def lookup(self, txn_id: str) -> np.ndarray:
        try:
            return self.vectors[txn_id].copy()
        except KeyError:
            raise MissingEmbeddingError(f"no embedding for txn_id {txn_id!r}") from None

    def embed_transaction(self, txn: Transaction) -> np.ndarray:
        return self.lookup(txn.txn_id)

    def embed_many(self, txns) -> np.ndarray:
        return np.vstack([self.lookup(t.txn_id) for t in txns]) if txns else np.zeros((0, self.dim))


def import_embeddings(path, expected_dim: int) -> FileSemanticProvider:
    """Load ``txn_id v1 ... vd`` lines (whitespace separated, ``#`` comments)."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            txn_id, values = parts[0], parts[1:]
            if len(values) != expected_dim:
                raise DimensionMismatchError(
                    f"{path}:{lineno}: txn_id {txn_id!r} has dim {len(values)}, expected {expected_dim}"
                )
            if txn_id in vectors:
                raise EmbeddingFileError(f"{path}:{lineno}: duplicate txn_id {txn_id!r}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise EmbeddingFileError(f"{path}:{lineno}: non-numeric value for {txn_id!r}") from None
            if not np.all(np.isfinite(vec)):
                raise NonFiniteError(f"{path}:{lineno}: non-finite value for txn_id {txn_id!r}")
            vectors[txn_id] = vec
    return FileSemanticProvider(vectors, expected_dim, str(path))


# --- fusion ----------------------------------------------------------------

@dataclass(frozen=True)
class FusionConfig:
    mode: str = "concat"
    alpha: float = 0.5

    def __post_init__(self):
        if self.mode not in ("concat", "weighted"):
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")

    def output_dim(self, d_sem: int, d_tab: int) -> int:
        if self.mode == "concat":
            return d_sem + d_tab
        if d_sem != d_tab:
            raise DimensionMismatchError(f"weighted fusion needs d_sem == d_tab, got {d_sem} and {d_tab}")
        return d_tab


def fuse(sem: np.ndarray, tab: np.ndarray, fusion: FusionConfig) -> np.ndarray:
    fusion.output_dim(sem.shape[-1], tab.shape[-1])
    if fusion.mode == "concat":
        return np.concatenate([sem, tab], axis=-1)
    return fusion.alpha * sem + (1.0 - fusion.alpha) * tab


def encode_edge(txn, enc: TabularEncoder, sem, fusion: FusionConfig, reuse_count: int = 1) -> np.ndarray:
    """Feature vector for one transaction.

    ``reuse_count`` is the card's distinct-merchant count around the
    transaction (see ``card_reuse_counts``); it depends on the surrounding
    data, so callers encoding a whole dataset should use ``encode_edges``.
    """
    tab = enc.encode([txn], [reuse_count])[0]
    return fuse(sem.embed_transaction(txn), tab, fusion)


def encode_edges(dataset: Dataset, enc, sem, fusion: FusionConfig, reuse=None) -> np.ndarray:
    if reuse is None:
        reuse = dataset_card_reuse(dataset)
    tab = enc.encode(dataset.records, reuse)
    return fuse(sem.embed_many(dataset.records), tab, fusion)


# --- node features ---------------------------------------------------------

def node_feature_dim(enc: TabularEncoder) -> int:
    return 2 + len(NUMERIC_FIELDS) + 1 + enc.d_cat


def init_node_features(graph, dataset: Dataset, enc: TabularEncoder) -> np.ndarray:
    """``[type one-hot | mean standardized numerics | log1p(txn count) | modal-MCC embedding]``.

    The MCC block is zero for consumers. Modal MCC ties go to the smallest code.
    """
    n = graph.n_nodes
    cols = dataset.columns
    num = enc.standardize(raw_numerics(cols["amount"], cols["timestamp"]))
    ends = np.concatenate([graph.src, graph.dst])
    both = np.vstack([num, num])
    count = np.bincount(ends, minlength=n).astype(np.float64)
    sums = kernels.scatter_add_rows(ends, both, n)
    means = sums / np.maximum(count, 1.0)[:, None]

    mcc_block = np.zeros((n, enc.d_cat))
    if graph.n_edges:
        codes, inverse = np.unique(cols["mcc"], return_inverse=True)
        tally = np.zeros((graph.n_merchants, codes.shape[0]), dtype=np.int64)
        np.add.at(tally, (graph.dst - graph.n_consumers, inverse), 1)
        modal = codes[np.argmax(tally, axis=1)]
        mcc_block[graph.n_consumers:] = enc.lookup("mcc", modal.tolist())

    onehot = np.zeros((n, 2))
    onehot[np.arange(n), graph.node_type] = 1.0
    return np.hstack([onehot, means, np.log1p(count)[:, None], mcc_block])


@dataclass
class FeatureSet:
    node_features: np.ndarray
    edge_features: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("node_features", "edge_features"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{name} contains non-finite values")

    @property
    def d_node(self) -> int:
        return self.node_features.shape[1]

    @property
    def d_edge(self) -> int:
        return self.edge_features.shape[1]


def build_features(graph, dataset: Dataset, enc: TabularEncoder, sem, fusion: FusionConfig) -> FeatureSet:
    edge = encode_edges(dataset, enc, sem, fusion)
    node = init_node_features(graph, dataset, enc)
    if edge.shape[0] != graph.n_edges or node.shape[0] != graph.n_nodes:
        raise DimensionMismatchError("feature rows do not match the graph")
    return FeatureSet(
        node,
        edge,
        {"d_sem": sem.dim, "d_tab": enc.dim, "fusion": fusion.mode, "alpha": fusion.alpha},
    )
