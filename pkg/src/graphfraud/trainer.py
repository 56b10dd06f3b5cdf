"""Data splits, feature preparation, training loop and evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from graphfraud.data import Dataset
from graphfraud.errors import ConfigError, EmptyDatasetError, NonFiniteError
from graphfraud.features import FeatureSet, FusionConfig, StubSemanticProvider, build_features, fit_tabular
from graphfraud.graph import build_graph, normalize_adjacency
from graphfraud.metrics import ConfusionMatrix, MetricsReport, compute_metrics
from graphfraud.model import (
    ClassWeights,
    ModelConfig,
    ModelParams,
    backward,
    default_class_weights,
    forward,
    forward_with_cache,
    init_params,
    make_optimizer,
)

log = logging.getLogger(__name__)


# --- splitting -------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train, self.val, self.test)
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fracs)!r}")
        if not 0.0 < self.train < 1.0 or not all(0.0 <= f < 1.0 for f in fracs):
            raise ConfigError("train fraction must be in (0, 1), val/test in [0, 1)")

    @property
    def fractions(self):
        return (self.train, self.val, self.test)


def _allocate(n: int, fractions) -> list[int]:
    """Largest-remainder apportionment of ``n`` items over ``fractions``."""
    quotas = [f * n for f in fractions]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in order[: n - sum(counts)]:
        counts[k] += 1
    return counts


def stratified_split(dataset: Dataset, spec: SplitSpec = SplitSpec()):
    """Partition record positions into ``(train, val, test)`` index arrays.

    Each array is sorted ascending. With ``stratified`` every class is
    apportioned separately, so per-split class counts are within one of
    exact proportionality.
    """
    labels = dataset.labels
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.stratified:
        groups = []
        for c in (0, 1):
            idx = np.flatnonzero(labels == c)
            if idx.size == 0:
                raise ConfigError(f"stratified split needs both classes; class {c} is absent")
            groups.append(idx)
        unlabeled = np.flatnonzero(labels < 0)
        if unlabeled.size:
            groups.append(unlabeled)
    else:
        groups = [np.arange(len(dataset))]
    parts = [[], [], []]
    for idx in groups:
        idx = rng.permutation(idx)
        start = 0
        for k, count in enumerate(_allocate(idx.size, spec.fractions)):
            parts[k].append(idx[start:start + count])
            start += count
    return tuple(np.sort(np.concatenate(p)).astype(np.int64) for p in parts)


# --- prepared inputs -------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to rebuild features for a dataset."""

    d_cat: int = 8
    sem_dim: int = 16
    sem_seed: int = 0
    encoder_seed: int = 0
    fusion: str = "concat"
    alpha: float = 0.5
    norm: str = "symmetric"

    @property
    def fusion_config(self) -> FusionConfig:
        return FusionConfig(self.fusion, self.alpha)


@dataclass
class Prepared:
    dataset: Dataset
    graph: object
    adj: object
    features: FeatureSet
    labels: np.ndarray


def prepare(dataset: Dataset, encoder, provider, fusion: FusionConfig, norm: str = "symmetric") -> Prepared:
    graph = build_graph(dataset)
    adj = normalize_adjacency(graph, norm)
    features = build_features(graph, dataset, encoder, provider, fusion)
    return Prepared(dataset, graph, adj, features, dataset.labels)


def fit_and_prepare(dataset: Dataset, train_idx, config: PipelineConfig = PipelineConfig(), provider=None):
    """Fit the tabular encoder on ``train_idx`` rows, then featurize everything."""
    encoder = fit_tabular(dataset.subset(train_idx), config.d_cat, config.encoder_seed)
    if provider is None:
        provider = StubSemanticProvider(config.sem_dim, config.sem_seed)
    return encoder, prepare(dataset, encoder, provider, config.fusion_config, config.norm)


# --- training --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    optimizer: str = "adam"
    h1: int = 64
    h2: int = 32
    head_hidden: int = 0
    class_weights: str = "balanced"  # "balanced", "uniform" or "w0,w1"
    batch_size: int = 0  # 0: full batch
    seed: int = 0
    log_every: int = 0

    def resolve_weights(self, labels) -> ClassWeights:
        if self.class_weights == "balanced":
            return default_class_weights(labels)
        if self.class_weights == "uniform":
            return ClassWeights(1.0, 1.0)
        try:
            w0, w1 = (float(x) for x in self.class_weights.split(","))
        except ValueError:
            raise ConfigError(f"bad class_weights {self.class_weights!r}") from None
        return ClassWeights(w0, w1)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None = None
    val_macro_f1: float | None = None
    val_fraud_recall: float | None = None


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    weights: ClassWeights | None = None


def train(prepared: Prepared, train_idx, val_idx, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Full-graph message passing; loss over training edges only.

    Returns the parameters with the best validation macro-F1 (earliest epoch
    on ties; the last epoch when there is no validation split).
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    labels = prepared.labels
    if train_idx.size == 0:
        raise EmptyDatasetError("empty training split")
    if np.any(labels[train_idx] < 0):
        raise ConfigError("training split contains unlabeled rows")
    weights = config.resolve_weights(labels[train_idx])
    feats = prepared.features
    mcfg = ModelConfig(feats.d_node, feats.d_edge, config.h1, config.h2, config.head_hidden)
    params = init_params(mcfg, config.seed)
    result = TrainResult(params.copy(), weights=weights)
    if config.epochs == 0:
        return result

    optimizer = make_optimizer(config.optimizer, config.lr)
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))
    best_f1 = -1.0
    for epoch in range(1, config.epochs + 1):
        if config.batch_size and config.batch_size < train_idx.size:
            order = rng.permutation(train_idx)
            batches = [order[i:i + config.batch_size] for i in range(0, order.size, config.batch_size)]
        else:
            batches = [train_idx]
        losses = []
        for step, batch in enumerate(batches):
            _, cache = forward_with_cache(
                prepared.graph, prepared.adj, feats.node_features, feats.edge_features, params, batch
            )
            loss, grads = backward(cache, params, labels[batch], weights)
            if not math.isfinite(loss):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}, step {step}")
            params = optimizer.step(params, grads)
            losses.append(loss)
        record = EpochRecord(epoch, float(np.mean(losses)))
        if val_idx.size:
            report, val_loss = _val_metrics(prepared, params, val_idx, weights)
            record.val_loss = val_loss
            record.val_macro_f1 = report.macro.f1
            record.val_fraud_recall = report.by_label(1).recall
            if report.macro.f1 > best_f1:
                best_f1 = report.macro.f1
                result.params, result.best_epoch = params.copy(), epoch
        else:
            result.params, result.best_epoch = params, epoch
        result.history.append(record)
        if config.log_every and epoch % config.log_every == 0:
            log.info(
                "epoch %d train_loss %.6f val_macro_f1 %s",
                epoch, record.train_loss,
                "n/a" if record.val_macro_f1 is None else f"{record.val_macro_f1:.4f}",
            )
    return result


def _val_metrics(prepared, params, idx, weights):
    from graphfraud.model import weighted_cross_entropy

    logits = forward(
        prepared.graph, prepared.adj, prepared.features.node_features,
        prepared.features.edge_features, params, idx,
    )
    y = prepared.labels[idx]
    pred = predict_labels(logits[:, 1] - logits[:, 0])
    return compute_metrics(ConfusionMatrix.from_predictions(y, pred)), weighted_cross_entropy(logits, y, weights)


# --- inference -------------------------------------------------------------

def fraud_margin(prepared: Prepared, params: ModelParams, idx=None) -> np.ndarray:
    """Logit difference ``l_fraud - l_legit`` per edge (the log-odds of fraud)."""
    logits = forward(
        prepared.graph, prepared.adj, prepared.features.node_features,
        prepared.features.edge_features, params, idx,
    )
    return logits[:, 1] - logits[:, 0]


def fraud_probability(margin: np.ndarray) -> np.ndarray:
    out = np.empty_like(margin)
    pos = margin >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-margin[pos]))
    e = np.exp(margin[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def predict_labels(margin: np.ndarray, threshold: float | None = None) -> np.ndarray:
    """Fraud iff ``P(fraud) >= threshold``, compared in log-odds space.

    ``threshold=None`` is argmax with ties going to fraud, which is the same
    rule as ``threshold=0.5``.
    """
    if threshold is None or threshold == 0.5:
        cut = 0.0
    elif threshold <= 0.0:
        cut = -np.inf
    elif threshold >= 1.0:
        cut = np.inf
    else:
        cut = math.log(threshold / (1.0 - threshold))
    return (margin >= cut).astype(np.int64)


def confusion_for(prepared: Prepared, params: ModelParams, idx, threshold=None) -> ConfusionMatrix:
    idx = np.asarray(idx, dtype=np.int64)
    y = prepared.labels[idx]
    if np.any(y < 0):
        raise ConfigError("evaluation rows must be labeled")
    return ConfusionMatrix.from_predictions(y, predict_labels(fraud_margin(prepared, params, idx), threshold))


def evaluate(prepared: Prepared, params: ModelParams, idx=None, threshold=None, fingerprint: str = "") -> MetricsReport:
    if idx is None:
        idx = np.arange(prepared.graph.n_edges)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise EmptyDatasetError("empty evaluation set")
    return compute_metrics(confusion_for(prepared, params, idx, threshold), fingerprint)
