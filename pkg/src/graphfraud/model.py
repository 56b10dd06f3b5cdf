"""Two-layer GCN with a linear edge-classification head, trained from scratch.

Forward pass for node features ``X`` and normalized adjacency ``A``::

    H1 = relu(A @ X @ W1 + b1)
    H2 = relu(A @ H1 @ W2 + b2)
    logits[e] = [H2[u_e], H2[v_e], x_e] @ head_W + head_b

where ``(u_e, v_e)`` are the consumer and merchant of transaction ``e`` and
``x_e`` its edge features. With ``head_hidden > 0`` the head gains one relu
hidden layer (``out_W``, ``out_b``). Gradients are derived by hand for this
architecture; ``grad_check`` compares them with central differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from graphfraud import kernels
from graphfraud.errors import ConfigError, NonFiniteError, ShapeMismatchError

PARAM_NAMES = ("W1", "b1", "W2", "b2", "head_W", "head_b", "out_W", "out_b")


@dataclass(frozen=True)
class ModelConfig:
    d_node: int
    d_edge: int
    h1: int = 64
    h2: int = 32
    head_hidden: int = 0

    @property
    def head_in(self) -> int:
        return 2 * self.h2 + self.d_edge


@dataclass
class ModelParams:
    """Parameter tensors (float64). Also used as the container for gradients."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    head_W: np.ndarray
    head_b: np.ndarray
    out_W: np.ndarray | None = None
    out_b: np.ndarray | None = None

    def items(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if value is not None:
                yield name, value

    def map(self, fn) -> ModelParams:
        return ModelParams(**{name: fn(value) for name, value in self.items()})

    def copy(self) -> ModelParams:
        return self.map(np.copy)

    def zeros_like(self) -> ModelParams:
        return self.map(np.zeros_like)

    @property
    def config(self) -> ModelConfig:
        h2 = self.W2.shape[1]
        head_hidden = self.head_W.shape[1] if self.out_W is not None else 0
        return ModelConfig(
            d_node=self.W1.shape[0],
            d_edge=self.head_W.shape[0] - 2 * h2,
            h1=self.W1.shape[1],
            h2=h2,
            head_hidden=head_hidden,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for _, v in self.items()])

    def with_flat(self, theta: np.ndarray) -> ModelParams:
        out, i = {}, 0
        for name, value in self.items():
            out[name] = theta[i:i + value.size].reshape(value.shape).copy()
            i += value.size
        return ModelParams(**out)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for _, v in self.items())


def _glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Seeded Glorot-uniform weights, zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    c = config
    head_out = c.head_hidden if c.head_hidden else 2
    params = ModelParams(
        W1=_glorot(rng, c.d_node, c.h1),
        b1=np.zeros(c.h1),
        W2=_glorot(rng, c.h1, c.h2),
        b2=np.zeros(c.h2),
        head_W=_glorot(rng, c.head_in, head_out),
        head_b=np.zeros(head_out),
    )
    if c.head_hidden:
        params.out_W = _glorot(rng, c.head_hidden, 2)
        params.out_b = np.zeros(2)
    return params


def relu(x):
    return np.maximum(x, 0.0)


def gcn_layer(adj, H, W, b, act="relu"):
    """``act(adj @ H @ W + b)`` with ``b`` broadcast over rows."""
    if H.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatchError(f"H {H.shape}, W {W.shape}, b {b.shape} do not agree")
    Z = adj @ (H @ W) + b
    if act == "relu":
        return relu(Z)
    if act == "none":
        return Z
    raise ValueError(f"unknown activation {act!r}")


@dataclass
class ForwardCache:
    adj: object
    X: np.ndarray
    Z1: np.ndarray
    H1: np.ndarray
    Z2: np.ndarray
    H2: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    E: np.ndarray
    Zh: np.ndarray | None
    logits: np.ndarray
    n_nodes: int


def _check_inputs(graph, node_features, edge_features, params):
    cfg = params.config
    if node_features.shape != (graph.n_nodes, cfg.d_node):
        raise ShapeMismatchError(
            f"node features {node_features.shape} vs expected ({graph.n_nodes}, {cfg.d_node})"
        )
    if edge_features.shape != (graph.n_edges, cfg.d_edge):
        raise ShapeMismatchError(
            f"edge features {edge_features.shape} vs expected ({graph.n_edges}, {cfg.d_edge})"
        )


def forward_with_cache(graph, adj, node_features, edge_features, params, edges=None):
    """Logits for ``edges`` (default: every edge) plus what ``backward`` needs."""
    _check_inputs(graph, node_features, edge_features, params)
    if edges is None:
        src, dst, xe = graph.src, graph.dst, edge_features
    else:
        edges = np.asarray(edges, dtype=np.int64)
        src, dst, xe = graph.src[edges], graph.dst[edges], edge_features[edges]
    X = node_features
    Z1 = adj @ (X @ params.W1) + params.b1
    H1 = relu(Z1)
    Z2 = adj @ (H1 @ params.W2) + params.b2
    H2 = relu(Z2)
    E = np.hstack([H2[src], H2[dst], xe])
    if params.out_W is None:
        Zh = None
        logits = E @ params.head_W + params.head_b
    else:
        Zh = E @ params.head_W + params.head_b
        logits = relu(Zh) @ params.out_W + params.out_b
    cache = ForwardCache(adj, X, Z1, H1, Z2, H2, src, dst, E, Zh, logits, graph.n_nodes)
    return logits, cache


def forward(graph, adj, node_features, edge_features, params, edges=None) -> np.ndarray:
    return forward_with_cache(graph, adj, node_features, edge_features, params, edges)[0]


# --- loss ------------------------------------------------------------------

@dataclass(frozen=True)
class ClassWeights:
    w0: float = 1.0
    w1: float = 1.0

    def __post_init__(self):
        if not (self.w0 > 0 and self.w1 > 0 and math.isfinite(self.w0) and math.isfinite(self.w1)):
            raise ConfigError(f"class weights must be positive and finite, got ({self.w0}, {self.w1})")

    @property
    def ratio(self) -> float:
        """Fraud weight relative to legit; the loss depends on nothing else."""
        return self.w1 / self.w0


def default_class_weights(labels) -> ClassWeights:
    """Balanced heuristic ``w_c = N / (2 * N_c)``."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    n1 = int(np.count_nonzero(labels == 1))
    n0 = int(np.count_nonzero(labels == 0))
    if n0 == 0 or n1 == 0:
        raise ConfigError("class weights need both classes in the training labels")
    return ClassWeights(n / (2.0 * n0), n / (2.0 * n1))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _sample_weights(labels, weights: ClassWeights) -> np.ndarray:
    # legit rows weigh 1, fraud rows weigh w1/w0
    return np.where(labels == 1, weights.ratio, 1.0)


def _check_labels(logits, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] == 0:
        raise ValueError("empty batch")
    if labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"{logits.shape[0]} logits vs {labels.shape[0]} labels")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    return labels


def weighted_cross_entropy(logits, labels, weights: ClassWeights = ClassWeights()) -> float:
    """``sum_i w_{y_i} CE_i / sum_i w_{y_i}``."""
    labels = _check_labels(logits, labels)
    ce = -log_softmax(logits)[np.arange(labels.shape[0]), labels]
    v = _sample_weights(labels, weights)
    return float(np.dot(v, ce) / v.sum())


# --- backward --------------------------------------------------------------

def backward(cache: ForwardCache, params: ModelParams, labels, weights: ClassWeights = ClassWeights()):
    """Loss and exact gradients w.r.t. every parameter."""
    logits = cache.logits
    labels = _check_labels(logits, labels)
    if cache.E.shape[1] != params.head_W.shape[0]:
        raise ShapeMismatchError("cache does not belong to these parameters")
    m = labels.shape[0]
    v = _sample_weights(labels, weights)
    total = v.sum()
    logp = log_softmax(logits)
    loss = float(np.dot(v, -logp[np.arange(m), labels]) / total)

    dlogits = np.exp(logp)
    dlogits[np.arange(m), labels] -= 1.0
    dlogits *= (v / total)[:, None]

    g = {}
    if params.out_W is None:
        dZh = dlogits
    else:
        Hh = relu(cache.Zh)
        g["out_W"] = Hh.T @ dlogits
        g["out_b"] = dlogits.sum(axis=0)
        dZh = (dlogits @ params.out_W.T) * (cache.Zh > 0)
    g["head_W"] = cache.E.T @ dZh
    g["head_b"] = dZh.sum(axis=0)
    dE = dZh @ params.head_W.T

    h2 = params.W2.shape[1]
    ends = np.concatenate([cache.src, cache.dst])
    dH2 = kernels.scatter_add_rows(ends, np.vstack([dE[:, :h2], dE[:, h2:2 * h2]]), cache.n_nodes)

    adjT = cache.adj.T
    dZ2 = dH2 * (cache.Z2 > 0)
    P2 = adjT @ dZ2
    g["W2"] = cache.H1.T @ P2
    g["b2"] = dZ2.sum(axis=0)
    dZ1 = (P2 @ params.W2.T) * (cache.Z1 > 0)
    P1 = adjT @ dZ1
    g["W1"] = cache.X.T @ P1
    g["b1"] = dZ1.sum(axis=0)
    return loss, ModelParams(**g)


# --- optimizers ------------------------------------------------------------

def _check_finite(grads: ModelParams):
    for name, value in grads.items():
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite gradient in {name}")


class SGD:
    def __init__(self, lr: float = 0.01):
        self.lr = lr

    def step(self, params: ModelParams, grads: ModelParams) -> ModelParams:
        _check_finite(grads)
        return ModelParams(**{n: p - self.lr * getattr(grads, n) for n, p in params.items()})


class Adam:
    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: ModelParams) -> ModelParams:
        _check_finite(grads)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        out = {}
        for name, p in params.items():
            g = getattr(grads, name)
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            self.m[name], self.v[name] = m, v
            out[name] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return ModelParams(**out)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ConfigError(f"unknown optimizer {name!r}")


# --- gradient check --------------------------------------------------------

@dataclass(frozen=True)
class GradCheckConfig:
    n_consumers: int = 6
    n_merchants: int = 4
    n_edges: int = 15
    d_node: int = 5
    d_edge: int = 4
    h1: int = 8
    h2: int = 8
    head_hidden: int = 0
    step: float = 1e-5
    # denominators below this count as absolute error
    floor: float = 1e-7


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_skipped: int
    worst: str


def random_instance(config: GradCheckConfig, seed: int):
    """Random bipartite graph, features, parameters, labels and class weights."""
    from graphfraud.graph import HeteroGraph, normalize_adjacency

    rng = np.random.Generator(np.random.PCG64(seed))
    nc, nm = config.n_consumers, config.n_merchants
    graph = HeteroGraph.from_edges(
        nc, nm, rng.integers(0, nc, config.n_edges), nc + rng.integers(0, nm, config.n_edges)
    )
    adj = normalize_adjacency(graph)
    X = rng.standard_normal((graph.n_nodes, config.d_node))
    Xe = rng.standard_normal((graph.n_edges, config.d_edge))
    mcfg = ModelConfig(config.d_node, config.d_edge, config.h1, config.h2, config.head_hidden)
    params = init_params(mcfg, seed)
    # nonzero biases so both relu regimes are exercised
    params = replace(
        params,
        **{n: rng.normal(0.0, 0.3, size=getattr(params, n).shape)
           for n in ("b1", "b2", "head_b", "out_b") if getattr(params, n) is not None},
    )
    labels = rng.integers(0, 2, config.n_edges)
    labels[:2] = (0, 1)
    weights = ClassWeights(float(rng.uniform(0.5, 2.0)), float(rng.uniform(1.0, 20.0)))
    return graph, adj, X, Xe, params, labels, weights


def _relu_masks(cache: ForwardCache):
    masks = [cache.Z1 > 0, cache.Z2 > 0]
    if cache.Zh is not None:
        masks.append(cache.Zh > 0)
    return masks


def grad_check(config: GradCheckConfig = GradCheckConfig(), seed: int = 0, tamper=None) -> GradCheckResult:
    """Max relative error between ``backward`` and central differences.

    Relative error per coordinate is ``|a - n| / max(|a| + |n|, floor)``.
    Coordinates whose +/-step perturbation flips any relu mask are skipped,
    since the loss is not differentiable there. ``tamper`` may rewrite the
    analytic gradients before comparison (used to test the checker itself).
    """
    graph, adj, X, Xe, params, labels, weights = random_instance(config, seed)
    _, cache = forward_with_cache(graph, adj, X, Xe, params)
    _, grads = backward(cache, params, labels, weights)
    if tamper is not None:
        grads = tamper(grads)
    base_masks = _relu_masks(cache)
    analytic = grads.flat()
    theta = params.flat()
    names = [f"{n}[{i}]" for n, v in params.items() for i in range(v.size)]

    def evaluate(t):
        logits, c = forward_with_cache(graph, adj, X, Xe, params.with_flat(t))
        stable = all(np.array_equal(a, b) for a, b in zip(_relu_masks(c), base_masks))
        return weighted_cross_entropy(logits, labels, weights), stable

    worst, worst_name, checked, skipped = 0.0, "", 0, 0
    h = config.step
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        lp, ok_p = evaluate(tp)
        lm, ok_m = evaluate(tm)
        if not (ok_p and ok_m):
            skipped += 1
            continue
        numeric = (lp - lm) / (2 * h)
        rel = abs(analytic[i] - numeric) / max(abs(analytic[i]) + abs(numeric), config.floor)
        checked += 1
        if rel > worst:
            worst, worst_name = rel, names[i]
    return GradCheckResult(worst, checked, skipped, worst_name)


# --- serialization ---------------------------------------------------------

def params_to_arrays(params: ModelParams) -> dict[str, np.ndarray]:
    return {f"param_{n}": v for n, v in params.items()}


def params_from_arrays(arrays) -> ModelParams:
    kwargs = {}
    for f in fields(ModelParams):
        key = f"param_{f.name}"
        if key in arrays:
            kwargs[f.name] = np.asarray(arrays[key], dtype=np.float64)
    return ModelParams(**kwargs)
