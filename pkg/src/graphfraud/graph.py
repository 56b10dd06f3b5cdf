"""Bipartite consumer/merchant transaction graph and its normalized adjacency."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from graphfraud import kernels
from graphfraud._io import atomic_write_text
from graphfraud.errors import EmptyDatasetError, ShapeMismatchError

CONSUMER, MERCHANT = 0, 1


class HeteroGraph:
    """Consumers occupy node indices ``[0, Nc)``, merchants ``[Nc, Nc + Nm)``.

    Edge ``e`` is the e-th transaction: ``src[e]`` is its consumer node,
    ``dst[e]`` its merchant node. Repeated consumer/merchant pairs give
    parallel edges.
    """

    def __init__(self, consumer_index, merchant_index, src, dst, txn_ids):
        self.consumer_index = dict(consumer_index)
        self.merchant_index = dict(merchant_index)
        self.src = np.ascontiguousarray(src, dtype=np.int64)
        self.dst = np.ascontiguousarray(dst, dtype=np.int64)
        self.txn_ids = tuple(txn_ids)
        if not (self.src.shape == self.dst.shape == (len(self.txn_ids),)):
            raise ShapeMismatchError("src, dst and txn_ids must have one entry per edge")
        nc = self.n_consumers
        if self.n_edges and (
            self.src.min() < 0 or self.src.max() >= nc
            or self.dst.min() < nc or self.dst.max() >= self.n_nodes
        ):
            raise ShapeMismatchError("edge endpoints must run consumer -> merchant")

    @classmethod
    def from_edges(cls, n_consumers, n_merchants, src, dst, txn_ids=None) -> HeteroGraph:
        """Build from raw node indices; ids are synthesized as ``c<i>``/``m<j>``."""
        src = np.asarray(src, dtype=np.int64)
        if txn_ids is None:
            txn_ids = [f"e{i}" for i in range(src.shape[0])]
        return cls(
            {f"c{i}": i for i in range(n_consumers)},
            {f"m{j}": n_consumers + j for j in range(n_merchants)},
            src,
            dst,
            txn_ids,
        )

    @property
    def n_consumers(self) -> int:
        return len(self.consumer_index)

    @property
    def n_merchants(self) -> int:
        return len(self.merchant_index)

    @property
    def n_nodes(self) -> int:
        return self.n_consumers + self.n_merchants

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]

    @property
    def edges(self) -> list[tuple[int, int, str]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.txn_ids))

    @cached_property
    def node_type(self) -> np.ndarray:
        out = np.full(self.n_nodes, MERCHANT, dtype=np.int64)
        out[: self.n_consumers] = CONSUMER
        return out

    @cached_property
    def _incidence(self):
        # node -> incident edge ids, ascending
        ends = np.concatenate([self.src, self.dst])
        eids = np.concatenate([np.arange(self.n_edges), np.arange(self.n_edges)])
        order = np.lexsort((eids, ends))
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(ends, minlength=self.n_nodes), out=indptr[1:])
        return indptr, eids[order]

    def neighbors(self, node: int) -> list[tuple[int, int]]:
        """``(neighbor, edge_id)`` pairs ordered by edge id; parallel edges repeat."""
        if not 0 <= node < self.n_nodes:
            raise IndexError(f"node {node} out of range [0, {self.n_nodes})")
        indptr, eids = self._incidence
        out = []
        for e in eids[indptr[node]:indptr[node + 1]].tolist():
            other = self.dst[e] if self.src[e] == node else self.src[e]
            out.append((int(other), e))
        return out

    def degree(self) -> np.ndarray:
        return np.diff(self._incidence[0])

    def dump_edgelist(self, path) -> None:
        lines = [f"{u} {v} {t}" for u, v, t in self.edges]
        atomic_write_text(path, "".join(line + "\n" for line in lines))


def build_graph(dataset) -> HeteroGraph:
    """Index nodes by first appearance and add one edge per transaction."""
    if not len(dataset):
        raise EmptyDatasetError("cannot build a graph from an empty dataset")
    consumers: dict[str, int] = {}
    merchants: dict[str, int] = {}
    src = np.empty(len(dataset), dtype=np.int64)
    dst_local = np.empty(len(dataset), dtype=np.int64)
    for e, t in enumerate(dataset.records):
        src[e] = consumers.setdefault(t.consumer_id, len(consumers))
        dst_local[e] = merchants.setdefault(t.merchant_id, len(merchants))
    nc = len(consumers)
    return HeteroGraph(
        consumers,
        {m: nc + j for m, j in merchants.items()},
        src,
        dst_local + nc,
        [t.txn_id for t in dataset.records],
    )


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """CSR operator over graph nodes; rows sorted, columns sorted within rows."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    mode: str

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.n:
            raise ShapeMismatchError(f"operator is {self.n}x{self.n}, operand has shape {x.shape}")
        return kernels.spmm(self.indptr, self.indices, self.data, x)

    @cached_property
    def T(self) -> NormalizedAdjacency:
        if self.mode == "symmetric":
            return self
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return _csr(self.n, self.indices, rows, self.data, self.mode)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    @property
    def nnz(self) -> int:
        return self.indices.shape[0]


def _csr(n, rows, cols, vals, mode) -> NormalizedAdjacency:
    order = np.lexsort((cols, rows))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return NormalizedAdjacency(
        n,
        indptr,
        np.ascontiguousarray(cols[order], dtype=np.int64),
        np.ascontiguousarray(vals[order], dtype=np.float64),
        mode,
    )


def normalize_adjacency(graph: HeteroGraph, mode: str = "symmetric") -> NormalizedAdjacency:
    """Degree-normalize ``A + I``.

    ``A[i, j]`` is the number of transactions between i and j, and the
    degree counts the self-loop plus every incident edge. ``symmetric`` gives
    ``D^-1/2 (A + I) D^-1/2``; ``random_walk`` gives ``D^-1 (A + I)``.
    """
    if mode not in ("symmetric", "random_walk"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    n = graph.n_nodes
    if n == 0:
        raise EmptyDatasetError("cannot normalize an empty graph")
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([graph.src, graph.dst, loops])
    cols = np.concatenate([graph.dst, graph.src, loops])
    keys, counts = np.unique(rows * n + cols, return_counts=True)
    r, c = keys // n, keys % n
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    if mode == "symmetric":
        vals = counts / np.sqrt(deg[r] * deg[c])
    else:
        vals = counts / deg[r]
    return _csr(n, r, c, vals, mode)
