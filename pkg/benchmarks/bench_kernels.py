"""Time the numba and numpy kernel backends on generator-sized inputs.

    python3 benchmarks/bench_kernels.py [--n-txns 100000] [--repeat 5]

Each kernel is warmed up once (numba compiles on first call), then timed as
the best of ``--repeat`` runs. Outputs of the two backends are checked for
agreement before timing.
"""
import argparse
import time

import numpy as np

from graphfraud import kernels
from graphfraud._accel import HAS_NUMBA
from graphfraud.features import dataset_card_reuse
from graphfraud.graph import build_graph, normalize_adjacency
from graphfraud.synth import GenConfig, generate


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def window_inputs(dataset):
    cols = dataset.columns
    cards = np.unique([t.card_id for t in dataset], return_inverse=True)[1]
    merchants, keys = np.unique([t.merchant_id for t in dataset], return_inverse=True)
    order = np.lexsort((cols["timestamp"], cards))
    return (cards[order].astype(np.int64), cols["timestamp"][order], keys[order].astype(np.int64),
            merchants.size, 3600)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-txns", type=int, default=100_000)
    ap.add_argument("--width", type=int, default=64, help="columns of the dense operand")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    dataset = generate(GenConfig(n_txns=args.n_txns, seed=0))
    graph = build_graph(dataset)
    adj = normalize_adjacency(graph)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((graph.n_nodes, args.width))
    idx = rng.integers(0, graph.n_nodes, args.n_txns)
    vals = rng.standard_normal((args.n_txns, args.width))

    cases = [
        ("spmm", kernels._spmm_numba, kernels._spmm_numpy, (adj.indptr, adj.indices, adj.data, x)),
        ("scatter_add_rows", kernels._scatter_add_rows_numba, kernels._scatter_add_rows_numpy,
         (idx, vals, graph.n_nodes)),
        ("window_distinct_counts", kernels._window_distinct_counts_numba,
         kernels._window_distinct_counts_numpy, window_inputs(dataset)),
    ]
    print(f"n_txns={args.n_txns} nodes={graph.n_nodes} nnz={adj.nnz} width={args.width} "
          f"active backend={kernels.BACKEND}")
    print(f"{'kernel':<24}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, fast, slow, inputs in cases:
        if not np.allclose(fast(*inputs), slow(*inputs), rtol=0, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_fast = best_of(fast, inputs, args.repeat)
        t_slow = best_of(slow, inputs, args.repeat)
        print(f"{name:<24}{t_fast * 1e3:>12.2f}{t_slow * 1e3:>12.2f}{t_slow / t_fast:>9.1f}x")

    t0 = time.perf_counter()
    dataset_card_reuse(dataset)
    print(f"end-to-end card reuse feature ({kernels.BACKEND}): {(time.perf_counter() - t0) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
