"""Graph-based fraud detection over consumer/merchant transaction graphs."""

from graphfraud.data import Dataset, Transaction, parse_transactions, summarize, validate
from graphfraud.graph import HeteroGraph, build_graph, normalize_adjacency
from graphfraud.metrics import ConfusionMatrix, MetricsReport, compute_metrics, emit_report
from graphfraud.synth import GenConfig, generate, plant_summary

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix",
    "Dataset",
    "GenConfig",
    "HeteroGraph",
    "MetricsReport",
    "Transaction",
    "build_graph",
    "compute_metrics",
    "emit_report",
    "generate",
    "normalize_adjacency",
    "parse_transactions",
    "plant_summary",
    "summarize",
    "validate",
]
