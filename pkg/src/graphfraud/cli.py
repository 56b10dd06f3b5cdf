"""Command-line entry point: ``graphfraud <subcommand> [flags]``.

Exit codes: 0 success, 1 data or model error, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from graphfraud import data as data_mod
from graphfraud._io import atomic_write_text
from graphfraud.errors import GraphFraudError

SEED_ENV = "GRAPHFRAUD_SEED"
log = logging.getLogger("graphfraud")


class UsageError(Exception):
    pass


def _fractions(text: str):
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated fractions, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated fractions, got {text!r}")
    return parts


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must be in [0, 1], got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"global seed (falls back to ${SEED_ENV}, then 0)")
    common.add_argument("--config", default=None, help="flat key=value file; explicit flags win")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="graphfraud", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("synth", parents=[common], formatter_class=fmt, help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="transaction file to write (plant spec goes beside it)")
    p.add_argument("--n-txns", type=int, default=100_000)
    p.add_argument("--n-consumers", type=int, default=2000)
    p.add_argument("--n-merchants", type=int, default=30)
    p.add_argument("--fraud-rate", type=float, default=0.0021)
    p.add_argument("--signal-strength", type=float, default=0.8)
    p.add_argument("--state-skew", type=float, default=1.5)
    p.add_argument("--amount-median-cents", type=int, default=3500)
    p.add_argument("--amount-sigma", type=float, default=1.25)
    p.add_argument("--amount-cap-cents", type=int, default=1_000_000)

    p = sub.add_parser("ingest", parents=[common], formatter_class=fmt, help="validate and summarize a file")
    p.add_argument("--data", required=True, help="transaction file")
    p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
    p.add_argument("--out", default=None, help="write the summary here instead of stdout")
    p.add_argument("--graph-dump", default=None, help="also write the edge list (src dst txn_id)")

    def model_inputs(p):
        p.add_argument("--embeddings", default=None,
                       help="precomputed semantic vectors (txn_id v1 .. vd) instead of the stub")

    p = sub.add_parser("train", parents=[common], formatter_class=fmt, help="train a model")
    p.add_argument("--data", required=True, help="labeled transaction file")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--hidden1", type=int, default=64)
    p.add_argument("--hidden2", type=int, default=32)
    p.add_argument("--head-hidden", type=int, default=0, help="0 for a linear edge head")
    p.add_argument("--class-weights", default="balanced", help="balanced, uniform or W0,W1")
    p.add_argument("--batch-size", type=int, default=0, help="edges per step; 0 for full batch")
    p.add_argument("--split", type=_fractions, default=(0.7, 0.1, 0.2), help="train,val,test fractions")
    p.add_argument("--no-stratify", action="store_true", help="plain random split")
    p.add_argument("--fusion", choices=("concat", "weighted"), default="concat")
    p.add_argument("--alpha", type=float, default=0.5, help="semantic weight in weighted fusion")
    p.add_argument("--sem-dim", type=int, default=16, help="semantic embedding dimension")
    p.add_argument("--cat-dim", type=int, default=8, help="categorical embedding dimension")
    p.add_argument("--norm", choices=("symmetric", "random_walk"), default="symmetric")
    p.add_argument("--threshold", type=_probability, default=None,
                   help="fraud probability cutoff stored with the model (default argmax)")
    p.add_argument("--history", default=None, help="write per-epoch history CSV here")
    p.add_argument("--log-every", type=int, default=0)
    model_inputs(p)

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt, help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="checkpoint from `train`")
    p.add_argument("--part", choices=("test", "val", "train", "all"), default="test",
                   help="which split (recomputed from the checkpoint's split spec) to score")
    p.add_argument("--threshold", type=_probability, default=None)
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--out", default=None)
    p.add_argument("--sem-dim", type=int, default=None, help="override the stub provider dimension")
    model_inputs(p)

    p = sub.add_parser("score", parents=[common], formatter_class=fmt, help="score (possibly unlabeled) data")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=_probability, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--sem-dim", type=int, default=None, help="override the stub provider dimension")
    model_inputs(p)

    p = sub.add_parser("report", parents=[common], formatter_class=fmt, help="dataset histograms")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=("summary", "histogram", "states"), default="histogram")
    p.add_argument("--bucket-cents", type=int, default=5000)
    p.add_argument("--all", action="store_true", help="include legit rows (default: fraud only)")
    p.add_argument("--out", default=None)
    return parser


def _read_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv):
    """Install values from ``--config`` as subcommand defaults, so explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if not known.config or command is None:
        return
    subparser = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in _read_config(known.config).items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"config key {key!r} is not a flag of {command!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean, got {raw!r}")
            defaults[key] = raw.lower() in ("true", "1", "yes")
        else:
            if action.choices is not None and raw not in action.choices:
                raise UsageError(f"config key {key!r}: {raw!r} not in {list(action.choices)}")
            defaults[key] = raw
        action.required = False
    subparser.set_defaults(**defaults)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _emit(text: str, out) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _load_labeled(path):
    dataset = data_mod.parse_transactions(path)
    report = data_mod.validate(dataset)
    if report.violations:
        raise GraphFraudError(f"{path}: {report.violations[0].message} ({len(report)} violations)")
    return dataset


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- subcommands -----------------------------------------------------------

def cmd_synth(args, seed):
    from graphfraud.synth import GenConfig, generate, plant_summary

    config = GenConfig(
        n_consumers=args.n_consumers,
        n_merchants=args.n_merchants,
        n_txns=args.n_txns,
        fraud_rate=args.fraud_rate,
        seed=seed,
        amount_median_cents=args.amount_median_cents,
        amount_sigma=args.amount_sigma,
        amount_cap_cents=args.amount_cap_cents,
        state_skew=args.state_skew,
        signal_strength=args.signal_strength,
    )
    config.validate()
    dataset = generate(config)
    data_mod.write_transactions(dataset, args.out)
    atomic_write_text(plant_spec_path(args.out), plant_summary(config).to_text())
    log.info("wrote %d transactions to %s", len(dataset), args.out)


def plant_spec_path(out) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + ".plant.txt"))


def cmd_ingest(args, seed):
    from graphfraud.graph import build_graph

    dataset = data_mod.parse_transactions(args.data, strict=not args.lenient)
    for err in dataset.rejected:
        print(f"rejected line {err.line}: {err.field}: {err.reason}", file=sys.stderr)
    report = data_mod.validate(dataset)
    for v in report.violations:
        print(f"violation {v.kind}: {v.message}", file=sys.stderr)
    text = data_mod.summarize(dataset).to_text() + f"rejected_rows={len(dataset.rejected)}\n"
    _emit(text, args.out)
    if args.graph_dump:
        build_graph(dataset).dump_edgelist(args.graph_dump)
    return 1 if report.violations else 0


def _provider(args, pipeline, expected_dim=None):
    from graphfraud.features import StubSemanticProvider, import_embeddings

    if args.embeddings:
        return import_embeddings(args.embeddings, expected_dim or pipeline.sem_dim)
    dim = getattr(args, "sem_dim", None) or pipeline.sem_dim
    return StubSemanticProvider(dim, pipeline.sem_seed)


def cmd_train(args, seed):
    from graphfraud.checkpoint import Checkpoint, save_checkpoint
    from graphfraud.trainer import PipelineConfig, SplitSpec, TrainConfig, fit_and_prepare, stratified_split, train

    split = SplitSpec(*args.split, stratified=not args.no_stratify, seed=seed)
    pipeline = PipelineConfig(
        d_cat=args.cat_dim, sem_dim=args.sem_dim, sem_seed=seed, encoder_seed=seed,
        fusion=args.fusion, alpha=args.alpha, norm=args.norm,
    )
    tconfig = TrainConfig(
        epochs=args.epochs, lr=args.lr, optimizer=args.optimizer, h1=args.hidden1, h2=args.hidden2,
        head_hidden=args.head_hidden, class_weights=args.class_weights, batch_size=args.batch_size,
        seed=seed, log_every=args.log_every,
    )
    tconfig.resolve_weights(np.array([0, 1]))  # reject malformed weights before any I/O
    dataset = _load_labeled(args.data)
    train_idx, val_idx, _ = stratified_split(dataset, split)
    provider = _provider(args, pipeline)
    encoder, prepared = fit_and_prepare(dataset, train_idx, pipeline, provider)
    result = train(prepared, train_idx, val_idx, tconfig)
    ckpt = Checkpoint(
        params=result.params, encoder=encoder, pipeline=pipeline, split=split, train=tconfig,
        semantic={"kind": provider.kind, "dim": provider.dim},
        data_sha256=_file_sha256(args.data), threshold=args.threshold,
    )
    save_checkpoint(args.out, ckpt)
    if args.history:
        rows = ["epoch,train_loss,val_loss,val_macro_f1,val_fraud_recall"]
        for r in result.history:
            rows.append(",".join("" if v is None else repr(v) for v in
                                 (r.epoch, r.train_loss, r.val_loss, r.val_macro_f1, r.val_fraud_recall)))
        atomic_write_text(args.history, "\n".join(rows) + "\n")
    log.info("best epoch %d; checkpoint %s", result.best_epoch, args.out)


def _prepare_for(ckpt, dataset, args):
    from graphfraud.trainer import prepare

    provider = _provider(args, ckpt.pipeline, ckpt.semantic["dim"])
    ckpt.check_provider(provider)
    prepared = prepare(dataset, ckpt.encoder, provider, ckpt.pipeline.fusion_config, ckpt.pipeline.norm)
    ckpt.check_feature_dims(prepared.features.d_node, prepared.features.d_edge)
    return prepared


def cmd_eval(args, seed):
    from graphfraud.checkpoint import load_checkpoint
    from graphfraud.metrics import emit_report
    from graphfraud.trainer import evaluate, stratified_split

    ckpt = load_checkpoint(args.model)
    dataset = _load_labeled(args.data)
    prepared = _prepare_for(ckpt, dataset, args)
    if args.part == "all":
        idx = np.arange(len(dataset))
    else:
        if ckpt.data_sha256 and ckpt.data_sha256 != _file_sha256(args.data):
            print(f"warning: {args.data} differs from the training file; "
                  f"the {args.part} split is not the held-out one", file=sys.stderr)
        parts = dict(zip(("train", "val", "test"), stratified_split(dataset, ckpt.split)))
        idx = parts[args.part]
    threshold = args.threshold if args.threshold is not None else ckpt.threshold
    report = evaluate(prepared, ckpt.params, idx, threshold, ckpt.config_fingerprint)
    _emit(emit_report(report, args.format), args.out)


def cmd_score(args, seed):
    from graphfraud.checkpoint import load_checkpoint
    from graphfraud.trainer import fraud_margin, fraud_probability, predict_labels

    ckpt = load_checkpoint(args.model)
    dataset = data_mod.parse_transactions(args.data)
    dupes = [v for v in data_mod.validate(dataset, labeled=False).violations]
    if dupes:
        raise GraphFraudError(f"{args.data}: {dupes[0].message}")
    prepared = _prepare_for(ckpt, dataset, args)
    margin = fraud_margin(prepared, ckpt.params)
    threshold = args.threshold if args.threshold is not None else ckpt.threshold
    prob = fraud_probability(margin)
    pred = predict_labels(margin, threshold)
    rows = ["txn_id,fraud_probability,predicted_label"]
    rows += [f"{t.txn_id},{p!r},{y}" for t, p, y in zip(dataset.records, prob.tolist(), pred.tolist())]
    _emit("\n".join(rows) + "\n", args.out)


def cmd_report(args, seed):
    from graphfraud import metrics

    dataset = data_mod.parse_transactions(args.data)
    if args.kind == "summary":
        text = data_mod.summarize(dataset).to_text()
    elif args.kind == "histogram":
        hist = metrics.amount_histogram(dataset, args.bucket_cents, fraud_only=not args.all)
        text = metrics.histogram_to_text(hist, args.bucket_cents)
    else:
        text = metrics.state_counts_to_text(metrics.state_counts(dataset, fraud_only=not args.all))
    _emit(text, args.out)


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "score": cmd_score,
    "report": cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        seed = _resolve_seed(args)
    except SystemExit as exc:  # argparse: --help exits 0, bad usage exits 2
        return int(exc.code or 0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"graphfraud: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "log_every", 0):
        logging.getLogger("graphfraud").setLevel(logging.INFO)
    try:
        code = COMMANDS[args.command](args, seed)
    except (GraphFraudError, OSError, ValueError) as exc:
        print(f"graphfraud {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return code or 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
