"""Model checkpoints: one ``.npz`` holding parameter tensors, encoder state and
a JSON metadata blob (no pickled objects)."""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from graphfraud._io import atomic_write_bytes
from graphfraud.errors import CheckpointError, DimensionMismatchError
from graphfraud.features import TabularEncoder
from graphfraud.model import ModelParams, params_from_arrays, params_to_arrays
from graphfraud.trainer import PipelineConfig, SplitSpec, TrainConfig

FORMAT_VERSION = 1


def fingerprint(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Checkpoint:
    params: ModelParams
    encoder: TabularEncoder
    pipeline: PipelineConfig
    split: SplitSpec
    train: TrainConfig
    semantic: dict  # {"kind": "stub"|"file", "dim": int}
    data_sha256: str = ""
    threshold: float | None = None

    @property
    def config_fingerprint(self) -> str:
        return fingerprint(self._config_payload())

    def _config_payload(self) -> dict:
        return {
            "pipeline": asdict(self.pipeline),
            "split": asdict(self.split),
            "train": asdict(self.train),
            "semantic": self.semantic,
            "data_sha256": self.data_sha256,
        }

    def check_feature_dims(self, d_node: int, d_edge: int) -> None:
        cfg = self.params.config
        if (cfg.d_node, cfg.d_edge) != (d_node, d_edge):
            raise DimensionMismatchError(
                f"checkpoint expects d_node={cfg.d_node}, d_edge={cfg.d_edge}; "
                f"data gives d_node={d_node}, d_edge={d_edge}"
            )

    def check_provider(self, provider) -> None:
        if provider.dim != self.semantic["dim"]:
            raise DimensionMismatchError(
                f"checkpoint semantic dim is {self.semantic['dim']}, provider dim is {provider.dim}"
            )


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    enc_state = ckpt.encoder.state()
    meta = {
        "format_version": FORMAT_VERSION,
        "model": asdict(ckpt.params.config),
        "encoder": enc_state["meta"],
        "threshold": ckpt.threshold,
        "config_fingerprint": ckpt.config_fingerprint,
        **ckpt._config_payload(),
    }
    arrays = {**params_to_arrays(ckpt.params), **{f"enc_{k}": v for k, v in enc_state["arrays"].items()}}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(path, buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if "meta" not in arrays:
        raise CheckpointError(f"{path}: not a graphfraud checkpoint")
    meta = json.loads(arrays.pop("meta").tobytes().decode())
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
    params = params_from_arrays(arrays)
    if asdict(params.config) != meta["model"]:
        raise DimensionMismatchError(
            f"{path}: stored tensors have dims {asdict(params.config)}, metadata says {meta['model']}"
        )
    enc_arrays = {k[4:]: v for k, v in arrays.items() if k.startswith("enc_")}
    encoder = TabularEncoder.from_state(meta["encoder"], enc_arrays)
    ckpt = Checkpoint(
        params=params,
        encoder=encoder,
        pipeline=PipelineConfig(**meta["pipeline"]),
        split=SplitSpec(**meta["split"]),
        train=TrainConfig(**meta["train"]),
        semantic=meta["semantic"],
        data_sha256=meta["data_sha256"],
        threshold=meta["threshold"],
    )
    if ckpt.config_fingerprint != meta["config_fingerprint"]:
        raise CheckpointError(f"{path}: config fingerprint does not match its metadata")
    return ckpt
