"""Checkpoint directory format: named-tensor blob plus a JSON manifest.

Layout:
    manifest.json   tensor names/shapes/byte offsets (little-endian f8),
                    config snapshot, epoch, optimizer step, rng state
    params.bin      all tensors concatenated, parameters then moments
    vocab.tsv       token<TAB>id

Round-trip loading reproduces bitwise-identical forward outputs.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .model import LinkPredictor, config_from_dict, config_to_dict
from .optim import OptimizerState
from .text_encoder import Vocab


def _blob_entries(named: list[tuple[str, np.ndarray]]) -> tuple[bytes, list[dict]]:
    offset = 0
    index = []
    chunks = []
    for name, arr in named:
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset,
                      "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    return b"".join(chunks), index


def save_checkpoint(dir_path: str, model: LinkPredictor, opt: OptimizerState,
                    train_config: dict, epoch: int, rng_state: dict) -> None:
    os.makedirs(dir_path, exist_ok=True)
    named = [(name, p.data) for name, p in model.named_parameters()]
    named += [(f"opt.m.{name}", opt.m[name]) for name, _ in model.named_parameters()]
    named += [(f"opt.v.{name}", opt.v[name]) for name, _ in model.named_parameters()]
    blob, index = _blob_entries(named)
    with open(os.path.join(dir_path, "params.bin"), "wb") as fh:
        fh.write(blob)
    manifest = {
        "format": "tglink-checkpoint-v1",
        "endianness": "little",
        "dtype": "f8",
        "tensors": index,
        "model_config": config_to_dict(model.config),
        "train_config": train_config,
        "epoch": epoch,
        "optimizer": {"step": opt.step_count, "beta1": opt.beta1,
                      "beta2": opt.beta2, "eps": opt.eps},
        "rng_state": rng_state,
    }
    with open(os.path.join(dir_path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    model.vocab.save(os.path.join(dir_path, "vocab.tsv"))


def load_checkpoint(dir_path: str, graph) -> tuple[LinkPredictor, OptimizerState, dict]:
    """Rebuild the model (and optimizer state) from a checkpoint directory."""
    with open(os.path.join(dir_path, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    vocab = Vocab.load(os.path.join(dir_path, "vocab.tsv"))
    config = config_from_dict(manifest["model_config"])
    model = LinkPredictor(config, vocab, graph, np.random.default_rng(0))
    with open(os.path.join(dir_path, "params.bin"), "rb") as fh:
        blob = fh.read()
    tensors = {}
    for entry in manifest["tensors"]:
        arr = np.frombuffer(blob, dtype="<f8", count=entry["nbytes"] // 8,
                            offset=entry["offset"]).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(np.float64)
    opt_info = manifest["optimizer"]
    named = model.named_parameters()
    opt = OptimizerState(named, beta1=opt_info["beta1"], beta2=opt_info["beta2"],
                         eps=opt_info["eps"])
    opt.step_count = opt_info["step"]
    for name, p in named:
        if name not in tensors:
            raise ValueError(f"checkpoint is missing tensor {name!r}")
        if tuple(tensors[name].shape) != p.data.shape:
            raise ValueError(f"checkpoint tensor {name!r} has shape "
                             f"{tensors[name].shape}, model expects {p.data.shape}")
        p.data = tensors[name].copy()
        opt.m[name] = tensors[f"opt.m.{name}"].copy()
        opt.v[name] = tensors[f"opt.v.{name}"].copy()
    return model, opt, manifest
