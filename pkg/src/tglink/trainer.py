"""End-to-end training: batch assembly, leakage-safe encoding, loss, optimization.

Every training triple contributes a tail-prediction and a head-prediction
instance per step.  Target-side embeddings are computed once per batch
entity and reused for positives and in-batch negatives; each entity's
subgraph excludes every batch triple it participates in, which covers the
scored triple in all cases.  The query side excludes its own triple.
"""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tape, backward
from .checkpoint import save_checkpoint
from .evaluator import evaluate
from .kg import KnowledgeGraph, SplitGraphs, Triple, load_dataset
from .model import (LinkPredictor, MODEL_PRESETS, ModelConfig, config_from_dict,
                    variant_label)
from .optim import OptimizerState, cosine_lr, radam_step
from .scoring import (NegStrategy, margin_loss, sample_negatives, transe_score,
                      transe_scores_against)
from . import autodiff as ad
from .text_encoder import build_vocab


class LRScaleWarning(UserWarning):
    """Batch size is not a power of two >= 32; proportional scaling still applies."""


def scale_lr(base_lr_at_32: float, batch: int) -> float:
    """Scale the batch-32 learning rate proportionally with the batch size."""
    if batch < 32 or batch & (batch - 1):
        warnings.warn(
            f"batch size {batch} is not a power of two >= 32; "
            "applying proportional scaling anyway", LRScaleWarning, stacklevel=2)
    return base_lr_at_32 * (batch / 32.0)


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    base_lr: float = 1e-3            # at batch 32, scaled with batch size
    neighbour_cap: int = 10
    seed: int = 0
    regime: str = "transfer"
    neg_variant: str = "two-sided-reflexive"
    negatives_per_positive: int | None = None   # None: tie to batch size
    margin: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_candidates_cap: int | None = 200
    debug_leakage: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")

    def strategy(self) -> NegStrategy:
        count = self.negatives_per_positive or self.batch_size
        return NegStrategy(variant=self.neg_variant, negatives_per_positive=count)


def config_from_file(path: str) -> TrainConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return train_config_from_dict(raw)


def train_config_from_dict(raw: dict) -> TrainConfig:
    raw = dict(raw)
    model_raw = dict(MODEL_PRESETS.get(raw.pop("preset", ""), {}))
    model_raw.update(raw.pop("model", {}))
    known = {f.name for f in TrainConfig.__dataclass_fields__.values()} - {"model"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    cfg = TrainConfig(**raw, model=config_from_dict(model_raw))
    return cfg


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


class TrainerState:
    """Everything one training run owns: model, optimizer, data and rngs."""

    def __init__(self, config: TrainConfig, graph: KnowledgeGraph,
                 splits: SplitGraphs):
        self.config = config
        self.graph = graph
        self.splits = splits
        self.train_view = graph.view(splits.train)
        self.vocab = build_vocab(graph, splits.train_entities)
        self.rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
        self.model = LinkPredictor(
            config.model, self.vocab, graph,
            np.random.default_rng(np.random.SeedSequence([config.seed, 1])))
        self.optimizer = OptimizerState(self.model.named_parameters(),
                                        beta1=config.beta1, beta2=config.beta2,
                                        eps=config.adam_eps)
        self.lr = scale_lr(config.base_lr, config.batch_size)
        batches = len(splits.train) // config.batch_size
        if batches < 1:
            raise ValueError("training split smaller than one batch")
        self.batches_per_epoch = batches
        self.total_steps = config.epochs * batches
        self.step = 0
        self.margin = config.margin

    def current_lr(self) -> float:
        return cosine_lr(self.step, self.total_steps, self.lr)


def _assert_no_leak(sample_neighbours, excluded: set[Triple], centre: int) -> None:
    for edge in sample_neighbours:
        if edge.incoming:
            tr = Triple(edge.neighbour, edge.rel, centre)
        else:
            tr = Triple(centre, edge.rel, edge.neighbour)
        assert tr not in excluded, f"leaked excluded triple {tr}"


def train_step(state: TrainerState, batch: list[Triple]) -> float:
    """One optimization step over a batch; returns the mean hinge loss per instance."""
    cfg = state.config
    model = state.model
    cap = cfg.neighbour_cap
    view = state.train_view
    strategy = cfg.strategy()
    model.zero_grads()

    with Tape() as tape:
        cache: dict = {}
        entities = sorted({t.head for t in batch} | {t.tail for t in batch})
        incident = {e: frozenset(t for t in batch if e in (t.head, t.tail))
                    for e in entities}
        target_emb = {}
        for e in entities:
            target_emb[e] = model.encode_candidate(
                view, e, cap, state.rng, exclude=incident[e], cache=cache)
        pos_scores = []
        neg_scores = []
        for side in ("tail", "head"):
            negatives = sample_negatives(batch, strategy, state.rng, side)
            for triple, negs in zip(batch, negatives):
                known = triple.head if side == "tail" else triple.tail
                target = triple.tail if side == "tail" else triple.head
                q = model.encode_query(view, known, triple.rel, side, cap,
                                       state.rng, exclude=triple, cache=cache)
                r = model.embed_relation(triple.rel, False, cache=cache)
                if side == "tail":
                    pos = transe_score(q, r, target_emb[target])
                    shift = q + r
                else:
                    pos = transe_score(target_emb[target], r, q)
                    shift = q - r
                neg_mat = ad.stack([target_emb[e] for e in negs])
                if cfg.margin != 1.0:
                    pos = pos + (1.0 - cfg.margin)  # shifts the unit hinge
                pos_scores.append(pos)
                neg_scores.append(transe_scores_against(shift, neg_mat))
        loss = margin_loss(pos_scores, neg_scores)
        if cfg.debug_leakage:
            from .kg import sample_neighbourhood
            for e in entities:
                s = sample_neighbourhood(view, e, len(view.triples) + 1,
                                         exclude=incident[e])
                _assert_no_leak(s.neighbours, set(incident[e]), e)
    backward(loss, tape)
    value = loss.item()
    if not math.isfinite(value):
        raise FloatingPointError(f"non-finite loss at step {state.step}: {value}")
    radam_step(state.optimizer, model.named_parameters(), state.current_lr())
    state.step += 1
    model.zero_grads()
    return value / len(pos_scores)


def run_training(config: TrainConfig, dataset_dir: str, out_dir: str) -> dict:
    """Full training run: per-epoch validation, best/final checkpoints, logs.

    metrics.jsonl is byte-deterministic for a given config and seed; wall
    times go to timing.jsonl, which is exempt from that guarantee.
    """
    graph, splits = load_dataset(dataset_dir, config.regime)
    state = TrainerState(config, graph, splits)
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    timing_path = os.path.join(out_dir, "timing.jsonl")
    best_dir = os.path.join(out_dir, "checkpoint_best")
    final_dir = os.path.join(out_dir, "checkpoint_final")
    best_mrr = -1.0
    train_triples = list(splits.train)
    n_batches = state.batches_per_epoch
    bs = config.batch_size

    with open(metrics_path, "w", encoding="utf-8") as mlog, \
         open(timing_path, "w", encoding="utf-8") as tlog:
        for epoch in range(1, config.epochs + 1):
            t_epoch = time.perf_counter()
            order = state.rng.permutation(len(train_triples))
            epoch_loss = 0.0
            t_train = time.perf_counter()
            for b in range(n_batches):
                batch = [train_triples[i] for i in order[b * bs:(b + 1) * bs]]
                epoch_loss += train_step(state, batch)
            train_seconds = time.perf_counter() - t_train
            mlog.write(json.dumps({
                "epoch": epoch, "split": "train", "mrr": None, "h1": None,
                "h3": None, "h10": None, "loss": epoch_loss / n_batches,
            }, sort_keys=True) + "\n")

            t_eval = time.perf_counter()
            report = evaluate(state.model, graph, splits, "valid",
                              neighbour_cap=config.neighbour_cap,
                              seed=config.seed,
                              candidates_cap=config.eval_candidates_cap)
            eval_seconds = time.perf_counter() - t_eval
            vals = report.metrics["mean"]
            mlog.write(json.dumps({
                "epoch": epoch, "split": "valid", "mrr": vals["mrr"],
                "h1": vals["h1"], "h3": vals["h3"], "h10": vals["h10"],
                "loss": None,
            }, sort_keys=True) + "\n")
            tlog.write(json.dumps({
                "epoch": epoch, "wall_seconds": time.perf_counter() - t_epoch,
                "train_seconds": train_seconds, "eval_seconds": eval_seconds,
            }, sort_keys=True) + "\n")

            if vals["mrr"] > best_mrr:
                best_mrr = vals["mrr"]
                save_checkpoint(best_dir, state.model, state.optimizer,
                                train_config_to_dict(config), epoch,
                                state.rng.bit_generator.state)
    save_checkpoint(final_dir, state.model, state.optimizer,
                    train_config_to_dict(config), config.epochs,
                    state.rng.bit_generator.state)
    return {
        "variant": variant_label(config.model),
        "best_valid_mrr": best_mrr,
        "epochs": config.epochs,
        "steps": state.step,
        "metrics_log": metrics_path,
        "timing_log": timing_path,
        "checkpoint_best": best_dir,
        "checkpoint_final": final_dir,
    }
