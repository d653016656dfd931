"""Acceptance criteria, one test per criterion, each printing a PASS line.

The training-based criteria share session-scoped runs.  Run with
``pytest tests/test_acceptance.py -v -s`` to see the per-criterion lines.
"""

import json
import math
import time

import numpy as np
import pytest

from tglink import autodiff as ad
from tglink.autodiff import Tensor
from tglink.checkpoint import load_checkpoint
from tglink.cli import main as cli_main
from tglink.evaluator import build_filter_sets, evaluate, filter_set_for, visible_triples
from tglink.gradcheck import run_suite
from tglink.graph_encoder import GTParams, attention_scores
from tglink.kg import (Triple, build_adjacency, candidate_entities,
                       load_dataset, sample_neighbourhood)
from tglink.model import LinkPredictor, ModelConfig
from tglink.optim import cosine_lr
from tglink.scoring import NegStrategy, negative_pool, sample_negatives
from tglink.synth import generate_synthetic
from tglink.text_encoder import build_vocab
from tglink.trainer import TrainConfig, run_training, scale_lr, train_step, TrainerState

from test_evaluator import brute_force_report, random_kg


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"[acceptance] {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{criterion}: {detail}"


# -- shared training machinery ------------------------------------------------

STRUCTURE_N = 256
STRUCTURE_SEED = 7
TEXT_N = 256
TEXT_SEED = 7

STRUCTURE_TRAIN = dict(
    epochs=32, batch_size=32, base_lr=1e-3, neighbour_cap=6,
    regime="transfer", eval_candidates_cap=24,
)
STRUCTURE_MODEL = dict(dim=48, tt_layers=1, tt_heads=2, tt_ffn=96,
                       gt_layers=1, gt_heads=2, gt_ffn=96, text_len=8)

VARIANT_FLAGS = {
    "full": {},
    "no_rij": {"use_rij": False},
    "no_segments": {"use_rij": False, "use_segments": False},
    "no_subgraphs": {"use_subgraphs": False},
}


@pytest.fixture(scope="session")
def datasets(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_data")
    return {
        "structure": generate_synthetic("structure", STRUCTURE_N, STRUCTURE_SEED,
                                        str(root / "structure")),
        "text": generate_synthetic("text", TEXT_N, TEXT_SEED, str(root / "text")),
    }


class RunCache:
    """Trains each (dataset, variant, seed, model overrides) combination once."""

    def __init__(self, datasets, tmp_root):
        self.datasets = datasets
        self.root = tmp_root
        self.results = {}
        self.graphs = {}

    def graph_splits(self, task):
        if task not in self.graphs:
            self.graphs[task] = load_dataset(self.datasets[task], "transfer")
        return self.graphs[task]

    def run(self, task, variant, seed, train_overrides=None, model_overrides=None,
            tag=""):
        key = (task, variant, seed, tag)
        if key in self.results:
            return self.results[key]
        train_kwargs = dict(STRUCTURE_TRAIN)
        if train_overrides:
            train_kwargs.update(train_overrides)
        model_kwargs = dict(STRUCTURE_MODEL, **VARIANT_FLAGS[variant])
        if model_overrides:
            model_kwargs.update(model_overrides)
        config = TrainConfig(seed=seed, model=ModelConfig(**model_kwargs),
                             **train_kwargs)
        out = str(self.root / f"{task}_{variant}_{seed}_{tag or 'base'}")
        started = time.perf_counter()
        summary = run_training(config, self.datasets[task], out)
        wall = time.perf_counter() - started
        graph, splits = self.graph_splits(task)
        model, _, _ = load_checkpoint(summary["checkpoint_best"], graph)
        rep = evaluate(model, graph, splits, "test",
                       neighbour_cap=train_kwargs["neighbour_cap"], seed=0)
        timing = [json.loads(line) for line in open(summary["timing_log"])]
        self.results[key] = {
            "test_mrr": rep.mrr,
            "wall_seconds": wall,
            "train_seconds_per_epoch":
                float(np.mean([t["train_seconds"] for t in timing])),
            "summary": summary,
        }
        return self.results[key]


@pytest.fixture(scope="session")
def runs(datasets, tmp_path_factory):
    return RunCache(datasets, tmp_path_factory.mktemp("acceptance_runs"))


# -- criteria ------------------------------------------------------------------


def test_c1_gradient_suite():
    started = time.perf_counter()
    results = run_suite(seed=0)
    elapsed = time.perf_counter() - started
    assert cli_main(["gradcheck", "--seed", "0"]) == 0
    cli_elapsed = time.perf_counter() - started
    worst = max(results, key=lambda r: r.max_rel_err)
    report("C1 gradient suite",
           all(r.passed for r in results) and cli_elapsed < 60.0,
           f"{len(results)} checks, worst {worst.name}={worst.max_rel_err:.2e}, "
           f"{elapsed:.1f}s suite / {cli_elapsed:.1f}s total")


def test_c2_ranking_oracle():
    started = time.perf_counter()
    graph, splits = random_kg(num_entities=50, num_relations=5,
                              num_triples=120, seed=42)
    vocab = build_vocab(graph, splits.train_entities)
    model = LinkPredictor(
        ModelConfig(dim=16, tt_layers=1, tt_heads=2, tt_ffn=32,
                    gt_layers=1, gt_heads=2, gt_ffn=32, text_len=6),
        vocab, graph, np.random.default_rng(3))
    rep = evaluate(model, graph, splits, "test", neighbour_cap=4, seed=11)
    expected = brute_force_report(model, graph, splits, "test", cap=4, seed=11)
    ranks_equal = all(
        q.rank == opt and q.rank_pessimistic == pes
        for q, (_, _, opt, pes) in zip(rep.per_query, expected))
    by_side = {"head": [], "tail": []}
    for _, side, opt, _ in expected:
        by_side[side].append(1.0 / opt)
    oracle_mrr = (float(np.mean(by_side["head"]))
                  + float(np.mean(by_side["tail"]))) / 2.0
    elapsed = time.perf_counter() - started
    report("C2 ranking oracle",
           ranks_equal and abs(rep.mrr - oracle_mrr) <= 1e-12 and elapsed < 10.0,
           f"{len(expected)} queries identical, |MRR diff|="
           f"{abs(rep.mrr - oracle_mrr):.1e}, {elapsed:.1f}s")


def test_c3_identity_reduction():
    rng = np.random.default_rng(0)
    worst = 0.0
    for trial in range(100):
        heads = int(rng.choice([1, 2, 4]))
        dim = int(rng.choice([8, 16]))
        n = int(rng.integers(2, 7))
        params = GTParams.init(np.random.default_rng(trial), dim=dim,
                               heads=heads, ffn=2 * dim)
        params.w_r.data[:] = 0.0
        nodes = rng.standard_normal((n, dim))
        rels = Tensor(rng.standard_normal((n - 1, dim)))
        got = attention_scores(params, Tensor(nodes), rels)
        dh = dim // heads
        q = nodes @ params.w_q.data
        k = nodes @ params.w_k.data
        for h, s in enumerate(got):
            plain = q[:, h * dh:(h + 1) * dh] @ k[:, h * dh:(h + 1) * dh].T \
                / math.sqrt(dh)
            worst = max(worst, float(np.max(np.abs(s.data - plain))))
    report("C3 identity reduction", worst <= 1e-12,
           f"100 instances, max |diff|={worst:.2e}")


def test_c4_leakage_guard():
    rng = np.random.default_rng(5)
    graph, splits = random_kg(num_entities=40, num_relations=4,
                              num_triples=150, seed=5)
    vocab = build_vocab(graph, splits.train_entities)
    model = LinkPredictor(
        ModelConfig(dim=16, tt_layers=1, tt_heads=2, tt_ffn=32,
                    gt_layers=1, gt_heads=2, gt_ffn=32, text_len=6),
        vocab, graph, np.random.default_rng(1))
    checked = 0
    for trial in range(1000):
        triple = graph.triples[int(rng.integers(0, len(graph.triples)))]
        centre = triple.head if trial % 2 == 0 else triple.tail
        sample = sample_neighbourhood(graph, centre, 5, exclude=triple,
                                      rng=np.random.default_rng(trial))
        for e in sample.neighbours:
            got = Triple(e.neighbour, e.rel, centre) if e.incoming \
                else Triple(centre, e.rel, e.neighbour)
            assert got != triple
        reduced = graph.view([t for t in graph.triples if t != triple])
        a = model.encode_candidate(graph, centre, 5,
                                   np.random.default_rng(trial), exclude=triple)
        b = model.encode_candidate(reduced, centre, 5,
                                   np.random.default_rng(trial), exclude=triple)
        assert np.array_equal(a.data, b.data)
        checked += 1
    report("C4 leakage guard", checked == 1000,
           f"{checked} (graph, target) pairs, samples clean, encodings bitwise equal")


def test_c5_text_task_inductive(datasets, runs):
    started = time.perf_counter()
    result = runs.run(
        "text", "no_subgraphs", seed=0,
        train_overrides=dict(epochs=40, batch_size=32, base_lr=3e-3,
                             neighbour_cap=6, eval_candidates_cap=None),
        model_overrides=dict(dim=32, tt_heads=2, tt_ffn=64, gt_heads=2, gt_ffn=64),
        tag="text5")
    elapsed = time.perf_counter() - started
    graph, splits = runs.graph_splits("text")
    unseen = splits.test_entities & splits.train_entities
    report("C5 text-determined task",
           result["test_mrr"] >= 0.90 and result["wall_seconds"] < 600
           and not unseen,
           f"text-only MRR={result['test_mrr']:.3f} in "
           f"{result['wall_seconds']:.0f}s, eval entities unseen, "
           f"{elapsed:.0f}s total")


def test_c6_structure_vs_text(runs):
    full = runs.run("structure", "full", seed=0)
    text_only = runs.run("structure", "no_subgraphs", seed=0)
    gap = full["test_mrr"] - text_only["test_mrr"]
    total = full["wall_seconds"] + text_only["wall_seconds"]
    report("C6 structure-determined task",
           text_only["test_mrr"] <= 0.30 and full["test_mrr"] >= 0.70
           and gap >= 0.2 and total < 1200,
           f"text-only={text_only['test_mrr']:.3f}, text-graph="
           f"{full['test_mrr']:.3f}, gap={gap:.3f}, {total:.0f}s")


def test_c7_ablation_ordering(runs):
    seeds = (0, 1, 2)
    means = {}
    for variant in ("full", "no_rij", "no_segments", "no_subgraphs"):
        means[variant] = float(np.mean(
            [runs.run("structure", variant, seed)["test_mrr"] for seed in seeds]))
    chain = [means["full"], means["no_rij"], means["no_segments"],
             means["no_subgraphs"]]
    gaps = [a - b for a, b in zip(chain, chain[1:])]
    ordered = all(g >= 0 for g in gaps)
    total_drop = chain[0] - chain[-1]
    report("C7 ablation ordering",
           ordered and total_drop >= 0.2,
           "mean MRR over 3 seeds: full={:.3f} >= -rij={:.3f} >= -seg={:.3f} "
           ">= -subgraphs={:.3f}; gaps {}; total drop {:.3f}".format(
               *chain, [f"{g:+.3f}" for g in gaps], total_drop))


def test_c8_negative_sampling_contract():
    rng = np.random.default_rng(9)
    batch64 = [Triple(int(h), 0, int(t)) for h, t in
               rng.integers(0, 500, size=(64, 2)) if h != t][:60]
    while len(batch64) < 64:
        h, t = rng.integers(0, 500, size=2)
        if h != t:
            batch64.append(Triple(int(h), 0, int(t)))
    tied = sample_negatives(batch64, NegStrategy(variant="batch-tied"),
                            np.random.default_rng(0), "tail")
    tied_ok = len(tied) == 64 and all(len(n) == 64 for n in tied)

    pools_ok = True
    for trial in range(1000):
        trng = np.random.default_rng(trial)
        size = int(trng.integers(2, 9))
        batch = []
        while len(batch) < size:
            h, r, t = trng.integers(0, 12, size=3)
            if h != t:
                batch.append(Triple(int(h), int(r % 3), int(t)))
        side = "tail" if trial % 2 == 0 else "head"
        for triple in batch:
            target = triple.tail if side == "tail" else triple.head
            pool = set(negative_pool(batch, side, target, "two-sided-reflexive"))
            expected = ({b.head for b in batch} | {b.tail for b in batch}) - {target}
            if pool != expected:
                pools_ok = False
    report("C8 negative sampling", tied_ok and pools_ok,
           "batch-tied yields 64 negatives/positive at batch 64; "
           "1000 reflexive pools = heads+tails minus target")


def test_c9_lr_plumbing():
    exact = (scale_lr(1e-5, 32) == 1e-5
             and scale_lr(1e-5, 128) == 4e-5
             and cosine_lr(0, 1000, 3e-4) == 3e-4
             and cosine_lr(1000, 1000, 3e-4) == 0.0)
    report("C9 lr plumbing", exact,
           "scale_lr(1e-5,32)=1e-5, scale_lr(1e-5,128)=4e-5, cosine endpoints exact")


def test_c10_determinism(datasets, tmp_path_factory):
    root = tmp_path_factory.mktemp("det")
    cfg = dict(epochs=3, batch_size=8, base_lr=1e-3, neighbour_cap=4,
               seed=123, regime="transfer", eval_candidates_cap=16)
    model = dict(dim=16, tt_layers=1, tt_heads=2, tt_ffn=32,
                 gt_layers=1, gt_heads=2, gt_ffn=32, text_len=8)
    logs = []
    for name in ("one", "two"):
        summary = run_training(TrainConfig(**cfg, model=ModelConfig(**model)),
                               datasets["text"], str(root / name))
        logs.append(open(summary["metrics_log"], "rb").read())
    report("C10 determinism", logs[0] == logs[1],
           f"metrics logs byte-identical ({len(logs[0])} bytes)")


def test_c11_efficiency_trend(runs):
    base = runs.run("structure", "full", seed=0,
                    model_overrides=dict(dim=64, tt_layers=2, tt_heads=2,
                                         tt_ffn=128, gt_heads=2, gt_ffn=128),
                    tag="eff_base")
    half = runs.run("structure", "full", seed=0,
                    model_overrides=dict(dim=32, tt_layers=1, tt_heads=2,
                                         tt_ffn=64, gt_heads=2, gt_ffn=64),
                    tag="eff_half")
    speedup = 1.0 - half["train_seconds_per_epoch"] / base["train_seconds_per_epoch"]
    drop = base["test_mrr"] - half["test_mrr"]
    report("C11 efficiency trend", speedup >= 0.25 and drop <= 0.05,
           f"epoch time -{speedup:.0%} (base "
           f"{base['train_seconds_per_epoch']:.1f}s -> half "
           f"{half['train_seconds_per_epoch']:.1f}s), MRR drop {drop:+.3f} "
           f"(base {base['test_mrr']:.3f}, half {half['test_mrr']:.3f})")
