"""Synthetic transfer-regime datasets for desk-scale experiments.

Two tasks with opposite information structure:

* text task: entity descriptions alone determine the links.  Entities
  belong to groups, named by tokens shared across splits; within each
  split a group's members form a directed chain under ``same_group``.
  Evaluation entities are unseen but their group and position tokens are
  not, so a text-only model can solve the task.

* structure task: entity descriptions are uninformative random tokens,
  but every regular entity attaches to a typed hub, and ``hub_sibling``
  links hold between entities attached to same-kind hubs.  Each entity
  also carries a decoy edge to the partner kind of its hub, so the two
  hub neighbours are only distinguishable through the edge labels.

Both tasks emit train/valid/test splits with disjoint evaluation
entities (transfer regime).
"""

from __future__ import annotations

import numpy as np

from .kg import (KnowledgeGraph, SplitGraphs, Triple, build_adjacency,
                 save_dataset)

TASKS = ("text", "structure")

_POSITION_WORDS = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta",
                   "eta", "theta", "iota", "kappa", "lambda", "mu"]
_KIND_WORDS = ["amber", "basalt", "cedar", "dune", "ember", "fjord",
               "garnet", "heath", "indigo", "jasper", "krill", "lichen",
               "marble", "nectar", "onyx", "pumice", "quartz", "reef",
               "sable", "tundra"]


def _position_word(i: int) -> str:
    return _POSITION_WORDS[i] if i < len(_POSITION_WORDS) else f"pos{i}"


def _kind_word(i: int) -> str:
    return _KIND_WORDS[i] if i < len(_KIND_WORDS) else f"kind{i}"


class _Builder:
    def __init__(self):
        self.entity_names: list[str] = []
        self.entity_text: list[str] = []
        self.relation_names: list[str] = []
        self.relation_text: list[str] = []
        self.triples: dict[str, list[Triple]] = {"train": [], "valid": [], "test": []}

    def entity(self, name: str, text: str) -> int:
        self.entity_names.append(name)
        self.entity_text.append(text)
        return len(self.entity_names) - 1

    def relation(self, name: str, text: str) -> int:
        self.relation_names.append(name)
        self.relation_text.append(text)
        return len(self.relation_names) - 1

    def finish(self) -> tuple[KnowledgeGraph, SplitGraphs]:
        all_triples = self.triples["train"] + self.triples["valid"] + self.triples["test"]
        graph = KnowledgeGraph(
            entity_names=self.entity_names,
            entity_ids={n: i for i, n in enumerate(self.entity_names)},
            entity_text=self.entity_text,
            relation_names=self.relation_names,
            relation_ids={n: i for i, n in enumerate(self.relation_names)},
            relation_text=self.relation_text,
            triples=all_triples,
            adjacency=build_adjacency(len(self.entity_names), all_triples),
        )

        def ents(split):
            out = set()
            for h, _, t in self.triples[split]:
                out.add(h)
                out.add(t)
            return out

        splits = SplitGraphs(
            train=self.triples["train"],
            valid=self.triples["valid"],
            test=self.triples["test"],
            train_entities=ents("train"),
            valid_entities=ents("valid"),
            test_entities=ents("test"),
            regime="transfer",
        )
        return graph, splits


def build_text_task(n: int, seed: int) -> tuple[KnowledgeGraph, SplitGraphs]:
    """Groups of entities chained by ``same_group``; 3+ train, 2 valid, 2 test each."""
    if n < 8:
        raise ValueError(f"text task needs n >= 8 entities, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    groups = n // 7
    extras = n - groups * 7

    b = _Builder()
    rel = b.relation("same_group", "same group")
    order = rng.permutation(n)
    counter = iter(order.tolist())

    for gi in range(groups):
        grp = f"grp{gi}"
        train_size = 3 + (1 if gi < extras else 0)
        for split, size in (("train", train_size), ("valid", 2), ("test", 2)):
            members = []
            for pos in range(size):
                idx = next(counter)
                members.append(b.entity(
                    f"e{idx}", f"member {_position_word(pos)} of {grp}"))
            for a, c in zip(members, members[1:]):
                self_triples = b.triples[split]
                self_triples.append(Triple(a, rel, c))
    return b.finish()


def build_structure_task(n: int, seed: int, kinds: int | None = None,
                         train_decoy_fraction: float = 0.5) -> tuple[KnowledgeGraph, SplitGraphs]:
    """Typed hubs with attach/decoy/sibling edges; texts carry no label signal.

    Hub kinds come in pairs (2k, 2k+1); the decoy of an even-kind entity
    points at the odd partner hub and vice versa, so an entity's two hub
    neighbours form the same unordered kind pair in both cases.  Evaluation
    entities always carry their decoy; a fraction of training entities skip
    theirs, which gives the model unambiguous examples to anchor the kinds
    while edge labels stay necessary at evaluation time.
    """
    if kinds is None:
        kinds = min((n // 24) // 2 * 2, 2 * (len(_KIND_WORDS) // 2))
        kinds = max(kinds, 2)
    # Per eval split: kinds hubs + 2*kinds regulars; train needs >= 2 regulars/kind.
    if n < 7 * kinds or n - 6 * kinds - kinds < 2 * kinds:
        raise ValueError(f"structure task needs n >= {9 * kinds} entities, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    # A small shared pool: descriptions collide across entities and kinds,
    # so they cannot identify anything; only the neighbourhood can.
    pool = [f"tok{i}" for i in range(10)]

    b = _Builder()
    rel_attach = b.relation("attached_to", "attached to")
    rel_up = b.relation("decoy_up", "upward decoy pointer")
    rel_down = b.relation("decoy_down", "downward decoy pointer")
    rel_sib = b.relation("hub_sibling", "hub sibling")

    train_regulars = n - 7 * kinds  # n - hubs(3*kinds) - eval regulars(4*kinds)
    reg_counts = {"train": train_regulars, "valid": 2 * kinds, "test": 2 * kinds}

    for split in ("train", "valid", "test"):
        hubs = [b.entity(f"{split}_hub{c}", f"hub of kind {_kind_word(c)}")
                for c in range(kinds)]
        count = reg_counts[split]
        members: list[list[int]] = [[] for _ in range(kinds)]
        for i in range(count):
            kind = i % kinds
            words = " ".join(rng.choice(pool, size=2, replace=False))
            members[kind].append(b.entity(f"{split}_e{i}", words))
        triples = b.triples[split]
        for kind in range(kinds):
            partner = kind + 1 if kind % 2 == 0 else kind - 1
            decoy_rel = rel_up if kind % 2 == 0 else rel_down
            for e in members[kind]:
                triples.append(Triple(e, rel_attach, hubs[kind]))
                has_decoy = (split != "train"
                             or rng.random() < train_decoy_fraction)
                if has_decoy:
                    triples.append(Triple(e, decoy_rel, hubs[partner]))
            # Disjoint sibling pairs: chains would smear each kind's cluster
            # along the sibling translation.
            chain = members[kind]
            for j in range(0, len(chain) - 1, 2):
                triples.append(Triple(chain[j], rel_sib, chain[j + 1]))
    return b.finish()


def generate_synthetic(task: str, n: int, seed: int, out_dir: str) -> str:
    """Write a synthetic dataset directory and return its path."""
    task = {"text-determined": "text", "structure-determined": "structure"}.get(task, task)
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    if n < 8:
        raise ValueError(f"n must be >= 8, got {n}")
    builder = build_text_task if task == "text" else build_structure_task
    graph, splits = builder(n, seed)
    save_dataset(out_dir, graph, splits)
    return out_dir
