"""Knowledge-graph data model, dataset ingestion and neighbourhood sampling.

Dataset directory layout (tab-separated, UTF-8, LF):
    train.tsv / valid.tsv / test.tsv   lines  head_id<TAB>relation_id<TAB>tail_id
    entity2text.tsv                    lines  id<TAB>description
    relation2text.tsv                  lines  id<TAB>description

The description files define the vocabularies; a triple referencing an id
with no description entry is a load error.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

SPLIT_FILES = {"train": "train.tsv", "valid": "valid.tsv", "test": "test.tsv"}
REGIMES = ("dynamic", "transfer")


class LoadError(ValueError):
    """Dataset file missing or malformed."""


class RegimeWarning(UserWarning):
    """Split entity sets violate the declared evaluation regime."""


class DuplicateTripleWarning(UserWarning):
    """Input files repeat a triple; duplicates are dropped."""


class Triple(NamedTuple):
    head: int
    rel: int
    tail: int


class Edge(NamedTuple):
    """One adjacency entry: relation, neighbour, and whether the edge points in."""

    rel: int
    neighbour: int
    incoming: bool


@dataclass
class KnowledgeGraph:
    """Entities/relations with text, a deduplicated triple set and its adjacency.

    Adjacency lists every triple exactly twice: outgoing at its head and
    incoming at its tail.  Lists are kept in canonical sorted order so that
    sampling is reproducible and independent of input file order.
    """

    entity_names: list[str]
    entity_ids: dict[str, int]
    entity_text: list[str]
    relation_names: list[str]
    relation_ids: dict[str, int]
    relation_text: list[str]
    triples: list[Triple]
    adjacency: list[list[Edge]] = field(repr=False)

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    def view(self, triples: Iterable[Triple]) -> "KnowledgeGraph":
        """A graph over a triple subset, sharing vocabularies and texts."""
        tr = _dedupe(triples)
        return KnowledgeGraph(
            entity_names=self.entity_names,
            entity_ids=self.entity_ids,
            entity_text=self.entity_text,
            relation_names=self.relation_names,
            relation_ids=self.relation_ids,
            relation_text=self.relation_text,
            triples=tr,
            adjacency=build_adjacency(len(self.entity_names), tr),
        )


@dataclass
class SplitGraphs:
    """Per-split triples and entity sets plus the evaluation regime."""

    train: list[Triple]
    valid: list[Triple]
    test: list[Triple]
    train_entities: set[int]
    valid_entities: set[int]
    test_entities: set[int]
    regime: str

    def triples_for(self, phase: str) -> list[Triple]:
        return {"train": self.train, "valid": self.valid, "test": self.test}[phase]

    def entities_for(self, phase: str) -> set[int]:
        return {
            "train": self.train_entities,
            "valid": self.valid_entities,
            "test": self.test_entities,
        }[phase]

    def all_triples(self) -> list[Triple]:
        return _dedupe(self.train + self.valid + self.test)


@dataclass
class SubgraphSample:
    """A centre entity and its capped, target-leak-filtered 1-hop neighbours."""

    centre: int
    neighbours: list[Edge]


def _dedupe(triples: Iterable[Triple]) -> list[Triple]:
    seen: set[Triple] = set()
    out = []
    for t in triples:
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def build_adjacency(num_entities: int, triples: Iterable[Triple]) -> list[list[Edge]]:
    adj: list[list[Edge]] = [[] for _ in range(num_entities)]
    for h, r, t in triples:
        adj[h].append(Edge(r, t, False))
        adj[t].append(Edge(r, h, True))
    for lst in adj:
        lst.sort()
    return adj


def _read_text_map(path: str) -> tuple[list[str], dict[str, int], list[str]]:
    if not os.path.isfile(path):
        raise LoadError(f"missing file: {path}")
    names: list[str] = []
    ids: dict[str, int] = {}
    texts: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise LoadError(f"{path}:{lineno}: expected id<TAB>description")
            name, text = line.split("\t", 1)
            if name in ids:
                raise LoadError(f"{path}:{lineno}: duplicate id {name!r}")
            ids[name] = len(names)
            names.append(name)
            texts.append(text)
    return names, ids, texts


def _read_triples(path: str, entity_ids: dict[str, int],
                  relation_ids: dict[str, int]) -> list[Triple]:
    if not os.path.isfile(path):
        raise LoadError(f"missing file: {path}")
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise LoadError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
            h, r, t = fields
            for kind, name, vocab in (("entity", h, entity_ids),
                                      ("relation", r, relation_ids),
                                      ("entity", t, entity_ids)):
                if name not in vocab:
                    raise LoadError(f"{path}:{lineno}: {kind} {name!r} has no description entry")
            triples.append(Triple(entity_ids[h], relation_ids[r], entity_ids[t]))
    return triples


def _entities_of(triples: Iterable[Triple]) -> set[int]:
    out: set[int] = set()
    for h, _, t in triples:
        out.add(h)
        out.add(t)
    return out


def validate_regime(splits: SplitGraphs) -> list[str]:
    """Check the regime invariant, reporting (not fixing) violations."""
    problems = []
    if splits.regime == "transfer":
        for phase in ("valid", "test"):
            overlap = splits.entities_for(phase) & splits.train_entities
            if overlap:
                problems.append(
                    f"transfer regime but {len(overlap)} {phase} entities also appear in train")
    for msg in problems:
        warnings.warn(msg, RegimeWarning, stacklevel=3)
    return problems


def load_dataset(dir_path: str, regime: str) -> tuple[KnowledgeGraph, SplitGraphs]:
    """Load a dataset directory; the returned graph holds the union of all splits."""
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    if not os.path.isdir(dir_path):
        raise LoadError(f"missing dataset directory: {dir_path}")
    ent_names, ent_ids, ent_text = _read_text_map(os.path.join(dir_path, "entity2text.tsv"))
    rel_names, rel_ids, rel_text = _read_text_map(os.path.join(dir_path, "relation2text.tsv"))

    raw = {}
    dropped = 0
    for split, fname in SPLIT_FILES.items():
        triples = _read_triples(os.path.join(dir_path, fname), ent_ids, rel_ids)
        deduped = _dedupe(triples)
        dropped += len(triples) - len(deduped)
        raw[split] = deduped
    if dropped:
        warnings.warn(f"dropped {dropped} duplicate triples while loading {dir_path}",
                      DuplicateTripleWarning, stacklevel=2)

    all_triples = _dedupe(raw["train"] + raw["valid"] + raw["test"])
    graph = KnowledgeGraph(
        entity_names=ent_names,
        entity_ids=ent_ids,
        entity_text=ent_text,
        relation_names=rel_names,
        relation_ids=rel_ids,
        relation_text=rel_text,
        triples=all_triples,
        adjacency=build_adjacency(len(ent_names), all_triples),
    )
    splits = SplitGraphs(
        train=raw["train"],
        valid=raw["valid"],
        test=raw["test"],
        train_entities=_entities_of(raw["train"]),
        valid_entities=_entities_of(raw["valid"]),
        test_entities=_entities_of(raw["test"]),
        regime=regime,
    )
    validate_regime(splits)
    return graph, splits


def save_dataset(dir_path: str, graph: KnowledgeGraph, splits: SplitGraphs) -> None:
    """Write a dataset directory in the load_dataset layout."""
    os.makedirs(dir_path, exist_ok=True)
    with open(os.path.join(dir_path, "entity2text.tsv"), "w", encoding="utf-8") as fh:
        for name, text in zip(graph.entity_names, graph.entity_text):
            fh.write(f"{name}\t{text}\n")
    with open(os.path.join(dir_path, "relation2text.tsv"), "w", encoding="utf-8") as fh:
        for name, text in zip(graph.relation_names, graph.relation_text):
            fh.write(f"{name}\t{text}\n")
    for split, fname in SPLIT_FILES.items():
        with open(os.path.join(dir_path, fname), "w", encoding="utf-8") as fh:
            for h, r, t in splits.triples_for(split):
                fh.write(f"{graph.entity_names[h]}\t{graph.relation_names[r]}"
                         f"\t{graph.entity_names[t]}\n")


def _excluded(edge: Edge, centre: int, excl: frozenset[Triple]) -> bool:
    if edge.incoming:
        return Triple(edge.neighbour, edge.rel, centre) in excl
    return Triple(centre, edge.rel, edge.neighbour) in excl


def sample_neighbourhood(graph: KnowledgeGraph, centre: int, cap: int,
                         exclude: Triple | Iterable[Triple] | None = None,
                         rng: np.random.Generator | None = None) -> SubgraphSample:
    """Uniform without-replacement sample of a centre's 1-hop edges.

    ``exclude`` removes the given triple(s) in both directions before
    sampling, so the result is identical whether or not an excluded edge
    exists in the graph at all.  When the filtered degree is within the cap
    the full neighbourhood is returned (no rng draw).
    """
    if not 0 <= centre < graph.num_entities:
        raise KeyError(f"unknown entity id {centre}")
    if cap < 0:
        raise ValueError("cap must be >= 0")
    if exclude is None:
        excl: frozenset[Triple] = frozenset()
    elif isinstance(exclude, Triple):
        excl = frozenset((exclude,))
    else:
        excl = frozenset(exclude)
    edges = graph.adjacency[centre]
    if excl:
        edges = [e for e in edges if not _excluded(e, centre, excl)]
    if len(edges) > cap:
        if rng is None:
            raise ValueError("rng required when degree exceeds the cap")
        idx = rng.choice(len(edges), size=cap, replace=False)
        edges = sorted(edges[i] for i in idx)
    return SubgraphSample(centre=centre, neighbours=list(edges))


def candidate_entities(splits: SplitGraphs, phase: str) -> set[int]:
    """The ranking candidate pool for a phase under the split regime.

    Dynamic evaluation pools training entities with the entities seen so
    far (validation entities join the pool at test time); transfer
    evaluation uses the phase's own entities only.
    """
    if phase not in ("valid", "test"):
        raise ValueError(f"phase must be 'valid' or 'test', got {phase!r}")
    if splits.regime == "dynamic":
        pool = splits.train_entities | splits.valid_entities
        if phase == "test":
            pool |= splits.test_entities
        return pool
    validate_regime(splits)
    return set(splits.entities_for(phase))


@dataclass
class SplitStats:
    num_entities: int
    num_triples: int
    num_relations: int
    neighbours_mean: float
    neighbours_std: float
    triples_per_entity: float


def dataset_stats(graph: KnowledgeGraph, splits: SplitGraphs) -> dict[str, SplitStats]:
    """Per-split sizes and neighbour-count statistics.

    Neighbour counts are adjacency degrees within the split's own triples
    (each triple counted once outgoing and once incoming), matching what
    sample_neighbourhood sees.  triples_per_entity is reported alongside.
    """
    out = {}
    for split in ("train", "valid", "test"):
        triples = splits.triples_for(split)
        entities = sorted(_entities_of(triples))
        if not entities:
            out[split] = SplitStats(0, 0, 0, 0.0, 0.0, 0.0)
            continue
        adj = build_adjacency(graph.num_entities, triples)
        degrees = np.array([len(adj[e]) for e in entities], dtype=np.float64)
        out[split] = SplitStats(
            num_entities=len(entities),
            num_triples=len(triples),
            num_relations=len({t.rel for t in triples}),
            neighbours_mean=float(degrees.mean()),
            neighbours_std=float(degrees.std()),
            triples_per_entity=len(triples) / len(entities),
        )
    return out
