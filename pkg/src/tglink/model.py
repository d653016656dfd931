"""Link-prediction model: text encoder + optional graph encoder + scoring glue.

The model family is controlled by independent switches:

    use_subgraphs        run 1-hop subgraphs through the graph transformer
    use_rij              relation embeddings modulate graph attention
    use_segments         centre/neighbour segment embeddings on node inputs
    use_rel_conditioning queries concatenate relation text to entity text
    inductive_relations  relation embeddings from text (else a learned table)

All-on is the full text-graph model; subgraphs off with conditioning on is
the text-only model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph_encoder import GTParams, encode_subgraph, subgraph_embeddings
from .kg import KnowledgeGraph, SubgraphSample, sample_neighbourhood
from .text_encoder import (TTConfig, TTParams, Vocab, encode_ids, query_text,
                           relation_text, tokenize, xavier)


@dataclass
class ModelConfig:
    dim: int = 64
    tt_layers: int = 2
    tt_heads: int = 4
    tt_ffn: int = 128
    gt_layers: int = 1
    gt_heads: int = 4
    gt_ffn: int = 128
    text_len: int = 24
    use_subgraphs: bool = True
    use_rij: bool = True
    use_segments: bool = True
    use_rel_conditioning: bool = True
    inductive_relations: bool = True

    def tt_config(self) -> TTConfig:
        return TTConfig(dim=self.dim, layers=self.tt_layers, heads=self.tt_heads,
                        ffn=self.tt_ffn, text_len=self.text_len)


MODEL_PRESETS = {
    "small": dict(dim=64, tt_layers=2, tt_heads=4, tt_ffn=128,
                  gt_layers=1, gt_heads=4, gt_ffn=128),
    "tiny": dict(dim=32, tt_layers=1, tt_heads=2, tt_ffn=64,
                 gt_layers=1, gt_heads=2, gt_ffn=64),
}


def variant_label(cfg: ModelConfig) -> str:
    """The ablation-family name a configuration belongs to."""
    if not cfg.use_subgraphs:
        name = "text-only" if cfg.use_rel_conditioning else "text-only-plain"
    elif not cfg.use_segments:
        name = "text-graph-no-segments"
    elif not cfg.use_rij:
        name = "text-graph-no-relation-bias"
    else:
        name = "text-graph"
    if not cfg.inductive_relations:
        name += "-id-relations"
    return name


class LinkPredictor:
    """Bundles parameters with the encoding paths shared by training and
    evaluation.  Embeddings of entities and relations are functions of
    their text; the only id-indexed table is the optional baseline
    relation table."""

    def __init__(self, config: ModelConfig, vocab: Vocab, graph: KnowledgeGraph,
                 rng: np.random.Generator):
        self.config = config
        self.vocab = vocab
        self.graph = graph
        self.tt = TTParams.init(rng, len(vocab), config.tt_config())
        self.gt: list[GTParams] = []
        if config.use_subgraphs:
            self.gt = [GTParams.init(rng, config.dim, config.gt_heads, config.gt_ffn)
                       for _ in range(config.gt_layers)]
        self.rel_table: Tensor | None = None
        if not config.inductive_relations:
            # Forward relations in rows [0, R), inverse forms in [R, 2R).
            self.rel_table = ad.parameter(
                xavier(rng, 2 * graph.num_relations, config.dim))
        self._ent_ids: dict[int, np.ndarray] = {}
        self._rel_ids: dict[tuple[int, bool], np.ndarray] = {}
        self._query_ids: dict[tuple[int, int, str], np.ndarray] = {}

    # -- parameters ---------------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = self.tt.named_tensors()
        for i, layer in enumerate(self.gt):
            out.extend(layer.named_tensors(prefix=f"gt.layer{i}"))
        if self.rel_table is not None:
            out.append(("rel_table", self.rel_table))
        return out

    def zero_grads(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    # -- tokenized text, memoized (vocab is fixed per model) -----------------

    def _entity_ids(self, entity: int) -> np.ndarray:
        ids = self._ent_ids.get(entity)
        if ids is None:
            ids = tokenize(self.graph.entity_text[entity], self.vocab,
                           self.config.text_len)
            self._ent_ids[entity] = ids
        return ids

    def _relation_ids(self, rel: int, inverse: bool) -> np.ndarray:
        key = (rel, inverse)
        ids = self._rel_ids.get(key)
        if ids is None:
            ids = tokenize(relation_text(self.graph.relation_text[rel], inverse),
                           self.vocab, self.config.text_len)
            self._rel_ids[key] = ids
        return ids

    def _query_text_ids(self, entity: int, rel: int, side: str) -> np.ndarray:
        key = (entity, rel, side)
        ids = self._query_ids.get(key)
        if ids is None:
            text = query_text(self.graph.entity_text[entity],
                              self.graph.relation_text[rel], side)
            ids = tokenize(text, self.vocab, self.config.text_len)
            self._query_ids[key] = ids
        return ids

    # -- text-level embeddings, cached per step/phase -------------------------

    def _encode(self, ids: np.ndarray, cache: dict | None) -> Tensor:
        if cache is None:
            return encode_ids(self.tt, ids)
        key = ids.tobytes()
        emb = cache.get(key)
        if emb is None:
            emb = encode_ids(self.tt, ids)
            cache[key] = emb
        return emb

    def embed_entity_text(self, entity: int, cache: dict | None = None) -> Tensor:
        return self._encode(self._entity_ids(entity), cache)

    def embed_relation(self, rel: int, inverse: bool = False,
                       cache: dict | None = None) -> Tensor:
        if self.rel_table is not None:
            idx = rel + self.graph.num_relations if inverse else rel
            return ad.take_row(self.rel_table, idx)
        return self._encode(self._relation_ids(rel, inverse), cache)

    def embed_query_text(self, entity: int, rel: int, side: str,
                         cache: dict | None = None) -> Tensor:
        if not self.config.use_rel_conditioning:
            return self.embed_entity_text(entity, cache)
        return self._encode(self._query_text_ids(entity, rel, side), cache)

    # -- subgraph-aware encodings ---------------------------------------------

    def _through_graph(self, view: KnowledgeGraph, centre_embedding: Tensor,
                       sample: SubgraphSample, cache: dict | None) -> Tensor:
        nb_embs, rel_embs = subgraph_embeddings(
            sample, view,
            entity_embed=lambda e: self.embed_entity_text(e, cache),
            relation_embed=lambda r, inc: self.embed_relation(r, inc, cache),
            use_rij=self.config.use_rij,
        )
        return encode_subgraph(self.gt, centre_embedding, nb_embs, rel_embs,
                               use_segments=self.config.use_segments)

    def encode_candidate(self, view: KnowledgeGraph, entity: int, cap: int,
                         rng: np.random.Generator | None,
                         exclude=None, cache: dict | None = None) -> Tensor:
        """Candidate-side embedding: plain entity text, then the graph layer."""
        emb = self.embed_entity_text(entity, cache)
        if not self.config.use_subgraphs:
            return emb
        sample = sample_neighbourhood(view, entity, cap, exclude=exclude, rng=rng)
        return self._through_graph(view, emb, sample, cache)

    def encode_query(self, view: KnowledgeGraph, entity: int, rel: int, side: str,
                     cap: int, rng: np.random.Generator | None,
                     exclude=None, cache: dict | None = None) -> Tensor:
        """Query-side embedding: relation-conditioned text, then the graph layer."""
        emb = self.embed_query_text(entity, rel, side, cache)
        if not self.config.use_subgraphs:
            return emb
        sample = sample_neighbourhood(view, entity, cap, exclude=exclude, rng=rng)
        return self._through_graph(view, emb, sample, cache)


def config_to_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> ModelConfig:
    known = {f.name for f in ModelConfig.__dataclass_fields__.values()}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown model config keys: {sorted(unknown)}")
    return ModelConfig(**d)
