"""Graph transformer over a centre entity and its 1-hop neighbours.

A single pre-LN transformer layer (SwiGLU feed-forward, no output
projection after value mixing) whose attention scores between the centre
and each neighbour are modulated by that edge's relation embedding:

    e_ij = x_i W_q . diag(1 + LN(r_ij) W_r) . (x_j W_k)^T / sqrt(d_head)

Pairs without a relation (self pairs, neighbour-neighbour pairs, and all
pairs when relation modulation is ablated) use the identity modulation,
which is exactly the unmodulated scaled dot product.  The centre is row 0
and its output row is the subgraph representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kg import KnowledgeGraph, SubgraphSample
from .text_encoder import xavier


@dataclass
class GTParams:
    """One graph-transformer layer plus the two segment embeddings."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_r: Tensor
    rel_ln_gain: Tensor
    rel_ln_bias: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    ffn_in: Tensor
    ffn_out: Tensor
    seg_centre: Tensor
    seg_neighbour: Tensor
    heads: int = 1
    dim: int = field(default=0)

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, heads: int, ffn: int) -> "GTParams":
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        return cls(
            w_q=ad.parameter(xavier(rng, dim, dim)),
            w_k=ad.parameter(xavier(rng, dim, dim)),
            w_v=ad.parameter(xavier(rng, dim, dim)),
            # Zero start: attention begins exactly at the unmodulated model
            # (diag(1+0) = I) and the relation term grows from its gradient.
            # A random W_r injects per-pair noise that destabilizes early
            # training before the modulation is organized.
            w_r=ad.parameter(np.zeros((dim, dim))),
            rel_ln_gain=ad.parameter(np.ones(dim)),
            rel_ln_bias=ad.parameter(np.zeros(dim)),
            ln1_gain=ad.parameter(np.ones(dim)),
            ln1_bias=ad.parameter(np.zeros(dim)),
            ln2_gain=ad.parameter(np.ones(dim)),
            ln2_bias=ad.parameter(np.zeros(dim)),
            ffn_in=ad.parameter(xavier(rng, dim, 2 * ffn)),
            ffn_out=ad.parameter(xavier(rng, ffn, dim)),
            seg_centre=ad.parameter(np.zeros(dim)),
            seg_neighbour=ad.parameter(np.zeros(dim)),
            heads=heads,
            dim=dim,
        )

    def named_tensors(self, prefix: str = "gt.layer0") -> list[tuple[str, Tensor]]:
        fields = ("w_q", "w_k", "w_v", "w_r", "rel_ln_gain", "rel_ln_bias",
                  "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
                  "ffn_in", "ffn_out", "seg_centre", "seg_neighbour")
        return [(f"{prefix}.{name}", getattr(self, name)) for name in fields]


@dataclass
class GraphBatchItem:
    """Node inputs (row 0 = centre, segments already added) and the edge
    relation embeddings aligned with nodes 1..n-1; None means identity
    modulation for every pair."""

    nodes: Tensor
    rel_embeds: Tensor | None


def attention_scores(params: GTParams, nodes: Tensor,
                     rel_embeds: Tensor | None) -> list[Tensor]:
    """Per-head pre-softmax score matrices over {centre} u neighbours.

    Relation modulation applies to the (0, j) and (j, 0) pairs, sliced per
    head like the query/key projections; every other pair gets the
    identity.  Returns one n-by-n score tensor per head.
    """
    n, d = nodes.shape
    if d != params.dim:
        raise ValueError(f"node width {d} != layer width {params.dim}")
    heads = params.heads
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    q = nodes @ params.w_q
    k = nodes @ params.w_k
    rho = None
    if rel_embeds is not None and rel_embeds.shape[0] > 0:
        if rel_embeds.shape[0] != n - 1:
            raise ValueError(
                f"{rel_embeds.shape[0]} relation embeddings for {n - 1} neighbours")
        normed = ad.layer_norm(rel_embeds, params.rel_ln_gain, params.rel_ln_bias)
        rho = normed @ params.w_r
    out = []
    for h in range(heads):
        qh = ad.slice_cols(q, h * dh, (h + 1) * dh)
        kh = ad.slice_cols(k, h * dh, (h + 1) * dh)
        scores = (qh @ kh.T) * scale
        if rho is not None:
            rh = ad.slice_cols(rho, h * dh, (h + 1) * dh)
            q0 = ad.take_row(qh, 0)
            k0 = ad.take_row(kh, 0)
            qn = ad.slice_rows(qh, 1, n)
            kn = ad.slice_rows(kh, 1, n)
            centre_out = ad.mul(ad.mul(rh, q0), kn).sum(axis=1) * scale
            centre_in = ad.mul(ad.mul(qn, rh), k0).sum(axis=1) * scale
            scores = scores + ad.place_row(centre_out, (n, n), 0, 1) \
                            + ad.place_col(centre_in, (n, n), 0, 1)
        out.append(scores)
    return out


def gt_layer_forward(params: GTParams, item: GraphBatchItem) -> Tensor:
    """Pre-LN attention sublayer then pre-LN SwiGLU sublayer, both residual."""
    x = item.nodes
    n, d = x.shape
    heads = params.heads
    dh = d // heads
    h = ad.layer_norm(x, params.ln1_gain, params.ln1_bias)
    scores = attention_scores(params, h, item.rel_embeds)
    v = h @ params.w_v
    ctx = []
    for i, s in enumerate(scores):
        attn = ad.softmax_row(s)
        vh = ad.slice_cols(v, i * dh, (i + 1) * dh)
        ctx.append(attn @ vh)
    x = x + ad.concat_cols(ctx)
    h = ad.layer_norm(x, params.ln2_gain, params.ln2_bias)
    return x + ad.swiglu_ffn(h, params.ffn_in, params.ffn_out)


def encode_subgraph(gt_layers: list[GTParams], centre_embedding: Tensor,
                    neighbour_embeddings: list[Tensor],
                    relation_embeddings: list[Tensor] | None,
                    use_segments: bool = True) -> Tensor:
    """Run the graph layers over embedded nodes and return the centre row.

    ``relation_embeddings`` align with the neighbours; pass None to ablate
    relation modulation (neighbours are still attended).  Callers supply
    neighbours in canonical sorted order so the summation order, and hence
    the output, is independent of how the sample was produced.
    """
    first = gt_layers[0]
    centre = centre_embedding + first.seg_centre if use_segments else centre_embedding
    rows = [centre]
    for nb in neighbour_embeddings:
        rows.append(nb + first.seg_neighbour if use_segments else nb)
    nodes = ad.stack(rows)
    rel = None
    if relation_embeddings is not None and len(relation_embeddings) > 0:
        rel = ad.stack(relation_embeddings)
    for layer in gt_layers:
        nodes = gt_layer_forward(layer, GraphBatchItem(nodes=nodes, rel_embeds=rel))
    return ad.take_row(nodes, 0)


def subgraph_embeddings(sample: SubgraphSample, graph: KnowledgeGraph,
                        entity_embed, relation_embed,
                        use_rij: bool = True) -> tuple[list[Tensor], list[Tensor] | None]:
    """Embed a sample's neighbours and edge relations through callables.

    Incoming edges use the inverse form of their relation text, so edge
    direction is realized as relation-text direction.
    """
    nb_embs = [entity_embed(e.neighbour) for e in sample.neighbours]
    if not use_rij:
        return nb_embs, None
    rel_embs = [relation_embed(e.rel, e.incoming) for e in sample.neighbours]
    return nb_embs, rel_embs
