"""Finite-difference gradient verification for every differentiable op.

The same suite backs the ``gradcheck`` CLI command and the test suite.
Each check builds a scalar loss from a forward function, runs the tape
backward, and compares analytic gradients against central finite
differences computed by re-running the forward alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward

FD_STEP = 1e-5
REL_TOL = 1e-4
# Below this magnitude central differences are dominated by truncation noise,
# so such components are held to an absolute bound instead of a relative one.
SIG_FLOOR = 1e-6


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    passed: bool


def finite_difference(forward, tensors: list[Tensor], h: float = FD_STEP) -> list[np.ndarray]:
    """Central-difference gradient of a scalar-valued forward() for each tensor."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = forward().item()
            flat[i] = orig - h
            down = forward().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def compare_grads(forward, tensors: list[Tensor], name: str,
                  rel_tol: float = REL_TOL, h: float = FD_STEP) -> CheckResult:
    """Run forward under a tape, backward, and compare against finite differences."""
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = forward()
    backward(loss, tape)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad for t in tensors]
    numeric = finite_difference(forward, tensors, h=h)
    max_rel = 0.0
    ok = True
    for a, f in zip(analytic, numeric):
        diff = np.abs(a - f)
        scale = np.maximum(np.abs(a), np.abs(f))
        significant = scale > SIG_FLOOR
        if significant.any():
            rel = float((diff[significant] / scale[significant]).max())
            max_rel = max(max_rel, rel)
            if rel > rel_tol:
                ok = False
        if not np.all(diff[~significant] <= SIG_FLOOR):
            ok = False
    return CheckResult(name=name, max_rel_err=max_rel, passed=ok)


def _op_checks(rng: np.random.Generator) -> list[CheckResult]:
    results = []

    a = ad.parameter(rng.standard_normal((3, 3)))
    b = ad.parameter(rng.standard_normal((3, 3)))
    results.append(compare_grads(lambda: (a @ b).sum(), [a, b], "matmul"))

    v = ad.parameter(rng.standard_normal(4))
    m = ad.parameter(rng.standard_normal((4, 5)))
    results.append(compare_grads(lambda: (v @ m).sum(), [v, m], "matmul_vec"))

    x = ad.parameter(rng.standard_normal(6))
    g = ad.parameter(rng.standard_normal(6) * 0.5 + 1.0)
    c = ad.parameter(rng.standard_normal(6) * 0.1)
    results.append(compare_grads(
        lambda: ad.layer_norm(x, g, c).sum(), [x, g, c], "layer_norm"))

    xm = ad.parameter(rng.standard_normal((3, 6)))
    results.append(compare_grads(
        lambda: ad.layer_norm(xm, g, c).sum(), [xm, g, c], "layer_norm_rows"))

    s = ad.parameter(rng.standard_normal(5))
    results.append(compare_grads(lambda: ad.silu(s).sum(), [s], "silu"))

    w = ad.parameter(rng.standard_normal(5) + 0.5)  # away from the kink at 0
    results.append(compare_grads(lambda: ad.relu(w).sum(), [w], "relu"))

    u = ad.parameter(rng.standard_normal(5) + 0.5)
    results.append(compare_grads(lambda: abs(u).sum(), [u], "abs"))

    logits = ad.parameter(rng.standard_normal((2, 5)))
    weights = Tensor(rng.standard_normal((2, 5)))
    mask = np.array([True, True, False, True, True])
    results.append(compare_grads(
        lambda: ad.mul(ad.softmax_row(logits, mask), weights).sum(),
        [logits], "softmax_row"))

    sx = ad.parameter(rng.standard_normal(4))
    w_in = ad.parameter(rng.standard_normal((4, 16)) * 0.5)
    w_out = ad.parameter(rng.standard_normal((8, 4)) * 0.5)
    results.append(compare_grads(
        lambda: ad.swiglu_ffn(sx, w_in, w_out).sum(), [sx, w_in, w_out], "swiglu_ffn",
        rel_tol=1e-4))

    rows = [ad.parameter(rng.standard_normal(3)) for _ in range(3)]
    results.append(compare_grads(
        lambda: ad.mul(ad.stack(rows), ad.stack(rows)).sum(), rows, "stack"))

    table = ad.parameter(rng.standard_normal((6, 3)))
    ids = np.array([0, 2, 2, 5])
    results.append(compare_grads(
        lambda: ad.embedding_rows(table, ids).sum(), [table], "embedding_rows"))

    p = ad.parameter(rng.standard_normal(3))
    results.append(compare_grads(
        lambda: ad.mul(ad.place_row(p, (4, 4), 0, 1), Tensor(np.arange(16.0).reshape(4, 4))).sum(),
        [p], "place_row"))
    results.append(compare_grads(
        lambda: ad.mul(ad.place_col(p, (4, 4), 0, 1), Tensor(np.arange(16.0).reshape(4, 4))).sum(),
        [p], "place_col"))

    return results


def _model_checks(rng: np.random.Generator) -> list[CheckResult]:
    # Imported here so the op-level suite has no model dependencies.
    from .graph_encoder import GraphBatchItem, GTParams, attention_scores, gt_layer_forward
    from .scoring import margin_loss, transe_score

    results = []
    d, heads = 8, 2

    gtp = GTParams.init(rng, dim=d, heads=heads, ffn=16)
    gtp.w_r.data[:] = rng.standard_normal((d, d)) * 0.3  # a generic point
    nodes = ad.parameter(rng.standard_normal((3, d)))
    rels = ad.parameter(rng.standard_normal((2, d)))

    def scores_loss():
        per_head = attention_scores(gtp, nodes, rels)
        return sum((abs(s).sum() for s in per_head), start=Tensor(0.0))

    results.append(compare_grads(
        scores_loss, [nodes, rels, gtp.w_q, gtp.w_k, gtp.w_r, gtp.rel_ln_gain],
        "attention_scores"))

    item = GraphBatchItem(nodes=nodes, rel_embeds=rels)
    results.append(compare_grads(
        lambda: gt_layer_forward(gtp, item).sum(),
        [nodes, rels, gtp.w_r, gtp.w_v, gtp.ffn_in, gtp.ln1_gain],
        "gt_layer_forward"))

    # Projection head feeding the graph layer, scored end to end.
    w0 = ad.parameter(rng.standard_normal((d, d)) * 0.5)
    w1 = ad.parameter(rng.standard_normal((d, d)) * 0.5)
    cls_vecs = [ad.parameter(rng.standard_normal(d)) for _ in range(3)]
    rel_cls = [ad.parameter(rng.standard_normal(d)) for _ in range(2)]
    rel_vec = ad.parameter(rng.standard_normal(d))
    tgt = ad.parameter(rng.standard_normal(d))
    # A negative close to the target keeps the hinge strictly active, so the
    # check exercises real gradients instead of an all-zero loss.
    neg = ad.parameter(tgt.data * 0.9 + 0.05)

    def composite():
        proj = [ad.matmul(ad.silu(ad.matmul(c, w0)), w1) for c in cls_vecs]
        rel_proj = ad.stack([ad.matmul(ad.silu(ad.matmul(c, w0)), w1) for c in rel_cls])
        out = gt_layer_forward(gtp, GraphBatchItem(nodes=ad.stack(proj), rel_embeds=rel_proj))
        h = ad.take_row(out, 0)
        pos = transe_score(h, rel_vec, tgt)
        negs = transe_score(h, rel_vec, neg)
        return margin_loss([pos], [[negs]])

    if composite().item() <= 0.1:
        raise AssertionError("composite gradcheck instance has an inactive hinge")
    results.append(compare_grads(
        composite,
        [w0, w1, cls_vecs[0], rel_cls[0], rel_vec, tgt, neg,
         gtp.w_q, gtp.w_k, gtp.w_v, gtp.w_r, gtp.seg_centre, gtp.ffn_out],
        "composite_loss"))
    return results


def run_suite(seed: int = 0) -> list[CheckResult]:
    """The full gradient suite: primitive ops plus model-level composites."""
    rng = np.random.default_rng(seed)
    return _op_checks(rng) + _model_checks(rng)
