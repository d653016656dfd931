"""Translation-based triple scoring, margin ranking loss and negative sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kg import Triple

STRATEGIES = ("one-sided", "batch-tied", "two-sided-reflexive")


@dataclass
class NegStrategy:
    """Negative sampling variant and count.

    batch-tied forces negatives_per_positive to the batch size at sampling
    time; the other variants use the configured count.
    """

    variant: str = "two-sided-reflexive"
    negatives_per_positive: int = 1

    def __post_init__(self):
        if self.variant not in STRATEGIES:
            raise ValueError(f"variant must be one of {STRATEGIES}, got {self.variant!r}")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")


def transe_score(h: Tensor, r: Tensor, t: Tensor) -> Tensor:
    """Score -(L1 norm of h + r - t); 0 iff the translation is exact."""
    if not (h.shape == r.shape == t.shape):
        raise ValueError(f"width mismatch: {h.shape}, {r.shape}, {t.shape}")
    return -abs(h + r - t).sum()


def transe_scores_against(query_plus_rel: Tensor, candidates: Tensor) -> Tensor:
    """Scores of one (query + relation) translation against stacked candidates.

    Equivalent to transe_score row by row: -(|candidates - v|).sum(axis=1)
    where v = query + relation on the predicted side.
    """
    return -abs(candidates - query_plus_rel).sum(axis=1)


def margin_loss(pos_scores: list[Tensor], neg_scores: list) -> Tensor:
    """Sum over all (positive, negative) pairs of max(0, 1 - f(pos) + f(neg)).

    ``neg_scores[i]`` holds positive i's negatives, either as a list of
    scalar tensors or as one vector tensor.  The margin is the constant 1.
    """
    if len(pos_scores) != len(neg_scores):
        raise ValueError("one negatives entry required per positive")
    total = Tensor(0.0)
    for pos, negs in zip(pos_scores, neg_scores):
        if isinstance(negs, Tensor):
            if negs.size == 0:
                raise ValueError("positive has no negatives")
            total = total + ad.relu(negs + (1.0 - pos)).sum()
        else:
            if not negs:
                raise ValueError("positive has no negatives")
            total = total + ad.relu(ad.stack(negs) + (1.0 - pos)).sum()
    return total


def negative_pool(batch: list[Triple], side: str, target: int, variant: str) -> list[int]:
    """Admissible in-batch negative entities for one positive, sorted.

    one-sided/batch-tied draw from the predicted side's entities; the
    two-sided reflexive pool mixes heads and tails (the query's own entity
    included) so the model cannot fall back to predicting its own inputs.
    The positive's target entity is always excluded.
    """
    if variant == "two-sided-reflexive":
        pool = {t.head for t in batch} | {t.tail for t in batch}
    elif side == "tail":
        pool = {t.tail for t in batch}
    else:
        pool = {t.head for t in batch}
    pool.discard(target)
    return sorted(pool)


def sample_negatives(batch: list[Triple], strategy: NegStrategy,
                     rng: np.random.Generator, side: str) -> list[list[int]]:
    """Per-positive negative entity ids for one prediction side.

    Negatives are drawn uniformly with replacement from the in-batch pool,
    so batch tying can always supply exactly batch-size negatives.
    """
    if side not in ("tail", "head"):
        raise ValueError(f"side must be 'tail' or 'head', got {side!r}")
    if len(batch) < 2:
        raise ValueError("need a batch of >= 2 triples to sample in-batch negatives")
    count = len(batch) if strategy.variant == "batch-tied" else strategy.negatives_per_positive
    out = []
    for triple in batch:
        target = triple.tail if side == "tail" else triple.head
        pool = negative_pool(batch, side, target, strategy.variant)
        if not pool:
            raise ValueError(f"no admissible negatives for {triple} ({side})")
        idx = rng.integers(0, len(pool), size=count)
        out.append([pool[i] for i in idx])
    return out
