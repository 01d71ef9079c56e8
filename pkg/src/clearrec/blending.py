"""Hybrid scoring: blend co-occurrence scores with content similarity and a
popularity prior into one candidate ranking."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .catalog import ItemProfile
from .cco import ScoredItem
from .errors import NoCandidatesError
from .events import EventLog

# component names used in score breakdowns and disclosures
CCO_COMPONENT = "population co-occurrence (CCO)"
CONTENT_COMPONENT = "content similarity"
POPULARITY_COMPONENT = "item popularity"


@dataclass(frozen=True)
class BlendConfig:
    """Weights of the three ranking components.

    alpha scales min-max-normalized co-occurrence scores, beta the best
    content similarity to any anchor item, gamma the popularity prior.
    """

    alpha: float = 1.0
    beta: float = 0.25
    gamma: float = 0.05

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("blend weights must be >= 0")
        if self.alpha + self.beta + self.gamma == 0:
            raise ValueError("at least one blend weight must be positive")


@dataclass
class Candidate:
    """One ranked candidate flowing through blending and the rule engine."""

    item_id: str
    score: float
    breakdown: dict[str, float] = field(default_factory=dict)
    sponsored_by: tuple[str, ...] = ()
    applied_rules: frozenset[str] = frozenset()

    def copy(self) -> "Candidate":
        return Candidate(
            item_id=self.item_id,
            score=self.score,
            breakdown=dict(self.breakdown),
            sponsored_by=self.sponsored_by,
            applied_rules=self.applied_rules,
        )


def content_similarity(a: ItemProfile, b: ItemProfile) -> float:
    """Jaccard similarity of the items' combined category and tag sets.

    Two items with empty feature sets get 0: no evidence, no similarity.
    """
    fa = a.categories | a.tags
    fb = b.categories | b.tags
    union = fa | fb
    if not union:
        return 0.0
    return len(fa & fb) / len(union)


def popularity_prior(log: EventLog, primary_kind: str) -> dict[str, float]:
    """Distinct-user conversion count per item, max-normalized to [0, 1]."""
    users_per_item: dict[str, set[str]] = {}
    for e in log:
        if e.kind == primary_kind and e.item_id is not None:
            users_per_item.setdefault(e.item_id, set()).add(e.user_id)
    if not users_per_item:
        return {}
    top = max(len(us) for us in users_per_item.values())
    return {item: len(us) / top for item, us in users_per_item.items()}


def _minmax(scores: Mapping[str, float]) -> dict[str, float]:
    """Min-max normalization; a constant (or singleton) vector maps to all 1.0."""
    if not scores:
        return {}
    lo, hi = min(scores.values()), max(scores.values())
    if hi == lo:
        return {item: 1.0 for item in scores}
    return {item: (s - lo) / (hi - lo) for item, s in scores.items()}


def blend_scores(
    cco: Sequence[ScoredItem],
    content_anchor_items: Sequence[ItemProfile],
    catalog: Mapping[str, ItemProfile],
    prior: Mapping[str, float],
    cfg: BlendConfig,
) -> list[Candidate]:
    """final(t) = alpha * minmax(cco)(t) + beta * max anchor similarity(t)
    + gamma * prior(t), over the candidate union of all active components.

    Items outside a component contribute 0 for that component.  Order is
    final score descending, item id ascending.
    """
    cco_scores = {s.item_id: s.score for s in cco}
    candidates: set[str] = set(cco_scores)
    if cfg.gamma > 0:
        candidates |= set(prior)
    if cfg.beta > 0 and content_anchor_items:
        candidates |= set(catalog)
    if not candidates:
        raise NoCandidatesError("no co-occurrence scores and no catalog contribution")

    normalized = _minmax(cco_scores)
    out: list[Candidate] = []
    for item in candidates:
        breakdown: dict[str, float] = {}
        if cfg.alpha > 0:
            breakdown[CCO_COMPONENT] = cfg.alpha * normalized.get(item, 0.0)
        if cfg.beta > 0:
            profile = catalog.get(item)
            sim = 0.0
            if profile is not None and content_anchor_items:
                sim = max(content_similarity(anchor, profile) for anchor in content_anchor_items)
            breakdown[CONTENT_COMPONENT] = cfg.beta * sim
        if cfg.gamma > 0:
            breakdown[POPULARITY_COMPONENT] = cfg.gamma * prior.get(item, 0.0)
        out.append(Candidate(item_id=item, score=sum(breakdown.values()), breakdown=breakdown))
    out.sort(key=lambda c: (-c.score, c.item_id))
    return out
