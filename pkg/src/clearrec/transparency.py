"""Frame assembly with mandatory criteria disclosure, plus reference-price
and scarcity-claim compliance checks.

Every served frame carries a machine-readable Disclosure stating the
algorithm, the main ranking parameters ordered by influence, the user-data
categories actually read (verified against an instrumented read trace), and
every rule effect, sponsored boosts included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, Sequence

from .blending import (
    CCO_COMPONENT,
    CONTENT_COMPONENT,
    POPULARITY_COMPONENT,
    BlendConfig,
    Candidate,
    blend_scores,
)
from .catalog import ItemProfile
from .cco import IndicatorModel, score_cco
from .errors import (
    DisclosureMismatchError,
    ModelNotLoadedError,
    NoCandidatesError,
    NoPriceDataError,
    UnknownItemError,
)
from .events import Event, EventCategory, KindRegistry, WeightConfig
from .rules import RuleSet, RuleTrace, UserProfile, apply_rules


class FrameAlgorithm(Enum):
    PERSONAL_HISTORY = "PERSONAL_HISTORY"
    POPULATION_COOCCURRENCE = "POPULATION_COOCCURRENCE"
    CART_CONTEXT = "CART_CONTEXT"
    CATEGORY_CONTEXT = "CATEGORY_CONTEXT"
    POPULARITY_FALLBACK = "POPULARITY_FALLBACK"


# user-data categories a frame can read
PURCHASE_HISTORY = "purchase_history"
VIEWS = "views"
PROFILE_TRAITS = "profile_traits"
POPULATION_CORRELATIONS = "population_correlations"
ITEM_POPULARITY = "item_popularity"
SHOPPING_CONTEXT = "shopping_context"

DEFAULT_SIGNAL_KINDS = (
    "purchase",
    "add_to_cart",
    "view_item",
    "view_category",
    "dwell",
    "bought_in_category",
    "user_trait",
)


def kind_data_category(kind_name: str, registry: KindRegistry) -> str:
    """Map an event kind to the user-data category its events belong to."""
    kind = registry.get(kind_name)
    if kind.name == "purchase" or kind.category == EventCategory.HISTORICAL:
        return PURCHASE_HISTORY
    if kind.category in (EventCategory.USER_TRAIT, EventCategory.ITEM_TRAIT):
        return PROFILE_TRAITS
    return VIEWS


@dataclass(frozen=True)
class FrameConfig:
    """Configuration of one recommendation frame (a titled widget)."""

    frame_id: str
    title: str
    algorithm: FrameAlgorithm
    signal_kinds: tuple[str, ...] = DEFAULT_SIGNAL_KINDS
    blend: BlendConfig = BlendConfig()
    max_items: int = 10


def declared_data_categories(
    cfg: FrameConfig,
    effective: FrameAlgorithm,
    registry: KindRegistry,
) -> set[str]:
    """The data categories a frame's assembly path is allowed (and expected)
    to read, given its effective algorithm."""
    if effective == FrameAlgorithm.PERSONAL_HISTORY:
        cats = {kind_data_category(k, registry) for k in cfg.signal_kinds}
        cats.add(POPULATION_CORRELATIONS)
        if cfg.blend.gamma > 0:
            cats.add(ITEM_POPULARITY)
        return cats
    if effective in (FrameAlgorithm.POPULATION_COOCCURRENCE, FrameAlgorithm.CART_CONTEXT):
        cats = {SHOPPING_CONTEXT, POPULATION_CORRELATIONS}
        if cfg.blend.gamma > 0:
            cats.add(ITEM_POPULARITY)
        return cats
    if effective == FrameAlgorithm.CATEGORY_CONTEXT:
        return {SHOPPING_CONTEXT, ITEM_POPULARITY}
    return {ITEM_POPULARITY}


class SignalTrace:
    """Instrumented record of the data categories an assembly actually read."""

    def __init__(self):
        self.categories: set[str] = set()

    def record(self, category: str) -> None:
        self.categories.add(category)


@dataclass(frozen=True)
class Disclosure:
    """Per-frame statement of criteria, data use, and rule effects."""

    frame_id: str
    algorithm: str
    parameters: tuple[tuple[str, float], ...]  # (name, influence), ordered by influence
    data_categories: tuple[str, ...]
    rule_effects: Mapping[str, Any]
    personalization: bool
    generated_at: int

    def to_json(self) -> str:
        doc = {
            "frame_id": self.frame_id,
            "algorithm": self.algorithm,
            "parameters": [{"name": n, "influence": v} for n, v in self.parameters],
            "data_categories": list(self.data_categories),
            "rule_effects": self.rule_effects,
            "personalization": self.personalization,
            "generated_at": self.generated_at,
            "schema_version": 1,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def render_text(self) -> str:
        """Human-readable rendering of the same canonical object."""
        lines = [f"How this frame ({self.frame_id}) was ranked:"]
        lines.append(f"  Algorithm: {self.algorithm}")
        lines.append("  Main ranking parameters (by influence):")
        for name, influence in self.parameters:
            lines.append(f"    - {name} (influence {influence:.4f})")
        lines.append("  Data about you that was used: " + ", ".join(self.data_categories))
        boosts = self.rule_effects.get("boosts", [])
        excl = self.rule_effects.get("exclusions", 0)
        if not boosts and not excl:
            lines.append("  Rule effects: none")
        else:
            lines.append(f"  Rule effects: {excl} item(s) excluded by policy")
            for b in boosts:
                lines.append(f"    - Sponsored placement: {b['disclosure_text']} ({b['affected']} item(s))")
        lines.append(
            "  Personalized: " + ("yes" if self.personalization else "no (population/popularity data only)")
        )
        return "\n".join(lines)


@dataclass(frozen=True)
class FrameItem:
    item_id: str
    score: float
    sponsored: bool
    sponsor_labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class FrameResult:
    frame_id: str
    title: str
    items: tuple[FrameItem, ...]
    disclosure: Disclosure
    rule_trace: RuleTrace
    candidates: tuple[Candidate, ...] = ()  # post-rule, pre-truncation


@dataclass(frozen=True)
class UserView:
    """Everything the assembler may know about the requesting user."""

    profile: UserProfile
    events: tuple[Event, ...] = ()
    opted_out: bool = False
    deleted: bool = False


@dataclass
class EngineSnapshot:
    """Immutable serving state: model, catalog, rules, prior, configuration."""

    model: Optional[IndicatorModel]
    catalog: Mapping[str, ItemProfile]
    rules: RuleSet
    prior: Mapping[str, float]
    registry: KindRegistry
    weights: WeightConfig
    frames: Mapping[str, FrameConfig] = field(default_factory=dict)


def _pseudo_history(anchor_ids: Sequence[str], primary_kind: str) -> list[Event]:
    return [
        Event(event_id=f"ctx:{i}", user_id="-", kind=primary_kind, timestamp=0, item_id=a)
        for i, a in enumerate(anchor_ids)
    ]


def build_disclosure(
    cfg: FrameConfig,
    effective: FrameAlgorithm,
    candidates: Sequence[Candidate],
    rule_trace: RuleTrace,
    signal_trace: SignalTrace,
    personalization: bool,
    now: int,
) -> Disclosure:
    """Assemble the disclosure from the instrumented traces.

    Parameters are ordered by aggregate absolute contribution across the
    returned items; with no items the configured component weights stand in.
    """
    influence: dict[str, float] = {}
    if candidates:
        for c in candidates:
            for name, amount in c.breakdown.items():
                influence[name] = influence.get(name, 0.0) + abs(amount)
    else:
        if effective in (FrameAlgorithm.CATEGORY_CONTEXT, FrameAlgorithm.POPULARITY_FALLBACK):
            influence[POPULARITY_COMPONENT] = 1.0
        else:
            b = cfg.blend
            if b.alpha > 0:
                influence[CCO_COMPONENT] = b.alpha
            if b.beta > 0:
                influence[CONTENT_COMPONENT] = b.beta
            if b.gamma > 0:
                influence[POPULARITY_COMPONENT] = b.gamma
    parameters = tuple(sorted(influence.items(), key=lambda kv: (-kv[1], kv[0])))

    boosts = [
        {"rule_id": a.rule_id, "disclosure_text": a.disclosure_text, "affected": len(a.affected)}
        for a in rule_trace.boosts()
    ]
    exclusions = sum(len(a.affected) for a in rule_trace.exclusions())
    rule_effects: dict[str, Any] = {"exclusions": exclusions, "boosts": boosts}
    rule_effects["summary"] = "none" if not rule_trace.applications else (
        f"{exclusions} exclusion(s), {len(boosts)} boost rule(s)"
    )

    return Disclosure(
        frame_id=cfg.frame_id,
        algorithm=effective.value,
        parameters=parameters,
        data_categories=tuple(sorted(signal_trace.categories)),
        rule_effects=rule_effects,
        personalization=personalization,
        generated_at=now,
    )


def _context_list(context: Mapping[str, Any], key: str) -> list[str]:
    v = context.get(key)
    if v is None:
        return []
    if isinstance(v, str):
        return [x for x in v.split(",") if x]
    return list(v)


def assemble_frame(
    cfg: FrameConfig,
    user: UserView,
    context: Mapping[str, Any],
    snapshot: EngineSnapshot,
    now: int,
) -> FrameResult:
    """Select algorithm -> blend -> apply rules -> truncate -> disclose.

    Opted-out and deleted users are always served the popularity fallback
    with the personalization flag off.  The disclosure's data categories are
    checked against the instrumented trace; a mismatch is a hard error.
    """
    trace = SignalTrace()
    effective = cfg.algorithm
    if (user.opted_out or user.deleted) and effective == FrameAlgorithm.PERSONAL_HISTORY:
        effective = FrameAlgorithm.POPULARITY_FALLBACK

    candidates: list[Candidate] = []
    if effective == FrameAlgorithm.PERSONAL_HISTORY:
        if snapshot.model is None:
            raise ModelNotLoadedError("personalized frame requested before training")
        for k in cfg.signal_kinds:
            trace.record(kind_data_category(k, snapshot.registry))
        history = [e for e in user.events if e.kind in cfg.signal_kinds]
        scored = score_cco(history, snapshot.model, snapshot.weights, snapshot.registry)
        trace.record(POPULATION_CORRELATIONS)
        anchors: list[ItemProfile] = []
        if cfg.blend.beta > 0:
            anchor_ids = {
                e.item_id
                for e in history
                if e.kind == snapshot.model.primary_kind and e.item_id in snapshot.catalog
            }
            anchors = [snapshot.catalog[i] for i in sorted(anchor_ids)]
        prior: Mapping[str, float] = {}
        if cfg.blend.gamma > 0:
            prior = snapshot.prior
            trace.record(ITEM_POPULARITY)
        try:
            candidates = blend_scores(scored, anchors, snapshot.catalog, prior, cfg.blend)
        except NoCandidatesError:
            candidates = []

    elif effective in (FrameAlgorithm.POPULATION_COOCCURRENCE, FrameAlgorithm.CART_CONTEXT):
        if snapshot.model is None:
            raise ModelNotLoadedError("co-occurrence frame requested before training")
        trace.record(SHOPPING_CONTEXT)
        trace.record(POPULATION_CORRELATIONS)
        key = "cart" if effective == FrameAlgorithm.CART_CONTEXT else "item_id"
        anchor_ids = _context_list(context, key)
        prior = {}
        if cfg.blend.gamma > 0:
            prior = snapshot.prior
            trace.record(ITEM_POPULARITY)
        if anchor_ids:
            scored = score_cco(
                _pseudo_history(anchor_ids, snapshot.model.primary_kind),
                snapshot.model,
                snapshot.weights,
                snapshot.registry,
            )
            anchors = [snapshot.catalog[i] for i in anchor_ids if i in snapshot.catalog]
            try:
                candidates = blend_scores(
                    scored, anchors if cfg.blend.beta > 0 else [], snapshot.catalog, prior, cfg.blend
                )
            except NoCandidatesError:
                candidates = []
            # the anchors themselves are already on the page / in the cart
            candidates = [c for c in candidates if c.item_id not in set(anchor_ids)]

    elif effective == FrameAlgorithm.CATEGORY_CONTEXT:
        trace.record(SHOPPING_CONTEXT)
        trace.record(ITEM_POPULARITY)
        category = context.get("category")
        if category:
            candidates = [
                Candidate(
                    item_id=i,
                    score=snapshot.prior.get(i, 0.0),
                    breakdown={POPULARITY_COMPONENT: snapshot.prior.get(i, 0.0)},
                )
                for i, p in snapshot.catalog.items()
                if category in p.categories
            ]
            candidates.sort(key=lambda c: (-c.score, c.item_id))

    else:  # POPULARITY_FALLBACK
        trace.record(ITEM_POPULARITY)
        candidates = [
            Candidate(item_id=i, score=s, breakdown={POPULARITY_COMPONENT: s})
            for i, s in snapshot.prior.items()
        ]
        candidates.sort(key=lambda c: (-c.score, c.item_id))

    candidates, rule_trace = apply_rules(
        candidates, user.profile, context, now, snapshot.rules, snapshot.catalog, cfg.frame_id
    )
    shown = candidates[: cfg.max_items]

    personalization = effective == FrameAlgorithm.PERSONAL_HISTORY
    disclosure = build_disclosure(cfg, effective, shown, rule_trace, trace, personalization, now)

    declared = declared_data_categories(cfg, effective, snapshot.registry)
    if set(disclosure.data_categories) != declared or trace.categories != declared:
        raise DisclosureMismatchError(
            f"declared {sorted(declared)} != read {sorted(trace.categories)} for frame {cfg.frame_id}"
        )

    items = tuple(
        FrameItem(
            item_id=c.item_id,
            score=c.score,
            sponsored=bool(c.sponsored_by),
            sponsor_labels=c.sponsored_by,
        )
        for c in shown
    )
    return FrameResult(
        frame_id=cfg.frame_id,
        title=cfg.title,
        items=items,
        disclosure=disclosure,
        rule_trace=rule_trace,
        candidates=tuple(candidates),
    )


# --- reference price and scarcity claims --------------------------------------

@dataclass(frozen=True)
class PricePoint:
    item_id: str
    timestamp: int
    price: float

    def __post_init__(self):
        if not self.price > 0:
            raise ValueError(f"price must be > 0, got {self.price}")


def price_point_to_json(p: PricePoint) -> str:
    from .events import _ts_to_iso

    return json.dumps(
        {"item_id": p.item_id, "timestamp": _ts_to_iso(p.timestamp), "price": p.price},
        sort_keys=True,
        separators=(",", ":"),
    )


def price_points_from_jsonl(text: str) -> list[PricePoint]:
    from .events import _iso_to_ts

    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        ts = doc["timestamp"]
        out.append(
            PricePoint(
                item_id=doc["item_id"],
                timestamp=_iso_to_ts(ts) if isinstance(ts, str) else int(ts),
                price=float(doc["price"]),
            )
        )
    return out


def lowest_price_reference(
    history: Iterable[PricePoint],
    now: int,
    window_days: int = 180,
) -> float:
    """Lowest price among points within the trailing window (closed bound)."""
    window_s = window_days * 86400
    in_window = [p.price for p in history if now - p.timestamp <= window_s]
    if not in_window:
        raise NoPriceDataError(f"no price point within the last {window_days} days")
    return min(in_window)


STOCK_LEFT = "STOCK_LEFT"
VIEWERS_NOW = "VIEWERS_NOW"


@dataclass(frozen=True)
class ScarcityClaim:
    kind: str  # STOCK_LEFT or VIEWERS_NOW
    n: int


@dataclass(frozen=True)
class ClaimCheck:
    valid: bool
    reason: Optional[str] = None


def validate_scarcity_claim(
    claim: ScarcityClaim,
    item: Optional[ItemProfile],
    telemetry: Optional[Mapping[str, int]] = None,
) -> ClaimCheck:
    """Check an urgency cue against ground truth.

    Stock claims must equal the actual stock.  Live-viewer claims are
    default-invalid unless matching telemetry is supplied: an unverifiable
    urgency cue is treated as a dark pattern.
    """
    if item is None:
        raise UnknownItemError("scarcity claim references an unknown item")
    if claim.kind == STOCK_LEFT:
        if claim.n == item.stock:
            return ClaimCheck(valid=True)
        return ClaimCheck(valid=False, reason="false urgency")
    if claim.kind == VIEWERS_NOW:
        if telemetry is None or item.item_id not in telemetry:
            return ClaimCheck(valid=False, reason="unverifiable")
        if telemetry[item.item_id] == claim.n:
            return ClaimCheck(valid=True)
        return ClaimCheck(valid=False, reason="false urgency")
    raise ValueError(f"unknown claim kind {claim.kind!r}")
