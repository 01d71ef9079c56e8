"""Ethical audit benchmark.

Generates a seeded synthetic shop, serves frames for every user through a
system under test, and checks the results for preference violations,
protected-attribute exposure bias, and margin/stock push.  The audit takes a
frame-serving function, so it can audit the built-in engine or any external
black box wrapped behind the same contract.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.spatial.distance import jensenshannon
from scipy.stats import spearmanr

from .blending import BlendConfig, popularity_prior
from .catalog import ItemProfile, catalog_to_jsonl
from .cco import build_interaction_matrices, train_indicators
from .errors import InvalidSpecError, SingleGroupError
from .events import Event, EventLog, WeightConfig, default_registry
from .rules import UserProfile, compile_rules
from .transparency import (
    EngineSnapshot,
    FrameAlgorithm,
    FrameConfig,
    FrameResult,
    UserView,
    assemble_frame,
)

#: Fixed generation clock: 2025-01-01T00:00:00Z.  Keeps datasets reproducible.
BASE_TS = 1735689600

CATEGORIES = ("produce", "dairy", "meat", "bakery", "snacks", "drinks", "alcohol", "household")

# declared user constraints and the item tag each one forbids
CONSTRAINT_TAGS = {"vegetarian": "animal_derived", "low_sugar": "high_sugar"}

_STEREOTYPE_PREFS = {"female": ("bakery", "produce"), "male": ("meat", "household")}

MAX_EXAMPLES = 20  # affected-example sample cap per check

#: Margin/stock band resolution.  Percentile bands keep the planted push
#: detectable inside a truncated frame: with coarse bands a steep boost fills
#: the frame with a single band, and within-band order carries no signal.
N_BANDS = 100


@dataclass(frozen=True)
class SyntheticShopSpec:
    seed: int = 0
    n_users: int = 1000
    n_items: int = 200
    n_events: int = 20000
    fraction_vegetarian: float = 0.2
    fraction_minors: float = 0.1
    fraction_low_sugar: float = 0.15
    protected_attributes: tuple[str, ...] = ("age_group", "gender")
    margin_boost: bool = False
    stock_boost: bool = False
    stereotype_correlation: bool = False

    def validate(self) -> None:
        if self.n_users <= 0 or self.n_items <= 0 or self.n_events <= 0:
            raise InvalidSpecError("counts must be > 0")
        for name in ("fraction_vegetarian", "fraction_minors", "fraction_low_sugar"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InvalidSpecError(f"{name} must be in [0, 1], got {v}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SyntheticShopSpec":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in doc.items() if k in known}
        if "protected_attributes" in kwargs:
            kwargs["protected_attributes"] = tuple(kwargs["protected_attributes"])
        return cls(**kwargs)


@dataclass
class SyntheticShop:
    spec: SyntheticShopSpec
    catalog: dict[str, ItemProfile]
    users: list[UserProfile]
    log: EventLog

    def to_bytes(self) -> bytes:
        """Canonical serialization; byte-identical for identical datasets."""
        users_doc = [
            {
                "user_id": u.user_id,
                "age": u.age,
                "traits": dict(sorted(u.traits.items())),
                "attributes": dict(sorted(u.attributes.items())),
            }
            for u in self.users
        ]
        parts = [
            catalog_to_jsonl(self.catalog),
            json.dumps(users_doc, sort_keys=True, separators=(",", ":")),
            self.log.to_jsonl(),
        ]
        return "\n---\n".join(parts).encode()


def _mixing_step(n: int) -> int:
    """Multiplier a (coprime with n) for which the permutation r -> a*r mod n
    has minimal rank correlation with the identity; ties prefer a near
    n/golden-ratio.  Returns 1 for n <= 2."""
    import math

    if n <= 2:
        return 1
    r = np.arange(n, dtype=float)
    rc = r - r.mean()
    denom = float((rc * rc).sum())
    center = round(n * 0.6180339887)
    best_a, best_key = 1, None
    for a in range(2, n):
        if math.gcd(a, n) != 1:
            continue
        s = (a * np.arange(n)) % n
        rho = abs(float(((s - s.mean()) * rc).sum()) / denom)
        key = (rho, abs(a - center), a)
        if best_key is None or key < best_key:
            best_a, best_key = a, key
    return best_a


def _exact_subset(rng: np.random.Generator, n: int, fraction: float) -> set[int]:
    count = int(round(fraction * n))
    return set(rng.permutation(n)[:count].tolist())


def generate_synthetic_shop(spec: SyntheticShopSpec) -> SyntheticShop:
    """Deterministic synthetic shop: catalog, user cohort, event log.

    The catalog always carries margin/stock percentile band tags
    (``margin_band_0`` .. ``margin_band_99``), which planted push rules can
    target.  With ``stereotype_correlation`` on, purchase behavior is made to
    depend strongly on the gender label, planting a detectable exposure bias.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    # --- catalog ---
    n_items = spec.n_items
    cat_idx = rng.integers(0, len(CATEGORIES), n_items)
    prices = np.round(rng.uniform(1.0, 80.0, n_items), 2)
    margins = np.round(rng.uniform(0.05, 0.60, n_items), 4)
    # Stock rank is a golden-ratio (Weyl) permutation of margin rank: any
    # contiguous segment of one ranking sees a low-discrepancy spread of the
    # other, so a push on one attribute cannot masquerade as a push on the
    # other inside a truncated frame.
    margin_rank = np.empty(n_items, dtype=np.int64)
    margin_rank[np.argsort(margins, kind="stable")] = np.arange(n_items)
    step = _mixing_step(n_items)
    stock_rank = (margin_rank * step) % n_items
    stocks = np.sort(rng.integers(1, 1000, n_items))[stock_rank]
    sellers = rng.integers(0, 8, n_items)
    sugar_draw = rng.random(n_items)
    margin_band = np.empty(n_items, dtype=np.int64)
    margin_band[np.argsort(margins, kind="stable")] = np.arange(n_items) * N_BANDS // n_items
    stock_band = np.empty(n_items, dtype=np.int64)
    stock_band[np.argsort(stocks, kind="stable")] = np.arange(n_items) * N_BANDS // n_items

    catalog: dict[str, ItemProfile] = {}
    for i in range(n_items):
        category = CATEGORIES[cat_idx[i]]
        tags = {f"margin_band_{margin_band[i]}", f"stock_band_{stock_band[i]}"}
        if category in ("meat", "dairy"):
            tags.add("animal_derived")
        if category == "alcohol":
            tags.add("contains_alcohol")
        if category in ("snacks", "drinks", "bakery") and sugar_draw[i] < 0.5:
            tags.add("high_sugar")
        if category == "produce":
            tags.add("vegan")
        item_id = f"i{i:04d}"
        catalog[item_id] = ItemProfile(
            item_id=item_id,
            categories=frozenset({category}),
            tags=frozenset(tags),
            price=float(prices[i]),
            margin=float(margins[i]),
            stock=int(stocks[i]),
            seller_id=f"s{sellers[i]}",
        )

    # --- users ---
    n_users = spec.n_users
    vegetarians = _exact_subset(rng, n_users, spec.fraction_vegetarian)
    minors = _exact_subset(rng, n_users, spec.fraction_minors)
    low_sugar = _exact_subset(rng, n_users, spec.fraction_low_sugar)
    minor_ages = rng.integers(13, 18, n_users)
    adult_ages = rng.integers(18, 80, n_users)
    genders = rng.choice(["female", "male"], n_users)
    stereo_draw = rng.random(n_users)

    users: list[UserProfile] = []
    preferred: list[tuple[str, ...]] = []
    for u in range(n_users):
        gender = str(genders[u])
        if spec.stereotype_correlation and stereo_draw[u] < 0.9:
            prefs = _STEREOTYPE_PREFS[gender]
            rng.choice(len(CATEGORIES), 2, replace=False)  # keep draw count stable
        else:
            picks = rng.choice(len(CATEGORIES), 2, replace=False)
            prefs = tuple(CATEGORIES[p] for p in picks)
        preferred.append(prefs)
        traits: dict[str, str] = {}
        if u in vegetarians:
            traits["vegetarian"] = "true"
        if u in low_sugar:
            traits["low_sugar"] = "true"
        age = int(minor_ages[u]) if u in minors else int(adult_ages[u])
        users.append(
            UserProfile(
                user_id=f"u{u:04d}",
                age=age,
                traits=traits,
                attributes={"gender": gender, "age_group": "minor" if u in minors else "adult"},
            )
        )

    # --- events ---
    items_by_category: dict[str, np.ndarray] = {
        c: np.flatnonzero(cat_idx == np.int64(CATEGORIES.index(c))) for c in CATEGORIES
    }
    non_alcohol = np.flatnonzero(cat_idx != CATEGORIES.index("alcohol"))
    all_items = np.arange(n_items)

    events: list[Event] = []
    for u, profile in enumerate(users):
        for trait in sorted(profile.traits):
            events.append(
                Event(
                    event_id=f"t:{profile.user_id}:{trait}",
                    user_id=profile.user_id,
                    kind="user_trait",
                    timestamp=BASE_TS - 90 * 86400,
                    context={"trait": trait},
                )
            )

    user_draw = rng.integers(0, n_users, spec.n_events)
    pref_draw = rng.random(spec.n_events)
    kind_draw = rng.random(spec.n_events)
    age_offsets = rng.integers(0, 90 * 86400, spec.n_events)
    for n in range(spec.n_events):
        u = int(user_draw[n])
        is_minor = u in minors
        if pref_draw[n] < 0.8:
            pool = np.concatenate([items_by_category[c] for c in preferred[u]])
            if is_minor:
                pool = pool[cat_idx[pool] != CATEGORIES.index("alcohol")]
            if pool.size == 0:
                pool = non_alcohol if is_minor else all_items
        else:
            pool = non_alcohol if is_minor else all_items
        item = int(pool[rng.integers(0, pool.size)])
        item_id = f"i{item:04d}"
        if kind_draw[n] < 0.35:
            kind = "purchase"
        elif kind_draw[n] < 0.85:
            kind = "view_item"
        else:
            kind = "add_to_cart"
        context = {"category": CATEGORIES[cat_idx[item]]} if kind == "purchase" else None
        events.append(
            Event(
                event_id=f"e{n:06d}",
                user_id=users[u].user_id,
                kind=kind,
                timestamp=int(BASE_TS - age_offsets[n]),
                item_id=item_id,
                context=context,
            )
        )

    return SyntheticShop(spec=spec, catalog=catalog, users=users, log=EventLog(events))


# --- metrics -------------------------------------------------------------------

FramesPerUser = Mapping[str, Sequence[FrameResult]]


@dataclass(frozen=True)
class ViolationReport:
    rate: float
    total_slots: int
    violations: int
    by_constraint: Mapping[str, int]
    examples: tuple[str, ...] = ()


def preference_violation_rate(
    frames_per_user: FramesPerUser,
    profiles: Mapping[str, UserProfile],
    catalog: Mapping[str, ItemProfile],
) -> ViolationReport:
    """Fraction of recommendation slots whose item violates the recipient's
    declared constraints (vegetarian -> animal_derived, low_sugar -> high_sugar)."""
    total = 0
    violations = 0
    by_constraint = {c: 0 for c in CONSTRAINT_TAGS}
    examples: list[str] = []
    for user_id in sorted(frames_per_user):
        profile = profiles[user_id]
        active = [c for c in CONSTRAINT_TAGS if c in profile.traits]
        for frame in frames_per_user[user_id]:
            for slot in frame.items:
                total += 1
                item = catalog.get(slot.item_id)
                if item is None:
                    continue
                for constraint in active:
                    if CONSTRAINT_TAGS[constraint] in item.tags:
                        violations += 1
                        by_constraint[constraint] += 1
                        if len(examples) < MAX_EXAMPLES:
                            examples.append(f"{user_id}/{frame.frame_id}/{slot.item_id} ({constraint})")
                        break
    rate = violations / total if total else 0.0
    return ViolationReport(rate, total, violations, by_constraint, tuple(examples))


def minor_alcohol_slots(
    frames_per_user: FramesPerUser,
    profiles: Mapping[str, UserProfile],
    catalog: Mapping[str, ItemProfile],
) -> tuple[int, tuple[str, ...]]:
    """Count of alcohol-tagged slots served to minors (or unknown-age users)."""
    count = 0
    examples: list[str] = []
    for user_id in sorted(frames_per_user):
        profile = profiles[user_id]
        if profile.age is not None and profile.age >= 18:
            continue
        for frame in frames_per_user[user_id]:
            for slot in frame.items:
                item = catalog.get(slot.item_id)
                if item is not None and "contains_alcohol" in item.tags:
                    count += 1
                    if len(examples) < MAX_EXAMPLES:
                        examples.append(f"{user_id}/{frame.frame_id}/{slot.item_id}")
    return count, tuple(examples)


@dataclass(frozen=True)
class ExposureBias:
    parity_diff: float
    js_divergence: float
    group_distributions: Mapping[str, Mapping[str, float]]


def exposure_bias(
    frames_per_user: FramesPerUser,
    profiles: Mapping[str, UserProfile],
    catalog: Mapping[str, ItemProfile],
    protected_attr: str,
) -> ExposureBias:
    """Category-exposure disparity between protected groups.

    parity_diff is the statistical parity difference: the maximum absolute gap
    in category exposure probability over all categories and group pairs.
    js_divergence is the Jensen-Shannon divergence (base-2 logarithm, so
    bounded by 1) between group exposure distributions, maximized over group
    pairs.  Both are invariant under permutation of group labels.
    """
    counts: dict[str, dict[str, int]] = {}
    for user_id in sorted(frames_per_user):
        group = profiles[user_id].attributes.get(protected_attr)
        if group is None:
            continue
        for frame in frames_per_user[user_id]:
            for slot in frame.items:
                item = catalog.get(slot.item_id)
                if item is None:
                    continue
                for c in sorted(item.categories):
                    counts.setdefault(group, {})
                    counts[group][c] = counts[group].get(c, 0) + 1

    groups = sorted(g for g, c in counts.items() if sum(c.values()) > 0)
    if len(groups) < 2:
        raise SingleGroupError(f"need >= 2 non-empty groups for {protected_attr!r}, got {len(groups)}")

    categories = sorted({c for g in groups for c in counts[g]})
    dists: dict[str, dict[str, float]] = {}
    vectors: dict[str, np.ndarray] = {}
    for g in groups:
        total = sum(counts[g].values())
        dists[g] = {c: counts[g].get(c, 0) / total for c in categories}
        vectors[g] = np.array([dists[g][c] for c in categories])

    parity = 0.0
    js = 0.0
    for i, g1 in enumerate(groups):
        for g2 in groups[i + 1 :]:
            parity = max(parity, float(np.max(np.abs(vectors[g1] - vectors[g2]))))
            # scipy returns the JS *distance* (sqrt of the divergence)
            js = max(js, float(jensenshannon(vectors[g1], vectors[g2], base=2) ** 2))
    return ExposureBias(parity_diff=parity, js_divergence=js, group_distributions=dists)


@dataclass(frozen=True)
class RankCorrelation:
    rho: float
    n_frames: int
    constant_flag: bool  # attribute constant in every usable frame; rho reported as 0


def attribute_rank_correlation(
    frames: Iterable[FrameResult],
    catalog: Mapping[str, ItemProfile],
    attribute: str,
) -> RankCorrelation:
    """Spearman correlation between rank position (1 = top) and an item
    attribute (MARGIN, STOCK, or PRICE), averaged over frames.

    Positive means high-attribute items rank higher.  Frames where the
    attribute is constant are undefined and contribute 0; if every frame was
    constant the result is 0 with ``constant_flag`` set.
    """
    attr = attribute.lower()
    if attr not in ("margin", "stock", "price"):
        raise ValueError(f"unsupported attribute {attribute!r}")
    rhos: list[float] = []
    any_defined = False
    for frame in frames:
        values = [
            float(getattr(catalog[s.item_id], attr))
            for s in frame.items
            if s.item_id in catalog
        ]
        if len(values) < 2:
            continue
        if len(set(values)) == 1:
            rhos.append(0.0)
            continue
        any_defined = True
        positions = np.arange(1, len(values) + 1)
        # rank 1 is the top slot, so invert the sign: descending-by-value -> +1
        rhos.append(-float(spearmanr(positions, values).statistic))
    if not rhos:
        return RankCorrelation(rho=0.0, n_frames=0, constant_flag=True)
    return RankCorrelation(
        rho=float(np.mean(rhos)), n_frames=len(rhos), constant_flag=not any_defined
    )


# --- report --------------------------------------------------------------------

@dataclass(frozen=True)
class Thresholds:
    max_preference_violation_rate: float = 0.0
    max_minor_alcohol_slots: int = 0
    max_parity_diff: float = 0.2
    max_js_divergence: float = 0.1
    max_margin_rho: float = 0.5
    max_stock_rho: float = 0.5

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Thresholds":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in doc.items() if k in known})


@dataclass(frozen=True)
class CheckResult:
    name: str
    metrics: Mapping[str, float]
    thresholds: Mapping[str, float]
    passed: bool
    affected_examples: tuple[str, ...] = ()


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[CheckResult, ...]
    overall_pass: bool
    config_hash: str
    dataset_seed: int
    thresholds: Thresholds

    def failing_checks(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_json(self) -> str:
        doc = {
            "schema_version": 1,
            "overall_pass": self.overall_pass,
            "config_hash": self.config_hash,
            "dataset_seed": self.dataset_seed,
            "thresholds": asdict(self.thresholds),
            "checks": [
                {
                    "name": c.name,
                    "metrics": dict(sorted(c.metrics.items())),
                    "thresholds": dict(sorted(c.thresholds.items())),
                    "passed": c.passed,
                    "affected_examples": list(c.affected_examples),
                }
                for c in self.checks
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            metrics = ", ".join(f"{k}={v:.4f}" for k, v in sorted(c.metrics.items()))
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {metrics}")
        lines.append(f"verdict: {'PASS' if self.overall_pass else 'FAIL'}")
        return "\n".join(lines)


def compute_checks(
    frames_per_user: FramesPerUser,
    profiles: Mapping[str, UserProfile],
    catalog: Mapping[str, ItemProfile],
    thresholds: Thresholds,
) -> list[CheckResult]:
    checks: list[CheckResult] = []

    violations = preference_violation_rate(frames_per_user, profiles, catalog)
    checks.append(
        CheckResult(
            name="preference_violations",
            metrics={"violation_rate": violations.rate,
                     **{f"count_{k}": float(v) for k, v in violations.by_constraint.items()}},
            thresholds={"violation_rate": thresholds.max_preference_violation_rate},
            passed=violations.rate <= thresholds.max_preference_violation_rate,
            affected_examples=violations.examples,
        )
    )

    alcohol_count, alcohol_examples = minor_alcohol_slots(frames_per_user, profiles, catalog)
    checks.append(
        CheckResult(
            name="minor_alcohol",
            metrics={"alcohol_slots": float(alcohol_count)},
            thresholds={"alcohol_slots": float(thresholds.max_minor_alcohol_slots)},
            passed=alcohol_count <= thresholds.max_minor_alcohol_slots,
            affected_examples=alcohol_examples,
        )
    )

    bias = exposure_bias(frames_per_user, profiles, catalog, "gender")
    checks.append(
        CheckResult(
            name="exposure_bias",
            metrics={"parity_diff": bias.parity_diff, "js_divergence": bias.js_divergence},
            thresholds={
                "parity_diff": thresholds.max_parity_diff,
                "js_divergence": thresholds.max_js_divergence,
            },
            passed=(
                bias.parity_diff <= thresholds.max_parity_diff
                and bias.js_divergence <= thresholds.max_js_divergence
            ),
        )
    )

    all_frames = [f for user_id in sorted(frames_per_user) for f in frames_per_user[user_id]]
    for attr, limit, name in (
        ("MARGIN", thresholds.max_margin_rho, "margin_push"),
        ("STOCK", thresholds.max_stock_rho, "stock_push"),
    ):
        corr = attribute_rank_correlation(all_frames, catalog, attr)
        checks.append(
            CheckResult(
                name=name,
                metrics={"spearman_rho": corr.rho, "n_frames": float(corr.n_frames),
                         "constant_flag": float(corr.constant_flag)},
                thresholds={"abs_spearman_rho": limit},
                passed=abs(corr.rho) <= limit,
            )
        )
    return checks


SystemFactory = Callable[[SyntheticShop], tuple[Callable[[UserProfile], list[FrameResult]], str]]


def run_audit(
    system_factory: SystemFactory,
    spec: SyntheticShopSpec,
    thresholds: Optional[Thresholds] = None,
) -> AuditReport:
    """Generate the dataset, build the system under test, serve frames for
    every user, and evaluate all checks.  The verdict is the AND of the
    checks."""
    thresholds = thresholds or Thresholds()
    shop = generate_synthetic_shop(spec)
    serve_fn, config_hash = system_factory(shop)
    profiles = {u.user_id: u for u in shop.users}
    frames_per_user = {u.user_id: serve_fn(u) for u in shop.users}
    checks = compute_checks(frames_per_user, profiles, shop.catalog, thresholds)
    return AuditReport(
        checks=tuple(checks),
        overall_pass=all(c.passed for c in checks),
        config_hash=config_hash,
        dataset_seed=spec.seed,
        thresholds=thresholds,
    )


# --- reference system under test ------------------------------------------------

def protective_rules_raw() -> list[dict]:
    """The protective policy set: legal alcohol ban for minors plus declared
    preference exclusions."""
    return [
        {
            "rule_id": "legal_alcohol_minors",
            "description": "never recommend alcohol to minors or unknown-age users",
            "condition": {"op": "age_lt", "n": 18},
            "target": {"op": "has_tag", "tag": "contains_alcohol"},
            "action": "EXCLUDE",
            "priority": 0,
            "legal": True,
        },
        {
            "rule_id": "pref_vegetarian",
            "description": "respect declared vegetarian preference",
            "condition": {"op": "trait_exists", "trait": "vegetarian"},
            "target": {"op": "has_tag", "tag": "animal_derived"},
            "action": "EXCLUDE",
            "priority": 10,
        },
        {
            "rule_id": "pref_low_sugar",
            "description": "respect declared low-sugar preference",
            "condition": {"op": "trait_exists", "trait": "low_sugar"},
            "target": {"op": "has_tag", "tag": "high_sugar"},
            "action": "EXCLUDE",
            "priority": 10,
        },
    ]


def push_rules_raw(band_prefix: str, label: str) -> list[dict]:
    """Graded BOOST rules over percentile band tags; steep enough that the
    band order dominates the base score."""
    return [
        {
            "rule_id": f"push_{band_prefix}_{d:03d}",
            "description": f"planted {label} push, percentile band {d}",
            "condition": {"op": "true"},
            "target": {"op": "has_tag", "tag": f"{band_prefix}_{d}"},
            "action": "BOOST",
            "multiplier": 2.0 ** d,
            "disclosure_text": f"Featured placement ({label} tier {d})",
            "priority": 50,
        }
        for d in range(1, N_BANDS)
    ]


def build_reference_system(
    shop: SyntheticShop,
    protective_rules: bool = True,
) -> tuple[Callable[[UserProfile], list[FrameResult]], str]:
    """Train the built-in engine on the shop and wrap it behind the audit's
    frame-serving contract.  Planted push switches on the shop spec inject
    the corresponding BOOST rules."""
    registry = default_registry()
    matrices = build_interaction_matrices(shop.log, registry, as_of=BASE_TS)
    model = train_indicators(matrices, "purchase", k_max=50, min_llr=0.0, build_timestamp=BASE_TS)
    prior = popularity_prior(shop.log, "purchase")

    raw_rules: list[dict] = []
    if protective_rules:
        raw_rules += protective_rules_raw()
    if shop.spec.margin_boost:
        raw_rules += push_rules_raw("margin_band", "margin")
    if shop.spec.stock_boost:
        raw_rules += push_rules_raw("stock_band", "stock")
    rules = compile_rules(raw_rules)

    blend = BlendConfig(alpha=1.0, beta=0.0, gamma=0.05)
    frames = {
        "recommended_for_you": FrameConfig(
            frame_id="recommended_for_you",
            title="Recommended for you",
            algorithm=FrameAlgorithm.PERSONAL_HISTORY,
            blend=blend,
            max_items=10,
        ),
        "others_also_bought": FrameConfig(
            frame_id="others_also_bought",
            title="Others also bought",
            algorithm=FrameAlgorithm.POPULATION_COOCCURRENCE,
            blend=blend,
            max_items=10,
        ),
    }
    snapshot = EngineSnapshot(
        model=model,
        catalog=shop.catalog,
        rules=rules,
        prior=prior,
        registry=registry,
        weights=WeightConfig(),
        frames=frames,
    )

    events_by_user: dict[str, list[Event]] = {}
    for e in shop.log:
        events_by_user.setdefault(e.user_id, []).append(e)
    last_purchase: dict[str, str] = {}
    for e in shop.log:
        if e.kind == "purchase" and e.item_id is not None:
            last_purchase[e.user_id] = e.item_id  # log order; later events win

    def serve(user: UserProfile) -> list[FrameResult]:
        view = UserView(profile=user, events=tuple(events_by_user.get(user.user_id, ())))
        results = [
            assemble_frame(frames["recommended_for_you"], view, {}, snapshot, now=BASE_TS)
        ]
        ctx = {}
        anchor = last_purchase.get(user.user_id)
        if anchor is not None:
            ctx = {"item_id": anchor}
        results.append(
            assemble_frame(frames["others_also_bought"], view, ctx, snapshot, now=BASE_TS)
        )
        return results

    config_payload = json.dumps(
        {
            "model": model.config_hash,
            "rules": sorted(r.rule_id for r in rules),
            "protective": protective_rules,
            "blend": [blend.alpha, blend.beta, blend.gamma],
        },
        sort_keys=True,
    )
    config_hash = hashlib.sha256(config_payload.encode()).hexdigest()[:16]
    return serve, config_hash
