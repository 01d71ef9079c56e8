"""Walkthrough: business rules, frame assembly, and consumer-facing disclosure.

Assembles a personalized frame under a legal exclusion and a paid boost, then
prints the machine-readable and human-readable disclosures, a reference-price
check, and a scarcity-claim validation.
"""

import json

from clearrec import (
    Event,
    EventLog,
    ItemProfile,
    PricePoint,
    ScarcityClaim,
    STOCK_LEFT,
    UserProfile,
    UserView,
    WeightConfig,
    build_interaction_matrices,
    compile_rules,
    default_registry,
    lowest_price_reference,
    popularity_prior,
    train_indicators,
    validate_scarcity_claim,
)
from clearrec.transparency import (
    EngineSnapshot,
    FrameAlgorithm,
    FrameConfig,
    assemble_frame,
)

NOW = 1_700_000_000

catalog = {
    "craft_beer": ItemProfile("craft_beer", categories=frozenset({"drinks"}),
                              tags=frozenset({"contains_alcohol"}), price=4.5, stock=1),
    "sparkling_water": ItemProfile("sparkling_water", categories=frozenset({"drinks"}),
                                   price=1.2, stock=240),
    "pretzels": ItemProfile("pretzels", categories=frozenset({"snacks"}), price=2.0, stock=55),
}

log = EventLog([
    Event("e1", "u1", "purchase", NOW - 40, item_id="pretzels"),
    Event("e2", "u1", "purchase", NOW - 30, item_id="craft_beer"),
    Event("e3", "u2", "purchase", NOW - 20, item_id="pretzels"),
    Event("e4", "u2", "purchase", NOW - 10, item_id="craft_beer"),
    Event("e5", "u2", "purchase", NOW - 5, item_id="sparkling_water"),
])

rules = compile_rules([
    {
        "rule_id": "legal_alcohol_minors",
        "condition": {"op": "age_lt", "n": 18},
        "target": {"op": "has_tag", "tag": "contains_alcohol"},
        "action": "EXCLUDE",
        "legal": True,
    },
    {
        "rule_id": "water_campaign",
        "condition": {"op": "true"},
        "target": {"op": "in_category", "category": "drinks"},
        "action": "BOOST",
        "multiplier": 3.0,
        "disclosure_text": "Paid placement: hydration campaign",
    },
])

registry = default_registry()
snapshot = EngineSnapshot(
    model=train_indicators(build_interaction_matrices(log, registry), "purchase"),
    catalog=catalog,
    rules=rules,
    prior=popularity_prior(log, "purchase"),
    registry=registry,
    weights=WeightConfig(),
)

frame = FrameConfig(frame_id="for_you", title="Recommended for you",
                    algorithm=FrameAlgorithm.PERSONAL_HISTORY)

# A 16-year-old with pretzels in their history: the beer indicator is strong,
# but the legal rule removes it before the frame is served.
minor = UserView(profile=UserProfile("kid", age=16),
                 events=tuple(log.user_events("u1")))
result = assemble_frame(frame, minor, {}, snapshot, now=NOW)

print("== served items ==")
for item in result.items:
    label = " [sponsored: " + "; ".join(item.sponsor_labels) + "]" if item.sponsored else ""
    print(f"  {item.item_id:16s} score={item.score:.4f}{label}")

print("\n== machine-readable disclosure ==")
print(json.dumps(json.loads(result.disclosure.to_json()), indent=2, sort_keys=True))

print("\n== human-readable disclosure ==")
print(result.disclosure.render_text())

print("\n== reference price (lowest in the 180-day window) ==")
history = [
    PricePoint("sparkling_water", NOW - 200 * 86400, 1.00),  # outside the window
    PricePoint("sparkling_water", NOW - 90 * 86400, 0.90),
    PricePoint("sparkling_water", NOW - 5 * 86400, 1.20),
]
print(f"  sparkling_water: {lowest_price_reference(history, NOW):.2f}")

print("\n== scarcity claims ==")
for item_id, claimed in (("craft_beer", 1), ("sparkling_water", 1)):
    check = validate_scarcity_claim(ScarcityClaim(STOCK_LEFT, claimed), catalog[item_id])
    verdict = "valid" if check.valid else f"invalid ({check.reason})"
    print(f"  'only {claimed} left' on {item_id}: {verdict}")
