"""Walkthrough: from raw events to CCO indicators to scored recommendations.

Builds a tiny purchase log, trains the indicator model, and shows how each
recommendation decomposes into per-indicator LLR contributions.
"""

from clearrec import (
    Event,
    EventLog,
    WeightConfig,
    build_interaction_matrices,
    default_registry,
    score_cco,
    train_indicators,
)

# Two shoppers buy espresso beans together with a grinder; a third buys tea.
log = EventLog([
    Event("e1", "ana", "purchase", 100, item_id="espresso_beans"),
    Event("e2", "ana", "purchase", 110, item_id="burr_grinder"),
    Event("e3", "ben", "purchase", 120, item_id="espresso_beans"),
    Event("e4", "ben", "purchase", 130, item_id="burr_grinder"),
    Event("e5", "cam", "purchase", 140, item_id="green_tea"),
    Event("e6", "cam", "view_item", 150, item_id="espresso_beans"),
])

registry = default_registry()
matrices = build_interaction_matrices(log, registry)
model = train_indicators(matrices, primary_kind="purchase")

print("== indicators selected per target item ==")
for target in sorted(model.indicators):
    for ind in model.indicators[target]:
        print(f"  {target:16s} <- {ind.source_id:16s} kind={ind.source_kind:10s} llr={ind.llr:.4f}")

# A new shopper just bought a grinder; what does the model suggest, and why?
history = [Event("h1", "dee", "purchase", 200, item_id="burr_grinder")]
print("\n== scores for a shopper whose history is {burr_grinder} ==")
for scored in score_cco(history, model, WeightConfig(), registry):
    parts = ", ".join(
        f"{c.source_id}/{c.source_kind} contributes {c.amount:.3f}"
        for c in scored.contributions
    )
    print(f"  {scored.item_id:16s} score={scored.score:.4f}  because: {parts}")
