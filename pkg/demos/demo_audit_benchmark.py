"""Walkthrough: the ethical audit benchmark on a seeded synthetic shop.

Runs the same audit four times: on a clean engine, with a planted high-margin
boost, with a planted stock push, and with stereotype-correlated behavior.
Each planted problem flips exactly one check.
"""

from clearrec import SyntheticShopSpec, build_reference_system, run_audit

BASE = dict(seed=7, n_users=300, n_items=120, n_events=9000)

SCENARIOS = [
    ("clean engine, protective rules on", SyntheticShopSpec(**BASE), True),
    ("planted high-margin boost", SyntheticShopSpec(**BASE, margin_boost=True), True),
    ("planted stock push", SyntheticShopSpec(**BASE, stock_boost=True), True),
    ("stereotype-correlated behavior", SyntheticShopSpec(**BASE, stereotype_correlation=True), True),
    ("protective rules disabled", SyntheticShopSpec(**BASE), False),
]

for title, spec, protective in SCENARIOS:
    report = run_audit(
        lambda shop: build_reference_system(shop, protective_rules=protective), spec
    )
    print(f"== {title} ==")
    print(report.summary())
    print()
