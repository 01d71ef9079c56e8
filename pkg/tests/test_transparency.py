import json
import random

import pytest

from clearrec.blending import BlendConfig
from clearrec.catalog import ItemProfile
from clearrec.cco import build_interaction_matrices, train_indicators
from clearrec.errors import (
    ModelNotLoadedError,
    NoPriceDataError,
    UnknownItemError,
)
from clearrec.events import Event, EventLog, WeightConfig, default_registry
from clearrec.blending import popularity_prior
from clearrec.rules import UserProfile, compile_rules
from clearrec.transparency import (
    ITEM_POPULARITY,
    POPULATION_CORRELATIONS,
    PROFILE_TRAITS,
    PURCHASE_HISTORY,
    SHOPPING_CONTEXT,
    VIEWS,
    EngineSnapshot,
    FrameAlgorithm,
    FrameConfig,
    PricePoint,
    ScarcityClaim,
    STOCK_LEFT,
    VIEWERS_NOW,
    UserView,
    assemble_frame,
    declared_data_categories,
    lowest_price_reference,
    price_points_from_jsonl,
    price_point_to_json,
    validate_scarcity_claim,
)

NOW = 1_700_000_000
DAY = 86400


def make_snapshot(rules=None):
    registry = default_registry()
    log = EventLog([
        Event("e1", "u1", "purchase", NOW - 10, item_id="A"),
        Event("e2", "u1", "purchase", NOW - 9, item_id="B"),
        Event("e3", "u2", "purchase", NOW - 8, item_id="A"),
        Event("e4", "u2", "purchase", NOW - 7, item_id="B"),
        Event("e5", "u3", "purchase", NOW - 6, item_id="C"),
        Event("e6", "u3", "view_item", NOW - 5, item_id="A"),
    ])
    catalog = {
        "A": ItemProfile("A", categories=frozenset({"snacks"}), tags=frozenset({"vegan"})),
        "B": ItemProfile("B", categories=frozenset({"snacks"})),
        "C": ItemProfile("C", categories=frozenset({"drinks"}), tags=frozenset({"high_sugar"})),
    }
    matrices = build_interaction_matrices(log, registry)
    model = train_indicators(matrices, "purchase")
    return EngineSnapshot(
        model=model,
        catalog=catalog,
        rules=compile_rules(rules or []),
        prior=popularity_prior(log, "purchase"),
        registry=registry,
        weights=WeightConfig(),
    ), log


def frame(algorithm, **kw):
    return FrameConfig(frame_id="f1", title="Frame", algorithm=algorithm, **kw)


def user_view(user_id="u1", events=(), **kw):
    return UserView(profile=UserProfile(user_id), events=tuple(events), **kw)


class TestAssembleFrame:
    def test_population_frame_uses_correlations(self):
        snapshot, _ = make_snapshot()
        cfg = frame(FrameAlgorithm.POPULATION_COOCCURRENCE)
        result = assemble_frame(cfg, user_view(), {"item_id": "A"}, snapshot, NOW)
        assert any(i.item_id == "B" for i in result.items)
        assert POPULATION_CORRELATIONS in result.disclosure.data_categories
        assert not result.disclosure.personalization

    def test_opted_out_user_gets_popularity_fallback(self):
        snapshot, log = make_snapshot()
        cfg = frame(FrameAlgorithm.PERSONAL_HISTORY)
        view = user_view("u1", log.user_events("u1"), opted_out=True)
        result = assemble_frame(cfg, view, {}, snapshot, NOW)
        assert result.disclosure.algorithm == "POPULARITY_FALLBACK"
        assert not result.disclosure.personalization
        assert result.disclosure.data_categories == (ITEM_POPULARITY,)
        assert result.items  # fallback still serves something

    def test_empty_cart_yields_empty_items_with_disclosure(self):
        snapshot, _ = make_snapshot()
        cfg = frame(FrameAlgorithm.CART_CONTEXT)
        result = assemble_frame(cfg, user_view(), {"cart": ""}, snapshot, NOW)
        assert result.items == ()
        assert result.disclosure.parameters  # non-empty disclosure even with no items
        assert result.disclosure.frame_id == "f1"

    def test_personal_frame_requires_model(self):
        snapshot, log = make_snapshot()
        snapshot.model = None
        with pytest.raises(ModelNotLoadedError):
            assemble_frame(frame(FrameAlgorithm.PERSONAL_HISTORY),
                           user_view("u1", log.user_events("u1")), {}, snapshot, NOW)

    def test_truncates_to_max_items(self):
        snapshot, _ = make_snapshot()
        cfg = frame(FrameAlgorithm.POPULARITY_FALLBACK, max_items=1)
        result = assemble_frame(cfg, user_view(), {}, snapshot, NOW)
        assert len(result.items) == 1

    def test_boosted_item_marked_sponsored(self):
        boost = {
            "rule_id": "push_snacks",
            "condition": {"op": "true"},
            "target": {"op": "in_category", "category": "drinks"},
            "action": "BOOST",
            "multiplier": 100.0,
            "disclosure_text": "Sponsored by the drinks aisle",
        }
        snapshot, _ = make_snapshot(rules=[boost])
        result = assemble_frame(frame(FrameAlgorithm.POPULARITY_FALLBACK),
                                user_view(), {}, snapshot, NOW)
        top = result.items[0]
        assert top.item_id == "C" and top.sponsored
        assert "Sponsored by the drinks aisle" in top.sponsor_labels
        boosts = result.disclosure.rule_effects["boosts"]
        assert boosts and boosts[0]["disclosure_text"] == "Sponsored by the drinks aisle"

    def test_zero_applied_rules_summary_is_none(self):
        snapshot, _ = make_snapshot()
        result = assemble_frame(frame(FrameAlgorithm.POPULARITY_FALLBACK),
                                user_view(), {}, snapshot, NOW)
        assert result.disclosure.rule_effects["summary"] == "none"

    def test_single_component_blend_lists_single_parameter(self):
        snapshot, log = make_snapshot()
        cfg = frame(FrameAlgorithm.PERSONAL_HISTORY, blend=BlendConfig(1.0, 0.0, 0.0))
        view = user_view("u3", log.user_events("u3"))
        result = assemble_frame(cfg, view, {}, snapshot, NOW)
        assert [name for name, _ in result.disclosure.parameters] == [
            "population co-occurrence (CCO)"
        ]

    def test_parameters_ordered_by_influence(self):
        snapshot, log = make_snapshot()
        cfg = frame(FrameAlgorithm.PERSONAL_HISTORY, blend=BlendConfig(0.01, 0.0, 5.0))
        view = user_view("u3", log.user_events("u3"))
        result = assemble_frame(cfg, view, {}, snapshot, NOW)
        names = [name for name, _ in result.disclosure.parameters]
        assert names[0] == "item popularity"

    def test_disclosure_json_and_text_agree(self):
        snapshot, _ = make_snapshot()
        result = assemble_frame(frame(FrameAlgorithm.POPULARITY_FALLBACK),
                                user_view(), {}, snapshot, NOW)
        doc = json.loads(result.disclosure.to_json())
        text = result.disclosure.render_text()
        assert doc["algorithm"] in text
        for cat in doc["data_categories"]:
            assert cat in text


class TestDisclosureHonesty:
    def test_random_frame_configs_trace_equality(self):
        # the assertion itself lives inside assemble_frame (DisclosureMismatch);
        # here we check the served disclosure equals the independent declaration
        snapshot, log = make_snapshot()
        rng = random.Random(42)
        algorithms = list(FrameAlgorithm)
        kind_pool = ["purchase", "view_item", "add_to_cart", "dwell",
                     "bought_in_category", "user_trait", "view_category"]
        for n in range(100):
            algorithm = rng.choice(algorithms)
            kinds = tuple(sorted(rng.sample(kind_pool, rng.randint(1, len(kind_pool)))))
            blend = BlendConfig(alpha=rng.choice([0.0, 0.5, 1.0]) or 0.1,
                                beta=rng.choice([0.0, 0.25]),
                                gamma=rng.choice([0.0, 0.05]))
            cfg = FrameConfig(frame_id=f"rf{n}", title="t", algorithm=algorithm,
                              signal_kinds=kinds, blend=blend)
            user = rng.choice(["u1", "u2", "u3", "unknown"])
            opted_out = rng.random() < 0.25
            context = rng.choice([{}, {"item_id": "A"}, {"cart": "A,B"}, {"category": "snacks"}])
            view = user_view(user, log.user_events(user), opted_out=opted_out)
            result = assemble_frame(cfg, view, context, snapshot, NOW)
            effective = FrameAlgorithm(result.disclosure.algorithm)
            declared = declared_data_categories(cfg, effective, snapshot.registry)
            assert set(result.disclosure.data_categories) == declared

    def test_every_frame_has_nonempty_disclosure(self):
        snapshot, log = make_snapshot()
        for algorithm in FrameAlgorithm:
            result = assemble_frame(frame(algorithm), user_view("u1", log.user_events("u1")),
                                    {"item_id": "A", "cart": "A", "category": "snacks"},
                                    snapshot, NOW)
            assert result.disclosure.data_categories
            assert result.disclosure.parameters


class TestLowestPriceReference:
    def test_brute_force_example(self):
        points = [PricePoint("x", NOW - 200 * DAY, 10.00),
                  PricePoint("x", NOW - 100 * DAY, 8.00),
                  PricePoint("x", NOW - 10 * DAY, 9.00)]
        assert lowest_price_reference(points, NOW) == 8.00

    def test_singleton(self):
        assert lowest_price_reference([PricePoint("x", NOW - DAY, 3.5)], NOW) == 3.5

    def test_no_data_in_window(self):
        with pytest.raises(NoPriceDataError):
            lowest_price_reference([PricePoint("x", NOW - 181 * DAY, 2.0)], NOW)

    def test_random_histories_match_brute_force(self):
        rng = random.Random(99)
        for _ in range(1000):
            points = [PricePoint("x", NOW - rng.randint(0, 400) * DAY, rng.uniform(0.5, 50))
                      for _ in range(rng.randint(1, 12))]
            in_window = [p.price for p in points if NOW - p.timestamp <= 180 * DAY]
            if not in_window:
                with pytest.raises(NoPriceDataError):
                    lowest_price_reference(points, NOW)
            else:
                assert lowest_price_reference(points, NOW) == min(in_window)

    def test_price_point_jsonl_round_trip(self):
        p = PricePoint("x", NOW - (NOW % DAY), 12.34)
        restored = price_points_from_jsonl(price_point_to_json(p) + "\n")
        assert restored == [p]


class TestScarcityClaims:
    ITEM = ItemProfile("x", stock=1)

    def test_true_stock_claim(self):
        assert validate_scarcity_claim(ScarcityClaim(STOCK_LEFT, 1), self.ITEM).valid

    def test_false_urgency_stock_claim(self):
        check = validate_scarcity_claim(ScarcityClaim(STOCK_LEFT, 1), ItemProfile("x", stock=500))
        assert not check.valid and check.reason == "false urgency"

    def test_viewers_claim_without_telemetry_unverifiable(self):
        check = validate_scarcity_claim(ScarcityClaim(VIEWERS_NOW, 20), self.ITEM)
        assert not check.valid and check.reason == "unverifiable"

    def test_viewers_claim_with_matching_telemetry(self):
        check = validate_scarcity_claim(ScarcityClaim(VIEWERS_NOW, 20), self.ITEM,
                                        telemetry={"x": 20})
        assert check.valid

    def test_unknown_item(self):
        with pytest.raises(UnknownItemError):
            validate_scarcity_claim(ScarcityClaim(STOCK_LEFT, 1), None)
