import json
import random

import numpy as np
import pytest
from scipy.stats import spearmanr

from clearrec.audit import (
    BASE_TS,
    SyntheticShop,
    SyntheticShopSpec,
    Thresholds,
    attribute_rank_correlation,
    build_reference_system,
    compute_checks,
    exposure_bias,
    generate_synthetic_shop,
    minor_alcohol_slots,
    preference_violation_rate,
    run_audit,
)
from clearrec.catalog import ItemProfile
from clearrec.errors import InvalidSpecError, SingleGroupError
from clearrec.rules import RuleTrace, UserProfile
from clearrec.transparency import Disclosure, FrameItem, FrameResult

SMALL = SyntheticShopSpec(seed=7, n_users=60, n_items=40, n_events=1200)


def make_frame(item_ids, frame_id="f1"):
    disclosure = Disclosure(frame_id=frame_id, algorithm="POPULARITY_FALLBACK",
                            parameters=(("item popularity", 1.0),),
                            data_categories=("item_popularity",),
                            rule_effects={"summary": "none", "boosts": [], "exclusions": []},
                            personalization=False, generated_at=BASE_TS)
    items = tuple(FrameItem(item_id=i, score=float(len(item_ids) - n), sponsored=False)
                  for n, i in enumerate(item_ids))
    return FrameResult(frame_id=frame_id, title="t", items=items,
                       disclosure=disclosure, rule_trace=RuleTrace())


class TestGenerator:
    def test_deterministic_byte_identity(self):
        a = generate_synthetic_shop(SMALL)
        b = generate_synthetic_shop(SMALL)
        assert a.to_bytes() == b.to_bytes()

    def test_seed_changes_dataset(self):
        a = generate_synthetic_shop(SMALL)
        b = generate_synthetic_shop(SyntheticShopSpec(seed=8, n_users=60, n_items=40, n_events=1200))
        assert a.to_bytes() != b.to_bytes()

    def test_exact_cohort_counts(self):
        shop = generate_synthetic_shop(SMALL)
        vegetarians = [u for u in shop.users if "vegetarian" in u.traits]
        minors = [u for u in shop.users if u.age is not None and u.age < 18]
        low_sugar = [u for u in shop.users if "low_sugar" in u.traits]
        assert len(vegetarians) == round(0.2 * 60)
        assert len(minors) == round(0.1 * 60)
        assert len(low_sugar) == round(0.15 * 60)

    def test_minors_never_buy_alcohol(self):
        shop = generate_synthetic_shop(SMALL)
        minors = {u.user_id for u in shop.users if u.age is not None and u.age < 18}
        for e in shop.log:
            if e.user_id in minors and e.item_id is not None:
                assert "contains_alcohol" not in shop.catalog[e.item_id].tags

    def test_event_count_and_sizes(self):
        shop = generate_synthetic_shop(SMALL)
        behavioral = [e for e in shop.log if e.kind != "user_trait"]
        assert len(behavioral) == SMALL.n_events
        assert len(shop.catalog) == SMALL.n_items
        assert len(shop.users) == SMALL.n_users

    def test_band_tags_present(self):
        shop = generate_synthetic_shop(SMALL)
        for item in shop.catalog.values():
            assert any(t.startswith("margin_band_") for t in item.tags)
            assert any(t.startswith("stock_band_") for t in item.tags)

    def test_invalid_spec_rejected(self):
        with pytest.raises(InvalidSpecError):
            generate_synthetic_shop(SyntheticShopSpec(n_users=0))
        with pytest.raises(InvalidSpecError):
            generate_synthetic_shop(SyntheticShopSpec(fraction_minors=1.5))

    def test_stereotype_switch_only_changes_events(self):
        plain = generate_synthetic_shop(SMALL)
        stereo = generate_synthetic_shop(
            SyntheticShopSpec(seed=7, n_users=60, n_items=40, n_events=1200,
                              stereotype_correlation=True))
        # catalog and user cohort are identical; only behavior shifts
        assert {u.user_id: u.attributes for u in plain.users} == \
               {u.user_id: u.attributes for u in stereo.users}
        assert plain.catalog == stereo.catalog

    def test_margin_stock_rank_orthogonal(self):
        shop = generate_synthetic_shop(SMALL)
        margins = [i.margin for i in shop.catalog.values()]
        stocks = [i.stock for i in shop.catalog.values()]
        assert abs(spearmanr(margins, stocks).statistic) < 0.15


class TestRankCorrelation:
    CATALOG = {
        f"i{n}": ItemProfile(f"i{n}", margin=m, stock=n + 1, price=1.0)
        for n, m in enumerate([0.9, 0.7, 0.5, 0.3, 0.1])
    }

    def test_descending_margin_is_plus_one(self):
        frame = make_frame(["i0", "i1", "i2", "i3", "i4"])
        corr = attribute_rank_correlation([frame], self.CATALOG, "MARGIN")
        assert corr.rho == pytest.approx(1.0)

    def test_ascending_margin_is_minus_one(self):
        frame = make_frame(["i4", "i3", "i2", "i1", "i0"])
        corr = attribute_rank_correlation([frame], self.CATALOG, "MARGIN")
        assert corr.rho == pytest.approx(-1.0)

    def test_constant_attribute_flagged_zero(self):
        catalog = {f"i{n}": ItemProfile(f"i{n}", margin=0.5) for n in range(3)}
        corr = attribute_rank_correlation([make_frame(["i0", "i1", "i2"])], catalog, "MARGIN")
        assert corr.rho == 0.0 and corr.constant_flag

    def test_random_frames_near_zero(self):
        # oracle: brute-force Spearman on each seeded random ranking
        rng = random.Random(1234)
        catalog = {f"i{n}": ItemProfile(f"i{n}", margin=rng.random()) for n in range(50)}
        frames = []
        expected = []
        for _ in range(1000):
            ids = rng.sample(sorted(catalog), 10)
            frames.append(make_frame(ids))
            values = [catalog[i].margin for i in ids]
            expected.append(-spearmanr(range(len(ids)), values).statistic)
        corr = attribute_rank_correlation(frames, catalog, "MARGIN")
        assert abs(corr.rho) < 0.1
        assert corr.rho == pytest.approx(float(np.mean(expected)), abs=1e-12)

    def test_unknown_attribute_rejected(self):
        with pytest.raises(ValueError):
            attribute_rank_correlation([], self.CATALOG, "COLOR")

    def test_no_frames_constant_flag(self):
        corr = attribute_rank_correlation([], self.CATALOG, "STOCK")
        assert corr.rho == 0.0 and corr.n_frames == 0 and corr.constant_flag


class TestViolationMetrics:
    CATALOG = {
        "steak": ItemProfile("steak", tags=frozenset({"animal_derived"})),
        "cola": ItemProfile("cola", tags=frozenset({"high_sugar"})),
        "beer": ItemProfile("beer", tags=frozenset({"contains_alcohol"})),
        "tofu": ItemProfile("tofu"),
    }
    PROFILES = {
        "veg": UserProfile("veg", age=30, traits={"vegetarian": "true"}),
        "kid": UserProfile("kid", age=15),
        "anon": UserProfile("anon", age=None),
        "adult": UserProfile("adult", age=40),
    }

    def test_violation_rate_counts_slots(self):
        frames = {"veg": [make_frame(["steak", "tofu"])], "adult": [make_frame(["steak", "cola"])]}
        report = preference_violation_rate(frames, self.PROFILES, self.CATALOG)
        assert report.total_slots == 4
        assert report.violations == 1
        assert report.rate == pytest.approx(0.25)
        assert report.by_constraint["vegetarian"] == 1
        assert report.examples == ("veg/f1/steak (vegetarian)",)

    def test_no_slots_zero_rate(self):
        report = preference_violation_rate({}, self.PROFILES, self.CATALOG)
        assert report.rate == 0.0

    def test_minor_alcohol_counts_unknown_age_too(self):
        frames = {"kid": [make_frame(["beer"])], "anon": [make_frame(["beer"])],
                  "adult": [make_frame(["beer"])]}
        count, examples = minor_alcohol_slots(frames, self.PROFILES, self.CATALOG)
        assert count == 2
        assert set(examples) == {"kid/f1/beer", "anon/f1/beer"}


class TestExposureBias:
    CATALOG = {
        "a": ItemProfile("a", categories=frozenset({"bakery"})),
        "b": ItemProfile("b", categories=frozenset({"meat"})),
    }

    def _profiles(self):
        return {
            "u1": UserProfile("u1", attributes={"gender": "female"}),
            "u2": UserProfile("u2", attributes={"gender": "male"}),
        }

    def test_identical_distributions_zero(self):
        frames = {"u1": [make_frame(["a", "b"])], "u2": [make_frame(["a", "b"])]}
        bias = exposure_bias(frames, self._profiles(), self.CATALOG, "gender")
        assert bias.parity_diff == 0.0
        assert bias.js_divergence == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_distributions_maximal(self):
        frames = {"u1": [make_frame(["a", "a"])], "u2": [make_frame(["b", "b"])]}
        bias = exposure_bias(frames, self._profiles(), self.CATALOG, "gender")
        assert bias.parity_diff == pytest.approx(1.0)
        assert bias.js_divergence == pytest.approx(1.0)  # base-2 JS divergence is bounded by 1

    def test_label_permutation_invariance(self):
        frames = {"u1": [make_frame(["a", "a", "b"])], "u2": [make_frame(["b"])]}
        bias = exposure_bias(frames, self._profiles(), self.CATALOG, "gender")
        swapped = {
            "u1": UserProfile("u1", attributes={"gender": "male"}),
            "u2": UserProfile("u2", attributes={"gender": "female"}),
        }
        bias2 = exposure_bias(frames, swapped, self.CATALOG, "gender")
        assert bias.parity_diff == bias2.parity_diff
        assert bias.js_divergence == bias2.js_divergence

    def test_single_group_rejected(self):
        frames = {"u1": [make_frame(["a"])]}
        with pytest.raises(SingleGroupError):
            exposure_bias(frames, self._profiles(), self.CATALOG, "gender")


AUDIT_SPEC = dict(seed=7, n_users=300, n_items=120, n_events=9000)


def reference_factory(protective=True):
    def factory(shop: SyntheticShop):
        return build_reference_system(shop, protective_rules=protective)
    return factory


@pytest.fixture(scope="module")
def scenario_reports():
    reports = {}
    for name, spec, protective in [
        ("clean", SyntheticShopSpec(**AUDIT_SPEC), True),
        ("margin", SyntheticShopSpec(**AUDIT_SPEC, margin_boost=True), True),
        ("stock", SyntheticShopSpec(**AUDIT_SPEC, stock_boost=True), True),
        ("stereo", SyntheticShopSpec(**AUDIT_SPEC, stereotype_correlation=True), True),
        ("unprotected", SyntheticShopSpec(**AUDIT_SPEC), False),
    ]:
        reports[name] = run_audit(reference_factory(protective), spec)
    return reports


class TestDetectors:
    def test_clean_run_passes_everything(self, scenario_reports):
        report = scenario_reports["clean"]
        assert report.overall_pass
        assert report.failing_checks() == []
        violations = next(c for c in report.checks if c.name == "preference_violations")
        assert violations.metrics["violation_rate"] == 0.0
        alcohol = next(c for c in report.checks if c.name == "minor_alcohol")
        assert alcohol.metrics["alcohol_slots"] == 0.0
        for name in ("margin_push", "stock_push"):
            check = next(c for c in report.checks if c.name == name)
            assert abs(check.metrics["spearman_rho"]) < 0.2

    def test_margin_boost_flips_only_margin_check(self, scenario_reports):
        report = scenario_reports["margin"]
        assert report.failing_checks() == ["margin_push"]
        rho = next(c for c in report.checks if c.name == "margin_push").metrics["spearman_rho"]
        assert rho > 0.5

    def test_stock_boost_flips_only_stock_check(self, scenario_reports):
        report = scenario_reports["stock"]
        assert report.failing_checks() == ["stock_push"]
        rho = next(c for c in report.checks if c.name == "stock_push").metrics["spearman_rho"]
        assert rho > 0.5

    def test_stereotype_flips_only_exposure_check(self, scenario_reports):
        assert scenario_reports["stereo"].failing_checks() == ["exposure_bias"]

    def test_dropping_protective_rules_flips_safety_checks(self, scenario_reports):
        report = scenario_reports["unprotected"]
        assert set(report.failing_checks()) == {"preference_violations", "minor_alcohol"}
        violations = next(c for c in report.checks if c.name == "preference_violations")
        assert violations.affected_examples  # report names concrete slots

    def test_reports_carry_config_hash_and_seed(self, scenario_reports):
        clean, unprotected = scenario_reports["clean"], scenario_reports["unprotected"]
        assert clean.dataset_seed == 7
        assert clean.config_hash != unprotected.config_hash


class TestReport:
    def test_json_is_deterministic_and_parseable(self):
        spec = SyntheticShopSpec(**AUDIT_SPEC)
        a = run_audit(reference_factory(), spec)
        b = run_audit(reference_factory(), spec)
        assert a.to_json() == b.to_json()
        doc = json.loads(a.to_json())
        assert doc["overall_pass"] is True
        assert [c["name"] for c in doc["checks"]] == [
            "preference_violations", "minor_alcohol", "exposure_bias",
            "margin_push", "stock_push",
        ]

    def test_summary_lines_per_check(self, scenario_reports):
        summary = scenario_reports["margin"].summary()
        lines = summary.splitlines()
        assert sum(1 for ln in lines if ln.startswith("[PASS]") or ln.startswith("[FAIL]")) == 5
        assert lines[-1] == "verdict: FAIL"
        assert "[FAIL] margin_push" in summary

    def test_thresholds_recorded(self):
        thresholds = Thresholds(max_parity_diff=0.3)
        report = run_audit(reference_factory(), SyntheticShopSpec(**AUDIT_SPEC), thresholds)
        assert json.loads(report.to_json())["thresholds"]["max_parity_diff"] == 0.3

    def test_check_aggregation_order_independent(self, scenario_reports):
        # metrics must not depend on user iteration order
        spec = SyntheticShopSpec(seed=3, n_users=80, n_items=50, n_events=2000)
        shop = generate_synthetic_shop(spec)
        serve, _ = build_reference_system(shop)
        profiles = {u.user_id: u for u in shop.users}
        frames = {u.user_id: serve(u) for u in shop.users}
        shuffled_ids = list(frames)
        random.Random(5).shuffle(shuffled_ids)
        shuffled = {uid: frames[uid] for uid in shuffled_ids}
        a = compute_checks(frames, profiles, shop.catalog, Thresholds())
        b = compute_checks(shuffled, profiles, shop.catalog, Thresholds())
        assert [(c.name, dict(c.metrics)) for c in a] == [(c.name, dict(c.metrics)) for c in b]
