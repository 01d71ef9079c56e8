"""Declarative business-rule engine.

Rules filter (EXCLUDE) or re-weight (BOOST) candidate lists under user-group,
temporal, and legal policies.  Every change is recorded in a trace so the
transparency and audit layers can reconstruct and inspect exactly what a rule
set did to a frame.  Sponsored placement (BOOST) requires disclosure text.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from .blending import Candidate
from .catalog import ItemProfile
from .errors import (
    DuplicateRuleIdError,
    MalformedPredicateError,
    MissingContextKeyError,
    MissingDisclosureError,
)
from .events import _iso_to_ts

ALL_FRAMES = "ALL"

EXCLUDE = "EXCLUDE"
BOOST = "BOOST"


@dataclass(frozen=True)
class UserProfile:
    """The user attributes visible to rule conditions and audit metrics."""

    user_id: str
    age: Optional[int] = None
    traits: Mapping[str, str] = field(default_factory=dict)
    attributes: Mapping[str, str] = field(default_factory=dict)


# --- predicate AST -----------------------------------------------------------

_CONDITION_OPS = {
    "and", "or", "not", "true",
    "trait_exists", "trait_equals", "age_lt", "age_gte",
    "context_equals", "time_window",
}
_TARGET_OPS = {"and", "or", "not", "any", "has_tag", "in_category", "seller_is"}


def _compile_node(raw: Any, allowed: set[str], position: str) -> dict:
    if not isinstance(raw, dict) or "op" not in raw:
        raise MalformedPredicateError("predicate node must be an object with an 'op' field", position)
    op = raw["op"]
    if op not in allowed:
        raise MalformedPredicateError(f"unknown predicate op {op!r}", position)
    node = dict(raw)
    if op in ("and", "or"):
        args = raw.get("args")
        if not isinstance(args, list) or not args:
            raise MalformedPredicateError(f"{op!r} needs a non-empty 'args' list", position)
        node["args"] = [_compile_node(a, allowed, f"{position}.args[{i}]") for i, a in enumerate(args)]
    elif op == "not":
        if "arg" not in raw:
            raise MalformedPredicateError("'not' needs an 'arg'", position)
        node["arg"] = _compile_node(raw["arg"], allowed, f"{position}.arg")
    elif op in ("age_lt", "age_gte"):
        if not isinstance(raw.get("n"), (int, float)):
            raise MalformedPredicateError(f"{op!r} needs a numeric 'n'", position)
    elif op == "trait_exists":
        if not raw.get("trait"):
            raise MalformedPredicateError("'trait_exists' needs a 'trait'", position)
    elif op == "trait_equals":
        if not raw.get("trait") or "value" not in raw:
            raise MalformedPredicateError("'trait_equals' needs 'trait' and 'value'", position)
    elif op == "context_equals":
        if not raw.get("key") or "value" not in raw:
            raise MalformedPredicateError("'context_equals' needs 'key' and 'value'", position)
    elif op == "time_window":
        for bound in ("start", "end"):
            try:
                node[bound] = _parse_instant(raw[bound])
            except (KeyError, ValueError, TypeError) as exc:
                raise MalformedPredicateError(f"'time_window' has a bad {bound!r}: {exc}", position)
    elif op == "has_tag":
        if not raw.get("tag"):
            raise MalformedPredicateError("'has_tag' needs a 'tag'", position)
    elif op == "in_category":
        if not raw.get("category"):
            raise MalformedPredicateError("'in_category' needs a 'category'", position)
    elif op == "seller_is":
        if not raw.get("seller"):
            raise MalformedPredicateError("'seller_is' needs a 'seller'", position)
    return node


def _parse_instant(v: Any) -> int:
    if isinstance(v, (int, float)):
        return int(v)
    return _iso_to_ts(str(v))


def eval_condition(
    condition: Mapping[str, Any],
    user: UserProfile,
    context: Mapping[str, str],
    now: int,
) -> bool:
    """Evaluate a compiled condition node.

    Unknown age is treated fail-safe as a minor: 'age >= n' is False and
    'age < n' is True.  Time windows are half-open [start, end).
    """
    op = condition["op"]
    if op == "true":
        return True
    if op == "and":
        return all(eval_condition(a, user, context, now) for a in condition["args"])
    if op == "or":
        return any(eval_condition(a, user, context, now) for a in condition["args"])
    if op == "not":
        return not eval_condition(condition["arg"], user, context, now)
    if op == "trait_exists":
        return condition["trait"] in user.traits
    if op == "trait_equals":
        return user.traits.get(condition["trait"]) == condition["value"]
    if op == "age_lt":
        return user.age is None or user.age < condition["n"]
    if op == "age_gte":
        return user.age is not None and user.age >= condition["n"]
    if op == "context_equals":
        key = condition["key"]
        if key not in context:
            if condition.get("required"):
                raise MissingContextKeyError(f"context key {key!r} is required by a rule condition")
            return False
        return context[key] == condition["value"]
    if op == "time_window":
        return condition["start"] <= now < condition["end"]
    raise MalformedPredicateError(f"unknown condition op {op!r}")


def eval_target(target: Mapping[str, Any], item: ItemProfile) -> bool:
    op = target["op"]
    if op == "any":
        return True
    if op == "and":
        return all(eval_target(a, item) for a in target["args"])
    if op == "or":
        return any(eval_target(a, item) for a in target["args"])
    if op == "not":
        return not eval_target(target["arg"], item)
    if op == "has_tag":
        return target["tag"] in item.tags
    if op == "in_category":
        return target["category"] in item.categories
    if op == "seller_is":
        return target["seller"] == item.seller_id
    raise MalformedPredicateError(f"unknown target op {op!r}")


# --- rules -------------------------------------------------------------------

@dataclass(frozen=True)
class Rule:
    rule_id: str
    description: str
    condition: Mapping[str, Any]
    target: Mapping[str, Any]
    action: str  # EXCLUDE or BOOST
    multiplier: float = 1.0
    disclosure_text: str = ""
    priority: int = 100
    scope: frozenset[str] = frozenset({ALL_FRAMES})
    legal: bool = False  # legal rules apply in a reserved first band

    def applies_to_frame(self, frame_id: Optional[str]) -> bool:
        return ALL_FRAMES in self.scope or (frame_id is not None and frame_id in self.scope)

    def sort_key(self) -> tuple:
        # legal band first; then priority; EXCLUDE before BOOST; then id
        return (0 if self.legal else 1, self.priority, 0 if self.action == EXCLUDE else 1, self.rule_id)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)


def compile_rules(raw: Sequence[Mapping[str, Any]] | str) -> RuleSet:
    """Validate raw rule definitions (a list of objects, or a JSON document
    with a top-level ``rules`` list) into a priority-sorted RuleSet."""
    if isinstance(raw, str):
        doc = json.loads(raw)
        raw = doc["rules"] if isinstance(doc, dict) else doc
    rules: list[Rule] = []
    seen: set[str] = set()
    for i, r in enumerate(raw):
        position = f"rules[{i}]"
        rule_id = r.get("rule_id")
        if not rule_id:
            raise MalformedPredicateError("missing rule_id", position)
        position = f"rules[{i}] ({rule_id})"
        if rule_id in seen:
            raise DuplicateRuleIdError(f"duplicate rule_id {rule_id!r}", position)
        seen.add(rule_id)
        action = r.get("action")
        if action not in (EXCLUDE, BOOST):
            raise MalformedPredicateError(f"action must be EXCLUDE or BOOST, got {action!r}", position)
        multiplier = float(r.get("multiplier", 1.0))
        disclosure = r.get("disclosure_text", "") or ""
        if action == BOOST:
            if not disclosure.strip():
                raise MissingDisclosureError("BOOST rules must carry disclosure_text", position)
            if not (math.isfinite(multiplier) and multiplier > 0):
                raise MalformedPredicateError(f"multiplier must be finite and > 0, got {multiplier}", position)
        condition = _compile_node(r.get("condition", {"op": "true"}), _CONDITION_OPS, f"{position}.condition")
        target = _compile_node(r.get("target", {"op": "any"}), _TARGET_OPS, f"{position}.target")
        scope_raw = r.get("scope", [ALL_FRAMES])
        scope = frozenset([scope_raw] if isinstance(scope_raw, str) else scope_raw)
        rules.append(
            Rule(
                rule_id=rule_id,
                description=r.get("description", ""),
                condition=condition,
                target=target,
                action=action,
                multiplier=multiplier,
                disclosure_text=disclosure,
                priority=int(r.get("priority", 100)),
                scope=scope,
                legal=bool(r.get("legal", False)),
            )
        )
    rules.sort(key=Rule.sort_key)
    return RuleSet(rules=tuple(rules))


@dataclass(frozen=True)
class RuleApplication:
    rule_id: str
    action: str
    affected: tuple[str, ...]
    score_changes: Mapping[str, tuple[float, float]]  # item -> (before, after)
    disclosure_text: str = ""


@dataclass(frozen=True)
class RuleTrace:
    applications: tuple[RuleApplication, ...] = ()

    def boosts(self) -> list[RuleApplication]:
        return [a for a in self.applications if a.action == BOOST]

    def exclusions(self) -> list[RuleApplication]:
        return [a for a in self.applications if a.action == EXCLUDE]


def apply_rules(
    candidates: Sequence[Candidate],
    user: UserProfile,
    context: Mapping[str, str],
    now: int,
    rules: RuleSet,
    catalog: Mapping[str, ItemProfile],
    frame_id: Optional[str] = None,
) -> tuple[list[Candidate], RuleTrace]:
    """Apply the rule set in band/priority order and re-sort by score.

    Candidates record which rules already touched them, which makes the whole
    operation idempotent: re-applying the same set is a no-op.  Items missing
    from the catalog match no target.
    """
    current = [c.copy() for c in candidates]
    applications: list[RuleApplication] = []
    for rule in rules:
        if not rule.applies_to_frame(frame_id):
            continue
        if not eval_condition(rule.condition, user, context, now):
            continue
        affected: list[str] = []
        changes: dict[str, tuple[float, float]] = {}
        if rule.action == EXCLUDE:
            kept: list[Candidate] = []
            for c in current:
                item = catalog.get(c.item_id)
                if item is not None and eval_target(rule.target, item):
                    affected.append(c.item_id)
                else:
                    kept.append(c)
            current = kept
        else:  # BOOST
            for c in current:
                if rule.rule_id in c.applied_rules:
                    continue
                item = catalog.get(c.item_id)
                if item is None or not eval_target(rule.target, item):
                    continue
                before = c.score
                c.score = before * rule.multiplier
                c.sponsored_by = c.sponsored_by + (rule.disclosure_text,)
                c.applied_rules = c.applied_rules | {rule.rule_id}
                affected.append(c.item_id)
                changes[c.item_id] = (before, c.score)
        if affected:
            applications.append(
                RuleApplication(
                    rule_id=rule.rule_id,
                    action=rule.action,
                    affected=tuple(affected),
                    score_changes=changes,
                    disclosure_text=rule.disclosure_text,
                )
            )
    current.sort(key=lambda c: (-c.score, c.item_id))
    return current, RuleTrace(applications=tuple(applications))


def replay_trace(candidates: Sequence[Candidate], trace: RuleTrace) -> list[Candidate]:
    """Reconstruct the rule-engine output from its input plus the trace.

    Used to verify trace completeness: the result must equal apply_rules'
    actual output.
    """
    current = {c.item_id: c.copy() for c in candidates}
    for app in trace.applications:
        if app.action == EXCLUDE:
            for item in app.affected:
                current.pop(item, None)
        else:
            for item in app.affected:
                c = current[item]
                c.score = app.score_changes[item][1]
                c.sponsored_by = c.sponsored_by + (app.disclosure_text,)
                c.applied_rules = c.applied_rules | {app.rule_id}
    out = list(current.values())
    out.sort(key=lambda c: (-c.score, c.item_id))
    return out
