"""Atomic event model: kinds, weights, the append-only log, and derivations.

Every user/shop interaction is one atomic event: an action (purchase,
add-to-cart, category visit), a behavioral signal (long dwell on a product
page), a historical feature (bought in this category recently), or a static
user/item trait (vegetarian, contains palm oil).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import (
    InvalidTimestampError,
    MalformedEventError,
    NegativeValueError,
    UnknownKindError,
)

#: Allowed clock skew between client and ingestion clock, in seconds.
INGEST_SKEW_S = 300


class EventCategory(Enum):
    ACTION = "action"
    BEHAVIORAL = "behavioral"
    HISTORICAL = "historical"
    USER_TRAIT = "user_trait"
    ITEM_TRAIT = "item_trait"


@dataclass(frozen=True)
class EventKind:
    """A registered kind of atomic event with its default scoring weight."""

    name: str
    category: EventCategory
    default_weight: float = 1.0

    def __post_init__(self):
        if self.default_weight < 0:
            raise ValueError(f"default_weight must be >= 0, got {self.default_weight}")


class KindRegistry:
    """Registry of event kinds; names are unique."""

    def __init__(self, kinds: Iterable[EventKind] = ()):
        self._kinds: dict[str, EventKind] = {}
        for k in kinds:
            self.register(k)

    def register(self, kind: EventKind) -> None:
        if kind.name in self._kinds:
            raise ValueError(f"duplicate event kind {kind.name!r}")
        self._kinds[kind.name] = kind

    def get(self, name: str) -> EventKind:
        try:
            return self._kinds[name]
        except KeyError:
            raise UnknownKindError(f"event kind {name!r} is not registered") from None

    def __contains__(self, name: str) -> bool:
        return name in self._kinds

    def __iter__(self) -> Iterator[EventKind]:
        return iter(self._kinds.values())

    def names(self) -> list[str]:
        return sorted(self._kinds)


def default_registry() -> KindRegistry:
    """Kind registry with the standard e-commerce event vocabulary."""
    return KindRegistry(
        [
            EventKind("purchase", EventCategory.ACTION, 1.0),
            EventKind("add_to_cart", EventCategory.ACTION, 0.5),
            EventKind("view_item", EventCategory.ACTION, 0.2),
            EventKind("view_category", EventCategory.ACTION, 0.1),
            EventKind("dwell", EventCategory.BEHAVIORAL, 0.3),
            EventKind("bought_in_category", EventCategory.HISTORICAL, 0.4),
            EventKind("user_trait", EventCategory.USER_TRAIT, 0.5),
            EventKind("item_trait", EventCategory.ITEM_TRAIT, 0.5),
        ]
    )


@dataclass(frozen=True)
class Event:
    """One atomic interaction or trait observation.

    ``timestamp`` is integer seconds since the Unix epoch, UTC.  Category-level
    events carry their category in ``context`` instead of ``item_id``; trait
    events carry the trait name under the ``trait`` context key.
    """

    event_id: str
    user_id: str
    kind: str
    timestamp: int
    item_id: Optional[str] = None
    value: Optional[float] = None
    context: Optional[Mapping[str, str]] = None

    def validate(self, registry: KindRegistry, now: Optional[int] = None) -> None:
        if self.kind not in registry:
            raise UnknownKindError(f"event kind {self.kind!r} is not registered")
        if not isinstance(self.timestamp, int) or not math.isfinite(self.timestamp):
            raise InvalidTimestampError(f"timestamp {self.timestamp!r} is not a finite integer")
        if now is not None and self.timestamp > now + INGEST_SKEW_S:
            raise InvalidTimestampError(
                f"timestamp {self.timestamp} is in the future (now={now}, skew={INGEST_SKEW_S}s)"
            )
        if self.value is not None and not (self.value >= 0):
            raise NegativeValueError(f"value must be >= 0, got {self.value}")


_EVENT_FIELDS = {"event_id", "user_id", "kind", "timestamp", "item_id", "value", "context"}


def _ts_to_iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _iso_to_ts(s: str) -> int:
    return int(datetime.strptime(s, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc).timestamp())


def event_to_json(e: Event) -> str:
    """One-line JSON rendering with ISO-8601 timestamp; None fields omitted."""
    doc: dict = {
        "event_id": e.event_id,
        "user_id": e.user_id,
        "kind": e.kind,
        "timestamp": _ts_to_iso(e.timestamp),
    }
    if e.item_id is not None:
        doc["item_id"] = e.item_id
    if e.value is not None:
        doc["value"] = e.value
    if e.context:
        doc["context"] = dict(sorted(e.context.items()))
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def event_from_json(line: str, strict: bool = True) -> Event:
    """Parse one JSONL event line.

    Strict mode rejects unknown fields; lenient mode ignores them.
    """
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedEventError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedEventError("event line must be a JSON object")
    unknown = set(doc) - _EVENT_FIELDS
    if unknown:
        if strict:
            raise MalformedEventError(f"unknown fields {sorted(unknown)}")
        doc = {k: v for k, v in doc.items() if k in _EVENT_FIELDS}
    try:
        ts = doc["timestamp"]
        timestamp = _iso_to_ts(ts) if isinstance(ts, str) else int(ts)
        return Event(
            event_id=str(doc["event_id"]),
            user_id=str(doc["user_id"]),
            kind=str(doc["kind"]),
            timestamp=timestamp,
            item_id=doc.get("item_id"),
            value=float(doc["value"]) if doc.get("value") is not None else None,
            context=dict(doc["context"]) if doc.get("context") else None,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedEventError(f"bad event fields: {exc}") from exc


class EventLog:
    """Append-only ordered sequence of events.

    Replaying a serialized log reproduces identical in-memory state, so any
    derivation over a log snapshot is reproducible.
    """

    def __init__(self, events: Iterable[Event] = ()):
        self._events: list[Event] = []
        self._by_id: dict[str, Event] = {}
        for e in events:
            self._append(e)

    def _append(self, e: Event) -> None:
        if e.event_id in self._by_id:
            raise ValueError(f"duplicate event_id {e.event_id!r}")
        self._events.append(e)
        self._by_id[e.event_id] = e

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def get(self, event_id: str) -> Event:
        return self._by_id[event_id]

    def __contains__(self, event_id: str) -> bool:
        return event_id in self._by_id

    def user_events(self, user_id: str) -> list[Event]:
        return [e for e in self._events if e.user_id == user_id]

    def without_users(self, user_ids: set[str]) -> "EventLog":
        """A new log with all events of the given users removed (erasure)."""
        return EventLog(e for e in self._events if e.user_id not in user_ids)

    def to_jsonl(self) -> str:
        return "".join(event_to_json(e) + "\n" for e in self._events)

    @classmethod
    def from_jsonl(cls, text: str, strict: bool = True) -> "EventLog":
        return cls(event_from_json(line, strict=strict) for line in text.splitlines() if line.strip())


def ingest_event(
    e: Event,
    log: EventLog,
    registry: KindRegistry,
    now: Optional[int] = None,
) -> EventLog:
    """Validate and append one event to the log (in place); returns the log."""
    e.validate(registry, now=now)
    log._append(e)
    return log


def derive_dwell_events(
    page_views: Sequence[tuple],
    threshold_s: float = 30,
) -> list[Event]:
    """Emit one dwell event per page view strictly longer than the threshold.

    Each view is ``(user, item, duration_seconds)`` or
    ``(user, item, duration_seconds, timestamp)``; without a timestamp the
    derived event is stamped 0.
    """
    out: list[Event] = []
    for i, view in enumerate(page_views):
        user, item, duration = view[0], view[1], view[2]
        ts = int(view[3]) if len(view) > 3 else 0
        if duration < 0:
            raise NegativeValueError(f"duration must be >= 0, got {duration}")
        if duration > threshold_s:
            out.append(
                Event(
                    event_id=f"dwell:{user}:{item}:{i}",
                    user_id=user,
                    kind="dwell",
                    timestamp=ts,
                    item_id=item,
                    value=float(duration),
                )
            )
    return out


def derive_historical_traits(
    log: EventLog,
    as_of: int,
    window_days: int = 180,
) -> list[Event]:
    """One bought-in-category trait per (user, category) purchased in the window.

    The window is closed: a purchase exactly ``window_days`` old still counts.
    Idempotent for a fixed (log, as_of).
    """
    window_s = window_days * 86400
    seen: set[tuple[str, str]] = set()
    for e in log:
        if e.kind != "purchase" or e.timestamp > as_of:
            continue
        if as_of - e.timestamp > window_s:
            continue
        category = (e.context or {}).get("category")
        if category is None:
            continue
        seen.add((e.user_id, category))
    return [
        Event(
            event_id=f"hist:{user}:{category}:{as_of}",
            user_id=user,
            kind="bought_in_category",
            timestamp=as_of,
            context={"category": category},
        )
        for user, category in sorted(seen)
    ]


@dataclass
class WeightConfig:
    """Per-kind weight overrides applied over each kind's default weight."""

    overrides: dict[str, float] = field(default_factory=dict)

    def validate(self, registry: KindRegistry) -> None:
        for name, w in self.overrides.items():
            if name not in registry:
                raise UnknownKindError(f"weight override references unknown kind {name!r}")
            if w < 0:
                raise ValueError(f"weight for {name!r} must be >= 0, got {w}")


def effective_weight(kind: EventKind, cfg: WeightConfig) -> float:
    """Configured override when present, else the kind's default weight."""
    return cfg.overrides.get(kind.name, kind.default_weight)
