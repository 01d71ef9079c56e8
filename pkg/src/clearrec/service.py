"""Operational shell: persistence, user data controls, serving facade, HTTP API.

Serving always reads from an immutable snapshot; retraining builds a new
snapshot and swaps it atomically, so the read path never blocks.  User
controls (opt-out, deletion tombstones) are persisted durably before they are
acknowledged, and deleted users are excluded from every subsequent training
run.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse

from .blending import BlendConfig, popularity_prior
from .catalog import ItemProfile, catalog_from_jsonl
from .cco import (
    IndicatorModel,
    build_interaction_matrices,
    deserialize_model,
    serialize_model,
    train_indicators,
)
from .errors import (
    ClearRecError,
    UnknownFrameError,
    UnknownUserError,
)
from .events import (
    Event,
    EventLog,
    KindRegistry,
    WeightConfig,
    default_registry,
    event_from_json,
    event_to_json,
    ingest_event,
)
from .rules import RuleSet, UserProfile, compile_rules
from .transparency import (
    EngineSnapshot,
    FrameAlgorithm,
    FrameConfig,
    FrameResult,
    UserView,
    assemble_frame,
    declared_data_categories,
)


@dataclass(frozen=True)
class UserControls:
    user_id: str
    personalization_opt_out: bool = False
    deleted: bool = False
    updated_at: int = 0


def _atomic_write(path: Path, data: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ControlsStore:
    """File-backed store of per-user controls; writes are atomic."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._controls: dict[str, UserControls] = {}
        if self.path.exists():
            doc = json.loads(self.path.read_text())
            for user_id, c in doc.items():
                self._controls[user_id] = UserControls(
                    user_id=user_id,
                    personalization_opt_out=c.get("personalization_opt_out", False),
                    deleted=c.get("deleted", False),
                    updated_at=c.get("updated_at", 0),
                )

    def _persist(self) -> None:
        doc = {
            c.user_id: {
                "personalization_opt_out": c.personalization_opt_out,
                "deleted": c.deleted,
                "updated_at": c.updated_at,
            }
            for c in self._controls.values()
        }
        _atomic_write(self.path, json.dumps(doc, sort_keys=True, indent=1))

    def get(self, user_id: str) -> UserControls:
        return self._controls.get(user_id, UserControls(user_id=user_id))

    def known(self, user_id: str) -> bool:
        return user_id in self._controls

    def set_optout(self, user_id: str, flag: bool, now: int) -> UserControls:
        prev = self.get(user_id)
        controls = UserControls(
            user_id=user_id,
            personalization_opt_out=flag,
            deleted=prev.deleted,
            updated_at=now,
        )
        self._controls[user_id] = controls
        self._persist()
        return controls

    def delete(self, user_id: str, now: int) -> UserControls:
        prev = self.get(user_id)
        controls = UserControls(
            user_id=user_id,
            personalization_opt_out=prev.personalization_opt_out,
            deleted=True,
            updated_at=now,
        )
        self._controls[user_id] = controls
        self._persist()
        return controls

    def deleted_users(self) -> set[str]:
        return {u for u, c in self._controls.items() if c.deleted}


@dataclass
class ServiceConfig:
    """Single-file JSON configuration; every default overridable."""

    data_dir: Path
    event_log_path: Path
    catalog_path: Path
    rules_path: Optional[Path] = None
    model_path: Optional[Path] = None
    price_history_path: Optional[Path] = None
    controls_path: Optional[Path] = None
    frames: list[dict] = field(default_factory=list)
    weight_overrides: dict[str, float] = field(default_factory=dict)
    blend: dict[str, float] = field(default_factory=dict)
    strict_ingest: bool = True
    primary_kind: str = "purchase"
    k_max: int = 50
    min_llr: float = 0.0
    listen_addr: str = "127.0.0.1:8080"

    @classmethod
    def from_json(cls, path: str | Path) -> "ServiceConfig":
        path = Path(path)
        doc = json.loads(path.read_text())
        base = path.parent
        data_dir = base / doc.get("data_dir", ".")

        def p(key: str, default: Optional[str]) -> Optional[Path]:
            v = doc.get(key, default)
            return (data_dir / v) if v else None

        return cls(
            data_dir=data_dir,
            event_log_path=p("event_log", "events.jsonl"),
            catalog_path=p("catalog", "catalog.jsonl"),
            rules_path=p("rules", None),
            model_path=p("model", "model.bin"),
            price_history_path=p("price_history", None),
            controls_path=p("controls", "controls.json"),
            frames=doc.get("frames", []),
            weight_overrides=doc.get("weights", {}),
            blend=doc.get("blend", {}),
            strict_ingest=doc.get("strict_ingest", True),
            primary_kind=doc.get("primary_kind", "purchase"),
            k_max=doc.get("k_max", 50),
            min_llr=doc.get("min_llr", 0.0),
            listen_addr=doc.get("listen_addr", "127.0.0.1:8080"),
        )

    def config_hash(self) -> str:
        doc = {
            "frames": self.frames,
            "weights": self.weight_overrides,
            "blend": self.blend,
            "primary_kind": self.primary_kind,
            "k_max": self.k_max,
            "min_llr": self.min_llr,
            "strict_ingest": self.strict_ingest,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


DEFAULT_FRAMES = [
    {"frame_id": "recommended_for_you", "title": "Recommended for you",
     "algorithm": "PERSONAL_HISTORY"},
    {"frame_id": "others_also_bought", "title": "Others also bought",
     "algorithm": "POPULATION_COOCCURRENCE"},
    {"frame_id": "cart_suggestions", "title": "Goes well with your cart",
     "algorithm": "CART_CONTEXT"},
    {"frame_id": "category_top", "title": "Popular in this category",
     "algorithm": "CATEGORY_CONTEXT"},
    {"frame_id": "popular_now", "title": "Popular right now",
     "algorithm": "POPULARITY_FALLBACK"},
]


def _frame_config(doc: Mapping[str, Any], default_blend: BlendConfig) -> FrameConfig:
    blend = default_blend
    if "blend" in doc:
        blend = BlendConfig(**doc["blend"])
    kwargs = dict(
        frame_id=doc["frame_id"],
        title=doc.get("title", doc["frame_id"]),
        algorithm=FrameAlgorithm[doc["algorithm"]],
        blend=blend,
        max_items=doc.get("max_items", 10),
    )
    if "signal_kinds" in doc:
        kwargs["signal_kinds"] = tuple(doc["signal_kinds"])
    return FrameConfig(**kwargs)


class RecommenderService:
    """Ties together the stores and the serving snapshot."""

    def __init__(self, config: ServiceConfig, registry: Optional[KindRegistry] = None):
        self.config = config
        self.registry = registry or default_registry()
        self.weights = WeightConfig(overrides=dict(config.weight_overrides))
        self.weights.validate(self.registry)
        config.data_dir.mkdir(parents=True, exist_ok=True)

        self.log = EventLog()
        if config.event_log_path and config.event_log_path.exists():
            self.log = EventLog.from_jsonl(config.event_log_path.read_text(), strict=False)

        catalog: dict[str, ItemProfile] = {}
        if config.catalog_path and config.catalog_path.exists():
            catalog = catalog_from_jsonl(config.catalog_path.read_text())
        self.catalog = catalog

        rules: RuleSet = compile_rules([])
        if config.rules_path and config.rules_path.exists():
            rules = compile_rules(config.rules_path.read_text())
        self.rules = rules

        self.controls = ControlsStore(config.controls_path or config.data_dir / "controls.json")

        model: Optional[IndicatorModel] = None
        if config.model_path and config.model_path.exists():
            model = deserialize_model(config.model_path.read_bytes())
        blend = BlendConfig(**config.blend) if config.blend else BlendConfig()
        frames = {
            f["frame_id"]: _frame_config(f, blend)
            for f in (config.frames or DEFAULT_FRAMES)
        }
        self._snapshot = EngineSnapshot(
            model=model,
            catalog=self.catalog,
            rules=self.rules,
            prior=popularity_prior(self.log, config.primary_kind),
            registry=self.registry,
            weights=self.weights,
            frames=frames,
        )

    @property
    def snapshot(self) -> EngineSnapshot:
        return self._snapshot

    # --- ingestion ---

    def ingest_line(self, line: str, strict: Optional[bool] = None, now: Optional[int] = None) -> Event:
        strict = self.config.strict_ingest if strict is None else strict
        event = event_from_json(line, strict=strict)
        ingest_event(event, self.log, self.registry, now=now)
        if self.config.event_log_path:
            with open(self.config.event_log_path, "a") as f:
                f.write(event_to_json(event) + "\n")
        return event

    # --- training ---

    def training_log(self) -> EventLog:
        """The event log minus tombstoned users: erased users never train."""
        return self.log.without_users(self.controls.deleted_users())

    def retrain(self, as_of: Optional[int] = None) -> IndicatorModel:
        as_of = as_of if as_of is not None else max((e.timestamp for e in self.log), default=0)
        log = self.training_log()
        matrices = build_interaction_matrices(log, self.registry, as_of=as_of)
        model = train_indicators(
            matrices,
            self.config.primary_kind,
            k_max=self.config.k_max,
            min_llr=self.config.min_llr,
            build_timestamp=as_of,
        )
        if self.config.model_path:
            self.config.model_path.write_bytes(serialize_model(model))
        self._snapshot = EngineSnapshot(
            model=model,
            catalog=self._snapshot.catalog,
            rules=self._snapshot.rules,
            prior=popularity_prior(log, self.config.primary_kind),
            registry=self.registry,
            weights=self.weights,
            frames=self._snapshot.frames,
        )
        return model

    # --- serving ---

    def user_view(self, user_id: str) -> UserView:
        controls = self.controls.get(user_id)
        events = () if controls.deleted else tuple(self.log.user_events(user_id))
        traits: dict[str, str] = {}
        age: Optional[int] = None
        for e in events:
            if e.kind == "user_trait" and e.context and "trait" in e.context:
                traits[e.context["trait"]] = e.context.get("value", "true")
        if "age" in traits:
            try:
                age = int(traits["age"])
            except ValueError:
                age = None
        profile = UserProfile(user_id=user_id, age=age, traits=traits)
        return UserView(
            profile=profile,
            events=events,
            opted_out=controls.personalization_opt_out,
            deleted=controls.deleted,
        )

    def recommend(
        self,
        frame_id: str,
        user_id: str,
        context: Optional[Mapping[str, Any]] = None,
        now: Optional[int] = None,
    ) -> FrameResult:
        snapshot = self._snapshot
        cfg = snapshot.frames.get(frame_id)
        if cfg is None:
            raise UnknownFrameError(f"unknown frame {frame_id!r}")
        now = now if now is not None else int(time.time())
        return assemble_frame(cfg, self.user_view(user_id), context or {}, snapshot, now)

    # --- user data controls ---

    def set_optout(self, user_id: str, flag: bool, now: Optional[int] = None) -> UserControls:
        return self.controls.set_optout(user_id, flag, now if now is not None else int(time.time()))

    def export_user_data(self, user_id: str) -> str:
        """JSON Lines archive: every event of the user plus a controls record."""
        events = self.log.user_events(user_id)
        if not events and not self.controls.known(user_id):
            raise UnknownUserError(f"no data for user {user_id!r}")
        controls = self.controls.get(user_id)
        lines = [event_to_json(e) for e in events]
        lines.append(
            json.dumps(
                {
                    "record": "controls",
                    "user_id": user_id,
                    "personalization_opt_out": controls.personalization_opt_out,
                    "deleted": controls.deleted,
                    "updated_at": controls.updated_at,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
        return "\n".join(lines) + "\n"

    def delete_user_data(self, user_id: str, now: Optional[int] = None) -> UserControls:
        """Idempotent tombstone; the user's events are excluded from all
        subsequent training and serving."""
        return self.controls.delete(user_id, now if now is not None else int(time.time()))


def frame_criteria_sheet(service: RecommenderService, frame_id: str) -> dict:
    """Static disclosure sheet for one frame: algorithm, declared signals,
    component weights.  Available without serving a single item."""
    cfg = service.snapshot.frames.get(frame_id)
    if cfg is None:
        raise UnknownFrameError(f"unknown frame {frame_id!r}")
    return {
        "frame_id": cfg.frame_id,
        "title": cfg.title,
        "algorithm": cfg.algorithm.value,
        "data_categories": sorted(
            declared_data_categories(cfg, cfg.algorithm, service.registry)
        ),
        "component_weights": {
            "population co-occurrence (CCO)": cfg.blend.alpha,
            "content similarity": cfg.blend.beta,
            "item popularity": cfg.blend.gamma,
        },
        "max_items": cfg.max_items,
    }


def create_app(service: RecommenderService) -> FastAPI:
    """FastAPI application exposing the v1 HTTP/JSON interface."""
    from .errors import (
        MalformedEventError,
        ModelNotLoadedError,
        UnknownKindError,
        InvalidTimestampError,
        NegativeValueError,
    )

    app = FastAPI(title="clearrec", version="1")

    def _frame_payload(result: FrameResult) -> dict:
        return {
            "frame_id": result.frame_id,
            "title": result.title,
            "items": [
                {
                    "item_id": i.item_id,
                    "score": i.score,
                    "sponsored": i.sponsored,
                    "sponsor_labels": list(i.sponsor_labels),
                }
                for i in result.items
            ],
            "disclosure": json.loads(result.disclosure.to_json()),
        }

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "model_loaded": service.snapshot.model is not None,
            "config_hash": service.config.config_hash(),
        }

    @app.post("/v1/events")
    async def post_event(request: Request, mode: str = Query("strict")):
        body = (await request.body()).decode()
        try:
            event = service.ingest_line(body, strict=(mode != "lenient"), now=int(time.time()))
        except (MalformedEventError, UnknownKindError, InvalidTimestampError,
                NegativeValueError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"accepted": event.event_id}

    @app.get("/v1/frames/{frame_id}")
    def get_frame(
        frame_id: str,
        user: str = Query(...),
        item_id: Optional[str] = None,
        category: Optional[str] = None,
        cart: Optional[str] = None,
    ):
        context = {k: v for k, v in (("item_id", item_id), ("category", category), ("cart", cart)) if v}
        try:
            result = service.recommend(frame_id, user, context)
        except UnknownFrameError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ModelNotLoadedError as exc:
            raise HTTPException(status_code=503, detail=str(exc))
        return _frame_payload(result)

    @app.get("/v1/disclosure/{frame_id}")
    def get_disclosure(frame_id: str):
        try:
            return frame_criteria_sheet(service, frame_id)
        except UnknownFrameError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.put("/v1/users/{user_id}/optout")
    async def put_optout(user_id: str, request: Request):
        doc = json.loads((await request.body()).decode() or "{}")
        flag = bool(doc.get("opt_out", True))
        controls = service.set_optout(user_id, flag)
        return {
            "user_id": user_id,
            "personalization_opt_out": controls.personalization_opt_out,
            "updated_at": controls.updated_at,
        }

    @app.get("/v1/users/{user_id}/data")
    def get_user_data(user_id: str):
        try:
            return PlainTextResponse(service.export_user_data(user_id))
        except UnknownUserError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.delete("/v1/users/{user_id}/data")
    def delete_user_data(user_id: str):
        controls = service.delete_user_data(user_id)
        return {"user_id": user_id, "deleted": controls.deleted}

    return app
