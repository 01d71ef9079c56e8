"""clearrec: a transparency-first e-commerce recommendation engine.

Event-based cross-occurrence recommender with declarative business rules,
per-frame ranking-criteria disclosure, reference-price and scarcity-claim
compliance checks, user data controls, and a repeatable ethical audit
benchmark.
"""

from .blending import (
    BlendConfig,
    Candidate,
    blend_scores,
    content_similarity,
    popularity_prior,
)
from .catalog import ItemProfile, catalog_from_jsonl, catalog_to_jsonl
from .cco import (
    IndicatorModel,
    InteractionMatrix,
    build_interaction_matrices,
    deserialize_model,
    llr,
    score_cco,
    serialize_model,
    train_indicators,
)
from .events import (
    Event,
    EventKind,
    EventLog,
    KindRegistry,
    WeightConfig,
    default_registry,
    derive_dwell_events,
    derive_historical_traits,
    effective_weight,
    ingest_event,
)
from .rules import RuleSet, UserProfile, apply_rules, compile_rules, eval_condition
from .transparency import (
    Disclosure,
    EngineSnapshot,
    FrameAlgorithm,
    FrameConfig,
    FrameResult,
    PricePoint,
    STOCK_LEFT,
    ScarcityClaim,
    UserView,
    VIEWERS_NOW,
    assemble_frame,
    lowest_price_reference,
    validate_scarcity_claim,
)
from .audit import (
    AuditReport,
    SyntheticShopSpec,
    Thresholds,
    attribute_rank_correlation,
    build_reference_system,
    exposure_bias,
    generate_synthetic_shop,
    preference_violation_rate,
    run_audit,
)
from .service import RecommenderService, ServiceConfig, create_app

__version__ = "0.1.0"
