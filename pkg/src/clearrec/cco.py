"""Correlated cross-occurrence core.

Builds one binary user x column interaction matrix per event kind, selects
per-target indicator columns by the Dunning log-likelihood ratio (G-test)
over 2x2 contingency tables, and scores a user's history against the
resulting indicator model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy import sparse

from .errors import (
    AllZeroError,
    CorruptPayloadError,
    MissingPrimaryMatrixError,
    VersionMismatchError,
)
from .events import Event, EventLog, KindRegistry, WeightConfig, effective_weight

MODEL_MAGIC = "CRCO"
MODEL_MAJOR = 1
MODEL_MINOR = 0


def event_column_id(e: Event) -> Optional[str]:
    """Column identity of an event: the item, or a trait/category pseudo-column."""
    if e.item_id is not None:
        return e.item_id
    ctx = e.context or {}
    if "trait" in ctx:
        return f"trait:{ctx['trait']}"
    if "category" in ctx:
        return f"category:{ctx['category']}"
    return None


@dataclass
class InteractionMatrix:
    """Binary, deduplicated user x column occurrence matrix for one event kind.

    Rows are shared across all matrices of one build (the full user universe
    of the log), which keeps the "neither" cell of every contingency table
    well defined.
    """

    kind: str
    user_ids: list[str]
    col_ids: list[str]
    matrix: sparse.csr_matrix

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    def col_counts(self) -> np.ndarray:
        """Distinct-user count per column."""
        return np.asarray(self.matrix.sum(axis=0)).ravel()


def build_interaction_matrices(
    log: EventLog,
    registry: KindRegistry,
    as_of: Optional[int] = None,
) -> dict[str, InteractionMatrix]:
    """One binary matrix per event kind present in the log (up to ``as_of``).

    Multiple identical interactions collapse to a single cell.  Returns an
    empty map for an empty log.
    """
    pairs: dict[str, set[tuple[str, str]]] = {}
    users: set[str] = set()
    for e in log:
        if as_of is not None and e.timestamp > as_of:
            continue
        registry.get(e.kind)
        users.add(e.user_id)
        col = event_column_id(e)
        if col is None:
            continue
        pairs.setdefault(e.kind, set()).add((e.user_id, col))
    if not users:
        return {}

    user_ids = sorted(users)
    user_index = {u: i for i, u in enumerate(user_ids)}
    out: dict[str, InteractionMatrix] = {}
    for kind in sorted(pairs):
        cells = pairs[kind]
        col_ids = sorted({c for _, c in cells})
        col_index = {c: j for j, c in enumerate(col_ids)}
        rows = np.fromiter((user_index[u] for u, c in sorted(cells)), dtype=np.int64, count=len(cells))
        cols = np.fromiter((col_index[c] for u, c in sorted(cells)), dtype=np.int64, count=len(cells))
        mat = sparse.csr_matrix(
            (np.ones(len(cells), dtype=np.int64), (rows, cols)),
            shape=(len(user_ids), len(col_ids)),
        )
        out[kind] = InteractionMatrix(kind=kind, user_ids=user_ids, col_ids=col_ids, matrix=mat)
    return out


def _xlogx(k):
    """k * ln(k) with the 0 * ln(0) = 0 convention; works on scalars and arrays."""
    k = np.asarray(k, dtype=np.float64)
    out = np.zeros_like(k)
    nz = k > 0
    out[nz] = k[nz] * np.log(k[nz])
    return out


def llr_array(k11, k12, k21, k22) -> np.ndarray:
    """Vectorized G statistic over 2x2 tables; negative rounding residue clamped."""
    k11 = np.asarray(k11, dtype=np.float64)
    k12 = np.asarray(k12, dtype=np.float64)
    k21 = np.asarray(k21, dtype=np.float64)
    k22 = np.asarray(k22, dtype=np.float64)
    n = k11 + k12 + k21 + k22
    cells = _xlogx(k11) + _xlogx(k12) + _xlogx(k21) + _xlogx(k22)
    rows = _xlogx(k11 + k12) + _xlogx(k21 + k22)
    cols = _xlogx(k11 + k21) + _xlogx(k12 + k22)
    g = 2.0 * (cells - rows - cols + _xlogx(n))
    g = np.maximum(g, 0.0)
    # proportional rows mean observed == expected; make that case exactly 0
    # instead of leaving float rounding residue
    return np.where(k11 * k22 == k12 * k21, 0.0, g)


def llr(k11: int, k12: int, k21: int, k22: int) -> float:
    """Log-likelihood ratio (G) significance of one 2x2 contingency table.

    G = 2 * (sum k ln k - sum rowsums r ln r - sum colsums c ln c + N ln N),
    with 0 ln 0 = 0.  Symmetric under simultaneous row/column swap and under
    transposition; exactly 0 for proportional rows.
    """
    if min(k11, k12, k21, k22) < 0:
        raise ValueError("contingency counts must be >= 0")
    if k11 + k12 + k21 + k22 == 0:
        raise AllZeroError("all four contingency cells are zero")
    return float(llr_array(k11, k12, k21, k22))


@dataclass(frozen=True)
class Indicator:
    """One evidence column for a target item: where it came from and how strong."""

    source_kind: str
    source_id: str
    llr: float


@dataclass
class IndicatorModel:
    """Per-target ranked indicator lists learned by cross-occurrence training."""

    primary_kind: str
    k_max: int
    min_llr: float
    indicators: dict[str, list[Indicator]]
    build_timestamp: int
    model_version: str = f"{MODEL_MAJOR}.{MODEL_MINOR}"
    config_hash: str = ""
    _reverse: Optional[dict[tuple[str, str], list[tuple[str, float]]]] = field(
        default=None, repr=False, compare=False
    )

    def reverse_index(self) -> dict[tuple[str, str], list[tuple[str, float]]]:
        """(source_kind, source_id) -> [(target, llr)]; built once, cached."""
        if self._reverse is None:
            rev: dict[tuple[str, str], list[tuple[str, float]]] = {}
            for target, inds in self.indicators.items():
                for ind in inds:
                    rev.setdefault((ind.source_kind, ind.source_id), []).append((target, ind.llr))
            object.__setattr__(self, "_reverse", rev)
        return self._reverse


def training_config_hash(primary_kind: str, k_max: int, min_llr: float) -> str:
    payload = json.dumps(
        {"primary_kind": primary_kind, "k_max": k_max, "min_llr": min_llr, "version": MODEL_MAJOR},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def train_indicators(
    matrices: Mapping[str, InteractionMatrix],
    primary_kind: str,
    k_max: int = 50,
    min_llr: float = 0.0,
    build_timestamp: int = 0,
) -> IndicatorModel:
    """Select, per target item, the cross-occurrence columns most correlated
    with the target's conversion event.

    For target column t of the primary matrix and candidate column s of any
    matrix (the primary included, the self pair excluded): k11 = users with
    both, k12 = with s only, k21 = with t only, k22 = with neither.  Keeps the
    top ``k_max`` candidates with llr strictly above ``min_llr``; ties break
    by ascending source id for determinism.
    """
    if primary_kind not in matrices:
        raise MissingPrimaryMatrixError(f"no interaction matrix for kind {primary_kind!r}")
    primary = matrices[primary_kind]
    n_users = primary.n_users
    target_counts = primary.col_counts()

    # candidate pool per target: (llr, source_id, source_kind); every column of
    # every matrix is a candidate, co-occurring or not (the G statistic is
    # two-sided, so disjoint columns can still be significant)
    pool: dict[int, list[tuple[float, str, str]]] = {t: [] for t in range(len(primary.col_ids))}
    for kind in sorted(matrices):
        other = matrices[kind]
        k11 = np.asarray((primary.matrix.T @ other.matrix).todense(), dtype=np.float64)
        source_counts = other.col_counts().astype(np.float64)
        k12 = source_counts[np.newaxis, :] - k11
        k21 = target_counts.astype(np.float64)[:, np.newaxis] - k11
        k22 = n_users - k11 - k12 - k21
        scores = llr_array(k11, k12, k21, k22)
        for t, s in zip(*np.nonzero(scores > min_llr)):
            if kind == primary_kind and t == s:
                continue  # self pair
            pool[int(t)].append((float(scores[t, s]), other.col_ids[int(s)], kind))

    indicators: dict[str, list[Indicator]] = {}
    for t, cands in pool.items():
        if not cands:
            continue
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        indicators[primary.col_ids[t]] = [
            Indicator(source_kind=kind, source_id=sid, llr=score)
            for score, sid, kind in cands[:k_max]
        ]

    return IndicatorModel(
        primary_kind=primary_kind,
        k_max=k_max,
        min_llr=min_llr,
        indicators=indicators,
        build_timestamp=build_timestamp,
        config_hash=training_config_hash(primary_kind, k_max, min_llr),
    )


@dataclass(frozen=True)
class Contribution:
    source_id: str
    source_kind: str
    amount: float


@dataclass(frozen=True)
class ScoredItem:
    item_id: str
    score: float
    contributions: tuple[Contribution, ...]


def score_cco(
    history: Iterable[Event],
    model: IndicatorModel,
    cfg: WeightConfig,
    registry: KindRegistry,
) -> list[ScoredItem]:
    """Score every target whose indicators intersect the user's history.

    score(t) = sum over matching indicators of llr * effective kind weight.
    Zero-score items are omitted; order is score descending, item id ascending.
    """
    present: set[tuple[str, str]] = set()
    for e in history:
        col = event_column_id(e)
        if col is not None:
            present.add((e.kind, col))

    rev = model.reverse_index()
    totals: dict[str, float] = {}
    contribs: dict[str, list[Contribution]] = {}
    for kind, col in present:
        weight = effective_weight(registry.get(kind), cfg)
        if weight == 0:
            continue
        for target, score in rev.get((kind, col), ()):
            amount = score * weight
            if amount == 0:
                continue
            totals[target] = totals.get(target, 0.0) + amount
            contribs.setdefault(target, []).append(Contribution(col, kind, amount))

    out = []
    for item, total in totals.items():
        if total == 0:
            continue
        parts = tuple(sorted(contribs[item], key=lambda c: (-c.amount, c.source_id, c.source_kind)))
        out.append(ScoredItem(item_id=item, score=total, contributions=parts))
    out.sort(key=lambda s: (-s.score, s.item_id))
    return out


def _model_body(model: IndicatorModel) -> str:
    """Canonical JSON body: targets by id, indicators in rank order."""
    body = {
        "primary_kind": model.primary_kind,
        "k_max": model.k_max,
        "min_llr": model.min_llr,
        "build_timestamp": model.build_timestamp,
        "targets": {
            target: [[i.source_kind, i.source_id, i.llr] for i in inds]
            for target, inds in sorted(model.indicators.items())
        },
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def serialize_model(model: IndicatorModel) -> bytes:
    """Versioned, checksummed container; byte-identical for identical models."""
    body = _model_body(model)
    envelope = {
        "magic": MODEL_MAGIC,
        "version": model.model_version,
        "config_hash": model.config_hash,
        "checksum": hashlib.sha256(body.encode()).hexdigest(),
        "body": body,
    }
    return json.dumps(envelope, sort_keys=True, separators=(",", ":")).encode()


def deserialize_model(payload: bytes) -> IndicatorModel:
    """Inverse of :func:`serialize_model`; refuses newer major versions."""
    try:
        envelope = json.loads(payload.decode())
        magic = envelope["magic"]
        version = envelope["version"]
        checksum = envelope["checksum"]
        body_text = envelope["body"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
        raise CorruptPayloadError(f"unreadable model container: {exc}") from exc
    if magic != MODEL_MAGIC:
        raise CorruptPayloadError(f"bad magic {magic!r}")
    try:
        major = int(str(version).split(".")[0])
    except ValueError as exc:
        raise CorruptPayloadError(f"bad version {version!r}") from exc
    if major > MODEL_MAJOR:
        raise VersionMismatchError(f"model written by major version {major}, supported <= {MODEL_MAJOR}")
    if hashlib.sha256(body_text.encode()).hexdigest() != checksum:
        raise CorruptPayloadError("checksum mismatch")
    body = json.loads(body_text)
    indicators = {
        target: [Indicator(source_kind=k, source_id=s, llr=v) for k, s, v in inds]
        for target, inds in body["targets"].items()
    }
    return IndicatorModel(
        primary_kind=body["primary_kind"],
        k_max=body["k_max"],
        min_llr=body["min_llr"],
        indicators=indicators,
        build_timestamp=body["build_timestamp"],
        model_version=str(version),
        config_hash=envelope.get("config_hash", ""),
    )
