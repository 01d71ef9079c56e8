"""Item catalog: product profiles and their JSONL file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable


@dataclass(frozen=True)
class ItemProfile:
    """Static product profile used for content similarity and rule targeting."""

    item_id: str
    categories: frozenset[str] = frozenset()
    tags: frozenset[str] = frozenset()
    price: float = 0.0
    margin: float = 0.0
    stock: int = 0
    seller_id: str = ""

    def __post_init__(self):
        if not math.isfinite(self.price) or self.price < 0:
            raise ValueError(f"price must be finite and >= 0, got {self.price}")
        if not 0 <= self.margin <= 1:
            raise ValueError(f"margin must be in [0, 1], got {self.margin}")
        if self.stock < 0:
            raise ValueError(f"stock must be >= 0, got {self.stock}")


def item_to_json(item: ItemProfile) -> str:
    doc = {
        "item_id": item.item_id,
        "categories": sorted(item.categories),
        "tags": sorted(item.tags),
        "price": item.price,
        "margin": item.margin,
        "stock": item.stock,
        "seller_id": item.seller_id,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def item_from_json(line: str) -> ItemProfile:
    doc = json.loads(line)
    return ItemProfile(
        item_id=doc["item_id"],
        categories=frozenset(doc.get("categories", ())),
        tags=frozenset(doc.get("tags", ())),
        price=float(doc.get("price", 0.0)),
        margin=float(doc.get("margin", 0.0)),
        stock=int(doc.get("stock", 0)),
        seller_id=doc.get("seller_id", ""),
    )


def catalog_to_jsonl(catalog: dict[str, ItemProfile]) -> str:
    return "".join(item_to_json(catalog[i]) + "\n" for i in sorted(catalog))


def catalog_from_jsonl(text: str) -> dict[str, ItemProfile]:
    items = (item_from_json(line) for line in text.splitlines() if line.strip())
    return {item.item_id: item for item in items}
