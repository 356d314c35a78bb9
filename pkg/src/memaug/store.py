"""Memory persistence: items, annotations, the attribute index, and stats.

The store keeps items in insertion order, maintains an inverted index over
annotation attribute names (and case-folded (name, value) keys), and
round-trips through JSONL with one item per line in a canonical field order,
so saving the same store twice produces byte-identical files. Items are only
ever appended; there is no deletion.

Writes are not safe against concurrent writers. Lookup results are fresh
sets/lists, so readers never observe a structure mutated underneath them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterator

from .annotations import Annotation, Granularity, normalize_name
from .errors import DuplicateIdError, GranularityMismatchError, SchemaError

if TYPE_CHECKING:
    from .mining import AugmentationReport


class ItemKind(Enum):
    ENTITY = "entity"
    DIALOGUE_TURN = "dialogue_turn"
    SESSION = "session"


_KIND_GRANULARITY = {
    ItemKind.ENTITY: Granularity.NOT_APPLICABLE,
    ItemKind.DIALOGUE_TURN: Granularity.TURN_LEVEL,
    ItemKind.SESSION: Granularity.SESSION_LEVEL,
}

# Canonical JSONL field order; None-valued fields are omitted.
_FIELD_ORDER = ("id", "kind", "content", "speaker", "session_id", "turn_id", "timestamp", "annotation")


@dataclass(frozen=True)
class MemoryItem:
    """One unit of memory: an entity, a dialogue turn, or a whole session."""

    id: str
    kind: ItemKind
    content: str
    speaker: str | None = None
    session_id: str | None = None
    turn_id: str | None = None
    timestamp: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("item id must be non-empty")
        if self.kind is ItemKind.DIALOGUE_TURN and not (self.session_id and self.turn_id):
            raise ValueError("dialogue turns require session_id and turn_id")
        if self.kind is ItemKind.SESSION and not self.session_id:
            raise ValueError("sessions require session_id")


@dataclass(frozen=True)
class AugmentedMemory:
    item: MemoryItem
    annotation: Annotation | None = None

    def __post_init__(self):
        if self.annotation is not None:
            expected = _KIND_GRANULARITY[self.item.kind]
            if self.annotation.granularity is not expected:
                raise GranularityMismatchError(
                    f"item kind {self.item.kind.value} requires granularity "
                    f"{expected.value}, got {self.annotation.granularity.value}"
                )


@dataclass(frozen=True)
class CorpusStats:
    total_items: int
    annotated_items: int
    avg_attributes: float
    failure_rate: float
    top_attributes: tuple[tuple[str, int], ...]

    def to_dict(self) -> dict:
        return {
            "total_items": self.total_items,
            "annotated_items": self.annotated_items,
            "avg_attributes": self.avg_attributes,
            "failure_rate": self.failure_rate,
            "top_attributes": [
                {"name": name, "frequency": freq} for name, freq in self.top_attributes
            ],
        }


class MatchPolicy(Enum):
    NAME_ONLY = "name_only"
    NAME_AND_VALUE = "name_and_value"


class MemoryStore:
    """Insertion-ordered item storage with an attribute inverted index."""

    def __init__(self):
        self._items: dict[str, MemoryItem] = {}
        self._annotations: dict[str, Annotation] = {}
        self._by_name: dict[str, set[str]] = {}
        self._by_name_value: dict[tuple[str, str], set[str]] = {}
        self.augmentation_report: "AugmentationReport | None" = None

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[MemoryItem]:
        return iter(self._items.values())

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._items

    def ids(self) -> tuple[str, ...]:
        return tuple(self._items)

    def get(self, item_id: str) -> MemoryItem:
        return self._items[item_id]

    def annotation_for(self, item_id: str) -> Annotation | None:
        return self._annotations.get(item_id)

    def entries(self) -> Iterator[AugmentedMemory]:
        for item_id, item in self._items.items():
            yield AugmentedMemory(item, self._annotations.get(item_id))

    def _unindex(self, item_id: str) -> None:
        annotation = self._annotations.pop(item_id, None)
        if annotation is None:
            return
        for pair in annotation.pairs:
            self._by_name.get(pair.name, set()).discard(item_id)
            self._by_name_value.get((pair.name, pair.value.casefold()), set()).discard(item_id)

    def write(
        self,
        item: MemoryItem,
        annotation: Annotation | None = None,
        *,
        overwrite: bool = False,
    ) -> str:
        """Append an item (validating annotation granularity) and index it."""
        AugmentedMemory(item, annotation)  # granularity check
        if item.id in self._items and not overwrite:
            raise DuplicateIdError(f"item id {item.id!r} already present")
        if item.id in self._items:
            self._unindex(item.id)
        self._items[item.id] = item
        if annotation is not None:
            self._annotations[item.id] = annotation
            for pair in annotation.pairs:
                self._by_name.setdefault(pair.name, set()).add(item.id)
                self._by_name_value.setdefault(
                    (pair.name, pair.value.casefold()), set()
                ).add(item.id)
        return item.id

    def attach_annotation(self, item_id: str, annotation: Annotation) -> None:
        """Replace the annotation of an existing item."""
        item = self._items[item_id]
        self.write(item, annotation, overwrite=True)

    def lookup_by_attribute(
        self,
        name: str,
        value: str | None = None,
        policy: MatchPolicy = MatchPolicy.NAME_ONLY,
    ) -> set[str]:
        """Ids of items whose annotation carries the attribute.

        ``NAME_AND_VALUE`` compares values case-folded; with no value to
        compare (``value=None``) it degrades to a name match. Unknown names
        yield an empty set.
        """
        key = normalize_name(name)
        if policy is MatchPolicy.NAME_AND_VALUE and value is not None:
            return set(self._by_name_value.get((key, value.strip().casefold()), set()))
        return set(self._by_name.get(key, set()))

    def compute_stats(self) -> CorpusStats:
        """Pair counts and attribute frequencies over the annotated items.

        The failure rate comes from the augmentation report recorded at
        augment time (zero when no report is attached). Each item counts at
        most once per attribute name.
        """
        annotated = [ann for ann in self._annotations.values() if len(ann)]
        total_pairs = sum(len(ann) for ann in annotated)
        counts: dict[str, int] = {}
        for ann in self._annotations.values():
            for name in set(ann.names):
                counts[name] = counts.get(name, 0) + 1
        top = tuple(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
        return CorpusStats(
            total_items=len(self._items),
            annotated_items=len(self._annotations),
            avg_attributes=total_pairs / len(annotated) if annotated else 0.0,
            failure_rate=(
                self.augmentation_report.failure_rate if self.augmentation_report else 0.0
            ),
            top_attributes=top,
        )

    # -- persistence ---------------------------------------------------

    @staticmethod
    def _record(item: MemoryItem, annotation: Annotation | None) -> dict:
        raw = {
            "id": item.id,
            "kind": item.kind.value,
            "content": item.content,
            "speaker": item.speaker,
            "session_id": item.session_id,
            "turn_id": item.turn_id,
            "timestamp": item.timestamp,
            "annotation": annotation.to_dict() if annotation is not None else None,
        }
        return {key: raw[key] for key in _FIELD_ORDER if raw[key] is not None}

    @staticmethod
    def _from_record(record: dict) -> tuple[MemoryItem, Annotation | None]:
        if not isinstance(record, dict) or "id" not in record or "kind" not in record:
            raise ValueError("record must be an object with 'id' and 'kind'")
        item = MemoryItem(
            id=record["id"],
            kind=ItemKind(record["kind"]),
            content=record.get("content", ""),
            speaker=record.get("speaker"),
            session_id=record.get("session_id"),
            turn_id=record.get("turn_id"),
            timestamp=record.get("timestamp"),
        )
        annotation = None
        if record.get("annotation") is not None:
            annotation = Annotation.from_dict(record["annotation"])
        return item, annotation

    def save(self, path: str | Path) -> None:
        """Write one JSON object per item, in insertion order.

        When an augmentation report is attached, it is saved next to the
        store as ``<path>.report.json`` so stats survive a reload.
        """
        target = Path(path)
        with target.open("w", encoding="utf-8") as fh:
            for item_id, item in self._items.items():
                record = self._record(item, self._annotations.get(item_id))
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        report_path = target.with_name(target.name + ".report.json")
        if self.augmentation_report is not None:
            report_path.write_text(
                json.dumps(self.augmentation_report.to_dict(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )

    @classmethod
    def load(
        cls,
        path: str | Path,
        *,
        strict: bool = True,
        warnings: list[str] | None = None,
    ) -> "MemoryStore":
        """Rebuild a store (and its attribute index) from a JSONL file.

        Malformed lines raise :class:`SchemaError` with the line number in
        strict mode; lenient mode skips them, reporting via ``warnings``.
        """
        source = Path(path)
        if not source.exists():
            raise FileNotFoundError(f"store file not found: {source}")
        store = cls()
        with source.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    item, annotation = cls._from_record(record)
                    store.write(item, annotation)
                except (ValueError, KeyError, TypeError, DuplicateIdError, GranularityMismatchError) as exc:
                    if strict:
                        raise SchemaError(str(exc), line=line_no) from exc
                    if warnings is not None:
                        warnings.append(f"line {line_no}: skipped ({exc})")
        report_path = source.with_name(source.name + ".report.json")
        if report_path.exists():
            from .mining import AugmentationReport

            store.augmentation_report = AugmentationReport.from_dict(
                json.loads(report_path.read_text(encoding="utf-8"))
            )
        return store
