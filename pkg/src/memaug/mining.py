"""Attribute mining: prompt a chat backend and parse its annotation output.

``AttributeMiner`` owns the mode triple (perspective, granularity,
prioritization), selects the matching prompt template, and retries failed
calls. Corpus-level mining fans out over a thread pool and aggregates an
:class:`AugmentationReport`; individual failures never abort the stream.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .annotations import (
    Annotation,
    Granularity,
    Perspective,
    Prioritization,
    normalize_name,
    parse_annotation,
    parse_turn_annotations,
)
from .backends import ChatBackend
from .errors import AugmentFailure, BackendRefusal, TransportError
from .store import ItemKind, MemoryItem
from .templates import (
    DEFAULT_LENGTH_BUDGET,
    QUESTION_AUGMENTATION,
    ResponseFormat,
    TemplateRegistry,
    build_prompt,
)
from .validation import ParamsMixin


@dataclass(frozen=True)
class QueryAnnotation:
    """Mined view of a question: who it is about and which attributes matter."""

    persons: tuple[str, ...] = ()
    attributes: tuple[str, ...] = ()


@dataclass
class AugmentationReport:
    """Success/failure accounting for one corpus pass."""

    total: int = 0
    succeeded: int = 0
    failed: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.succeeded + self.failed != self.total:
            raise ValueError("succeeded + failed must equal total")

    @property
    def failure_rate(self) -> float:
        return self.failed / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "failure_rate": self.failure_rate,
            "failures": [{"item_id": i, "reason": r} for i, r in self.failures],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentationReport":
        return cls(
            total=data["total"],
            succeeded=data["succeeded"],
            failed=data["failed"],
            failures=[(f["item_id"], f["reason"]) for f in data.get("failures", [])],
        )


_PERSON_SEGMENT = re.compile(r"person\s*:\s*\[([^\]]*)\]", re.IGNORECASE)
_ATTRIBUTE_SEGMENT = re.compile(r"attributes\s*:\s*\[([^\]]*)\]", re.IGNORECASE)


def parse_person_attributes(text: str) -> QueryAnnotation:
    """Parse a ``Person:[names]Attributes:[names]`` response.

    Raises :class:`AugmentFailure` when neither segment is present. Names
    are comma-separated; attribute names are normalized.
    """
    person_match = _PERSON_SEGMENT.search(text)
    attribute_match = _ATTRIBUTE_SEGMENT.search(text)
    if person_match is None and attribute_match is None:
        raise AugmentFailure("unparseable", "no Person/Attributes segments found")

    def split(match: re.Match | None) -> list[str]:
        if match is None:
            return []
        return [part.strip() for part in match.group(1).split(",") if part.strip()]

    persons = split(person_match)
    attributes = [normalize_name(name) for name in split(attribute_match)]
    attributes = [name for name in attributes if name]
    return QueryAnnotation(persons=tuple(persons), attributes=tuple(attributes))


def turn_payload(item: MemoryItem) -> str:
    """Payload line for a dialogue turn: ``[turn_id] speaker: text``."""
    speaker = item.speaker or "unknown"
    return f"[{item.turn_id}] {speaker}: {item.content}"


class AttributeMiner(ParamsMixin):
    """Mines attribute annotations for memory items, questions, and text.

    Parameters mirror the augmentation modes: ``perspective`` selects whether
    attributes describe the stored entity or the conversation, ``granularity``
    the unit of conversation, and ``prioritization`` whether the backend is
    asked to order pairs by relevance. Entity-centric mining requires
    granularity ``NOT_APPLICABLE``.
    """

    def __init__(
        self,
        backend: ChatBackend,
        *,
        perspective: Perspective = Perspective.CONVERSATION_CENTRIC,
        granularity: Granularity = Granularity.TURN_LEVEL,
        prioritization: Prioritization = Prioritization.BASIC,
        registry: TemplateRegistry | None = None,
        max_retries: int = 2,
        length_budget: int = DEFAULT_LENGTH_BUDGET,
        parallelism: int = 1,
    ):
        if perspective is Perspective.ENTITY_CENTRIC and granularity is not Granularity.NOT_APPLICABLE:
            raise ValueError("entity-centric mining requires granularity NOT_APPLICABLE")
        if max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        self.backend = backend
        self.perspective = perspective
        self.granularity = granularity
        self.prioritization = prioritization
        self.registry = registry or TemplateRegistry()
        self.max_retries = max_retries
        self.length_budget = length_budget
        self.parallelism = parallelism

    def _complete(self, template, payload: str) -> str:
        prompt = build_prompt(template, payload, length_budget=self.length_budget)
        return self.backend.complete(prompt, template=template, payload=payload)

    def _parse_response(self, response: str, template, item: MemoryItem | None) -> Annotation:
        if template.expected_format is ResponseFormat.TURN_SCOPED_PAIR_LIST:
            scoped = parse_turn_annotations(response)
            if item is not None and item.turn_id:
                for group in scoped:
                    if group.dialog_id == item.turn_id:
                        return group.annotation
            if scoped:
                return scoped[0].annotation
            return Annotation()
        return parse_annotation(response)

    def mine_text(self, text: str, *, item: MemoryItem | None = None) -> Annotation:
        """Mine one payload string; retries, then raises AugmentFailure.

        The returned annotation always carries this miner's mode tags and at
        least one pair (a zero-pair parse counts as a failure).
        """
        if not text:
            raise ValueError("payload must be non-empty")
        template = self.registry.for_modes(
            self.perspective, self.granularity, self.prioritization
        )
        failure = AugmentFailure("unparseable", "no attempts made")
        for _ in range(self.max_retries + 1):
            try:
                response = self._complete(template, text)
            except TransportError as exc:
                failure = AugmentFailure("transport", str(exc))
                continue
            except BackendRefusal as exc:
                failure = AugmentFailure("refusal", str(exc))
                continue
            annotation = self._parse_response(response, template, item)
            if len(annotation) == 0:
                failure = AugmentFailure("unparseable", "response contained no pairs")
                continue
            return annotation.with_modes(
                perspective=self.perspective,
                granularity=self.granularity,
                prioritization=self.prioritization,
            )
        raise failure

    def mine(self, item: MemoryItem) -> Annotation:
        """Mine one memory item using the payload convention for its kind."""
        if not item.content:
            raise ValueError("item content must be non-empty")
        if item.kind is ItemKind.DIALOGUE_TURN and self.granularity is Granularity.TURN_LEVEL:
            payload = turn_payload(item)
        else:
            payload = item.content
        return self.mine_text(payload, item=item)

    def mine_question(self, question: str) -> QueryAnnotation:
        """Identify the persons and attribute names a question asks about."""
        if not question:
            raise ValueError("question must be non-empty")
        template = self.registry.get(QUESTION_AUGMENTATION.id)
        failure = AugmentFailure("unparseable", "no attempts made")
        for _ in range(self.max_retries + 1):
            try:
                response = self._complete(template, question)
            except TransportError as exc:
                failure = AugmentFailure("transport", str(exc))
                continue
            except BackendRefusal as exc:
                failure = AugmentFailure("refusal", str(exc))
                continue
            try:
                return parse_person_attributes(response)
            except AugmentFailure as exc:
                failure = exc
        raise failure

    def mine_corpus(
        self, items: list[MemoryItem]
    ) -> tuple[list[tuple[str, Annotation]], AugmentationReport]:
        """Mine every item; failures are recorded, never raised.

        Results come back in input order regardless of ``parallelism``. Each
        item is augmented from its own content only, so the fan-out cannot
        change any result.
        """
        ids = [item.id for item in items]
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be unique")

        def run(item: MemoryItem) -> Annotation | AugmentFailure:
            try:
                return self.mine(item)
            except AugmentFailure as exc:
                return exc

        if self.parallelism > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                outcomes = list(pool.map(run, items))
        else:
            outcomes = [run(item) for item in items]

        results: list[tuple[str, Annotation]] = []
        failures: list[tuple[str, str]] = []
        for item, outcome in zip(items, outcomes):
            if isinstance(outcome, AugmentFailure):
                failures.append((item.id, outcome.reason))
            else:
                results.append((item.id, outcome))
        report = AugmentationReport(
            total=len(items),
            succeeded=len(results),
            failed=len(failures),
            failures=failures,
        )
        return results, report
