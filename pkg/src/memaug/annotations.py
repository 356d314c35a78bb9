"""Attribute-value annotation model and its ``[name]<value>`` surface syntax.

An annotation is an ordered sequence of attribute-value pairs attached to one
unit of memory, plus three mode tags: the perspective the attributes were
mined from, the granularity of the annotated unit, and whether pair order
carries relevance. The textual form is a whitespace-separated run of
``[name]<value>`` pairs; turn-scoped blocks wrap pairs as
``{speaker:[dialog_id]:[name]<value>...}``.

Parsing is lenient by default (malformed spans are skipped and reported via
an optional warnings sink) because annotation text usually comes from an LLM.
Strict mode raises :class:`~memaug.errors.ParseError` and is meant for tests
and round-trip checks.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import ParseError


class Perspective(Enum):
    """Whether attributes describe a stored entity or the user interaction."""

    ENTITY_CENTRIC = "entity_centric"
    CONVERSATION_CENTRIC = "conversation_centric"


class Granularity(Enum):
    """Unit of conversation the annotation covers."""

    TURN_LEVEL = "turn_level"
    SESSION_LEVEL = "session_level"
    NOT_APPLICABLE = "not_applicable"


class Prioritization(Enum):
    """Whether pair order encodes relevance (index 0 = most relevant)."""

    BASIC = "basic"
    PRIORITY = "priority"


def normalize_name(name: str) -> str:
    """Case-fold and collapse inner whitespace; idempotent."""
    return " ".join(name.split()).casefold()


@dataclass(frozen=True)
class AttributePair:
    """One mined attribute: a normalized name and a verbatim (trimmed) value."""

    name: str
    value: str

    def __post_init__(self):
        object.__setattr__(self, "name", normalize_name(self.name))
        object.__setattr__(self, "value", self.value.strip())
        if not self.name:
            raise ValueError("attribute name is empty after normalization")
        if "[" in self.name or "]" in self.name:
            raise ValueError(f"attribute name may not contain '[' or ']': {self.name!r}")
        if "<" in self.value or ">" in self.value:
            raise ValueError(f"attribute value may not contain '<' or '>': {self.value!r}")

    def render(self) -> str:
        return f"[{self.name}]<{self.value}>"


@dataclass(frozen=True)
class Annotation:
    """Ordered attribute pairs plus the mode tags they were produced under.

    Exact duplicate (name, value) pairs are dropped at construction, keeping
    the first occurrence; the same name may recur with distinct values.
    Instances are immutable and safe to share between threads.
    """

    pairs: tuple[AttributePair, ...] = ()
    perspective: Perspective = Perspective.CONVERSATION_CENTRIC
    granularity: Granularity = Granularity.NOT_APPLICABLE
    prioritization: Prioritization = Prioritization.BASIC

    def __post_init__(self):
        seen: set[tuple[str, str]] = set()
        deduped = []
        for pair in self.pairs:
            key = (pair.name, pair.value)
            if key not in seen:
                seen.add(key)
                deduped.append(pair)
        object.__setattr__(self, "pairs", tuple(deduped))

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.pairs)

    def with_modes(
        self,
        perspective: Perspective | None = None,
        granularity: Granularity | None = None,
        prioritization: Prioritization | None = None,
    ) -> "Annotation":
        """Copy with some mode tags replaced; pairs are untouched."""
        return dataclasses.replace(
            self,
            perspective=perspective or self.perspective,
            granularity=granularity or self.granularity,
            prioritization=prioritization or self.prioritization,
        )

    def to_dict(self) -> dict:
        return {
            "pairs": [{"name": p.name, "value": p.value} for p in self.pairs],
            "perspective": self.perspective.value,
            "granularity": self.granularity.value,
            "prioritization": self.prioritization.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Annotation":
        try:
            pairs = tuple(AttributePair(p["name"], p["value"]) for p in data["pairs"])
            return cls(
                pairs=pairs,
                perspective=Perspective(data["perspective"]),
                granularity=Granularity(data["granularity"]),
                prioritization=Prioritization(data["prioritization"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed annotation record: {exc}") from exc


@dataclass(frozen=True)
class TurnScopedAnnotation:
    """A turn-level annotation labelled with the speaker and dialog id."""

    speaker: str
    dialog_id: str
    annotation: Annotation

    def __post_init__(self):
        if not self.dialog_id:
            raise ValueError("dialog_id must be non-empty")
        if self.annotation.granularity is not Granularity.TURN_LEVEL:
            raise ValueError("turn-scoped annotation must be turn-level")


def _warn(warnings: list[str] | None, position: int, reason: str) -> None:
    if warnings is not None:
        warnings.append(f"{reason} (position {position})")


def _scan_pair(
    text: str,
    i: int,
    *,
    strict: bool,
    warnings: list[str] | None,
    base: int = 0,
) -> tuple[AttributePair | None, int]:
    """Scan one ``[name]<value>`` starting at ``text[i] == '['``.

    Returns (pair, next_index). ``pair`` is None when the span was dropped:
    either malformed (lenient mode) or carrying an empty/"none" value, which
    the surface syntax cannot represent and is skipped by design.
    """
    n = len(text)
    close = text.find("]", i + 1)
    if close == -1:
        if strict:
            raise ParseError(base + i, "unclosed attribute bracket")
        _warn(warnings, base + i, "skipped span with unclosed attribute bracket")
        return None, n
    name_raw = text[i + 1 : close]
    j = close + 1
    while j < n and text[j].isspace():
        j += 1
    if j >= n or text[j] != "<":
        if strict:
            raise ParseError(base + i, "attribute name not followed by <value>")
        _warn(warnings, base + i, "skipped attribute without a <value>")
        return None, close + 1
    vclose = text.find(">", j + 1)
    if vclose == -1:
        if strict:
            raise ParseError(base + j, "unclosed value bracket")
        _warn(warnings, base + j, "skipped span with unclosed value bracket")
        return None, n
    value_raw = text[j + 1 : vclose]
    next_i = vclose + 1
    if "<" in value_raw:
        if strict:
            raise ParseError(base + j, "'<' inside value")
        _warn(warnings, base + j, "skipped value containing '<'")
        return None, next_i
    name = normalize_name(name_raw)
    if not name:
        if strict:
            raise ParseError(base + i, "empty attribute name")
        _warn(warnings, base + i, "skipped pair with empty attribute name")
        return None, next_i
    if "[" in name:
        if strict:
            raise ParseError(base + i, "'[' inside attribute name")
        _warn(warnings, base + i, "skipped pair with '[' inside its name")
        return None, next_i
    value = value_raw.strip()
    if not value or value.casefold() == "none":
        # Unrepresentable content; mirrors the prompt instruction to skip
        # attributes without real values.
        return None, next_i
    return AttributePair(name, value), next_i


def _scan_pairs(
    text: str,
    start: int,
    stop: int,
    *,
    strict: bool,
    warnings: list[str] | None,
    base: int = 0,
    terminator: str | None = None,
) -> tuple[list[AttributePair], int]:
    """Scan pairs in ``text[start:stop]``; stop early at ``terminator``."""
    pairs: list[AttributePair] = []
    i = start
    while i < stop:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if terminator is not None and ch == terminator:
            return pairs, i
        if ch != "[":
            if strict:
                raise ParseError(base + i, "stray text outside [name]<value> pair")
            _warn(warnings, base + i, "skipped stray text between pairs")
            nxt = text.find("[", i + 1, stop)
            term = text.find(terminator, i + 1, stop) if terminator else -1
            if term != -1 and (nxt == -1 or term < nxt):
                return pairs, term
            if nxt == -1:
                return pairs, stop
            i = nxt
            continue
        pair, i = _scan_pair(text, i, strict=strict, warnings=warnings, base=base)
        if pair is not None:
            pairs.append(pair)
    return pairs, stop


def parse_annotation(
    text: str,
    *,
    strict: bool = False,
    warnings: list[str] | None = None,
    perspective: Perspective = Perspective.CONVERSATION_CENTRIC,
    granularity: Granularity = Granularity.NOT_APPLICABLE,
    prioritization: Prioritization = Prioritization.BASIC,
) -> Annotation:
    """Parse a run of ``[name]<value>`` pairs into an :class:`Annotation`.

    Pairs come back in textual order; names are normalized, values trimmed.
    Empty input yields an empty annotation. In lenient mode (the default)
    unparseable spans are skipped and described in ``warnings`` when a list
    is supplied; strict mode raises :class:`ParseError` instead.
    """
    pairs, _ = _scan_pairs(text, 0, len(text), strict=strict, warnings=warnings)
    return Annotation(
        pairs=tuple(pairs),
        perspective=perspective,
        granularity=granularity,
        prioritization=prioritization,
    )


def _parse_group(
    text: str,
    i: int,
    *,
    strict: bool,
    warnings: list[str] | None,
) -> tuple[TurnScopedAnnotation | None, int]:
    """Parse one ``{speaker:[dialog_id]:pairs}`` group at ``text[i] == '{'``."""
    n = len(text)
    colon = text.find(":", i + 1)
    brace = text.find("}", i + 1)
    if colon == -1 or (brace != -1 and brace < colon):
        if strict:
            raise ParseError(i, "turn group is missing its speaker segment")
        _warn(warnings, i, "skipped turn group without a speaker segment")
        return None, (brace + 1 if brace != -1 else n)
    speaker = text[i + 1 : colon].strip()
    if not speaker:
        if strict:
            raise ParseError(i, "turn group has an empty speaker")
        _warn(warnings, i, "skipped turn group with an empty speaker")
        return None, colon + 1
    j = colon + 1
    while j < n and text[j].isspace():
        j += 1
    if j >= n or text[j] != "[":
        if strict:
            raise ParseError(j if j < n else n, "turn group is missing its dialog id segment")
        _warn(warnings, i, "skipped turn group without a dialog id segment")
        return None, j
    id_close = text.find("]", j + 1)
    if id_close == -1:
        if strict:
            raise ParseError(j, "unclosed dialog id bracket")
        _warn(warnings, j, "skipped turn group with an unclosed dialog id")
        return None, n
    dialog_id = text[j + 1 : id_close].strip()
    if not dialog_id:
        if strict:
            raise ParseError(j, "turn group has an empty dialog id")
        _warn(warnings, j, "skipped turn group with an empty dialog id")
        return None, id_close + 1
    k = id_close + 1
    while k < n and text[k].isspace():
        k += 1
    if k >= n or text[k] != ":":
        if strict:
            raise ParseError(k if k < n else n, "expected ':' after the dialog id")
        _warn(warnings, i, "skipped turn group without ':' after the dialog id")
        return None, k
    pairs, end = _scan_pairs(
        text, k + 1, n, strict=strict, warnings=warnings, terminator="}"
    )
    if end >= n or text[end] != "}":
        if strict:
            raise ParseError(i, "unclosed turn group")
        _warn(warnings, i, "skipped unclosed turn group")
        return None, n
    annotation = Annotation(
        pairs=tuple(pairs),
        perspective=Perspective.CONVERSATION_CENTRIC,
        granularity=Granularity.TURN_LEVEL,
    )
    return TurnScopedAnnotation(speaker, dialog_id, annotation), end + 1


def parse_turn_annotations(
    text: str,
    *,
    strict: bool = False,
    warnings: list[str] | None = None,
) -> list[TurnScopedAnnotation]:
    """Parse ``{speaker:[dialog_id]:[name]<value>...}`` groups, in order.

    A single outer ``[...]`` wrapper around the groups is tolerated. Empty
    input yields an empty list.
    """
    stripped = text.strip()
    if (
        stripped.startswith("[")
        and stripped.endswith("]")
        and stripped[1:].lstrip().startswith("{")
    ):
        stripped = stripped[1:-1]
    out: list[TurnScopedAnnotation] = []
    i, n = 0, len(stripped)
    while i < n:
        ch = stripped[i]
        if ch.isspace():
            i += 1
            continue
        if ch != "{":
            if strict:
                raise ParseError(i, "stray text outside {...} turn group")
            _warn(warnings, i, "skipped stray text between turn groups")
            nxt = stripped.find("{", i + 1)
            if nxt == -1:
                break
            i = nxt
            continue
        scoped, i = _parse_group(stripped, i, strict=strict, warnings=warnings)
        if scoped is not None:
            out.append(scoped)
    return out


def render_annotation(ann: Annotation) -> str:
    """Serialize pairs as ``[name]<value>`` joined by single spaces.

    ``parse_annotation(render_annotation(a))`` reproduces ``a``'s pairs
    exactly, order included.
    """
    return " ".join(p.render() for p in ann.pairs)


def reorder_by_priority(ann: Annotation, ranking: Sequence[str]) -> Annotation:
    """Move pairs whose names appear in ``ranking`` to the front, in ranking
    order; the rest keep their original relative order. The result is tagged
    as priority-ordered. Ranked names absent from the annotation are ignored.
    """
    normalized = [normalize_name(name) for name in ranking]
    if len(set(normalized)) != len(normalized):
        raise ValueError("ranking contains duplicate names after normalization")
    position = {name: idx for idx, name in enumerate(normalized)}
    ranked = sorted(
        (p for p in ann.pairs if p.name in position),
        key=lambda p: position[p.name],
    )
    unranked = [p for p in ann.pairs if p.name not in position]
    return Annotation(
        pairs=tuple(ranked) + tuple(unranked),
        perspective=ann.perspective,
        granularity=ann.granularity,
        prioritization=Prioritization.PRIORITY,
    )
