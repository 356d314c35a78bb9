"""End-to-end task pipelines: question answering, recommendation, events.

Each runner wires mining, retrieval, and a generation backend together and
reduces per-example scores into :class:`~memaug.metrics.MetricReport`s.
Per-example failures are logged into the result and scored zero; they never
abort a run. Runs are deterministic given mock backends and a fixed seed.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Sequence

from .annotations import Annotation, Granularity, render_annotation
from .backends import ChatBackend, Embedder
from .datasets import (
    ConversationDataset,
    EventLabel,
    RecommendationDataset,
    mask_dialogue,
    session_text,
)
from .errors import AugmentFailure, EmptyQueryError, LabelNotFoundError, MemaugError
from .metrics import MetricReport, ndcg_at_k, normalize_title, recall_at_k, token_f1
from .mining import AttributeMiner
from .retrieval import (
    DEFAULT_QUERY_PARTS,
    QueryContext,
    QueryPart,
    RetrievalMode,
    RetrievalResult,
    VectorIndex,
    retrieve,
)
from .store import MatchPolicy, MemoryStore
from .templates import ANSWER_GENERATION, EVENT_SUMMARY, RECOMMENDATION, SUMMARY_JUDGE, build_prompt

logger = logging.getLogger(__name__)

DEFAULT_EVENT_ATTRIBUTE_TERMS = (
    "event",
    "events",
    "life event",
    "life events",
    "activity",
    "activities",
)


@dataclass(frozen=True)
class RetrievalSetup:
    """Everything retrieval needs, bundled so runners stay small."""

    mode: RetrievalMode = RetrievalMode.EMBEDDING_BASED
    k: int = 5
    policy: MatchPolicy = MatchPolicy.NAME_AND_VALUE
    index: VectorIndex | None = None
    embedder: Embedder | None = None
    query_parts: tuple[QueryPart, ...] = DEFAULT_QUERY_PARTS


@dataclass
class QAResultRow:
    question: str
    category: str
    retrieved_ids: tuple[str, ...]
    recall: float | None
    f1: float
    answer: str
    error: str | None = None


@dataclass
class QATaskResult:
    recall_report: MetricReport
    f1_report: MetricReport
    rows: list[QAResultRow] = field(default_factory=list)
    retrieved_counts: list[int] = field(default_factory=list)

    @property
    def avg_items_retrieved(self) -> float:
        counts = self.retrieved_counts
        return sum(counts) / len(counts) if counts else 0.0

    @property
    def retrieval_misses(self) -> int:
        """Questions whose retrieval came back empty (answered from the
        question alone rather than through an invented fallback)."""
        return sum(1 for row in self.rows if not row.error and not row.retrieved_ids)


def _answer_context(store: MemoryStore, result: RetrievalResult, question: str) -> str:
    lines = []
    for hit in result.hits:
        item = store.get(hit.item_id)
        annotation = store.annotation_for(hit.item_id)
        rendered = f" :: {render_annotation(annotation)}" if annotation else ""
        speaker = f"{item.speaker}: " if item.speaker else ""
        lines.append(f"{speaker}{item.content}{rendered}")
    block = "\n".join(lines) if lines else "(no turns retrieved)"
    return f"Turns:\n{block}\nQuestion: {question}"


def run_qa_task(
    dataset: ConversationDataset,
    store: MemoryStore,
    *,
    miner: AttributeMiner,
    answer_backend: ChatBackend,
    setup: RetrievalSetup,
) -> QATaskResult:
    """Question answering: augment the question, retrieve turns, answer.

    Recall@k is scored against the gold turn ids; adversarial questions with
    an empty gold set are skipped for recall (there is no turn to find) but
    still scored for answer F1.
    """
    recall_scores: list[tuple[str, float]] = []
    f1_scores: list[tuple[str, float]] = []
    rows: list[QAResultRow] = []
    counts: list[int] = []
    for example in dataset.qa:
        category = example.category.value
        error = None
        retrieved: tuple[str, ...] = ()
        answer = ""
        try:
            mined = miner.mine_question(example.question)
            query = QueryContext(
                text=example.question,
                attribute_names=mined.attributes,
                persons=mined.persons,
            )
            try:
                result = retrieve(
                    store,
                    query,
                    setup.mode,
                    k=setup.k,
                    policy=setup.policy,
                    index=setup.index,
                    embedder=setup.embedder,
                    query_parts=setup.query_parts,
                )
            except EmptyQueryError:
                # nothing to match on: answer from the question alone rather
                # than inventing a fallback retrieval
                result = RetrievalResult(hits=(), mode=setup.mode)
            retrieved = result.ids()
            counts.append(len(retrieved))
            prompt_payload = _answer_context(store, result, example.question)
            prompt = build_prompt(ANSWER_GENERATION, prompt_payload)
            answer = answer_backend.complete(
                prompt, template=ANSWER_GENERATION, payload=prompt_payload
            )
        except (AugmentFailure, EmptyQueryError, MemaugError) as exc:
            error = str(exc)
            logger.warning("qa example failed (%s): %s", category, exc)
        recall = None
        if example.gold_turn_ids:
            recall = (
                0.0 if error else recall_at_k(retrieved, example.gold_turn_ids, setup.k)
            )
            recall_scores.append((category, recall))
        f1 = 0.0 if error else token_f1(answer, example.gold_answer)
        f1_scores.append((category, f1))
        rows.append(
            QAResultRow(
                question=example.question,
                category=category,
                retrieved_ids=retrieved,
                recall=recall,
                f1=f1,
                answer=answer,
                error=error,
            )
        )
    return QATaskResult(
        recall_report=MetricReport.from_scores("recall", recall_scores, k=setup.k),
        f1_report=MetricReport.from_scores("token_f1", f1_scores),
        rows=rows,
        retrieved_counts=counts,
    )


@dataclass
class RecResultRow:
    dialogue_id: str
    retrieved_ids: tuple[str, ...]
    recommendations: tuple[str, ...]
    scores: dict[str, float]
    error: str | None = None


@dataclass
class RecTaskResult:
    reports: dict[str, MetricReport]
    rows: list[RecResultRow] = field(default_factory=list)
    skipped_masking: int = 0
    retrieved_counts: list[int] = field(default_factory=list)

    @property
    def avg_items_retrieved(self) -> float:
        counts = self.retrieved_counts
        return sum(counts) / len(counts) if counts else 0.0


def _candidate_block(store: MemoryStore, result: RetrievalResult) -> str:
    lines = []
    for hit in result.hits:
        item = store.get(hit.item_id)
        lines.append(f"- {item.content}")
        annotation = store.annotation_for(hit.item_id)
        if annotation:
            lines.append(f"  {render_annotation(annotation)}")
    return "\n".join(lines) if lines else "(no candidates retrieved)"


def parse_ranked_titles(response: str) -> tuple[str, ...]:
    """Titles from a ranked-list response: one per line, bullets stripped."""
    titles = []
    for line in response.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("- "):
            line = line[2:]
        else:
            head, _, rest = line.partition(". ")
            if head.isdigit() and rest:
                line = rest
        titles.append(line.strip())
    return tuple(titles)


def run_rec_task(
    dataset: RecommendationDataset,
    store: MemoryStore,
    *,
    miner: AttributeMiner,
    rec_backend: ChatBackend,
    setup: RetrievalSetup,
    n: int = 200,
    k: int = 10,
    seed: int = 0,
    cutoffs: Sequence[int] = (1, 5, 10),
) -> RecTaskResult:
    """Conversational recommendation over masked dialogues.

    Samples ``n`` dialogues with a seeded RNG, masks ground-truth mentions
    and cuts each dialogue at the first mask, mines the remaining turns
    conversation-centrically, retrieves ``k`` candidate items, prompts the
    recommendation backend for a ranked list, and scores direct title
    matches with Recall@N and NDCG@N.
    """
    if n > len(dataset.dialogues):
        raise ValueError(
            f"cannot sample {n} dialogues from a dataset of {len(dataset.dialogues)}"
        )
    rng = random.Random(seed)
    sampled = rng.sample(list(dataset.dialogues), n)
    score_rows: dict[tuple[str, int], list[tuple[str, float]]] = {
        (metric, cutoff): [] for metric in ("recall", "ndcg") for cutoff in cutoffs
    }
    rows: list[RecResultRow] = []
    counts: list[int] = []
    skipped = 0
    for dialogue in sampled:
        try:
            masked = mask_dialogue(dialogue)
        except LabelNotFoundError as exc:
            skipped += 1
            logger.warning("dialogue %s skipped: %s", dialogue.dialogue_id, exc)
            continue
        error = None
        retrieved: tuple[str, ...] = ()
        recommendations: tuple[str, ...] = ()
        try:
            annotation = miner.mine_text(masked.text())
            query = QueryContext(text=masked.text(), annotation=annotation)
            result = retrieve(
                store,
                query,
                setup.mode,
                k=k,
                policy=setup.policy,
                index=setup.index,
                embedder=setup.embedder,
                query_parts=setup.query_parts,
            )
            retrieved = result.ids()
            counts.append(len(retrieved))
            payload = (
                f"Conversation:\n{masked.text()}\nCandidates:\n"
                f"{_candidate_block(store, result)}"
            )
            prompt = build_prompt(RECOMMENDATION, payload)
            response = rec_backend.complete(prompt, template=RECOMMENDATION, payload=payload)
            recommendations = parse_ranked_titles(response)
        except (AugmentFailure, EmptyQueryError, MemaugError) as exc:
            error = str(exc)
            logger.warning("dialogue %s failed: %s", dialogue.dialogue_id, exc)
        gold = {normalize_title(label) for label in dialogue.gold_labels}
        predicted = [normalize_title(title) for title in recommendations]
        scores: dict[str, float] = {}
        for cutoff in cutoffs:
            recall = 0.0 if error else recall_at_k(predicted, gold, cutoff)
            ndcg = 0.0 if error else ndcg_at_k(predicted, gold, cutoff)
            scores[f"recall@{cutoff}"] = recall
            scores[f"ndcg@{cutoff}"] = ndcg
            score_rows[("recall", cutoff)].append(("all", recall))
            score_rows[("ndcg", cutoff)].append(("all", ndcg))
        rows.append(
            RecResultRow(
                dialogue_id=dialogue.dialogue_id,
                retrieved_ids=retrieved,
                recommendations=recommendations,
                scores=scores,
                error=error,
            )
        )
    reports = {
        f"{metric}@{cutoff}": MetricReport.from_scores(metric, scored, k=cutoff)
        for (metric, cutoff), scored in score_rows.items()
    }
    return RecTaskResult(
        reports=reports,
        rows=rows,
        skipped_masking=skipped,
        retrieved_counts=counts,
    )


@dataclass
class EventSummaryRow:
    session_id: str
    level: str
    input_mode: str
    event_pairs: int
    summary: str
    judge_scores: dict[str, float] | None = None
    skipped_reason: str | None = None


@dataclass
class EventTaskResult:
    rows: list[EventSummaryRow] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return sum(1 for row in self.rows if row.skipped_reason)


def filter_event_pairs(
    annotation: Annotation,
    terms: Sequence[str] = DEFAULT_EVENT_ATTRIBUTE_TERMS,
) -> Annotation:
    """Keep only pairs whose name contains an event-related term.

    A term matches when its words appear as a contiguous word sequence in
    the attribute name, so "event" matches "life event" but not "prevent".
    """
    term_words = [tuple(term.split()) for term in terms]

    def matches(name: str) -> bool:
        words = tuple(name.split())
        for needle in term_words:
            span = len(needle)
            if span and any(
                words[i : i + span] == needle for i in range(len(words) - span + 1)
            ):
                return True
        return False

    return Annotation(
        pairs=tuple(p for p in annotation.pairs if matches(p.name)),
        perspective=annotation.perspective,
        granularity=annotation.granularity,
        prioritization=annotation.prioritization,
    )


def parse_judge_scores(response: str) -> dict[str, float] | None:
    """Pull Relevance/Coherence/Consistency scores out of a judge reply."""
    scores: dict[str, float] = {}
    for line in response.splitlines():
        name, sep, value = line.partition(":")
        key = name.strip().casefold()
        if sep and key in ("relevance", "coherence", "consistency"):
            try:
                scores[key] = float(value.strip())
            except ValueError:
                continue
    return scores if len(scores) == 3 else None


def run_event_summarization(
    dataset: ConversationDataset,
    store: MemoryStore,
    *,
    level: Granularity,
    input_mode: str = "annotations_only",
    summarizer: ChatBackend,
    judge: ChatBackend | None = None,
    event_terms: Sequence[str] = DEFAULT_EVENT_ATTRIBUTE_TERMS,
) -> EventTaskResult:
    """Summarize each session's event attributes, optionally judging them.

    ``level`` selects where annotations come from: per-turn annotations
    gathered across the session, or the single session-level annotation.
    ``input_mode`` is ``annotations_only`` or ``annotations_plus_dialogues``.
    Sessions whose filtered annotations are empty are recorded and skipped.
    """
    if level not in (Granularity.TURN_LEVEL, Granularity.SESSION_LEVEL):
        raise ValueError("level must be TURN_LEVEL or SESSION_LEVEL")
    if input_mode not in ("annotations_only", "annotations_plus_dialogues"):
        raise ValueError(f"unknown input mode {input_mode!r}")
    gold_by_session: dict[str, list[EventLabel]] = {}
    for label in dataset.events:
        gold_by_session.setdefault(label.session_id, []).append(label)
    result = EventTaskResult()
    for session in dataset.sessions:
        if level is Granularity.TURN_LEVEL:
            annotations = [
                store.annotation_for(turn.turn_id)
                for turn in session.turns
                if store.annotation_for(turn.turn_id) is not None
            ]
        else:
            session_ann = store.annotation_for(session.session_id)
            annotations = [session_ann] if session_ann is not None else []
        event_pairs = []
        for annotation in annotations:
            event_pairs.extend(filter_event_pairs(annotation, event_terms).pairs)
        if not event_pairs:
            result.rows.append(
                EventSummaryRow(
                    session_id=session.session_id,
                    level=level.value,
                    input_mode=input_mode,
                    event_pairs=0,
                    summary="",
                    skipped_reason="no event attributes after filtering",
                )
            )
            continue
        rendered = " ".join(pair.render() for pair in event_pairs)
        if input_mode == "annotations_plus_dialogues":
            payload = f"{rendered}\nDialogue:\n{session_text(session)}"
        else:
            payload = rendered
        prompt = build_prompt(EVENT_SUMMARY, payload)
        summary = summarizer.complete(prompt, template=EVENT_SUMMARY, payload=payload)
        judge_scores = None
        if judge is not None:
            references = "\n".join(
                label.summary for label in gold_by_session.get(session.session_id, [])
            )
            judge_payload = f"Reference:\n{references}\nCandidate:\n{summary}"
            judge_prompt = build_prompt(SUMMARY_JUDGE, judge_payload)
            judge_response = judge.complete(
                judge_prompt, template=SUMMARY_JUDGE, payload=judge_payload
            )
            judge_scores = parse_judge_scores(judge_response)
        result.rows.append(
            EventSummaryRow(
                session_id=session.session_id,
                level=level.value,
                input_mode=input_mode,
                event_pairs=len(event_pairs),
                summary=summary,
                judge_scores=judge_scores,
            )
        )
    return result
