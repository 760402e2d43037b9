"""Benchmark record loaders and reported metrics.

Pure functions over loaded records: yes/no accuracy, the two-question
subset score (question accuracy plus both-correct rate, max 200), the
four-way answer-transition partition, and per-round efficiency accounting.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from .model import BinaryAnswer, RunTrace


class EmptyInput(Exception):
    pass


class MissingPrediction(Exception):
    pass


class BadRecord(Exception):
    pass


class PopeSource(str, Enum):
    COCO = "coco"
    AOKVQA = "aokvqa"
    GQA = "gqa"


class PopeSplit(str, Enum):
    RANDOM = "random"
    POPULAR = "popular"
    ADVERSARIAL = "adversarial"


class MmeSubset(str, Enum):
    EXISTENCE = "existence"
    COUNT = "count"
    POSITION = "position"
    COLOR = "color"


@dataclass(frozen=True)
class PopeRecord:
    question_id: str
    image_ref: str
    question: str
    label: BinaryAnswer
    source: PopeSource
    split: PopeSplit


@dataclass(frozen=True)
class MmeRecord:
    image_ref: str
    subset: MmeSubset
    questions: tuple[tuple[str, BinaryAnswer], tuple[str, BinaryAnswer]]


def _require(d: dict, key: str, lineno: int) -> object:
    if key not in d:
        raise BadRecord(f"line {lineno}: missing field {key!r}")
    return d[key]


def load_pope_jsonl(path: Union[str, Path]) -> list[PopeRecord]:
    """Native layout: one JSON object per line with question_id, image,
    question, label, source, split.
    """
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        d = json.loads(line)
        records.append(
            PopeRecord(
                question_id=str(_require(d, "question_id", lineno)),
                image_ref=str(_require(d, "image", lineno)),
                question=str(_require(d, "question", lineno)),
                label=BinaryAnswer.parse(str(_require(d, "label", lineno))),
                source=PopeSource(_require(d, "source", lineno)),
                split=PopeSplit(_require(d, "split", lineno)),
            )
        )
    return records


_COMMUNITY_NAME_RE = re.compile(r"(coco|aokvqa|gqa)_pope_(random|popular|adversarial)")


def load_pope_community(
    path: Union[str, Path],
    source: Optional[str] = None,
    split: Optional[str] = None,
) -> list[PopeRecord]:
    """Adapter for the common community layout: one JSON object per line
    with question_id, image, text, label ("yes"/"no"). Source and split are
    taken from the filename when not given explicitly.
    """
    path = Path(path)
    if source is None or split is None:
        match = _COMMUNITY_NAME_RE.search(path.name)
        if not match:
            raise BadRecord(
                f"cannot infer source/split from filename {path.name!r};"
                " pass them explicitly"
            )
        source = source or match.group(1)
        split = split or match.group(2)
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        d = json.loads(line)
        records.append(
            PopeRecord(
                question_id=str(_require(d, "question_id", lineno)),
                image_ref=str(_require(d, "image", lineno)),
                question=str(_require(d, "text", lineno)),
                label=BinaryAnswer.parse(str(_require(d, "label", lineno))),
                source=PopeSource(source),
                split=PopeSplit(split),
            )
        )
    return records


def load_pope(path: Union[str, Path], **kwargs) -> list[PopeRecord]:
    """Native layout first, community layout as fallback."""
    try:
        return load_pope_jsonl(path)
    except (BadRecord, ValueError, KeyError):
        return load_pope_community(path, **kwargs)


def load_mme_jsonl(path: Union[str, Path]) -> list[MmeRecord]:
    """One JSON object per line: image, subset, questions (exactly two
    objects with question and answer).
    """
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        d = json.loads(line)
        questions = _require(d, "questions", lineno)
        if not isinstance(questions, list) or len(questions) != 2:
            raise BadRecord(f"line {lineno}: need exactly two questions")
        qs = tuple(
            (str(q["question"]), BinaryAnswer.parse(str(q["answer"]))) for q in questions
        )
        records.append(
            MmeRecord(
                image_ref=str(_require(d, "image", lineno)),
                subset=MmeSubset(_require(d, "subset", lineno)),
                questions=qs,  # type: ignore[arg-type]
            )
        )
    return records


def normalize_prediction(text) -> Optional[BinaryAnswer]:
    """Leading yes/no token, case-insensitive; anything else is malformed."""
    if isinstance(text, BinaryAnswer):
        return text
    if text is None:
        return None
    tokens = re.findall(r"[a-zA-Z]+", str(text))
    if not tokens:
        return None
    head = tokens[0].lower()
    if head == "yes":
        return BinaryAnswer.YES
    if head == "no":
        return BinaryAnswer.NO
    return None


def pope_report(pairs: Sequence[tuple[object, BinaryAnswer]]) -> dict:
    if not pairs:
        raise EmptyInput("no (prediction, label) pairs")
    correct = 0
    malformed = 0
    for prediction, label in pairs:
        pred = normalize_prediction(prediction)
        if pred is None:
            malformed += 1
        elif pred is label:
            correct += 1
    return {
        "total": len(pairs),
        "correct": correct,
        "malformed": malformed,
        "accuracy": round(100.0 * correct / len(pairs), 2),
    }


def pope_accuracy(pairs: Sequence[tuple[object, BinaryAnswer]]) -> float:
    return pope_report(pairs)["accuracy"]


def mme_subset_score(
    records: Sequence[tuple[MmeRecord, tuple[object, object]]],
) -> float:
    """100 x question-level accuracy + 100 x image-level both-correct rate."""
    if not records:
        raise EmptyInput("no records")
    q_correct = 0
    q_total = 0
    both_correct = 0
    for record, predictions in records:
        if predictions is None or len(predictions) != 2 or None in predictions:
            raise MissingPrediction(f"record for {record.image_ref!r} lacks predictions")
        hits = []
        for (question, gold), prediction in zip(record.questions, predictions):
            pred = normalize_prediction(prediction)
            hits.append(pred is gold)
        q_correct += sum(hits)
        q_total += 2
        both_correct += int(all(hits))
    score = 100.0 * q_correct / q_total + 100.0 * both_correct / len(records)
    return round(score, 2)


@dataclass(frozen=True)
class TransitionStats:
    correctly_preserved: int
    error_corrected: int
    over_corrected: int
    incorrectly_preserved: int

    @property
    def total(self) -> int:
        return (
            self.correctly_preserved
            + self.error_corrected
            + self.over_corrected
            + self.incorrectly_preserved
        )

    def to_dict(self) -> dict:
        return {
            "correctly_preserved": self.correctly_preserved,
            "error_corrected": self.error_corrected,
            "over_corrected": self.over_corrected,
            "incorrectly_preserved": self.incorrectly_preserved,
            "total": self.total,
        }


def transition_stats(pairs: Sequence[tuple[bool, bool]]) -> TransitionStats:
    """Partition (initial_correct, final_correct) pairs into four buckets."""
    if not pairs:
        raise EmptyInput("no transition pairs")
    buckets = {(True, True): 0, (False, True): 0, (True, False): 0, (False, False): 0}
    for initial, final in pairs:
        buckets[(bool(initial), bool(final))] += 1
    return TransitionStats(
        correctly_preserved=buckets[(True, True)],
        error_corrected=buckets[(False, True)],
        over_corrected=buckets[(True, False)],
        incorrectly_preserved=buckets[(False, False)],
    )


def transitions_from_records(records: Sequence[dict]) -> tuple[list[tuple[bool, bool]], int]:
    """Pairs from raw trace records that carry a gold_label; returns the
    pairs plus how many records were skipped for lacking one.
    """
    pairs = []
    skipped = 0
    for record in records:
        gold = record.get("gold_label")
        if gold is None:
            skipped += 1
            continue
        label = BinaryAnswer.parse(str(gold))
        initial = normalize_prediction(record.get("initial_answer")) is label
        final = normalize_prediction(record.get("final_answer")) is label
        pairs.append((initial, final))
    return pairs, skipped


def efficiency_report(
    traces: Sequence[RunTrace], peak_memory_mb: Optional[float] = None
) -> dict:
    """Per-round mean latency and checked-case counts (samples reaching
    each round). Early stopping only removes samples, so the counts are
    non-increasing.
    """
    if not traces:
        raise EmptyInput("no traces")
    max_rounds = max(len(t.rounds) for t in traces)
    rows = []
    for i in range(1, max_rounds + 1):
        reached = [t for t in traces if len(t.rounds) >= i]
        latencies = [sum(t.rounds[i - 1].latency_ms.values()) for t in reached]
        rows.append(
            {
                "round": i,
                "checked": len(reached),
                "mean_latency_ms": round(sum(latencies) / len(reached), 1) if reached else 0.0,
            }
        )
    report = {"rows": rows, "samples": len(traces)}
    if peak_memory_mb is not None:
        report["peak_memory_mb"] = round(peak_memory_mb, 1)
    return report


def format_efficiency_table(report: dict) -> str:
    lines = [f"{'round':>5}  {'checked':>7}  {'mean_latency_ms':>15}"]
    for row in report["rows"]:
        lines.append(
            f"{row['round']:>5}  {row['checked']:>7}  {row['mean_latency_ms']:>15.1f}"
        )
    if "peak_memory_mb" in report:
        lines.append(f"peak memory: {report['peak_memory_mb']:.1f} MB")
    return "\n".join(lines)
