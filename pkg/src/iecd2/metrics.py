"""Hallucination and grounding metrics over generated text.

Caption scoring matches surface forms against a synonym lexicon
(bigrams before unigrams, left to right, non-overlapping) and counts
mentions whose canonical object is absent from the image's ground
truth. Yes/no probing is scored as ordinary binary classification with
"yes" as the positive class.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError

_WORD = re.compile(r"[a-z0-9]+")


@dataclass
class AnnotationSet:
    """Ground-truth objects per image plus the synonym lexicon."""

    images: dict[str, frozenset[str]]
    synonyms: dict[str, str]
    vocabulary: frozenset[str] = frozenset()
    target_list: frozenset[str] = frozenset()

    def __post_init__(self):
        self.synonyms = {k.lower(): v.lower() for k, v in self.synonyms.items()}
        if not self.vocabulary:
            self.vocabulary = frozenset(self.synonyms.values())
        else:
            self.vocabulary = frozenset(v.lower() for v in self.vocabulary)
        bad = sorted(set(self.synonyms.values()) - self.vocabulary)
        if bad:
            raise InputError(f"synonyms map outside the object vocabulary: {bad}")
        self.images = {
            image_id: frozenset(obj.lower() for obj in objects)
            for image_id, objects in self.images.items()
        }
        self.target_list = frozenset(t.lower() for t in self.target_list)

    def objects_for(self, image_id: str) -> frozenset[str]:
        try:
            return self.images[image_id]
        except KeyError:
            raise InputError(f"image {image_id!r} has no annotations") from None


@dataclass
class CaptionRecord:
    image_id: str
    caption: str


@dataclass
class YesNoRecord:
    question_id: str
    predicted: str
    label: str

    def __post_init__(self):
        for name, value in (("predicted", self.predicted), ("label", self.label)):
            if value not in ("yes", "no"):
                raise InputError(f"{name} must be 'yes' or 'no', got {value!r}")


def load_annotations(path: str | Path) -> AnnotationSet:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"malformed annotation file {path}: {e}") from e
    try:
        return AnnotationSet(
            images={k: frozenset(v) for k, v in doc["images"].items()},
            synonyms=dict(doc["synonyms"]),
            vocabulary=frozenset(doc.get("vocabulary", ())),
            target_list=frozenset(doc.get("target_list", ())),
        )
    except KeyError as e:
        raise InputError(f"annotation file {path} missing field {e}") from e


def extract_objects(caption: str, annotations: AnnotationSet) -> list[str]:
    """Canonical object mentions, in order of appearance (a multiset).

    Longest match first: bigrams beat unigrams, matches never overlap.
    """
    words = _WORD.findall(caption.lower())
    lexicon = annotations.synonyms
    mentions: list[str] = []
    i = 0
    n = len(words)
    while i < n:
        if i + 1 < n:
            bigram = words[i] + " " + words[i + 1]
            if bigram in lexicon:
                mentions.append(lexicon[bigram])
                i += 2
                continue
        if words[i] in lexicon:
            mentions.append(lexicon[words[i]])
        i += 1
    return mentions


@dataclass
class CaptionDetail:
    image_id: str
    mentions: list[str]
    hallucinated: list[str]


@dataclass
class ChairResult:
    chair_s: float
    chair_i: float
    details: list[CaptionDetail] = field(default_factory=list)


def _score_caption(record: CaptionRecord, annotations: AnnotationSet) -> CaptionDetail:
    truth = annotations.objects_for(record.image_id)
    mentions = extract_objects(record.caption, annotations)
    hallucinated = [m for m in mentions if m not in truth]
    return CaptionDetail(record.image_id, mentions, hallucinated)


def chair(captions: list[CaptionRecord], annotations: AnnotationSet) -> ChairResult:
    """Sentence- and instance-level hallucinated-mention rates.

    chair_s: fraction of captions with at least one hallucinated mention.
    chair_i: hallucinated mentions over all mentions, corpus-wide.
    Both are 0 when their denominator is 0.
    """
    details = [_score_caption(c, annotations) for c in captions]
    total_mentions = sum(len(d.mentions) for d in details)
    total_hallucinated = sum(len(d.hallucinated) for d in details)
    dirty_captions = sum(1 for d in details if d.hallucinated)
    chair_s = dirty_captions / len(details) if details else 0.0
    chair_i = total_hallucinated / total_mentions if total_mentions else 0.0
    return ChairResult(chair_s, chair_i, details)


@dataclass
class AmberResult:
    chair: float
    cover: float
    hal: float
    cog: float


def amber_generative(
    captions: list[CaptionRecord],
    annotations: AnnotationSet,
    target_list: frozenset[str] | None = None,
) -> AmberResult:
    """Generative-task metrics, all reported as percentages.

    chair: mean per-caption hallucinated-mention fraction.
    cover: mean ground-truth coverage (images with empty ground truth
    are excluded from this mean only).
    hal: fraction of captions with any hallucinated mention.
    cog: mean per-caption fraction of mentions that are hallucinated
    and sit on the target list.
    """
    if target_list is None:
        target_list = annotations.target_list
    target_list = frozenset(t.lower() for t in target_list)
    if not captions:
        return AmberResult(0.0, 0.0, 0.0, 0.0)
    chair_parts: list[float] = []
    cover_parts: list[float] = []
    cog_parts: list[float] = []
    dirty = 0
    for record in captions:
        truth = annotations.objects_for(record.image_id)
        detail = _score_caption(record, annotations)
        n_mentions = len(detail.mentions)
        chair_parts.append(len(detail.hallucinated) / n_mentions if n_mentions else 0.0)
        cog_hits = sum(1 for m in detail.hallucinated if m in target_list)
        cog_parts.append(cog_hits / n_mentions if n_mentions else 0.0)
        if detail.hallucinated:
            dirty += 1
        if truth:
            covered = len(set(detail.mentions) & truth)
            cover_parts.append(covered / len(truth))
    cover = 100.0 * sum(cover_parts) / len(cover_parts) if cover_parts else 0.0
    return AmberResult(
        chair=100.0 * sum(chair_parts) / len(chair_parts),
        cover=cover,
        hal=100.0 * dirty / len(captions),
        cog=100.0 * sum(cog_parts) / len(cog_parts),
    )


@dataclass
class BinaryScores:
    accuracy: float
    precision: float
    recall: float
    f1: float


def binary_scores(records: list[YesNoRecord]) -> BinaryScores:
    """Accuracy/precision/recall/F1 with "yes" as the positive class."""
    if not records:
        raise InputError("binary scoring requires at least one record")
    tp = sum(1 for r in records if r.predicted == "yes" and r.label == "yes")
    fp = sum(1 for r in records if r.predicted == "yes" and r.label == "no")
    fn = sum(1 for r in records if r.predicted == "no" and r.label == "yes")
    correct = sum(1 for r in records if r.predicted == r.label)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return BinaryScores(correct / len(records), precision, recall, f1)


def metric_report_csv(rows: list[tuple[str, float, int]]) -> str:
    """CSV with the stable (metric, value, n) schema."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric", "value", "n"])
    for metric, value, n in rows:
        writer.writerow([metric, repr(float(value)), n])
    return buf.getvalue()
