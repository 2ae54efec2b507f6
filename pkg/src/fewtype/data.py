"""Dataset ingestion and seeded few-shot episode construction.

The on-disk format is JSONL with one mention per line:
``{"id": ..., "text": ..., "start": ..., "end": ..., "label": "/a/b"}``.
A mention carrying several gold paths appears as several lines with the
same id; the loader keeps the longest path and warns.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .hierarchy import LabelHierarchy, LabelPath, parse_label_path

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MentionExample:
    """One (context, mention span, gold label) triplet."""

    id: str
    text: str
    start: int
    end: int
    label: LabelPath

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end <= len(self.text)):
            raise DataError(
                f"example {self.id!r}: span ({self.start}, {self.end}) outside text of "
                f"length {len(self.text)}"
            )

    @property
    def mention(self) -> str:
        return self.text[self.start : self.end]


def read_label_paths(path: str | Path) -> list[LabelPath]:
    """Collect the label paths appearing in a dataset file, in file order."""
    seen: dict[LabelPath, None] = {}
    for lineno, obj in _iter_jsonl(path):
        label = _parse_label(obj, path, lineno)
        seen.setdefault(label, None)
    return list(seen)


def load_dataset(path: str | Path, hierarchy: LabelHierarchy) -> list[MentionExample]:
    """Load and validate a JSONL mention file against a hierarchy."""
    by_id: dict[str, MentionExample] = {}
    order: list[str] = []
    for lineno, obj in _iter_jsonl(path):
        for key in ("id", "text", "start", "end", "label"):
            if key not in obj:
                raise DataError(f"{path}:{lineno}: missing field {key!r}")
        label = _parse_label(obj, path, lineno)
        if label not in hierarchy:
            raise DataError(f"{path}:{lineno}: label {label} not in the hierarchy")
        try:
            example = MentionExample(
                id=str(obj["id"]),
                text=str(obj["text"]),
                start=int(obj["start"]),
                end=int(obj["end"]),
                label=label,
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        prior = by_id.get(example.id)
        if prior is None:
            by_id[example.id] = example
            order.append(example.id)
        elif example.label.depth > prior.label.depth:
            logger.warning(
                "example %r has multiple gold paths; keeping the longest (%s)",
                example.id,
                example.label,
            )
            by_id[example.id] = example
        else:
            logger.warning(
                "example %r has multiple gold paths; keeping the longest (%s)",
                example.id,
                prior.label,
            )
    return [by_id[i] for i in order]


def sample_few_shot(
    data: list[MentionExample], shots: int, seed: int
) -> tuple[list[MentionExample], list[MentionExample]]:
    """Draw disjoint K-shot train and dev splits per label, seeded.

    Every label needs at least 2K examples; the draw is deterministic
    given the seed and the file order of the data.
    """
    if shots < 1:
        raise DataError(f"shots must be >= 1, got {shots}")
    groups: dict[LabelPath, list[MentionExample]] = {}
    for ex in data:
        groups.setdefault(ex.label, []).append(ex)
    rng = random.Random(seed)
    train: list[MentionExample] = []
    dev: list[MentionExample] = []
    for label in sorted(groups):
        pool = list(groups[label])
        if len(pool) < 2 * shots:
            raise DataError(
                f"label {label} has {len(pool)} examples; {2 * shots} needed for {shots}-shot"
            )
        rng.shuffle(pool)
        train.extend(pool[:shots])
        dev.extend(pool[shots : 2 * shots])
    return train, dev


def write_dataset(path: str | Path, examples: list[MentionExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "id": ex.id,
                "text": ex.text,
                "start": ex.start,
                "end": ex.end,
                "label": str(ex.label),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _iter_jsonl(path: str | Path):
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open dataset {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _parse_label(obj: dict, path, lineno: int) -> LabelPath:
    try:
        return parse_label_path(str(obj["label"]))
    except KeyError:
        raise DataError(f"{path}:{lineno}: missing field 'label'") from None
    except DataError as exc:
        raise DataError(f"{path}:{lineno}: {exc}") from exc
