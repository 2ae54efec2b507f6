"""Label paths and the type hierarchy they induce.

Labels are slash-separated paths such as ``/organization/company``. The
path string is the single source of truth for the tree: a label's parent
is the path with the last segment removed, provided that path is itself
part of the label set. Labels whose prefix is absent are treated as
root-level.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

_NAME_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True, order=True)
class LabelPath:
    """Ordered, lowercase path segments identifying one type label."""

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise DataError("label path must have at least one segment")
        for seg in self.segments:
            if not seg:
                raise DataError("label path contains an empty segment")

    def __str__(self) -> str:
        return "/" + "/".join(self.segments)

    @property
    def depth(self) -> int:
        return len(self.segments)

    def prefix(self) -> "LabelPath | None":
        """The path with the last segment removed, or None at depth 1."""
        if len(self.segments) == 1:
            return None
        return LabelPath(self.segments[:-1])


def parse_label_path(s: str) -> LabelPath:
    """Parse ``/a/b/c`` into a LabelPath; round-trips via ``str()``."""
    if not s.startswith("/"):
        raise DataError(f"label path {s!r} must start with '/'")
    segments = s[1:].split("/")
    for seg in segments:
        if not seg:
            raise DataError(f"label path {s!r} contains an empty segment")
    return LabelPath(tuple(seg.lower() for seg in segments))


def default_names(label: LabelPath) -> tuple[str, ...]:
    """Surface names derived from the last path segment.

    Composite segments are split on non-alphanumeric runs, so
    ``sports_team`` yields ``("sports", "team")``.
    """
    parts = [p for p in _NAME_SPLIT.split(label.segments[-1]) if p]
    return tuple(parts) if parts else (label.segments[-1],)


class LabelHierarchy:
    """Immutable rooted forest over a set of label paths.

    Answers parent/children/sibling/ancestor queries and stores the
    per-label surface-name sets used to seed the correlation matrix.
    """

    def __init__(self, paths, extra_names: dict[str, list[str]] | None = None):
        labels = list(paths)
        unique = set(labels)
        if len(unique) != len(labels):
            dupes = sorted({str(p) for p in labels if labels.count(p) > 1})
            raise DataError(f"duplicate label paths: {', '.join(dupes)}")
        if not unique:
            raise DataError("hierarchy needs at least one label")

        self._labels: tuple[LabelPath, ...] = tuple(sorted(unique))
        self._parent: dict[LabelPath, LabelPath | None] = {}
        self._children: dict[LabelPath, set[LabelPath]] = {l: set() for l in self._labels}
        for label in self._labels:
            parent = label.prefix()
            if parent is not None and parent not in unique:
                parent = None  # missing intermediate ancestor: treat as root-level
            self._parent[label] = parent
            if parent is not None:
                self._children[parent].add(label)

        extra = {}
        for key, names in (extra_names or {}).items():
            path = parse_label_path(key)
            if path not in unique:
                raise DataError(f"extra names given for unknown label {key!r}")
            extra[path] = [n.lower() for n in names]
        self._names: dict[LabelPath, tuple[str, ...]] = {}
        for label in self._labels:
            names = list(default_names(label)) + extra.get(label, [])
            # preserve order, drop repeats
            self._names[label] = tuple(dict.fromkeys(names))

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: LabelPath) -> bool:
        return label in self._parent

    @property
    def labels(self) -> tuple[LabelPath, ...]:
        """All labels in sorted (lexicographic path) order."""
        return self._labels

    def parent_of(self, label: LabelPath) -> LabelPath | None:
        self._check(label)
        return self._parent[label]

    def children_of(self, label: LabelPath) -> set[LabelPath]:
        self._check(label)
        return set(self._children[label])

    def siblings(self, label: LabelPath) -> set[LabelPath]:
        """Other labels sharing this label's parent (root labels have none)."""
        self._check(label)
        parent = self._parent[label]
        if parent is None:
            return set()
        return self._children[parent] - {label}

    def names_of(self, label: LabelPath) -> tuple[str, ...]:
        self._check(label)
        return self._names[label]

    def ancestor_closure(self, label: LabelPath) -> set[LabelPath]:
        """The label plus all its transitive parents within the hierarchy."""
        self._check(label)
        closure = {label}
        node = self._parent[label]
        while node is not None:
            closure.add(node)
            node = self._parent[node]
        return closure

    def sibling_pairs(self) -> list[tuple[LabelPath, LabelPath]]:
        """Unordered sibling pairs, each counted once, in sorted order."""
        pairs = []
        for parent in self._labels:
            kids = sorted(self._children[parent])
            for i in range(len(kids)):
                for j in range(i + 1, len(kids)):
                    pairs.append((kids[i], kids[j]))
        return pairs

    def _check(self, label: LabelPath) -> None:
        if label not in self._parent:
            raise DataError(f"unknown label {label}")


def build_hierarchy(paths, extra_names: dict[str, list[str]] | None = None) -> LabelHierarchy:
    """Build a LabelHierarchy from label paths plus optional extra names."""
    return LabelHierarchy(paths, extra_names)


def load_extra_names(path: str | Path) -> dict[str, list[str]]:
    """Read the optional hierarchy file: JSON map of label path -> names."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read hierarchy names file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"hierarchy names file {path} must hold a JSON object")
    out: dict[str, list[str]] = {}
    for key, val in raw.items():
        if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
            raise DataError(f"names for {key!r} must be an array of strings")
        out[key] = val
    return out
