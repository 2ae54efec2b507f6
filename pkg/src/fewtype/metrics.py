"""Strict accuracy and loose micro/macro F1 over hierarchical labels.

The loose scores expand both gold and predicted paths to their ancestor
closures and credit the overlap, so a prediction in the right branch at
the wrong granularity earns partial credit. Evaluation is single-label:
one gold path and one predicted path per mention.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError
from .hierarchy import LabelHierarchy, LabelPath


@dataclass(frozen=True)
class EvalResult:
    strict_acc: float
    loose_micro_f1: float
    loose_macro_f1: float
    n: int

    def as_dict(self) -> dict:
        return {
            "strict_acc": self.strict_acc,
            "loose_micro_f1": self.loose_micro_f1,
            "loose_macro_f1": self.loose_macro_f1,
            "n": self.n,
        }


def _f1(p: float, r: float) -> float:
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def evaluate(pairs: list[tuple[LabelPath, LabelPath]], hierarchy: LabelHierarchy) -> EvalResult:
    """Score (gold, predicted) label pairs against the hierarchy."""
    if not pairs:
        raise DataError("cannot evaluate an empty pair list")
    strict = 0
    macro_p = 0.0
    macro_r = 0.0
    pooled_inter = 0
    pooled_pred = 0
    pooled_gold = 0
    for gold, pred in pairs:
        g = hierarchy.ancestor_closure(gold)
        p = hierarchy.ancestor_closure(pred)
        inter = len(g & p)
        strict += int(gold == pred)
        macro_p += inter / len(p)
        macro_r += inter / len(g)
        pooled_inter += inter
        pooled_pred += len(p)
        pooled_gold += len(g)
    n = len(pairs)
    micro = _f1(pooled_inter / pooled_pred, pooled_inter / pooled_gold)
    macro = _f1(macro_p / n, macro_r / n)
    return EvalResult(
        strict_acc=strict / n,
        loose_micro_f1=micro,
        loose_macro_f1=macro,
        n=n,
    )
