"""Evaluation: entity metrics, soft-matched triple metrics, and the
theme-coherence rate, against a gold annotation file.

Matching is one-to-one greedy by descending similarity. For small inputs
an exhaustive optimal assignment runs alongside and the match-count gap is
reported, so any greedy shortfall is visible rather than silent.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .model import Theme, Triple, normalize
from .providers import EmbeddingProvider
from .typer import cosine, theme_coherence

__all__ = [
    "GoldSet",
    "MetricResult",
    "entity_metrics",
    "triple_metrics",
    "theme_coherence_metric",
    "greedy_match",
    "exhaustive_match_size",
    "build_report",
    "render_report_table",
]

log = logging.getLogger(__name__)

# Exhaustive assignment is only tractable for tiny instances; beyond this
# size the gap is reported as unknown.
EXHAUSTIVE_LIMIT = 6


@dataclass(frozen=True)
class GoldSet:
    """Document-level gold annotations: alias-grouped entities and triples."""

    entity_groups: tuple[tuple[str, ...], ...]
    triples: tuple[tuple[str, str, str], ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for group in self.entity_groups:
            for name in group:
                key = normalize(name)
                if key in seen:
                    raise ValueError(f"alias groups are not disjoint: {name!r}")
                seen.add(key)
        for head, _, tail in self.triples:
            for name in (head, tail):
                if normalize(name) not in seen:
                    raise ValueError(f"gold triple references unlisted entity {name!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "GoldSet":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            entity_groups=tuple(tuple(group) for group in data["entities"]),
            triples=tuple((h, r, t) for h, r, t in data["triples"]),
        )


@dataclass(frozen=True)
class MetricResult:
    precision: float
    recall: float
    f1: float
    matched: int
    predicted: int
    gold: int
    greedy_gap: int | None  # optimal minus greedy match count; None if unknown

    def as_dict(self) -> dict:
        return {
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "f1": round(self.f1, 6),
            "matched": self.matched,
            "predicted": self.predicted,
            "gold": self.gold,
            "greedy_gap": self.greedy_gap,
        }


def _f1(precision: float, recall: float) -> float:
    if precision == 0.0 or recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def greedy_match(
    similarities: dict[tuple[int, int], float], threshold: float
) -> list[tuple[int, int]]:
    """One-to-one assignment, highest similarity first.

    Ties break on the (pred, gold) index pair so results are stable.
    """
    eligible = sorted(
        ((sim, p, g) for (p, g), sim in similarities.items() if sim >= threshold),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    used_pred: set[int] = set()
    used_gold: set[int] = set()
    matches: list[tuple[int, int]] = []
    for _, p, g in eligible:
        if p in used_pred or g in used_gold:
            continue
        used_pred.add(p)
        used_gold.add(g)
        matches.append((p, g))
    return matches


def exhaustive_match_size(
    similarities: dict[tuple[int, int], float], threshold: float
) -> int:
    """Maximum one-to-one match count over all assignments (brute force)."""
    edges: dict[int, set[int]] = {}
    for (p, g), sim in similarities.items():
        if sim >= threshold:
            edges.setdefault(p, set()).add(g)
    preds = sorted(edges)
    golds = sorted({g for gs in edges.values() for g in gs})
    for r in range(min(len(preds), len(golds)), 0, -1):
        for chosen in itertools.combinations(preds, r):
            for perm in itertools.permutations(golds, r):
                if all(perm[i] in edges[chosen[i]] for i in range(r)):
                    return r
    return 0


def _maybe_gap(
    similarities: dict[tuple[int, int], float],
    threshold: float,
    n_pred: int,
    n_gold: int,
    greedy_count: int,
) -> int | None:
    if n_pred > EXHAUSTIVE_LIMIT or n_gold > EXHAUSTIVE_LIMIT:
        return None
    optimal = exhaustive_match_size(similarities, threshold)
    gap = optimal - greedy_count
    if gap:
        log.warning("greedy matching fell %d short of the optimal assignment", gap)
    return gap


def entity_metrics(
    predicted: list[str],
    gold: GoldSet,
    *,
    embedder: EmbeddingProvider,
    threshold: float = 0.85,
    allowlist: frozenset[str] = frozenset(),
) -> MetricResult:
    """Precision/recall/F1 of predicted entities against gold alias groups.

    A prediction matches a group when it equals any member after
    normalization or embeds within the threshold of one. Predictions on
    the allowlist that match nothing are judged reasonable and excluded
    from the precision denominator.
    """
    preds = list(dict.fromkeys(predicted))
    allow = {normalize(a) for a in allowlist}
    sims: dict[tuple[int, int], float] = {}
    for p_idx, pred in enumerate(preds):
        for g_idx, group in enumerate(gold.entity_groups):
            best = 0.0
            for member in group:
                if normalize(member) == normalize(pred):
                    best = 1.0
                    break
                best = max(best, cosine(embedder.embed(pred), embedder.embed(member)))
            sims[(p_idx, g_idx)] = best
    matches = greedy_match(sims, threshold)
    matched_preds = {p for p, _ in matches}
    excused = {
        i for i, pred in enumerate(preds)
        if i not in matched_preds and normalize(pred) in allow
    }
    denom = len(preds) - len(excused)
    precision = len(matches) / denom if denom else 0.0
    recall = len(matches) / len(gold.entity_groups) if gold.entity_groups else 0.0
    gap = _maybe_gap(sims, threshold, len(preds), len(gold.entity_groups), len(matches))
    return MetricResult(
        precision=precision, recall=recall, f1=_f1(precision, recall),
        matched=len(matches), predicted=denom, gold=len(gold.entity_groups),
        greedy_gap=gap,
    )


def _render(triple: tuple[str, str, str]) -> str:
    return " ".join(triple)


def triple_metrics(
    predicted: list[tuple[str, str, str]],
    gold: list[tuple[str, str, str]],
    *,
    embedder: EmbeddingProvider,
    threshold: float = 0.85,
) -> MetricResult:
    """Soft-matched triple precision/recall/F1: each triple is rendered as
    text and compared by embedding similarity."""
    preds = list(dict.fromkeys(predicted))
    golds = list(dict.fromkeys(gold))
    sims: dict[tuple[int, int], float] = {}
    for p_idx, p in enumerate(preds):
        for g_idx, g in enumerate(golds):
            if tuple(map(normalize, p)) == tuple(map(normalize, g)):
                sims[(p_idx, g_idx)] = 1.0
            else:
                sims[(p_idx, g_idx)] = cosine(
                    embedder.embed(_render(p)), embedder.embed(_render(g))
                )
    matches = greedy_match(sims, threshold)
    precision = len(matches) / len(preds) if preds else 0.0
    recall = len(matches) / len(golds) if golds else 0.0
    gap = _maybe_gap(sims, threshold, len(preds), len(golds), len(matches))
    return MetricResult(
        precision=precision, recall=recall, f1=_f1(precision, recall),
        matched=len(matches), predicted=len(preds), gold=len(golds),
        greedy_gap=gap,
    )


def theme_coherence_metric(
    predicted: list[tuple[str, str, str]],
    theme: Theme,
    *,
    embedder: EmbeddingProvider,
    threshold: float = 0.30,
) -> float:
    """Share of predicted triples whose rendered text is theme-coherent."""
    if not predicted:
        log.warning("theme coherence of an empty prediction defined as 0")
        return 0.0
    coherent = sum(
        1 for t in predicted
        if theme_coherence(_render(t), theme, embedder) >= threshold
    )
    return coherent / len(predicted)


def build_report(
    entity: MetricResult,
    triple: MetricResult,
    coherence: float,
    *,
    thresholds: dict[str, float],
) -> dict:
    return {
        "entity": entity.as_dict(),
        "triple": triple.as_dict(),
        "theme_coherence": round(coherence, 6),
        "thresholds": thresholds,
    }


def render_report_table(report: dict) -> str:
    rows = [
        ("", "precision", "recall", "f1"),
        ("entity", *(f"{report['entity'][k]:.3f}" for k in ("precision", "recall", "f1"))),
        ("triple", *(f"{report['triple'][k]:.3f}" for k in ("precision", "recall", "f1"))),
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in rows
    ]
    lines.append(f"theme coherence rate: {report['theme_coherence']:.3f}")
    return "\n".join(lines)
