"""Per-update evaluation metrics and their aggregation.

Consumes probe records (model probabilities and greedy generations); never
executes a language model itself. Multi-token continuation probabilities
default to the geometric mean of per-token probabilities so candidates of
different token lengths compare fairly; the joint product is selectable.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np


class EmptyContinuation(ValueError):
    """A continuation produced no token probabilities."""


class MissingCandidate(KeyError):
    """A probe record lacks a required candidate continuation."""


class EmptySet(ValueError):
    """A metric was asked to average over an empty collection."""


class TooShort(ValueError):
    """Text has fewer tokens than the n-gram order."""


class TooFewSamples(ValueError):
    """Aggregation needs at least two samples per metric."""


@dataclass(frozen=True)
class ProbeRecord:
    """Model outputs for one prompt: candidate probabilities in (0, 1] and
    an optional greedy generation (prompt excluded)."""

    case_id: str
    prompt: str
    probabilities: Mapping[str, float] = field(default_factory=dict)
    generation: Optional[str] = None

    def probability(self, candidate: str) -> float:
        if candidate not in self.probabilities:
            raise MissingCandidate(f"{self.case_id}: no probability for {candidate!r}")
        return self.probabilities[candidate]


@dataclass
class UpdateCaseResult:
    case_id: str
    efficacy_diff: float
    efficacy_success: float
    gen_diff: float
    gen_success: float
    bleedover_random: float
    bleedover_knn: float
    fluency: float
    seconds: float = 0.0


def sequence_probability(token_probabilities: Sequence[float], mode: str = "geometric") -> float:
    """Collapse per-token probabilities into one continuation probability.

    mode="geometric" (default) is the geometric mean; mode="joint" is the
    plain product.
    """
    if not token_probabilities:
        raise EmptyContinuation("continuation has no token probabilities")
    if any(p <= 0 or p > 1 for p in token_probabilities):
        raise ValueError("token probabilities must lie in (0, 1]")
    log_sum = sum(math.log(p) for p in token_probabilities)
    if mode == "geometric":
        return math.exp(log_sum / len(token_probabilities))
    if mode == "joint":
        return math.exp(log_sum)
    raise ValueError(f"unknown mode {mode!r}")


def probability_from_logprobs(logprobs: Sequence[float], mode: str = "geometric") -> float:
    """Same collapse, from natural-log probabilities as found on the wire."""
    if not logprobs:
        raise EmptyContinuation("continuation has no logprobs")
    total = float(sum(logprobs))
    if mode == "geometric":
        return math.exp(total / len(logprobs))
    if mode == "joint":
        return math.exp(total)
    raise ValueError(f"unknown mode {mode!r}")


def efficacy(p_new: float, p_old: float) -> Tuple[float, float]:
    """(difference, success) of the post-update preference for the new
    object over the old one on the update cloze."""
    return p_new - p_old, 1.0 if p_new > p_old else 0.0


def generalization(pairs: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Mean per-cloze efficacy difference and success over the cloze set."""
    if not pairs:
        raise EmptySet("generalization needs a non-empty cloze set")
    diffs, successes = zip(*(efficacy(p_new, p_old) for p_new, p_old in pairs))
    return sum(diffs) / len(diffs), sum(successes) / len(successes)


def bleedover(pairs: Sequence[Tuple[float, float]]) -> float:
    """Mean degradation of neighbor probabilities: -(1/|N|) sum of
    min(post - pre, 0). Zero when no neighbor degrades."""
    if not pairs:
        raise EmptySet("bleedover needs a non-empty neighbor set")
    return -sum(min(post - pre, 0.0) for pre, post in pairs) / len(pairs)


def per_neighbor_bleedover(pre: float, post: float) -> float:
    return -min(post - pre, 0.0)


def ngram_entropy(text: str, n: int) -> float:
    """Shannon entropy (bits) of the empirical n-gram distribution over
    whitespace tokens. Texts shorter than n tokens contribute 0."""
    tokens = text.split()
    if len(tokens) < n:
        return 0.0
    grams = Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    total = sum(grams.values())
    return -sum((c / total) * math.log2(c / total) for c in grams.values())


def fluency(generations: Sequence[str]) -> float:
    """Mean over the cloze set of (2/3) H2 + (4/3) H3 of each generation."""
    if not generations:
        raise EmptySet("fluency needs at least one generation")
    scores = [
        (2.0 / 3.0) * ngram_entropy(g, 2) + (4.0 / 3.0) * ngram_entropy(g, 3)
        for g in generations
    ]
    return sum(scores) / len(scores)


# --- Aggregation ------------------------------------------------------------------

METRIC_COLUMNS = (
    "efficacy_diff",
    "efficacy_success",
    "gen_diff",
    "gen_success",
    "bleedover_random",
    "bleedover_knn",
    "fluency",
    "seconds",
)
SUCCESS_METRICS = frozenset({"efficacy_success", "gen_success"})


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    half_width: float  # 1.96 * sample stddev / sqrt(n)
    n: int


def summarize(values: Sequence[float]) -> MetricSummary:
    if len(values) < 2:
        raise TooFewSamples("need at least 2 samples per metric")
    array = np.asarray(values, dtype=np.float64)
    mean = float(array.mean())
    half_width = 1.96 * float(array.std(ddof=1)) / math.sqrt(len(array))
    return MetricSummary(mean, half_width, len(array))


def aggregate(results: Sequence[UpdateCaseResult]) -> Dict[str, MetricSummary]:
    """Per-metric mean with 95% CI half-width; success metrics reported as
    percentages."""
    report: Dict[str, MetricSummary] = {}
    for column in METRIC_COLUMNS:
        values = [getattr(result, column) for result in results]
        if column in SUCCESS_METRICS:
            values = [v * 100.0 for v in values]
        report[column] = summarize(values)
    return report


# --- Bleedover analysis (popularity x similarity) -----------------------------------


@dataclass(frozen=True)
class NeighborBleedoverRecord:
    algorithm: str
    bleedover: float
    popularity: float
    similarity: float


def _quantile_bin(value: float, edges: np.ndarray) -> int:
    # edges are interior quantile cut points; values above the last edge
    # land in the final bin.
    return int(np.searchsorted(edges, value, side="right"))


def bleedover_bins(
    records: Sequence[NeighborBleedoverRecord], bins: int = 3
) -> Dict[str, List[List[Optional[float]]]]:
    """Per-algorithm matrix of mean z-scored bleedover by popularity and
    similarity quantile cell. Empty cells are None, never zero.

    Bleedover is z-score normalized within each algorithm to mitigate the
    variance in raw bleedover between algorithms; bin edges are global
    quantiles so cells align across algorithms.
    """
    if not records:
        return {}
    popularity = np.asarray([r.popularity for r in records], dtype=np.float64)
    similarity = np.asarray([r.similarity for r in records], dtype=np.float64)
    quantiles = np.linspace(0, 1, bins + 1)[1:-1]
    pop_edges = np.quantile(popularity, quantiles)
    sim_edges = np.quantile(similarity, quantiles)

    by_algorithm: Dict[str, List[NeighborBleedoverRecord]] = {}
    for record in records:
        by_algorithm.setdefault(record.algorithm, []).append(record)

    matrices: Dict[str, List[List[Optional[float]]]] = {}
    for algorithm, rows in by_algorithm.items():
        raw = np.asarray([r.bleedover for r in rows], dtype=np.float64)
        std = raw.std(ddof=0)
        z = (raw - raw.mean()) / std if std > 0 else np.zeros_like(raw)
        cells: List[List[List[float]]] = [[[] for _ in range(bins)] for _ in range(bins)]
        for record, score in zip(rows, z):
            i = _quantile_bin(record.popularity, pop_edges)
            j = _quantile_bin(record.similarity, sim_edges)
            cells[i][j].append(float(score))
        matrices[algorithm] = [
            [sum(cell) / len(cell) if cell else None for cell in row] for row in cells
        ]
    return matrices


# --- Random neighbor sampling --------------------------------------------------------


def sample_random_neighbors(
    union: Sequence, m: int, seed: int, exclude: Iterable = ()
) -> List:
    """Seeded uniform sample without replacement of size min(m, available),
    excluding the facts that belong to the case under evaluation."""
    import random

    excluded = set(exclude)
    eligible = [fact for fact in union if fact not in excluded]
    if not eligible:
        return []
    rng = random.Random(seed)
    if m >= len(eligible):
        return list(eligible)
    return rng.sample(eligible, m)
