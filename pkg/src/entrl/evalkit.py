"""Evaluation estimators: pass@k, entity accuracy, chrF.

pass@k uses the unbiased estimator computed from n samples per problem with
c correct, as a numerically stable running product.  chrF is the character
n-gram F-score in its original form: precision and recall are averaged
across n-gram orders first and combined into a single F-beta at the end.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .reward import RewardBreakdown

__all__ = [
    "pass_at_k_single",
    "pass_at_k_curve",
    "PassAtKInput",
    "PassAtKCurve",
    "entity_accuracy",
    "chrf",
]


def pass_at_k_single(n: int, c: int, k: int) -> float:
    """Unbiased pass@k from n samples with c correct.

    Estimates the probability that at least one of k fresh samples would be
    correct, as 1 - C(n-c, k)/C(n, k), evaluated via the running product
    prod_{j<k} (n-c-j)/(n-j) so no binomial coefficients overflow.

    Args:
        n: number of samples drawn for the problem, n >= 1.
        c: number of correct samples, 0 <= c <= n.
        k: the k of pass@k, 1 <= k <= n.

    Returns:
        The estimate in [0, 1].  When n - c < k every size-k subset of the
        n samples contains a correct one, so the estimator returns exactly
        1.0; when c == 0 it returns exactly 0.0.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= c <= n:
        raise ValueError(f"c must be in [0, {n}], got {c}")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if n - c < k:
        return 1.0
    miss_prob = 1.0
    for j in range(k):
        miss_prob *= float(n - c - j) / float(n - j)
    return 1.0 - miss_prob


@dataclass(frozen=True)
class PassAtKInput:
    """Per-problem correct counts from a fixed sampling budget.

    ``ks`` is stored sorted and deduplicated; every k must be in [1, n] and
    every count in [0, n].
    """

    n: int
    counts: tuple[int, ...]
    ks: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", tuple(self.counts))
        object.__setattr__(self, "ks", tuple(sorted(set(self.ks))))
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.counts:
            raise ValueError("counts must be non-empty")
        bad = [c for c in self.counts if not 0 <= c <= self.n]
        if bad:
            raise ValueError(f"counts outside [0, {self.n}]: {bad!r}")
        if not self.ks:
            raise ValueError("ks must be non-empty")
        if self.ks[0] < 1 or self.ks[-1] > self.n:
            raise ValueError(f"ks must lie in [1, {self.n}], got {self.ks!r}")


@dataclass(frozen=True)
class PassAtKCurve:
    """pass@k estimates averaged over problems, one per k."""

    ks: tuple[int, ...]
    estimates: tuple[float, ...] = field(default=())


def pass_at_k_curve(data: PassAtKInput) -> PassAtKCurve:
    """Average the per-problem estimator over all problems for each k.

    The curve is non-decreasing in k, and pass@1 equals mean(c) / n exactly.
    """
    estimates = tuple(
        sum(pass_at_k_single(data.n, c, k) for c in data.counts) / len(data.counts)
        for k in data.ks
    )
    return PassAtKCurve(ks=data.ks, estimates=estimates)


def entity_accuracy(breakdowns: Iterable[RewardBreakdown], require_gates: bool = False) -> float:
    """Percentage of breakdowns whose match bit is set.

    Gate bits are ignored by default: a correct entity in an over-long
    response still counts.  With ``require_gates=True`` a breakdown counts
    only when both gates passed as well.
    """
    rows = list(breakdowns)
    if not rows:
        raise ValueError("no breakdowns to aggregate")
    if require_gates:
        hits = sum(1 for b in rows if b.match and b.fmt_gate and b.len_gate)
    else:
        hits = sum(1 for b in rows if b.match)
    return 100.0 * hits / len(rows)


def _ngram_counts(text: str, n: int) -> Counter:
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def chrf(hypothesis: str, reference: str, max_n: int = 6, beta: float = 2.0) -> float:
    """Character n-gram F-score in [0, 100].

    Whitespace is removed from both strings before n-grams are extracted.
    For each order n in [1, max_n], precision and recall come from clipped
    n-gram overlap counts; an order where both sides have no n-grams is
    skipped, while an order where only one side has n-grams contributes
    zero precision and recall.  The per-order precisions and recalls are
    averaged uniformly and combined once:

        F = 100 * (1 + beta^2) * P * R / (beta^2 * P + R)

    with F = 0 when the denominator is zero.  Two empty strings are
    identical, which scores 100 by convention.
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")

    hyp = "".join(hypothesis.split())
    ref = "".join(reference.split())
    if not hyp and not ref:
        return 100.0

    precisions: list[float] = []
    recalls: list[float] = []
    for n in range(1, max_n + 1):
        hyp_counts = _ngram_counts(hyp, n)
        ref_counts = _ngram_counts(ref, n)
        hyp_total = sum(hyp_counts.values())
        ref_total = sum(ref_counts.values())
        if hyp_total == 0 and ref_total == 0:
            continue
        overlap = sum(min(cnt, ref_counts[g]) for g, cnt in hyp_counts.items())
        precisions.append(overlap / hyp_total if hyp_total else 0.0)
        recalls.append(overlap / ref_total if ref_total else 0.0)

    avg_p = sum(precisions) / len(precisions)
    avg_r = sum(recalls) / len(recalls)
    denom = beta * beta * avg_p + avg_r
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + beta * beta) * avg_p * avg_r / denom
