"""Filtered ranking metrics, rule satisfaction, and axiom-residual reports.

Ranking follows the filtered convention: when scoring (h, r, ?) the other
tails already known to be true are dropped from the candidate list, so a
model is not punished for preferring a different correct answer.  Ranks
are tie-averaged (1 + strictly-better + equal-others / 2), which keeps a
constant scorer from claiming rank 1 everywhere.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Array
from .datasets import RuleSet, TripleDataset
from .errors import DataError
from .operators import TernaryOpSpec
from .regularizers import (ResidualSampleConfig, _draw_vectors, _embedding_pool,
                           assoc_residual, dist_residual)
from .training import score

HITS_KS = (1, 3, 10)


@dataclass(frozen=True)
class RankResult:
    rank: float
    num_candidates: int

    def __post_init__(self):
        if not 1.0 <= self.rank <= self.num_candidates:
            raise DataError(f"rank {self.rank} outside 1..{self.num_candidates}")


@dataclass(frozen=True)
class MetricsReport:
    mrr: float
    hits: dict[int, float]
    rule_satisfaction: float | None = None
    assoc_residual_mean: float | None = None
    dist_residual_mean: float | None = None

    def as_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "rule_satisfaction": self.rule_satisfaction,
            "assoc_residual_mean": self.assoc_residual_mean,
            "dist_residual_mean": self.dist_residual_mean,
        }


def _leaves(tape, params):
    return {k: tape.leaf(v) for k, v in params.items()}


def score_value(spec: TernaryOpSpec, params: dict[str, Array],
                h: int, r: int, t: int) -> float:
    tape = ad.Tape()
    return float(score(spec, _leaves(tape, params), h, r, t).value)


def candidate_scores(spec: TernaryOpSpec, params: dict[str, Array],
                     h: int, r: int, num_entities: int) -> np.ndarray:
    """Scores of every candidate tail for the query (h, r, ?), one tape."""
    tape = ad.Tape()
    leaves = _leaves(tape, params)
    return np.array([float(score(spec, leaves, h, r, c).value)
                     for c in range(num_entities)])


def rank_tail(spec: TernaryOpSpec, params: dict[str, Array],
              h: int, r: int, true_t: int, dataset: TripleDataset,
              scores: np.ndarray | None = None) -> RankResult:
    """Filtered tie-averaged rank of the true tail.

    ``scores`` may carry precomputed candidate scores to avoid rescoring.
    """
    if not 0 <= true_t < dataset.num_entities:
        raise IndexError(f"tail id {true_t} out of range")
    if scores is None:
        scores = candidate_scores(spec, params, h, r, dataset.num_entities)
    keep = [c for c in range(dataset.num_entities)
            if c == true_t or (h, r, c) not in dataset.all_true]
    kept_scores = scores[keep]
    s_true = scores[true_t]
    greater = int(np.sum(kept_scores > s_true))
    equal_others = int(np.sum(kept_scores == s_true)) - 1
    rank = 1.0 + greater + equal_others / 2.0
    return RankResult(rank=rank, num_candidates=len(keep))


def rank_split(spec: TernaryOpSpec, params: dict[str, Array],
               dataset: TripleDataset, split: np.ndarray) -> list[RankResult]:
    return [rank_tail(spec, params, int(h), int(r), int(t), dataset)
            for h, r, t in split]


def compute_metrics(ranks: list[RankResult],
                    rule_satisfaction: float | None = None,
                    assoc_residual_mean: float | None = None,
                    dist_residual_mean: float | None = None) -> MetricsReport:
    if not ranks:
        raise DataError("no ranks to aggregate")
    rs = np.array([r.rank for r in ranks])
    return MetricsReport(
        mrr=float(np.mean(1.0 / rs)),
        hits={k: float(np.mean(rs <= k)) for k in HITS_KS},
        rule_satisfaction=rule_satisfaction,
        assoc_residual_mean=assoc_residual_mean,
        dist_residual_mean=dist_residual_mean,
    )


def calibrate_threshold(spec: TernaryOpSpec, params: dict[str, Array],
                        dataset: TripleDataset) -> float:
    """Median score over validation positives (falls back to train when the
    validation split is empty)."""
    split = dataset.valid if len(dataset.valid) else dataset.train
    if len(split) == 0:
        raise DataError("no positives to calibrate against")
    vals = [score_value(spec, params, int(h), int(r), int(t)) for h, r, t in split]
    return float(statistics.median(vals))


def rule_satisfaction(spec: TernaryOpSpec, params: dict[str, Array],
                      rules: RuleSet, threshold: float) -> float:
    """Fraction of rules (A, B, C) with score(A, B, C) >= threshold."""
    if not rules.rules:
        raise DataError("empty rule set")
    hits = sum(1 for a, b, c in rules.rules
               if score_value(spec, params, a, b, c) >= threshold)
    return hits / len(rules.rules)


def axiom_report(spec: TernaryOpSpec, params: dict[str, Array],
                 num_relations: int, cfg: ResidualSampleConfig,
                 num_entities: int | None = None) -> dict:
    """Monte-Carlo residual means at 10x the configured sample count.

    Sampling reuses the training-time draw logic, with the embedding pool
    widened to the whole vocabulary and a seed stream distinct from any
    training step's.  Scalar-output operators report assoc as None.
    """
    if num_entities is None:
        num_entities = params["entities"].shape[0]
    pseudo_batch = np.array([[e, e % num_relations, (e + 1) % num_entities]
                             for e in range(num_entities)])
    rng = np.random.default_rng([cfg.seed, 9001])
    tape = ad.Tape()
    leaves = _leaves(tape, params)
    pool = _embedding_pool(pseudo_batch)

    n = 10 * cfg.num_samples
    assoc_vals: list[float] = []
    dist_by_slot: dict[int, list[float]] = {1: [], 2: [], 3: []}
    for i in range(n):
        if spec.supports_nesting:
            x, y, u, v, w = _draw_vectors(5, spec, leaves, pool, cfg, i, rng)
            gamma = int(rng.integers(num_relations))
            delta = int(rng.integers(num_relations))
            assoc_vals.append(float(
                assoc_residual(spec, leaves, x, y, u, v, w, gamma, delta).value))
        x, y, u, v = _draw_vectors(4, spec, leaves, pool, cfg, i, rng)
        gamma = int(rng.integers(num_relations))
        for slot in (1, 2, 3):
            dist_by_slot[slot].append(float(
                dist_residual(spec, leaves, slot, x, y, u, v, gamma).value))

    all_dist = [v for vals in dist_by_slot.values() for v in vals]
    return {
        "assoc_residual_mean": float(np.mean(assoc_vals)) if assoc_vals else None,
        "dist_residual_mean": float(np.mean(all_dist)),
        "dist_by_slot": {str(s): float(np.mean(vs)) for s, vs in dist_by_slot.items()},
        "num_samples": n,
    }


def lambda_sweep_trend(per_lambda: dict[float, list[dict]]) -> dict:
    """Verdict over final residuals from a lambda sweep.

    ``per_lambda`` maps each lambda to one dict per seed with keys
    "assoc" and "dist" (final logged residuals).  The verdict passes when
    the per-lambda medians are non-increasing as lambda grows, for both
    laws.  The emitted table carries the medians for reporting.
    """
    if len(per_lambda) < 2:
        raise DataError("a sweep needs at least two lambda values")
    for lam, runs in per_lambda.items():
        if not runs:
            raise DataError(f"no runs recorded for lambda={lam}")
    lams = sorted(per_lambda)
    med = {lam: {key: float(statistics.median(r[key] for r in per_lambda[lam]))
                 for key in ("assoc", "dist")}
           for lam in lams}
    non_increasing = {
        key: all(med[a][key] >= med[b][key] - 1e-15 for a, b in zip(lams, lams[1:]))
        for key in ("assoc", "dist")
    }
    table = [{"lambda": lam, "assoc_median": med[lam]["assoc"],
              "dist_median": med[lam]["dist"]} for lam in lams]

    def drop(key: str) -> float:
        lo, hi = med[lams[0]][key], med[lams[-1]][key]
        if lo == 0.0:
            return float("inf") if hi > 0.0 else 0.0
        return hi / lo

    return {
        "verdict": "pass" if all(non_increasing.values()) else "fail",
        "assoc_non_increasing": non_increasing["assoc"],
        "dist_non_increasing": non_increasing["dist"],
        "drop_ratio": {"assoc": drop("assoc"), "dist": drop("dist")},
        "table": table,
    }
