"""Monte-Carlo estimators of the two algebraic-law violations.

For an operator [.,.,.]_g the laws are

* nested associativity:  [x, y, [u, v, w]_g]_d  ==  [[x, y, u]_g, v, w]_d
* distributivity (slot 1, and likewise 2, 3):
      [x (+) y, u, v]_g  ==  [x, u, v]_g (+) [y, u, v]_g

where (+) is the operator's declared ambient addition (coordinatewise sum,
or min for the tropical oracle).  Each residual is the squared norm of the
two sides' difference, so it is nonnegative and zero exactly when the law
holds on that sample.  Losses are plain means of per-sample residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ConfigError, DataError
from .operators import TernaryOpSpec, apply_ternary, monoid_add

SAMPLE_SOURCES = ("minibatch_embeddings", "gaussian", "mixed")


@dataclass(frozen=True)
class ResidualSampleConfig:
    """How to draw the arguments the expectations run over.

    ``minibatch_embeddings`` reuses embedding rows appearing in the batch
    (keeps the laws honest where the model actually operates, and lets
    gradient flow into those rows); ``gaussian`` draws fresh i.i.d.
    N(0, gaussian_scale^2) vectors off the data manifold; ``mixed``
    alternates between the two, sample by sample.
    """

    num_samples: int = 8
    source: str = "mixed"
    gaussian_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ConfigError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.source not in SAMPLE_SOURCES:
            raise ConfigError(
                f"unknown sample source {self.source!r}; expected one of {SAMPLE_SOURCES}")
        if not self.gaussian_scale > 0:
            raise ConfigError(f"gaussian_scale must be > 0, got {self.gaussian_scale}")


def assoc_residual(spec: TernaryOpSpec, leaves: dict[str, Node],
                   x: Node, y: Node, u: Node, v: Node, w: Node,
                   gamma: int, delta: int) -> Node:
    """|| [x,y,[u,v,w]_gamma]_delta - [[x,y,u]_gamma,v,w]_delta ||^2."""
    if not spec.supports_nesting:
        raise ConfigError(
            f"{spec.kind} has scalar output and cannot be nested; "
            "the associativity residual is undefined for it")
    lhs = apply_ternary(spec, leaves, x, y,
                        apply_ternary(spec, leaves, u, v, w, gamma), delta)
    rhs = apply_ternary(spec, leaves,
                        apply_ternary(spec, leaves, x, y, u, gamma), v, w, delta)
    return ad.sq_l2_norm(ad.sub(lhs, rhs))


def dist_residual(spec: TernaryOpSpec, leaves: dict[str, Node], slot: int,
                  x: Node, y: Node, u: Node, v: Node, gamma: int) -> Node:
    """Distributivity violation when splitting argument ``slot`` into x (+) y.

    The other two argument positions are filled with u and v in order.
    """
    if slot not in (1, 2, 3):
        raise ConfigError(f"slot must be 1, 2 or 3, got {slot}")
    s = monoid_add(spec, x, y)
    if slot == 1:
        combined = apply_ternary(spec, leaves, s, u, v, gamma)
        left = apply_ternary(spec, leaves, x, u, v, gamma)
        right = apply_ternary(spec, leaves, y, u, v, gamma)
    elif slot == 2:
        combined = apply_ternary(spec, leaves, u, s, v, gamma)
        left = apply_ternary(spec, leaves, u, x, v, gamma)
        right = apply_ternary(spec, leaves, u, y, v, gamma)
    else:
        combined = apply_ternary(spec, leaves, u, v, s, gamma)
        left = apply_ternary(spec, leaves, u, v, x, gamma)
        right = apply_ternary(spec, leaves, u, v, y, gamma)
    return ad.sq_l2_norm(ad.sub(combined, monoid_add(spec, left, right)))


def _embedding_pool(batch: np.ndarray) -> list[tuple[str, int]]:
    """(table, row) pairs appearing in a batch of (h, r, t) triples,
    deduplicated in first-appearance order."""
    pool: dict[tuple[str, int], None] = {}
    for h, r, t in batch:
        pool.setdefault(("entities", int(h)))
        pool.setdefault(("relations", int(r)))
        pool.setdefault(("entities", int(t)))
    return list(pool)


def _draw_vectors(n: int, spec: TernaryOpSpec, leaves: dict[str, Node],
                  pool: list[tuple[str, int]], cfg: ResidualSampleConfig,
                  sample_idx: int, rng: np.random.Generator) -> list[Node]:
    """Draw ``n`` argument vectors for one residual sample."""
    if cfg.source == "mixed":
        source = "minibatch_embeddings" if sample_idx % 2 == 0 else "gaussian"
    else:
        source = cfg.source
    tape = next(iter(leaves.values())).tape
    out: list[Node] = []
    for _ in range(n):
        if source == "minibatch_embeddings":
            table, row_id = pool[int(rng.integers(len(pool)))]
            out.append(ad.row(leaves[table], row_id))
        else:
            out.append(tape.constant(rng.normal(0.0, cfg.gaussian_scale, size=spec.dim)))
    return out


def regularizer_loss(spec: TernaryOpSpec, leaves: dict[str, Node],
                     batch: np.ndarray, num_relations: int,
                     cfg: ResidualSampleConfig,
                     rng: np.random.Generator | None = None) -> dict[str, Node | None]:
    """Monte-Carlo means of both residuals on one tape.

    Returns {"L_assoc": node or None, "L_dist": node}; L_assoc is None for
    scalar-output operators, which cannot be nested.  Every distributivity
    sample averages all three slots on shared draws.  Deterministic given
    the seed; pass ``rng`` to substitute an external generator (the
    training loop derives one per step).
    """
    batch = np.asarray(batch)
    if batch.size == 0:
        raise DataError("regularizer sampling needs a nonempty batch")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    pool = _embedding_pool(batch)

    assoc_terms: list[Node] = []
    dist_terms: list[Node] = []
    for i in range(cfg.num_samples):
        if spec.supports_nesting:
            x, y, u, v, w = _draw_vectors(5, spec, leaves, pool, cfg, i, rng)
            gamma = int(rng.integers(num_relations))
            delta = int(rng.integers(num_relations))
            assoc_terms.append(assoc_residual(spec, leaves, x, y, u, v, w, gamma, delta))
        x, y, u, v = _draw_vectors(4, spec, leaves, pool, cfg, i, rng)
        gamma = int(rng.integers(num_relations))
        dist_terms.append(ad.mean_scalars(
            [dist_residual(spec, leaves, slot, x, y, u, v, gamma) for slot in (1, 2, 3)]))

    return {
        "L_assoc": ad.mean_scalars(assoc_terms) if assoc_terms else None,
        "L_dist": ad.mean_scalars(dist_terms),
    }
