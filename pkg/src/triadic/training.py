"""Task losses, the composite objective, Adam, and the training loop.

A triple (h, r, t) is scored by z = [x_h, x_r, x_t]_{gamma_r}; plausible
triples get z close to the origin, so the ranking score is s = -||z||
(higher is better).  The diagonal-trilinear baseline already produces a
scalar and is used raw.

The composite objective is L_task + lambda_assoc * L_assoc
+ lambda_dist * L_dist.  Baseline operators train without the algebraic
terms regardless of the lambdas; their residuals are still logged when
they are defined, so ablations can read them off the epoch log.

Determinism: every random choice (shuffling, corruption, residual
sampling) comes from a generator seeded by integer lists derived from the
config seed, so identical configs give bit-identical trajectories.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Array, Node
from .datasets import TripleDataset
from .errors import ConfigError, DataError
from .operators import BASELINE_KINDS, TernaryOpSpec, apply_ternary, init_params
from .regularizers import ResidualSampleConfig, regularizer_loss

TASK_LOSSES = ("nll", "margin")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings, tuned for desk-scale datasets.

    The defaults assume tens of training triples: small batches keep the
    Adam step count up, and patience matching max_epochs disables early
    stopping, because a handful of validation triples makes the valid
    loss too noisy to stop on.  Datasets with real validation splits
    should tighten patience.
    """

    lr: float = 0.02
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 4
    max_epochs: int = 200
    patience: int = 200
    margin: float = 1.0
    num_negatives: int = 4
    lambda_assoc: float = 0.1
    lambda_dist: float = 0.1
    task_loss: str = "nll"
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        b1, b2 = self.betas
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ConfigError(f"betas must lie in (0, 1), got {self.betas}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        for name in ("batch_size", "patience", "num_negatives"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if not self.margin > 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if self.lambda_assoc < 0 or self.lambda_dist < 0:
            raise ConfigError("lambdas must be >= 0")
        if self.task_loss not in TASK_LOSSES:
            raise ConfigError(
                f"unknown task_loss {self.task_loss!r}; expected one of {TASK_LOSSES}")


# ---------------------------------------------------------------------------
# scoring and task losses
# ---------------------------------------------------------------------------

def score(spec: TernaryOpSpec, leaves: dict[str, Node], h: int, r: int, t: int) -> Node:
    """Plausibility of (h, r, t); reads only rows h, r, t of the tables."""
    x = ad.row(leaves["entities"], h)
    y = ad.row(leaves["relations"], r)
    z = ad.row(leaves["entities"], t)
    out = apply_ternary(spec, leaves, x, y, z, gamma=r)
    if spec.scalar_output:
        return out
    return ad.neg(ad.l2_norm(out))


def nll_from_scores(scores: Node, true_idx: int) -> Node:
    """-log softmax(scores)[true_idx]."""
    return ad.sub(ad.logsumexp(scores), ad.index(scores, true_idx))


def nll_loss(spec: TernaryOpSpec, leaves: dict[str, Node], batch: np.ndarray,
             num_entities: int, candidates: list[int] | None = None) -> Node:
    """Mean cross-entropy of the true tail against candidate tails.

    Candidates default to the whole entity vocabulary.
    """
    if candidates is None:
        candidates = list(range(num_entities))
    per_triple = []
    for h, r, t in batch:
        h, r, t = int(h), int(r), int(t)
        if t not in candidates:
            raise DataError(f"true tail {t} missing from candidate set")
        scores = ad.stack([score(spec, leaves, h, r, c) for c in candidates])
        per_triple.append(nll_from_scores(scores, candidates.index(t)))
    return ad.mean_scalars(per_triple)


def sample_corruptions(batch: np.ndarray, num_entities: int, num_negatives: int,
                       rng: np.random.Generator) -> np.ndarray:
    """(len(batch), num_negatives) corrupted tails, uniform over entities != t."""
    if num_entities < 2:
        raise DataError("corruption needs at least two entities")
    draws = rng.integers(num_entities - 1, size=(len(batch), num_negatives))
    tails = np.asarray(batch)[:, 2:3]
    return draws + (draws >= tails)


def margin_loss(spec: TernaryOpSpec, leaves: dict[str, Node], batch: np.ndarray,
                corruptions: np.ndarray, margin: float) -> Node:
    """Mean hinge max{0, margin - s(h,r,t) + s(h,r,t')} over all pairs."""
    tape = next(iter(leaves.values())).tape
    m = tape.constant(float(margin))
    hinges = []
    for (h, r, t), negs in zip(batch, corruptions):
        s_pos = score(spec, leaves, int(h), int(r), int(t))
        for t_neg in negs:
            s_neg = score(spec, leaves, int(h), int(r), int(t_neg))
            hinges.append(ad.add(ad.sub(s_neg, s_pos), m))
    stacked = ad.nonlinearity(ad.stack(hinges), "relu")
    return ad.scale(ad.sum_all(stacked), 1.0 / len(hinges))


def composite_loss(task: Node, l_assoc: Node | None, l_dist: Node | None,
                   lambda_assoc: float, lambda_dist: float) -> Node:
    """task + la * L_assoc + ld * L_dist; returns task itself when both
    lambdas are zero, so that case is bit-exact."""
    out = task
    if lambda_assoc > 0:
        if l_assoc is None:
            raise ConfigError("lambda_assoc > 0 but the operator has no "
                              "associativity residual (scalar output)")
        out = ad.add(out, ad.scale(l_assoc, lambda_assoc))
    if lambda_dist > 0:
        if l_dist is None:
            raise ConfigError("lambda_dist > 0 but no distributivity residual given")
        out = ad.add(out, ad.scale(l_dist, lambda_dist))
    return out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, Array]
    v: dict[str, Array]
    t: int = 0

    @classmethod
    def init(cls, params: dict[str, Array]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, Array], grads: dict[str, Array],
              state: AdamState, cfg: TrainConfig) -> tuple[dict[str, Array], AdamState]:
    """One bias-corrected Adam update, in place, in sorted parameter order."""
    b1, b2 = cfg.betas
    state.t += 1
    t = state.t
    for name in sorted(params):
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = state.m[name] / (1 - b1 ** t)
        v_hat = state.v[name] / (1 - b2 ** t)
        params[name] -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return params, state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: dict[str, Array]     # best-validation snapshot
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_loss: float = float("inf")
    stopped_early: bool = False
    final_params: dict[str, Array] | None = None  # where training ended


def _task_loss_node(spec, leaves, batch, dataset, cfg, corruptions) -> Node:
    if cfg.task_loss == "nll":
        return nll_loss(spec, leaves, batch, dataset.num_entities)
    return margin_loss(spec, leaves, batch, corruptions, cfg.margin)


def _forward_task_loss(spec, params, batch, dataset, cfg, corruptions) -> float:
    tape = ad.Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    return float(_task_loss_node(spec, leaves, batch, dataset, cfg, corruptions).value)


def train(dataset: TripleDataset, spec: TernaryOpSpec, cfg: TrainConfig,
          reg_cfg: ResidualSampleConfig | None = None,
          initial_params: dict[str, Array] | None = None) -> TrainResult:
    """Early-stopped Adam training; returns the best-validation checkpoint.

    The per-epoch log records the epoch's mean task loss, the sampled
    residual means (even when the lambdas are zero, so regularization-free
    runs still expose their drift), and the validation task loss that
    drives early stopping.
    """
    if len(dataset.train) == 0 or len(dataset.valid) == 0:
        raise DataError("training needs nonempty train and valid splits")
    if reg_cfg is None:
        reg_cfg = ResidualSampleConfig()
    regularize = spec.kind not in BASELINE_KINDS
    lam_a = cfg.lambda_assoc if regularize else 0.0
    lam_d = cfg.lambda_dist if regularize else 0.0
    # Baselines never feel the penalties, but their residuals (where
    # defined) are still sampled so their drift shows up in the log.
    track_residuals = True

    params = (copy.deepcopy(initial_params) if initial_params is not None
              else init_params(spec, dataset.num_entities, dataset.num_relations, cfg.seed))
    state = AdamState.init(params)
    result = TrainResult(params=copy.deepcopy(params))

    valid_corruptions = None
    if cfg.task_loss == "margin":
        rng_vc = np.random.default_rng([cfg.seed, 800])
        valid_corruptions = sample_corruptions(dataset.valid, dataset.num_entities,
                                               cfg.num_negatives, rng_vc)

    bad_epochs = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = np.random.default_rng([cfg.seed, 500, epoch]).permutation(len(dataset.train))
        shuffled = dataset.train[order]
        corruptions = None
        if cfg.task_loss == "margin":
            rng_c = np.random.default_rng([cfg.seed, 600, epoch])
            corruptions = sample_corruptions(shuffled, dataset.num_entities,
                                             cfg.num_negatives, rng_c)

        task_vals, assoc_vals, dist_vals = [], [], []
        for start in range(0, len(shuffled), cfg.batch_size):
            batch = shuffled[start:start + cfg.batch_size]
            batch_corr = corruptions[start:start + cfg.batch_size] \
                if corruptions is not None else None
            tape = ad.Tape()
            leaves = {k: tape.leaf(v) for k, v in params.items()}
            task = _task_loss_node(spec, leaves, batch, dataset, cfg, batch_corr)
            l_assoc = l_dist = None
            if regularize or track_residuals:
                reg_rng = np.random.default_rng(
                    [reg_cfg.seed, cfg.seed, 700, epoch, start])
                regs = regularizer_loss(spec, leaves, batch, dataset.num_relations,
                                        reg_cfg, rng=reg_rng)
                l_assoc, l_dist = regs["L_assoc"], regs["L_dist"]
            loss = composite_loss(task, l_assoc, l_dist, lam_a, lam_d)
            grad_by_id = tape.backward(loss)
            grads = {k: grad_by_id[leaf.id] for k, leaf in leaves.items()}
            adam_step(params, grads, state, cfg)
            task_vals.append(float(task.value))
            if l_assoc is not None:
                assoc_vals.append(float(l_assoc.value))
            if l_dist is not None:
                dist_vals.append(float(l_dist.value))

        valid_loss = _forward_task_loss(spec, params, dataset.valid, dataset, cfg,
                                        valid_corruptions)
        result.log.append({
            "epoch": epoch,
            "task_loss": float(np.mean(task_vals)),
            "assoc_residual": float(np.mean(assoc_vals)) if assoc_vals else None,
            "dist_residual": float(np.mean(dist_vals)) if dist_vals else None,
            "valid_loss": valid_loss,
        })

        if valid_loss < result.best_valid_loss:
            result.best_valid_loss = valid_loss
            result.best_epoch = epoch
            result.params = copy.deepcopy(params)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                result.stopped_early = True
                break
    result.final_params = params
    return result
