"""Asymmetric task distance computed with the variational engine.

d_beta(D1 -> D2) is the extra information a network needs to solve
D1 u D2 once it solves D1: the max over near-optimal posteriors for D1 of
the min over near-optimal posteriors for D1 u D2 of KL(Q_12||P) -
KL(Q_1||P), floored at zero. Posterior sets are approximated by seed
replicates, filtered to those whose Lagrangian is within a slack of the
best replicate (a stand-in for "sufficient"), with the raw pre-floor
difference kept for diagnostics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .models import Architecture, SgdConfig, TrainingDiverged, sgd_train, dataset_loss
from .tasks import Dataset, RealSpace, disjoint_union, subset_split
from .variational import (
    IsotropicPrior,
    VariationalConfig,
    VariationalResult,
    optimize_posterior,
)

__all__ = [
    "DistanceConfig",
    "DistanceUndefined",
    "TaskDistanceResult",
    "DistanceMatrix",
    "task_distance",
    "distance_matrix",
    "FinetuneConfig",
    "finetune_correlate",
]


class DistanceUndefined(RuntimeError):
    """All replicates diverged; no distance estimate is available."""


@dataclass(frozen=True)
class DistanceConfig:
    replicates: int = 3
    opt: VariationalConfig = field(default_factory=VariationalConfig)
    prior: IsotropicPrior = field(default_factory=lambda: IsotropicPrior(1.0))
    lagrangian_slack: float = 0.05   # replicate joins the statistic set if
                                     # within slack*|best| of the best Lagrangian
    tau_fraction: float = 0.05       # tau_d = fraction of the larger KL

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")


@dataclass(frozen=True)
class TaskDistanceResult:
    value: float          # floored distance in NATS
    pre_floor: float      # raw max-min KL difference
    kl_union: float       # min KL among union-statistic replicates
    kl_source: float      # min KL among source-statistic replicates
    tau: float            # reported tolerance for ~0 comparisons
    spread_union: float   # KL spread across kept union replicates
    spread_source: float


def _statistic_kls(d: Dataset, arch: Architecture, beta: float,
                   cfg: DistanceConfig, seeds) -> tuple[list[float], list[VariationalResult]]:
    """KLs of replicates kept as approximate beta-sufficient statistics."""
    results = []
    for seed in seeds:
        try:
            results.append(optimize_posterior(
                d, arch, beta, cfg.prior, cfg.opt, seed=int(seed)))
        except TrainingDiverged:
            warnings.warn(f"distance replicate (seed {seed}) diverged; dropped")
    if not results:
        raise DistanceUndefined("all replicates diverged")
    best = min(r.lagrangian_value(beta) for r in results)
    slack = abs(best) * cfg.lagrangian_slack + 1e-9
    kept = [r for r in results if r.lagrangian_value(beta) <= best + slack]
    return [r.kl for r in kept], kept


def task_distance(d1: Dataset, d2: Dataset, beta: float, arch: Architecture,
                  cfg: DistanceConfig, seeds) -> TaskDistanceResult:
    """d_beta(d1 -> d2) via posteriors for d1 and for d1 u d2.

    ``arch`` is the architecture used on the union task. The source
    statistic is computed on d1 u d1 (zero-padded to the union input
    width): that presentation carries exactly d1's information while
    matching the union's origin-tag convention and sample scale, so the KL
    difference isolates the new information in d2 instead of presentation
    artifacts.
    """
    if not (isinstance(d1.space, RealSpace) and isinstance(d2.space, RealSpace)):
        raise ValueError("variational distances need real-vector tasks "
                         "(see tasks.as_real_vectors)")
    seeds = list(seeds)
    du = disjoint_union(d1, d2)
    source = _pad_width(disjoint_union(d1, d1), du.space.dim)
    kls_source, _ = _statistic_kls(source, arch, beta, cfg, seeds)
    kls_union, _ = _statistic_kls(du, arch, beta, cfg, seeds)
    # max over source statistics of min over union statistics of the
    # difference = min(kl_union) - min(kl_source)
    kl_u = min(kls_union)
    kl_s = min(kls_source)
    pre = kl_u - kl_s
    tau = cfg.tau_fraction * max(kl_u, kl_s, 1e-12)
    return TaskDistanceResult(
        value=max(0.0, pre), pre_floor=pre, kl_union=kl_u, kl_source=kl_s,
        tau=tau,
        spread_union=max(kls_union) - min(kls_union),
        spread_source=max(kls_source) - min(kls_source),
    )


def _pad_width(d: Dataset, dim: int) -> Dataset:
    if not isinstance(d.space, RealSpace):
        raise ValueError("variational distances need real-vector tasks")
    if d.space.dim == dim:
        return d
    if d.space.dim > dim:
        raise ValueError("cannot pad a wider task down")
    inputs = np.zeros((d.n, dim))
    inputs[:, : d.space.dim] = d.inputs
    return Dataset(inputs, d.labels, d.num_labels, RealSpace(dim))


@dataclass(frozen=True)
class DistanceMatrix:
    """entries[i][j] = d_beta(task_j -> task_i): row = target, col = source."""

    names: tuple[str, ...]
    values: np.ndarray
    pre_floor: np.ndarray
    kl_union: np.ndarray
    kl_source: np.ndarray
    tau: np.ndarray
    beta: float


def distance_matrix(named_tasks, beta: float, arch: Architecture,
                    cfg: DistanceConfig, seeds, entries=None) -> DistanceMatrix:
    """All ordered pairs of distances (diagonal included).

    ``entries`` may carry precomputed TaskDistanceResult values keyed by
    (target_index, source_index); missing pairs are computed here, so
    callers can parallelize the independent entries.
    """
    named_tasks = list(named_tasks)
    if len(named_tasks) < 2:
        raise ValueError("distance matrix needs at least two tasks")
    names = tuple(name for name, _ in named_tasks)
    n = len(names)
    values = np.full((n, n), math.nan)
    pre = np.full((n, n), math.nan)
    klu = np.full((n, n), math.nan)
    kls = np.full((n, n), math.nan)
    tau = np.full((n, n), math.nan)
    entries = dict(entries or {})
    for i, (_, target) in enumerate(named_tasks):
        for j, (_, source) in enumerate(named_tasks):
            res = entries.get((i, j))
            if res is None:
                try:
                    res = task_distance(source, target, beta, arch, cfg, seeds)
                except DistanceUndefined:
                    continue
            values[i, j] = res.value
            pre[i, j] = res.pre_floor
            klu[i, j] = res.kl_union
            kls[i, j] = res.kl_source
            tau[i, j] = res.tau
    return DistanceMatrix(names=names, values=values, pre_floor=pre,
                          kl_union=klu, kl_source=kls, tau=tau, beta=beta)


# ---------------------------------------------------------------------------
# Fine-tuning correlate


@dataclass(frozen=True)
class FinetuneConfig:
    pretrain: SgdConfig
    finetune: SgdConfig        # typically a reduced learning rate
    holdout_fraction: float = 0.25
    split_seed: int = 0
    init_seed: int = 0


def finetune_correlate(d1: Dataset, d2: Dataset, arch: Architecture,
                       cfg: FinetuneConfig) -> tuple[float, float]:
    """(pretrain-then-finetune test loss on d2, scratch test loss on d2).

    Pretrains on d1, fine-tunes on d2's train split, and compares against
    training from scratch on d2 for the combined number of epochs. Zero
    fine-tune epochs return the pretrained model's evaluation as-is.
    """
    if d1.space != d2.space:
        raise ValueError("finetune_correlate needs tasks on a shared space")
    d2_train, d2_test = subset_split(d2, 1.0 - cfg.holdout_fraction,
                                     cfg.split_seed)
    pre = sgd_train(d1, arch, cfg.pretrain, init=cfg.init_seed)
    fine = sgd_train(d2_train, arch, cfg.finetune, init=pre.params)
    scratch_cfg = SgdConfig(
        learning_rate=cfg.pretrain.learning_rate,
        batch_size=cfg.pretrain.batch_size,
        epochs=cfg.pretrain.epochs + cfg.finetune.epochs,
        weight_decay=cfg.pretrain.weight_decay,
        decay_epochs=cfg.pretrain.decay_epochs,
        decay_factor=cfg.pretrain.decay_factor,
        seed=cfg.pretrain.seed,
    )
    scratch = sgd_train(d2_train, arch, scratch_cfg, init=cfg.init_seed)
    n = max(d2_test.n, 1)
    return (dataset_loss(fine.params, d2_test) / n,
            dataset_loss(scratch.params, d2_test) / n)
