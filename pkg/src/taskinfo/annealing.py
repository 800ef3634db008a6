"""Epsilon-local learning with annealing on a finite posterior grid.

A PosteriorGrid is an explicit finite set of candidate statistics, each with
a precomputed loss L(Q) and complexity KL(Q||P), plus a metric between
nodes. An epsilon-local step moves to the best Lagrangian value inside the
closed epsilon-ball around the current node; annealing alternates schedule
steps (beta decreases) with one local step each. When every global
minimizer at one schedule level has a global minimizer of the next level
within epsilon (the grid is epsilon-connected along the schedule), annealing
from a global minimizer of the first level provably ends at a global
minimizer of the last.

Also estimates Shannon's mutual information between grid nodes and sampled
datasets, and checks that the dataset-averaged posterior is the prior that
minimizes the expected information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import stream

__all__ = [
    "PosteriorGrid",
    "AnnealSchedule",
    "AnnealResult",
    "ConnectivityReport",
    "epsilon_local_step",
    "anneal",
    "check_epsilon_connected",
    "effective_potential_delta",
    "shannon_information_estimate",
    "ShannonEstimate",
    "gaussian_lattice_grid",
    "save_grid",
    "load_grid",
]


@dataclass(frozen=True)
class PosteriorGrid:
    """Finite statistic set: losses, complexities and a metric, all in NATS."""

    losses: np.ndarray        # (m,) L(Q) per node
    kls: np.ndarray           # (m,) KL(Q||P) per node
    metric: np.ndarray        # (m, m) symmetric, zero diagonal, triangle ok
    node_ids: tuple[str, ...] = ()

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=np.float64)
        kls = np.asarray(self.kls, dtype=np.float64)
        metric = np.asarray(self.metric, dtype=np.float64)
        m = losses.shape[0]
        if kls.shape != (m,) or metric.shape != (m, m):
            raise ValueError("grid arrays must be (m,), (m,), (m, m)")
        if not (np.isfinite(losses).all() and np.isfinite(kls).all()
                and np.isfinite(metric).all()):
            raise ValueError("grid values must be finite")
        if (metric < 0).any() or np.abs(np.diag(metric)).max(initial=0) > 0:
            raise ValueError("metric must be nonnegative with zero diagonal")
        if np.abs(metric - metric.T).max(initial=0) > 1e-9:
            raise ValueError("metric must be symmetric")
        for k in range(m):
            if (metric - (metric[:, k:k + 1] + metric[k:k + 1, :]) > 1e-9).any():
                raise ValueError("metric violates the triangle inequality")
        ids = self.node_ids or tuple(str(i) for i in range(m))
        if len(ids) != m:
            raise ValueError("need one node id per node")
        for arr in (losses, kls, metric):
            arr.flags.writeable = False
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "kls", kls)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "node_ids", tuple(ids))

    def __len__(self) -> int:
        return len(self.losses)

    def lagrangian(self, beta: float) -> np.ndarray:
        return self.losses + beta * self.kls

    def global_minimizers(self, beta: float, atol: float = 1e-12) -> np.ndarray:
        values = self.lagrangian(beta)
        return np.flatnonzero(values <= values.min() + atol)

    @property
    def diameter(self) -> float:
        return float(self.metric.max(initial=0.0))


@dataclass(frozen=True)
class AnnealSchedule:
    """Nonincreasing betas beta_0 >= ... >= beta_n and a step radius."""

    betas: tuple[float, ...]
    epsilon: float

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        if not betas:
            raise ValueError("schedule needs at least one beta")
        if any(b2 > b1 for b1, b2 in zip(betas, betas[1:])):
            raise ValueError("schedule betas must be nonincreasing")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        object.__setattr__(self, "betas", betas)

    @property
    def final_beta(self) -> float:
        return self.betas[-1]


def epsilon_local_step(g: PosteriorGrid, q0: int, beta: float,
                       epsilon: float) -> int:
    """argmin of the Lagrangian over the closed epsilon-ball around q0.

    q0 itself is always a candidate; ties break by (KL, node index).
    """
    if not 0 <= q0 < len(g):
        raise ValueError("q0 outside the grid")
    ball = np.flatnonzero(g.metric[q0] <= epsilon)
    values = g.lagrangian(beta)[ball]
    keys = sorted(zip(values, g.kls[ball], ball))
    return int(keys[0][2])


@dataclass(frozen=True)
class AnnealResult:
    final_node: int
    trajectory: tuple[tuple[float, int, float], ...]  # (beta, node, lagrangian)


def anneal(g: PosteriorGrid, s: AnnealSchedule, q_init: int) -> AnnealResult:
    """One epsilon-local step at each schedule beta, starting from q_init.

    The degenerate single-beta schedule means a single local step at that
    beta. The trajectory records the initial state then every step.
    """
    if not 0 <= q_init < len(g):
        raise ValueError("q_init outside the grid")
    q = q_init
    trajectory = [(s.betas[0], q, float(g.lagrangian(s.betas[0])[q]))]
    for beta in s.betas:
        q = epsilon_local_step(g, q, beta, s.epsilon)
        trajectory.append((beta, q, float(g.lagrangian(beta)[q])))
    return AnnealResult(final_node=q, trajectory=tuple(trajectory))


@dataclass(frozen=True)
class ConnectivityReport:
    connected: bool
    witness_chain: tuple[int, ...] = ()   # one global minimizer per level
    failing_index: int | None = None      # first i with a stranded minimizer
    stranded_node: int | None = None


def check_epsilon_connected(g: PosteriorGrid, s: AnnealSchedule
                            ) -> ConnectivityReport:
    """Is every level-i global minimizer within epsilon of a level-(i+1) one?

    Returns a witness chain of minimizers when connected, else the first
    failing schedule index and a stranded minimizer.
    """
    levels = [g.global_minimizers(beta) for beta in s.betas]
    for i in range(len(levels) - 1):
        nxt = levels[i + 1]
        for q in levels[i]:
            if not (g.metric[q, nxt] <= s.epsilon).any():
                return ConnectivityReport(False, failing_index=i,
                                          stranded_node=int(q))
    chain = [int(levels[0][0])]
    for i in range(len(levels) - 1):
        nxt = levels[i + 1]
        reachable = nxt[g.metric[chain[-1], nxt] <= s.epsilon]
        chain.append(int(reachable[0]))
    return ConnectivityReport(True, witness_chain=tuple(chain))


def effective_potential_delta(g: PosteriorGrid, q0: int, qf: int,
                              beta: float) -> float:
    """Static effective-potential gap Delta(L + beta KL) between two nodes.

    The static transition weight at temperature T is exp(-Delta / (2T)),
    computed by the caller.
    """
    values = g.lagrangian(beta)
    return float(values[qf] - values[q0])


@dataclass(frozen=True)
class ShannonEstimate:
    mutual_information: float
    prior_is_optimal: bool       # mean posterior beat every alternative prior
    num_alternatives: int
    mean_posterior: np.ndarray


def _kl_discrete(q: np.ndarray, p: np.ndarray) -> float:
    mask = q > 0
    if (p[mask] <= 0).any():
        return math.inf
    return float((q[mask] * np.log(q[mask] / p[mask])).sum())


def shannon_information_estimate(task_sampler, trainer, trials: int, seed: int,
                                 prior_grid: int = 50) -> ShannonEstimate:
    """I(w; D) ~= E_D[ KL(Q(.|D) || Qbar) ], Qbar = mean of Q(.|D).

    ``task_sampler(trial_seed)`` draws a dataset; ``trainer(dataset)``
    returns a normalized distribution over grid nodes. Also verifies that
    Qbar minimizes the expected information against ``prior_grid`` random
    alternative priors.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    posteriors = []
    for trial in range(trials):
        q = np.asarray(trainer(task_sampler(seed * 6151 + trial)),
                       dtype=np.float64)
        if q.ndim != 1 or abs(q.sum() - 1.0) > 1e-9 or (q < 0).any():
            raise ValueError("trainer must return a distribution over nodes")
        posteriors.append(q)
    posteriors = np.stack(posteriors)
    qbar = posteriors.mean(axis=0)
    info = float(np.mean([_kl_discrete(q, qbar) for q in posteriors]))
    rng = stream(seed, "prior-grid")
    ok = True
    for _ in range(prior_grid):
        alt = rng.dirichlet(np.ones(posteriors.shape[1]))
        mean_alt = float(np.mean([_kl_discrete(q, alt) for q in posteriors]))
        if mean_alt < info - 1e-9:
            ok = False
    return ShannonEstimate(mutual_information=info, prior_is_optimal=ok,
                           num_alternatives=prior_grid, mean_posterior=qbar)


# ---------------------------------------------------------------------------
# Grid builders and files


def gaussian_lattice_grid(h_diag, prior_scale: float, mu_grid, logsigma_grid
                          ) -> PosteriorGrid:
    """Grid of 1-parameter Gaussian statistics on a quadratic loss.

    Nodes are N(mu, sigma^2) posteriors for a single parameter with
    curvature h (loss = h (w - 0)^2 ... centered at the loss minimum), laid
    out on a (mu, log sigma) lattice with the Euclidean metric.
    """
    h = float(h_diag)
    lam2 = prior_scale * prior_scale
    nodes = [(float(mu), float(ls)) for mu in mu_grid for ls in logsigma_grid]
    losses, kls = [], []
    for mu, ls in nodes:
        var = math.exp(2.0 * ls)
        losses.append(h * (mu * mu + var))
        kls.append(0.5 * (mu * mu / lam2 + var / lam2
                          + math.log(lam2) - 2.0 * ls - 1.0))
    coords = np.array(nodes)
    metric = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    ids = tuple(f"mu{mu:g}/ls{ls:g}" for mu, ls in nodes)
    return PosteriorGrid(np.array(losses), np.array(kls), metric, ids)


def save_grid(g: PosteriorGrid, path, metric_path) -> None:
    """Versioned CSV of (node_id, loss_nats, kl_nats) + dense metric file."""
    lines = ["# taskinfo-grid v1", "node_id,loss_nats,kl_nats"]
    for i in range(len(g)):
        lines.append(f"{g.node_ids[i]},{float(g.losses[i])!r},"
                     f"{float(g.kls[i])!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    rows = ["# taskinfo-grid-metric v1"]
    for i in range(len(g)):
        rows.append(",".join(repr(float(v)) for v in g.metric[i]))
    with open(metric_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def load_grid(path, metric_path) -> PosteriorGrid:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "# taskinfo-grid v1":
        raise ValueError(f"{path}:1: expected '# taskinfo-grid v1' header")
    ids, losses, kls = [], [], []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip() or ln.startswith("#") or ln.startswith("node_id"):
            continue
        cells = ln.split(",")
        if len(cells) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(cells)}")
        try:
            ids.append(cells[0])
            losses.append(float(cells[1]))
            kls.append(float(cells[2]))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad number") from None
    with open(metric_path, encoding="utf-8") as fh:
        mlines = fh.read().splitlines()
    if not mlines or mlines[0] != "# taskinfo-grid-metric v1":
        raise ValueError(f"{metric_path}:1: expected metric header")
    rows = []
    for lineno, ln in enumerate(mlines[1:], start=2):
        if not ln.strip() or ln.startswith("#"):
            continue
        try:
            rows.append([float(v) for v in ln.split(",")])
        except ValueError:
            raise ValueError(f"{metric_path}:{lineno}: bad number") from None
    metric = np.array(rows)
    if metric.shape != (len(ids), len(ids)):
        raise ValueError(f"{metric_path}: metric shape {metric.shape} does not "
                         f"match {len(ids)} nodes")
    return PosteriorGrid(np.array(losses), np.array(kls), metric, tuple(ids))
