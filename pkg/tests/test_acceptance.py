"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Every tolerance is fixed here, not calibrated at runtime.
"""

import math
import time

import numpy as np
import pytest

from taskinfo import annealing as an
from taskinfo import bounds
from taskinfo import finite_oracle as fo
from taskinfo import tasks
from taskinfo import variational as vi
from taskinfo.models import (
    Architecture,
    SgdConfig,
    dataset_loss,
    flatten_params,
    gradient,
    init_params,
    sgd_train,
    unflatten_params,
)
from taskinfo.rng import stream
from taskinfo.tasks import Dataset, DiscreteSpace, RealSpace, disjoint_union

from .reference import finite_difference_gradient, relative_errors

LN2 = math.log(2.0)


def report(num, ok, desc):
    print(f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {desc}")
    assert ok, f"criterion {num} failed: {desc}"


def bit_rule_table(m, bit, k=2):
    xs = np.arange(m)
    table = np.zeros((m, k))
    table[xs, (xs >> bit) & 1] = 1.0
    return type("Rule", (), {"table": table})()


# ---------------------------------------------------------------------------


def test_criterion_01_random_label_structure_function():
    """Oracle: |S(t) - (N ln2 - t)| <= computed subset-index overhead."""
    t0 = time.monotonic()
    n = 60
    fam = fo.HypothesisFamily.for_space(DiscreteSpace(64), 2)
    d = tasks.generate_random_label_task(n, DiscreteSpace(64), 2, seed=1)
    c_uniform = float(fam.costs[0])

    value, h = fo.complexity(d, fam)
    assert h.name == "uniform" and value >= n * LN2   # typical dataset

    knots = [c_uniform + fo.extension_cost(n, s, 2) for s in range(n + 1)]
    order = np.argsort(knots)
    curve = fo.structure_function(d, fam, sorted(knots))
    worst = 0.0
    for idx, t in zip(order, sorted(knots)):
        s = int(idx)
        overhead = c_uniform + math.log(n + 1) + \
            (math.lgamma(n + 1) - math.lgamma(s + 1) - math.lgamma(n - s + 1))
        dev = abs(curve.loss[list(sorted(knots)).index(t)] - (n * LN2 - t))
        worst = max(worst, dev - overhead)
    elapsed = time.monotonic() - t0
    report(1, worst <= 1e-9 and elapsed < 10.0,
           f"random-label S(t) within subset-index overhead across the "
           f"memorization regime (worst slack {worst:.2e}, {elapsed:.1f}s)")


def test_criterion_02_expected_complexity_bounds():
    """Oracle MC: N H <= mean C(D) <= N H + code length, within 3 sigma."""
    t0 = time.monotonic()
    fam = fo.HypothesisFamily.for_space(DiscreteSpace(8), 2)
    rule = fam.hypothesis("parity003~q0.1")   # planted rule with noise 0.1
    n, trials = 200, 100
    trial = fo.expected_complexity_trial(fam, rule, n=n, trials=trials, seed=7)
    n_h = n * trial.conditional_entropy
    k_rule = rule.code_length + math.log(8 + 1)
    slack = 3 * trial.std_error
    lower_ok = trial.mean_complexity >= n_h - slack
    upper_ok = trial.mean_complexity <= n_h + k_rule + slack
    elapsed = time.monotonic() - t0
    report(2, lower_ok and upper_ok and elapsed < 60.0,
           f"N*H={n_h:.1f} <= mean C(D)={trial.mean_complexity:.1f} <= "
           f"N*H+K={n_h + k_rule:.1f} (3sigma={slack:.2f}, {elapsed:.1f}s)")


def test_criterion_03_critical_beta():
    """Oracle: beta* = 1 +- 0.02 for random labels; > 1 for planted."""
    fam = fo.HypothesisFamily.for_space(DiscreteSpace(64), 2)
    d_rand = tasks.generate_random_label_task(50, DiscreteSpace(64), 2, seed=1)
    b_rand = fo.critical_beta(d_rand, fam, tol_bisect=1e-3)
    d_plant = tasks.generate_planted_task(200, fam.hypothesis("parity011"),
                                          0.0, seed=2)
    b_plant = fo.critical_beta(d_plant, fam, tol_bisect=1e-3)
    report(3, abs(b_rand - 1.0) <= 0.02 and b_plant > 1.0,
           f"random labels beta*={b_rand:.4f} (=1 +- 0.02); planted "
           f"beta*={b_plant:.2f} > 1")


def test_criterion_04_legendre_duality_bit_exact():
    """lagrangian == min_t S(t) + beta t, bit-equal, 20 beta values."""
    fam = fo.HypothesisFamily.for_space(DiscreteSpace(16), 2)
    d = tasks.generate_planted_task(24, fam.hypothesis("bit1"), 0.2, seed=4)
    u = len(np.unique(d.inputs))
    grid = sorted({float(fam.costs[r] + fo.extension_cost(u, s, 2))
                   for r in range(len(fam)) for s in range(u + 1)})
    curve = fo.structure_function(d, fam, grid)
    exact = 0
    for beta in np.linspace(0.05, 4.0, 20):
        lagr, _ = fo.lagrangian_complexity(d, fam, float(beta))
        dual = min(l + float(beta) * t
                   for l, t in zip(curve.loss, curve.abscissa))
        exact += (dual == lagr)
    report(4, exact == 20,
           f"Legendre duality bit-exact at {exact}/20 beta values over the "
           f"family code-length grid ({len(grid)} budgets)")


def test_criterion_05_closed_form_sigma_and_lambda_convergence():
    """Optimizer Sigma matches the closed form; KL - lnF converges in lambda."""
    h = np.linspace(0.2, 3.0, 10)
    model = vi.QuadraticLossModel(h, w0=np.full(10, 0.3))
    beta = 2.0
    cfg = vi.VariationalConfig(steps=5000, learning_rate=0.05, grad_clip=None)
    res = vi.optimize_gaussian(model, beta, vi.IsotropicPrior(1.0), cfg, seed=0)
    rel = relative_errors(np.exp(res.posterior.log_var),
                          vi.closed_form_sigma(h, beta, 1.0))
    sigma_ok = rel.max() < 1e-3

    n = 40
    fisher = vi.FisherDiagonal(2.0 * h / n, n=n)   # H_total = 2h = N F
    w_star = np.full(10, 0.3)
    diffs = []
    for lam in (10.0, 100.0, 1000.0):
        sig2 = vi.closed_form_sigma(h, beta, lam)
        q = vi.GaussianPosterior(w_star, np.log(sig2),
                                 vi.vector_architecture(10))
        diffs.append(vi.kl_gaussian(q, vi.IsotropicPrior(lam))
                     - vi.fisher_information_nats(fisher, lam))
    spread = (max(diffs) - min(diffs)) / abs(np.mean(diffs))
    report(5, sigma_ok and spread < 0.05,
           f"stationary Sigma rel err {rel.max():.2e} < 1e-3; "
           f"KL - fisher_nats spread {100 * spread:.2f}% < 5% over lambda")


GRADIENT_CASES = [
    ((3, 4, 2), 0), ((3, 4, 2), 1), ((3, 4, 2), 2), ((3, 4, 2), 3),
    ((3, 4, 2), 4), ((3, 4, 2), 5),
    ((4, 5, 3), 0), ((4, 5, 3), 1), ((4, 5, 3), 2), ((4, 5, 3), 3),
    ((4, 5, 3), 4), ((4, 5, 3), 5),
    ((2, 3, 3, 2), 0), ((2, 3, 3, 2), 3), ((2, 3, 3, 2), 4), ((2, 3, 3, 2), 5),
    ((5, 2), 0), ((5, 2), 1), ((5, 2), 2), ((5, 2), 3),
]


def test_criterion_06_gradient_checks():
    """Backprop vs FD < 1e-5 on 20 nets; variational grads < 1e-4."""
    worst_bp = 0.0
    for widths, seed in GRADIENT_CASES:
        arch = Architecture(widths)
        p = init_params(arch, seed=seed)
        d = tasks.generate_random_label_task(8, RealSpace(widths[0]),
                                             widths[-1], seed=seed + 10)
        g = flatten_params(gradient(p, d))
        fd = finite_difference_gradient(
            lambda v: dataset_loss(unflatten_params(v, arch), d),
            flatten_params(p))
        worst_bp = max(worst_bp, relative_errors(g, fd).max())
    bp_ok = worst_bp < 1e-5

    d = tasks.generate_random_label_task(12, RealSpace(3), 2, seed=4)
    arch = Architecture((3, 2))
    model = vi.MlpLossModel(arch, d)
    prior = vi.IsotropicPrior(1.0)
    worst_vi = 0.0
    for seed in (8, 9, 10):
        rng = np.random.default_rng(seed)
        mu = rng.normal(size=arch.num_params) * 0.4
        lv = rng.normal(size=arch.num_params) * 0.3 - 1.0

        def value(mu_v, lv_v):
            q = vi.GaussianPosterior(mu_v, lv_v, arch)
            return vi.mc_lagrangian_and_grads(model, q, 0.8, prior, 16,
                                              seed)[0]

        q0 = vi.GaussianPosterior(mu, lv, arch)
        _, gmu, glv = vi.mc_lagrangian_and_grads(model, q0, 0.8, prior, 16,
                                                 seed)
        fd_mu = finite_difference_gradient(lambda v: value(v, lv), mu.copy())
        fd_lv = finite_difference_gradient(lambda v: value(mu, v), lv.copy())
        worst_vi = max(worst_vi,
                       relative_errors(gmu, fd_mu, floor=1e-6).max(),
                       relative_errors(glv, fd_lv, floor=1e-6).max())
    report(6, bp_ok and worst_vi < 1e-4,
           f"backprop rel err {worst_bp:.2e} < 1e-5 on 20 nets; variational "
           f"(mu, log_var) rel err {worst_vi:.2e} < 1e-4")


def test_criterion_07_fisher_hessian_relation():
    """Logistic regression at convergence: N F_diag ~ Hessian diag (5%)."""
    d = tasks.generate_random_label_task(40, RealSpace(3), 2, seed=6)
    arch = Architecture((3, 2))
    res = sgd_train(d, arch, SgdConfig(learning_rate=0.01, batch_size=40,
                                       epochs=4000, seed=0), init=0)
    f = vi.fisher_diagonal(res.params, d)
    vec = flatten_params(res.params)
    step = 1e-4

    def loss_at(v):
        return dataset_loss(unflatten_params(v, arch), d)

    base = loss_at(vec)
    hess = np.array([
        (loss_at(vec + step * e) - 2 * base + loss_at(vec - step * e))
        / step ** 2
        for e in np.eye(vec.size)])
    nf = d.n * f.entries
    mask = nf > 1e-6
    worst = relative_errors(nf[mask], hess[mask]).max()
    report(7, worst < 0.05,
           f"N*F_diag vs finite-difference Hessian diag: worst rel err "
           f"{100 * worst:.2f}% < 5% on {int(mask.sum())} entries")


def test_criterion_08_phase_transition():
    """Variational: random-label transitions within 2x; planted higher."""
    t0 = time.monotonic()
    prior = vi.IsotropicPrior(1.0)
    betas = [2.0 ** e for e in range(5, -8, -1)]
    cfg = vi.VariationalConfig(steps=500, learning_rate=1.0,
                               logvar_learning_rate=2.0, mc_samples=4,
                               report_mc=256, grad_clip=10.0)
    level = 0.5 * LN2

    transitions = {}
    for name, n, seed in (("rand100", 100, 1), ("rand500", 500, 2)):
        d = tasks.generate_random_label_task(n, RealSpace(512), 2, seed=seed)
        sweep = vi.structure_sweep(d, Architecture((512, 2)), betas, prior,
                                   cfg, seed=7)
        transitions[name] = vi.crossing_beta(sweep.betas, sweep.losses / n,
                                             level)

    d_plant = tasks.as_real_vectors(tasks.generate_planted_task(
        300, bit_rule_table(512, 0), 0.0, seed=3))
    sweep_p = vi.structure_sweep(d_plant, Architecture((9, 2)), betas, prior,
                                 cfg, seed=7)
    t_plant = vi.crossing_beta(sweep_p.betas, sweep_p.losses / 300, level)

    t1, t2 = transitions["rand100"], transitions["rand500"]
    elapsed = time.monotonic() - t0
    ok = (t1 is not None and t2 is not None and t_plant is not None
          and max(t1, t2) / min(t1, t2) <= 2.0
          and t_plant > max(t1, t2) and elapsed < 600.0)
    report(8, ok,
           f"random transitions {t1:.3f} / {t2:.3f} (ratio "
           f"{max(t1, t2) / min(t1, t2):.2f} <= 2); planted {t_plant:.2f} "
           f"higher ({elapsed:.0f}s)")


def test_criterion_09_pac_bayes_coverage():
    """100 planted trials at delta=0.05: held-out loss <= bound >= 93x."""
    t0 = time.monotonic()
    rule = bit_rule_table(64, 0)

    def generator(trial_seed):
        d = tasks.as_real_vectors(
            tasks.generate_planted_task(400, rule, 0.1, seed=trial_seed))
        return tasks.subset_split(d, 0.5, seed=trial_seed)

    rep = bounds.bound_validation_trial(
        generator, Architecture((6, 2)), beta=1.0, delta=0.05, trials=100,
        seed=1, prior=vi.IsotropicPrior(1.0),
        cfg=vi.VariationalConfig(steps=200, learning_rate=0.5, mc_samples=4,
                                 report_mc=128))
    covered = sum(1 for row in rep.rows if row[5])
    elapsed = time.monotonic() - t0
    report(9, covered >= 93,
           f"held-out clipped loss <= bound in {covered}/100 trials "
           f"(need >= 93, {elapsed:.0f}s)")


def _distance_tasks(seed):
    m = 256
    xs = np.arange(m)
    table = np.zeros((m, 4))
    table[xs, (xs & 1) + 2 * ((xs >> 1) & 1)] = 1.0
    rule = type("Rule", (), {"table": table})()
    full = tasks.as_real_vectors(
        tasks.generate_planted_task(160, rule, 0.15, seed=seed))
    keep = full.labels < 2
    sub = Dataset(full.inputs[keep], full.labels[keep], 4, full.space)
    return full, sub


def test_criterion_10_distance_properties():
    """Self-distance and union->part <= tau_d; subset asymmetry 4/5 seeds."""
    from taskinfo.distance import DistanceConfig, task_distance
    t0 = time.monotonic()
    cfg = DistanceConfig(
        replicates=2,
        opt=vi.VariationalConfig(steps=600, learning_rate=1.0,
                                 logvar_learning_rate=2.0, mc_samples=4,
                                 report_mc=512, grad_clip=10.0),
        prior=vi.IsotropicPrior(1.0),
    )
    beta = 0.5
    arch = Architecture((10, 4))

    full, sub = _distance_tasks(11)
    r_self = task_distance(full, full, beta, arch, cfg, seeds=[0, 1])
    self_ok = r_self.value <= r_self.tau and r_self.pre_floor >= -r_self.tau

    du = disjoint_union(full, sub)
    r_union = task_distance(du, full, beta, Architecture((12, 4)), cfg,
                            seeds=[0, 1])
    union_ok = r_union.value <= r_union.tau

    wins = 0
    for seed in (11, 23, 37, 51, 77):
        f, s = _distance_tasks(seed)
        d_fs = task_distance(f, s, beta, arch, cfg, seeds=[0, 1])
        d_sf = task_distance(s, f, beta, arch, cfg, seeds=[0, 1])
        wins += d_fs.value < d_sf.value
    elapsed = time.monotonic() - t0
    report(10, self_ok and union_ok and wins >= 4,
           f"self {r_self.value:.2f}<=tau {r_self.tau:.2f}; union->part "
           f"{r_union.value:.2f}<=tau {r_union.tau:.2f}; asymmetry "
           f"{wins}/5 seeds ({elapsed:.0f}s)")


def _random_connected_instance(seed):
    rng = stream(seed, "acceptance-grid")
    m = int(rng.integers(8, 16))
    losses = rng.uniform(0, 10, m)
    kls = rng.uniform(0, 6, m)
    pos = rng.uniform(0, 5, m)
    grid = an.PosteriorGrid(losses, kls,
                            np.abs(pos[:, None] - pos[None, :]))
    betas = tuple(sorted(rng.uniform(0.05, 6.0, 6), reverse=True))
    eps = 0.0
    levels = [grid.global_minimizers(b) for b in betas]
    for i in range(len(levels) - 1):
        for q in levels[i]:
            eps = max(eps, float(grid.metric[q, levels[i + 1]].min()))
    eps = max(eps, 1e-6) * (1 + 1e-9) + 1e-12
    return grid, an.AnnealSchedule(betas, eps)


def test_criterion_11_annealing_reachability():
    """Annealing on 50 random connected grids; a disconnected grid fails."""
    reached = 0
    for seed in range(50):
        grid, schedule = _random_connected_instance(seed)
        assert an.check_epsilon_connected(grid, schedule).connected
        start = int(grid.global_minimizers(schedule.betas[0])[0])
        res = an.anneal(grid, schedule, start)
        reached += int(res.final_node) in \
            grid.global_minimizers(schedule.final_beta)

    # constructed disconnected instance: a far low-loss basin
    losses = np.array([10.0, 9.5, 0.0])
    kls = np.array([0.0, 0.1, 1.0])
    pos = np.array([0.0, 1.0, 10.0])
    grid = an.PosteriorGrid(losses, kls, np.abs(pos[:, None] - pos[None, :]))
    schedule = an.AnnealSchedule((100.0, 1.0, 0.01), epsilon=2.0)
    repc = an.check_epsilon_connected(grid, schedule)
    res = an.anneal(grid, schedule, 0)
    stuck = int(res.final_node) not in grid.global_minimizers(0.01)
    report(11, reached == 50 and not repc.connected and stuck
           and repc.failing_index is not None,
           f"annealing reached the final global minimum in {reached}/50 "
           f"connected grids; disconnected grid stuck with separating index "
           f"{repc.failing_index}")


def test_criterion_12_fim_trace_sign():
    """At matched train loss, random labels have the larger FIM trace."""
    t0 = time.monotonic()
    m = 256
    rule = bit_rule_table(m, 2)
    arch = Architecture((8, 16, 2))
    target_per_sample = 0.15
    wins = 0
    details = []
    for seed in range(5):
        dp = tasks.as_real_vectors(
            tasks.generate_planted_task(80, rule, 0.0, seed=seed))
        dr = tasks.as_real_vectors(tasks.generate_random_label_task(
            80, DiscreteSpace(m), 2, seed=seed + 50))
        traces = []
        for d in (dr, dp):
            params = init_params(arch, seed=seed)
            cfg = SgdConfig(learning_rate=0.02, batch_size=80, epochs=60,
                            seed=seed)
            for _ in range(60):
                res = sgd_train(d, arch, cfg, init=params)
                params = res.params
                if res.loss_trace[-1] <= target_per_sample * d.n:
                    break
            traces.append(vi.fim_trace(params, d))
        wins += traces[0] > traces[1]
        details.append(f"{traces[0]:.2f}>{traces[1]:.2f}")
    elapsed = time.monotonic() - t0
    report(12, wins >= 4,
           f"random-label FIM trace larger in {wins}/5 seeds "
           f"({', '.join(details)}; {elapsed:.0f}s)")
