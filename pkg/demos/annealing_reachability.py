"""When does annealing reach the global optimum? Reachability on grids.

An epsilon-local learner can only hop to statistics within epsilon of the
current one. Annealing the trade-off weight beta downward provably ends at
a global optimum when every global minimizer at one level has a global
minimizer of the next level within epsilon (the grids below make this
exactly checkable). Breaking that chain strands the learner, no matter how
long it trains: the stand-in here for the blur-then-sharpen phenomenon.
"""

import numpy as np

from taskinfo.annealing import (
    AnnealSchedule,
    PosteriorGrid,
    anneal,
    check_epsilon_connected,
    gaussian_lattice_grid,
    shannon_information_estimate,
)
from taskinfo.rng import stream


def show(grid, schedule, start, label):
    rep = check_epsilon_connected(grid, schedule)
    res = anneal(grid, schedule, start)
    final_ok = int(res.final_node) in grid.global_minimizers(schedule.final_beta)
    print(f"{label}: connected={rep.connected}  "
          f"final node={res.final_node} globally minimal={final_ok}")
    for beta, node, value in res.trajectory:
        print(f"    beta={beta:7.2f}  node={node}  lagrangian={value:8.3f}")
    if not rep.connected:
        print(f"    separating schedule index: {rep.failing_index}")


# a staircase of minimizers, one epsilon-hop apart
stairs = PosteriorGrid(
    losses=np.array([10.0, 4.0, 0.0]),
    kls=np.array([0.0, 2.0, 8.0]),
    metric=np.abs(np.arange(3)[:, None] - np.arange(3)[None, :]).astype(float),
)
show(stairs, AnnealSchedule((10.0, 2.0, 0.25), epsilon=1.0), 0,
     "connected staircase")

# same values, but the good basin moved out of reach
far = PosteriorGrid(
    losses=np.array([10.0, 9.5, 0.0]),
    kls=np.array([0.0, 0.1, 1.0]),
    metric=np.array([[0.0, 1.0, 10.0], [1.0, 0.0, 9.0], [10.0, 9.0, 0.0]]),
)
print()
show(far, AnnealSchedule((100.0, 1.0, 0.01), epsilon=2.0), 0,
     "disconnected basin")

# a Gaussian (mu, log sigma) lattice behaves the same way
print("\n== gaussian lattice grid")
lattice = gaussian_lattice_grid(2.0, 1.0, mu_grid=np.linspace(-2, 2, 9),
                                logsigma_grid=np.linspace(-2, 0, 5))
schedule = AnnealSchedule(tuple(np.geomspace(8.0, 0.05, 10)), epsilon=0.75)
rep = check_epsilon_connected(lattice, schedule)
start = int(lattice.global_minimizers(schedule.betas[0])[0])
res = anneal(lattice, schedule, start)
print(f"lattice of {len(lattice)} statistics: connected={rep.connected}, "
      f"anneal ends at {lattice.node_ids[res.final_node]} "
      f"(globally minimal: "
      f"{res.final_node in lattice.global_minimizers(schedule.final_beta)})")

# Shannon information between tasks and trained statistics
print("\n== Shannon information in the trained statistic")
nodes = 6


def sampler(seed):
    return int(stream(seed, "which-task").integers(0, nodes))


def trainer(task_id):
    q = np.full(nodes, 0.03)
    q[task_id] += 1.0 - nodes * 0.03
    return q


est = shannon_information_estimate(sampler, trainer, trials=80, seed=5)
print(f"I(statistic; task) ~= {est.mutual_information:.3f} NATS "
      f"(max ln {nodes} = {np.log(nodes):.3f}); "
      f"dataset-averaged posterior is the optimal prior: {est.prior_is_optimal}")
