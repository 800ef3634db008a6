"""taskinfo: information complexity and asymmetric distance of learning tasks.

Two engines over the same task abstraction:

* :mod:`taskinfo.finite_oracle` computes exact two-part complexities,
  structure functions, Lagrangians and distances by enumerating a
  prefix-coded hypothesis family over discrete domains;
* :mod:`taskinfo.variational` measures the information in the parameters of
  a small feed-forward network through a mean-field Gaussian posterior, with
  :mod:`taskinfo.bounds`, :mod:`taskinfo.distance` and
  :mod:`taskinfo.annealing` built on top.

The :mod:`taskinfo.cli` front-end batches both engines into CSV/SVG outputs.
"""

__version__ = "0.1.0"

from . import tasks, finite_oracle, models, variational, bounds, distance, annealing

__all__ = [
    "tasks",
    "finite_oracle",
    "models",
    "variational",
    "bounds",
    "distance",
    "annealing",
    "__version__",
]
