"""Exact complexity oracle over an enumerable prefix-coded hypothesis family.

The uncomputable description length of a conditional distribution is replaced
by an explicit prefix-code length over a structured family of hypotheses:

* base rules over a discrete domain: the uniform distribution, one-hot
  constant rules, single-bit rules, and parity rules over the input bits,
  plus label-noise-smoothed copies of every deterministic rule;
* for datasets composed by disjoint union, pair rules that apply one rule
  per origin tag, with "same rule" and "child back-reference" encodings so
  that re-describing an already-described component is nearly free;
* a per-dataset memorization extension: any rule may additionally pin the
  labels of a subset S of the distinct training inputs, paying
  ln(U+1) + ln C(U, |S|) + |S| ln K extra NATS (U = distinct inputs).

Code lengths satisfy the Kraft budget sum exp(-len) <= 1, which is what
makes the memorization price exactly one NAT of description per NAT of loss
removed and puts the critical trade-off at beta = 1 for random labels.

All reported losses and minima are exact: candidates are screened with fast
vectorized arithmetic, then every near-minimal candidate is re-evaluated with
`math.fsum` over per-sample terms, so results are independent of sample
order and reproducible bit for bit by naive re-enumeration. Ties within
TIE_ATOL of an exact minimum are broken by (code length, enumeration order).

Losses that are infinite (a zero probability hit) are carried as the
saturating sentinel INF_NATS, larger than any finite family value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tasks import Dataset, DiscreteSpace, disjoint_union, generate_planted_task

__all__ = [
    "INF_NATS",
    "TIE_ATOL",
    "Hypothesis",
    "Curve",
    "HypothesisFamily",
    "NoHypothesisError",
    "extension_cost",
    "empirical_loss",
    "mle",
    "complexity",
    "lagrangian_complexity",
    "structure_function",
    "beta_sufficient_statistics",
    "BetaStatistic",
    "critical_beta",
    "deterministic_complexity",
    "oracle_distance",
    "expected_complexity_trial",
    "ExpectedComplexityTrial",
    "save_family",
    "load_family",
]

INF_NATS = 1e30          # saturating stand-in for an infinite loss
_INF_REPORT = 1e29       # anything above this is reported as math.inf
TIE_ATOL = 1e-9          # argmin tie window (documented tie-break rule)

LN2 = math.log(2.0)
_GROUP_TAG = math.log(4.0)   # four base-rule groups share the budget equally
PAIR_FLAG = LN2              # union families: flat rules vs pair rules
PAIR_KIND = math.log(3.0)    # pair encodings: fresh | same | child back-ref
PAIR_CHILD = LN2             # which child a back-reference points at


class NoHypothesisError(ValueError):
    """Raised when an operation needs a family member and none qualifies."""


def _ln_choose(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def extension_cost(u: int, s: int, k: int) -> float:
    """Extra code length for pinning s of u distinct training inputs.

    ln(u+1) encodes |S|, ln C(u, s) the subset, s ln K the pinned labels.
    Every family member carries the s=0 surcharge ln(u+1), which keeps the
    Kraft sum of the extended family equal to that of the base rules.
    """
    return math.log(u + 1) + _ln_choose(u, s) + s * math.log(k)


# ---------------------------------------------------------------------------
# Hypotheses and curves


@dataclass(frozen=True)
class Hypothesis:
    """A conditional table p(y|x) with an explicit description length.

    ``pins`` records the memorized (input, label) pairs when the hypothesis
    is a pinned variant of a base rule; ``rule_index`` is the base rule's
    position in its family (-1 for hypotheses built outside a family).
    """

    table: np.ndarray
    code_length: float
    name: str = ""
    rule_index: int = -1
    pins: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        table = np.ascontiguousarray(np.asarray(self.table, dtype=np.float64))
        if table.ndim != 2:
            raise ValueError("hypothesis table must be (M, K)")
        if (table < 0).any():
            raise ValueError("hypothesis table must be nonnegative")
        if table.size and np.abs(table.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("hypothesis rows must sum to 1 within 1e-12")
        if not (math.isfinite(self.code_length) and self.code_length >= 0):
            raise ValueError("code_length must be finite and >= 0")
        table.flags.writeable = False
        object.__setattr__(self, "table", table)

    @property
    def is_constant(self) -> bool:
        return bool((self.table == self.table[:1, :]).all())

    @property
    def is_deterministic(self) -> bool:
        return bool(((self.table == 0.0) | (self.table == 1.0)).all())

    def identity(self) -> tuple:
        """(rule index, pin set) key used when comparing argmin sets."""
        return (self.rule_index, frozenset(self.pins))


@dataclass(frozen=True)
class Curve:
    """Sampled trade-off curve: (abscissa, loss NATS, complexity NATS)."""

    abscissa: np.ndarray
    loss: np.ndarray
    complexity: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.abscissa, dtype=np.float64)
        l = np.asarray(self.loss, dtype=np.float64)
        c = np.asarray(self.complexity, dtype=np.float64)
        if not (a.shape == l.shape == c.shape) or a.ndim != 1:
            raise ValueError("curve columns must be equal-length 1-d arrays")
        if a.size > 1 and not (np.diff(a) > 0).all():
            raise ValueError("curve abscissas must be strictly increasing")
        for arr in (a, l, c):
            arr.flags.writeable = False
        object.__setattr__(self, "abscissa", a)
        object.__setattr__(self, "loss", l)
        object.__setattr__(self, "complexity", c)

    def __len__(self) -> int:
        return len(self.abscissa)


# ---------------------------------------------------------------------------
# Family construction


@dataclass
class _Rule:
    name: str
    cost: float
    table: np.ndarray                 # (rows, K), rows = own space size
    # for pair rules: ((left space, left rule), (right space, right rule)),
    # both unpadded, used by child back-references one level up
    children: tuple | None = None


def _pad_rows(table: np.ndarray, rows: int) -> np.ndarray:
    if table.shape[0] == rows:
        return table
    k = table.shape[1]
    pad = np.full((rows - table.shape[0], k), 1.0 / k)
    return np.vstack([table, pad])


class HypothesisFamily:
    """Enumerable hypothesis family over a discrete input space.

    Build with :meth:`for_space` (structured rules as described in the
    module docstring) or :meth:`from_rules` (explicit custom rules). The
    family exposes stacked ``tables`` (R, M, K), ``costs`` (R,) and
    ``names``; list position is the enumeration order used for tie-breaking.
    """

    MAX_RULES = 400_000

    def __init__(self, space: DiscreteSpace, num_labels: int, rules: list[_Rule],
                 noise_grid: tuple[float, ...], custom: bool = False):
        if not rules:
            raise NoHypothesisError("no hypothesis: family is empty")
        self.space = space
        self.num_labels = num_labels
        self.noise_grid = tuple(noise_grid)
        self.custom = custom
        self.tables = np.ascontiguousarray(
            np.stack([r.table for r in rules]).astype(np.float64))
        self.costs = np.array([r.cost for r in rules], dtype=np.float64)
        self.names = [r.name for r in rules]
        t = self.tables
        self.is_constant = (t == t[:, :1, :]).all(axis=(1, 2))
        self.is_deterministic = ((t == 0.0) | (t == 1.0)).all(axis=(1, 2))
        kraft = self.kraft_sum()
        if kraft > 1.0 + 1e-9:
            raise ValueError(f"family violates the Kraft budget: {kraft:.6f} > 1")

    def __len__(self) -> int:
        return len(self.names)

    def kraft_sum(self) -> float:
        return float(math.fsum(math.exp(-c) for c in self.costs))

    def hypothesis(self, index_or_name) -> Hypothesis:
        """Base rule as a standalone Hypothesis (intrinsic code length)."""
        if isinstance(index_or_name, str):
            try:
                i = self.names.index(index_or_name)
            except ValueError:
                raise KeyError(index_or_name) from None
        else:
            i = int(index_or_name)
        return Hypothesis(table=self.tables[i], code_length=float(self.costs[i]),
                          name=self.names[i], rule_index=i)

    def hypotheses(self) -> list[Hypothesis]:
        return [self.hypothesis(i) for i in range(len(self))]

    # -- construction -------------------------------------------------------

    @classmethod
    def for_space(cls, space: DiscreteSpace, num_labels: int,
                  noise_grid: tuple[float, ...] = (0.05, 0.1, 0.2)
                  ) -> "HypothesisFamily":
        if num_labels < 2:
            raise ValueError("family needs num_labels >= 2")
        rules = cls._rules_for_space(space, num_labels, tuple(noise_grid))
        if len(rules) > cls.MAX_RULES:
            raise ValueError(
                f"family too large to enumerate ({len(rules)} rules); "
                "use smaller domains")
        return cls(space, num_labels, rules, tuple(noise_grid))

    @classmethod
    def from_rules(cls, hypotheses, space: DiscreteSpace | None = None,
                   num_labels: int | None = None) -> "HypothesisFamily":
        hs = list(hypotheses)
        if not hs:
            raise NoHypothesisError("no hypothesis: family is empty")
        m, k = hs[0].table.shape
        rules = [
            _Rule(h.name or f"rule{i}", float(h.code_length), np.asarray(h.table))
            for i, h in enumerate(hs)
        ]
        return cls(space or DiscreteSpace(m), num_labels or k, rules, (),
                   custom=True)

    @classmethod
    def _rules_for_space(cls, space, k, noise_grid) -> list[_Rule]:
        if space.parts is None:
            return cls._flat_rules(space.size, k, noise_grid)

        mmax = space.size // 2
        rules = cls._flat_rules(space.size, k, noise_grid)
        for r in rules:
            r.cost += PAIR_FLAG
            r.name = f"flat[{r.name}]"

        left_part, right_part = space.parts
        left = cls._rules_for_space(left_part.space, k, noise_grid)
        right = cls._rules_for_space(right_part.space, k, noise_grid)
        left_tables = [_pad_rows(r.table, mmax) for r in left]
        right_tables = [_pad_rows(r.table, mmax) for r in right]

        base = PAIR_FLAG + PAIR_KIND
        for a, at in zip(left, left_tables):
            for b, bt in zip(right, right_tables):
                rules.append(_Rule(
                    f"pair({a.name}|{b.name})", base + a.cost + b.cost,
                    np.vstack([at, bt]),
                    children=((left_part.space, a), (right_part.space, b)),
                ))
        if left_part.space == right_part.space:
            for a, at in zip(left, left_tables):
                rules.append(_Rule(
                    f"pair({a.name}|=)", base + a.cost,
                    np.vstack([at, at]),
                    children=((left_part.space, a), (right_part.space, a)),
                ))
        for a, at in zip(left, left_tables):
            if a.children is None:
                continue
            for which, (child_space, child) in enumerate(a.children):
                if child_space != right_part.space:
                    continue
                rules.append(_Rule(
                    f"pair({a.name}|<{which}])", base + a.cost + PAIR_CHILD,
                    np.vstack([at, _pad_rows(child.table, mmax)]),
                    children=((left_part.space, a), (right_part.space, child)),
                ))
        return rules

    @classmethod
    def _flat_rules(cls, m, k, noise_grid) -> list[_Rule]:
        bits = max(1, int(math.ceil(math.log2(m))) if m > 1 else 1)
        nq = len(noise_grid)
        smooth_tag = math.log(1 + nq) if nq else 0.0

        det: list[_Rule] = []
        rules: list[_Rule] = [_Rule("uniform", _GROUP_TAG, np.full((m, k), 1.0 / k))]

        xs = np.arange(m)
        for c in range(k):
            table = np.zeros((m, k))
            table[:, c] = 1.0
            det.append(_Rule(f"const{c}",
                             _GROUP_TAG + math.log(k) + smooth_tag, table))
        for j in range(bits):
            for inv in (0, 1):
                labels = ((xs >> j) & 1) ^ inv
                table = np.zeros((m, k))
                table[xs, labels] = 1.0
                det.append(_Rule(
                    f"bit{j}" + ("~inv" if inv else ""),
                    _GROUP_TAG + math.log(bits) + LN2 + smooth_tag, table))
        for mask in range(2 ** bits):
            for inv in (0, 1):
                par = np.zeros(m, dtype=np.int64)
                v = xs & mask
                while v.any():
                    par ^= v & 1
                    v >>= 1
                table = np.zeros((m, k))
                table[xs, par ^ inv] = 1.0
                det.append(_Rule(
                    f"parity{mask:03d}" + ("~inv" if inv else ""),
                    _GROUP_TAG + bits * LN2 + LN2 + smooth_tag, table))

        rules.extend(det)
        for r in det:
            for q in noise_grid:
                table = r.table * (1.0 - q) + (1.0 - r.table) * (q / (k - 1))
                rules.append(_Rule(f"{r.name}~q{q:g}", r.cost, table))
        return rules

    def space_token(self) -> str:
        from .tasks import _union_spec
        return _union_spec(self.space)


def save_family(fam: HypothesisFamily, path) -> None:
    """Write the versioned family description file."""
    lines = [
        "# taskinfo-family v1",
        f"space={fam.space_token()}",
        f"labels={fam.num_labels}",
        "noise_grid=" + ",".join(repr(q) for q in fam.noise_grid),
        f"custom={int(fam.custom)}",
        f"rules={len(fam)}",
    ]
    for i in range(len(fam)):
        cells = ["rule", str(i), repr(float(fam.costs[i])), fam.names[i]]
        if fam.custom:
            cells.append(";".join(repr(float(v)) for v in fam.tables[i].ravel()))
        lines.append("\t".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_family(path) -> HypothesisFamily:
    from .tasks import _parse_union_spec

    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != "# taskinfo-family v1":
        raise ValueError(f"{path}: not a taskinfo-family v1 file")
    header: dict[str, str] = {}
    rule_lines = []
    for ln in lines[1:]:
        if ln.startswith("rule\t"):
            rule_lines.append(ln.split("\t"))
        else:
            key, _, value = ln.partition("=")
            header[key] = value
    space, _ = _parse_union_spec(header["space"])
    k = int(header["labels"])
    noise_grid = tuple(float(v) for v in header["noise_grid"].split(",") if v)
    if header.get("custom") == "1":
        hyps = []
        for cells in rule_lines:
            flat = np.array([float(v) for v in cells[4].split(";")])
            hyps.append(Hypothesis(flat.reshape(flat.size // k, k),
                                   float(cells[2]), cells[3]))
        return HypothesisFamily.from_rules(hyps, space, k)
    fam = HypothesisFamily.for_space(space, k, noise_grid)
    if len(fam) != int(header["rules"]):
        raise ValueError(f"{path}: rule count mismatch with reconstruction")
    for cells in rule_lines:
        i = int(cells[1])
        if fam.names[i] != cells[3] or float(cells[2]) != float(fam.costs[i]):
            raise ValueError(f"{path}: rule {i} does not match reconstruction")
    return fam


# ---------------------------------------------------------------------------
# Candidate evaluation
#
# A candidate is a pair (rule r, pin count s). The canonical pin set for
# (r, s) pins the s pure input groups with the largest group losses under r
# (ties toward the smaller group index); pinning a group sets its row
# one-hot at the group's label. Mixed-label groups cannot be pinned (no
# one-hot row reproduces them). Selection runs on vectorized approximate
# losses; every candidate that could be within the tie window of a minimum
# is re-evaluated exactly with fsum over per-sample terms.

_APPROX_MARGIN = 1e-6


class _Candidates:
    def __init__(self, d: Dataset, fam: HypothesisFamily):
        if not isinstance(d.space, DiscreteSpace):
            raise ValueError("the oracle works on discrete input spaces")
        if d.space.size != fam.space.size:
            raise ValueError(
                "incompatible hypothesis family: domain size "
                f"{fam.space.size} != dataset domain {d.space.size}")
        if d.labels.size and int(d.labels.max()) >= fam.num_labels:
            raise ValueError("incompatible hypothesis family: label outside K")
        self.d = d
        self.fam = fam
        self.k = fam.num_labels

        xs, inverse = np.unique(d.inputs, return_inverse=True)
        u = len(xs)
        counts = np.zeros((u, self.k), dtype=np.float64)
        np.add.at(counts, (inverse, d.labels), 1.0)
        if u:
            majority = counts.argmax(axis=1).astype(np.int64)
            pure = counts.sum(axis=1) == counts[np.arange(u), majority]
        else:
            majority = np.zeros(0, dtype=np.int64)
            pure = np.zeros(0, dtype=bool)
        self.xs = xs
        self.inverse = inverse
        self.counts = counts
        self.majority = majority
        self.pure = pure
        self.u = u
        self.n_pure = int(pure.sum())

        # approximate per-group losses (used for candidate selection only)
        if u:
            t = fam.tables[:, xs, :]
            nl = np.where(t > 0, -np.log(np.maximum(t, 1e-300)), INF_NATS)
            self.group_loss = np.einsum("gk,rgk->rg", counts, nl)
        else:
            self.group_loss = np.zeros((len(fam), 0))
        mixed_total = self.group_loss[:, ~pure].sum(axis=1)
        pure_idx = np.flatnonzero(pure)
        pure_loss = self.group_loss[:, pure_idx]
        order = np.argsort(-pure_loss, axis=1, kind="stable")
        self.pin_order = pure_idx[order]          # (R, n_pure) group indices
        sorted_desc = np.take_along_axis(pure_loss, order, axis=1)
        rev_cumsum = np.cumsum(sorted_desc[:, ::-1], axis=1)[:, ::-1]
        suffix = np.concatenate([rev_cumsum, np.zeros((len(fam), 1))], axis=1)
        self.approx_loss = mixed_total[:, None] + suffix   # (R, n_pure+1)

        self.ext = np.array(
            [extension_cost(u, s, self.k) for s in range(self.n_pure + 1)])
        self.cost = fam.costs[:, None] + self.ext[None, :]

        self._nll_cache: dict[int, np.ndarray] = {}
        self._exact_cache: dict[tuple[int, int], float] = {}

    # -- exact evaluation ---------------------------------------------------

    def _per_sample_nll(self, r: int) -> np.ndarray:
        got = self._nll_cache.get(r)
        if got is None:
            table = self.fam.tables[r]
            got = np.array([
                -math.log(p) if p > 0.0 else INF_NATS
                for p in table[self.d.inputs, self.d.labels]
            ]) if len(self.d) else np.zeros(0)
            self._nll_cache[r] = got
        return got

    def exact_loss(self, r: int, s: int, pin_groups=None) -> float:
        """fsum of per-sample -ln p over samples outside the pinned groups."""
        key = (r, s) if pin_groups is None else None
        if key is not None and key in self._exact_cache:
            return self._exact_cache[key]
        if pin_groups is None:
            pin_groups = self.pin_order[r, :s]
        keep = ~np.isin(self.inverse, pin_groups)
        value = math.fsum(self._per_sample_nll(r)[keep])
        if key is not None:
            self._exact_cache[key] = value
        return value

    def pins_for(self, r: int, s: int, pin_groups=None) -> tuple:
        if pin_groups is None:
            pin_groups = self.pin_order[r, :s]
        return tuple(sorted(
            (int(self.xs[g]), int(self.majority[g])) for g in pin_groups))

    def hypothesis_for(self, r: int, s: int, pin_groups=None) -> Hypothesis:
        if pin_groups is None:
            pin_groups = self.pin_order[r, :s]
        table = np.array(self.fam.tables[r])
        pins = self.pins_for(r, s, pin_groups)
        for x, label in pins:
            table[x, :] = 0.0
            table[x, label] = 1.0
        cost = float(self.fam.costs[r] + self.ext[s])
        name = self.fam.names[r] + (f"+pin{len(pins)}" if pins else "")
        return Hypothesis(table=table, code_length=cost, name=name,
                          rule_index=r, pins=pins)

    # -- exact minimization over candidates ----------------------------------

    def minimize(self, beta: float, cost_cap: float | None = None):
        """Exact min of loss + beta * cost, optionally under cost <= cap.

        Returns (value, ties) where ties lists (value, cost, r, s) for every
        candidate whose exact value is within TIE_ATOL of the minimum,
        sorted by the tie-break key (cost, r, s).
        """
        values = self.approx_loss + beta * self.cost
        if cost_cap is not None:
            values = np.where(self.cost <= cost_cap, values, np.inf)
        vmin = float(values.min())
        if not math.isfinite(vmin):
            return math.inf, []
        margin = _APPROX_MARGIN * (1.0 + abs(vmin)) + TIE_ATOL
        short = np.argwhere(values <= vmin + margin)
        exact = []
        for r, s in short:
            r, s = int(r), int(s)
            val = self.exact_loss(r, s) + beta * float(self.cost[r, s])
            exact.append((val, float(self.cost[r, s]), r, s))
        best = min(e[0] for e in exact)
        ties = sorted((e for e in exact if e[0] <= best + TIE_ATOL),
                      key=lambda e: (e[1], e[2], e[3]))
        return best, ties

    def min_loss_under_cost(self, cap: float):
        """Exact min loss among candidates with cost <= cap."""
        losses = np.where(self.cost <= cap, self.approx_loss, np.inf)
        lmin = float(losses.min())
        if not math.isfinite(lmin):
            return math.inf, None
        margin = _APPROX_MARGIN * (1.0 + abs(lmin)) + TIE_ATOL
        short = np.argwhere(losses <= lmin + margin)
        exact = []
        for r, s in short:
            r, s = int(r), int(s)
            exact.append((self.exact_loss(r, s), float(self.cost[r, s]), r, s))
        best = min(e[0] for e in exact)
        ties = sorted((e for e in exact if e[0] <= best + TIE_ATOL),
                      key=lambda e: (e[1], e[2], e[3]))
        return best, ties[0]


def _report(value: float) -> float:
    return math.inf if value >= _INF_REPORT else value


# ---------------------------------------------------------------------------
# Operations


def empirical_loss(h: Hypothesis, d: Dataset) -> float:
    """Total cross-entropy sum_i -ln p(y_i | x_i); +inf on a zero hit."""
    if not isinstance(d.space, DiscreteSpace):
        raise ValueError("incompatible hypothesis: dataset is not discrete")
    if h.table.shape[0] != d.space.size:
        raise ValueError(
            f"incompatible hypothesis: table rows {h.table.shape[0]} != "
            f"domain {d.space.size}")
    if h.table.shape[1] < d.num_labels:
        raise ValueError("incompatible hypothesis: too few label columns")
    probs = h.table[d.inputs, d.labels]
    return _report(math.fsum(
        -math.log(p) if p > 0.0 else INF_NATS for p in probs))


def mle(d: Dataset) -> Hypothesis:
    """Empirical conditional frequencies; unseen inputs get the uniform row.

    Minimizes the empirical loss over all conditional tables. Not a family
    member; its code length is reported as 0.
    """
    if not isinstance(d.space, DiscreteSpace):
        raise ValueError("mle needs a discrete input space")
    m, k = d.space.size, d.num_labels
    counts = np.zeros((m, k))
    np.add.at(counts, (d.inputs, d.labels), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    table = np.where(totals > 0, counts / np.maximum(totals, 1.0), 1.0 / k)
    return Hypothesis(table=table, code_length=0.0, name="mle")


def lagrangian_complexity(d: Dataset, fam: HypothesisFamily, beta: float
                          ) -> tuple[float, Hypothesis]:
    """min over the extended family of loss + beta * code length."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    cand = _Candidates(d, fam)
    value, ties = cand.minimize(beta)
    _, _, r, s = ties[0]
    return _report(value), cand.hypothesis_for(r, s)


def complexity(d: Dataset, fam: HypothesisFamily) -> tuple[float, Hypothesis]:
    """Two-part complexity: min of loss + code length (beta = 1)."""
    return lagrangian_complexity(d, fam, 1.0)


def structure_function(d: Dataset, fam: HypothesisFamily, t_grid) -> Curve:
    """S(t) = min loss among hypotheses of code length <= t."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size > 1 and not (np.diff(t_grid) > 0).all():
        raise ValueError("t_grid must be strictly increasing")
    cand = _Candidates(d, fam)
    losses, complexities = [], []
    for t in t_grid:
        best, where = cand.min_loss_under_cost(float(t))
        if where is None:
            losses.append(math.inf)
            complexities.append(math.inf)
        else:
            losses.append(_report(best))
            complexities.append(where[1])
    return Curve(t_grid, np.array(losses), np.array(complexities))


@dataclass(frozen=True)
class BetaStatistic:
    hypothesis: Hypothesis
    value: float        # loss + beta * code length (exact)
    is_minimal: bool    # minimizes code length among the returned set


def beta_sufficient_statistics(d: Dataset, fam: HypothesisFamily, beta: float,
                               tol: float, max_results: int = 10_000
                               ) -> list[BetaStatistic]:
    """Every hypothesis within tol of the Lagrangian minimum.

    Pin-set ties are enumerated exhaustively, so for tol = 0 the result is
    exactly the argmin set (up to the TIE_ATOL float-tie window). The
    beta-minimal members (smallest code length) are flagged.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    cand = _Candidates(d, fam)
    vmin, _ = cand.minimize(beta)
    limit = vmin + tol + TIE_ATOL

    values = cand.approx_loss + beta * cand.cost
    margin = _APPROX_MARGIN * (1.0 + abs(limit))
    short = np.argwhere(values <= limit + margin)

    found = []
    for r, s in short:
        r, s = int(r), int(s)
        cost = float(cand.cost[r, s])
        budget = limit - beta * cost    # max loss a variant may have
        for pin_groups in _pin_sets_within(cand, r, s, budget):
            loss = cand.exact_loss(r, s, pin_groups)
            if loss + beta * cost <= limit:
                found.append((cost, r, s,
                              tuple(int(g) for g in sorted(pin_groups)),
                              loss + beta * cost))
                if len(found) > max_results:
                    raise NoHypothesisError(
                        "too many sufficient statistics to enumerate")
    found.sort(key=lambda e: (e[1], e[2], e[3]))
    min_cost = min(e[0] for e in found)
    out = []
    for cost, r, s, pin_groups, value in found:
        h = cand.hypothesis_for(r, s, np.array(pin_groups, dtype=np.int64))
        out.append(BetaStatistic(h, _report(value),
                                 is_minimal=cost <= min_cost + TIE_ATOL))
    return out


def _pin_sets_within(cand: _Candidates, r: int, s: int, budget: float):
    """s-subsets of pure groups keeping the variant loss <= budget.

    Approximate group losses guide a branch-and-bound walk over the groups
    sorted by descending loss; callers re-check candidates exactly.
    """
    if s == 0:
        if cand.approx_loss[r, 0] <= budget + _APPROX_MARGIN * (1 + abs(budget)):
            yield np.zeros(0, dtype=np.int64)
        return
    pure = cand.pin_order[r]              # sorted by descending group loss
    glosses = cand.group_loss[r, pure]
    total = float(cand.approx_loss[r, 0])  # loss with nothing pinned
    slack = _APPROX_MARGIN * (1.0 + abs(budget)) + TIE_ATOL
    need = total - budget - slack          # required pinned loss mass
    prefix = np.concatenate([[0.0], np.cumsum(glosses)])

    results: list[np.ndarray] = []

    def rec(start: int, chosen: list[int], acc: float):
        if len(chosen) == s:
            if acc >= need:
                results.append(pure[np.array(chosen, dtype=np.int64)])
            return
        remaining = s - len(chosen)
        for i in range(start, len(glosses) - remaining + 1):
            if acc + (prefix[i + remaining] - prefix[i]) < need:
                break
            rec(i + 1, chosen + [i], acc + float(glosses[i]))

    rec(0, [], 0.0)
    yield from results


def critical_beta(d: Dataset, fam: HypothesisFamily, tol_bisect: float = 1e-3
                  ) -> float:
    """Largest beta at which the Lagrangian min is not constant-realized.

    Found by bisection with exact Lagrangian evaluations. Returns 0.0 when
    a constant rule already realizes the beta = 0 minimum.
    """
    if not fam.is_constant.any():
        raise ValueError("family contains no constant distributions")
    cand = _Candidates(d, fam)
    const_rules = [int(r) for r in np.flatnonzero(fam.is_constant)]

    def constant_realized(beta: float) -> bool:
        vmin, _ = cand.minimize(beta)
        vconst = min(cand.exact_loss(r, 0) + beta * float(cand.cost[r, 0])
                     for r in const_rules)
        return vconst <= vmin + TIE_ATOL

    if constant_realized(0.0):
        return 0.0
    hi = 1.0
    while not constant_realized(hi):
        hi *= 2.0
        if hi > 2.0 ** 40:
            raise RuntimeError("failed to bracket the critical beta")
    lo = 0.0
    while hi - lo > tol_bisect:
        mid = 0.5 * (lo + hi)
        if constant_realized(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def deterministic_complexity(d: Dataset, fam: HypothesisFamily) -> float | None:
    """Min code length of a fully one-hot hypothesis with zero loss on d.

    None when the dataset carries contradictory labels (no deterministic
    table fits) or no family candidate qualifies.
    """
    cand = _Candidates(d, fam)
    if not cand.pure.all():
        return None
    u = cand.u
    best = None
    for r in np.flatnonzero(fam.is_deterministic):
        r = int(r)
        hits = fam.tables[r][cand.xs, cand.majority] == 1.0
        s_min = int((~hits).sum())
        for s in range(s_min, u + 1):
            c = float(fam.costs[r]) + extension_cost(u, s, cand.k)
            if best is None or c < best:
                best = c
    if u == d.space.size and u > 0:
        # every domain row is a training input: pinning all of them makes
        # any base rule one-hot and zero-loss
        c_all = float(fam.costs.min()) + extension_cost(u, u, cand.k)
        if best is None or c_all < best:
            best = c_all
    return best


def _minimal_statistic_cost(d: Dataset, fam: HypothesisFamily, beta: float
                            ) -> float:
    _, ties = _Candidates(d, fam).minimize(beta)
    return min(cost for _, cost, _, _ in ties)


def oracle_distance(d1: Dataset, d2: Dataset, fam: HypothesisFamily,
                    beta: float) -> float:
    """Asymmetric distance d(d1 -> d2) through the disjoint union.

    Minimal-statistic code length of d1 u d2 minus that of d1, floored at
    zero. ``fam`` is the family for d1; the union family is derived with
    the same pricing.
    """
    c1 = _minimal_statistic_cost(d1, fam, beta)
    du = disjoint_union(d1, d2)
    fam_u = HypothesisFamily.for_space(du.space, du.num_labels, fam.noise_grid)
    c12 = _minimal_statistic_cost(du, fam_u, beta)
    return max(0.0, c12 - c1)


@dataclass(frozen=True)
class ExpectedComplexityTrial:
    mean_complexity: float
    conditional_entropy: float      # H_p(y|x) per sample, uniform inputs
    complexities: tuple[float, ...]

    @property
    def std_error(self) -> float:
        c = np.array(self.complexities)
        return float(c.std(ddof=1) / math.sqrt(len(c))) if len(c) > 1 else 0.0


def expected_complexity_trial(fam: HypothesisFamily, rule: Hypothesis, n: int,
                              trials: int, seed: int) -> ExpectedComplexityTrial:
    """Monte-Carlo mean of C(D) over datasets drawn from ``rule``.

    Inputs are i.i.d. uniform over the domain; labels are drawn from the
    rule's rows. Also returns the rule's exact conditional entropy.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    values = []
    for trial in range(trials):
        d = generate_planted_task(n, rule, 0.0, seed=seed * 100_003 + trial)
        values.append(complexity(d, fam)[0])
    t = rule.table
    logs = np.where(t > 0, np.log(np.maximum(t, 1e-300)), 0.0)
    h = float(-(t * logs).sum(axis=1).mean())
    return ExpectedComplexityTrial(
        mean_complexity=float(np.mean(values)),
        conditional_entropy=h,
        complexities=tuple(values),
    )
