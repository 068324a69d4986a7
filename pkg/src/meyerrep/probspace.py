"""Finite filtered probability trees with a Meyer information band.

Time is a grid 0..N with two phases per grid time: ``at`` is the grid
instant itself, ``post`` stands for the whole open interval up to the next
grid time (the carrier of right limits).  Information at the ``at`` phase
of time t is a partition G_t squeezed between F_{t-1} and F_t; on the open
interval it is F_t.  Everything downstream (processes, Snell envelopes,
the representation solver) computes on these partitions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadWeights,
    MeyerOutOfBand,
    NonRefining,
    NotAStoppingTime,
    ShapeMismatch,
    TooLarge,
)

AT = "at"
POST = "post"
INF = math.inf

__all__ = [
    "AT",
    "POST",
    "INF",
    "Partition",
    "FilteredTree",
    "StoppingTime",
    "phase_key",
    "make_tree",
    "conditional_expectation",
    "sigma_field_at",
    "enumerate_stopping_times",
    "is_lambda_stopping_time",
    "is_predictable_time",
]


def phase_key(time: float, phase: str = AT) -> float:
    """Total order on phase points: (0,at) < (0,post) < (1,at) < ... < inf."""
    if time == INF:
        return INF
    return 2.0 * time + (1.0 if phase == POST else 0.0)


@dataclass(frozen=True)
class Partition:
    """Partition of {0..M-1} into disjoint nonempty cells.

    Cells are canonicalized (members sorted, cells sorted by smallest
    member) so equality is structural.
    """

    cells: tuple[tuple[int, ...], ...]
    n_outcomes: int

    @staticmethod
    def of(cells, n_outcomes: int) -> "Partition":
        canon = []
        seen: set[int] = set()
        for cell in cells:
            members = tuple(sorted(set(int(w) for w in cell)))
            if not members:
                raise ShapeMismatch("empty partition cell")
            if any(w < 0 or w >= n_outcomes for w in members):
                raise ShapeMismatch("cell member out of range")
            if seen.intersection(members):
                raise ShapeMismatch("partition cells overlap")
            seen.update(members)
            canon.append(members)
        if len(seen) != n_outcomes:
            raise ShapeMismatch("partition does not cover all outcomes")
        canon.sort(key=lambda c: c[0])
        return Partition(tuple(canon), n_outcomes)

    @staticmethod
    def trivial(n_outcomes: int) -> "Partition":
        return Partition.of([range(n_outcomes)], n_outcomes)

    @staticmethod
    def discrete(n_outcomes: int) -> "Partition":
        return Partition.of([[w] for w in range(n_outcomes)], n_outcomes)

    def cell_index(self) -> tuple[int, ...]:
        """Map outcome -> position of its cell in ``cells``."""
        idx = [0] * self.n_outcomes
        for i, cell in enumerate(self.cells):
            for w in cell:
                idx[w] = i
        return tuple(idx)

    def cell_of(self, outcome: int) -> tuple[int, ...]:
        return self.cells[self.cell_index()[outcome]]

    def refines(self, coarser: "Partition") -> bool:
        """True when every cell of self lies inside one cell of ``coarser``."""
        cidx = coarser.cell_index()
        return all(len({cidx[w] for w in cell}) == 1 for cell in self.cells)

    def is_union_of_cells(self, event: set[int] | frozenset[int]) -> bool:
        """True when ``event`` is a (possibly empty) union of cells."""
        return all(event.issuperset(cell) or event.isdisjoint(cell)
                   for cell in self.cells)


@dataclass(frozen=True)
class FilteredTree:
    """Finite outcome set, filtration F_0..F_N and Meyer band G_0..G_N.

    ``horizon`` is N; processes live on grid times 0..N and vanish after
    the horizon.  F_{-1} is the trivial partition by convention, time
    infinity carries F_N information.
    """

    probs: np.ndarray
    horizon: int
    filtration: tuple[Partition, ...]
    meyer: tuple[Partition, ...]
    # per-partition cache: list of (members, cell_prob) per time, at/post
    _cells_G: tuple = field(repr=False, default=())
    _cells_F: tuple = field(repr=False, default=())

    @property
    def n_outcomes(self) -> int:
        return len(self.probs)

    def partition_at(self, time: float, phase: str = AT) -> Partition:
        """Information partition at a phase point (F_N at time infinity)."""
        if time == INF:
            return self.filtration[self.horizon]
        return self.meyer[int(time)] if phase == AT else self.filtration[int(time)]

    def check_shape(self, values) -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape != (self.n_outcomes,):
            raise ShapeMismatch(
                f"expected ({self.n_outcomes},) vector, got {arr.shape}")
        return arr

    def check_matrix(self, values) -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape != (self.n_outcomes, self.horizon + 1):
            raise ShapeMismatch(
                f"expected ({self.n_outcomes},{self.horizon + 1}) matrix, "
                f"got {arr.shape}")
        return arr

    def is_measurable(self, values, partition: Partition, tol: float = 0.0) -> bool:
        v = self.check_shape(values)
        for cell in partition.cells:
            block = v[list(cell)]
            if np.ptp(block) > tol:
                return False
        return True


def make_tree(probs, filtration, meyer) -> FilteredTree:
    """Validate and build a :class:`FilteredTree`.

    ``filtration`` and ``meyer`` are sequences of N+1 partitions (anything
    :meth:`Partition.of` accepts).  Raises ``BadWeights`` / ``NonRefining``
    / ``MeyerOutOfBand`` on invariant violations.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise BadWeights("probs must be a nonempty vector")
    if np.any(p <= 0):
        raise BadWeights("all outcome probabilities must be positive")
    if abs(p.sum() - 1.0) > 1e-12:
        raise BadWeights(f"probabilities sum to {p.sum()!r}, not 1")
    m = len(p)
    if len(filtration) != len(meyer) or len(filtration) == 0:
        raise ShapeMismatch("filtration and meyer need equal nonzero length")
    fs = tuple(q if isinstance(q, Partition) else Partition.of(q, m)
               for q in filtration)
    gs = tuple(q if isinstance(q, Partition) else Partition.of(q, m)
               for q in meyer)
    horizon = len(fs) - 1
    prev = Partition.trivial(m)
    for t, (f, g) in enumerate(zip(fs, gs)):
        if not f.refines(prev):
            raise NonRefining(f"F_{t} does not refine F_{t - 1}")
        if not g.refines(prev):
            raise MeyerOutOfBand(f"G_{t} is not finer than F_{t - 1}")
        if not f.refines(g):
            raise MeyerOutOfBand(f"G_{t} is not coarser than F_{t}")
        prev = f
    return FilteredTree(probs=p, horizon=horizon, filtration=fs, meyer=gs)


def conditional_expectation(tree: FilteredTree, values, partition: Partition) -> np.ndarray:
    """Probability-weighted cell average, constant on each cell."""
    v = tree.check_shape(values)
    out = np.empty_like(v)
    for cell in partition.cells:
        if len(cell) == 1:
            out[cell[0]] = v[cell[0]]
            continue
        idx = list(cell)
        w = tree.probs[idx]
        out[idx] = float(np.dot(w, v[idx]) / w.sum())
    return out


# ---------------------------------------------------------------------------
# stopping times


@dataclass(frozen=True)
class StoppingTime:
    """Random phase point: per outcome a grid time (or inf) and a phase.

    The phase at time infinity is normalized to ``at``.  Construct through
    :meth:`build` to enforce the measurability predicate.
    """

    times: tuple[float, ...]
    phases: tuple[str, ...]

    @staticmethod
    def build(tree: FilteredTree, times, phases) -> "StoppingTime":
        s = StoppingTime._raw(times, phases)
        if not is_lambda_stopping_time(tree, s):
            raise NotAStoppingTime(f"not measurable for the Meyer band: {s}")
        return s

    @staticmethod
    def _raw(times, phases) -> "StoppingTime":
        ts, ps = [], []
        for t, ph in zip(times, phases, strict=True):
            if t == INF:
                ts.append(INF)
                ps.append(AT)
                continue
            if ph not in (AT, POST):
                raise NotAStoppingTime(f"unknown phase {ph!r}")
            ti = int(t)
            if ti < 0 or ti != t:
                raise NotAStoppingTime(f"bad time value {t!r}")
            ts.append(ti)
            ps.append(ph)
        return StoppingTime(tuple(ts), tuple(ps))

    @staticmethod
    def constant(tree: FilteredTree, time: float, phase: str = AT) -> "StoppingTime":
        m = tree.n_outcomes
        return StoppingTime.build(tree, [time] * m, [phase] * m)

    def key(self, outcome: int) -> float:
        return phase_key(self.times[outcome], self.phases[outcome])

    def keys(self) -> tuple[float, ...]:
        return tuple(self.key(w) for w in range(len(self.times)))

    def all_finite(self) -> bool:
        return all(t != INF for t in self.times)

    def __le__(self, other: "StoppingTime") -> bool:
        return all(a <= b for a, b in zip(self.keys(), other.keys()))


def is_lambda_stopping_time(tree: FilteredTree, s: StoppingTime) -> bool:
    """Measurability predicate for the Meyer band.

    For each t the event {S <= (t,at)} must be a union of G_t-cells and
    {S = (t,post)} a union of F_t-cells; post phase is forbidden at inf.
    """
    if len(s.times) != tree.n_outcomes:
        raise ShapeMismatch("stopping time has wrong number of outcomes")
    for t, ph in zip(s.times, s.phases):
        if t == INF and ph == POST:
            return False
        if t != INF and t > tree.horizon:
            return False
    keys = s.keys()
    for t in range(tree.horizon + 1):
        at_event = {w for w, k in enumerate(keys) if k <= 2 * t}
        if not tree.meyer[t].is_union_of_cells(at_event):
            return False
        post_event = {w for w, k in enumerate(keys) if k == 2 * t + 1}
        if not tree.filtration[t].is_union_of_cells(post_event):
            return False
    return True


def is_predictable_time(tree: FilteredTree, s: StoppingTime) -> bool:
    """Announced-from-the-left surrogate: at-phase values whose level events
    are already known one grid step earlier (F_{t-1}; trivial at t=0,
    F_N at infinity)."""
    if any(ph == POST for t, ph in zip(s.times, s.phases) if t != INF):
        return False
    for t in range(tree.horizon + 1):
        event = {w for w, tv in enumerate(s.times) if tv == t}
        prev = (Partition.trivial(tree.n_outcomes) if t == 0
                else tree.filtration[t - 1])
        if not prev.is_union_of_cells(event):
            return False
    inf_event = {w for w, tv in enumerate(s.times) if tv == INF}
    return tree.filtration[tree.horizon].is_union_of_cells(inf_event)


def _information_partition(tree: FilteredTree, keys) -> Partition:
    """Partition generated by evaluating all band-measurable step processes
    at the random phase point given by ``keys`` (no stopping-time predicate
    required; used for divided stopping times too)."""
    m = tree.n_outcomes
    groups: dict[float, list[int]] = {}
    for w, k in enumerate(keys):
        groups.setdefault(k, []).append(w)
    cells = []
    for k, members in groups.items():
        if k == INF:
            base = tree.filtration[tree.horizon]
        else:
            t = int(k // 2)
            base = tree.meyer[t] if k == 2 * t else tree.filtration[t]
        idx = base.cell_index()
        sub: dict[int, list[int]] = {}
        for w in members:
            sub.setdefault(idx[w], []).append(w)
        cells.extend(sub.values())
    return Partition.of(cells, m)


def sigma_field_at(tree: FilteredTree, s: StoppingTime) -> Partition:
    """Information available when stopping at S: the trace of G_t on
    {S = (t,at)}, of F_t on {S = (t,post)} and of F_N on {S = inf},
    with cells never straddling distinct (time, phase) classes."""
    if not is_lambda_stopping_time(tree, s):
        raise NotAStoppingTime("sigma_field_at needs a valid stopping time")
    return _information_partition(tree, s.keys())


def enumerate_stopping_times(
    tree: FilteredTree,
    lower: StoppingTime | None = None,
    strict: bool = False,
    phases: tuple[str, ...] = (AT, POST),
    cap: int = 10 ** 6,
) -> list[StoppingTime]:
    """Exhaustive list of stopping times T >= lower (or > lower on
    {lower < inf} when ``strict``), finite phases drawn from ``phases``.

    Raises ``TooLarge`` when the raw candidate-assignment count exceeds
    ``cap``.
    """
    m = tree.n_outcomes
    n = tree.horizon
    candidates: list[tuple[float, str]] = []
    for t in range(n + 1):
        for ph in (AT, POST):
            if ph in phases:
                candidates.append((t, ph))
    candidates.append((INF, AT))
    candidates.sort(key=lambda c: phase_key(*c))

    per_outcome: list[list[tuple[float, str]]] = []
    for w in range(m):
        if lower is None:
            lo = -1.0
        else:
            lo = lower.key(w)
            if strict and lo != INF:
                lo = math.nextafter(lo, INF)
        allowed = [c for c in candidates if phase_key(*c) >= lo]
        if not allowed:
            allowed = [(INF, AT)]
        per_outcome.append(allowed)

    total = 1
    for allowed in per_outcome:
        total *= len(allowed)
        if total > cap:
            raise TooLarge(f"{total} candidate assignments exceed cap {cap}")

    out = []
    for combo in itertools.product(*per_outcome):
        s = StoppingTime._raw([c[0] for c in combo], [c[1] for c in combo])
        if is_lambda_stopping_time(tree, s):
            out.append(s)
    return out
