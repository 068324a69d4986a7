"""Shipped worked examples and the randomized fixture generator.

Random fixtures are built so the representation hypotheses hold by
construction: filtrations grow by binary splits, the Meyer band coarsens
each F_t toward F_{t-1}, the measure is adapted and positive (optional
zeroed time slices), and the payoff is band-projected Gaussian noise whose
interval values are the one-step conditional bridge of the next grid
value.  The bridge enforces the left- and right-semicontinuity surrogates
at once: on an interval with no mass before the next atom the payoff may
not sit strictly above, and approaching a grid time from the left it may
not sit strictly below, the conditional expectation of the value there.
Dead tails (no mass left) are zeroed for the terminal condition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .probspace import FilteredTree, Partition, conditional_expectation, make_tree
from .processes import CostField, LadlagProcess, RandomMeasure

__all__ = [
    "Fixture",
    "worked_example",
    "hplus_example",
    "single_atom_example",
    "random_fixture",
    "random_tree",
    "meyer_band_trio",
]


@dataclass(frozen=True)
class Fixture:
    name: str
    tree: FilteredTree
    x: LadlagProcess
    mu: RandomMeasure
    g: CostField


def worked_example() -> Fixture:
    """Two outcomes, one split at t=1, unit atoms, identity cost.

    The maximal signal is 0 at time zero and (2, 0) at time one; the
    interval entry at time zero is minus infinity (no mass inside) and
    the one after the horizon is plus infinity.
    """
    tree = make_tree(
        [0.5, 0.5],
        filtration=[[[0, 1]], [[0], [1]]],
        meyer=[[[0, 1]], [[0], [1]]],
    )
    x = LadlagProcess.build(tree, at=[[1.0, 2.0], [1.0, 0.0]],
                            post=[[0.0, 0.0], [0.0, 0.0]])
    mu = RandomMeasure.build(tree, [[1.0, 1.0], [1.0, 1.0]])
    g = CostField.linear(tree, a=1.0, b=0.0)
    return Fixture("worked-two-outcome", tree, x, mu, g)


def hplus_example() -> Fixture:
    """One outcome where stopping just after time zero is optimal:
    the payoff jumps up on the open interval behind the atom."""
    tree = make_tree([1.0], filtration=[[[0]], [[0]]], meyer=[[[0]], [[0]]])
    x = LadlagProcess.build(tree, at=[[0.0, 1.0]], post=[[1.0, 0.0]])
    mu = RandomMeasure.build(tree, [[1.0, 0.0]])
    g = CostField.linear(tree, a=1.0, b=0.0)
    return Fixture("hplus-interval-stop", tree, x, mu, g)


def single_atom_example(value: float = 3.0, weight: float = 2.0) -> Fixture:
    """One outcome, horizon zero: the signal is the cost inverse of
    value/weight at the only atom."""
    tree = make_tree([1.0], filtration=[[[0]]], meyer=[[[0]]])
    x = LadlagProcess.build(tree, at=[[value]], post=[[0.0]])
    mu = RandomMeasure.build(tree, [[weight]])
    g = CostField.linear(tree, a=1.0, b=0.0)
    return Fixture("single-atom", tree, x, mu, g)


# ---------------------------------------------------------------------------
# randomized fixtures


def _binary_refine(rng: np.random.Generator, part: Partition,
                   splits: int) -> Partition:
    cells = [list(c) for c in part.cells]
    for _ in range(splits):
        big = [i for i, c in enumerate(cells) if len(c) >= 2]
        if not big:
            break
        i = int(rng.choice(big))
        members = cells.pop(i)
        rng.shuffle(members)
        cut = int(rng.integers(1, len(members)))
        cells.append(members[:cut])
        cells.append(members[cut:])
    return Partition.of(cells, part.n_outcomes)


def random_tree(rng: np.random.Generator, n_outcomes: int, horizon: int,
                meyer_mode: str = "band") -> FilteredTree:
    """Binary-branching filtration; Meyer band by coarsening F_t toward
    F_{t-1} (modes: "band", "optional", "predictable")."""
    m = n_outcomes
    raw = rng.random(m) + 0.2
    probs = raw / raw.sum()
    parts = []
    current = Partition.trivial(m)
    for t in range(horizon + 1):
        n_splits = int(rng.integers(0, 3)) if t > 0 else int(rng.integers(0, 2))
        current = _binary_refine(rng, current, n_splits)
        parts.append(current)
    # make sure information actually grows somewhere
    if len(parts[-1].cells) == 1 and m > 1:
        parts[-1] = _binary_refine(rng, parts[-1], 1)
    meyer = []
    prev = Partition.trivial(m)
    for t, f in enumerate(parts):
        if meyer_mode == "optional":
            meyer.append(f)
        elif meyer_mode == "predictable":
            meyer.append(prev)
        else:
            pidx = prev.cell_index()
            groups: dict[int, list] = {}
            for cell in f.cells:
                groups.setdefault(pidx[cell[0]], []).append(list(cell))
            cells = []
            for children in groups.values():
                if len(children) >= 2 and rng.random() < 0.5:
                    merged = sorted(sum(children, []))
                    cells.append(merged)
                else:
                    cells.extend(children)
            meyer.append(Partition.of(cells, m))
        prev = f
    return make_tree(probs, parts, meyer)


def _random_cost(rng: np.random.Generator, tree: FilteredTree,
                 family: str) -> CostField:
    n1 = tree.horizon + 1
    if family == "linear":
        return CostField.linear(tree, a=rng.uniform(0.5, 2.0, size=n1), b=0.0)
    if family == "cubic_odd":
        return CostField.cubic_odd(tree, a=rng.uniform(0.2, 1.0, size=n1),
                                   c=rng.uniform(0.0, 1.0, size=n1))
    xs = np.array([-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0])
    base = np.cumsum(rng.uniform(0.3, 1.5, size=len(xs)))
    base -= base[3]  # normalized through the origin
    scale = rng.uniform(0.5, 2.0, size=n1)
    ys = scale[:, None] * base[None, :]
    return CostField.piecewise_linear(tree, xs, ys)


def random_fixture(seed: int, n_outcomes: int = 3, horizon: int = 2,
                   family: str = "linear", meyer_mode: str = "band",
                   zero_slices: bool = False, scale: float = 1.0) -> Fixture:
    """Random hypothesis-satisfying instance; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, n_outcomes, horizon, meyer_mode)
    m, n = tree.n_outcomes, tree.horizon

    weights = np.empty((m, n + 1))
    for t in range(n + 1):
        for cell in tree.filtration[t].cells:
            weights[list(cell), t] = rng.uniform(0.2, 1.5)
    if zero_slices and n >= 1:
        k = int(rng.integers(1, n + 1))  # at most n of the n+1 slices die
        dead = rng.choice(n + 1, size=k, replace=False)
        weights[:, dead] = 0.0
    mu = RandomMeasure.build(tree, weights)

    slice_alive = weights.sum(axis=0) > 0
    at = rng.normal(0.0, scale, size=(m, n + 1))
    for t in range(n + 1):
        at[:, t] = conditional_expectation(tree, at[:, t], tree.meyer[t])
    post = np.zeros((m, n + 1))
    for t in range(n, -1, -1):
        if t < n:
            post[:, t] = conditional_expectation(tree, at[:, t + 1],
                                                 tree.filtration[t])
        if not slice_alive[t + 1:].any():
            post[:, t] = 0.0
        if not slice_alive[t]:
            proj = conditional_expectation(tree, post[:, t], tree.meyer[t])
            at[:, t] = np.maximum(at[:, t], proj)
        if not slice_alive[t:].any():
            at[:, t] = 0.0
    x = LadlagProcess.build(tree, at, post)
    g = _random_cost(rng, tree, family)
    return Fixture(f"random-{seed}-{family}-{meyer_mode}", tree, x, mu, g)


def meyer_band_trio(seed: int = 11) -> list[Fixture]:
    """One payoff, three information bands: predictable, strictly-between,
    optional.  The payoff at t=1 is not F_0-measurable, so the three
    band projections (and hence the three signals) differ there."""
    rng = np.random.default_rng(seed)
    probs = [0.3, 0.3, 0.4]
    filt = [[[0, 1, 2]], [[0], [1], [2]], [[0], [1], [2]]]
    bands = {
        "predictable": [[[0, 1, 2]], [[0, 1, 2]], [[0], [1], [2]]],
        "band": [[[0, 1, 2]], [[0, 1], [2]], [[0], [1], [2]]],
        "optional": filt,
    }
    raw_at = np.array([
        [1.0, 2.0, 1.5],
        [1.0, 0.0, 0.5],
        [1.0, 1.0, 1.0],
    ])
    raw_at += 0.1 * rng.normal(size=raw_at.shape)
    raw_at[:, 0] = raw_at[0, 0]
    out = []
    for name, meyer in bands.items():
        tree = make_tree(probs, filt, meyer)
        m, n = tree.n_outcomes, tree.horizon
        at = raw_at.copy()
        for t in range(n + 1):
            at[:, t] = conditional_expectation(tree, at[:, t], tree.meyer[t])
        post = np.zeros((m, n + 1))
        for t in range(n - 1, -1, -1):
            post[:, t] = conditional_expectation(tree, at[:, t + 1],
                                                 tree.filtration[t])
        x = LadlagProcess.build(tree, at, post)
        mu = RandomMeasure.build(tree, np.ones((m, n + 1)))
        g = CostField.linear(tree, a=1.0, b=0.0)
        out.append(Fixture(f"meyer-{name}", tree, x, mu, g))
    return out
