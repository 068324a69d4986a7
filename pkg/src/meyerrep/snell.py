"""Snell envelopes with running cost, contact times and divided stopping.

For a level l the envelope is the value process of the stopping problem
"collect g_s(l) * mu_s at every atom passed, receive X when stopping".
The backward recursion alternates an interval step (conditioning on F_t)
and an atom step (conditioning on the Meyer partition G_t, so the
envelope stays band-measurable).  Stopping may happen at a grid instant,
inside an open interval, or just before a grid instant; the divided
stopping time quadruple (T, H-, H, H+) carries those three modes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ClassificationInconsistent,
    InvalidDividedTime,
    InvalidInput,
    TooLarge,
)
from .probspace import (
    AT,
    INF,
    POST,
    FilteredTree,
    Partition,
    StoppingTime,
    _information_partition,
    enumerate_stopping_times,
    phase_key,
    sigma_field_at,
)
from .processes import CostField, LadlagProcess, RandomMeasure

__all__ = [
    "SnellEnvelope",
    "DividedStoppingTime",
    "EnvelopeSolver",
    "snell_envelope",
    "envelope_oracle",
    "contact_time",
    "ContactInfo",
    "classify_contact",
    "divided_value",
    "brute_force_divided_optimum",
    "enumerate_divided_stopping_times",
    "DividedEnumeration",
    "validate_divided",
]


class EnvelopeSolver:
    """Backward-recursion engine with a per-level memo.

    Precomputes normalized cell weights once; ``envelope(l)`` returns the
    (at, post) value matrices of the envelope for level l.  Results are
    memoized because the representation solver probes many nearby levels.
    """

    def __init__(self, tree: FilteredTree, x: LadlagProcess,
                 mu: RandomMeasure, g: CostField):
        self.tree = tree
        self.x = x
        self.mu = mu
        self.g = g
        self._cells_g = [self._prep(p) for p in tree.meyer]
        self._cells_f = [self._prep(p) for p in tree.filtration]
        self._memo: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def _prep(self, part: Partition):
        out = []
        for cell in part.cells:
            idx = np.array(cell)
            w = self.tree.probs[idx]
            out.append((idx, w / w.sum()))
        return out

    @staticmethod
    def _ce(v: np.ndarray, cells) -> np.ndarray:
        out = np.empty_like(v)
        for idx, wn in cells:
            if len(idx) == 1:
                out[idx] = v[idx]
            else:
                out[idx] = float(wn @ v[idx])
        return out

    def envelope(self, ell: float) -> tuple[np.ndarray, np.ndarray]:
        hit = self._memo.get(ell)
        if hit is not None:
            return hit
        tree, x = self.tree, self.x
        n = tree.horizon
        gm = self.g.evaluate(ell) * self.mu.weights
        y_at = np.empty_like(x.at)
        y_post = np.empty_like(x.post)
        y_post[:, n] = np.maximum(x.post[:, n], 0.0)
        for t in range(n, -1, -1):
            cont = self._ce(gm[:, t] + y_post[:, t], self._cells_g[t])
            y_at[:, t] = np.maximum(x.at[:, t], cont)
            if t > 0:
                cont = self._ce(y_at[:, t], self._cells_f[t - 1])
                y_post[:, t - 1] = np.maximum(x.post[:, t - 1], cont)
        y_at.setflags(write=False)
        y_post.setflags(write=False)
        self._memo[ell] = (y_at, y_post)
        return y_at, y_post


@dataclass(frozen=True)
class SnellEnvelope:
    """Envelope process together with the level it was built for."""

    y: LadlagProcess
    level: float


def snell_envelope(tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure,
                   g: CostField, ell: float,
                   solver: EnvelopeSolver | None = None) -> SnellEnvelope:
    """Value process of stopping with payoff X and running cost g(l) d mu."""
    if not math.isfinite(ell):
        raise InvalidInput(f"level must be finite, got {ell!r}")
    if solver is None:
        solver = EnvelopeSolver(tree, x, mu, g)
    y_at, y_post = solver.envelope(ell)
    y = LadlagProcess.build(tree, y_at.copy(), y_post.copy(), terminal=0.0)
    return SnellEnvelope(y=y, level=ell)


def _cost_prefix(tree: FilteredTree, mu: RandomMeasure, g: CostField,
                 ell: float) -> np.ndarray:
    """(M, N+2) prefix sums of g_s(l) mu_s: column j = sum over s < j."""
    gm = g.evaluate(ell) * mu.weights
    out = np.zeros((tree.n_outcomes, tree.horizon + 2))
    out[:, 1:] = np.cumsum(gm, axis=1)
    return out


def _atom_bounds(key_lo: float, key_hi: float, n: int) -> tuple[int, int]:
    """Atom index range [a, b) covered by phase keys [key_lo, key_hi)."""
    a = 0 if key_lo == -INF else int(math.ceil(key_lo / 2.0))
    b = n + 1 if key_hi == INF else int(math.ceil(key_hi / 2.0))
    return a, min(max(b, a), n + 1)


def envelope_oracle(tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure,
                    g: CostField, ell: float, s: StoppingTime,
                    cap: int = 10 ** 6) -> np.ndarray:
    """Exhaustive value of the stopping problem from S, cell-by-cell.

    Maximizes CE(X_T + cost over [S,T) | information at S) over every
    enumerated stopping time T >= S, at either phase (stopping inside an
    open interval is a plain stopping time on this grid) or at infinity.
    Independent of the backward recursion; used as its oracle.
    """
    cands = enumerate_stopping_times(tree, lower=s, strict=False,
                                     phases=(AT, POST), cap=cap)
    prefix = _cost_prefix(tree, mu, g, ell)
    part = sigma_field_at(tree, s)
    m, n = tree.n_outcomes, tree.horizon
    s_keys = s.keys()
    best = np.full(m, -INF)
    probs = tree.probs
    for t_stop in cands:
        pay = np.empty(m)
        for w in range(m):
            a, b = _atom_bounds(s_keys[w], t_stop.key(w), n)
            pay[w] = x.value(w, t_stop.times[w], t_stop.phases[w]) \
                + prefix[w, b] - prefix[w, a]
        for cell in part.cells:
            idx = list(cell)
            v = float(np.dot(probs[idx], pay[idx]) / probs[idx].sum())
            for w in idx:
                if v > best[w]:
                    best[w] = v
    return best


# ---------------------------------------------------------------------------
# contact times and classification


@dataclass(frozen=True)
class ContactInfo:
    """First contact of envelope and payoff from S, per outcome.

    ``kinds``: "at" for contact at a grid instant, "post" for contact on
    an open interval (the discrete carrier of one-sided limit contact),
    "terminal" when contact only happens at infinity where both vanish.
    """

    times: tuple[float, ...]
    phases: tuple[str, ...]
    kinds: tuple[str, ...]

    def key(self, outcome: int) -> float:
        return phase_key(self.times[outcome], self.phases[outcome])


def contact_time(tree: FilteredTree, x: LadlagProcess, env: SnellEnvelope,
                 s: StoppingTime, tol_eq: float = 1e-9) -> ContactInfo:
    """Scan phase points from S for the first place the envelope touches
    the payoff; equality is tested relative to 1 + |X|."""
    y = env.y
    m, n = tree.n_outcomes, tree.horizon
    times, phases, kinds = [], [], []

    def touches(a: float, b: float) -> bool:
        return abs(a - b) <= tol_eq * (1.0 + abs(b))

    for w in range(m):
        k0 = s.key(w)
        found: tuple[float, str, str] | None = None
        if k0 != INF:
            k = int(k0)
            while k <= 2 * n + 1:
                t = k // 2
                if k % 2 == 0:
                    if touches(y.at[w, t], x.at[w, t]):
                        found = (t, AT, "at")
                        break
                else:
                    if touches(y.post[w, t], x.post[w, t]):
                        found = (t, POST, "post")
                        break
                k += 1
        if found is None:
            found = (INF, AT, "terminal")
        times.append(found[0])
        phases.append(found[1])
        kinds.append(found[2])
    return ContactInfo(tuple(times), tuple(phases), tuple(kinds))


@dataclass(frozen=True)
class DividedStoppingTime:
    """Quadruple (T, H-, H, H+): an at-phase time plus a three-way split.

    On H- the stop happens just before T (payoff is the left limit, the
    atom at T excluded); on H at T itself; on H+ just after T (right
    limit, atom at T included).
    """

    times: tuple[float, ...]
    hminus: frozenset[int]
    h: frozenset[int]
    hplus: frozenset[int]

    def key(self, outcome: int) -> float:
        return phase_key(self.times[outcome], AT)

    def sort_token(self):
        rank = {w: 0 for w in self.h}
        rank.update({w: 1 for w in self.hplus})
        rank.update({w: 2 for w in self.hminus})
        return (self.times, tuple(rank[w] for w in range(len(self.times))))


def validate_divided(tree: FilteredTree, tau: DividedStoppingTime,
                     lower: StoppingTime | None = None) -> None:
    """Raise InvalidDividedTime on any violated quadruple invariant."""
    m, n = tree.n_outcomes, tree.horizon
    if len(tau.times) != m:
        raise InvalidDividedTime("wrong number of outcomes")
    groups = [tau.hminus, tau.h, tau.hplus]
    union = set().union(*groups)
    if union != set(range(m)) or sum(len(g) for g in groups) != m:
        raise InvalidDividedTime("H-, H, H+ must partition the outcomes")
    for w, t in enumerate(tau.times):
        if t != INF and (t != int(t) or t < 0 or t > n):
            raise InvalidDividedTime(f"bad time {t!r} on outcome {w}")
        if lower is not None and phase_key(t, AT) < lower.key(w):
            raise InvalidDividedTime(f"T < S on outcome {w}")
    if any(tau.times[w] == 0 for w in tau.hminus):
        raise InvalidDividedTime("H- meets {T = 0}")
    if any(tau.times[w] == INF for w in tau.hplus):
        raise InvalidDividedTime("H+ meets {T = infinity}")
    # T itself is optional: {T <= t} a union of F_t-cells
    for t in range(n + 1):
        ev = {w for w in range(m) if tau.times[w] <= t}
        if not tree.filtration[t].is_union_of_cells(ev):
            raise InvalidDividedTime(f"{{T <= {t}}} not F_{t}-measurable")
    # restriction to H is a band stopping time
    for t in range(n + 1):
        ev = {w for w in tau.h if tau.times[w] <= t}
        if not tree.meyer[t].is_union_of_cells(ev):
            raise InvalidDividedTime(f"H-part not band-measurable at t={t}")
    # restriction to H- is predictable: value and location known a step early
    for t in range(1, n + 1):
        ev = {w for w in tau.hminus if tau.times[w] == t}
        if not tree.filtration[t - 1].is_union_of_cells(ev):
            raise InvalidDividedTime(f"H--part at t={t} not announced")
    ev = {w for w in tau.hminus if tau.times[w] == INF}
    if not tree.filtration[n].is_union_of_cells(ev):
        raise InvalidDividedTime("H--part at infinity not F_N-measurable")
    # traces inside each level set of T
    info = _information_partition(
        tree, tuple(phase_key(t, AT) for t in tau.times))
    for name, grp in (("H", tau.h), ("H+", tau.hplus), ("H-", tau.hminus)):
        if not info.is_union_of_cells(set(grp)):
            raise InvalidDividedTime(f"{name} not in the stopped information")


def classify_contact(tree: FilteredTree, x: LadlagProcess, env: SnellEnvelope,
                     s: StoppingTime, tol_eq: float = 1e-9) -> DividedStoppingTime:
    """Turn the first contact into a divided stopping time.

    Contact at a grid instant lands in H.  Contact on an open interval
    lands in H+ at its grid time (stop just after, atom included), except
    when the window itself starts inside that interval: then the stop is
    announced from the left of the next grid time and lands in H- (H at
    infinity when no grid time is left).  Terminal contact lands in H at
    infinity.  The result is validated; an inconsistency signals a
    tolerance problem.
    """
    info = contact_time(tree, x, env, s, tol_eq)
    n = tree.horizon
    times: list[float] = []
    hm, h, hp = set(), set(), set()
    for w in range(tree.n_outcomes):
        t, ph, kind = info.times[w], info.phases[w], info.kinds[w]
        if kind == "terminal":
            times.append(INF)
            h.add(w)
        elif kind == "at":
            times.append(t)
            h.add(w)
        else:
            immediate = s.key(w) == phase_key(t, POST)
            if not immediate:
                times.append(t)
                hp.add(w)
            elif t < n:
                times.append(t + 1)
                hm.add(w)
            else:
                times.append(INF)
                h.add(w)
    tau = DividedStoppingTime(tuple(times), frozenset(hm), frozenset(h),
                              frozenset(hp))
    try:
        validate_divided(tree, tau)
    except InvalidDividedTime as exc:
        raise ClassificationInconsistent(str(exc)) from exc
    return tau


def _left_limit(x: LadlagProcess, w: int, t: float) -> float:
    if t == INF:
        return float(x.post[w, x.tree.horizon])
    t = int(t)
    return float(x.at[w, 0]) if t == 0 else float(x.post[w, t - 1])


def divided_value(tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure,
                  g: CostField, ell: float, tau: DividedStoppingTime,
                  s: StoppingTime) -> np.ndarray:
    """Expected payoff of the divided stop, conditioned at S.

    Payoff is the left limit on H-, the value at T on H, the right limit
    on H+; the cost window is [S,T) on H- and H, [S,T] on H+.
    """
    validate_divided(tree, tau, lower=s)
    m, n = tree.n_outcomes, tree.horizon
    prefix = _cost_prefix(tree, mu, g, ell)
    pay = np.empty(m)
    for w in range(m):
        t = tau.times[w]
        if w in tau.hminus:
            pay[w] = _left_limit(x, w, t)
        elif w in tau.h:
            pay[w] = x.value(w, t, AT) if t != INF else x.terminal
        else:
            pay[w] = float(x.post[w, int(t)])
        hi = INF if t == INF else (2 * t + 1 if w in tau.hplus else 2 * t)
        a, b = _atom_bounds(s.key(w), hi, n)
        pay[w] += prefix[w, b] - prefix[w, a]
    part = sigma_field_at(tree, s)
    out = np.empty(m)
    for cell in part.cells:
        idx = list(cell)
        p = tree.probs[idx]
        out[idx] = float(np.dot(p, pay[idx]) / p.sum())
    return out


# ---------------------------------------------------------------------------
# exhaustive divided optimum


def enumerate_divided_stopping_times(tree: FilteredTree, s: StoppingTime,
                                     cap: int = 10 ** 6) -> list[DividedStoppingTime]:
    """All valid quadruples with T >= S (phase order).  Guarded by ``cap``
    on the raw (time assignment x coloring) count."""
    m, n = tree.n_outcomes, tree.horizon
    per_outcome: list[list[float]] = []
    for w in range(m):
        k0 = s.key(w)
        allowed = [t for t in range(n + 1) if 2 * t >= k0]
        allowed.append(INF)
        per_outcome.append(allowed)
    total = 1
    for allowed in per_outcome:
        total *= 3 * len(allowed)
        if total > cap:
            raise TooLarge(f"{total} divided candidates exceed cap {cap}")
    out = []
    for times in itertools.product(*per_outcome):
        for colors in itertools.product((0, 1, 2), repeat=m):
            hm = frozenset(w for w in range(m) if colors[w] == 2)
            h = frozenset(w for w in range(m) if colors[w] == 0)
            hp = frozenset(w for w in range(m) if colors[w] == 1)
            tau = DividedStoppingTime(tuple(times), hm, h, hp)
            try:
                validate_divided(tree, tau, lower=s)
            except InvalidDividedTime:
                continue
            out.append(tau)
    return out


class DividedEnumeration:
    """Cached evaluation tables for one (tree, payoff, S) triple.

    ``brute_force_divided_optimum`` re-runs per level on a whole grid;
    payoffs and window bounds are level-independent, so they live here.
    """

    def __init__(self, tree: FilteredTree, x: LadlagProcess,
                 s: StoppingTime, taus: list[DividedStoppingTime]):
        self.taus = taus
        m, n = tree.n_outcomes, tree.horizon
        q = len(taus)
        self.payoffs = np.empty((q, m))
        self.a_idx = np.empty((q, m), dtype=int)
        self.b_idx = np.empty((q, m), dtype=int)
        s_keys = s.keys()
        for i, tau in enumerate(taus):
            for w in range(m):
                t = tau.times[w]
                if w in tau.hminus:
                    self.payoffs[i, w] = _left_limit(x, w, t)
                elif w in tau.h:
                    self.payoffs[i, w] = x.value(w, t, AT) if t != INF else x.terminal
                else:
                    self.payoffs[i, w] = float(x.post[w, int(t)])
                hi = INF if t == INF else (2 * t + 1 if w in tau.hplus else 2 * t)
                a, b = _atom_bounds(s_keys[w], hi, n)
                self.a_idx[i, w], self.b_idx[i, w] = a, b
        # conditional-averaging matrix of the information partition at S
        part = sigma_field_at(tree, s)
        avg = np.zeros((m, m))
        for cell in part.cells:
            idx = list(cell)
            p = tree.probs[idx]
            avg[np.ix_(idx, idx)] = p[None, :] / p.sum()
        self.avg = avg

    def values(self, tree: FilteredTree, mu: RandomMeasure, g: CostField,
               ell: float) -> np.ndarray:
        prefix = _cost_prefix(tree, mu, g, ell)
        m = tree.n_outcomes
        rows = np.arange(m)[None, :]
        raw = self.payoffs + prefix[rows, self.b_idx] - prefix[rows, self.a_idx]
        return raw @ self.avg.T


def brute_force_divided_optimum(
    tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure, g: CostField,
    ell: float, s: StoppingTime, cap: int = 10 ** 6,
    enum: DividedEnumeration | None = None,
) -> tuple[np.ndarray, DividedStoppingTime]:
    """Exhaustive maximum of divided values over all valid quadruples >= S.

    Ties are broken deterministically: earlier T, then H before H+ before
    H-, then lexicographic.  ``enum`` lets callers reuse one enumeration
    across levels.
    """
    if enum is None:
        taus = enumerate_divided_stopping_times(tree, s, cap)
        enum = DividedEnumeration(tree, x, s, taus)
    vals = enum.values(tree, mu, g, ell)
    best = vals.max(axis=0)
    ok = np.all(vals >= best[None, :] - 1e-11 * (1.0 + np.abs(best[None, :])),
                axis=1)
    idx = np.flatnonzero(ok)
    if len(idx):
        best_tau = min((enum.taus[i] for i in idx),
                       key=DividedStoppingTime.sort_token)
    else:  # numerically no single attaining quadruple; fall back to mean-best
        means = vals @ tree.probs
        best_tau = enum.taus[int(np.argmax(means))]
    return best, best_tau
