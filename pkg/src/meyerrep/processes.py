"""Ladlag step processes, random measures, cost fields and validators.

A ladlag process stores per (outcome, grid time) an ``at`` value and a
``post`` value (the constant value on the open interval to the next grid
time); left limits are the previous post value, right limits the current
one.  The random measure puts nonnegative atom weights on grid times.
The cost field is a strictly increasing bijection of the real line per
(outcome, time), restricted to three shipped parametric families so that
adaptedness and bisection brackets stay checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadWindow,
    EmptyWindow,
    InvalidSignal,
    ShapeMismatch,
)
from .probspace import (
    AT,
    INF,
    POST,
    FilteredTree,
    Partition,
    StoppingTime,
    conditional_expectation,
    phase_key,
)

__all__ = [
    "LadlagProcess",
    "SignalProcess",
    "RandomMeasure",
    "CostField",
    "ValidationReport",
    "lambda_projection",
    "running_sup",
    "running_sup_at_atoms",
    "integrate_cost",
    "validate_inputs",
]

_MEAS_TOL = 1e-9


def _check_measurable(tree: FilteredTree, at: np.ndarray, post: np.ndarray,
                      what: str) -> None:
    for t in range(tree.horizon + 1):
        if not tree.is_measurable(at[:, t], tree.meyer[t], _MEAS_TOL):
            raise ShapeMismatch(
                f"{what}: at-values at t={t} not constant on G_{t}-cells")
        if not tree.is_measurable(post[:, t], tree.filtration[t], _MEAS_TOL):
            raise ShapeMismatch(
                f"{what}: post-values at t={t} not constant on F_{t}-cells")


@dataclass(frozen=True)
class LadlagProcess:
    """Step process with at/post values per (outcome, grid time).

    ``terminal`` is the value at time infinity (0 for payoffs and
    envelopes).  Left limit at t is the post value at t-1 (the at value
    itself at t=0); right limit at t is the post value at t.
    """

    tree: FilteredTree
    at: np.ndarray
    post: np.ndarray
    terminal: float = 0.0

    @staticmethod
    def build(tree: FilteredTree, at, post, terminal: float = 0.0) -> "LadlagProcess":
        a = tree.check_matrix(at)
        p = tree.check_matrix(post)
        _check_measurable(tree, a, p, "LadlagProcess")
        a.setflags(write=False)
        p.setflags(write=False)
        return LadlagProcess(tree, a, p, float(terminal))

    @staticmethod
    def zero(tree: FilteredTree) -> "LadlagProcess":
        shape = (tree.n_outcomes, tree.horizon + 1)
        return LadlagProcess.build(tree, np.zeros(shape), np.zeros(shape))

    def value(self, outcome: int, time: float, phase: str = AT) -> float:
        if time == INF:
            return self.terminal
        t = int(time)
        return float(self.at[outcome, t] if phase == AT else self.post[outcome, t])

    def left_limit(self, outcome: int, t: int) -> float:
        return float(self.at[outcome, 0] if t == 0 else self.post[outcome, t - 1])

    def right_limit(self, outcome: int, t: int) -> float:
        return float(self.post[outcome, t])

    def at_stopping_time(self, s: StoppingTime) -> np.ndarray:
        return np.array([self.value(w, s.times[w], s.phases[w])
                         for w in range(self.tree.n_outcomes)])


FINITE = 0
MINUS_INF = -1
PLUS_INF = 1


@dataclass(frozen=True)
class SignalProcess:
    """Ladlag process extended with explicit minus/plus-infinity entries.

    The status arrays hold -1 / 0 / +1 for minus-infinity / finite /
    plus-infinity; the value arrays are only meaningful where the status
    is finite.  The value at time infinity is plus infinity by convention.
    Statuses are explicit so that no floating sentinel ever enters
    arithmetic; ``entry`` exposes the extended-real value as a float
    (math.inf / -math.inf) for comparisons only.
    """

    tree: FilteredTree
    at: np.ndarray
    post: np.ndarray
    status_at: np.ndarray
    status_post: np.ndarray

    @staticmethod
    def build(tree, at, post, status_at=None, status_post=None) -> "SignalProcess":
        a = tree.check_matrix(at)
        p = tree.check_matrix(post)
        sa = (np.zeros_like(a, dtype=np.int8) if status_at is None
              else np.asarray(status_at, dtype=np.int8).copy())
        sp = (np.zeros_like(p, dtype=np.int8) if status_post is None
              else np.asarray(status_post, dtype=np.int8).copy())
        if sa.shape != a.shape or sp.shape != p.shape:
            raise ShapeMismatch("status arrays must match value arrays")
        # infinite entries carry no payload value
        a = np.where(sa == FINITE, a, 0.0)
        p = np.where(sp == FINITE, p, 0.0)
        sig = SignalProcess(tree, a, p, sa, sp)
        sig._check()
        return sig

    @staticmethod
    def from_float_arrays(tree, at, post) -> "SignalProcess":
        """Build from arrays where +-inf encode the infinite statuses."""
        a = tree.check_matrix(at)
        p = tree.check_matrix(post)
        sa = np.zeros_like(a, dtype=np.int8)
        sp = np.zeros_like(p, dtype=np.int8)
        sa[np.isposinf(a)] = PLUS_INF
        sa[np.isneginf(a)] = MINUS_INF
        sp[np.isposinf(p)] = PLUS_INF
        sp[np.isneginf(p)] = MINUS_INF
        return SignalProcess.build(tree, np.where(sa == FINITE, a, 0.0),
                                   np.where(sp == FINITE, p, 0.0), sa, sp)

    def _check(self) -> None:
        tree = self.tree
        for t in range(tree.horizon + 1):
            for part, vals, stats, what in (
                (tree.meyer[t], self.at, self.status_at, "at"),
                (tree.filtration[t], self.post, self.status_post, "post"),
            ):
                for cell in part.cells:
                    idx = list(cell)
                    if np.ptp(stats[idx, t]) != 0:
                        raise InvalidSignal(
                            f"{what}-status at t={t} not cell-constant")
                    if stats[idx[0], t] == FINITE and np.ptp(vals[idx, t]) > _MEAS_TOL:
                        raise InvalidSignal(
                            f"{what}-values at t={t} not cell-constant")

    def entry(self, outcome: int, time: float, phase: str = AT) -> float:
        """Extended-real entry as a float (for comparisons, never arithmetic)."""
        if time == INF:
            return INF
        t = int(time)
        st = self.status_at[outcome, t] if phase == AT else self.status_post[outcome, t]
        if st == MINUS_INF:
            return -INF
        if st == PLUS_INF:
            return INF
        return float(self.at[outcome, t] if phase == AT else self.post[outcome, t])

    def float_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.where(self.status_at == FINITE, self.at,
                     np.where(self.status_at == PLUS_INF, INF, -INF))
        p = np.where(self.status_post == FINITE, self.post,
                     np.where(self.status_post == PLUS_INF, INF, -INF))
        return a, p


@dataclass(frozen=True)
class RandomMeasure:
    """Nonnegative atom weights per (outcome, grid time); adapted, no mass
    after the horizon and none at infinity."""

    tree: FilteredTree
    weights: np.ndarray

    @staticmethod
    def build(tree: FilteredTree, weights) -> "RandomMeasure":
        w = tree.check_matrix(weights)
        if np.any(w < 0):
            raise ShapeMismatch("measure weights must be nonnegative")
        for t in range(tree.horizon + 1):
            if not tree.is_measurable(w[:, t], tree.filtration[t], _MEAS_TOL):
                raise ShapeMismatch(
                    f"measure weight at t={t} not constant on F_{t}-cells")
        w.setflags(write=False)
        return RandomMeasure(tree, w)

    def mass_from(self, outcome: int, time: int, include_current: bool) -> float:
        """Mass of [t, inf) when ``include_current`` else (t, inf)."""
        start = time if include_current else time + 1
        return float(self.weights[outcome, start:].sum())

    def tail_mass(self) -> np.ndarray:
        """(M, N+2) array: column t holds the mass of atoms s >= t."""
        m, n1 = self.weights.shape
        out = np.zeros((m, n1 + 1))
        out[:, :n1] = self.weights[:, ::-1].cumsum(axis=1)[:, ::-1]
        return out


# ---------------------------------------------------------------------------
# cost fields

_FAMILIES = ("linear", "piecewise_linear", "cubic_odd")


@dataclass(frozen=True)
class CostField:
    """Per (outcome, time) strictly increasing bijection of the real line.

    Shipped families: linear a*l + b with a>0; piecewise-linear with a
    shared strictly increasing knot grid and per-entry strictly increasing
    knot values (edge slopes extrapolate); odd cubic a*l^3 + c*l with a>0,
    c>=0.  Parameters must be constant on F_t-cells (adaptedness).

    Extension point: any new family needs evaluate plus lower/upper
    bracket growth, i.e. surjectivity onto the real line.
    """

    tree: FilteredTree
    family: str
    params: dict

    @staticmethod
    def linear(tree: FilteredTree, a=1.0, b=0.0) -> "CostField":
        aa = CostField._expand(tree, a)
        bb = CostField._expand(tree, b)
        if np.any(aa <= 0):
            raise ShapeMismatch("linear cost needs slope a > 0")
        cf = CostField(tree, "linear", {"a": aa, "b": bb})
        cf._check_adapted()
        return cf

    @staticmethod
    def cubic_odd(tree: FilteredTree, a=1.0, c=0.0) -> "CostField":
        aa = CostField._expand(tree, a)
        cc = CostField._expand(tree, c)
        if np.any(aa <= 0) or np.any(cc < 0):
            raise ShapeMismatch("cubic cost needs a > 0 and c >= 0")
        cf = CostField(tree, "cubic_odd", {"a": aa, "c": cc})
        cf._check_adapted()
        return cf

    @staticmethod
    def piecewise_linear(tree: FilteredTree, knots_x, knots_y) -> "CostField":
        xs = np.asarray(knots_x, dtype=float)
        if xs.ndim != 1 or len(xs) < 2 or np.any(np.diff(xs) <= 0):
            raise ShapeMismatch("knot grid must be strictly increasing")
        ys = np.asarray(knots_y, dtype=float)
        m, n1 = tree.n_outcomes, tree.horizon + 1
        if ys.shape == xs.shape:
            ys = np.broadcast_to(ys, (m, n1, len(xs))).copy()
        elif ys.shape == (n1, len(xs)):
            ys = np.broadcast_to(ys[None, :, :], (m, n1, len(xs))).copy()
        elif ys.shape != (m, n1, len(xs)):
            raise ShapeMismatch(f"knot values have shape {ys.shape}")
        if np.any(np.diff(ys, axis=-1) <= 0):
            raise ShapeMismatch("knot values must be strictly increasing")
        cf = CostField(tree, "piecewise_linear", {"xs": xs, "ys": ys})
        cf._check_adapted()
        return cf

    @staticmethod
    def _expand(tree: FilteredTree, value) -> np.ndarray:
        m, n1 = tree.n_outcomes, tree.horizon + 1
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return np.full((m, n1), float(arr))
        if arr.shape == (n1,):
            return np.broadcast_to(arr, (m, n1)).copy()
        if arr.shape == (m, n1):
            return arr.copy()
        raise ShapeMismatch(f"cost parameter has shape {arr.shape}")

    def _check_adapted(self) -> None:
        tree = self.tree
        for t in range(tree.horizon + 1):
            part = tree.filtration[t]
            for name, arr in self.params.items():
                if name == "xs":
                    continue
                col = arr[:, t] if arr.ndim == 2 else arr[:, t, :]
                for cell in part.cells:
                    idx = list(cell)
                    if np.ptp(col[idx], axis=0).max() > _MEAS_TOL:
                        raise ShapeMismatch(
                            f"cost parameter {name!r} at t={t} not adapted")

    def evaluate(self, levels) -> np.ndarray:
        """g_t(omega, l) for scalar ``levels`` or an (M, N+1) level array."""
        m, n1 = self.tree.n_outcomes, self.tree.horizon + 1
        lv = np.asarray(levels, dtype=float)
        if lv.ndim == 0:
            lv = np.full((m, n1), float(lv))
        elif lv.shape != (m, n1):
            raise ShapeMismatch(f"levels have shape {lv.shape}")
        if self.family == "linear":
            return self.params["a"] * lv + self.params["b"]
        if self.family == "cubic_odd":
            return self.params["a"] * lv ** 3 + self.params["c"] * lv
        xs, ys = self.params["xs"], self.params["ys"]
        k = np.clip(np.searchsorted(xs, lv, side="right") - 1, 0, len(xs) - 2)
        x0 = xs[k]
        i, j = np.meshgrid(np.arange(m), np.arange(n1), indexing="ij")
        y0 = ys[i, j, k]
        y1 = ys[i, j, k + 1]
        slope = (y1 - y0) / (xs[k + 1] - x0)
        return y0 + slope * (lv - x0)

    def evaluate_entry(self, outcome: int, t: int, level: float) -> float:
        if self.family == "linear":
            return float(self.params["a"][outcome, t] * level
                         + self.params["b"][outcome, t])
        if self.family == "cubic_odd":
            return float(self.params["a"][outcome, t] * level ** 3
                         + self.params["c"][outcome, t] * level)
        xs, ys = self.params["xs"], self.params["ys"][outcome, t]
        k = int(np.clip(np.searchsorted(xs, level, side="right") - 1,
                        0, len(xs) - 2))
        slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
        return float(ys[k] + slope * (level - xs[k]))

    def inverse_entry(self, outcome: int, t: int, y: float,
                      tol: float = 1e-12) -> float:
        """Solve g_t(outcome, l) = y by bracket expansion plus bisection."""
        lo, hi = -1.0, 1.0
        for _ in range(80):
            if self.evaluate_entry(outcome, t, lo) <= y:
                break
            lo *= 2.0
        for _ in range(80):
            if self.evaluate_entry(outcome, t, hi) >= y:
                break
            hi *= 2.0
        for _ in range(200):
            if hi - lo <= tol * (1.0 + abs(lo) + abs(hi)):
                break
            mid = 0.5 * (lo + hi)
            if self.evaluate_entry(outcome, t, mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# operations


def lambda_projection(tree: FilteredTree, raw_at, raw_post,
                      terminal: float = 0.0) -> LadlagProcess:
    """Project raw values onto the Meyer band: at-values onto G_t,
    post-values onto F_t (conditional expectations per time)."""
    a = tree.check_matrix(raw_at)
    p = tree.check_matrix(raw_post)
    out_a = np.empty_like(a)
    out_p = np.empty_like(p)
    for t in range(tree.horizon + 1):
        out_a[:, t] = conditional_expectation(tree, a[:, t], tree.meyer[t])
        out_p[:, t] = conditional_expectation(tree, p[:, t], tree.filtration[t])
    return LadlagProcess.build(tree, out_a, out_p, terminal)


def running_sup(sig: SignalProcess, start: StoppingTime, time: float,
                phase: str, outcome: int) -> float:
    """Supremum of signal entries over the phase window [start, (time,phase)].

    At-values count when start <= (s,at) <= end; interval values when
    start <= (s,post) <= end, so a window starting at a post phase skips
    the at-value of its own grid time.  Returns an extended real; minus
    infinity is absorbing-low.
    """
    lo = start.key(outcome)
    hi = phase_key(time, phase)
    if hi < lo:
        raise EmptyWindow(f"window ends before it starts on outcome {outcome}")
    if lo == INF:
        return INF
    best = -INF
    n = sig.tree.horizon
    for s in range(int(lo // 2), n + 1):
        if lo <= 2 * s <= hi:
            best = max(best, sig.entry(outcome, s, AT))
        if lo <= 2 * s + 1 <= hi:
            best = max(best, sig.entry(outcome, s, POST))
        if 2 * s + 1 > hi:
            break
    if hi == INF:
        best = INF
    return best


def running_sup_at_atoms(sig: SignalProcess, start: StoppingTime) -> np.ndarray:
    """(M, N+1) matrix of sup over [start, (s,at)] per atom s; entries
    before the window start hold NaN."""
    tree = sig.tree
    m, n = tree.n_outcomes, tree.horizon
    a, p = sig.float_arrays()
    out = np.full((m, n + 1), np.nan)
    for w in range(m):
        lo = start.key(w)
        if lo == INF:
            continue
        best = -INF
        for s in range(n + 1):
            if 2 * s < lo:
                continue
            if lo <= 2 * s - 1:
                best = max(best, p[w, s - 1])
            best = max(best, a[w, s])
            out[w, s] = best
    return out


def integrate_cost(tree: FilteredTree, mu: RandomMeasure, g: CostField,
                   levels, start: StoppingTime, end_time,
                   include_end) -> np.ndarray:
    """Sum of g_s(level_s) * mu_s over grid atoms s in the window.

    The window runs from ``start`` to the at-phase time ``end_time``
    (per outcome, inf allowed), whose atom is included exactly when
    ``include_end`` says so; this realizes the divided-stopping
    convention of integrating over [S,T) on the left/at parts and [S,T]
    on the right part.  Levels may be a scalar or an (M, N+1) array.
    """
    m, n = tree.n_outcomes, tree.horizon
    lv = np.asarray(levels, dtype=float)
    if lv.ndim == 0:
        lv = np.full((m, n + 1), float(lv))
    gm = g.evaluate(lv) * mu.weights
    ends = np.asarray(end_time, dtype=float)
    if ends.ndim == 0:
        ends = np.full(m, float(ends))
    incl = np.asarray(include_end)
    if incl.ndim == 0:
        incl = np.full(m, bool(incl))
    out = np.zeros(m)
    for w in range(m):
        e = ends[w]
        if e != INF and (e < 0 or e != int(e) or e > n):
            raise BadWindow(f"bad window end {e!r} on outcome {w}")
        lo = start.key(w)
        hi = INF if e == INF else (2 * e if incl[w] else 2 * e - 1)
        total = 0.0
        for s in range(n + 1):
            if lo <= 2 * s <= hi:
                total += gm[w, s]
        out[w] = total
    return out


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    """Outcome of the input checks.

    ``terminal`` is a hard requirement of the representation theorem; the
    two semicontinuity surrogates are pointwise sufficient conditions and
    count as warnings only.  ``interval`` is an extra advisory: the
    identity at stopping times landing strictly inside an open interval
    needs the interval value to dominate the one-step bridge even when
    the next atom carries mass (stopping just before an atom skips it);
    when this fails, solutions are only guaranteed at grid instants.
    """

    terminal_ok: bool
    terminal_violations: list
    lusc_ok: bool
    lusc_violations: list
    rusc_ok: bool
    rusc_violations: list
    interval_ok: bool = True
    interval_violations: list = None

    @property
    def hard_ok(self) -> bool:
        return self.terminal_ok

    @property
    def all_ok(self) -> bool:
        return self.terminal_ok and self.lusc_ok and self.rusc_ok

    def summary(self) -> str:
        lines = [
            f"terminal condition: {'pass' if self.terminal_ok else 'FAIL'}",
            f"left-usc surrogate: {'pass' if self.lusc_ok else 'warn'}",
            f"mu-right-usc surrogate: {'pass' if self.rusc_ok else 'warn'}",
            "interval-bridge (advisory): "
            + ("pass" if self.interval_ok else "warn"),
        ]
        for name, viol in (("terminal", self.terminal_violations),
                           ("left-usc", self.lusc_violations),
                           ("mu-right-usc", self.rusc_violations),
                           ("interval-bridge", self.interval_violations or [])):
            if viol:
                lines.append(f"  {name} violations (outcome, time): "
                             + ", ".join(str(v[:2]) for v in viol[:12]))
        return "\n".join(lines)


def validate_inputs(tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure,
                    g: CostField, tol: float = 1e-9) -> ValidationReport:
    """Check the representation hypotheses in finite-model surrogate form.

    (a) terminal: the payoff vanishes wherever no measure mass remains;
    (b) left-usc surrogate: the one-step predictable projection dominates
        left limits, CE(X_t, F_{t-1}) >= X_{t-};
    (c) mu-right-usc surrogate: X_t >= CE(X_{t+}, G_t) wherever the atom
        at t has no mass, and X_{t+} >= CE(X_{t+1}, F_t) wherever the atom
        at t+1 has no mass.
    """
    m, n = tree.n_outcomes, tree.horizon
    term_viol, lusc_viol, rusc_viol = [], [], []
    tail = mu.tail_mass()

    for w in range(m):
        for t in range(n + 1):
            if tail[w, t] <= 0 and abs(x.at[w, t]) > tol:
                term_viol.append((w, t, float(x.at[w, t])))
            if tail[w, t + 1] <= 0 and abs(x.post[w, t]) > tol:
                term_viol.append((w, t, float(x.post[w, t]), POST))

    for t in range(1, n + 1):
        proj = conditional_expectation(tree, x.at[:, t], tree.filtration[t - 1])
        for w in range(m):
            if proj[w] < x.post[w, t - 1] - tol:
                lusc_viol.append((w, t, float(x.post[w, t - 1] - proj[w])))

    interval_viol = []
    for t in range(n + 1):
        proj = conditional_expectation(tree, x.post[:, t], tree.meyer[t])
        for w in range(m):
            if mu.weights[w, t] <= 0 and x.at[w, t] < proj[w] - tol:
                rusc_viol.append((w, t, float(proj[w] - x.at[w, t])))
    for t in range(n):
        proj = conditional_expectation(tree, x.at[:, t + 1], tree.filtration[t])
        for w in range(m):
            if x.post[w, t] < proj[w] - tol:
                interval_viol.append((w, t, float(proj[w] - x.post[w, t])))
                if mu.weights[w, t + 1] <= 0:
                    rusc_viol.append((w, t, float(proj[w] - x.post[w, t]), POST))

    return ValidationReport(
        terminal_ok=not term_viol, terminal_violations=term_viol,
        lusc_ok=not lusc_viol, lusc_violations=lusc_viol,
        rusc_ok=not rusc_viol, rusc_violations=rusc_viol,
        interval_ok=not interval_viol, interval_violations=interval_viol,
    )
