"""Maximal signal construction and the representation identity.

The target identity is, at every stopping time S of the band,

    X_S = E[ sum over atoms s >= S of g_s( sup of L over [S,s] ) mu_s | at-S info ].

The maximal band-measurable solution L is built entrywise as the largest
level at which the Snell envelope still touches the payoff; the level is
found by bisection since the envelope is continuous and non-decreasing in
the level.  The essential-infimum characterization over strictly later
stopping times is kept as an independent oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BracketFailure,
    InvalidInput,
    NotStrictlyLater,
    TooLarge,
)
from .probspace import (
    AT,
    INF,
    POST,
    FilteredTree,
    StoppingTime,
    _information_partition,
    enumerate_stopping_times,
    phase_key,
)
from .processes import (
    FINITE,
    MINUS_INF,
    PLUS_INF,
    CostField,
    LadlagProcess,
    RandomMeasure,
    SignalProcess,
    validate_inputs,
)
from .snell import EnvelopeSolver

__all__ = [
    "RepresentationSolution",
    "VerificationResult",
    "MaximalityReport",
    "construct_L",
    "solve_ell_ST",
    "ess_inf_ell",
    "ess_inf_ell_batch",
    "verify_representation",
    "maximality_check",
    "SignalTailTable",
]

_MAX_BRACKET = 2.0 ** 60


@dataclass(frozen=True)
class VerificationResult:
    """Residual of the representation identity at one stopping time."""

    residual: np.ndarray        # X_S - conditional cost integral, per outcome
    integrability: np.ndarray   # conditional sum of |g| mu over the window


class SignalTailTable:
    """Per (outcome, start phase key): the window cost sum for a signal.

    Entry [w, k] is  sum over atoms s with (s,at) >= k  of
    g_s(w, sup of L over [k, (s,at)]) * mu_s(w), with the absolute-value
    companion used for the integrability report.  Infinite signal entries
    propagate as +-inf sums; they never arise for a valid solution at
    atoms with mass.
    """

    def __init__(self, tree: FilteredTree, mu: RandomMeasure, g: CostField,
                 sig: SignalProcess):
        m, n = tree.n_outcomes, tree.horizon
        l_at, l_post = sig.float_arrays()
        self.values = np.zeros((m, 2 * n + 2))
        self.abs_values = np.zeros((m, 2 * n + 2))
        w_mu = mu.weights
        for w in range(m):
            for k in range(2 * n + 2):
                sup = -INF
                total = 0.0
                absr = 0.0
                for s in range((k + 1) // 2, n + 1):
                    if 2 * s - 1 >= k:
                        sup = max(sup, l_post[w, s - 1])
                    if 2 * s >= k:
                        sup = max(sup, l_at[w, s])
                    if w_mu[w, s] > 0.0:
                        if math.isinf(sup):
                            total += sup
                            absr = INF
                        else:
                            val = g.evaluate_entry(w, s, sup) * w_mu[w, s]
                            total += val
                            absr += abs(val)
                self.values[w, k] = total
                self.abs_values[w, k] = absr

    def at_keys(self, keys) -> tuple[np.ndarray, np.ndarray]:
        m = self.values.shape[0]
        v = np.zeros(m)
        a = np.zeros(m)
        for w, k in enumerate(keys):
            if k != INF:
                v[w] = self.values[w, int(k)]
                a[w] = self.abs_values[w, int(k)]
        return v, a


def verify_representation(tree: FilteredTree, x: LadlagProcess,
                          mu: RandomMeasure, g: CostField, sig: SignalProcess,
                          s: StoppingTime,
                          tail: SignalTailTable | None = None) -> VerificationResult:
    """Residual of the representation identity at S, per outcome."""
    if tail is None:
        tail = SignalTailTable(tree, mu, g, sig)
    vals, absvals = tail.at_keys(s.keys())
    part = _information_partition(tree, s.keys())
    m = tree.n_outcomes
    cond = np.empty(m)
    integ = np.empty(m)
    for cell in part.cells:
        idx = list(cell)
        p = tree.probs[idx]
        cond[idx] = float(np.dot(p, vals[idx]) / p.sum())
        integ[idx] = float(np.dot(p, absvals[idx]) / p.sum())
    xs = x.at_stopping_time(s)
    return VerificationResult(residual=xs - cond, integrability=integ)


# ---------------------------------------------------------------------------
# construction of the maximal signal


@dataclass
class RepresentationSolution:
    """Maximal signal plus solve diagnostics.

    ``bisect_halfwidth`` arrays hold the final bracket half-width per
    entry (0 where the entry was decided exactly as +-infinity);
    verification residuals are populated lazily through :meth:`verify_at`.
    """

    tree: FilteredTree
    x: LadlagProcess
    mu: RandomMeasure
    g: CostField
    L: SignalProcess
    halfwidth_at: np.ndarray
    halfwidth_post: np.ndarray
    tol_ell: float
    tol_eq: float
    solver: EnvelopeSolver = field(repr=False, default=None)
    _tail: SignalTailTable | None = field(repr=False, default=None)
    _verified: dict = field(repr=False, default_factory=dict)

    def tail_table(self) -> SignalTailTable:
        if self._tail is None:
            self._tail = SignalTailTable(self.tree, self.mu, self.g, self.L)
        return self._tail

    def verify_at(self, s: StoppingTime) -> VerificationResult:
        key = (s.times, s.phases)
        hit = self._verified.get(key)
        if hit is None:
            hit = verify_representation(self.tree, self.x, self.mu, self.g,
                                        self.L, s, tail=self.tail_table())
            self._verified[key] = hit
        return hit


def _sup_contact_level(contact, tol_ell: float) -> tuple[int, float, float]:
    """Largest level with contact, by doubling expansion plus bisection.

    Returns (status, level, halfwidth); status is MINUS_INF when no
    contact exists down to -2^60.  Raises BracketFailure when contact
    persists at +2^60 (hypotheses violated: the envelope must eventually
    detach when mass remains).
    """
    hi = 1.0
    if contact(hi):
        lo = hi
        while True:
            hi *= 2.0
            if not contact(hi):
                break
            lo = hi
            if hi >= _MAX_BRACKET:
                raise BracketFailure(
                    "envelope still touches payoff at level 2^60")
    else:
        lo = -1.0
        while not contact(lo):
            lo *= 2.0
            if lo <= -_MAX_BRACKET:
                return MINUS_INF, 0.0, 0.0
    while hi - lo > tol_ell:
        mid = 0.5 * (lo + hi)
        if contact(mid):
            lo = mid
        else:
            hi = mid
    return FINITE, lo, 0.5 * (hi - lo)


def construct_L(tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure,
                g: CostField, tol_ell: float = 1e-10,
                tol_eq: float = 1e-11) -> RepresentationSolution:
    """Entrywise maximal level at which the envelope touches the payoff.

    Cells with no measure mass left in the window get +infinity (the
    envelope touches at every level there); entries where the envelope
    stays strictly above the payoff down to the lower bracket are flagged
    minus-infinity.  Requires the terminal input check to pass; the
    semicontinuity surrogates only warn.
    """
    report = validate_inputs(tree, x, mu, g)
    if not report.hard_ok:
        raise InvalidInput(
            "terminal condition fails; payoff must vanish once no mass "
            f"remains: {report.terminal_violations[:4]}")
    solver = EnvelopeSolver(tree, x, mu, g)
    m, n = tree.n_outcomes, tree.horizon
    tail = mu.tail_mass()
    val_at = np.zeros((m, n + 1))
    val_post = np.zeros((m, n + 1))
    st_at = np.zeros((m, n + 1), dtype=np.int8)
    st_post = np.zeros((m, n + 1), dtype=np.int8)
    hw_at = np.zeros((m, n + 1))
    hw_post = np.zeros((m, n + 1))

    for t in range(n + 1):
        for phase, part in ((AT, tree.meyer[t]), (POST, tree.filtration[t])):
            for cell in part.cells:
                w0 = cell[0]
                if phase == AT:
                    future = max(tail[w, t] for w in cell)
                    xval = float(x.at[w0, t])
                else:
                    future = max(tail[w, t + 1] for w in cell)
                    xval = float(x.post[w0, t])
                if future <= 0.0:
                    status, level, hw = PLUS_INF, 0.0, 0.0
                else:
                    eps = tol_eq * (1.0 + abs(xval))

                    def contact(ell, _w0=w0, _t=t, _ph=phase, _x=xval, _e=eps):
                        y_at, y_post = solver.envelope(ell)
                        y = y_at[_w0, _t] if _ph == AT else y_post[_w0, _t]
                        return y - _x <= _e

                    status, level, hw = _sup_contact_level(contact, tol_ell)
                for w in cell:
                    if phase == AT:
                        st_at[w, t], val_at[w, t], hw_at[w, t] = status, level, hw
                    else:
                        st_post[w, t], val_post[w, t], hw_post[w, t] = status, level, hw

    sig = SignalProcess.build(tree, val_at, val_post, st_at, st_post)
    return RepresentationSolution(
        tree=tree, x=x, mu=mu, g=g, L=sig,
        halfwidth_at=hw_at, halfwidth_post=hw_post,
        tol_ell=tol_ell, tol_eq=tol_eq, solver=solver,
    )


# ---------------------------------------------------------------------------
# the ess-inf characterization (independent oracle)


def _vector_g(g: CostField, ells: np.ndarray) -> np.ndarray:
    """g evaluated at one level per task: (K,) -> (K, M, N+1)."""
    if g.family == "linear":
        return (g.params["a"][None, :, :] * ells[:, None, None]
                + g.params["b"][None, :, :])
    if g.family == "cubic_odd":
        return (g.params["a"][None, :, :] * ells[:, None, None] ** 3
                + g.params["c"][None, :, :] * ells[:, None, None])
    xs, ys = g.params["xs"], g.params["ys"]
    k = np.clip(np.searchsorted(xs, ells, side="right") - 1, 0, len(xs) - 2)
    x0 = xs[k][:, None, None]
    y0 = np.moveaxis(ys[:, :, k], 2, 0)
    y1 = np.moveaxis(ys[:, :, k + 1], 2, 0)
    slope = (y1 - y0) / (xs[k + 1] - xs[k])[:, None, None]
    return y0 + slope * (ells[:, None, None] - x0)


def _solve_level_tasks(g: CostField, coeff: np.ndarray, targets: np.ndarray,
                       tol_ell: float) -> np.ndarray:
    """Solve sum(coeff_k * g(l)) = target_k per task; strictly increasing
    maps with full range, so expansion always brackets."""
    k = len(targets)
    if k == 0:
        return np.zeros(0)

    def f(ells):
        return np.einsum("kmt,kmt->k", coeff, _vector_g(g, ells))

    lo = np.full(k, -1.0)
    hi = np.full(k, 1.0)
    for _ in range(80):
        bad = f(lo) > targets
        if not bad.any():
            break
        lo[bad] *= 2.0
    for _ in range(80):
        bad = f(hi) < targets
        if not bad.any():
            break
        hi[bad] *= 2.0
    span = float(np.max(hi - lo))
    steps = max(1, int(math.ceil(math.log2(max(span / tol_ell, 2.0)))))
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        below = f(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _window_bound(key_hi: float, n: int) -> int:
    return n + 1 if key_hi == INF else int(math.ceil(key_hi / 2.0))


def solve_ell_ST(tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure,
                 g: CostField, s: StoppingTime, t_stop: StoppingTime,
                 tol_ell: float = 1e-10) -> np.ndarray:
    """The unique level equating the expected payoff drop from S to T with
    the expected cost accrued over [S, T), per cell of the at-S information;
    +infinity on cells where the window carries no mass.  Requires T > S
    on {S < infinity}."""
    m, n = tree.n_outcomes, tree.horizon
    for w in range(m):
        ks, kt = s.key(w), t_stop.key(w)
        if ks != INF and kt <= ks:
            raise NotStrictlyLater(f"T <= S on outcome {w}")
    part = _information_partition(tree, s.keys())
    xs = x.at_stopping_time(s)
    xt = x.at_stopping_time(t_stop)
    out = np.empty(m)
    coeffs, targets, assign = [], [], []
    for cell in part.cells:
        idx = list(cell)
        p = tree.probs[idx]
        cellp = p.sum()
        coeff = np.zeros((m, n + 1))
        mass = 0.0
        for w, pw in zip(idx, p):
            a = _window_bound(s.key(w), n) if s.key(w) != INF else n + 1
            b = _window_bound(t_stop.key(w), n)
            coeff[w, a:b] = pw / cellp * mu.weights[w, a:b]
            mass += mu.weights[w, a:b].sum()
        if mass <= 0.0:
            out[idx] = INF
            continue
        coeffs.append(coeff)
        targets.append(float(np.dot(p, (xs - xt)[idx]) / cellp))
        assign.append(idx)
    if coeffs:
        roots = _solve_level_tasks(g, np.array(coeffs), np.array(targets),
                                   tol_ell)
        for idx, root in zip(assign, roots):
            out[idx] = root
    return out


def _collect_ell_tasks(tree: FilteredTree, x: LadlagProcess,
                       mu: RandomMeasure, s: StoppingTime,
                       cands: list[StoppingTime]):
    """Per-cell distinct window/payoff restrictions over the candidate
    stopping times; returns (coeffs, targets, assignments)."""
    m, n = tree.n_outcomes, tree.horizon
    part = _information_partition(tree, s.keys())
    xs = x.at_stopping_time(s)
    coeffs, targets, assign = [], [], []
    for cell in part.cells:
        idx = list(cell)
        p = tree.probs[idx]
        cellp = p.sum()
        if s.key(idx[0]) == INF:
            continue
        seen = set()
        for t_stop in cands:
            sig = tuple((t_stop.times[w], t_stop.phases[w]) for w in idx)
            if sig in seen:
                continue
            seen.add(sig)
            coeff = np.zeros((m, n + 1))
            mass = 0.0
            target = 0.0
            for w, pw in zip(idx, p):
                a = _window_bound(s.key(w), n)
                b = _window_bound(t_stop.key(w), n)
                coeff[w, a:b] = pw / cellp * mu.weights[w, a:b]
                mass += mu.weights[w, a:b].sum()
                target += pw * (xs[w] - x.value(w, t_stop.times[w],
                                                t_stop.phases[w]))
            if mass <= 0.0:
                continue  # level is +inf, never the infimum unless all are
            coeffs.append(coeff)
            targets.append(target / cellp)
            assign.append(idx)
    return coeffs, targets, assign


def _strictly_later(s: StoppingTime, cands: list[StoppingTime]):
    out = []
    for t_stop in cands:
        ok = True
        for w in range(len(s.times)):
            ks = s.key(w)
            kt = t_stop.key(w)
            if (kt <= ks) if ks != INF else (kt != INF):
                ok = False
                break
        if ok:
            out.append(t_stop)
    return out


def ess_inf_ell_batch(tree: FilteredTree, x: LadlagProcess,
                      mu: RandomMeasure, g: CostField,
                      starts: list[StoppingTime], tol_ell: float = 1e-10,
                      cap: int = 10 ** 6,
                      cands: list[StoppingTime] | None = None) -> list[np.ndarray]:
    """ess_inf_ell for many stopping times with one shared vector solve."""
    if cands is None:
        cands = enumerate_stopping_times(tree, phases=(AT, POST), cap=cap)
    all_coeffs, all_targets = [], []
    spans = []
    for s in starts:
        later = _strictly_later(s, cands)
        coeffs, targets, assign = _collect_ell_tasks(tree, x, mu, s, later)
        spans.append((len(all_coeffs), len(coeffs), assign))
        all_coeffs.extend(coeffs)
        all_targets.extend(targets)
    roots = (np.zeros(0) if not all_coeffs else
             _solve_level_tasks(g, np.array(all_coeffs),
                                np.array(all_targets), tol_ell))
    out = []
    for (lo, count, assign), s in zip(spans, starts):
        res = np.full(tree.n_outcomes, INF)
        for j in range(count):
            root = roots[lo + j]
            for w in assign[j]:
                if root < res[w]:
                    res[w] = root
        out.append(res)
    return out


def ess_inf_ell(tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure,
                g: CostField, s: StoppingTime, tol_ell: float = 1e-10,
                cap: int = 10 ** 6) -> np.ndarray:
    """Cell-wise infimum of the two-time levels over every enumerated
    strictly later stopping time.  Distinct window/payoff restrictions are
    deduplicated per cell before solving."""
    cands = enumerate_stopping_times(tree, lower=s, strict=True,
                                     phases=(AT, POST), cap=cap)
    coeffs, targets, assign = _collect_ell_tasks(tree, x, mu, s, cands)
    out = np.full(tree.n_outcomes, INF)
    if coeffs:
        roots = _solve_level_tasks(g, np.array(coeffs), np.array(targets),
                                   tol_ell)
        for idx, root in zip(assign, roots):
            for w in idx:
                if root < out[w]:
                    out[w] = root
    return out


# ---------------------------------------------------------------------------
# maximality


@dataclass
class MaximalityReport:
    candidate_is_solution: bool
    max_residual: float
    le_ok: bool
    violations: list  # (outcome, time, phase, candidate - L)


def maximality_check(tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure,
                     g: CostField, sol: SignalProcess, candidate: SignalProcess,
                     stopping_times: list[StoppingTime] | None = None,
                     tol_res: float = 1e-8, tol_le: float = 1e-7,
                     cap: int = 10 ** 6) -> MaximalityReport:
    """If the candidate verifies at every supplied (or enumerated) stopping
    time, assert it never exceeds the maximal solution at finite entries."""
    if stopping_times is None:
        stopping_times = enumerate_stopping_times(tree, phases=(AT, POST),
                                                  cap=cap)
    tail = SignalTailTable(tree, mu, g, candidate)
    worst = 0.0
    for s in stopping_times:
        res = verify_representation(tree, x, mu, g, candidate, s, tail=tail)
        scale = 1.0 + np.abs(x.at_stopping_time(s))
        worst = max(worst, float(np.max(np.abs(res.residual) / scale)))
    if not math.isfinite(worst) or worst > tol_res:
        return MaximalityReport(False, worst, False, [])
    violations = []
    for t in range(tree.horizon + 1):
        for phase in (AT, POST):
            for w in range(tree.n_outcomes):
                c = candidate.entry(w, t, phase)
                l = sol.entry(w, t, phase)
                if c > l + tol_le:
                    gap = c - l if math.isfinite(c - l) else INF
                    violations.append((w, t, phase, gap))
    return MaximalityReport(True, worst, not violations, violations)
