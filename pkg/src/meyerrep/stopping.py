"""Optimal divided stopping driven by the representation signal.

The running maximum of the maximal signal is a universal trigger: for any
level l, stop the first time the running maximum reaches l.  If the
signal value at the trigger time itself clears the level the stop happens
at that instant (H); when only the interval value cleared it, the stop
happens just after (H+).  The certificate compares the achieved value
against the exhaustive divided optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSignal
from .probspace import AT, INF, POST, FilteredTree, StoppingTime
from .processes import CostField, LadlagProcess, RandomMeasure, SignalProcess
from .snell import (
    DividedEnumeration,
    DividedStoppingTime,
    brute_force_divided_optimum,
    divided_value,
    enumerate_divided_stopping_times,
    validate_divided,
)

__all__ = [
    "SignalStoppingResult",
    "signal_stopping_time",
    "certify_universal_signal",
    "default_level_grid",
]


def signal_stopping_time(tree: FilteredTree, sig: SignalProcess,
                         ell: float) -> DividedStoppingTime:
    """First time the running signal maximum reaches the level.

    Trigger at a grid instant lands in H; trigger only through an
    interval value lands in H+ at that grid time (stop just after).
    Outcomes that never trigger before the end,  where the terminal
    value +infinity takes over, get T = infinity in H.
    """
    if sig.tree is not tree and sig.tree.n_outcomes != tree.n_outcomes:
        raise InvalidSignal("signal does not match the tree")
    m, n = tree.n_outcomes, tree.horizon
    times: list[float] = []
    hm, h, hp = set(), set(), set()
    for w in range(m):
        hit: tuple[float, str] | None = None
        for t in range(n + 1):
            if sig.entry(w, t, AT) >= ell:
                hit = (t, AT)
                break
            if t < n and sig.entry(w, t, POST) >= ell:
                hit = (t, POST)
                break
        if hit is None:
            times.append(INF)
            h.add(w)
        elif hit[1] == AT:
            times.append(hit[0])
            h.add(w)
        else:
            times.append(hit[0])
            hp.add(w)
    tau = DividedStoppingTime(tuple(times), frozenset(hm), frozenset(h),
                              frozenset(hp))
    try:
        validate_divided(tree, tau)
    except Exception as exc:  # pragma: no cover - signals a broken input
        raise InvalidSignal(str(exc)) from exc
    return tau


def default_level_grid(sig: SignalProcess, points: int = 21) -> np.ndarray:
    """Grid spanning [min finite entry - 1, max finite entry + 1]."""
    finite = []
    a, p = sig.float_arrays()
    for arr in (a, p):
        vals = arr[np.isfinite(arr)]
        if vals.size:
            finite.extend([float(vals.min()), float(vals.max())])
    lo = min(finite) - 1.0 if finite else -1.0
    hi = max(finite) + 1.0 if finite else 1.0
    return np.linspace(lo, hi, points)


@dataclass
class SignalStoppingResult:
    """Achieved vs exhaustive-optimal value for one trigger level."""

    level: float
    tau: DividedStoppingTime
    achieved: np.ndarray
    oracle: np.ndarray | None
    gap: float


def certify_universal_signal(
    tree: FilteredTree, x: LadlagProcess, mu: RandomMeasure, g: CostField,
    sig: SignalProcess, levels=None, cap: int = 10 ** 6,
) -> list[SignalStoppingResult]:
    """Check the trigger rule against the brute-force divided optimum on a
    grid of levels, from time zero."""
    s0 = StoppingTime.constant(tree, 0, AT)
    if levels is None:
        levels = default_level_grid(sig)
    taus = enumerate_divided_stopping_times(tree, s0, cap)
    enum = DividedEnumeration(tree, x, s0, taus)
    results = []
    for ell in np.asarray(levels, dtype=float):
        tau = signal_stopping_time(tree, sig, float(ell))
        achieved = divided_value(tree, x, mu, g, float(ell), tau, s0)
        oracle, _ = brute_force_divided_optimum(tree, x, mu, g, float(ell),
                                                s0, cap=cap, enum=enum)
        gap = float(np.max(np.abs(achieved - oracle)))
        results.append(SignalStoppingResult(float(ell), tau, achieved,
                                            oracle, gap))
    return results
