"""Command line surface: validate | solve | oracle | levy.

Exit codes: 0 success (possibly with warnings), 2 validation failure,
3 parse error, 4 resource guard tripped.  All CSV output uses a stable
column order and locale-independent numbers with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace

import numpy as np

from .errors import MeyerRepError, ParseError, TooLarge
from .fixtures import random_fixture
from .levy import (
    ConstantLevelPolicy,
    MCConfig,
    OptConfig,
    SensorState,
    SignalPolicy,
    TriggerBatch,
    compare_policies,
    control_path,
    signal_L_lambda,
    simulate_path,
)
from .probspace import AT, INF, POST, StoppingTime, enumerate_stopping_times
from .processes import validate_inputs
from .representation import construct_L, ess_inf_ell_batch
from .scenario import parse_levy_scenario, parse_scenario
from .snell import (
    DividedEnumeration,
    brute_force_divided_optimum,
    classify_contact,
    divided_value,
    enumerate_divided_stopping_times,
    envelope_oracle,
    snell_envelope,
)
from .stopping import certify_universal_signal, default_level_grid

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARSE = 3
EXIT_GUARD = 4


def _fmt(x) -> str:
    if x == INF:
        return "inf"
    if x == -INF:
        return "-inf"
    return f"{float(x):.17g}"


def _load(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _sample_stopping_times(tree, cap: int, seed: int, extra: int = 32):
    """All stopping times when the tree is small; otherwise the
    deterministic ones plus a random measurable sample."""
    try:
        return enumerate_stopping_times(tree, phases=(AT, POST), cap=cap), True
    except TooLarge:
        pass
    out = []
    for t in range(tree.horizon + 1):
        for phase in (AT, POST):
            out.append(StoppingTime.constant(tree, t, phase))
    out.append(StoppingTime.constant(tree, INF))
    rng = np.random.default_rng(seed)
    n = tree.n_outcomes
    tries = 0
    while len(out) < 2 * (tree.horizon + 1) + 1 + extra and tries < 50 * extra:
        tries += 1
        times, phases = [], []
        for _ in range(n):
            t = int(rng.integers(0, tree.horizon + 2))
            if t > tree.horizon:
                times.append(INF)
                phases.append(AT)
            else:
                times.append(t)
                phases.append(AT if rng.random() < 0.5 else POST)
        try:
            out.append(StoppingTime.build(tree, times, phases))
        except MeyerRepError:
            continue
    return out, False


def cmd_validate(args) -> int:
    try:
        sc = _load(args.scenario)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except MeyerRepError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = validate_inputs(sc.tree, sc.x, sc.mu, sc.g)
    print(report.summary())
    return EXIT_OK if report.hard_ok else EXIT_VALIDATION


def cmd_solve(args) -> int:
    try:
        sc = _load(args.scenario)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except MeyerRepError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = validate_inputs(sc.tree, sc.x, sc.mu, sc.g)
    if not report.hard_ok:
        print(report.summary(), file=sys.stderr)
        return EXIT_VALIDATION
    if not report.all_ok:
        print("warning: semicontinuity surrogates failed; solving anyway",
              file=sys.stderr)
    tol_ell = args.tol_ell or sc.options.get("tol_ell", 1e-10)
    tol_eq = args.tol_eq or sc.options.get("tol_eq", 1e-11)
    cap = args.cap or int(sc.options.get("cap", 10 ** 6))
    sol = construct_L(sc.tree, sc.x, sc.mu, sc.g, tol_ell=tol_ell,
                      tol_eq=tol_eq)
    sts, complete = _sample_stopping_times(sc.tree, cap,
                                           int(sc.options.get("seed", 0)))
    if not complete:
        print(f"note: enumeration over cap; verifying at {len(sts)} "
              "deterministic + sampled stopping times", file=sys.stderr)
    # interval-phase identity is only guaranteed when the interval bridge
    # holds; otherwise the exit code gates on grid-instant stopping times
    gate_all = report.interval_ok
    if not gate_all:
        print("warning: interval-bridge check failed; the identity is "
              "gated at grid-instant stopping times only", file=sys.stderr)
    worst = 0.0
    worst_gate = 0.0
    rows = []
    for i, s in enumerate(sts):
        res = sol.verify_at(s)
        scale = 1.0 + np.abs(sc.x.at_stopping_time(s))
        scaled = float(np.max(np.abs(res.residual) / scale))
        worst = max(worst, scaled)
        if gate_all or all(ph == AT for ph in s.phases):
            worst_gate = max(worst_gate, scaled)
        rows.append((i, ";".join(_fmt(t) for t in s.times),
                     ";".join(s.phases), _fmt(float(np.max(np.abs(res.residual)))),
                     _fmt(scaled)))
    if args.out:
        la, lp = sol.L.float_arrays()
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["outcome", "time", "phase", "value_or_status"])
            for w in range(sc.tree.n_outcomes):
                for t in range(sc.tree.horizon + 1):
                    for phase, arr in ((AT, la), (POST, lp)):
                        v = arr[w, t]
                        cellv = ("minus_inf" if v == -INF
                                 else "plus_inf" if v == INF else _fmt(v))
                        wr.writerow([w, t, phase, cellv])
        resid_path = args.out + ".residuals.csv"
        with open(resid_path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "times", "phases", "max_abs_residual",
                         "scaled_residual"])
            wr.writerows(rows)
    print(f"max scaled residual over {len(sts)} stopping times: {worst:.3e}"
          + ("" if gate_all else f" (gated: {worst_gate:.3e})"))
    return EXIT_OK if worst_gate <= 1e-8 else EXIT_VALIDATION


def _oracle_gaps(sc, cap: int, seed: int) -> dict:
    tree, x, mu, g = sc.tree, sc.x, sc.mu, sc.g
    sol = construct_L(tree, x, mu, g)
    gaps = {}
    sts = enumerate_stopping_times(tree, phases=(AT, POST), cap=cap)
    finite = [s for s in sts if s.all_finite()]
    if len(finite) > 80:
        rng = np.random.default_rng(seed)
        finite = [finite[i] for i in
                  sorted(rng.choice(len(finite), size=80, replace=False))]
    infs = ess_inf_ell_batch(tree, x, mu, g, finite, cands=sts)
    worst = 0.0
    for s, ei in zip(finite, infs):
        for w in range(tree.n_outcomes):
            ls = sol.L.entry(w, s.times[w], s.phases[w])
            if math.isfinite(ls):
                worst = max(worst, abs(ei[w] - ls))
            elif ls == INF and ei[w] != INF:
                # plus-infinity (no mass left) must match; minus-infinity
                # entries are exempt: their characterization needs a
                # sequence of stopping times no finite tree can supply
                worst = max(worst, INF)
    gaps["ess_inf_vs_L"] = worst

    s0 = StoppingTime.constant(tree, 0, AT)
    levels = default_level_grid(sol.L, points=9)
    worst_env = 0.0
    worst_div = 0.0
    taus = enumerate_divided_stopping_times(tree, s0, cap)
    enum = DividedEnumeration(tree, x, s0, taus)
    for ell in levels:
        env = snell_envelope(tree, x, mu, g, float(ell), solver=sol.solver)
        ora = envelope_oracle(tree, x, mu, g, float(ell), s0, cap=cap)
        worst_env = max(worst_env, float(np.max(np.abs(env.y.at[:, 0] - ora))))
        opt, _ = brute_force_divided_optimum(tree, x, mu, g, float(ell), s0,
                                             cap=cap, enum=enum)
        worst_div = max(worst_div, float(np.max(np.abs(opt - env.y.at[:, 0]))))
        tau = classify_contact(tree, x, env, s0)
        dv = divided_value(tree, x, mu, g, float(ell), tau, s0)
        worst_div = max(worst_div,
                        float(np.max(np.abs(dv - env.y.at[:, 0]))))
    gaps["envelope_oracle"] = worst_env
    gaps["divided_optimum"] = worst_div
    results = certify_universal_signal(tree, x, mu, g, sol.L, cap=cap)
    gaps["universal_signal"] = max(r.gap for r in results)
    return gaps


def cmd_oracle(args) -> int:
    cap = args.cap or 10 ** 6
    jobs = []
    if args.random:
        for k in range(args.random):
            fam = ("linear", "cubic_odd", "piecewise_linear")[k % 3]
            jobs.append(random_fixture(args.seed + k, n_outcomes=2 + k % 3,
                                       horizon=2, family=fam))
    else:
        if not args.scenario:
            print("oracle needs a scenario or --random N", file=sys.stderr)
            return EXIT_VALIDATION
        try:
            sc = _load(args.scenario)
        except ParseError as exc:
            print(f"parse error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        except MeyerRepError as exc:
            print(f"invalid scenario: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        jobs.append(sc)
    agg: dict[str, float] = {}
    try:
        for sc in jobs:
            gaps = _oracle_gaps(sc, cap, args.seed)
            for key, val in gaps.items():
                agg[key] = max(agg.get(key, 0.0), val)
    except TooLarge as exc:
        print(f"enumeration guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    ok = True
    for key, val in agg.items():
        print(f"max gap {key}: {val:.3e}")
        ok = ok and val <= 1e-6
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_levy(args) -> int:
    try:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            sc = parse_levy_scenario(fh.read())
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except MeyerRepError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    cfg, mc, opt = sc.config, sc.mc, sc.opt
    if args.seed is not None:
        mc = replace(mc, seed=args.seed)
    if args.workers is not None:
        mc = replace(mc, workers=args.workers)
    out = args.out or "levy_out.csv"
    try:
        if args.mode == "simulate":
            path = simulate_path(cfg, mc.seed)
            traj = control_path(cfg, path, opt=opt)
            with open(out, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh)
                wr.writerow(["t", "P_tilde", "sensor", "L_lambda", "C_lambda"])
                for row in zip(traj.times, traj.level, traj.sensor,
                               traj.signal, traj.control):
                    wr.writerow([_fmt(v) for v in row])
            print(f"wrote {out} ({len(traj.times)} rows, "
                  f"{len(path.jump_times)} jumps)")
        elif args.mode == "signal":
            b = cfg.critical_level()
            m = cfg.mean_jump()
            zs = np.linspace(b - 3 * m, b + 2 * m, 21)
            batch = TriggerBatch(cfg, opt.mc).truncated_for_triggers(cfg.eta)
            with open(out, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh)
                wr.writerow(["z", "visible_jump", "case", "value", "std_err"])
                for z in zs:
                    for flag in (False, True):
                        sv = signal_L_lambda(SensorState(float(z), flag), cfg,
                                             opt, batch=batch)
                        wr.writerow([_fmt(z), int(flag), sv.case,
                                     _fmt(sv.value), _fmt(sv.std_err)])
            print(f"wrote {out}")
        elif args.mode == "compare":
            b = cfg.critical_level()
            scale = max(cfg.p_tilde * cfg.r / cfg.lam, 0.05 * b * cfg.r / cfg.lam)
            levels = np.linspace(0.0, 8.0 * scale, 11)
            policies = [SignalPolicy(opt)] + [ConstantLevelPolicy(float(c))
                                              for c in levels]
            ranking = compare_policies(cfg, opt, policies, mc)
            with open(out, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh)
                wr.writerow(["policy", "estimate", "std_err", "paired_diff",
                             "paired_std_err", "paths"])
                for name, est, se, diff, dse in ranking.rows():
                    wr.writerow([name, _fmt(est), _fmt(se), _fmt(diff),
                                 _fmt(dse), ranking.n_paths])
            top = ranking.names[ranking.best_index()]
            print(f"wrote {out}; best estimate: {top}")
        else:
            print(f"unknown mode {args.mode!r}", file=sys.stderr)
            return EXIT_VALIDATION
    except TooLarge as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except MeyerRepError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="meyerrep",
        description="representation solver on finite filtered trees and the "
                    "compound-Poisson investment example")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="construct the signal and verify")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.add_argument("--tol-ell", type=float, default=None)
    p.add_argument("--tol-eq", type=float, default=None)
    p.add_argument("--cap", type=int, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="run the exhaustive cross-checks")
    p.add_argument("scenario", nargs="?", default=None)
    p.add_argument("--random", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("levy", help="jump-model Monte Carlo runs")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=("simulate", "signal", "compare"),
                   default="simulate")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_levy)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
