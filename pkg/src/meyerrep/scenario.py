"""Line-oriented scenario files for trees and for the jump-model runs.

The format is hand-writable and diffable: named sections in brackets,
``key = value`` pairs, per-time lines ``tN: ...`` and partition cells in
braces.  Outcome indices are always explicit.  Parsing reports the line
of the first offending token; emitting and re-parsing yields structurally
equal objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .levy import (
    Exponential,
    LevyConfig,
    LogNormal,
    MCConfig,
    OptConfig,
    TwoPoint,
)
from .probspace import FilteredTree, make_tree
from .processes import CostField, LadlagProcess, RandomMeasure

__all__ = [
    "Scenario",
    "LevyScenario",
    "parse_scenario",
    "emit_scenario",
    "parse_levy_scenario",
    "emit_levy_scenario",
    "scenarios_equal",
]


@dataclass
class Scenario:
    tree: FilteredTree
    x: LadlagProcess
    mu: RandomMeasure
    g: CostField
    options: dict = field(default_factory=dict)


@dataclass
class LevyScenario:
    config: LevyConfig
    mc: MCConfig
    opt: OptConfig


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _split_sections(text: str) -> list[tuple[str, int, list[tuple[int, str]]]]:
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("unterminated section header", lineno)
            current = (line[1:-1].strip().lower(), lineno, [])
            sections.append(current)
        else:
            if current is None:
                raise ParseError("content before any [section]", lineno)
            current[2].append((lineno, line))
    return sections


def _parse_floats(text: str, lineno: int) -> list[float]:
    out = []
    for tok in text.replace(",", " ").split():
        try:
            out.append(float(tok))
        except ValueError:
            raise ParseError(f"not a number: {tok!r}", lineno) from None
    return out


def _parse_partition_line(text: str, lineno: int) -> list[list[int]]:
    cells = []
    rest = text
    while rest:
        rest = rest.strip()
        if not rest:
            break
        if not rest.startswith("{"):
            raise ParseError("expected '{' starting a cell", lineno)
        end = rest.find("}")
        if end < 0:
            raise ParseError("unterminated cell", lineno)
        body = rest[1:end].replace(",", " ").split()
        try:
            cells.append([int(tok) for tok in body])
        except ValueError:
            raise ParseError("cell members must be integers", lineno) from None
        rest = rest[end + 1:]
    if not cells:
        raise ParseError("empty partition line", lineno)
    return cells


def _timed_lines(lines, horizon: int, what: str):
    """Collect 'tN: payload' lines into a dense list indexed by time."""
    out = [None] * (horizon + 1)
    for lineno, line in lines:
        if ":" not in line:
            raise ParseError(f"{what}: expected 'tN: ...'", lineno)
        head, payload = line.split(":", 1)
        head = head.strip().lower()
        if not head.startswith("t"):
            raise ParseError(f"{what}: line must start with tN", lineno)
        try:
            t = int(head[1:])
        except ValueError:
            raise ParseError(f"{what}: bad time index {head!r}", lineno) from None
        if t < 0 or t > horizon:
            raise ParseError(f"{what}: time {t} outside 0..{horizon}", lineno)
        if out[t] is not None:
            raise ParseError(f"{what}: duplicate time {t}", lineno)
        out[t] = (lineno, payload.strip())
    for t, item in enumerate(out):
        if item is None:
            raise ParseError(f"{what}: missing line for t{t}",
                             lines[0][0] if lines else 0)
    return out


def _kv(lines, what: str) -> dict:
    out = {}
    for lineno, line in lines:
        if "=" not in line:
            raise ParseError(f"{what}: expected 'key = value'", lineno)
        key, val = line.split("=", 1)
        out[key.strip().lower()] = (lineno, val.strip())
    return out


def parse_scenario(text: str) -> Scenario:
    sections = {name: (lineno, lines)
                for name, lineno, lines in _split_sections(text)}
    for required in ("space", "filtration", "meyer", "process_x",
                     "measure_mu", "cost"):
        if required not in sections:
            raise ParseError(f"missing [{required}] section")

    kv = _kv(sections["space"][1], "space")
    if "probs" not in kv or "horizon" not in kv:
        raise ParseError("space needs probs and horizon",
                         sections["space"][0])
    probs = _parse_floats(kv["probs"][1], kv["probs"][0])
    try:
        horizon = int(kv["horizon"][1])
    except ValueError:
        raise ParseError("horizon must be an integer",
                         kv["horizon"][0]) from None
    m = len(probs)

    filt = [_parse_partition_line(payload, lineno)
            for lineno, payload in _timed_lines(sections["filtration"][1],
                                                horizon, "filtration")]
    meyer = [_parse_partition_line(payload, lineno)
             for lineno, payload in _timed_lines(sections["meyer"][1],
                                                 horizon, "meyer")]
    tree = make_tree(probs, filt, meyer)

    at = np.zeros((m, horizon + 1))
    post = np.zeros((m, horizon + 1))
    seen = {"at": [False] * (horizon + 1), "post": [False] * (horizon + 1)}
    for lineno, line in sections["process_x"][1]:
        if ":" not in line:
            raise ParseError("process_x: expected 'at tN: ...'", lineno)
        head, payload = line.split(":", 1)
        toks = head.split()
        if len(toks) != 2 or toks[0].lower() not in ("at", "post"):
            raise ParseError("process_x: line must start with 'at tN' or "
                             "'post tN'", lineno)
        phase = toks[0].lower()
        try:
            t = int(toks[1].lstrip("tT"))
        except ValueError:
            raise ParseError("process_x: bad time index", lineno) from None
        if t < 0 or t > horizon:
            raise ParseError(f"process_x: time {t} out of range", lineno)
        vals = _parse_floats(payload, lineno)
        if len(vals) != m:
            raise ParseError(f"process_x: expected {m} values", lineno)
        (at if phase == "at" else post)[:, t] = vals
        seen[phase][t] = True
    for phase, flags in seen.items():
        for t, ok in enumerate(flags):
            if not ok:
                raise ParseError(f"process_x: missing '{phase} t{t}' line",
                                 sections["process_x"][0])
    x = LadlagProcess.build(tree, at, post)

    wt = np.zeros((m, horizon + 1))
    for t, (lineno, payload) in enumerate(
            _timed_lines(sections["measure_mu"][1], horizon, "measure_mu")):
        vals = _parse_floats(payload, lineno)
        if len(vals) != m:
            raise ParseError(f"measure_mu: expected {m} values", lineno)
        wt[:, t] = vals
    mu = RandomMeasure.build(tree, wt)

    g = _parse_cost(sections["cost"], tree)

    options: dict = {}
    if "options" in sections:
        for key, (lineno, val) in _kv(sections["options"][1], "options").items():
            try:
                options[key] = int(val) if val.lstrip("+-").isdigit() else float(val)
            except ValueError:
                raise ParseError(f"options: bad value for {key}", lineno) from None
    return Scenario(tree=tree, x=x, mu=mu, g=g, options=options)


def _parse_cost(section, tree: FilteredTree) -> CostField:
    lineno0, lines = section
    kv = _kv(lines, "cost")
    if "family" not in kv:
        raise ParseError("cost needs a family", lineno0)
    family = kv["family"][1].lower()
    n1 = tree.horizon + 1

    def vector(key: str, default: float) -> np.ndarray | float:
        if key not in kv:
            return default
        lineno, val = kv[key]
        vals = _parse_floats(val, lineno)
        if len(vals) == 1:
            return vals[0]
        if len(vals) != n1:
            raise ParseError(f"cost {key}: expected 1 or {n1} values", lineno)
        return np.array(vals)

    if family == "linear":
        return CostField.linear(tree, a=vector("a", 1.0), b=vector("b", 0.0))
    if family == "cubic_odd":
        return CostField.cubic_odd(tree, a=vector("a", 1.0), c=vector("c", 0.0))
    if family == "piecewise_linear":
        if "knots_x" not in kv or "knots_y" not in kv:
            raise ParseError("piecewise_linear needs knots_x and knots_y",
                             lineno0)
        xs = _parse_floats(kv["knots_x"][1], kv["knots_x"][0])
        ys = _parse_floats(kv["knots_y"][1], kv["knots_y"][0])
        if len(xs) != len(ys):
            raise ParseError("knots_x and knots_y need equal length",
                             kv["knots_y"][0])
        return CostField.piecewise_linear(tree, xs, ys)
    raise ParseError(f"unknown cost family {family!r}", kv["family"][0])


def emit_scenario(sc: Scenario) -> str:
    tree = sc.tree
    lines = ["[space]",
             "probs = " + " ".join(_fmt(p) for p in tree.probs),
             f"horizon = {tree.horizon}", ""]
    for name, parts in (("filtration", tree.filtration),
                        ("meyer", tree.meyer)):
        lines.append(f"[{name}]")
        for t, part in enumerate(parts):
            cells = " ".join("{" + " ".join(str(w) for w in cell) + "}"
                             for cell in part.cells)
            lines.append(f"t{t}: {cells}")
        lines.append("")
    lines.append("[process_x]")
    for t in range(tree.horizon + 1):
        lines.append(f"at t{t}: " + " ".join(_fmt(v) for v in sc.x.at[:, t]))
    for t in range(tree.horizon + 1):
        lines.append(f"post t{t}: " + " ".join(_fmt(v) for v in sc.x.post[:, t]))
    lines.append("")
    lines.append("[measure_mu]")
    for t in range(tree.horizon + 1):
        lines.append(f"t{t}: " + " ".join(_fmt(v) for v in sc.mu.weights[:, t]))
    lines.append("")
    lines.append("[cost]")
    lines.append(f"family = {sc.g.family}")
    if sc.g.family == "piecewise_linear":
        lines.append("knots_x = " + " ".join(_fmt(v) for v in sc.g.params["xs"]))
        lines.append("knots_y = " + " ".join(_fmt(v)
                                             for v in sc.g.params["ys"][0, 0]))
    else:
        # the file format carries scalar or per-time parameters, constant
        # across outcomes; emission takes outcome row 0
        for key, arr in sc.g.params.items():
            col = arr[0, :]
            if np.all(col == col[0]):
                lines.append(f"{key} = {_fmt(float(col[0]))}")
            else:
                lines.append(f"{key} = " + " ".join(_fmt(v) for v in col))
    if sc.options:
        lines.append("")
        lines.append("[options]")
        for key, val in sorted(sc.options.items()):
            sval = str(val) if isinstance(val, int) else _fmt(val)
            lines.append(f"{key} = {sval}")
    return "\n".join(lines) + "\n"


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    return (
        np.array_equal(a.tree.probs, b.tree.probs)
        and a.tree.horizon == b.tree.horizon
        and a.tree.filtration == b.tree.filtration
        and a.tree.meyer == b.tree.meyer
        and np.array_equal(a.x.at, b.x.at)
        and np.array_equal(a.x.post, b.x.post)
        and np.array_equal(a.mu.weights, b.mu.weights)
        and a.g.family == b.g.family
        and all(np.array_equal(a.g.params[k], b.g.params[k])
                for k in a.g.params)
        and a.options == b.options
    )


# ---------------------------------------------------------------------------
# jump-model scenarios


_JUMP_FAMILIES = ("exponential", "lognormal", "twopoint")


def parse_levy_scenario(text: str) -> LevyScenario:
    sections = {name: (lineno, lines)
                for name, lineno, lines in _split_sections(text)}
    if "levy" not in sections:
        raise ParseError("missing [levy] section")
    kv = _kv(sections["levy"][1], "levy")

    def need(key: str) -> tuple[int, str]:
        if key not in kv:
            raise ParseError(f"levy: missing {key}", sections["levy"][0])
        return kv[key]

    def fnum(key: str, default=None) -> float:
        if key not in kv:
            if default is None:
                raise ParseError(f"levy: missing {key}", sections["levy"][0])
            return default
        lineno, val = kv[key]
        if val.lower() in ("inf", "infinity"):
            return math.inf
        try:
            return float(val)
        except ValueError:
            raise ParseError(f"levy: bad number for {key}", lineno) from None

    lineno, jump_spec = need("jump")
    toks = jump_spec.split()
    fam = toks[0].lower()
    params = {}
    for tok in toks[1:]:
        if "=" not in tok:
            raise ParseError("jump parameters look like name=value", lineno)
        k, v = tok.split("=", 1)
        try:
            params[k.lower()] = float(v)
        except ValueError:
            raise ParseError(f"jump: bad number {v!r}", lineno) from None
    if fam == "exponential":
        jump = Exponential(params.get("mean", 1.0))
    elif fam == "lognormal":
        jump = LogNormal(params.get("mu", 0.0), params.get("sigma", 0.5))
    elif fam == "twopoint":
        jump = TwoPoint(params.get("lo", 1.0), params.get("hi", 1.0),
                        params.get("p_lo", 0.5))
    else:
        raise ParseError(f"unknown jump family {fam!r}; "
                         f"one of {_JUMP_FAMILIES}", lineno)

    mean_override = None
    if "mean_override" in kv and kv["mean_override"][1]:
        mean_override = fnum("mean_override")

    config = LevyConfig(
        p_tilde=fnum("p_tilde", 0.0), lam=fnum("lambda"), r=fnum("r"),
        jump=jump, eta=fnum("eta"), phi=fnum("phi", 0.0),
        horizon=fnum("horizon"), mean_override=mean_override)

    def ints(section: str, key: str, default: int) -> int:
        if section not in sections:
            return default
        skv = _kv(sections[section][1], section)
        if key not in skv:
            return default
        lineno, val = skv[key]
        try:
            return int(val)
        except ValueError:
            raise ParseError(f"{section}: {key} must be an integer",
                             lineno) from None

    mc = MCConfig(paths=ints("mc", "paths", 100_000),
                  seed=ints("mc", "seed", 1),
                  workers=ints("mc", "workers", 1),
                  chunk=ints("mc", "chunk", 16384))
    opt = OptConfig(grid=ints("opt", "grid", 64),
                    golden_iters=ints("opt", "golden_iters", 24),
                    mc=MCConfig(paths=ints("opt", "mc_paths", 20_000),
                                seed=ints("opt", "mc_seed", 1),
                                workers=ints("opt", "mc_workers", 1)))
    return LevyScenario(config=config, mc=mc, opt=opt)


def emit_levy_scenario(sc: LevyScenario) -> str:
    cfg = sc.config
    if isinstance(cfg.jump, Exponential):
        jump = f"exponential mean={_fmt(cfg.jump.mean_size)}"
    elif isinstance(cfg.jump, LogNormal):
        jump = f"lognormal mu={_fmt(cfg.jump.mu_log)} sigma={_fmt(cfg.jump.sigma_log)}"
    else:
        jump = (f"twopoint lo={_fmt(cfg.jump.y_lo)} hi={_fmt(cfg.jump.y_hi)} "
                f"p_lo={_fmt(cfg.jump.p_lo)}")
    lines = [
        "[levy]",
        f"p_tilde = {_fmt(cfg.p_tilde)}",
        f"lambda = {_fmt(cfg.lam)}",
        f"r = {_fmt(cfg.r)}",
        f"jump = {jump}",
        f"eta = {'inf' if cfg.eta == math.inf else _fmt(cfg.eta)}",
        f"phi = {_fmt(cfg.phi)}",
        f"horizon = {_fmt(cfg.horizon)}",
    ]
    if cfg.mean_override is not None:
        lines.append(f"mean_override = {_fmt(cfg.mean_override)}")
    lines += [
        "",
        "[mc]",
        f"paths = {sc.mc.paths}",
        f"seed = {sc.mc.seed}",
        f"workers = {sc.mc.workers}",
        f"chunk = {sc.mc.chunk}",
        "",
        "[opt]",
        f"grid = {sc.opt.grid}",
        f"golden_iters = {sc.opt.golden_iters}",
        f"mc_paths = {sc.opt.mc.paths}",
        f"mc_seed = {sc.opt.mc.seed}",
        f"mc_workers = {sc.opt.mc.workers}",
    ]
    return "\n".join(lines) + "\n"
