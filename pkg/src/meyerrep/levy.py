"""Monte Carlo engine for the compound-Poisson irreversible investment example.

An increasing compound Poisson price is watched through a sensor that
reveals a jump at its instant only when the jump size clears a threshold
eta; smaller jumps show up just after.  The investment signal has a
closed form with four cases keyed on (sensor value vs the critical level
b = mean-jump * lambda / r, visible jump now or not); the case with a
visible jump below b embeds a one-dimensional minimization of a
discounted-stopping functional estimated by common-random-number Monte
Carlo.  The optimal control is the running maximum of the signal floored
at the initial inventory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BadConfig, DegenerateSensor, NonMonotoneControl

__all__ = [
    "Exponential",
    "LogNormal",
    "TwoPoint",
    "LevyConfig",
    "MCConfig",
    "OptConfig",
    "PathSample",
    "SensorPath",
    "SensorState",
    "FEtaEstimate",
    "SignalValue",
    "ControlTrajectory",
    "simulate_path",
    "sensor_path",
    "stopping_T_gamma",
    "f_eta",
    "f_eta_closed_form_first_jump",
    "gamma_domain_sup",
    "signal_L_lambda",
    "control_path",
    "reward",
    "compare_policies",
    "SignalPolicy",
    "ConstantLevelPolicy",
    "PolicyRanking",
    "TriggerBatch",
]


# ---------------------------------------------------------------------------
# jump distributions (strictly positive support, finite second moment)


@dataclass(frozen=True)
class Exponential:
    """Exponential jump sizes with the given mean."""

    mean_size: float = 1.0

    def __post_init__(self):
        if self.mean_size <= 0:
            raise BadConfig("exponential mean must be positive")

    def mean(self) -> float:
        return self.mean_size

    def prob_below(self, eta: float) -> float:
        """P(Y < eta); strict inequality (continuous law, atoms immaterial)."""
        if eta <= 0:
            return 0.0
        if eta == math.inf:
            return 1.0
        return 1.0 - math.exp(-eta / self.mean_size)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.exponential(self.mean_size, size=size)


@dataclass(frozen=True)
class LogNormal:
    """Log-normal jump sizes, parameters of the underlying normal."""

    mu_log: float = 0.0
    sigma_log: float = 0.5

    def __post_init__(self):
        if self.sigma_log <= 0:
            raise BadConfig("lognormal sigma must be positive")

    def mean(self) -> float:
        return math.exp(self.mu_log + 0.5 * self.sigma_log ** 2)

    def prob_below(self, eta: float) -> float:
        if eta <= 0:
            return 0.0
        if eta == math.inf:
            return 1.0
        z = (math.log(eta) - self.mu_log) / self.sigma_log
        return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.lognormal(self.mu_log, self.sigma_log, size=size)


@dataclass(frozen=True)
class TwoPoint:
    """Two-point jump law on {y_lo, y_hi} with P(y_lo) = p_lo."""

    y_lo: float
    y_hi: float
    p_lo: float

    def __post_init__(self):
        if not (0 < self.y_lo <= self.y_hi):
            raise BadConfig("need 0 < y_lo <= y_hi")
        if not (0.0 <= self.p_lo <= 1.0):
            raise BadConfig("p_lo must lie in [0, 1]")

    def mean(self) -> float:
        return self.p_lo * self.y_lo + (1.0 - self.p_lo) * self.y_hi

    def prob_below(self, eta: float) -> float:
        # strict: atoms at the threshold count as visible
        p = 0.0
        if self.y_lo < eta:
            p += self.p_lo
        if self.y_hi < eta:
            p += 1.0 - self.p_lo
        return p

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        lo = rng.random(size=size) < self.p_lo
        return np.where(lo, self.y_lo, self.y_hi)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class LevyConfig:
    """Model parameters; ``mean_override`` pins the moment entering the
    critical level b = m * lambda / r when it should differ from E[Y]."""

    p_tilde: float = 0.0
    lam: float = 1.0
    r: float = 0.1
    jump: Exponential | LogNormal | TwoPoint = Exponential(1.0)
    eta: float = math.inf
    phi: float = 0.0
    horizon: float = 100.0
    mean_override: float | None = None

    def __post_init__(self):
        if self.lam <= 0 or self.r <= 0:
            raise BadConfig("need lam > 0 and r > 0")
        if self.horizon <= 0:
            raise BadConfig("horizon must be positive")
        if self.eta < 0:
            raise BadConfig("eta must lie in [0, inf]")

    def mean_jump(self) -> float:
        return self.jump.mean() if self.mean_override is None else self.mean_override

    def critical_level(self) -> float:
        return self.mean_jump() * self.lam / self.r

    def p_eta(self) -> float:
        return self.jump.prob_below(self.eta)

    def require_interior_sensor(self) -> float:
        p = self.p_eta()
        if not (0.0 < p < 1.0):
            raise DegenerateSensor(
                f"p(eta) = {p} not in (0,1); the four-case signal formula "
                "needs a sensor that hides some jumps and shows others")
        return p


@dataclass(frozen=True)
class MCConfig:
    paths: int = 100_000
    seed: int = 1
    workers: int = 1
    chunk: int = 16384

    def __post_init__(self):
        if self.paths < 100:
            raise BadConfig("need at least 100 paths")
        if self.workers < 1 or self.chunk < 1:
            raise BadConfig("workers and chunk must be positive")


@dataclass(frozen=True)
class OptConfig:
    """Knobs for the embedded minimization in the visible-below-b case.

    The embedded Monte Carlo defaults to fewer paths than the outer
    experiments; the search shares one common-random-number batch across
    every gamma (and every z on a table grid), truncated to the columns
    that can still matter (nothing triggers later than the first visible
    jump)."""

    grid: int = 64
    golden_iters: int = 24
    mc: MCConfig = field(default_factory=lambda: MCConfig(paths=20_000, seed=1))


# ---------------------------------------------------------------------------
# path sampling


@dataclass(frozen=True)
class PathSample:
    """One simulated jump path (times strictly increasing, sizes positive)."""

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    seed: int
    horizon: float

    def count_at(self, t: float) -> int:
        return int(np.searchsorted(self.jump_times, t, side="right"))

    def level_at(self, t: float, p_tilde: float) -> float:
        k = self.count_at(t)
        return p_tilde + float(self.jump_sizes[:k].sum())


def simulate_path(config: LevyConfig, seed: int) -> PathSample:
    """Exponential inter-arrival times up to the horizon, i.i.d. sizes."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    times = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / config.lam)
        if t > config.horizon:
            break
        times.append(t)
    sizes = config.jump.sample(rng, len(times))
    return PathSample(np.array(times), np.asarray(sizes, dtype=float),
                      seed, config.horizon)


@dataclass(frozen=True)
class SensorPath:
    """Sensor readings along a path: at each jump instant the left limit
    plus the jump iff the jump clears eta; strictly between jumps the
    sensor equals the full level (delayed reveal)."""

    jump_times: np.ndarray
    at_jump: np.ndarray      # sensor value at the jump instant
    after_jump: np.ndarray   # revealed value just after
    before_jump: np.ndarray  # left limit


def sensor_path(path: PathSample, eta: float, p_tilde: float = 0.0) -> SensorPath:
    csum = np.cumsum(path.jump_sizes)
    after = p_tilde + csum
    before = after - path.jump_sizes
    visible = path.jump_sizes >= eta
    at = np.where(visible, after, before)
    return SensorPath(path.jump_times.copy(), at, after, before)


def stopping_T_gamma(path: PathSample, gamma: float, eta: float
                     ) -> tuple[float, bool, int | None]:
    """First jump time whose size clears eta or at which the cumulated jump
    sum reaches gamma; horizon-censored with a flag.  Returns
    (time, censored, jump index)."""
    if gamma < 0:
        raise BadConfig("gamma must be nonnegative")
    csum = np.cumsum(path.jump_sizes)
    trig = (path.jump_sizes >= eta) | (csum >= gamma)
    idx = np.flatnonzero(trig)
    if len(idx) == 0:
        return path.horizon, True, None
    k = int(idx[0])
    return float(path.jump_times[k]), False, k


# ---------------------------------------------------------------------------
# batched sampling (deterministic worker substreams)


class TriggerBatch:
    """Common-random-number jump batch shared across gamma values,
    z values and policies.

    Rows are paths; columns are jumps, padded past the horizon.  The
    worker split is deterministic: worker w draws its chunk from substream
    ``SeedSequence(seed).spawn(workers)[w]``, so results are bit-identical
    for a fixed (seed, workers) pair.
    """

    def __init__(self, config: LevyConfig, mc: MCConfig,
                 _arrays: tuple | None = None):
        self.config = config
        self.mc = mc
        if _arrays is not None:
            self.times, self.sizes = _arrays
        else:
            base = np.random.SeedSequence(mc.seed)
            streams = base.spawn(mc.workers)
            quota = [mc.paths // mc.workers] * mc.workers
            for i in range(mc.paths % mc.workers):
                quota[i] += 1
            blocks_t, blocks_s = [], []
            lam, hor = config.lam, config.horizon
            est = lam * hor
            cols = max(8, int(est + 6.0 * math.sqrt(est) + 8))
            for ss, n in zip(streams, quota):
                if n == 0:
                    continue
                rng = np.random.default_rng(ss)
                gaps = rng.exponential(1.0 / lam, size=(n, cols))
                times = np.cumsum(gaps, axis=1)
                while float(times[:, -1].min()) <= hor:
                    extra = rng.exponential(1.0 / lam, size=(n, cols // 2 + 8))
                    times = np.concatenate(
                        [times, times[:, -1:] + np.cumsum(extra, axis=1)], axis=1)
                sizes = np.asarray(config.jump.sample(rng, times.shape),
                                   dtype=float)
                blocks_t.append(times)
                blocks_s.append(sizes)
            width = max(b.shape[1] for b in blocks_t)
            n_total = sum(b.shape[0] for b in blocks_t)
            self.times = np.full((n_total, width), np.inf)
            self.sizes = np.zeros((n_total, width))
            row = 0
            for bt, bs in zip(blocks_t, blocks_s):
                r, c = bt.shape
                self.times[row:row + r, :c] = bt
                self.sizes[row:row + r, :c] = bs
                row += r
        self.alive = self.times <= config.horizon
        self.sizes = np.where(self.alive, self.sizes, 0.0)
        self.csum = np.cumsum(self.sizes, axis=1)
        self.n_paths = self.times.shape[0]

    def truncated_for_triggers(self, eta: float) -> "TriggerBatch":
        """Drop columns past the first visible jump of every path: no
        gamma trigger can fire later, so trigger statistics are exact on
        the truncated batch."""
        visible = (self.sizes >= eta) & self.alive
        any_vis = visible.any(axis=1)
        first = np.where(any_vis, np.argmax(visible, axis=1),
                         self.alive.sum(axis=1) - 1)
        width = int(first.max()) + 1 if len(first) else 1
        return TriggerBatch(self.config, self.mc,
                            _arrays=(self.times[:, :width].copy(),
                                     self.sizes[:, :width].copy()))

    def row_slice(self, a: int, b: int) -> "TriggerBatch":
        return TriggerBatch(self.config, self.mc,
                            _arrays=(self.times[a:b], self.sizes[a:b]))


@dataclass(frozen=True)
class FEtaEstimate:
    gamma: float
    z: float
    value: float
    std_err: float
    n_paths: int
    censored_frac: float

    def __post_init__(self):
        if self.censored_frac > 1e-3:
            warnings.warn(
                f"horizon censoring at {self.censored_frac:.2%}; "
                "increase the horizon", stacklevel=3)


def _trigger_stats(batch: TriggerBatch, gamma: float, eta: float):
    """Per-path (discount, discounted jump sum, discounted visible flag)
    for the first-passage time of 'size >= eta or cumsum >= gamma'."""
    cfg = batch.config
    trig = ((batch.sizes >= eta) | (batch.csum >= gamma)) & batch.alive
    any_trig = trig.any(axis=1)
    k = np.argmax(trig, axis=1)
    rows = np.arange(batch.n_paths)
    t_hit = np.where(any_trig, batch.times[rows, k], cfg.horizon)
    n_alive = batch.alive.sum(axis=1)
    sum_cens = np.where(n_alive > 0, batch.csum[rows, np.maximum(n_alive - 1, 0)], 0.0)
    sum_y = np.where(any_trig, batch.csum[rows, k], sum_cens)
    visible = np.where(any_trig, batch.sizes[rows, k] >= eta, False)
    disc = np.exp(-cfg.r * t_hit)
    return disc, disc * sum_y, disc * visible.astype(float), ~any_trig


def _feta_from_means(config: LevyConfig, z: float, m1, m2, m3):
    num = (1.0 - m1) * z - m2
    den = 1.0 + (config.lam / config.r) * (1.0 - m1) - m3
    return num / den


def f_eta(gamma: float, z: float, config: LevyConfig, mc: MCConfig,
          batch: TriggerBatch | None = None) -> FEtaEstimate:
    """Monte Carlo estimate of the embedded stopping functional.

    Three expectations share one path set: the discount to the trigger
    time, the discounted cumulated jump sum, and the discounted visible
    indicator; the standard error is propagated by the delta method.
    """
    if gamma < 0:
        raise BadConfig("gamma must be nonnegative")
    if batch is None:
        batch = TriggerBatch(config, mc)
    v1, v2, v3, censored = _trigger_stats(batch, gamma, config.eta)
    n = batch.n_paths
    stack = np.stack([v1, v2, v3])
    means = stack.mean(axis=1)
    cov = np.cov(stack, ddof=1)
    m1, m2, m3 = (float(v) for v in means)
    value = _feta_from_means(config, z, m1, m2, m3)
    num = (1.0 - m1) * z - m2
    den = 1.0 + (config.lam / config.r) * (1.0 - m1) - m3
    grad = np.array([
        (-z * den + num * (config.lam / config.r)) / den ** 2,
        -1.0 / den,
        num / den ** 2,
    ])
    var = float(grad @ cov @ grad) / n
    return FEtaEstimate(gamma=gamma, z=z, value=float(value),
                        std_err=math.sqrt(max(var, 0.0)), n_paths=n,
                        censored_frac=float(np.mean(censored)))


def f_eta_closed_form_first_jump(config: LevyConfig, z: float) -> float:
    """Closed form at gamma = 0 (the trigger is the first jump): the
    discount transform of an exponential arrival is lam/(lam+r), the jump
    is independent of its arrival time."""
    lam, r = config.lam, config.r
    a = lam / (lam + r)
    m1 = a
    m2 = a * config.jump.mean()
    m3 = a * (1.0 - config.p_eta())
    return _feta_from_means(config, z, m1, m2, m3)


def gamma_domain_sup(config: LevyConfig, z: float) -> float:
    """Right end of the gamma search domain for a sensor value below b."""
    p = config.p_eta()
    b = config.critical_level()
    return (1.0 - (config.lam / (1.0 + config.lam)) * p) * (b - z)


# ---------------------------------------------------------------------------
# the four-case signal


@dataclass(frozen=True)
class SensorState:
    """Sensor value plus the visible-jump flag.

    ``visible_jump`` is true exactly when a jump lands at this instant and
    its size clears eta (for this sensor, 'a jump is visible now' and 'the
    jump just landed is large' coincide); at all other times the sensor
    increment is zero and the no-jump cases apply.
    """

    z: float
    visible_jump: bool = False


@dataclass(frozen=True)
class SignalValue:
    value: float
    std_err: float
    case: int
    gamma_star: float | None = None


def _case3_minimize(config: LevyConfig, z: float, opt: OptConfig,
                    batch: TriggerBatch) -> tuple[float, float, float]:
    """Grid scan plus golden-section refinement of the gamma minimization,
    all on one common-random-number batch."""
    hi = max(gamma_domain_sup(config, z) - 1e-9, 0.0)
    if hi <= 0.0:
        est = f_eta(0.0, z, config, opt.mc, batch=batch)
        return est.value, est.std_err, 0.0

    def f(gamma: float) -> float:
        v1, v2, v3, _ = _trigger_stats(batch, gamma, config.eta)
        return float(_feta_from_means(config, z, float(v1.mean()),
                                      float(v2.mean()), float(v3.mean())))

    grid = np.linspace(0.0, hi, max(opt.grid, 5))
    vals = [f(gm) for gm in grid]
    j = int(np.argmin(vals))
    lo_b = grid[max(j - 1, 0)]
    hi_b = grid[min(j + 1, len(grid) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo_b, hi_b
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(opt.golden_iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    cands = [(vals[j], grid[j]), (fc, c), (fd, d)]
    best_val, best_gamma = min(cands)
    est = f_eta(best_gamma, z, config, opt.mc, batch=batch)
    return est.value, est.std_err, best_gamma


def signal_L_lambda(state: SensorState, config: LevyConfig,
                    opt: OptConfig | None = None,
                    batch: TriggerBatch | None = None) -> SignalValue:
    """Four-case signal value at one sensor state.

    (1) at or above b with a visible jump now: 0;
    (2) at or above b, no jump now: (r/lam)(z - b);
    (3) below b with a visible jump now: infimum of the stopping
        functional over the gamma domain, by common-random-number search;
    (4) below b, no jump now: (1/p(eta)) (r/lam) (z - b).
    """
    p = config.require_interior_sensor()
    if opt is None:
        opt = OptConfig()
    b = config.critical_level()
    ratio = config.r / config.lam
    z = state.z
    if z >= b:
        if state.visible_jump:
            return SignalValue(0.0, 0.0, 1)
        return SignalValue(ratio * (z - b), 0.0, 2)
    if not state.visible_jump:
        return SignalValue(ratio * (z - b) / p, 0.0, 4)
    if batch is None:
        batch = TriggerBatch(config, opt.mc)
    value, err, gamma = _case3_minimize(config, z, opt, batch)
    return SignalValue(value, err, 3, gamma_star=gamma)


class _CaseThreeTable:
    """Interpolation table for the visible-below-b case on a z grid;
    built once per (config, opt) with one shared batch."""

    def __init__(self, config: LevyConfig, opt: OptConfig, z_lo: float,
                 points: int = 65):
        b = config.critical_level()
        z_hi = b - 1e-9
        z_lo = min(z_lo, z_hi - 1e-6)
        self.grid = np.linspace(z_lo, z_hi, points)
        batch = TriggerBatch(config, opt.mc).truncated_for_triggers(config.eta)
        vals, errs = [], []
        for z in self.grid:
            v, e, _ = _case3_minimize(config, float(z), opt, batch)
            vals.append(v)
            errs.append(e)
        self.values = np.array(vals)
        self.errors = np.array(errs)

    def __call__(self, z) -> np.ndarray:
        return np.interp(z, self.grid, self.values)

    def err(self, z) -> np.ndarray:
        return np.interp(z, self.grid, self.errors)


# ---------------------------------------------------------------------------
# control trajectories and rewards


@dataclass
class ControlTrajectory:
    """Ladlag control along one path, sampled at time zero and at each
    jump instant and just after (the signal only moves at jumps).

    ``rows`` hold (t, level, sensor, signal, control) with two rows per
    jump: the at-instant state and the just-after state.
    """

    times: np.ndarray
    level: np.ndarray
    sensor: np.ndarray
    signal: np.ndarray
    control: np.ndarray
    jump_times: np.ndarray
    control_before: np.ndarray
    control_at: np.ndarray
    control_after: np.ndarray
    initial_control: float
    phi: float


def _case24_scalar(config: LevyConfig, z: float, p: float) -> float:
    b = config.critical_level()
    ratio = config.r / config.lam
    return ratio * (z - b) if z >= b else ratio * (z - b) / p


def control_path(config: LevyConfig, path: PathSample,
                 eta: float | None = None,
                 opt: OptConfig | None = None) -> ControlTrajectory:
    """Signal and running-maximum control along one path."""
    if eta is not None and eta != config.eta:
        config = replace(config, eta=eta)
    p = config.require_interior_sensor()
    if opt is None:
        opt = OptConfig()
    b = config.critical_level()
    table: _CaseThreeTable | None = None

    def case3(z: float) -> float:
        nonlocal table
        if table is None:
            table = _CaseThreeTable(config, opt, z_lo=min(config.p_tilde, z))
        return float(table(z))

    sp = sensor_path(path, config.eta, config.p_tilde)
    times = [0.0]
    level = [config.p_tilde]
    sensor = [config.p_tilde]
    sig0 = _case24_scalar(config, config.p_tilde, p)
    signal = [sig0]
    run = max(config.phi, sig0)
    control = [run]
    c0 = run
    jt, c_before, c_at, c_after = [], [], [], []
    for k in range(len(path.jump_times)):
        t = float(path.jump_times[k])
        visible = path.jump_sizes[k] >= config.eta
        z_at = float(sp.at_jump[k])
        if visible:
            l_at = 0.0 if z_at >= b else case3(z_at)
        else:
            l_at = _case24_scalar(config, z_at, p)
        c_before.append(run)
        run = max(run, l_at)
        times.append(t)
        level.append(float(sp.after_jump[k]))
        sensor.append(z_at)
        signal.append(l_at)
        control.append(run)
        c_at.append(run)
        z_post = float(sp.after_jump[k])
        l_post = _case24_scalar(config, z_post, p)
        run = max(run, l_post)
        times.append(t)
        level.append(z_post)
        sensor.append(z_post)
        signal.append(l_post)
        control.append(run)
        c_after.append(run)
        jt.append(t)
    return ControlTrajectory(
        times=np.array(times), level=np.array(level), sensor=np.array(sensor),
        signal=np.array(signal), control=np.array(control),
        jump_times=np.array(jt), control_before=np.array(c_before),
        control_at=np.array(c_at), control_after=np.array(c_after),
        initial_control=c0, phi=config.phi,
    )


def reward(config: LevyConfig, traj: ControlTrajectory,
           path: PathSample) -> float:
    """Discounted reward of a control along one path.

    Purchases pay the post-jump price times the full control increment
    across the jump (the right-increment of the ladlag control); risk is
    assessed at each jump on the squared control value at the instant.
    The initial purchase up to the starting control is priced at the
    initial level.
    """
    if np.any(np.diff(traj.control) < -1e-12) or traj.initial_control < traj.phi - 1e-12:
        raise NonMonotoneControl("control must be non-decreasing from phi")
    total = config.p_tilde * (traj.initial_control - traj.phi)
    csum = np.cumsum(path.jump_sizes)
    for k, t in enumerate(traj.jump_times):
        disc = math.exp(-config.r * t)
        price = config.p_tilde + float(csum[k])
        inc = traj.control_after[k] - traj.control_before[k]
        total += disc * (price * inc - 0.5 * traj.control_at[k] ** 2)
    return float(total)


# ---------------------------------------------------------------------------
# policy comparison with common random numbers


def _chunked(n: int, chunk: int):
    for a in range(0, n, chunk):
        yield a, min(a + chunk, n)


class ConstantLevelPolicy:
    """Buy up to a fixed level at time zero and hold."""

    def __init__(self, level: float):
        self.level = level
        self.name = f"constant[{level:g}]"

    def rewards(self, config: LevyConfig, batch: TriggerBatch) -> np.ndarray:
        c = max(config.phi, self.level)
        out = np.empty(batch.n_paths)
        for a, b in _chunked(batch.n_paths, batch.mc.chunk):
            alive = batch.alive[a:b]
            disc_sum = np.where(
                alive, np.exp(-config.r * np.where(alive, batch.times[a:b],
                                                   0.0)), 0.0).sum(axis=1)
            out[a:b] = config.p_tilde * (c - config.phi) - 0.5 * c * c * disc_sum
        return out


class SignalPolicy:
    """The running-maximum-of-the-signal control, vectorized over a batch."""

    def __init__(self, opt: OptConfig | None = None):
        self.opt = opt or OptConfig()
        self.name = "signal-control"
        self._table: _CaseThreeTable | None = None

    def rewards(self, config: LevyConfig, batch: TriggerBatch) -> np.ndarray:
        p = config.require_interior_sensor()
        b = config.critical_level()
        ratio = config.r / config.lam
        if self._table is None:
            self._table = _CaseThreeTable(config, self.opt, z_lo=config.p_tilde)
        sig0 = _case24_scalar(config, config.p_tilde, p)
        c0 = max(config.phi, sig0)

        def case24(z):
            return np.where(z >= b, ratio * (z - b), ratio * (z - b) / p)

        out = np.empty(batch.n_paths)
        for lo, hi in _chunked(batch.n_paths, batch.mc.chunk):
            alive = batch.alive[lo:hi]
            times = batch.times[lo:hi]
            sizes = batch.sizes[lo:hi]
            csum = batch.csum[lo:hi]
            after = config.p_tilde + csum
            z_at = np.where((sizes >= config.eta) & alive, after,
                            after - sizes)
            visible = (sizes >= config.eta) & alive
            l_at = np.where(visible,
                            np.where(z_at >= b, 0.0, self._table(z_at)),
                            case24(z_at))
            l_post = case24(after)
            n, kk = times.shape
            inter = np.empty((n, 2 * kk))
            inter[:, 0::2] = np.where(alive, l_at, -np.inf)
            inter[:, 1::2] = np.where(alive, l_post, -np.inf)
            run = np.maximum.accumulate(
                np.concatenate([np.full((n, 1), c0), inter], axis=1), axis=1)
            c_before = run[:, 0:-2:2]
            c_at = run[:, 1::2]
            c_after = run[:, 2::2]
            disc = np.where(alive,
                            np.exp(-config.r * np.where(alive, times, 0.0)),
                            0.0)
            terms = disc * (after * (c_after - c_before)
                            - 0.5 * np.where(alive, c_at, 0.0) ** 2)
            out[lo:hi] = config.p_tilde * (c0 - config.phi) + terms.sum(axis=1)
        return out


@dataclass
class PolicyRanking:
    names: list[str]
    estimates: np.ndarray
    std_errs: np.ndarray
    paired_diff: np.ndarray      # estimate - estimate of the first policy
    paired_std_err: np.ndarray
    n_paths: int

    def best_index(self) -> int:
        return int(np.argmax(self.estimates))

    def rows(self):
        return list(zip(self.names, self.estimates, self.std_errs,
                        self.paired_diff, self.paired_std_err))


def compare_policies(config: LevyConfig, opt: OptConfig,
                     policies: list, mc: MCConfig) -> PolicyRanking:
    """Common-random-number estimates of expected reward per policy with
    paired standard errors against the first policy in the list."""
    if not policies:
        raise BadConfig("need at least one policy")
    batch = TriggerBatch(config, mc)
    per_path = [np.asarray(pol.rewards(config, batch)) for pol in policies]
    n = batch.n_paths
    est = np.array([float(v.mean()) for v in per_path])
    ses = np.array([float(v.std(ddof=1)) / math.sqrt(n) for v in per_path])
    base = per_path[0]
    diffs = np.array([float((v - base).mean()) for v in per_path])
    dses = np.array([float((v - base).std(ddof=1)) / math.sqrt(n)
                     if i else 0.0 for i, v in enumerate(per_path)])
    return PolicyRanking([p.name for p in policies], est, ses, diffs, dses, n)
