"""
Monte Carlo checks of the identities predicted by the analytic modules.

Paths are simulated on Y = s(X), which is a driftless diffusion with
d<Y>_t = 2 s'(X_t) / m'(X_t) dt, by an Euler scheme; X is recovered through a
tabulated inverse of s. Additive functionals are accumulated in the same
pass: the density part of mu_A = f m by left-point Riemann sums, atoms
through a local-time estimator normalised so that E^x[L^y_{T_ab}] = u_ab(x, y).

Statistics are reported in standard-error units; thresholds belong to callers.
"""
import logging
import math
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import erfcx

from .diffusion import (
    DiffusionSpec,
    TableScale,
    green_kernel,
    is_transient,
    killed_potential_density,
    speed_density,
)
from .exceptions import (
    PreconditionError,
    UnsupportedMeasureError,
    UnsupportedSpecError,
)
from .measures import RadonMeasure
from .transform import TransformedDiffusion, likelihood_ratio, q_local_time_mean, scale_slopes

logger = logging.getLogger(__name__)

Function = Callable[[Any], Any]
Interval = Tuple[float, float]


class LocalTimeEstimator(str, Enum):
    BRIDGE = "bridge"
    OCCUPATION = "occupation"


class SimConfig(BaseModel):
    """Simulation parameters and the events to record along the paths."""

    model_config = ConfigDict(frozen=True)

    dt: float = Field(default=1e-3, gt=0.0)
    n_paths: int = Field(default=10_000, ge=1)
    horizon: float = Field(default=1.0, gt=0.0)
    seed: int = 0
    epsilon_lt: float = Field(default=0.05, gt=0.0)
    truncation: Optional[Interval] = None
    local_time: LocalTimeEstimator = LocalTimeEstimator.BRIDGE
    chunk_size: int = Field(default=10_000, ge=1)
    table_points: int = Field(default=20_001, ge=101)
    checkpoints: Optional[List[float]] = None
    levels: List[float] = Field(default_factory=list)
    intervals: List[Interval] = Field(default_factory=list)
    last_passage: List[Interval] = Field(default_factory=list)

    @field_validator("intervals", "last_passage", mode="before")
    @classmethod
    def _pairs(cls, value: Any) -> List[Interval]:
        return [(float(a), float(b)) for a, b in (value or [])]

    @model_validator(mode="after")
    def _check(self) -> "SimConfig":
        for a, b in self.intervals:
            if not a < b:
                raise ValueError(f"interval ({a}, {b}) is empty")
        for y, z in self.last_passage:
            if y == z:
                raise ValueError("last passage needs y != z")
        if self.truncation is not None and not self.truncation[0] < self.truncation[1]:
            raise ValueError(f"truncation bounds {self.truncation} are empty")
        return self

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon / self.dt - 1e-9))

    def checkpoint_times(self) -> np.ndarray:
        if self.checkpoints:
            times = np.asarray(sorted(self.checkpoints), dtype=float)
            return times[(times > 0) & (times <= self.horizon)]
        return np.linspace(self.horizon / 10.0, self.horizon, 10)

    def all_levels(self) -> List[float]:
        levels = set(self.levels)
        for y, z in self.last_passage:
            levels.update((y, z))
        return sorted(levels)


class ExitRecord(BaseModel):
    """State, functional and time at T_ab ∧ horizon for one interval."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    time: np.ndarray
    state: np.ndarray
    pcaf: np.ndarray
    discount: np.ndarray

    @property
    def exited(self) -> np.ndarray:
        return np.isfinite(self.time)


class PathEnsemble(BaseModel):
    """
    Recorded quantities of a batch of paths.

    ``pcaf`` holds the estimate of A_t; ``discount`` holds -log of the
    conditional expectation of e^{-A} given the simulated skeleton, which is
    what discounted functionals use. Both agree for the occupation estimator.
    Hitting times are ``inf`` when the level was not reached.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: DiffusionSpec
    x0: float
    config: SimConfig
    mu_label: str = ""
    has_pcaf: bool = False
    times: np.ndarray
    states: np.ndarray
    pcaf: np.ndarray
    discount: np.ndarray
    final_time: np.ndarray
    absorbed: np.ndarray
    hitting: Dict[float, np.ndarray] = Field(default_factory=dict)
    hitting_pcaf: Dict[float, np.ndarray] = Field(default_factory=dict)
    hitting_discount: Dict[float, np.ndarray] = Field(default_factory=dict)
    exits: Dict[Interval, ExitRecord] = Field(default_factory=dict)
    last_passage: Dict[Interval, np.ndarray] = Field(default_factory=dict)
    truncation: Interval
    surrogate: bool = False
    resolution_flag: bool = False

    @property
    def n_paths(self) -> int:
        return int(self.states.shape[0])

    def hitting_time(self, level: float) -> np.ndarray:
        if level not in self.hitting:
            raise PreconditionError(f"level {level} was not recorded; add it to SimConfig.levels")
        return self.hitting[level]

    def exit_record(self, a: float, b: float) -> ExitRecord:
        key = (float(a), float(b))
        if key not in self.exits:
            raise PreconditionError(f"interval {key} was not recorded; add it to SimConfig.intervals")
        return self.exits[key]


class _Tables:
    """Tabulated s, s^-1, σ_Y and the density of mu_A against m on the simulation range."""

    def __init__(self, spec: DiffusionSpec, x0: float, config: SimConfig, mu_A: Optional[RadonMeasure]) -> None:
        if isinstance(spec.scale, TableScale):
            raise UnsupportedSpecError("paths of table-scale diffusions are not simulated")
        lo, hi, surrogate = _simulation_range(spec, x0, config)
        self.lo, self.hi, self.surrogate = lo, hi, surrogate
        extra = [p for p in config.all_levels() if lo < p < hi]
        for a, b in config.intervals:
            extra += [p for p in (a, b) if lo < p < hi]
        xs = np.unique(np.concatenate([np.linspace(lo, hi, config.table_points), extra]))
        self.xs = xs
        us = np.asarray(spec.scale(xs), dtype=float)
        if np.any(np.diff(us) <= 0) or not np.all(np.isfinite(us)):
            raise UnsupportedSpecError(f"scale of {spec.name} cannot be tabulated on [{lo}, {hi}]")
        self.us = us
        try:
            m_prime = np.asarray(speed_density(spec, xs), dtype=float)
        except UnsupportedSpecError:
            logger.error(f"{spec.name} has no speed density")
            raise
        s_prime = np.asarray(spec.scale.derivative(xs), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            sigma2 = 2.0 * s_prime / m_prime
        if not np.all(np.isfinite(sigma2)) or np.any(sigma2 < 0):
            raise UnsupportedSpecError(f"diffusion coefficient of s(X) is not finite on [{lo}, {hi}]")
        self.sigma = np.sqrt(sigma2)
        self.m_prime = m_prime

        self.f: Optional[np.ndarray] = None
        self.atoms: List[Tuple[float, float, float, float]] = []
        if mu_A is not None and not mu_A.is_zero():
            if mu_A.density is not None and not mu_A.density.is_zero():
                try:
                    density = np.asarray(mu_A.density(xs), dtype=float)
                except NotImplementedError as e:
                    raise UnsupportedMeasureError(f"density of {mu_A.label or 'mu_A'} is not evaluable: {e}")
                with np.errstate(divide="ignore", invalid="ignore"):
                    f = density / m_prime
                if not np.all(np.isfinite(f)):
                    raise UnsupportedMeasureError("mu_A has no finite density against m on the simulation range")
                self.f = f
            for y, w in mu_A.atoms:
                if not lo < y < hi:
                    logger.warning(f"atom at {y} lies outside the simulated range and is ignored")
                    continue
                eps = config.epsilon_lt
                band = spec.speed.mass(max(y - eps, spec.lower), min(y + eps, spec.upper))
                self.atoms.append((float(y), float(w), float(spec.scale(y)), band))

    def x_of(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.us, self.xs)

    def sigma_at(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.xs, self.sigma)

    def f_at(self, x: np.ndarray) -> np.ndarray:
        assert self.f is not None
        return np.interp(x, self.xs, self.f)


def _simulation_range(spec: DiffusionSpec, x0: float, config: SimConfig) -> Tuple[float, float, bool]:
    if config.truncation is not None:
        lo, hi = config.truncation
        lo, hi = max(lo, spec.lower), min(hi, spec.upper)
    else:
        width = 10.0 * (1.0 + math.sqrt(config.horizon))
        lo = spec.lower if math.isfinite(spec.lower) else x0 - width
        hi = spec.upper if math.isfinite(spec.upper) else x0 + width
    if lo == spec.lower:
        lo = spec.lower + 1e-9 * max(1.0, abs(spec.lower))
    if hi == spec.upper:
        hi = spec.upper - 1e-9 * max(1.0, abs(spec.upper))
    if not lo < x0 < hi:
        raise PreconditionError(f"x0={x0} must lie inside the simulation range ({lo}, {hi})")
    surrogate = not (math.isfinite(spec.lower) and math.isfinite(spec.upper)) or config.truncation is not None
    return lo, hi, surrogate


def bridge_local_time_mean(u0: Any, u1: Any, level: float, tau: Any) -> Any:
    """
    E[ℓ^v] for a Brownian bridge from u0 to u1 with quadratic variation tau,
    ℓ^v being its semimartingale local time at v.
    """
    c = np.abs(u0 - level) + np.abs(u1 - level)
    d = u1 - u0
    root = np.sqrt(2.0 * tau)
    return np.sqrt(0.5 * np.pi * tau) * np.exp((d * d - c * c) / (2.0 * tau)) * erfcx(c / root)


def bridge_local_time_laplace(u0: Any, u1: Any, level: float, tau: Any, lam: float) -> Any:
    """E[exp(-lam ℓ^v)] for the same bridge."""
    c = np.abs(u0 - level) + np.abs(u1 - level)
    d = u1 - u0
    root = np.sqrt(2.0 * tau)
    tail = np.sqrt(0.5 * np.pi * tau) * np.exp((d * d - c * c) / (2.0 * tau)) * erfcx((c + lam * tau) / root)
    return 1.0 - lam * tail


class _Chunk:
    """Arrays of one chunk of paths, advanced in place."""

    def __init__(self, n: int, x0: float, u0: float, config: SimConfig, levels: Sequence[float]) -> None:
        self.x = np.full(n, x0)
        self.u = np.full(n, u0)
        self.a = np.zeros(n)
        self.d = np.zeros(n)
        self.alive = np.ones(n, dtype=bool)
        self.final_time = np.full(n, config.horizon)
        self.absorbed = np.zeros(n, dtype=np.int8)
        n_cp = config.checkpoint_times().size
        self.states = np.empty((n, n_cp))
        self.pcaf = np.empty((n, n_cp))
        self.discount = np.empty((n, n_cp))
        self.hit = {z: np.full(n, 0.0 if z == x0 else np.inf) for z in levels}
        self.hit_a = {z: np.zeros(n) for z in levels}
        self.hit_d = {z: np.zeros(n) for z in levels}
        self.exit_time: Dict[Interval, np.ndarray] = {}
        self.exit_state: Dict[Interval, np.ndarray] = {}
        self.exit_a: Dict[Interval, np.ndarray] = {}
        self.exit_d: Dict[Interval, np.ndarray] = {}
        for iv in config.intervals:
            self.exit_time[iv] = np.full(n, np.inf)
            self.exit_state[iv] = np.full(n, x0)
            self.exit_a[iv] = np.zeros(n)
            self.exit_d[iv] = np.zeros(n)
        self.last = {pair: np.zeros(n) for pair in config.last_passage}


def _advance(
    chunk: _Chunk,
    tables: _Tables,
    config: SimConfig,
    rng: np.random.Generator,
    mu_present: bool,
) -> None:
    dt = config.dt
    sqrt_dt = math.sqrt(dt)
    u_lo, u_hi = float(tables.us[0]), float(tables.us[-1])
    cp_steps = np.rint(config.checkpoint_times() / dt).astype(int)
    cp_index = 0
    n_steps = config.n_steps
    estimator = config.local_time
    for step in range(1, n_steps + 1):
        t = step * dt
        alive = chunk.alive
        if alive.any():
            x_old, u_old = chunk.x, chunk.u
            sigma = tables.sigma_at(x_old)
            u_new = u_old + sigma * sqrt_dt * rng.standard_normal(x_old.size)
            low, high = u_new <= u_lo, u_new >= u_hi
            u_new = np.clip(u_new, u_lo, u_hi)
            x_new = tables.x_of(u_new)
            u_new = np.where(alive, u_new, u_old)
            x_new = np.where(alive, x_new, x_old)

            if mu_present:
                inc_a = np.zeros(x_old.size)
                inc_d = np.zeros(x_old.size)
                if tables.f is not None:
                    inc_a += tables.f_at(x_old) * dt
                    inc_d += tables.f_at(x_old) * dt
                for y, w, v, band in tables.atoms:
                    if estimator is LocalTimeEstimator.OCCUPATION:
                        local = (np.abs(x_old - y) < config.epsilon_lt) * dt / band
                        inc_a += w * local
                        inc_d += w * local
                    else:
                        tau = sigma * sigma * dt
                        # diffusion local time is half the semimartingale local time of s(X)
                        inc_a += 0.5 * w * bridge_local_time_mean(u_old, u_new, v, tau)
                        laplace = bridge_local_time_laplace(u_old, u_new, v, tau, 0.5 * w)
                        inc_d += -np.log(np.clip(laplace, 1e-300, 1.0))
                chunk.a = chunk.a + np.where(alive, inc_a, 0.0)
                chunk.d = chunk.d + np.where(alive, inc_d, 0.0)

            for z, times in chunk.hit.items():
                crossed = alive & np.isinf(times) & ((x_old - z) * (x_new - z) <= 0)
                if crossed.any():
                    times[crossed] = t
                    chunk.hit_a[z][crossed] = chunk.a[crossed]
                    chunk.hit_d[z][crossed] = chunk.d[crossed]
            for (a, b), times in chunk.exit_time.items():
                leaving = alive & np.isinf(times) & ((x_new <= a) | (x_new >= b))
                if leaving.any():
                    times[leaving] = t
                    chunk.exit_state[(a, b)][leaving] = np.where(x_new[leaving] <= a, a, b)
                    chunk.exit_a[(a, b)][leaving] = chunk.a[leaving]
                    chunk.exit_d[(a, b)][leaving] = chunk.d[leaving]
            for (y, z), last in chunk.last.items():
                before = alive & (np.isinf(chunk.hit[z]) | (chunk.hit[z] == t))
                crossing = before & ((x_old - y) * (x_new - y) <= 0)
                last[crossing] = t

            absorbed_now = alive & (low | high)
            if absorbed_now.any():
                chunk.final_time[absorbed_now] = t
                chunk.absorbed[absorbed_now & low] = -1
                chunk.absorbed[absorbed_now & high] = 1
                chunk.alive = alive & ~absorbed_now
            chunk.x, chunk.u = x_new, u_new

        while cp_index < cp_steps.size and cp_steps[cp_index] <= step:
            chunk.states[:, cp_index] = chunk.x
            chunk.pcaf[:, cp_index] = chunk.a
            chunk.discount[:, cp_index] = chunk.d
            cp_index += 1
        if not chunk.alive.any() and cp_index >= cp_steps.size:
            break
    while cp_index < cp_steps.size:
        chunk.states[:, cp_index] = chunk.x
        chunk.pcaf[:, cp_index] = chunk.a
        chunk.discount[:, cp_index] = chunk.d
        cp_index += 1
    # intervals not left by the horizon are stopped there
    for iv, times in chunk.exit_time.items():
        pending = np.isinf(times)
        chunk.exit_state[iv][pending] = chunk.x[pending]
        chunk.exit_a[iv][pending] = chunk.a[pending]
        chunk.exit_d[iv][pending] = chunk.d[pending]
    for (y, z), last in chunk.last.items():
        last[np.isinf(chunk.hit[z])] = np.nan


def simulate(
    spec: DiffusionSpec,
    x0: float,
    config: SimConfig,
    mu_A: Optional[RadonMeasure] = None,
) -> PathEnsemble:
    """
    Simulate ``config.n_paths`` paths from x0.

    Chunks of ``config.chunk_size`` paths draw from independent generators
    spawned from ``config.seed``, so identical configs give identical
    ensembles.

    Raises:
        UnsupportedSpecError: If s or m cannot be turned into an SDE for s(X)
        UnsupportedMeasureError: If mu_A has no evaluable density against m
    """
    tables = _Tables(spec, x0, config, mu_A)
    mu_present = mu_A is not None and not mu_A.is_zero()
    resolution_flag = False
    if mu_present and config.local_time is LocalTimeEstimator.OCCUPATION and tables.atoms:
        if config.dt > config.epsilon_lt**2:
            resolution_flag = True
            logger.warning(f"dt={config.dt} exceeds (band width)^2 / 4 = {config.epsilon_lt ** 2}")
    levels = config.all_levels()
    u0 = float(spec.scale(x0))
    sizes = [config.chunk_size] * (config.n_paths // config.chunk_size)
    if config.n_paths % config.chunk_size:
        sizes.append(config.n_paths % config.chunk_size)
    streams = np.random.SeedSequence(config.seed).spawn(len(sizes))
    chunks: List[_Chunk] = []
    for k, (n, stream) in enumerate(zip(sizes, streams)):
        chunk = _Chunk(n, x0, u0, config, levels)
        _advance(chunk, tables, config, np.random.default_rng(stream), mu_present)
        chunks.append(chunk)
        logger.debug(f"chunk {k + 1}/{len(sizes)} of {spec.name} done ({n} paths)")

    def cat(get: Callable[[_Chunk], np.ndarray]) -> np.ndarray:
        out = np.concatenate([get(c) for c in chunks])
        out.setflags(write=False)
        return out

    exits = {
        iv: ExitRecord(
            time=cat(lambda c, iv=iv: c.exit_time[iv]),
            state=cat(lambda c, iv=iv: c.exit_state[iv]),
            pcaf=cat(lambda c, iv=iv: c.exit_a[iv]),
            discount=cat(lambda c, iv=iv: c.exit_d[iv]),
        )
        for iv in config.intervals
    }
    ensemble = PathEnsemble(
        spec=spec,
        x0=x0,
        config=config,
        mu_label=(mu_A.label or mu_A.describe()) if mu_A is not None else "",
        has_pcaf=mu_present,
        times=config.checkpoint_times(),
        states=cat(lambda c: c.states),
        pcaf=cat(lambda c: c.pcaf),
        discount=cat(lambda c: c.discount),
        final_time=cat(lambda c: c.final_time),
        absorbed=cat(lambda c: c.absorbed),
        hitting={z: cat(lambda c, z=z: c.hit[z]) for z in levels},
        hitting_pcaf={z: cat(lambda c, z=z: c.hit_a[z]) for z in levels},
        hitting_discount={z: cat(lambda c, z=z: c.hit_d[z]) for z in levels},
        exits=exits,
        last_passage={pair: cat(lambda c, pair=pair: c.last[pair]) for pair in config.last_passage},
        truncation=(tables.lo, tables.hi),
        surrogate=tables.surrogate,
        resolution_flag=resolution_flag,
    )
    logger.info(
        f"Simulated {config.n_paths} paths of {spec.name} from {x0} "
        f"({int(np.sum(ensemble.absorbed != 0))} absorbed at the truncation)"
    )
    return ensemble


def accumulate_pcaf(ensemble: PathEnsemble, mu_A: RadonMeasure, spec: Optional[DiffusionSpec] = None) -> PathEnsemble:
    """
    The same paths with the additive functional of mu_A recorded.

    The paths are regenerated from the ensemble's seed, so states and hitting
    times are bit-identical to the input.
    """
    spec = spec or ensemble.spec
    if spec.name != ensemble.spec.name:
        raise PreconditionError(f"ensemble was simulated for {ensemble.spec.name}, not {spec.name}")
    return simulate(spec, ensemble.x0, ensemble.config, mu_A)


class Estimate(BaseModel):
    """A Monte Carlo estimate against its prediction."""

    model_config = ConfigDict(frozen=True)

    label: str
    value: float
    standard_error: float
    target: float
    n: int

    @classmethod
    def of(cls, label: str, samples: np.ndarray, target: float) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(label=label, value=float(np.mean(samples)), standard_error=se, target=float(target), n=n)

    @property
    def deviation_se(self) -> float:
        gap = abs(self.value - self.target)
        if self.standard_error > 0:
            return gap / self.standard_error
        return 0.0 if gap <= 1e-12 * max(1.0, abs(self.target)) else math.inf

    def within(self, k: float) -> bool:
        return self.deviation_se < k

    def describe(self) -> str:
        return (
            f"{self.label}: {self.value:.6g} ± {self.standard_error:.3g} "
            f"(target {self.target:.6g}, {self.deviation_se:.2f} SE, n={self.n})"
        )


class MartingaleReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    interval: Interval
    g0: float
    rows: List[Estimate]
    exited_fraction: float
    bounded: bool

    @property
    def max_deviation_se(self) -> float:
        return max(row.deviation_se for row in self.rows)

    def describe(self) -> str:
        lines = [row.describe() for row in self.rows]
        lines.append(f"exited (a, b) = {self.interval} before the horizon: {self.exited_fraction:.3%}")
        lines.append(f"pathwise bound g(X)e^-A <= max(g(a), g(b)): {'holds' if self.bounded else 'VIOLATED'}")
        return "\n".join(lines)


def check_iw_martingale(ensemble: PathEnsemble, g: Function, a: float, b: float) -> MartingaleReport:
    """
    Compare E[g(X_{t∧T_ab}) e^{-A_{t∧T_ab}}] at each checkpoint, and at
    T_ab ∧ horizon, with g(x0).
    """
    record = ensemble.exit_record(a, b)
    g0 = float(g(ensemble.x0))
    g_a, g_b = float(g(a)), float(g(b))
    bound = max(g_a, g_b) * (1.0 + 1e-9)
    rows: List[Estimate] = []
    bounded = True
    for k, t in enumerate(ensemble.times):
        stopped = record.time <= t + 1e-12
        x = np.where(stopped, record.state, ensemble.states[:, k])
        d = np.where(stopped, record.discount, ensemble.discount[:, k])
        values = np.asarray(g(x), dtype=float) * np.exp(-d)
        bounded = bounded and bool(np.all(values <= bound))
        rows.append(Estimate.of(f"t = {t:.4g}", values, g0))
    values = np.asarray(g(record.state), dtype=float) * np.exp(-record.discount)
    rows.append(Estimate.of("T_ab ∧ horizon", values, g0))
    return MartingaleReport(
        interval=(a, b),
        g0=g0,
        rows=rows,
        exited_fraction=float(np.mean(record.exited)),
        bounded=bounded,
    )


class LastPassageReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    y: float
    z: float
    probability: Estimate
    lhs: float
    rhs: float
    lhs_se: float

    @property
    def deviation_se(self) -> float:
        return self.probability.deviation_se

    def describe(self) -> str:
        return (
            f"(s(z) - s(y)) P(T_z < T_end, no crossing of y) = {self.lhs:.6g} ± {self.lhs_se:.3g}; "
            f"(s(x0) - s(y))+ = {self.rhs:.6g} ({self.deviation_se:.2f} SE)"
        )


def check_last_passage(ensemble: PathEnsemble, y: float, z: float, x0: Optional[float] = None) -> LastPassageReport:
    """
    (s(z) - s(y)) P^x(T_z < T_l, Λ^{y,z} = 0) against (s(x) - s(y))⁺ for z above x ∨ y,
    mirrored when z lies below. Λ^{y,z} = 0 means no crossing of y before T_z.
    """
    if y == z:
        raise PreconditionError("last passage needs y != z")
    x0 = ensemble.x0 if x0 is None else x0
    if x0 != ensemble.x0:
        raise PreconditionError(f"ensemble starts at {ensemble.x0}, not {x0}")
    scale = ensemble.spec.scale
    sy, sz, sx = float(scale(y)), float(scale(z)), float(scale(x0))
    t_z = ensemble.hitting_time(z)
    t_y = ensemble.hitting_time(y)
    upward = z > y
    if upward and not z > max(x0, y) or not upward and not z < min(x0, y):
        raise PreconditionError(f"z={z} must lie beyond both x0={x0} and y={y}")
    event = np.isfinite(t_z) & (t_z < t_y)
    if (upward and x0 <= y) or (not upward and x0 >= y):
        event = np.zeros_like(event)
    width = abs(sz - sy)
    rhs = max(sx - sy, 0.0) if upward else max(sy - sx, 0.0)
    probability = Estimate.of("P(T_z first, no crossing of y)", event.astype(float), rhs / width)
    return LastPassageReport(
        y=y,
        z=z,
        probability=probability,
        lhs=width * probability.value,
        rhs=rhs,
        lhs_se=width * probability.standard_error,
    )


class VanishingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    applicable: bool
    reason: str = ""
    times: List[float] = Field(default_factory=list)
    medians: List[float] = Field(default_factory=list)
    upper_quantiles: List[float] = Field(default_factory=list)
    decreasing: Optional[bool] = None

    def describe(self) -> str:
        if not self.applicable:
            return f"not applicable: {self.reason}"
        rows = [
            f"t = {t:.4g}: median {m:.4g}, 90% quantile {q:.4g}"
            for t, m, q in zip(self.times, self.medians, self.upper_quantiles)
        ]
        rows.append(f"decreasing toward 0: {'yes' if self.decreasing else 'NO'}")
        return "\n".join(rows)


def check_vanishing(ensemble: PathEnsemble, g: Function) -> VanishingReport:
    """Quantiles of g(X_t) e^{-A_t} along the checkpoints of a recurrent diffusion."""
    if is_transient(ensemble.spec).transient:
        return VanishingReport(applicable=False, reason=f"{ensemble.spec.name} is transient")
    if not ensemble.has_pcaf:
        return VanishingReport(applicable=False, reason="the additive functional vanishes, no decay is expected")
    values = np.asarray(g(ensemble.states), dtype=float) * np.exp(-ensemble.discount)
    medians = np.median(values, axis=0)
    upper = np.quantile(values, 0.9, axis=0)
    decreasing = bool(medians[-1] < 0.5 * medians[0] and np.all(np.diff(upper) <= 1e-12 * max(1.0, upper[0])))
    return VanishingReport(
        applicable=True,
        times=[float(t) for t in ensemble.times],
        medians=[float(m) for m in medians],
        upper_quantiles=[float(q) for q in upper],
        decreasing=decreasing,
    )


class Functional(BaseModel):
    """
    Path functional F evaluated at a stopping time T.

    ``hit_before``: F = 1{T_x < T_w, T_x <= horizon}, T = T_x ∧ T_w ∧ horizon.
    ``one``: F = 1 with T = horizon ∧ T_ab for ``interval`` = (a, b).
    """

    model_config = ConfigDict(frozen=True)

    kind: str
    x: Optional[float] = None
    w: Optional[float] = None
    interval: Optional[Interval] = None

    @model_validator(mode="after")
    def _check(self) -> "Functional":
        if self.kind == "hit_before" and (self.x is None or self.w is None):
            raise ValueError("hit_before needs x and w")
        if self.kind == "one" and self.interval is None:
            raise ValueError("the constant functional needs an interval")
        if self.kind not in ("hit_before", "one"):
            raise ValueError(f"Unknown functional: {self.kind}")
        return self

    def events(self) -> Dict[str, Any]:
        if self.kind == "hit_before":
            return {"levels": [self.x, self.w]}
        return {"intervals": [self.interval]}


class MeasureChangeReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    functional: Functional
    direct: Estimate
    reweighted: Estimate
    prediction: Optional[float] = None

    @property
    def deviation_se(self) -> float:
        se = math.hypot(self.direct.standard_error, self.reweighted.standard_error)
        gap = abs(self.direct.value - self.reweighted.value)
        return gap / se if se > 0 else (0.0 if gap == 0 else math.inf)

    def describe(self) -> str:
        text = f"{self.direct.describe()}\n{self.reweighted.describe()}\nagreement: {self.deviation_se:.2f} SE"
        if self.prediction is not None:
            text += f"\nanalytic value: {self.prediction:.6g}"
        return text


def _with_events(config: SimConfig, functional: Functional) -> SimConfig:
    events = functional.events()
    update: Dict[str, Any] = {}
    if "levels" in events:
        update["levels"] = sorted(set(config.levels) | set(events["levels"]))
    if "intervals" in events:
        update["intervals"] = list(dict.fromkeys(list(config.intervals) + events["intervals"]))
    return config.model_copy(update=update)


def _functional_values(ensemble: PathEnsemble, functional: Functional) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(F, X_T, discount at T) per path."""
    if functional.kind == "hit_before":
        assert functional.x is not None and functional.w is not None
        t_x = ensemble.hitting_time(functional.x)
        t_w = ensemble.hitting_time(functional.w)
        indicator = np.isfinite(t_x) & (t_x < t_w)
        x_T = np.where(indicator, functional.x, ensemble.states[:, -1])
        d_T = np.where(indicator, ensemble.hitting_discount[functional.x], ensemble.discount[:, -1])
        return indicator.astype(float), x_T, d_T
    assert functional.interval is not None
    record = ensemble.exit_record(*functional.interval)
    return np.ones(ensemble.n_paths), record.state, record.discount


def compare_measure_change(
    t: TransformedDiffusion,
    mu_A: RadonMeasure,
    x0: float,
    functional: Functional,
    config: SimConfig,
) -> MeasureChangeReport:
    """
    E_Q[F] by direct simulation of the transformed diffusion and by
    reweighting base paths with g(X_T) e^{-A_T} / g(x0).
    """
    cfg = _with_events(config, functional)
    direct_paths = simulate(t.spec_Q, x0, cfg)
    base_paths = simulate(t.base, x0, cfg.model_copy(update={"seed": cfg.seed + 1}), mu_A)
    f_q, _, _ = _functional_values(direct_paths, functional)
    f_p, x_T, d_T = _functional_values(base_paths, functional)
    weights = likelihood_ratio(t.g, d_T, x0, x_T)
    prediction: Optional[float] = None
    if functional.kind == "hit_before":
        assert functional.x is not None and functional.w is not None
        s = t.scale
        sx, sw, s0 = float(s(functional.x)), float(s(functional.w)), float(s(x0))
        prediction = (sw - s0) / (sw - sx)
    else:
        prediction = 1.0
    target = prediction
    return MeasureChangeReport(
        functional=functional,
        direct=Estimate.of("direct under Q", f_q, target),
        reweighted=Estimate.of("reweighted base paths", f_p * weights, target),
        prediction=prediction,
    )


def calibrate_local_time(
    spec: DiffusionSpec, x0: float, y: float, a: float, b: float, config: SimConfig
) -> Estimate:
    """E^x[L̂^y_{T_ab}] against the Green kernel u_ab(x, y)."""
    atom = RadonMeasure.from_atoms([(y, 1.0)], spec.lower, spec.upper)
    cfg = config.model_copy(update={"intervals": list(dict.fromkeys(list(config.intervals) + [(a, b)]))})
    ensemble = simulate(spec, x0, cfg, atom)
    record = ensemble.exit_record(a, b)
    if not np.all(record.exited):
        logger.warning(f"{int(np.sum(~record.exited))} paths did not leave ({a}, {b}) by the horizon")
    return Estimate.of(f"L^{y:g} up to T_({a:g},{b:g})", record.pcaf, green_kernel(spec, a, b, x0, y))


def check_natural_representation(
    spec: DiffusionSpec,
    mu_A: RadonMeasure,
    g: Function,
    c: float,
    alpha: float,
    x: float,
    config: SimConfig,
) -> Estimate:
    """g(x) = alpha E^x[1{T_c < T_l} e^{-A_{T_c}}] for x < c."""
    if not x < c:
        raise PreconditionError(f"x={x} must lie below c={c}")
    cfg = config.model_copy(update={"levels": sorted(set(config.levels) | {c})})
    ensemble = simulate(spec, x, cfg, mu_A)
    t_c = ensemble.hitting_time(c)
    samples = alpha * np.where(np.isfinite(t_c), np.exp(-ensemble.hitting_discount[c]), 0.0)
    return Estimate.of(f"alpha E[e^-A at T_{c:g}]", samples, float(g(x)))


class LocalTimeLawReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    y: float
    bound: float
    mean: Estimate
    limit_mean: float
    cv: float

    def describe(self) -> str:
        return (
            f"{self.mean.describe()}\nlimit as the bound recedes: {self.limit_mean:.6g}\n"
            f"coefficient of variation {self.cv:.4g} (exponential law: 1)"
        )


def check_local_time_law(t: TransformedDiffusion, y: float, config: SimConfig, bound: float) -> LocalTimeLawReport:
    """
    Total local time of X at y under Q^y, killed at ``bound`` on the side
    where s_g is finite and at the config's truncation on the other side.
    Its mean is compared with 2 u(y, y) / s_g'(y) for the process killed at
    both ends and its coefficient of variation with 1.
    """
    spec_Q = t.spec_Q
    sl, sr = t.limits
    if math.isfinite(sr) and bound > y:
        truncation = (config.truncation[0] if config.truncation else spec_Q.lower, bound)
    elif math.isfinite(sl) and bound < y:
        truncation = (bound, config.truncation[1] if config.truncation else spec_Q.upper)
    else:
        raise PreconditionError(f"bound={bound} must lie on a side where s_g is finite")
    if not all(math.isfinite(v) for v in truncation):
        raise PreconditionError("the opposite truncation bound must be given for an infinite interval")
    # killed at both truncation ends, like the paths
    lo, hi = max(truncation[0], spec_Q.lower), min(truncation[1], spec_Q.upper)
    atom = RadonMeasure.from_atoms([(y, 1.0)], spec_Q.lower, spec_Q.upper)
    cfg = config.model_copy(update={"truncation": truncation})
    ensemble = simulate(spec_Q, y, cfg, atom)
    slope = scale_slopes(t, y).right
    samples = 2.0 * ensemble.pcaf[:, -1] / slope
    predicted = 2.0 * killed_potential_density(spec_Q, y, y, lo, hi) / slope
    mean = Estimate.of(f"local time at {y:g} (killed at {bound:g})", samples, predicted)
    cv = float(np.std(samples, ddof=1) / np.mean(samples)) if np.mean(samples) > 0 else math.inf
    still_running = int(np.sum(ensemble.absorbed == 0))
    if still_running:
        logger.warning(f"{still_running} paths were not absorbed by the horizon")
    return LocalTimeLawReport(y=y, bound=bound, mean=mean, limit_mean=q_local_time_mean(t, y), cv=cv)


def summary_table(ensemble: PathEnsemble) -> List[Dict[str, float]]:
    """One row per path: final time and state, A, absorption side and recorded hitting times."""
    rows: List[Dict[str, float]] = []
    levels = sorted(ensemble.hitting)
    for i in range(ensemble.n_paths):
        row: Dict[str, float] = {
            "path": float(i),
            "final_time": float(ensemble.final_time[i]),
            "final_state": float(ensemble.states[i, -1]),
            "pcaf": float(ensemble.pcaf[i, -1]),
            "absorbed": float(ensemble.absorbed[i]),
        }
        for z in levels:
            row[f"T_{z:g}"] = float(ensemble.hitting[z][i])
        rows.append(row)
    return rows
