"""Simple random walk, local times, clock processes and the trapped-walk
time change.

The clock after n steps is the sum of the random visit durations along the
first n steps; the continuous-time walk holds its position between
consecutive clock values.  The same object can be built site-by-site from
an atomic trap measure, and the two constructions agree exactly on shared
draws, which is one of the main consistency checks of the package.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ._kernels import active as _kern
from .measures import AtomicTrapMeasure, TrapDistribution
from .variates import pm1

__all__ = [
    "WalkPath",
    "LocalTimeField",
    "ClockProcess",
    "Trajectory",
    "simulate_srw",
    "local_time",
    "clock_process",
    "clock_process_with_measure",
    "trw_trajectory",
    "trap_measure_from_draws",
    "trap_measure_functional",
    "rescale_trajectory",
    "LazyLandscape",
    "simulate_rtrw",
]


@dataclass(frozen=True)
class WalkPath:
    """Nearest-neighbour path on Z started at the origin."""

    steps: np.ndarray  # positions Z_0..Z_n

    def __post_init__(self):
        z = np.asarray(self.steps, dtype=np.int64)
        if z.size == 0 or z[0] != 0:
            raise ValueError("paths start at the origin")
        if z.size > 1 and np.any(np.abs(np.diff(z)) != 1):
            raise ValueError("steps must be +-1")
        object.__setattr__(self, "steps", z)

    @property
    def n_steps(self) -> int:
        return self.steps.size - 1


@dataclass(frozen=True)
class LocalTimeField:
    """Visit counts L(x, n) of a walk up to and including step n."""

    counts: dict
    horizon: int

    def __getitem__(self, x: int) -> int:
        return self.counts.get(x, 0)

    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class ClockProcess:
    """Cumulative real time S(0)=0, S(1), ..., S(n) after each walk step."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.size == 0 or t[0] != 0.0:
            raise ValueError("clock starts at 0")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("clock must be strictly increasing")
        object.__setattr__(self, "times", t)


@dataclass(frozen=True)
class Trajectory:
    """Right-continuous step function: value positions[k] on
    [times[k], times[k+1]); defined for 0 <= t < t_end."""

    times: np.ndarray
    positions: np.ndarray
    t_end: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        x = np.asarray(self.positions, dtype=np.float64)
        if t.size != x.size or t.size == 0:
            raise ValueError("times and positions must align and be nonempty")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("jump times must be strictly increasing")
        if self.t_end < t[-1]:
            raise ValueError("t_end must not precede the last jump")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)

    def value_at(self, t) -> np.ndarray | float:
        tt = np.asarray(t, dtype=np.float64)
        if np.any(tt < self.times[0]) or np.any(tt >= self.t_end):
            raise ValueError(f"evaluation outside [0, {self.t_end})")
        idx = np.searchsorted(self.times, tt, side="right") - 1
        out = self.positions[idx]
        return out if tt.ndim else float(out)

    @property
    def n_jumps(self) -> int:
        return self.times.size


def simulate_srw(n_steps: int, gen: np.random.Generator) -> WalkPath:
    """Simple symmetric walk on Z: n_steps fair independent +-1 moves."""
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    path = np.zeros(n_steps + 1, dtype=np.int64)
    if n_steps:
        path[1:] = np.cumsum(pm1(gen.random(n_steps)))
    return WalkPath(path)


def local_time(path: WalkPath, horizon: int) -> LocalTimeField:
    """Visit counts through step ``horizon`` (inclusive); sums to horizon+1."""
    if horizon > path.n_steps:
        raise ValueError("horizon exceeds the simulated path")
    counts = Counter(path.steps[: horizon + 1].tolist())
    return LocalTimeField(dict(counts), horizon)


def _draw_visit_durations(path: WalkPath, landscape, gen: np.random.Generator):
    """One fresh duration per step k at site Z_k, with visit bookkeeping."""
    n = path.n_steps
    durations = np.empty(n)
    visit_index: Counter = Counter()
    draws: dict = {}
    for k in range(n):
        x = int(path.steps[k])
        try:
            dist = landscape[x]
        except KeyError:
            raise KeyError(f"landscape does not cover visited site {x}") from None
        s = dist.sample(gen)
        visit_index[x] += 1
        draws[(x, visit_index[x])] = s
        durations[k] = s
    return durations, draws


def clock_process_with_measure(path: WalkPath, landscape,
                               gen: np.random.Generator):
    """Clock process and the trap measure built from the same draws."""
    durations, draws = _draw_visit_durations(path, landscape, gen)
    times = np.zeros(path.n_steps + 1)
    if durations.size:
        times[1:] = _kern.kahan_cumsum(durations)
    return ClockProcess(times), trap_measure_from_draws(draws)


def clock_process(path: WalkPath, landscape, gen: np.random.Generator) -> ClockProcess:
    clock, _ = clock_process_with_measure(path, landscape, gen)
    return clock


def trw_trajectory(path: WalkPath, clock: ClockProcess) -> Trajectory:
    """Time-changed walk: position Z_k on [S(k), S(k+1))."""
    if clock.times.size != path.steps.size:
        raise ValueError("clock and path lengths must agree")
    return Trajectory(times=clock.times, positions=path.steps.astype(np.float64),
                      t_end=float(clock.times[-1]))


def trap_measure_from_draws(draws) -> AtomicTrapMeasure:
    mu = AtomicTrapMeasure()
    items = draws.items() if isinstance(draws, Mapping) else draws
    for (x, i), s in items:
        mu.add(x, i, s)
    return mu


def trap_measure_functional(mu: AtomicTrapMeasure, lt: LocalTimeField) -> float:
    """mu(U_L): total mass at (x, i) with i <= L(x), i.e. the clock value."""
    total = 0.0
    comp = 0.0
    for x in sorted(lt.counts):
        lx = lt.counts[x]
        for i in range(1, lx + 1):
            s = mu.masses.get((x, i))
            if s is None:
                continue
            y = s - comp
            t = total + y
            comp = (t - total) - y
            total = t
    return total


def rescale_trajectory(traj: Trajectory, eps: float, rho: float) -> Trajectory:
    """Diffusive-type rescaling: space multiplied by eps, jump times by rho."""
    if eps <= 0.0 or rho <= 0.0:
        raise ValueError("scales must be positive")
    return Trajectory(times=traj.times * rho, positions=traj.positions * eps,
                      t_end=traj.t_end * rho)


class LazyLandscape:
    """Quenched landscape drawn lazily at first access, cached per realization.

    ``factory(x, gen)`` draws the environment at site x; the draw order is
    the first-access order, so a fixed walk and seed reproduce the same
    landscape bit for bit.
    """

    def __init__(self, factory: Callable[[int, np.random.Generator], TrapDistribution],
                 gen_env: np.random.Generator):
        self._factory = factory
        self._gen = gen_env
        self._cache: dict[int, TrapDistribution] = {}

    def __getitem__(self, x: int) -> TrapDistribution:
        if x not in self._cache:
            self._cache[x] = self._factory(x, self._gen)
        return self._cache[x]

    def realized_sites(self) -> dict:
        return dict(self._cache)


def simulate_rtrw(model, *, n_steps: int | None = None,
                  t_horizon: float | None = None,
                  gen_walk: np.random.Generator,
                  gen_env: np.random.Generator,
                  chunk_steps: int = 4096,
                  max_total_steps: int = 1 << 30) -> Trajectory:
    """Run one RTRW realization: fresh landscape, then clock + time change.

    Models with a dedicated driver (``simulate_rtrw`` attribute) are
    delegated to; otherwise ``model`` must provide ``landscape_factory()``
    and the generic chunked loop below is used.  Exactly one of ``n_steps``
    and ``t_horizon`` must be given; time-horizon requests extend the walk
    in chunks until the clock passes the target.
    """
    if (n_steps is None) == (t_horizon is None):
        raise ValueError("specify exactly one of n_steps and t_horizon")
    if hasattr(model, "simulate_rtrw"):
        return model.simulate_rtrw(n_steps=n_steps, t_horizon=t_horizon,
                                   gen_walk=gen_walk, gen_env=gen_env)

    landscape = LazyLandscape(model.landscape_factory(), gen_env)
    positions = [np.zeros(1, dtype=np.int64)]
    durations: list[np.ndarray] = []
    visit_index: Counter = Counter()
    total = 0
    clock_last = 0.0
    comp = 0.0
    target = n_steps if n_steps is not None else None

    while True:
        if target is not None:
            todo = target - total
        else:
            todo = chunk_steps
        if todo <= 0:
            break
        todo = min(todo, chunk_steps)
        pos0 = positions[-1][-1]
        segment = pos0 + np.cumsum(pm1(gen_walk.random(todo)))
        sites = np.concatenate([[pos0], segment[:-1]])
        dur = np.empty(todo)
        for j, x in enumerate(sites):
            xi = int(x)
            dist = landscape[xi]
            s = dist.sample(gen_walk)
            visit_index[xi] += 1
            dur[j] = s
        positions.append(segment.astype(np.int64))
        durations.append(dur)
        # compensated continuation of the clock across chunks
        for s in dur:
            y = s - comp
            t = clock_last + y
            comp = (t - clock_last) - y
            clock_last = t
        total += todo
        if target is None and clock_last > t_horizon:
            break
        if total >= max_total_steps:
            raise RuntimeError(
                f"horizon {t_horizon} not reached after {total} steps; "
                "raise max_total_steps to extend")

    path = WalkPath(np.concatenate(positions))
    alldur = np.concatenate(durations) if durations else np.empty(0)
    times = np.zeros(total + 1)
    if alldur.size:
        times[1:] = _kern.kahan_cumsum(alldur)
    return trw_trajectory(path, ClockProcess(times))
