"""Direct samplers for the scaling-limit processes, all realized as time
changes of one Brownian driver.

The driver is discretized on a grid of step ``dt`` and its local time is
binned at width ``h`` (defaults dt = 1e-4 T, h = sqrt(dt)).  A clock
functional phi accumulates along the path; the process observed at time t
is the driver parked at the step where phi first exceeds t.  Fractional
kinetics uses an independent stable clock, the Fontes-Isopi-Newman
diffusion a heavy-tailed atomic speed measure, spatially subordinated
Brownian motions run an independent subordinator on each atom's local-time
clock, and the mixture adds a stable clock on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma_fn

from .measures import LaplaceExponent, PointMass, sample_stable_increments
from .walk import Trajectory

__all__ = [
    "BrownianGridPath",
    "LocalTimeEstimate",
    "TimeChange",
    "sample_bm",
    "bm_local_time",
    "sample_fk",
    "sample_fin",
    "sample_ssbm",
    "sample_fk_ssbm_mixture",
    "speed_measure_time_change",
    "ssbm_mass_check",
    "SSBMFamily",
    "FinFamily",
    "PoissonianFamily",
    "ZeroFamily",
    "MassCheckReport",
]


def default_grid(T: float, dt: float | None, h: float | None) -> tuple[float, float]:
    dt = 1e-4 * T if dt is None else dt
    h = math.sqrt(dt) if h is None else h
    if dt <= 0 or h <= 0:
        raise ValueError("grid steps must be positive")
    return dt, h


@dataclass(frozen=True)
class BrownianGridPath:
    """Brownian motion sampled on a uniform grid: values[k] = B(k dt)."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size == 0 or v[0] != 0.0:
            raise ValueError("Brownian paths start at 0")
        object.__setattr__(self, "values", v)

    @property
    def t_end(self) -> float:
        return self.dt * (self.values.size - 1)


@dataclass(frozen=True)
class LocalTimeEstimate:
    """Binned local time: ell(x, t) ~ occupation(bin of x, t) / h."""

    h: float
    times: np.ndarray
    occupations: dict  # bin index -> occupation time at each requested time

    def ell(self, x: float, time_index: int = -1) -> float:
        b = math.floor(x / self.h)
        occ = self.occupations.get(b)
        return 0.0 if occ is None else float(occ[time_index]) / self.h

    def total_occupation(self, time_index: int = -1) -> float:
        return float(sum(occ[time_index] for occ in self.occupations.values()))


@dataclass(frozen=True)
class TimeChange:
    """Nondecreasing clock on a grid plus its right-continuous inverse."""

    s_grid: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=np.float64)
        p = np.asarray(self.phi, dtype=np.float64)
        if s.size != p.size:
            raise ValueError("grid and clock must align")
        if np.any(np.diff(p) < 0.0):
            raise ValueError("the clock must be nondecreasing")
        object.__setattr__(self, "s_grid", s)
        object.__setattr__(self, "phi", p)

    def psi(self, t) -> np.ndarray | float:
        """inf{s : phi(s) > t} on the grid."""
        tt = np.asarray(t, dtype=np.float64)
        if np.any(tt >= self.phi[-1]):
            raise ValueError("inverse requested beyond the simulated clock range")
        idx = np.searchsorted(self.phi, tt, side="right")
        out = self.s_grid[idx]
        return out if tt.ndim else float(out)


def sample_bm(T: float, dt: float | None, gen: np.random.Generator) -> BrownianGridPath:
    """Standard Brownian motion on [0, T] with grid step dt."""
    dt, _ = default_grid(T, dt, 1.0)
    n = int(round(T / dt))
    vals = np.zeros(n + 1)
    if n:
        vals[1:] = np.cumsum(math.sqrt(dt) * gen.standard_normal(n))
    return BrownianGridPath(dt=dt, values=vals)


def bm_local_time(path: BrownianGridPath, h: float, at_times=None) -> LocalTimeEstimate:
    """Occupation-binned local time of a grid Brownian path.

    Satisfies sum_bins ell_hat(x, t) h = t exactly by construction.
    ``at_times`` must be sorted.
    """
    if h <= 0:
        raise ValueError("bin width must be positive")
    if at_times is None:
        at_times = np.array([path.t_end])
    at_times = np.asarray(at_times, dtype=np.float64)
    if np.any(np.diff(at_times) < 0.0):
        raise ValueError("requested times must be sorted")
    steps = np.asarray(np.floor(path.values[:-1] / h), dtype=np.int64)
    cuts = np.clip(np.round(at_times / path.dt).astype(np.int64), 0, steps.size)
    occupations: dict[int, np.ndarray] = {}
    running: dict[int, int] = {}
    prev = 0
    for j, k in enumerate(cuts):
        if k > prev:
            seg_bins, seg_counts = np.unique(steps[prev:k], return_counts=True)
            for b, c in zip(seg_bins, seg_counts):
                running[int(b)] = running.get(int(b), 0) + int(c)
            prev = int(k)
        for b, c in running.items():
            if b not in occupations:
                occupations[b] = np.zeros(at_times.size)
            occupations[b][j] = c * path.dt
    return LocalTimeEstimate(h=h, times=at_times, occupations=occupations)


# ---------------------------------------------------------------------------
# Fractional Kinetics
# ---------------------------------------------------------------------------


def sample_fk(gamma: float, T: float, dt: float | None,
              gen_bm: np.random.Generator, gen_sub: np.random.Generator,
              t_grid=None, scale: float = 1.0) -> Trajectory:
    """B time-changed by the inverse of an independent stable subordinator
    with Laplace exponent scale * lambda^gamma."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("stable index must lie in (0,1)")
    dt, _ = default_grid(T, dt, 1.0)
    if t_grid is None:
        t_grid = np.linspace(0.0, T, 257)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    t_max = float(t_grid[-1])

    b_start_parts = []
    v_after_parts = []
    b_last = 0.0
    v_last = 0.0
    # E[inverse clock at t] = t^gamma / (scale Gamma(1+gamma)) sets the block
    mean_span = t_max**gamma / (scale * float(_gamma_fn(1.0 + gamma)))
    block = max(256, int(1.5 * mean_span / dt) + 64)
    while v_last <= t_max:
        v_inc = sample_stable_increments(gamma, scale, dt, block, gen_sub)
        z = gen_bm.standard_normal(block)
        b_seg = b_last + np.cumsum(math.sqrt(dt) * z)
        b_start = np.concatenate([[b_last], b_seg[:-1]])
        v_after = v_last + np.cumsum(v_inc)
        b_start_parts.append(b_start)
        v_after_parts.append(v_after)
        b_last = float(b_seg[-1])
        v_last = float(v_after[-1])
        block = max(1024, block // 8)
    b_start = np.concatenate(b_start_parts)
    v_after = np.concatenate(v_after_parts)
    idx = np.searchsorted(v_after, t_grid, side="right")
    positions = b_start[idx]
    return Trajectory(times=t_grid, positions=positions,
                      t_end=float(t_grid[-1]) + (t_grid[-1] - t_grid[-2] if t_grid.size > 1 else 1.0))


# ---------------------------------------------------------------------------
# Atom families for SSBM-type processes
# ---------------------------------------------------------------------------


class SSBMFamily:
    """Intensity over (position, Laplace exponent), cutoff-parameterized.

    Atoms carry a heavy coordinate v with density gamma v^(-1-gamma) dv,
    v >= v_min; subclasses map v to the atom's subordinator exponent.
    """

    def __init__(self, gamma: float, v_min: float):
        # gamma >= 1 is allowed so the mass check can probe divergent
        # intensities; the limit-process samplers enforce (0,1) themselves
        if gamma <= 0.0:
            raise ValueError("tail index must be positive")
        if v_min <= 0.0:
            raise ValueError("the atom intensity needs a positive lower cutoff")
        self.gamma = gamma
        self.v_min = v_min

    is_zero = False

    def exponent_for(self, v: float) -> LaplaceExponent:
        raise NotImplementedError

    def draw_atoms(self, x_lo: float, x_hi: float, gen: np.random.Generator,
                   v_lo: float | None = None, v_hi: float | None = None):
        """Atoms in the strip [x_lo, x_hi) x [v_lo, v_hi); defaults to
        [v_min, infinity)."""
        g = self.gamma
        v_lo = self.v_min if v_lo is None else v_lo
        mass_lo = v_lo ** (-g)
        mass_hi = 0.0 if v_hi is None else v_hi ** (-g)
        mu = (x_hi - x_lo) * (mass_lo - mass_hi)
        n = int(gen.poisson(mu))
        xs = gen.uniform(x_lo, x_hi, size=n)
        u = gen.random(n)
        # inverse CDF of gamma v^(-1-g) restricted to [v_lo, v_hi)
        vs = (mass_lo - u * (mass_lo - mass_hi)) ** (-1.0 / g)
        return xs, vs


class FinFamily(SSBMFamily):
    """Linear exponents f_v = v lambda: the FIN speed-measure atoms."""

    def exponent_for(self, v: float) -> LaplaceExponent:
        return LaplaceExponent.linear(v)


class PoissonianFamily(SSBMFamily):
    """sigma-rescaled unit-Poisson exponents f_v(l) = v^g (1 - e^(-l v^(-1-g))),
    the SSBM arising from transparent traps on the critical line."""

    def exponent_for(self, v: float) -> LaplaceExponent:
        g = self.gamma
        return LaplaceExponent.compound_poisson(v**g, PointMass(v ** (-1.0 - g)))


class ZeroFamily(SSBMFamily):
    """No atoms: by convention the time change degenerates to the identity,
    leaving the Brownian driver unchanged."""

    def __init__(self):
        super().__init__(0.5, 1.0)

    is_zero = True

    def draw_atoms(self, x_lo, x_hi, gen, v_lo=None, v_hi=None):
        return np.empty(0), np.empty(0)

    def exponent_for(self, v):
        return LaplaceExponent.zero()


# ---------------------------------------------------------------------------
# Time-changed Brownian engine
# ---------------------------------------------------------------------------


class _Atom:
    __slots__ = ("x", "v", "exponent", "ell")

    def __init__(self, x, v, exponent):
        self.x = x
        self.v = v
        self.exponent = exponent
        self.ell = 0.0


class _TimeChangeEngine:
    """Simulates B and phi jointly until phi passes the horizon.

    phi per step: lebesgue_coeff * dt (absolutely continuous speed part)
    + (dt/h) * (linear atom mass in the current bin)  [FIN / atomic speed]
    + subordinator increments of general atoms in the current bin over
      d ell = dt/h, drawn from gen_sub
    + an independent stable increment over dt when mixing with FK.
    """

    def __init__(self, *, dt, h, gen_bm, gen_sub=None, lebesgue_coeff=0.0,
                 identity_clock=False, stable_mix=None, block=4096):
        self.dt = dt
        self.h = h
        self.gen_bm = gen_bm
        self.gen_sub = gen_sub
        self.lebesgue = lebesgue_coeff
        self.identity_clock = identity_clock
        self.stable_mix = stable_mix  # (gamma, scale) or None
        self.block = block
        self.linear_w: dict[int, float] = {}  # bin -> total linear atom mass
        self.general: dict[int, list[_Atom]] = {}  # bin -> subordinator atoms
        self.b_start_parts: list[np.ndarray] = []
        self.phi_after_parts: list[np.ndarray] = []
        self.b_last = 0.0
        self.phi_last = 0.0
        self.s_steps = 0

    def bin_of(self, x: float) -> int:
        return math.floor(x / self.h)

    def add_linear_atom(self, x: float, v: float) -> None:
        b = self.bin_of(x)
        self.linear_w[b] = self.linear_w.get(b, 0.0) + v

    def add_general_atom(self, x: float, v: float, exponent: LaplaceExponent) -> None:
        self.general.setdefault(self.bin_of(x), []).append(_Atom(x, v, exponent))

    def run_until(self, t_stop: float, range_guard) -> None:
        """Advance until phi > t_stop; range_guard(lo, hi) is called to let
        the environment grow before the driver leaves [lo, hi]."""
        dl = self.dt / self.h
        while self.phi_last <= t_stop:
            lo, hi = range_guard()
            z = self.gen_bm.standard_normal(self.block)
            b_seg = self.b_last + np.cumsum(math.sqrt(self.dt) * z)
            exit_idx = np.nonzero((b_seg < lo + self.h) | (b_seg > hi - self.h))[0]
            if exit_idx.size:
                cut = int(exit_idx[0])
                if cut == 0:
                    # driver at the safe edge: environment must grow first
                    range_guard(force=self.b_last)
                    continue
                b_seg = b_seg[:cut]
            b_start = np.concatenate([[self.b_last], b_seg[:-1]])
            n = b_start.size
            phi_inc = np.zeros(n)
            if self.identity_clock:
                phi_inc += self.dt
            if self.lebesgue:
                phi_inc += self.lebesgue * self.dt
            bins = np.floor(b_start / self.h).astype(np.int64)
            if self.linear_w:
                w = np.fromiter((self.linear_w.get(int(b), 0.0) for b in bins),
                                dtype=np.float64, count=n)
                phi_inc += dl * w
            if self.stable_mix is not None:
                g_mix, c_mix = self.stable_mix
                phi_inc += sample_stable_increments(g_mix, c_mix, self.dt, n,
                                                    self.gen_sub)
            if self.general:
                visited = np.unique(bins)
                for b in visited:
                    atoms = self.general.get(int(b))
                    if not atoms:
                        continue
                    where = np.nonzero(bins == b)[0]
                    for atom in atoms:
                        inc = atom.exponent.sample_increments(dl, where.size,
                                                              self.gen_sub)
                        np.add.at(phi_inc, where, inc)
                        atom.ell += dl * where.size
            phi_after = self.phi_last + np.cumsum(phi_inc)
            self.b_start_parts.append(b_start)
            self.phi_after_parts.append(phi_after)
            self.b_last = float(b_seg[-1])
            self.phi_last = float(phi_after[-1])
            self.s_steps += n

    def evaluate(self, t_grid: np.ndarray) -> np.ndarray:
        b_start = np.concatenate(self.b_start_parts)
        phi_after = np.concatenate(self.phi_after_parts)
        idx = np.searchsorted(phi_after, t_grid, side="right")
        return b_start[idx]

    def time_change(self) -> TimeChange:
        phi_after = np.concatenate(self.phi_after_parts)
        s = self.dt * np.arange(1, phi_after.size + 1)
        return TimeChange(s_grid=s, phi=phi_after)


class _GrowingStripEnv:
    """Doubling spatial window; draws atoms region by region (right half
    first, then left) so the realization is a deterministic function of the
    env stream."""

    def __init__(self, engine, family: SSBMFamily, gen_env, half0: float,
                 linear: bool):
        self.engine = engine
        self.family = family
        self.gen_env = gen_env
        self.lo = 0.0
        self.hi = 0.0
        self.linear = linear
        self.atoms_x: list[float] = []
        self.atoms_v: list[float] = []
        self._grow_to(half0)

    def _add_region(self, x_lo, x_hi):
        xs, vs = self.family.draw_atoms(x_lo, x_hi, self.gen_env)
        for x, v in zip(xs, vs):
            self.atoms_x.append(float(x))
            self.atoms_v.append(float(v))
            if self.linear:
                self.engine.add_linear_atom(float(x), float(v))
            else:
                self.engine.add_general_atom(float(x), float(v),
                                             self.family.exponent_for(float(v)))

    def _grow_to(self, half: float) -> None:
        if half <= self.hi:
            return
        self._add_region(self.hi, half)
        self._add_region(-half, self.lo)
        self.lo, self.hi = -half, half

    def __call__(self, force=None):
        if force is not None:
            self._grow_to(max(abs(force) * 2.0, self.hi * 2.0, 1.0))
        elif abs(self.engine.b_last) > 0.4 * self.hi:
            self._grow_to(self.hi * 2.0)
        return self.lo, self.hi

    def environment(self):
        return np.array(self.atoms_x), np.array(self.atoms_v)


def _finalize(engine, env, t_grid, T, return_environment):
    t_grid = np.linspace(0.0, T, 257) if t_grid is None else np.asarray(t_grid, float)
    positions = engine.evaluate(t_grid)
    step = t_grid[-1] - t_grid[-2] if t_grid.size > 1 else 1.0
    traj = Trajectory(times=t_grid, positions=positions,
                      t_end=float(t_grid[-1]) + step)
    if return_environment:
        return traj, (env.environment() if env is not None else None)
    return traj


def sample_fin(gamma: float, T: float, *, dt: float | None = None,
               h: float | None = None, v_min: float = 1e-3,
               gen_bm: np.random.Generator, gen_env: np.random.Generator,
               t_grid=None, window_half: float = 0.0,
               return_environment: bool = False):
    """FIN diffusion: atomic speed measure sum v_i delta_{x_i} with Poisson
    atoms of intensity gamma v^(-1-gamma) dx dv cut at v_min."""
    dt, h = default_grid(T, dt, h)
    engine = _TimeChangeEngine(dt=dt, h=h, gen_bm=gen_bm)
    half0 = max(window_half, 2.0, 2.0 * math.sqrt(T))
    env = _GrowingStripEnv(engine, FinFamily(gamma, v_min), gen_env, half0,
                           linear=True)
    engine.run_until(T if t_grid is None else float(np.max(t_grid)), env)
    return _finalize(engine, env, t_grid, T, return_environment)


def sample_ssbm(family: SSBMFamily, T: float, *, dt: float | None = None,
                h: float | None = None, gen_bm: np.random.Generator,
                gen_env: np.random.Generator,
                gen_sub: np.random.Generator | None = None,
                t_grid=None, window_half: float = 0.0,
                stable_mix=None, return_environment: bool = False,
                overflow_guard: float = 1e12):
    """Spatially subordinated Brownian motion for the given atom family;
    ``stable_mix=(gamma, scale)`` adds the independent FK clock on top."""
    dt, h = default_grid(T, dt, h)
    engine = _TimeChangeEngine(dt=dt, h=h, gen_bm=gen_bm, gen_sub=gen_sub,
                               identity_clock=family.is_zero and stable_mix is None,
                               stable_mix=stable_mix)
    half0 = max(window_half, 2.0, 2.0 * math.sqrt(T))
    env = _GrowingStripEnv(engine, family, gen_env, half0,
                           linear=isinstance(family, FinFamily))
    t_stop = T if t_grid is None else float(np.max(t_grid))
    engine.run_until(t_stop, env)
    if engine.phi_last > overflow_guard * max(t_stop, 1.0):
        raise RuntimeError(
            "clock exploded past the overflow guard: the atom family looks "
            "divergent (see ssbm_mass_check)")
    return _finalize(engine, env, t_grid, T, return_environment)


def sample_fk_ssbm_mixture(gamma: float, family: SSBMFamily, T: float, *,
                           dt: float | None = None, h: float | None = None,
                           gen_bm: np.random.Generator,
                           gen_env: np.random.Generator,
                           gen_sub: np.random.Generator,
                           t_grid=None, scale: float = 1.0,
                           return_environment: bool = False):
    """Clock = SSBM clock + independent stable subordinator evaluated along
    the driver's time."""
    return sample_ssbm(family, T, dt=dt, h=h, gen_bm=gen_bm, gen_env=gen_env,
                       gen_sub=gen_sub, t_grid=t_grid,
                       stable_mix=(gamma, scale),
                       return_environment=return_environment)


def speed_measure_time_change(*, atoms=None, lebesgue_coeff: float = 0.0,
                              T: float, dt: float | None = None,
                              h: float | None = None,
                              gen_bm: np.random.Generator,
                              t_grid=None) -> Trajectory:
    """Time change of B with speed measure rho = lebesgue_coeff * Leb
    + sum v_i delta_{x_i} (atoms: iterable of (x, v))."""
    dt, h = default_grid(T, dt, h)
    if lebesgue_coeff < 0.0:
        raise ValueError("the speed measure must be nonnegative")
    engine = _TimeChangeEngine(dt=dt, h=h, gen_bm=gen_bm,
                               lebesgue_coeff=lebesgue_coeff,
                               identity_clock=False)
    atoms = list(atoms or [])
    for x, v in atoms:
        engine.add_linear_atom(float(x), float(v))
    if lebesgue_coeff == 0.0 and not atoms:
        raise ValueError("speed measure is zero: the time change degenerates")

    def guard(force=None):
        return (-math.inf, math.inf)

    t_stop = T if t_grid is None else float(np.max(t_grid))
    engine.run_until(t_stop, guard)
    return _finalize(engine, None, t_grid, T, False)


@dataclass
class MassCheckReport:
    verdict: str  # finite | divergent | inconclusive
    cutoffs: np.ndarray
    added_mass: np.ndarray  # mean extra phi_1-mass contributed per cutoff halving
    total: float
    guard: float


def ssbm_mass_check(family: SSBMFamily, gen: np.random.Generator,
                    n_trials: int = 64, n_halvings: int = 6,
                    guard: float = 1e9) -> MassCheckReport:
    """Monte Carlo probe of sum_{x_i in [0,1]} S^i_1 < infinity.

    Atoms are revealed strip by strip (v in [c/2, c)); if the mass added per
    halving keeps growing (or the running total passes the guard) the family
    is flagged divergent.
    """
    if family.is_zero:
        return MassCheckReport("finite", np.array([]), np.array([]), 0.0, guard)
    cutoffs = family.v_min * 0.5 ** np.arange(n_halvings)
    added = np.zeros(n_halvings)
    total = 0.0
    for j in range(n_halvings):
        v_hi = None if j == 0 else float(cutoffs[j - 1])
        batch = 0.0
        for _ in range(n_trials):
            xs, vs = family.draw_atoms(0.0, 1.0, gen, v_lo=float(cutoffs[j]),
                                       v_hi=v_hi)
            for v in vs:
                s1 = family.exponent_for(float(v)).sample_increments(1.0, 1, gen)[0]
                batch += s1
        added[j] = batch / n_trials
        total += added[j]
        if total > guard:
            return MassCheckReport("divergent", cutoffs[: j + 1], added[: j + 1],
                                   total, guard)
    head = added[:2].mean()
    tail = added[-2:].mean()
    if tail <= 0.5 * max(head, 1e-300) or total == 0.0:
        verdict = "finite"
    elif tail >= max(head, 1e-300):
        verdict = "divergent"
    else:
        verdict = "inconclusive"
    return MassCheckReport(verdict, cutoffs, added, total, guard)
