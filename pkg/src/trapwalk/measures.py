"""Probability-measure primitives: trap distributions, Laplace transforms,
heavy-tailed samplers, Poisson point processes and subordinator paths.

A trap distribution is a law on (0, infinity) describing how long one visit
to a site lasts.  Laplace transforms are exact closed forms for the analytic
kinds; ``one_minus_laplace`` evaluates 1 - transform without cancellation,
which matters when the trapped atom carries mass ~1e-8 and relative accuracy
of 1e-12 is required downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .variates import (
    TINY,
    exponential_from_uniform,
    pareto_from_uniform,
    stable_positive_from_uniforms,
)

__all__ = [
    "TrapDistribution",
    "PointMass",
    "Exponential",
    "TwoPoint",
    "Empirical",
    "LaplaceExponent",
    "CompoundPoissonJumps",
    "StableJumps",
    "AtomJumps",
    "AtomicTrapMeasure",
    "FKIntensity",
    "FINIntensity",
    "PointProcessSample",
    "sample_trap",
    "laplace",
    "mean",
    "second_moment",
    "sample_stable_increments",
    "sample_poisson_points",
    "subordinator_path",
    "psi_epsilon",
]


def _check_lambda(lam) -> np.ndarray | float:
    arr = np.asarray(lam, dtype=np.float64)
    if np.any(arr < 0.0):
        raise ValueError("Laplace transforms are defined for lambda >= 0 only")
    return arr if arr.ndim else float(arr)


class TrapDistribution:
    """Base class for holding-time laws on (0, infinity)."""

    kind = "abstract"

    def sample(self, gen: np.random.Generator) -> float:
        return float(self.sample_n(1, gen)[0])

    def sample_n(self, n: int, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def laplace(self, lam):
        lam = _check_lambda(lam)
        return 1.0 - self.one_minus_laplace(lam)

    def one_minus_laplace(self, lam):
        """1 - E[exp(-lambda T)], evaluated without cancellation."""
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class PointMass(TrapDistribution):
    """Degenerate law delta_c."""

    value: float
    kind = "point-mass"

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError("point mass must sit at a nonnegative duration")

    def sample_n(self, n, gen):
        return np.full(n, self.value)

    def one_minus_laplace(self, lam):
        lam = _check_lambda(lam)
        return -np.expm1(-lam * self.value)

    def mean(self):
        return self.value

    def second_moment(self):
        return self.value**2


@dataclass(frozen=True)
class Exponential(TrapDistribution):
    """Exponential law with the given mean (Markovian trap)."""

    mean_value: float
    kind = "exponential"

    def __post_init__(self):
        if self.mean_value <= 0.0:
            raise ValueError("exponential mean must be positive")

    def sample_n(self, n, gen):
        return exponential_from_uniform(gen.random(n), self.mean_value)

    def one_minus_laplace(self, lam):
        lam = _check_lambda(lam)
        # 1 - 1/(1 + m lam) = m lam / (1 + m lam)
        ml = self.mean_value * lam
        return ml / (1.0 + ml)

    def mean(self):
        return self.mean_value

    def second_moment(self):
        return 2.0 * self.mean_value**2


@dataclass(frozen=True)
class TwoPoint(TrapDistribution):
    """(1 - w) delta_base + w delta_deep: a trap of depth ``deep`` that is
    felt only with probability ``w``; visits otherwise last ``base``.

    ``base = 0`` is permitted only with ``allow_zero_atom`` (the analysis
    variant used inside assumption checkers); sampling kinds keep durations
    strictly positive.
    """

    deep: float
    weight: float
    base: float = 1.0
    allow_zero_atom: bool = False
    kind = "two-point"

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0,1]")
        if self.deep <= 0.0:
            raise ValueError("deep atom must be positive")
        if self.base < 0.0 or (self.base == 0.0 and not self.allow_zero_atom):
            raise ValueError("base atom must be positive")

    @staticmethod
    def transparent(tau: float, beta: float, analysis_form: bool = False) -> "TwoPoint":
        """Site law (1 - tau^-beta) delta_1 + tau^-beta delta_tau.

        With ``analysis_form`` the unit atom is moved to 0, the variant used
        for mean/tail computations in the assumption checkers.
        """
        if tau <= 1.0:
            raise ValueError("transparent trap depth must exceed 1")
        w = tau ** (-beta)
        return TwoPoint(deep=tau, weight=w, base=0.0 if analysis_form else 1.0,
                        allow_zero_atom=analysis_form)

    def sample_n(self, n, gen):
        u = gen.random(n)
        return np.where(u < self.weight, self.deep, self.base)

    def one_minus_laplace(self, lam):
        lam = _check_lambda(lam)
        w = self.weight
        return -(1.0 - w) * np.expm1(-lam * self.base) - w * np.expm1(-lam * self.deep)

    def mean(self):
        return (1.0 - self.weight) * self.base + self.weight * self.deep

    def second_moment(self):
        return (1.0 - self.weight) * self.base**2 + self.weight * self.deep**2


@dataclass(frozen=True)
class Empirical(TrapDistribution):
    """Law given by a finite sample; transforms are sample averages with a
    reported standard error against the underlying law."""

    values: np.ndarray
    kind = "empirical"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size == 0 or np.any(vals <= 0.0):
            raise ValueError("empirical sample must be nonempty and positive")
        object.__setattr__(self, "values", vals)

    def sample_n(self, n, gen):
        idx = gen.integers(0, self.values.size, size=n)
        return self.values[idx]

    def one_minus_laplace(self, lam):
        lam = _check_lambda(lam)
        grid = np.atleast_1d(np.asarray(lam, dtype=np.float64))
        out = np.array([np.mean(-np.expm1(-l * self.values)) for l in grid])
        return out if np.ndim(lam) else float(out[0])

    def laplace_with_stderr(self, lam: float) -> tuple[float, float]:
        lam = float(_check_lambda(lam))
        terms = np.exp(-lam * self.values)
        return float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(terms.size))

    def mean(self):
        return float(self.values.mean())

    def second_moment(self):
        return float(np.mean(self.values**2))


# ---------------------------------------------------------------------------
# Laplace exponents of subordinators: f(lambda) = drift*lambda + jump part
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompoundPoissonJumps:
    rate: float
    jump_dist: TrapDistribution

    def __post_init__(self):
        if self.rate < 0.0:
            raise ValueError("jump rate must be nonnegative")

    def value(self, lam):
        return self.rate * self.jump_dist.one_minus_laplace(lam)

    def mean_slope(self):
        return self.rate * self.jump_dist.mean()

    def sample_increments(self, dt, n, gen):
        counts = gen.poisson(self.rate * dt, size=n)
        out = np.zeros(n)
        total = int(counts.sum())
        if total:
            jumps = self.jump_dist.sample_n(total, gen)
            stops = np.cumsum(counts)
            starts = stops - counts
            sums = np.add.reduceat(jumps, starts[counts > 0])
            out[counts > 0] = sums
        return out


@dataclass(frozen=True)
class StableJumps:
    gamma: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("stable index must lie in (0,1)")
        if self.scale <= 0.0:
            raise ValueError("stable scale must be positive")

    def value(self, lam):
        return self.scale * np.power(lam, self.gamma)

    def mean_slope(self):
        return math.inf

    def sample_increments(self, dt, n, gen):
        return sample_stable_increments(self.gamma, self.scale, dt, n, gen)


@dataclass(frozen=True)
class AtomJumps:
    """Finite jump measure: atoms (size_i, intensity_i)."""

    atoms: tuple

    def value(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        out = np.zeros_like(lam, dtype=np.float64)
        for size, intensity in self.atoms:
            out = out - intensity * np.expm1(-lam * size)
        return out if out.ndim else float(out)

    def mean_slope(self):
        return sum(size * intensity for size, intensity in self.atoms)

    def sample_increments(self, dt, n, gen):
        out = np.zeros(n)
        for size, intensity in self.atoms:
            out = out + size * gen.poisson(intensity * dt, size=n)
        return out


@dataclass(frozen=True)
class LaplaceExponent:
    """f(lambda) = drift * lambda + integral (1 - e^(-lambda t)) Pi(dt)."""

    drift: float = 0.0
    jumps: object = None  # CompoundPoissonJumps | StableJumps | AtomJumps | None

    def __post_init__(self):
        if self.drift < 0.0:
            raise ValueError("drift must be nonnegative")

    @staticmethod
    def linear(v: float) -> "LaplaceExponent":
        return LaplaceExponent(drift=v)

    @staticmethod
    def stable(gamma: float, scale: float = 1.0) -> "LaplaceExponent":
        return LaplaceExponent(jumps=StableJumps(gamma, scale))

    @staticmethod
    def compound_poisson(rate: float, jump_dist: TrapDistribution) -> "LaplaceExponent":
        return LaplaceExponent(jumps=CompoundPoissonJumps(rate, jump_dist))

    @staticmethod
    def zero() -> "LaplaceExponent":
        return LaplaceExponent()

    def __call__(self, lam):
        lam = _check_lambda(lam)
        out = self.drift * np.asarray(lam, dtype=np.float64)
        if self.jumps is not None:
            out = out + self.jumps.value(lam)
        return out if np.ndim(lam) else float(out)

    def mean_slope(self) -> float:
        """E[S_1] = f'(0), possibly infinite."""
        if self.jumps is None:
            return self.drift
        return self.drift + self.jumps.mean_slope()

    def sample_increments(self, dt: float, n: int, gen: np.random.Generator) -> np.ndarray:
        inc = np.full(n, self.drift * dt)
        if self.jumps is not None:
            inc = inc + self.jumps.sample_increments(dt, n, gen)
        return inc


# ---------------------------------------------------------------------------
# Atomic trap measures on the half-plane
# ---------------------------------------------------------------------------


@dataclass
class AtomicTrapMeasure:
    """Point masses s_x^i at lattice points (site x, visit index i >= 1)."""

    masses: dict = field(default_factory=dict)

    def __post_init__(self):
        for (x, i), s in self.masses.items():
            if i < 1:
                raise ValueError("visit indices start at 1")
            if s <= 0.0:
                raise ValueError("masses must be strictly positive")

    def add(self, x: int, i: int, s: float) -> None:
        if i < 1 or s <= 0.0:
            raise ValueError("invalid atom")
        self.masses[(int(x), int(i))] = float(s)

    def total_mass(self, sites=None, max_index: int | None = None) -> float:
        tot = 0.0
        for (x, i), s in self.masses.items():
            if sites is not None and x not in sites:
                continue
            if max_index is not None and i > max_index:
                continue
            tot += s
        return tot


# ---------------------------------------------------------------------------
# Poisson point processes with heavy-tailed marks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FKIntensity:
    """gamma z^(-1-gamma) dx dy dz on (x, y, z), z >= z_min > 0."""

    gamma: float
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    z_min: float

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("tail index must lie in (0,1)")
        if self.z_min <= 0.0:
            raise ValueError("the heavy coordinate needs a positive lower cutoff")
        if self.x_hi < self.x_lo or self.y_hi < self.y_lo:
            raise ValueError("empty window bounds must still be ordered")

    def mean_count(self) -> float:
        area = (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)
        return area * self.z_min ** (-self.gamma)


@dataclass(frozen=True)
class FINIntensity:
    """gamma v^(-1-gamma) dx dv on (x, v), v >= v_min > 0."""

    gamma: float
    x_lo: float
    x_hi: float
    v_min: float

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("tail index must lie in (0,1)")
        if self.v_min <= 0.0:
            raise ValueError("the trap-depth coordinate needs a positive lower cutoff")
        if self.x_hi < self.x_lo:
            raise ValueError("window bounds must be ordered")

    def mean_count(self) -> float:
        return (self.x_hi - self.x_lo) * self.v_min ** (-self.gamma)


@dataclass
class PointProcessSample:
    points: np.ndarray  # shape (n, d)
    intensity: object
    mean_count: float


def sample_poisson_points(intensity, gen: np.random.Generator) -> PointProcessSample:
    """Sample a Poisson point process with the given cut heavy-tailed intensity."""
    mu = intensity.mean_count()
    n = int(gen.poisson(mu))
    if isinstance(intensity, FKIntensity):
        x = gen.uniform(intensity.x_lo, intensity.x_hi, size=n)
        y = gen.uniform(intensity.y_lo, intensity.y_hi, size=n)
        z = pareto_from_uniform(gen.random(n), intensity.gamma, intensity.z_min)
        pts = np.column_stack([x, y, z]) if n else np.empty((0, 3))
    elif isinstance(intensity, FINIntensity):
        x = gen.uniform(intensity.x_lo, intensity.x_hi, size=n)
        v = pareto_from_uniform(gen.random(n), intensity.gamma, intensity.v_min)
        pts = np.column_stack([x, v]) if n else np.empty((0, 2))
    else:
        raise TypeError(f"unsupported intensity descriptor {type(intensity)!r}")
    return PointProcessSample(points=pts, intensity=intensity, mean_count=mu)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def sample_trap(dist: TrapDistribution, gen: np.random.Generator) -> float:
    return dist.sample(gen)


def laplace(dist: TrapDistribution, lam) -> float:
    return dist.laplace(lam)


def mean(dist: TrapDistribution) -> float:
    return dist.mean()


def second_moment(dist: TrapDistribution) -> float:
    return dist.second_moment()


def sample_stable_increments(gamma: float, scale: float, dt: float, n: int,
                             gen: np.random.Generator) -> np.ndarray:
    """n i.i.d. increments over time dt of the subordinator with exponent
    scale * lambda^gamma."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("stable index must lie in (0,1)")
    if scale <= 0.0 or dt <= 0.0:
        raise ValueError("scale and dt must be positive")
    u = gen.random(2 * n)
    v = stable_positive_from_uniforms(u[0::2], u[1::2], gamma)
    return (scale * dt) ** (1.0 / gamma) * np.maximum(v, TINY)


def subordinator_path(f: LaplaceExponent, t_grid, gen: np.random.Generator) -> np.ndarray:
    """Path S on the grid, S(t_grid[0]) = 0, increments with transform
    exp(-dt f(lambda))."""
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0.0):
        raise ValueError("time grid must be strictly increasing")
    if t[0] < 0.0:
        raise ValueError("time grid must start at a nonnegative time")
    out = np.zeros(t.size)
    if t.size == 1:
        return out
    dts = np.diff(t)
    if np.allclose(dts, dts[0]):
        inc = f.sample_increments(float(dts[0]), dts.size, gen)
    else:
        inc = np.array([f.sample_increments(float(d), 1, gen)[0] for d in dts])
    out[1:] = np.cumsum(inc)
    return out


def psi_epsilon(dist: TrapDistribution, eps: float, q_of_eps: float, lam):
    """eps^-1 (1 - transform(q(eps) * lambda)): the Laplace exponent of the
    normalized single-trap clock contribution at scale eps."""
    if eps <= 0.0 or q_of_eps <= 0.0:
        raise ValueError("eps and q(eps) must be positive")
    lam = _check_lambda(lam)
    return dist.one_minus_laplace(np.asarray(lam) * q_of_eps) / eps
