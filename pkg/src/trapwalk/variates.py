"""Uniform-to-variate transforms shared by the scalar and vectorized paths.

All transforms work elementwise on scalars or numpy arrays and consume
uniforms from ``Generator.random()`` in a documented order, so a scalar
loop and a batched call on the same stream produce identical draws.  The
compiled kernels re-implement the same formulas from raw ``next_double``
words; the identity is covered by tests.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "pm1",
    "exponential_from_uniform",
    "pareto_from_uniform",
    "geometric_from_uniform",
    "normal_from_uniforms",
    "stable_positive_from_uniforms",
    "TINY",
    "LOG_ONE_THIRD",
]

TINY = np.finfo(np.float64).tiny

# geometric(2/3) visit-count transform uses log(1/3)
LOG_ONE_THIRD = float(np.log(1.0 / 3.0))


def pm1(u):
    """Fair +-1 step: +1 iff u < 1/2."""
    return np.where(u < 0.5, 1, -1)


def exponential_from_uniform(u, mean=1.0):
    """Exponential(mean) via inversion; strictly positive for u in [0,1)."""
    x = -np.log1p(-u) * mean
    return np.maximum(x, TINY)


def pareto_from_uniform(u, alpha: float, u0: float = 1.0):
    """Pareto tail P(X > x) = (u0/x)^alpha for x >= u0."""
    return u0 * np.power(1.0 - u, -1.0 / alpha)


def geometric_from_uniform(u, p: float):
    """Geometric on {0,1,...} with P(k) = p (1-p)^k."""
    return np.floor(np.log1p(-u) / np.log1p(-p)).astype(np.int64)


def normal_from_uniforms(u1, u2):
    """One standard normal per uniform pair (Box-Muller, cosine branch)."""
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def stable_positive_from_uniforms(u1, u2, gamma: float):
    """Positive gamma-stable variate with Laplace transform exp(-lambda^gamma).

    Kanter's exact representation: with theta ~ U(0, pi) and W ~ Exp(1),

        A(theta) = sin(g t)^(g/(1-g)) sin((1-g) t) / sin(t)^(1/(1-g)),
        V = (A(theta) / W)^((1-g)/g).

    Exact marginals for every gamma in (0,1); no Levy-measure truncation.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("stable index must lie in (0,1)")
    theta = np.pi * u1
    w = -np.log1p(-u2)
    w = np.maximum(w, TINY)
    g = gamma
    a = (
        np.power(np.sin(g * theta), g / (1.0 - g))
        * np.sin((1.0 - g) * theta)
        / np.power(np.sin(theta), 1.0 / (1.0 - g))
    )
    return np.power(a / w, (1.0 - g) / g)
