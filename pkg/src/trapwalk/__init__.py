"""trapwalk: Monte Carlo simulation of randomly trapped random walks on Z
and their scaling limits (Brownian motion, fractional kinetics, the
Fontes-Isopi-Newman diffusion, spatially subordinated Brownian motions),
with analytic oracles and statistical verdict machinery."""

from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
