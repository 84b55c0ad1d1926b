"""Kernel backend selection: compiled extension if available, else pure Python.

Both backends expose the same functions and consume RNG streams in the same
order; ``active`` is the module the rest of the package uses.  Benchmarks
and identity tests import ``pure`` and ``compiled`` directly.
"""

from . import pure

try:
    from . import _core as compiled
except ImportError:  # extension not built
    compiled = None

active = compiled if compiled is not None else pure


def backend_name() -> str:
    return active.BACKEND
