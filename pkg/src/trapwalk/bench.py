"""Benchmark of the compiled stepping kernels against the pure-Python
fallback, plus an output-identity check.  Run as ``python -m trapwalk.bench``.
"""

from __future__ import annotations

import time

import numpy as np

from ._kernels import compiled, pure
from .streams import substream


def _time(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_tooth(backend, n_draws, n_tooth, p_up):
    gen = substream(1234, "bench-tooth")

    def run():
        total = 0
        for _ in range(n_draws):
            total += backend.tooth_excursion(gen, n_tooth, p_up, 1 << 62)
        return total

    return _time(run)


def bench_backbone(backend, t_stop):
    gen_w = substream(99, "bench-walk")
    gen_e = substream(99, "bench-env")
    from .models import CombModel, CombParams
    import trapwalk.models as models_mod

    saved = models_mod._kern
    models_mod._kern = backend
    try:
        model = CombModel(CombParams(0.5, 0.0))
        t_obs = np.array([t_stop])

        def run():
            return model.observe_rtrw(t_obs, gen_walk=gen_w, gen_env=gen_e)

        return _time(run, repeat=1)
    finally:
        models_mod._kern = saved


def bench_kahan(backend, n):
    x = substream(5, "bench-kahan").random(n)
    return _time(backend.kahan_cumsum, x)


def identity_check() -> bool:
    """Same seeds, both backends, identical outputs."""
    if compiled is None:
        return True
    for n_tooth, p in [(1, 0.5), (6, 0.5), (9, 0.75)]:
        g1 = substream(7, "ident")
        g2 = substream(7, "ident")
        a = [pure.tooth_excursion(g1, n_tooth, p, 1 << 62) for _ in range(500)]
        b = [compiled.tooth_excursion(g2, n_tooth, p, 1 << 62) for _ in range(500)]
        if a != b:
            return False
    x = substream(8, "ident-k").random(10_000)
    return bool(np.array_equal(pure.kahan_cumsum(x), compiled.kahan_cumsum(x)))


def main() -> int:
    if compiled is None:
        print("compiled kernels unavailable; nothing to compare")
        return 0
    print(f"identity check: {'OK' if identity_check() else 'MISMATCH'}")
    from .models import ToothLaw

    rows = []
    for label, fn, args in [
        ("tooth excursions (N=6, no drift, 20k draws)", bench_tooth,
         (20_000, 6, 0.5)),
        ("tooth excursions (N=9, beta=1, 5k draws)", bench_tooth,
         (5_000, 9, ToothLaw(9, 1.0).p)),
        ("comb backbone to t=2e5", bench_backbone, (2e5,)),
        ("kahan cumsum (1e6)", bench_kahan, (1_000_000,)),
    ]:
        t_c, _ = fn(compiled, *args)
        t_p, _ = fn(pure, *args)
        rows.append((label, t_c, t_p, t_p / t_c))
    width = max(len(r[0]) for r in rows)
    print(f"{'benchmark'.ljust(width)}  compiled      pure       speedup")
    for label, t_c, t_p, s in rows:
        print(f"{label.ljust(width)}  {t_c * 1e3:8.2f} ms  {t_p * 1e3:8.2f} ms  {s:6.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
