"""Pure-Python stepping kernels (fallback for the compiled extension).

These are literal transcriptions of the compiled kernels in ``_core.pyx``:
both consume the underlying bit stream in exactly the same order, so a
given seed yields bit-identical results on either backend (covered by
tests).  Draw conventions, per visit of the comb walk to a site with tooth
length N and in-tooth up-probability p:

1. one uniform -> G = floor(log(1-u)/log(1/3)), the number of tooth
   excursions before the walk leaves the backbone vertex
   (P[G=k] = (2/3)(1/3)^k);
2. each excursion walks the tooth from level 1 until hitting 0; the
   reflection at the tip costs a step but no randomness; when p == 1/2
   exactly, steps consume single bits of ``next_uint64`` words (LSB first,
   word buffer local to the excursion), otherwise one uniform per step
   (up iff u < p);
3. one uniform for the backbone move (+1 iff u < 1/2).

The visit lasts 1 + sum_i (1 + xi_i) time units: G tooth entries, their
return times xi_i, and the final departing step.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "pure"

_LOG_ONE_THIRD = math.log(1.0 / 3.0)

# status codes shared with the compiled kernel
DONE = 0
EXIT_LEFT = 1
EXIT_RIGHT = 2
RECORD_FULL = 3
EXCURSION_CAP = 4


def kahan_cumsum(x):
    """Compensated running sum; error stays O(eps) per entry regardless of n."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    s = 0.0
    c = 0.0
    for k in range(x.size):
        y = x[k] - c
        t = s + y
        c = (t - s) - y
        s = t
        out[k] = s
    return out


def tooth_excursion(gen, n_tooth: int, p_up: float, cap: int) -> int:
    """Steps for the tooth walk to return from level 1 to level 0.

    Returns a negative count if ``cap`` steps were exceeded.
    """
    if n_tooth == 1:
        return 1
    pos = 1
    steps = 0
    if p_up == 0.5:
        buf = 0
        nbits = 0
        while True:
            if pos == n_tooth:
                pos -= 1
            else:
                if nbits == 0:
                    buf = int(gen.bit_generator.random_raw())
                    nbits = 64
                pos += 1 if (buf & 1) else -1
                buf >>= 1
                nbits -= 1
            steps += 1
            if pos == 0:
                return steps
            if steps >= cap:
                return -steps
    else:
        while True:
            if pos == n_tooth:
                pos -= 1
            else:
                pos += 1 if gen.random() < p_up else -1
            steps += 1
            if pos == 0:
                return steps
            if steps >= cap:
                return -steps


def comb_visit_duration(gen, n_tooth: int, p_up: float, cap: int) -> int:
    """Duration (time units) of one visit of the comb walk to a backbone site.

    Negative result means the per-excursion step cap was exceeded.
    """
    u = gen.random()
    n_exc = int(math.floor(math.log1p(-u) / _LOG_ONE_THIRD))
    total = 1 + n_exc
    for _ in range(n_exc):
        xi = tooth_excursion(gen, n_tooth, p_up, cap)
        if xi < 0:
            return xi
        total += xi
    return total


def comb_backbone_run(gen, state, win_lo, win_n, win_p, t_obs, obs_pos,
                      n_steps_max, t_stop, excursion_cap,
                      rec_pos=None, rec_clock=None):
    """Advance the comb backbone walk until a stopping condition.

    ``state`` is a mutable list [pos, step_idx, clock, comp, obs_idx,
    rec_count]; it is updated in place; the return value is a status code.
    The caller re-enters after extending the tooth-length window on
    EXIT_LEFT / EXIT_RIGHT.
    """
    pos, step_idx, clock, comp, obs_idx, rec_count = state
    win_hi = win_lo + len(win_n) - 1
    n_obs = len(t_obs)
    recording = rec_pos is not None
    status = DONE
    while True:
        if n_steps_max >= 0 and step_idx >= n_steps_max:
            status = DONE
            break
        if pos < win_lo:
            status = EXIT_LEFT
            break
        if pos > win_hi:
            status = EXIT_RIGHT
            break
        if recording and rec_count >= len(rec_pos):
            status = RECORD_FULL
            break

        n_tooth = int(win_n[pos - win_lo])
        p_up = float(win_p[pos - win_lo])
        allowed = t_stop - clock  # duration beyond this is irrelevant

        # visit duration, with early-out once the remaining horizon is spent
        u = gen.random()
        n_exc = int(math.floor(math.log1p(-u) / _LOG_ONE_THIRD))
        dur = 1 + n_exc
        overshoot = dur > allowed
        if not overshoot:
            for _ in range(n_exc):
                cap_at = dur + excursion_cap
                if n_tooth == 1:
                    dur += 1
                elif p_up == 0.5:
                    tpos = 1
                    buf = 0
                    nbits = 0
                    while True:
                        if tpos == n_tooth:
                            tpos -= 1
                        else:
                            if nbits == 0:
                                buf = int(gen.bit_generator.random_raw())
                                nbits = 64
                            tpos += 1 if (buf & 1) else -1
                            buf >>= 1
                            nbits -= 1
                        dur += 1
                        if tpos == 0:
                            break
                        if dur > allowed:
                            overshoot = True
                            break
                        if dur >= cap_at:
                            state[:] = [pos, step_idx, clock, comp, obs_idx, rec_count]
                            return EXCURSION_CAP
                else:
                    tpos = 1
                    while True:
                        if tpos == n_tooth:
                            tpos -= 1
                        else:
                            tpos += 1 if gen.random() < p_up else -1
                        dur += 1
                        if tpos == 0:
                            break
                        if dur > allowed:
                            overshoot = True
                            break
                        if dur >= cap_at:
                            state[:] = [pos, step_idx, clock, comp, obs_idx, rec_count]
                            return EXCURSION_CAP
                if overshoot:
                    break
        if overshoot:
            # the walk sits at pos beyond every remaining time of interest
            while obs_idx < n_obs:
                obs_pos[obs_idx] = pos
                obs_idx += 1
            if recording:
                rec_pos[rec_count] = pos
                rec_clock[rec_count] = clock
                rec_count += 1
            y = dur - comp
            t = clock + y
            comp = (t - clock) - y
            clock = t
            step_idx += 1
            status = DONE
            break

        if recording:
            rec_pos[rec_count] = pos
            rec_clock[rec_count] = clock
            rec_count += 1
        y = dur - comp
        t = clock + y
        comp = (t - clock) - y
        s_next = t
        while obs_idx < n_obs and t_obs[obs_idx] < s_next:
            obs_pos[obs_idx] = pos
            obs_idx += 1
        clock = s_next
        step_idx += 1
        if clock > t_stop and obs_idx >= n_obs:
            status = DONE
            break

        pos += 1 if gen.random() < 0.5 else -1

    state[:] = [pos, step_idx, clock, comp, obs_idx, rec_count]
    return status
