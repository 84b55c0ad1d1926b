# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernels.

Bit-for-bit twins of ``pure.py``: same draw order, same transforms, same
status codes.  Raw uniforms come from the generator's underlying
``bitgen_t`` function pointers, which is what ``Generator.random()`` and
``BitGenerator.random_raw()`` use, so the two backends consume one shared
stream identically.
"""

from libc.math cimport floor, log, log1p
from libc.stdint cimport int64_t, uint64_t

from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

import numpy as np

BACKEND = "compiled"

cdef enum:
    C_DONE = 0
    C_EXIT_LEFT = 1
    C_EXIT_RIGHT = 2
    C_RECORD_FULL = 3
    C_EXCURSION_CAP = 4

DONE = C_DONE
EXIT_LEFT = C_EXIT_LEFT
EXIT_RIGHT = C_EXIT_RIGHT
RECORD_FULL = C_RECORD_FULL
EXCURSION_CAP = C_EXCURSION_CAP

cdef double LOG_ONE_THIRD = log(1.0 / 3.0)


cdef inline bitgen_t *_bitgen(object gen) except NULL:
    capsule = gen.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _next_double(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef inline uint64_t _next_uint64(bitgen_t *bg) noexcept nogil:
    return bg.next_uint64(bg.state)


def kahan_cumsum(x):
    """Compensated running sum; error stays O(eps) per entry regardless of n."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out_arr = np.empty(xv.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double s = 0.0, c = 0.0, y, t
    cdef Py_ssize_t k
    with nogil:
        for k in range(xv.shape[0]):
            y = xv[k] - c
            t = s + y
            c = (t - s) - y
            s = t
            out[k] = s
    return out_arr


cdef inline int64_t _excursion(bitgen_t *bg, int64_t n_tooth, double p_up,
                               int64_t cap) noexcept nogil:
    """Steps for the tooth walk to return from level 1 to level 0;
    negative if the cap was exceeded."""
    cdef int64_t pos = 1, steps = 0
    cdef uint64_t buf = 0
    cdef int nbits = 0
    if n_tooth == 1:
        return 1
    if p_up == 0.5:
        while True:
            if pos == n_tooth:
                pos -= 1
            else:
                if nbits == 0:
                    buf = _next_uint64(bg)
                    nbits = 64
                pos += 1 if (buf & 1u) else -1
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
                pos += 1 if _next_double(bg) < p_up else -1
            steps += 1
            if pos == 0:
                return steps
            if steps >= cap:
                return -steps


def tooth_excursion(object gen, int64_t n_tooth, double p_up, int64_t cap):
    cdef bitgen_t *bg = _bitgen(gen)
    cdef int64_t out
    with nogil:
        out = _excursion(bg, n_tooth, p_up, cap)
    return out


def comb_visit_duration(object gen, int64_t n_tooth, double p_up, int64_t cap):
    cdef bitgen_t *bg = _bitgen(gen)
    cdef double u
    cdef int64_t n_exc, total, xi, i
    with nogil:
        u = _next_double(bg)
        n_exc = <int64_t> floor(log1p(-u) / LOG_ONE_THIRD)
        total = 1 + n_exc
        for i in range(n_exc):
            xi = _excursion(bg, n_tooth, p_up, cap)
            if xi < 0:
                total = xi
                break
            total += xi
    return total


def comb_backbone_run(object gen, list state, int64_t win_lo,
                      int64_t[::1] win_n, double[::1] win_p,
                      double[::1] t_obs, int64_t[::1] obs_pos,
                      int64_t n_steps_max, double t_stop, int64_t excursion_cap,
                      rec_pos=None, rec_clock=None):
    """Advance the comb backbone walk; see the pure twin for semantics."""
    cdef bitgen_t *bg = _bitgen(gen)
    cdef int64_t pos = state[0]
    cdef int64_t step_idx = state[1]
    cdef double clock = state[2]
    cdef double comp = state[3]
    cdef Py_ssize_t obs_idx = state[4]
    cdef Py_ssize_t rec_count = state[5]

    cdef int64_t win_hi = win_lo + win_n.shape[0] - 1
    cdef Py_ssize_t n_obs = t_obs.shape[0]
    cdef bint recording = rec_pos is not None
    cdef int64_t[::1] rpos
    cdef double[::1] rclock
    cdef Py_ssize_t rec_cap = 0
    if recording:
        rpos = rec_pos
        rclock = rec_clock
        rec_cap = rpos.shape[0]

    cdef int status = C_DONE
    cdef int64_t n_tooth, n_exc, dur, cap_at, tpos, i
    cdef double p_up, allowed, u, y, t, s_next
    cdef uint64_t buf
    cdef int nbits
    cdef bint overshoot

    with nogil:
        while True:
            if n_steps_max >= 0 and step_idx >= n_steps_max:
                status = C_DONE
                break
            if pos < win_lo:
                status = C_EXIT_LEFT
                break
            if pos > win_hi:
                status = C_EXIT_RIGHT
                break
            if recording and rec_count >= rec_cap:
                status = C_RECORD_FULL
                break

            n_tooth = win_n[pos - win_lo]
            p_up = win_p[pos - win_lo]
            allowed = t_stop - clock

            u = _next_double(bg)
            n_exc = <int64_t> floor(log1p(-u) / LOG_ONE_THIRD)
            dur = 1 + n_exc
            overshoot = dur > allowed
            if not overshoot:
                for i in range(n_exc):
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
                                    buf = _next_uint64(bg)
                                    nbits = 64
                                tpos += 1 if (buf & 1u) else -1
                                buf >>= 1
                                nbits -= 1
                            dur += 1
                            if tpos == 0:
                                break
                            if dur > allowed:
                                overshoot = True
                                break
                            if dur >= cap_at:
                                status = C_EXCURSION_CAP
                                break
                    else:
                        tpos = 1
                        while True:
                            if tpos == n_tooth:
                                tpos -= 1
                            else:
                                tpos += 1 if _next_double(bg) < p_up else -1
                            dur += 1
                            if tpos == 0:
                                break
                            if dur > allowed:
                                overshoot = True
                                break
                            if dur >= cap_at:
                                status = C_EXCURSION_CAP
                                break
                    if status == C_EXCURSION_CAP or overshoot:
                        break
            if status == C_EXCURSION_CAP:
                break
            if overshoot:
                while obs_idx < n_obs:
                    obs_pos[obs_idx] = pos
                    obs_idx += 1
                if recording:
                    rpos[rec_count] = pos
                    rclock[rec_count] = clock
                    rec_count += 1
                y = dur - comp
                t = clock + y
                comp = (t - clock) - y
                clock = t
                step_idx += 1
                status = C_DONE
                break

            if recording:
                rpos[rec_count] = pos
                rclock[rec_count] = clock
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
                status = C_DONE
                break

            pos += 1 if _next_double(bg) < 0.5 else -1

    state[0] = pos
    state[1] = step_idx
    state[2] = clock
    state[3] = comp
    state[4] = obs_idx
    state[5] = rec_count
    return status
