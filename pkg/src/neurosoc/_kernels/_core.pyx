# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hardware-mode simulation loops.

Bit-exact twin of ``neurosoc._kernels.pure`` — same wide-integer
accumulation, same saturation points, same update order.  See that
module for the semantics contract.
"""

import numpy as np

cimport numpy as cnp

ctypedef cnp.int64_t i64
ctypedef cnp.int32_t i32
ctypedef cnp.uint8_t u8


cdef inline i64 _clamp(i64 x, i64 lo, i64 hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


def lif_run(u8[:, ::1] in_spikes, i32[:, ::1] weights,
            i64[::1] v, i64[::1] theta, i64[::1] refrac,
            u8[::1] prev_out, u8[:, ::1] out_spikes,
            i64 threshold, i64 leak, i64 v_rest, i64 v_min,
            i64 refrac_len, bint reset_by_sub,
            i64 acc_min, i64 acc_max,
            i64 w_inh, bint recurrent, bint self_connect):
    cdef Py_ssize_t T = in_spikes.shape[0]
    cdef Py_ssize_t n_pre = in_spikes.shape[1]
    cdef Py_ssize_t n_post = weights.shape[1]
    cdef cnp.ndarray acc_arr = np.zeros(n_post, dtype=np.int64)
    cdef i64[::1] acc = acc_arr
    cdef Py_ssize_t t, i, j
    cdef i64 cnt, thr, vv
    cdef bint fire
    with nogil:
        for t in range(T):
            for j in range(n_post):
                acc[j] = 0
            for i in range(n_pre):
                if in_spikes[t, i]:
                    for j in range(n_post):
                        acc[j] += weights[i, j]
            if recurrent:
                cnt = 0
                for j in range(n_post):
                    if prev_out[j]:
                        cnt += 1
                if cnt != 0:
                    for j in range(n_post):
                        if self_connect:
                            acc[j] += w_inh * cnt
                        else:
                            acc[j] += w_inh * (cnt - (1 if prev_out[j] else 0))
            for j in range(n_post):
                vv = v[j]
                if refrac[j] == 0:
                    vv = _clamp(vv + acc[j], acc_min, acc_max)
                vv = vv - leak
                if vv < v_min:
                    vv = v_min
                thr = threshold + theta[j]
                fire = refrac[j] == 0 and vv >= thr
                if fire:
                    vv = (vv - thr) if reset_by_sub else v_rest
                    refrac[j] = refrac_len
                else:
                    refrac[j] = refrac[j] - 1 if refrac[j] > 0 else 0
                v[j] = vv
                out_spikes[t, j] = 1 if fire else 0
                prev_out[j] = out_spikes[t, j]


cdef void _stdp_apply(i32[:, ::1] weights, u8[:, ::1] in_spikes,
                      u8[:, ::1] out_spikes, Py_ssize_t tau,
                      Py_ssize_t w_before, Py_ssize_t w_after,
                      i64 delta, i64 w_min, i64 w_max,
                      u8[::1] before_buf, u8[::1] after_buf) noexcept nogil:
    cdef Py_ssize_t T = in_spikes.shape[0]
    cdef Py_ssize_t n_pre = in_spikes.shape[1]
    cdef Py_ssize_t n_post = weights.shape[1]
    cdef Py_ssize_t i, j, s, lo, hi
    cdef bint any_post = False
    cdef i64 w
    for j in range(n_post):
        if out_spikes[tau, j]:
            any_post = True
            break
    if not any_post:
        return
    for i in range(n_pre):
        before_buf[i] = 0
        after_buf[i] = 0
    lo = tau - w_before
    if lo < 0:
        lo = 0
    for s in range(lo, tau + 1):
        for i in range(n_pre):
            if in_spikes[s, i]:
                before_buf[i] = 1
    hi = tau + w_after
    if hi > T - 1:
        hi = T - 1
    for s in range(tau + 1, hi + 1):
        for i in range(n_pre):
            if in_spikes[s, i]:
                after_buf[i] = 1
    for i in range(n_pre):
        if before_buf[i]:
            for j in range(n_post):
                if out_spikes[tau, j]:
                    w = weights[i, j] + delta
                    if w > w_max:
                        w = w_max
                    weights[i, j] = <i32>w
        elif after_buf[i]:
            for j in range(n_post):
                if out_spikes[tau, j]:
                    w = weights[i, j] - delta
                    if w < w_min:
                        w = w_min
                    weights[i, j] = <i32>w


def stdp_lif_run(u8[:, ::1] in_spikes, i32[:, ::1] weights,
                 i64[::1] v, i64[::1] theta, i64[::1] refrac,
                 u8[::1] prev_out, u8[:, ::1] out_spikes,
                 i64 threshold, i64 leak, i64 v_rest, i64 v_min,
                 i64 refrac_len, bint reset_by_sub,
                 i64 acc_min, i64 acc_max,
                 i64 w_inh, bint recurrent, bint self_connect,
                 i64 delta, i64 w_min, i64 w_max,
                 Py_ssize_t w_before, Py_ssize_t w_after,
                 i64 theta_plus, i64 theta_decay_q16):
    cdef Py_ssize_t T = in_spikes.shape[0]
    cdef Py_ssize_t n_pre = in_spikes.shape[1]
    cdef Py_ssize_t n_post = weights.shape[1]
    cdef cnp.ndarray acc_arr = np.zeros(n_post, dtype=np.int64)
    cdef cnp.ndarray bbuf_arr = np.zeros(n_pre, dtype=np.uint8)
    cdef cnp.ndarray abuf_arr = np.zeros(n_pre, dtype=np.uint8)
    cdef i64[::1] acc = acc_arr
    cdef u8[::1] before_buf = bbuf_arr
    cdef u8[::1] after_buf = abuf_arr
    cdef Py_ssize_t t, i, j, tau
    cdef i64 cnt, thr, vv
    cdef bint fire
    with nogil:
        for t in range(T):
            for j in range(n_post):
                acc[j] = 0
            for i in range(n_pre):
                if in_spikes[t, i]:
                    for j in range(n_post):
                        acc[j] += weights[i, j]
            if recurrent:
                cnt = 0
                for j in range(n_post):
                    if prev_out[j]:
                        cnt += 1
                if cnt != 0:
                    for j in range(n_post):
                        if self_connect:
                            acc[j] += w_inh * cnt
                        else:
                            acc[j] += w_inh * (cnt - (1 if prev_out[j] else 0))
            for j in range(n_post):
                vv = v[j]
                if refrac[j] == 0:
                    vv = _clamp(vv + acc[j], acc_min, acc_max)
                vv = vv - leak
                if vv < v_min:
                    vv = v_min
                thr = threshold + theta[j]
                fire = refrac[j] == 0 and vv >= thr
                if fire:
                    vv = (vv - thr) if reset_by_sub else v_rest
                    refrac[j] = refrac_len
                else:
                    refrac[j] = refrac[j] - 1 if refrac[j] > 0 else 0
                v[j] = vv
                out_spikes[t, j] = 1 if fire else 0
                prev_out[j] = out_spikes[t, j]
                if fire:
                    theta[j] = theta[j] + theta_plus
                theta[j] = (theta[j] * theta_decay_q16) >> 16
            if t >= w_after:
                _stdp_apply(weights, in_spikes, out_spikes, t - w_after,
                            w_before, w_after, delta, w_min, w_max,
                            before_buf, after_buf)
        tau = T - w_after
        if tau < 0:
            tau = 0
        while tau < T:
            _stdp_apply(weights, in_spikes, out_spikes, tau,
                        w_before, w_after, delta, w_min, w_max,
                        before_buf, after_buf)
            tau += 1
