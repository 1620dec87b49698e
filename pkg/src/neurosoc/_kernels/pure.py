"""Pure-numpy kernels: the reference semantics for the hardware-mode loops.

The compiled extension (``_core``) implements exactly the same integer
semantics; any divergence is a bug.  Per-step accumulation is done in
wide (64-bit) integers and saturated once against the membrane
accumulator bounds, which is the adder-tree behaviour of the datapath;
core configurations are validated so that saturation can never occur
mid-step, making wide accumulation and per-add saturation
indistinguishable.

Forward sums in :func:`lif_run` go through a float64 GEMM: every partial
sum is an integer below 2**53, so the result is exact and bit-identical
to direct integer accumulation.
"""

from __future__ import annotations

import numpy as np

__all__ = ["lif_run", "stdp_lif_run"]


def lif_run(in_spikes, weights, v, theta, refrac, prev_out, out_spikes,
            threshold, leak, v_rest, v_min, refrac_len, reset_by_sub,
            acc_min, acc_max, w_inh, recurrent, self_connect):
    """Run T time steps of one core with static weights.

    ``v``/``theta``/``refrac`` (int64), ``prev_out`` (uint8) are state
    arrays updated in place; ``out_spikes`` (uint8 [T, n_post]) receives
    one row per step.
    """
    T = in_spikes.shape[0]
    if T == 0:
        return
    # Exact: 0/1 spikes times int32 weights, |sum| < 2**53.
    contrib = (in_spikes.astype(np.float64) @ weights.astype(np.float64)).astype(np.int64)
    prev = prev_out.astype(np.int64)
    thr = threshold + theta
    for t in range(T):
        add = contrib[t]
        if recurrent:
            cnt = int(prev.sum())
            if cnt:
                if self_connect:
                    add = add + w_inh * cnt
                else:
                    add = add + w_inh * (cnt - prev)
        gate = refrac == 0
        v[:] = np.clip(v + np.where(gate, add, 0), acc_min, acc_max)
        v[:] = np.maximum(v - leak, v_min)
        fire = gate & (v >= thr)
        if reset_by_sub:
            v[:] = np.where(fire, v - thr, v)
        else:
            v[:] = np.where(fire, v_rest, v)
        refrac[:] = np.where(fire, refrac_len, np.maximum(refrac - 1, 0))
        out_spikes[t, :] = fire
        prev = fire.astype(np.int64)
    prev_out[:] = out_spikes[T - 1]


def _stdp_apply(weights, in_spikes, out_spikes, tau, w_before, w_after,
                delta, w_min, w_max):
    """Fixed-increment STDP update for one calculated time step.

    Skips entirely when the post array at ``tau`` is silent.  Pre-spike
    windows outside the recorded sample read as silent (cleared history
    SRAM).  Potentiation window is [tau - w_before, tau]; depression
    applies to bits set strictly after tau and not in the before window.
    """
    T = in_spikes.shape[0]
    post = out_spikes[tau]
    post_idx = np.nonzero(post)[0]
    if post_idx.size == 0:
        return
    lo = max(tau - w_before, 0)
    before = in_spikes[lo:tau + 1].any(axis=0)
    hi = min(tau + w_after, T - 1)
    if hi >= tau + 1:
        after = in_spikes[tau + 1:hi + 1].any(axis=0)
    else:
        after = np.zeros(in_spikes.shape[1], dtype=bool)
    dep = after & ~before
    bi = np.nonzero(before)[0]
    if bi.size:
        block = weights[np.ix_(bi, post_idx)]
        weights[np.ix_(bi, post_idx)] = np.minimum(block + delta, w_max)
    di = np.nonzero(dep)[0]
    if di.size:
        block = weights[np.ix_(di, post_idx)]
        weights[np.ix_(di, post_idx)] = np.maximum(block - delta, w_min)


def stdp_lif_run(in_spikes, weights, v, theta, refrac, prev_out, out_spikes,
                 threshold, leak, v_rest, v_min, refrac_len, reset_by_sub,
                 acc_min, acc_max, w_inh, recurrent, self_connect,
                 delta, w_min, w_max, w_before, w_after,
                 theta_plus, theta_decay_q16):
    """Hardware-mode training over one sample: core steps fused with the
    one-step-behind fixed-increment STDP pipeline and adaptive threshold.

    The learning step for time tau runs once the core has completed step
    tau + w_after; the trailing taus are flushed against silent padding
    (the pipeline drains between samples).  Weights seen by the core at
    step t therefore include updates through step t - 1 - w_after.
    ``theta_decay_q16`` is the per-step multiplicative theta decay in
    Q16; the product is truncated toward zero.
    """
    T = in_spikes.shape[0]
    prev = prev_out.astype(np.int64)
    for t in range(T):
        idx = np.nonzero(in_spikes[t])[0]
        if idx.size:
            add = weights[idx].sum(axis=0, dtype=np.int64)
        else:
            add = np.zeros(weights.shape[1], dtype=np.int64)
        if recurrent:
            cnt = int(prev.sum())
            if cnt:
                if self_connect:
                    add = add + w_inh * cnt
                else:
                    add = add + w_inh * (cnt - prev)
        gate = refrac == 0
        v[:] = np.clip(v + np.where(gate, add, 0), acc_min, acc_max)
        v[:] = np.maximum(v - leak, v_min)
        fire = gate & (v >= threshold + theta)
        if reset_by_sub:
            v[:] = np.where(fire, v - (threshold + theta), v)
        else:
            v[:] = np.where(fire, v_rest, v)
        refrac[:] = np.where(fire, refrac_len, np.maximum(refrac - 1, 0))
        out_spikes[t, :] = fire
        prev = fire.astype(np.int64)
        theta[:] = theta + np.where(fire, theta_plus, 0)
        theta[:] = (theta * theta_decay_q16) >> 16
        if t >= w_after:
            _stdp_apply(weights, in_spikes, out_spikes, t - w_after,
                        w_before, w_after, delta, w_min, w_max)
    for tau in range(max(T - w_after, 0), T):
        _stdp_apply(weights, in_spikes, out_spikes, tau,
                    w_before, w_after, delta, w_min, w_max)
    prev_out[:] = out_spikes[T - 1] if T else prev_out
