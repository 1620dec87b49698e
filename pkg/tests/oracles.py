"""Independent reference implementations used as test oracles.

Deliberately written as plain triple loops over Python integers (which
are arbitrary-width, i.e. "wide"), with no numpy vectorization and no
shared code with the package kernels.
"""


def clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def golden_lif(in_spikes, weights, *, threshold, leak, v_rest, v_min,
               refrac_len, reset_by_sub, acc_min, acc_max,
               w_inh=0, recurrent=False, self_connect=False,
               v0=None, theta=None):
    """Scalar membrane recurrence: V(t) = V(t-1) + sum w*x - leak, spike
    when V >= Vt + theta outside refractory; returns [T][n_post] 0/1."""
    T = len(in_spikes)
    n_pre = len(in_spikes[0]) if T else 0
    n_post = len(weights[0]) if n_pre else 0
    v = list(v0) if v0 is not None else [v_rest] * n_post
    th = list(theta) if theta is not None else [0] * n_post
    refrac = [0] * n_post
    prev = [0] * n_post
    out = []
    for t in range(T):
        acc = [0] * n_post
        for i in range(n_pre):
            if in_spikes[t][i]:
                for j in range(n_post):
                    acc[j] += weights[i][j]
        if recurrent:
            cnt = sum(prev)
            if cnt:
                for j in range(n_post):
                    own = prev[j] if not self_connect else 0
                    acc[j] += w_inh * (cnt - own)
        fired = [0] * n_post
        for j in range(n_post):
            if refrac[j] == 0:
                v[j] = clamp(v[j] + acc[j], acc_min, acc_max)
            v[j] = max(v[j] - leak, v_min)
            thr = threshold + th[j]
            if refrac[j] == 0 and v[j] >= thr:
                fired[j] = 1
                v[j] = (v[j] - thr) if reset_by_sub else v_rest
                refrac[j] = refrac_len
            else:
                refrac[j] = max(refrac[j] - 1, 0)
        out.append(fired)
        prev = fired
    return out


def golden_stdp_train(in_spikes, weights, *, threshold, leak, v_rest, v_min,
                      refrac_len, reset_by_sub, acc_min, acc_max,
                      w_inh=0, recurrent=False, self_connect=False,
                      delta=1, w_min=0, w_max=127, w_before=1, w_after=1,
                      theta_plus=0, theta_decay_q16=65536):
    """Scalar twin of the training pipeline: per-step neuron update plus
    adaptive threshold, with the fixed-increment STDP rule applied one
    step behind (windows outside the sample read as silent).

    Mutates ``weights`` (list of lists); returns (out, theta).
    """
    T = len(in_spikes)
    n_pre = len(in_spikes[0]) if T else 0
    n_post = len(weights[0]) if n_pre else 0
    v = [v_rest] * n_post
    theta = [0] * n_post
    refrac = [0] * n_post
    prev = [0] * n_post
    out = []

    def learn(tau):
        if not any(out[tau]):
            return
        before = [0] * n_pre
        for s in range(max(tau - w_before, 0), tau + 1):
            for i in range(n_pre):
                if in_spikes[s][i]:
                    before[i] = 1
        after = [0] * n_pre
        for s in range(tau + 1, min(tau + w_after, T - 1) + 1):
            for i in range(n_pre):
                if in_spikes[s][i]:
                    after[i] = 1
        for j in range(n_post):
            if not out[tau][j]:
                continue
            for i in range(n_pre):
                if before[i]:
                    weights[i][j] = min(weights[i][j] + delta, w_max)
                elif after[i]:
                    weights[i][j] = max(weights[i][j] - delta, w_min)

    for t in range(T):
        acc = [0] * n_post
        for i in range(n_pre):
            if in_spikes[t][i]:
                for j in range(n_post):
                    acc[j] += weights[i][j]
        if recurrent:
            cnt = sum(prev)
            if cnt:
                for j in range(n_post):
                    own = prev[j] if not self_connect else 0
                    acc[j] += w_inh * (cnt - own)
        fired = [0] * n_post
        for j in range(n_post):
            if refrac[j] == 0:
                v[j] = clamp(v[j] + acc[j], acc_min, acc_max)
            v[j] = max(v[j] - leak, v_min)
            thr = threshold + theta[j]
            if refrac[j] == 0 and v[j] >= thr:
                fired[j] = 1
                v[j] = (v[j] - thr) if reset_by_sub else v_rest
                refrac[j] = refrac_len
            else:
                refrac[j] = max(refrac[j] - 1, 0)
        out.append(fired)
        prev = fired
        for j in range(n_post):
            if fired[j]:
                theta[j] += theta_plus
            theta[j] = (theta[j] * theta_decay_q16) >> 16
        if t >= w_after:
            learn(t - w_after)
    for tau in range(max(T - w_after, 0), T):
        learn(tau)
    return out, theta
