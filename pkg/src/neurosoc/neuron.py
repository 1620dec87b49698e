"""LIF/IF neuron datapath: accumulate, leak, threshold-compare, fire, reset.

Membrane update per time step:

    V(t) = V(t-1) + sum_i w_ij * x_i(t-1) - leak
    spike when V(t) >= Vt + theta  (and not refractory)

Order inside the end-of-step stage is fixed: the leak is subtracted first,
then the threshold comparison runs.  ``leak = 0`` selects pure IF mode.
The membrane is floored at ``v_min`` so the leak cannot drive it
unboundedly negative in fixed point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .fixedpoint import FixedPoint, quantize, sat_add

__all__ = ["ResetMode", "NeuronParams", "NeuronState", "integrate", "end_of_step"]


class ResetMode(enum.Enum):
    TO_REST = "to_rest"
    BY_SUBTRACTION = "by_subtraction"


@dataclass(frozen=True)
class NeuronParams:
    """Per-core neuron constants.

    ``threshold_base`` is Vt; ``leak`` is the constant per-step leak
    (0 for IF).  ``refrac_len`` is the number of silent steps after a
    fire: default 2 for STDP mode; ANN-conversion cores use 0 (rate
    coding assumes pure IF).
    """

    threshold_base: FixedPoint
    leak: FixedPoint
    v_rest: FixedPoint
    v_min: FixedPoint
    refrac_len: int = 2
    reset_mode: ResetMode = ResetMode.TO_REST

    def __post_init__(self):
        if self.threshold_base.raw <= self.v_rest.raw:
            raise ValueError("threshold_base must exceed v_rest")
        if self.refrac_len < 0:
            raise ValueError("refrac_len must be >= 0")
        if self.leak.raw < 0:
            raise ValueError("leak must be >= 0")

    @classmethod
    def default(cls, frac_bits: int = 7, acc_bits: int = 24, threshold: float = 1.0,
                leak: float = 0.0, refrac_len: int = 0,
                reset_mode: ResetMode = ResetMode.TO_REST) -> "NeuronParams":
        q = lambda x: quantize(x, frac_bits, acc_bits)
        return cls(q(threshold), q(leak), q(0.0), q(0.0), refrac_len, reset_mode)


@dataclass(frozen=True)
class NeuronState:
    """Membrane potential, adaptive threshold, refractory countdown."""

    v: FixedPoint
    theta: FixedPoint
    refrac_cnt: int = 0
    fired: bool = False

    @classmethod
    def resting(cls, params: NeuronParams) -> "NeuronState":
        return cls(v=params.v_rest, theta=params.v_rest.with_raw(0))


def integrate(state: NeuronState, weighted_input: FixedPoint) -> NeuronState:
    """Accumulate one weighted input spike; refractory neurons ignore input."""
    if state.refrac_cnt > 0:
        return state
    return replace(state, v=sat_add(state.v, weighted_input))


def end_of_step(state: NeuronState, params: NeuronParams) -> tuple[NeuronState, bool]:
    """Leak, compare, fire/reset and refractory bookkeeping for one step."""
    v_raw = max(state.v.raw - params.leak.raw, params.v_min.raw)
    threshold = params.threshold_base.raw + state.theta.raw
    spike = v_raw >= threshold and state.refrac_cnt == 0
    if spike:
        if params.reset_mode is ResetMode.TO_REST:
            v_raw = params.v_rest.raw
        else:
            v_raw = v_raw - threshold
        refrac = params.refrac_len
    else:
        refrac = max(state.refrac_cnt - 1, 0)
    new_state = NeuronState(
        v=state.v.with_raw(v_raw), theta=state.theta, refrac_cnt=refrac, fired=spike
    )
    return new_state, spike
