"""Random early detection gatekeeper with five packet-size drop policies.

The gatekeeper sits in front of a bounded FIFO queue and decides, per
arriving packet, whether to accept it or drop it.  The decision is based
on an exponentially weighted moving average of the queue size and on a
counter of packets accepted since the last drop.  The five policy
variants differ only in how the packet length enters the drop
probability and in how the counter advances.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class RedVariant(enum.Enum):
    """Drop-probability policy selector.

    RED_1 ignores packet size.  RED_2 scales the temporary probability
    by L/M before uniformization.  RED_3 scales only the numerator.
    RED_4 additionally advances the counter by L/M per accepted packet,
    and RED_5 uses the square of L/M in both places.
    """

    RED_1 = "RED_1"
    RED_2 = "RED_2"
    RED_3 = "RED_3"
    RED_4 = "RED_4"
    RED_5 = "RED_5"

    def __str__(self) -> str:
        return self.value


class Verdict(enum.Enum):
    ACCEPT = "accept"
    RANDOM_DROP = "random_drop"
    FORCED_DROP_AVG = "forced_drop_avg"
    FORCED_DROP_BUFFER = "forced_drop_buffer"


@dataclass(frozen=True)
class RedParams:
    """Static gatekeeper configuration.

    Thresholds and the buffer capacity are counted in packets, not
    bytes.  max_packet_size is the reference length M that packet
    lengths are normalized against.
    """

    w_q: float = 0.002
    min_th: float = 40.0
    max_th: float = 120.0
    max_p: float = 0.1
    buffer_cap: int = 200
    max_packet_size: int = 1500

    def __post_init__(self) -> None:
        if not 0.0 < self.w_q <= 1.0:
            raise ValueError("w_q must be in (0, 1]")
        if self.min_th < 0.0:
            raise ValueError("min_th must be >= 0")
        if self.max_th <= self.min_th:
            raise ValueError("max_th must exceed min_th")
        if not 0.0 < self.max_p <= 1.0:
            raise ValueError("max_p must be in (0, 1]")
        if self.buffer_cap < 1:
            raise ValueError("buffer_cap must be >= 1")
        if self.max_th > self.buffer_cap:
            raise ValueError("max_th must not exceed buffer_cap")
        if self.max_packet_size < 1:
            raise ValueError("max_packet_size must be >= 1")


@dataclass
class RedState:
    """Mutable gatekeeper state.

    count holds the accepted weight since the last drop: whole packets
    for RED_1/2/3, L/M per packet for RED_4 and (L/M)^2 for RED_5.  It
    resets to zero on every drop and whenever avg falls below min_th.
    """

    avg: float = 0.0
    q: int = 0
    count: float = 0.0


@dataclass(frozen=True)
class DropDecision:
    verdict: Verdict
    p_b: float = 0.0
    p_a: float = 0.0

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


def update_avg(state: RedState, params: RedParams, q_now: int) -> float:
    """Fold the instantaneous queue size into the moving average.

    Returns the new average and stores it on the state.  The average
    moves toward q_now, so it always lands between the old average and
    q_now.  No idle-time correction is applied.
    """
    state.avg = (1.0 - params.w_q) * state.avg + params.w_q * q_now
    return state.avg


def compute_pb(params: RedParams, avg: float) -> float:
    """Temporary drop probability for an average inside the random region.

    Grows linearly from 0 at min_th to max_p at max_th.  Averages
    outside [min_th, max_th) are handled by the caller through accept
    or forced-drop branches, so they are rejected here.
    """
    if not params.min_th <= avg < params.max_th:
        raise ValueError("avg outside the random-drop region")
    return params.max_p * (avg - params.min_th) / (params.max_th - params.min_th)


def _size_ratio(params: RedParams, packet_len: int) -> float:
    if not 0 < packet_len <= params.max_packet_size:
        raise ValueError("packet_len must be in (0, max_packet_size]")
    return packet_len / params.max_packet_size


def compute_pa(
    variant: RedVariant,
    params: RedParams,
    p_b: float,
    count: float,
    packet_len: int,
) -> float:
    """Final drop probability after count-based uniformization.

    count is the weight accepted since the last drop, so the first
    packet after a drop is evaluated with count = 0.  A non-positive
    denominator means the uniformization window is exhausted and the
    packet is dropped with certainty.
    """
    s = _size_ratio(params, packet_len)
    if variant is RedVariant.RED_1:
        num = p_b
        den = 1.0 - count * p_b
    elif variant is RedVariant.RED_2:
        num = s * p_b
        den = 1.0 - count * s * p_b
    elif variant is RedVariant.RED_3:
        num = s * p_b
        den = 1.0 - count * p_b
    elif variant is RedVariant.RED_4:
        num = s * p_b
        den = 1.0 - count * p_b
    else:  # RED_5
        num = s * s * p_b
        den = 1.0 - count * p_b
    if den <= 0.0:
        return 1.0
    p_a = num / den
    if p_a < 0.0:
        return 0.0
    if p_a > 1.0:
        return 1.0
    return p_a


def count_increment(variant: RedVariant, params: RedParams, packet_len: int) -> float:
    """Weight an accepted packet adds to the post-drop counter."""
    if variant in (RedVariant.RED_1, RedVariant.RED_2, RedVariant.RED_3):
        return 1.0
    s = _size_ratio(params, packet_len)
    if variant is RedVariant.RED_4:
        return s
    return s * s  # RED_5


def random_region_step(
    variant: RedVariant,
    params: RedParams,
    p_b: float,
    state: RedState,
    packet_len: int,
    u: float,
) -> tuple[bool, float]:
    """One random-region decision with count bookkeeping.

    Evaluates p_a against the caller-supplied uniform draw u, then
    either resets the counter (drop) or advances it (accept).  Exposed
    separately so the drop-law harness can drive the exact production
    mechanics with a frozen p_b.  Returns (dropped, p_a).
    """
    p_a = compute_pa(variant, params, p_b, state.count, packet_len)
    if u < p_a:
        state.count = 0.0
        return True, p_a
    state.count += count_increment(variant, params, packet_len)
    return False, p_a


def on_packet_arrival(
    state: RedState,
    params: RedParams,
    variant: RedVariant,
    packet_len: int,
    u: float,
) -> DropDecision:
    """Full admission decision for one arriving packet.

    Order: fold q into the average, reject on a full buffer, accept
    below min_th, force-drop at or above max_th, otherwise draw against
    p_a.  On accept the caller-visible q is incremented here; the
    caller decrements it when the packet leaves the queue.
    """
    if not 0 < packet_len <= params.max_packet_size:
        raise ValueError("packet_len must be in (0, max_packet_size]")
    if not 0.0 <= u < 1.0:
        raise ValueError("u must be in [0, 1)")
    avg = update_avg(state, params, state.q)
    if state.q >= params.buffer_cap:
        state.count = 0.0
        return DropDecision(Verdict.FORCED_DROP_BUFFER)
    if avg < params.min_th:
        state.count = 0.0
        state.q += 1
        return DropDecision(Verdict.ACCEPT)
    if avg >= params.max_th:
        state.count = 0.0
        return DropDecision(Verdict.FORCED_DROP_AVG)
    p_b = compute_pb(params, avg)
    dropped, p_a = random_region_step(variant, params, p_b, state, packet_len, u)
    if dropped:
        return DropDecision(Verdict.RANDOM_DROP, p_b=p_b, p_a=p_a)
    state.q += 1
    return DropDecision(Verdict.ACCEPT, p_b=p_b, p_a=p_a)
