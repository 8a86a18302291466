"""Measurement-window accounting: goodput, loss ratios, conservation.

Goodput counts each payload byte once, at first in-order delivery,
over the post-warmup window.  Loss ratios are per traffic group at the
guarded bottleneck queue, drops of every cause over arrivals, within
the same window.  The conservation audit covers the whole run: every
arrival is either accepted or dropped, and every accepted packet either
departed or still sits in the queue.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GroupStats:
    name: str
    mtu: int
    flow_count: int
    goodput_bps: float
    plr: float | None
    arrivals: int
    drops_random: int
    drops_forced_avg: int
    drops_buffer: int

    @property
    def drops_total(self) -> int:
        return self.drops_random + self.drops_forced_avg + self.drops_buffer


@dataclass(frozen=True)
class BottleneckAudit:
    """Whole-run packet conservation at the guarded queue."""

    arrivals: int
    accepted: int
    drops_random: int
    drops_forced_avg: int
    drops_buffer: int
    departed: int
    residual_q: int
    max_q: int

    @property
    def drops_total(self) -> int:
        return self.drops_random + self.drops_forced_avg + self.drops_buffer

    @property
    def conserved(self) -> bool:
        return (
            self.arrivals == self.accepted + self.drops_total
            and self.accepted == self.departed + self.residual_q
        )


@dataclass(frozen=True)
class RunReport:
    scenario_name: str
    red_variant: str
    tcp_variant: str
    bottleneck_delay_s: float
    seed: int
    duration_s: float
    warmup_s: float
    interval_s: float
    groups: tuple[GroupStats, ...]
    flow_goodput_bps: tuple[float, ...]
    total_goodput_bps: float
    bottleneck: BottleneckAudit
    reverse_arrivals: int
    reverse_drops: int
    event_count: int
    stalled: bool
    diagnostics: tuple[str, ...]


def goodput_bps(delivered_bytes: int, interval_s: float) -> float:
    """Unique-delivery payload rate over a measurement window."""
    if interval_s <= 0.0:
        raise ValueError("interval_s must be > 0")
    if delivered_bytes < 0:
        raise ValueError("delivered_bytes must be >= 0")
    return delivered_bytes * 8.0 / interval_s


def loss_ratio(drops: int, arrivals: int) -> float | None:
    """Drops over arrivals; None when nothing arrived."""
    if drops < 0 or arrivals < 0 or drops > arrivals:
        raise ValueError("need 0 <= drops <= arrivals")
    if arrivals == 0:
        return None
    return drops / arrivals


def build_run_report(
    scenario,
    interval_s: float,
    group_of,
    delivered_delta: list[int],
    start_counters: dict,
    end_counters,
    reverse,
    bottleneck_occupancy: int,
    event_count: int,
    stalled: bool,
    diagnostics: list[str],
) -> RunReport:
    flow_goodput = tuple(
        goodput_bps(delta, interval_s) for delta in delivered_delta
    )
    group_delivered = [0] * len(scenario.groups)
    for idx, delta in enumerate(delivered_delta):
        group_delivered[group_of(idx)] += delta

    diagnostics = list(diagnostics)
    groups = []
    for g_idx, group in enumerate(scenario.groups):
        arrivals = end_counters.arrivals[g_idx] - start_counters["arrivals"][g_idx]
        d_rand = end_counters.drops_random[g_idx] - start_counters["drops_random"][g_idx]
        d_avg = (
            end_counters.drops_forced_avg[g_idx]
            - start_counters["drops_forced_avg"][g_idx]
        )
        d_buf = end_counters.drops_buffer[g_idx] - start_counters["drops_buffer"][g_idx]
        plr = loss_ratio(d_rand + d_avg + d_buf, arrivals)
        if plr is None:
            diagnostics.append(
                f"group {group.name!r}: no bottleneck arrivals in the "
                "measurement window, loss ratio omitted"
            )
        groups.append(
            GroupStats(
                name=group.name,
                mtu=group.mtu,
                flow_count=group.flow_count,
                goodput_bps=goodput_bps(group_delivered[g_idx], interval_s),
                plr=plr,
                arrivals=arrivals,
                drops_random=d_rand,
                drops_forced_avg=d_avg,
                drops_buffer=d_buf,
            )
        )

    audit = BottleneckAudit(
        arrivals=sum(end_counters.arrivals),
        accepted=sum(end_counters.arrivals)
        - sum(end_counters.drops_random)
        - sum(end_counters.drops_forced_avg)
        - sum(end_counters.drops_buffer),
        drops_random=sum(end_counters.drops_random),
        drops_forced_avg=sum(end_counters.drops_forced_avg),
        drops_buffer=sum(end_counters.drops_buffer),
        departed=end_counters.departed,
        residual_q=bottleneck_occupancy,
        max_q=end_counters.max_q,
    )
    return RunReport(
        scenario_name=scenario.name,
        red_variant=scenario.red_variant.value,
        tcp_variant=scenario.tcp_variant.value,
        bottleneck_delay_s=scenario.bottleneck_delay_s,
        seed=scenario.seed,
        duration_s=scenario.duration_s,
        warmup_s=scenario.warmup_s,
        interval_s=interval_s,
        groups=tuple(groups),
        flow_goodput_bps=flow_goodput,
        total_goodput_bps=sum(flow_goodput),
        bottleneck=audit,
        reverse_arrivals=reverse.arrivals,
        reverse_drops=reverse.drops,
        event_count=event_count,
        stalled=stalled,
        diagnostics=tuple(diagnostics),
    )
