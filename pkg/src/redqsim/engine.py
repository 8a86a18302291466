"""Deterministic discrete-event core and the shared-bottleneck topology.

Events are ordered by (time, insertion sequence), so simultaneous
events fire in the order they were scheduled and a run is a pure
function of its scenario.  A single seeded generator supplies all
randomness: per-flow start jitter is drawn first, in flow order, then
one uniform draw per data arrival at the guarded bottleneck queue, in
event order.

The topology is a dumbbell: every sender reaches the first router over
its own access link, the two routers exchange traffic over a pair of
one-way bottleneck links (data direction guarded by the drop
gatekeeper, return direction a plain bounded FIFO), and every receiver
hangs off the second router on its own access link.  Acknowledgment
delivery back into the routers rides two shared fixed-delay wires, so
the round-trip floor is twice the bottleneck delay plus four access
delays.
"""

from __future__ import annotations

import dataclasses
import enum
import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .red import RedParams, RedState, RedVariant, Verdict, on_packet_arrival
from .tcp import Segment, TcpConfig, TcpReceiver, TcpSender, TcpVariant
from . import metrics


class ConfigError(ValueError):
    """Invalid scenario input; names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# ---------------------------------------------------------------
# event core
# ---------------------------------------------------------------

class EventKind(enum.Enum):
    FLOW_START = "flow_start"
    ARRIVAL = "arrival_at_node"
    LINK_DONE = "link_service_complete"
    TIMER = "timer_expiry"
    MEASUREMENT = "measurement_boundary"


@dataclass(order=True, slots=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    fn: Callable[[], None] = field(compare=False)


class EventQueue:
    """Binary-heap scheduler with stable same-time ordering."""

    def __init__(self):
        self.now = 0.0
        self._heap: list[Event] = []
        self._seq = 0
        self.event_count = 0

    def schedule(self, delay: float, kind: EventKind, fn: Callable[[], None]) -> None:
        self.schedule_at(self.now + delay, kind, fn)

    def schedule_at(self, when: float, kind: EventKind, fn: Callable[[], None]) -> None:
        if when < self.now - 1e-12:
            raise RuntimeError("cannot schedule into the past")
        heapq.heappush(self._heap, Event(when, self._seq, kind, fn))
        self._seq += 1

    def run(self, until: float) -> bool:
        """Dispatch events up to and including time `until`.

        Returns True if the queue drained before reaching `until`.
        """
        heap = self._heap
        while heap and heap[0].time <= until:
            ev = heapq.heappop(heap)
            self.now = ev.time
            self.event_count += 1
            ev.fn()
        drained = not heap and self.now < until
        self.now = until
        return drained


# ---------------------------------------------------------------
# admission policies for router queues
# ---------------------------------------------------------------

class GuardedCounters:
    """Per-group arrival/drop tallies plus whole-run conservation totals."""

    def __init__(self, n_groups: int):
        self.arrivals = [0] * n_groups
        self.drops_random = [0] * n_groups
        self.drops_forced_avg = [0] * n_groups
        self.drops_buffer = [0] * n_groups
        self.departed = 0
        self.max_q = 0

    def snapshot(self) -> dict:
        return {
            "arrivals": list(self.arrivals),
            "drops_random": list(self.drops_random),
            "drops_forced_avg": list(self.drops_forced_avg),
            "drops_buffer": list(self.drops_buffer),
        }


class RedAdmission:
    """Drop gatekeeper in front of a router queue.

    Consumes exactly one uniform draw per arriving packet, whatever
    branch the decision takes, so the random stream depends only on the
    arrival order.
    """

    def __init__(
        self,
        params: RedParams,
        variant: RedVariant,
        rng: random.Random,
        group_of: Callable[[int], int],
        n_groups: int,
    ):
        self.params = params
        self.variant = variant
        self.rng = rng
        self.group_of = group_of
        self.state = RedState()
        self.counters = GuardedCounters(n_groups)

    def admit(self, seg: Segment) -> bool:
        u = self.rng.random()
        g = self.group_of(seg.flow_id)
        c = self.counters
        c.arrivals[g] += 1
        decision = on_packet_arrival(
            self.state, self.params, self.variant, seg.wire_bytes, u
        )
        v = decision.verdict
        if v is Verdict.ACCEPT:
            if self.state.q > c.max_q:
                c.max_q = self.state.q
            return True
        if v is Verdict.RANDOM_DROP:
            c.drops_random[g] += 1
        elif v is Verdict.FORCED_DROP_AVG:
            c.drops_forced_avg[g] += 1
        else:
            c.drops_buffer[g] += 1
        return False

    def departed(self) -> None:
        self.state.q -= 1
        self.counters.departed += 1

    @property
    def occupancy(self) -> int:
        return self.state.q


class BernoulliAdmission:
    """Size-blind independent dropper, for calibration runs.

    Same draw discipline and counter layout as the gatekeeper, with a
    constant drop probability and an occupancy cap.
    """

    def __init__(
        self,
        loss_prob: float,
        cap: int,
        rng: random.Random,
        group_of: Callable[[int], int],
        n_groups: int,
    ):
        if not 0.0 <= loss_prob < 1.0:
            raise ValueError("loss_prob must be in [0, 1)")
        self.loss_prob = loss_prob
        self.cap = cap
        self.rng = rng
        self.group_of = group_of
        self._q = 0
        self.counters = GuardedCounters(n_groups)

    def admit(self, seg: Segment) -> bool:
        u = self.rng.random()
        g = self.group_of(seg.flow_id)
        c = self.counters
        c.arrivals[g] += 1
        if self._q >= self.cap:
            c.drops_buffer[g] += 1
            return False
        if u < self.loss_prob:
            c.drops_random[g] += 1
            return False
        self._q += 1
        if self._q > c.max_q:
            c.max_q = self._q
        return True

    def departed(self) -> None:
        self._q -= 1
        self.counters.departed += 1

    @property
    def occupancy(self) -> int:
        return self._q


class FifoAdmission:
    """Plain bounded tail-drop queue (the acknowledgment direction)."""

    def __init__(self, cap: int):
        self.cap = cap
        self._q = 0
        self.arrivals = 0
        self.drops = 0
        self.max_q = 0

    def admit(self, seg: Segment) -> bool:
        self.arrivals += 1
        if self._q >= self.cap:
            self.drops += 1
            return False
        self._q += 1
        if self._q > self.max_q:
            self.max_q = self._q
        return True

    def departed(self) -> None:
        self._q -= 1

    @property
    def occupancy(self) -> int:
        return self._q


# ---------------------------------------------------------------
# links
# ---------------------------------------------------------------

class Link:
    """One-way link: optional admission, serialization, propagation.

    rate_bps=None models a pure fixed-delay wire with no queueing.
    The admission policy's occupancy covers both waiting and in-service
    packets; departed() fires when serialization completes.
    """

    def __init__(
        self,
        eq: EventQueue,
        rate_bps: float | None,
        prop_delay_s: float,
        deliver: Callable[[Segment], None],
        admission=None,
        name: str = "",
    ):
        self.eq = eq
        self.rate_bps = rate_bps
        self.prop_delay_s = prop_delay_s
        self.deliver = deliver
        self.admission = admission
        self.name = name
        self._backlog: deque[Segment] = deque()
        self._busy = False

    def send(self, seg: Segment) -> None:
        if self.rate_bps is None:
            self.eq.schedule(self.prop_delay_s, EventKind.ARRIVAL, lambda s=seg: self.deliver(s))
            return
        if self.admission is not None and not self.admission.admit(seg):
            return
        self._backlog.append(seg)
        if not self._busy:
            self._start_service()

    def _start_service(self) -> None:
        self._busy = True
        seg = self._backlog[0]
        tx_time = seg.wire_bytes * 8.0 / self.rate_bps
        self.eq.schedule(tx_time, EventKind.LINK_DONE, self._finish_service)

    def _finish_service(self) -> None:
        seg = self._backlog.popleft()
        if self.admission is not None:
            self.admission.departed()
        self.eq.schedule(
            self.prop_delay_s, EventKind.ARRIVAL, lambda s=seg: self.deliver(s)
        )
        if self._backlog:
            self._start_service()
        else:
            self._busy = False


# ---------------------------------------------------------------
# scenario
# ---------------------------------------------------------------

@dataclass(frozen=True)
class FlowGroup:
    name: str
    flow_count: int
    mtu: int


@dataclass(frozen=True)
class Scenario:
    name: str
    red_variant: RedVariant
    tcp_variant: TcpVariant
    red: RedParams
    groups: tuple[FlowGroup, ...]
    duration_s: float = 60.0
    warmup_s: float = 10.0
    seed: int = 1
    bottleneck_rate_bps: float = 30e6
    access_rate_bps: float = 100e6
    bottleneck_delay_s: float = 0.015
    access_delay_s: float = 0.001

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("name", "must be non-empty")
        if self.duration_s <= 0.0:
            raise ConfigError("duration", "must be > 0")
        if not 0.0 <= self.warmup_s < self.duration_s:
            raise ConfigError("warmup", "must satisfy 0 <= warmup < duration")
        if self.seed < 0:
            raise ConfigError("seed", "must be >= 0")
        if self.bottleneck_rate_bps <= 0.0:
            raise ConfigError("bottleneck_rate_mbps", "must be > 0")
        if self.access_rate_bps <= 0.0:
            raise ConfigError("access_rate_mbps", "must be > 0")
        if self.bottleneck_delay_s < 0.0:
            raise ConfigError("bottleneck_delay_ms", "must be >= 0")
        if self.access_delay_s < 0.0:
            raise ConfigError("access_delay_ms", "must be >= 0")
        seen = set()
        for g in self.groups:
            if not g.name:
                raise ConfigError("group", "group name must be non-empty")
            if g.name in seen:
                raise ConfigError("group", f"duplicate group name {g.name!r}")
            seen.add(g.name)
            if g.flow_count < 1:
                raise ConfigError("flows", f"group {g.name!r} needs flows >= 1")
            if g.mtu <= 40:
                raise ConfigError("mtu", f"group {g.name!r} mtu must exceed the 40-byte header")
            if g.mtu > self.red.max_packet_size:
                raise ConfigError(
                    "mtu",
                    f"group {g.name!r} mtu exceeds max_packet_size "
                    f"{self.red.max_packet_size}",
                )

    @property
    def flow_count(self) -> int:
        return sum(g.flow_count for g in self.groups)

    def rtt_floor_s(self) -> float:
        return 2.0 * (self.bottleneck_delay_s + 2.0 * self.access_delay_s)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed)

    def with_cell(self, *, name: str, red_variant: RedVariant,
                  tcp_variant: TcpVariant, bottleneck_delay_s: float,
                  seed: int) -> "Scenario":
        """One sweep cell: the base scenario with grid axes overridden."""
        return dataclasses.replace(
            self,
            name=name,
            red_variant=red_variant,
            tcp_variant=tcp_variant,
            bottleneck_delay_s=bottleneck_delay_s,
            seed=seed,
        )


# ---------------------------------------------------------------
# dumbbell simulation
# ---------------------------------------------------------------

class _Flow:
    __slots__ = ("index", "group", "sender", "receiver", "access_link",
                 "recv_link", "scheduled_epoch")

    def __init__(self, index: int, group: int, sender: TcpSender,
                 receiver: TcpReceiver):
        self.index = index
        self.group = group
        self.sender = sender
        self.receiver = receiver
        self.access_link: Link | None = None
        self.recv_link: Link | None = None
        self.scheduled_epoch = -1


class DumbbellSim:
    """One configured experiment, ready to run.

    bottleneck_admission_factory overrides the data-direction queue policy:
    it receives the partially built simulation (rng and group_of are ready)
    and returns the admission object.  By default the scenario's drop
    gatekeeper guards the bottleneck.
    """

    def __init__(self, scenario: Scenario, bottleneck_admission_factory=None):
        self.scenario = scenario
        self.eq = EventQueue()
        self.rng = random.Random(scenario.seed)
        self.flows: list[_Flow] = []
        group_index: list[int] = []
        for g_idx, group in enumerate(scenario.groups):
            config = TcpConfig(variant=scenario.tcp_variant, mss=group.mtu - 40)
            for _ in range(group.flow_count):
                idx = len(self.flows)
                flow = _Flow(idx, g_idx, TcpSender(idx, config),
                             TcpReceiver(idx, config))
                self.flows.append(flow)
                group_index.append(g_idx)
        self.group_of = group_index.__getitem__
        # Start jitter is drawn before any other randomness, in flow order.
        self.start_times = [self.rng.random() for _ in self.flows]

        n_groups = len(scenario.groups)
        if bottleneck_admission_factory is None:
            bottleneck_admission = RedAdmission(
                scenario.red, scenario.red_variant, self.rng,
                self.group_of, n_groups,
            )
        else:
            bottleneck_admission = bottleneck_admission_factory(self)
        self.bottleneck_admission = bottleneck_admission
        self.reverse_admission = FifoAdmission(scenario.red.buffer_cap)

        eq = self.eq
        self.bottleneck_link = Link(
            eq, scenario.bottleneck_rate_bps, scenario.bottleneck_delay_s,
            self._deliver_to_receiver_side, admission=bottleneck_admission,
            name="bottleneck",
        )
        self.reverse_link = Link(
            eq, scenario.bottleneck_rate_bps, scenario.bottleneck_delay_s,
            self._deliver_to_sender_side, admission=self.reverse_admission,
            name="reverse",
        )
        self.recv_ack_wire = Link(
            eq, None, scenario.access_delay_s, self._ack_reaches_far_router,
            name="receivers-to-router",
        )
        self.sender_ack_wire = Link(
            eq, None, scenario.access_delay_s, self._ack_reaches_sender,
            name="router-to-senders",
        )
        for flow in self.flows:
            flow.access_link = Link(
                eq, scenario.access_rate_bps, scenario.access_delay_s,
                self._data_reaches_near_router, name=f"access-{flow.index}",
            )
            flow.recv_link = Link(
                eq, scenario.access_rate_bps, scenario.access_delay_s,
                self._data_reaches_receiver, name=f"recv-{flow.index}",
            )
        self.link_count = 4 + 2 * len(self.flows)
        self._warmup_marks: dict | None = None
        self.stalled = False
        self._finished = False

    # -------------------- wiring callbacks --------------------

    def _transmit(self, flow: _Flow, segments: list[Segment]) -> None:
        for seg in segments:
            flow.access_link.send(seg)
        self._sync_timer(flow)

    def _data_reaches_near_router(self, seg: Segment) -> None:
        self.bottleneck_link.send(seg)

    def _deliver_to_receiver_side(self, seg: Segment) -> None:
        self.flows[seg.flow_id].recv_link.send(seg)

    def _data_reaches_receiver(self, seg: Segment) -> None:
        flow = self.flows[seg.flow_id]
        ack = flow.receiver.on_data(seg, self.eq.now)
        self.recv_ack_wire.send(ack)

    def _ack_reaches_far_router(self, seg: Segment) -> None:
        self.reverse_link.send(seg)

    def _deliver_to_sender_side(self, seg: Segment) -> None:
        self.sender_ack_wire.send(seg)

    def _ack_reaches_sender(self, seg: Segment) -> None:
        flow = self.flows[seg.flow_id]
        out = flow.sender.on_ack(seg, self.eq.now)
        self._transmit(flow, out)

    # -------------------- timers --------------------

    def _sync_timer(self, flow: _Flow) -> None:
        sender = flow.sender
        if sender.rto_deadline is None:
            return
        if sender.timer_epoch == flow.scheduled_epoch:
            return
        epoch = sender.timer_epoch
        flow.scheduled_epoch = epoch
        self.eq.schedule_at(
            sender.rto_deadline, EventKind.TIMER,
            lambda f=flow, e=epoch: self._on_timer(f, e),
        )

    def _on_timer(self, flow: _Flow, epoch: int) -> None:
        if epoch != flow.sender.timer_epoch:
            return  # superseded by a later restart
        out = flow.sender.on_timeout(self.eq.now)
        self._transmit(flow, out)

    # -------------------- run --------------------

    def _start_flow(self, flow: _Flow) -> None:
        out = flow.sender.start(self.eq.now)
        self._transmit(flow, out)

    def _take_warmup_marks(self) -> None:
        self._warmup_marks = {
            "counters": self.bottleneck_admission.counters.snapshot(),
            "delivered": [f.receiver.delivered_bytes for f in self.flows],
        }

    def run(self) -> metrics.RunReport:
        if self._finished:
            raise RuntimeError("simulation already ran")
        self._finished = True
        sc = self.scenario
        for flow, start in zip(self.flows, self.start_times):
            self.eq.schedule_at(
                start, EventKind.FLOW_START, lambda f=flow: self._start_flow(f)
            )
        self.eq.schedule_at(
            sc.warmup_s, EventKind.MEASUREMENT, self._take_warmup_marks
        )
        drained = self.eq.run(sc.duration_s)
        self.stalled = drained and bool(self.flows)
        return self._build_report()

    def _build_report(self) -> metrics.RunReport:
        sc = self.scenario
        marks = self._warmup_marks
        if marks is None:  # warmup boundary never reached
            marks = {
                "counters": self.bottleneck_admission.counters.snapshot(),
                "delivered": [f.receiver.delivered_bytes for f in self.flows],
            }
        end_counters = self.bottleneck_admission.counters
        delivered_delta = [
            f.receiver.delivered_bytes - base
            for f, base in zip(self.flows, marks["delivered"])
        ]
        interval = sc.duration_s - sc.warmup_s
        diagnostics = []
        if self.stalled:
            diagnostics.append(
                "event queue drained before the configured duration"
            )
        return metrics.build_run_report(
            scenario=sc,
            interval_s=interval,
            group_of=self.group_of,
            delivered_delta=delivered_delta,
            start_counters=marks["counters"],
            end_counters=end_counters,
            reverse=self.reverse_admission,
            bottleneck_occupancy=self.bottleneck_admission.occupancy,
            event_count=self.eq.event_count,
            stalled=self.stalled,
            diagnostics=diagnostics,
        )


def run_scenario(scenario: Scenario,
                 bottleneck_admission_factory=None) -> metrics.RunReport:
    sim = DumbbellSim(
        scenario, bottleneck_admission_factory=bottleneck_admission_factory)
    return sim.run()
