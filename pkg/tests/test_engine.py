"""Tests for the discrete-event core and the dumbbell simulation."""

import pytest

from redqsim.cli import report_rows
from redqsim.engine import (
    BernoulliAdmission,
    EventKind,
    ConfigError,
    DumbbellSim,
    EventQueue,
    FlowGroup,
    Scenario,
    run_scenario,
)
from redqsim.red import RedParams, RedVariant
from redqsim.tcp import TcpSender, TcpVariant

THREE_GROUPS = (
    FlowGroup("large", 20, 1500),
    FlowGroup("medium", 20, 750),
    FlowGroup("small", 20, 375),
)


def make_scenario(**overrides):
    defaults = dict(
        name="test",
        red_variant=RedVariant.RED_1,
        tcp_variant=TcpVariant.RENO,
        red=RedParams(),
        groups=THREE_GROUPS,
        duration_s=10.0,
        warmup_s=2.0,
        seed=1,
        bottleneck_delay_s=0.015,
    )
    defaults.update(overrides)
    return Scenario(**defaults)


# ---------------------------------------------------------------
# event queue
# ---------------------------------------------------------------

class TestEventQueue:
    def test_dispatch_orders_by_time_then_sequence(self):
        eq = EventQueue()
        order = []
        eq.schedule(0.5, EventKind.TIMER, lambda: order.append("late"))
        eq.schedule(0.1, EventKind.TIMER, lambda: order.append("early"))
        eq.schedule(0.1, EventKind.TIMER, lambda: order.append("early-second"))
        eq.run(until=1.0)
        assert order == ["early", "early-second", "late"]

    def test_scheduling_in_the_past_rejected(self):
        eq = EventQueue()
        eq.schedule(0.2, EventKind.TIMER,
                    lambda: eq.schedule_at(0.1, EventKind.TIMER, lambda: None))
        with pytest.raises(RuntimeError):
            eq.run(until=1.0)

    def test_run_returns_drained_flag(self):
        eq = EventQueue()
        eq.schedule(0.1, EventKind.TIMER, lambda: None)
        assert eq.run(until=1.0) is True
        assert eq.now == 1.0

    def test_run_stops_at_horizon_with_pending_events(self):
        eq = EventQueue()
        fired = []
        eq.schedule(0.5, EventKind.TIMER, lambda: fired.append(1))
        eq.schedule(2.0, EventKind.TIMER, lambda: fired.append(2))
        assert eq.run(until=1.0) is False
        assert fired == [1]

    def test_events_within_nested_scheduling_keep_causality(self):
        eq = EventQueue()
        times = []

        def chain():
            times.append(eq.now)
            if len(times) < 5:
                eq.schedule(0.1, EventKind.TIMER, chain)

        eq.schedule(0.1, EventKind.TIMER, chain)
        eq.run(until=10.0)
        assert times == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])


# ---------------------------------------------------------------
# scenario validation
# ---------------------------------------------------------------

class TestScenarioValidation:
    @pytest.mark.parametrize(
        "overrides, field",
        [
            (dict(duration_s=0.0), "duration"),
            (dict(warmup_s=10.0), "warmup"),
            (dict(seed=-1), "seed"),
            (dict(bottleneck_rate_bps=0.0), "bottleneck_rate_mbps"),
            (dict(bottleneck_delay_s=-0.001), "bottleneck_delay_ms"),
            (dict(groups=(FlowGroup("g", 0, 1500),)), "flows"),
            (dict(groups=(FlowGroup("g", 1, 40),)), "mtu"),
            (dict(groups=(FlowGroup("g", 1, 3000),)), "mtu"),
            (dict(groups=(FlowGroup("a", 1, 750), FlowGroup("a", 1, 375))), "group"),
        ],
    )
    def test_invalid_fields_named(self, overrides, field):
        with pytest.raises(ConfigError) as err:
            make_scenario(**overrides)
        assert err.value.field == field

    def test_rtt_floor_combines_all_propagation_delays(self):
        sc = make_scenario(bottleneck_delay_s=0.015, access_delay_s=0.001)
        assert sc.rtt_floor_s() == pytest.approx(0.034)

    def test_flow_count_sums_groups(self):
        assert make_scenario().flow_count == 60


# ---------------------------------------------------------------
# topology shape
# ---------------------------------------------------------------

class TestTopology:
    def test_paper_defaults_build_124_links(self):
        sim = DumbbellSim(make_scenario())
        assert sim.link_count == 124

    def test_single_flow_builds_minimal_path(self):
        sim = DumbbellSim(make_scenario(groups=(FlowGroup("solo", 1, 1500),)))
        assert sim.link_count == 6


# ---------------------------------------------------------------
# determinism and conservation
# ---------------------------------------------------------------

class TestDeterminism:
    def test_same_seed_gives_identical_reports_and_csv(self):
        sc = make_scenario()
        first = run_scenario(sc)
        second = run_scenario(sc)
        assert first == second
        assert report_rows(first) == report_rows(second)

    def test_different_seeds_differ(self):
        first = run_scenario(make_scenario(seed=1))
        second = run_scenario(make_scenario(seed=2))
        assert first.bottleneck.arrivals != second.bottleneck.arrivals


class TestConservation:
    @pytest.mark.parametrize("variant", list(RedVariant), ids=lambda v: v.value)
    def test_bottleneck_audit_conserves_packets(self, variant):
        report = run_scenario(make_scenario(red_variant=variant, duration_s=6.0,
                                            warmup_s=1.0))
        audit = report.bottleneck
        assert audit.arrivals == audit.accepted + audit.drops_total
        assert audit.accepted == audit.departed + audit.residual_q
        assert audit.conserved

    def test_occupancy_never_exceeds_buffer_cap(self):
        report = run_scenario(make_scenario(duration_s=6.0, warmup_s=1.0))
        assert report.bottleneck.max_q <= report.bottleneck.arrivals
        assert report.bottleneck.max_q <= 200


# ---------------------------------------------------------------
# behavior checks
# ---------------------------------------------------------------

class TestBehavior:
    def test_zero_groups_gives_empty_report(self):
        report = run_scenario(make_scenario(groups=()))
        assert report.groups == ()
        assert report.total_goodput_bps == 0.0
        assert report.bottleneck.arrivals == 0
        assert not report.stalled

    def test_single_flow_fills_bottleneck_when_red_is_idle(self):
        # Thresholds pushed to the buffer ceiling keep RED out of the way, so
        # one greedy flow should hold the bottleneck near its payload rate.
        sc = make_scenario(
            groups=(FlowGroup("solo", 1, 1500),),
            red=RedParams(min_th=150.0, max_th=190.0, buffer_cap=200),
            duration_s=20.0,
            warmup_s=4.0,
        )
        report = run_scenario(sc)
        payload_rate = 30e6 * (1460 / 1500)
        assert report.total_goodput_bps == pytest.approx(payload_rate, rel=0.05)

    def test_goodput_counts_only_unique_payload(self):
        # Under forced random loss, goodput must stay below the capacity share
        # even though retransmissions add to wire throughput.
        sc = make_scenario(duration_s=8.0, warmup_s=2.0)
        lossy = run_scenario(sc, bottleneck_admission_factory=lambda sim:
                             BernoulliAdmission(0.05, 200, sim.rng,
                                                sim.group_of, len(sc.groups)))
        assert lossy.bottleneck.drops_random > 0
        assert lossy.total_goodput_bps < 30e6

    def test_stalled_run_is_reported(self, monkeypatch):
        # A sender that never emits anything drains the event queue early;
        # the report must flag the stall rather than staying silent.
        monkeypatch.setattr(TcpSender, "start", lambda self, now: [])
        report = run_scenario(make_scenario(duration_s=10.0, warmup_s=2.0))
        assert report.stalled
