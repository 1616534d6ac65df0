from __future__ import annotations

import numpy as np
import pytest

from optpipe.cba import (
    IterationResult,
    LabelSet,
    OrchestratorConfig,
    label_cb_tasks,
    orchestrate,
    plan_requests,
    verify_label_soundness,
)
from optpipe.engine import PolicyConfig, simulate_iteration
from optpipe.latency import LatencyParams, RequestLabel
from optpipe.topology import BackgroundTrafficModel, Network, advance_network, load_nsfnet
from optpipe.workload import ScheduleKind, build_profile, build_schedule, partition_stages

ZERO_COMM = LatencyParams(intra_dc_latency_s=0.0)


def build(p, placement, m, kind=ScheduleKind.GPIPE, fwd=1e-3, bwd=2e-3, msg=16 * 2**20):
    profile = build_profile(
        "flat", n_layers=p, fwd_time_per_layer_s=fwd, bwd_time_per_layer_s=bwd,
        msg_bytes_per_microbatch=msg,
    )
    stages = partition_stages(profile, p, placement)
    return stages, build_schedule(kind, stages, m)


class TestLabelCbTasks:
    def test_zero_comm_yields_empty_set(self):
        net = load_nsfnet()
        stages, tasks = build(4, ["WA"] * 4, 8)
        tl = simulate_iteration(net, stages, tasks, PolicyConfig(), ZERO_COMM, msg_bits=0.0)
        labels = label_cb_tasks(tl, tasks)
        assert labels.cb_tasks == set()
        assert labels.blocked_tasks == set()
        assert labels.iteration_blocking_prob == 0.0

    def test_dci_delayed_task_is_labeled(self):
        # two stages on distant DCs, tiny compute: consumer waits on the wire
        net = Network(["A", "B"], [("A", "B", 2000.0)], fs_total=80)
        stages, tasks = build(2, ["A", "B"], 3, fwd=1e-4, bwd=1e-4, msg=16 * 2**20)
        tl = simulate_iteration(net, stages, tasks, PolicyConfig(), LatencyParams(),
                                msg_bits=16 * 2**20 * 8)
        labels = label_cb_tasks(tl, tasks)
        by = {(t.stage_id, t.direction.value, t.microbatch): t for t in tasks}
        # stage 1's later forwards idle behind message arrivals
        assert by[(1, "F", 1)].id in labels.cb_tasks
        assert by[(1, "F", 2)].id in labels.cb_tasks
        # a stage's first task has no intra-stage predecessor, never labeled
        assert by[(1, "F", 0)].id not in labels.cb_tasks
        verify_label_soundness(tl, tasks, labels)

    def test_slow_compute_with_fast_intra_message_not_labeled(self):
        # the gap exists, but the binding input is an intra-DC message whose
        # lateness comes from upstream compute, not the interconnect
        net = load_nsfnet()
        stages, tasks = build(2, ["WA", "WA"], 3, fwd=5e-3, bwd=1e-2)
        tl = simulate_iteration(net, stages, tasks, PolicyConfig(), LatencyParams(),
                                msg_bits=8.0)
        labels = label_cb_tasks(tl, tasks)
        assert labels.cb_tasks == set()

    def test_mismatched_inputs_rejected(self):
        net = load_nsfnet()
        stages, tasks = build(2, ["WA", "WA"], 2)
        tl = simulate_iteration(net, stages, tasks, PolicyConfig(), ZERO_COMM, msg_bits=0.0)
        with pytest.raises(ValueError):
            label_cb_tasks(tl, tasks[:-1])

    def test_labeling_pure_function_of_timeline(self):
        net = Network(["A", "B"], [("A", "B", 1500.0)], fs_total=80)
        stages, tasks = build(2, ["A", "B"], 4, fwd=1e-4, bwd=1e-4)
        tl = simulate_iteration(net, stages, tasks, PolicyConfig(), LatencyParams(),
                                msg_bits=1e8)
        a = label_cb_tasks(tl, tasks)
        b = label_cb_tasks(tl, tasks)
        assert a.cb_tasks == b.cb_tasks and a.blocked_tasks == b.blocked_tasks


class TestPlanRequests:
    def setup_method(self):
        _, self.tasks = build(2, ["A", "B"], 2)
        self.config = OrchestratorConfig()
        self.policy = PolicyConfig()
        self.consumers = [t for t in self.tasks if t.msg_pred is not None]

    def test_warmup_all_normal(self):
        labels, boost = plan_requests(None, self.config, self.tasks, self.policy)
        assert labels == {} and boost == self.policy.boost_factor

    def test_cb_task_gets_full_boost_when_clean(self):
        v = self.consumers[0]
        ls = LabelSet(cb_tasks={v.id}, iteration_blocking_prob=0.0)
        labels, boost = plan_requests(ls, self.config, self.tasks, self.policy)
        assert labels[v.id] == RequestLabel(cb=True, blocked=False)
        assert boost == self.policy.boost_factor

    def test_high_blocking_halves_boost(self):
        v = self.consumers[0]
        ls = LabelSet(cb_tasks={v.id}, iteration_blocking_prob=0.2)
        _, boost = plan_requests(ls, self.config, self.tasks, self.policy)
        assert boost == self.policy.boost_factor / 2

    def test_boost_recovers_only_after_block_free_iteration(self):
        ls_dirty = LabelSet(iteration_blocking_prob=0.2)
        ls_mid = LabelSet(iteration_blocking_prob=0.01)
        ls_clean = LabelSet(iteration_blocking_prob=0.0)
        _, b1 = plan_requests(ls_dirty, self.config, self.tasks, self.policy, 2.0)
        assert b1 == 1.0
        _, b2 = plan_requests(ls_mid, self.config, self.tasks, self.policy, b1)
        assert b2 == 1.0  # held, not recovered
        _, b3 = plan_requests(ls_clean, self.config, self.tasks, self.policy, b2)
        assert b3 == 1.25

    def test_blocked_sender_flags_consumer_request(self):
        v = self.consumers[0]
        ls = LabelSet(blocked_tasks={v.msg_pred})
        labels, _ = plan_requests(ls, self.config, self.tasks, self.policy)
        assert labels[v.id] == RequestLabel(cb=False, blocked=True)

    def test_boost_outgoing_flag(self):
        v = self.consumers[0]
        ls = LabelSet(cb_tasks={v.msg_pred})
        labels, _ = plan_requests(ls, self.config, self.tasks, self.policy)
        assert v.id not in labels
        out_policy = PolicyConfig(boost_outgoing=True)
        labels, _ = plan_requests(ls, self.config, self.tasks, out_policy)
        assert labels[v.id].cb


class TestOrchestrate:
    def test_iteration_count_and_warmup(self):
        net = load_nsfnet()
        stages, tasks = build(2, ["IL", "PA"], 2)
        results = orchestrate(OrchestratorConfig(n_iterations=11), net, stages, tasks,
                              PolicyConfig(), LatencyParams(), msg_bits=1e6)
        assert len(results) == 11
        assert [r.iteration for r in results] == list(range(11))
        measured = [r for r in results if r.iteration >= 1]
        assert len(measured) == 10

    def test_cb_transfer_boosted_and_faster_next_iteration(self):
        # persistent DCI bubble on an otherwise empty network: the labeled
        # consumer's incoming transfer gets more slots and strictly less time
        net = Network(["A", "B"], [("A", "B", 2000.0)], fs_total=80)
        stages, tasks = build(2, ["A", "B"], 3, fwd=1e-4, bwd=1e-4)
        results = orchestrate(OrchestratorConfig(n_iterations=3), net, stages, tasks,
                              PolicyConfig(), LatencyParams(), msg_bits=16 * 2**20 * 8)
        warm, nxt = results[0], results[1]
        cb = results[0].labels.cb_tasks
        assert cb
        tasks_by_id = {t.id: t for t in tasks}
        for tid in cb:
            t0 = next(x for x in warm.timeline.transfers if x.consumer_id == tid)
            t1 = next(x for x in nxt.timeline.transfers if x.consumer_id == tid)
            assert t1.n_fs == 8 and t0.n_fs == 4
            assert (t1.complete_time - t1.issue_time) < (t0.complete_time - t0.issue_time)

    def test_cba_not_slower_than_warmup_on_uncontended_network(self):
        net = Network(["A", "B"], [("A", "B", 2000.0)], fs_total=80)
        stages, tasks = build(2, ["A", "B"], 4, fwd=1e-4, bwd=1e-4)
        results = orchestrate(OrchestratorConfig(n_iterations=5), net, stages, tasks,
                              PolicyConfig(), LatencyParams(), msg_bits=16 * 2**20 * 8)
        warm = results[0].runtime_s
        for r in results[1:]:
            assert r.runtime_s <= warm + 1e-12

    def test_baselines_ignore_labels(self):
        # re-running a baseline must reproduce iteration 0's timeline exactly
        # when the network carries no dynamics (labels cause no difference)
        for selector in ("ksp_ff", "sd_ff"):
            net = load_nsfnet()
            stages, tasks = build(4, ["IL", "PA", "NY", "DC"], 4)
            results = orchestrate(OrchestratorConfig(n_iterations=4), net, stages, tasks,
                                  PolicyConfig(selector=selector), LatencyParams(),
                                  msg_bits=16e6)
            logs = [r.timeline.event_log_lines() for r in results]
            assert all(lg == logs[0] for lg in logs[1:])
            assert any(r.labels.cb_tasks for r in results)  # computed for analysis

    def test_deterministic_with_background(self):
        def run():
            net = load_nsfnet()
            bg = BackgroundTrafficModel(20.0, 2.0, (1, 8), 5)
            net.attach_background(bg)
            advance_network(net, 10.0)
            stages, tasks = build(4, ["IL", "PA", "NY", "DC"], 4)
            results = orchestrate(OrchestratorConfig(n_iterations=4), net, stages, tasks,
                                  PolicyConfig(), LatencyParams(), msg_bits=16e6, bg=bg)
            return [line for r in results for line in r.timeline.event_log_lines()]

        assert run() == run()

    def test_labels_written_back_to_tasks(self):
        net = Network(["A", "B"], [("A", "B", 2000.0)], fs_total=80)
        stages, tasks = build(2, ["A", "B"], 3, fwd=1e-4, bwd=1e-4)
        results = orchestrate(OrchestratorConfig(n_iterations=2), net, stages, tasks,
                              PolicyConfig(), LatencyParams(), msg_bits=1e8)
        final = results[-1].labels
        assert {t.id for t in tasks if t.cb_label} == final.cb_tasks


class TestVerifySoundness:
    def test_rejects_fabricated_label(self):
        net = load_nsfnet()
        stages, tasks = build(4, ["WA"] * 4, 4)
        tl = simulate_iteration(net, stages, tasks, PolicyConfig(), ZERO_COMM, msg_bits=0.0)
        bogus = LabelSet(cb_tasks={tasks[-1].id})
        with pytest.raises(RuntimeError):
            verify_label_soundness(tl, tasks, bogus)


def test_orchestrator_config_validation():
    with pytest.raises(ValueError):
        OrchestratorConfig(n_iterations=1)
    with pytest.raises(ValueError):
        OrchestratorConfig(blocking_prob_threshold=1.5)
