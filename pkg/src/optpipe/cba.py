"""Communication-bound-aware orchestration across training iterations.

After every iteration the previous timeline is inspected: a task is labeled
communication-bound (CB) when its stage sat idle before it started (the gap
to its intra-stage predecessor exceeds epsilon) and the prerequisite that
actually gated its start was a cross-datacenter message.  Tasks whose
outgoing transfer blocked are flagged separately.

The labels drive next iteration's slot sizing: a CB task's incoming message
is boosted, a previously blocked request is shrunk, and when the observed
iteration blocking probability crosses a threshold the boost factor for all
CB requests is halved as a global congestion guard.  The first iteration is
an unlabeled warm-up.  Baseline policies still compute labels (they are
reported for analysis) but never let them influence slot sizing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from .engine import (
    PolicyConfig,
    Timeline,
    blocking_probability,
    bubble_ratio,
    simulate_iteration,
)
from .latency import EgressState, LatencyParams, RequestLabel
from .topology import BackgroundTrafficModel, Network, audit_occupancy
from .workload import Stage, Task


@dataclass
class LabelSet:
    """Labels extracted from one completed iteration.

    The sets need not be disjoint: a task can be both communication-bound
    and the sender of a blocked transfer.
    """

    cb_tasks: set[int] = field(default_factory=set)
    blocked_tasks: set[int] = field(default_factory=set)
    iteration_blocking_prob: float = 0.0


@dataclass(frozen=True)
class OrchestratorConfig:
    n_iterations: int = 11  # 1 warm-up + 10 measured
    blocking_prob_threshold: float = 0.05
    epsilon_bubble_s: float = 1e-6

    def __post_init__(self) -> None:
        if self.n_iterations < 2:
            raise ValueError("n_iterations must be >= 2 (warm-up plus measurement)")
        if not (0.0 <= self.blocking_prob_threshold <= 1.0):
            raise ValueError("blocking_prob_threshold must be in [0, 1]")
        if self.epsilon_bubble_s < 0:
            raise ValueError("epsilon_bubble_s must be nonnegative")


def label_cb_tasks(
    timeline: Timeline, tasks: Sequence[Task], epsilon_bubble_s: float = 1e-6
) -> LabelSet:
    """Label tasks whose start was delayed by a cross-DC message arrival.

    All tasks start unlabeled.  Walking each stage in executed order, the
    current task is CB iff the stage idled for more than epsilon after its
    predecessor finished and the latest-arriving prerequisite was a cross-DC
    message.  A stage's first task (no predecessor) and tasks without a
    cross-DC input are never CB.
    """
    if len(timeline.tasks) != len(tasks):
        raise ValueError("timeline does not match the task list")
    labels = LabelSet(iteration_blocking_prob=blocking_probability(timeline))
    for task in tasks:
        rec = timeline.tasks[task.id]
        if rec.task_id != task.id:
            raise ValueError("timeline does not match the task list")
        if task.chain_pred is None or task.msg_pred is None:
            continue
        if not rec.msg_cross_dc:
            continue
        prev_finish = timeline.tasks[task.chain_pred].finish_time
        if rec.start_time > prev_finish + epsilon_bubble_s:
            # gap implies the message arrival, not the predecessor, gated the start
            labels.cb_tasks.add(task.id)
    for ev in timeline.blocking_events:
        labels.blocked_tasks.add(ev.task_id)
    return labels


def plan_requests(
    labels: LabelSet | None,
    config: OrchestratorConfig,
    tasks: Sequence[Task],
    policy: PolicyConfig,
    prev_boost: float | None = None,
) -> tuple[dict[int, RequestLabel], float]:
    """Per-request labels for the next iteration plus the effective boost.

    Keyed by the consumer task of each message edge.  A request is boosted
    when its consumer was CB (optionally also when its producer was, via
    ``boost_outgoing``) and shrunk when the same edge blocked last iteration;
    shrinking wins when both apply.

    The boost adapts to observed congestion: whenever last iteration's
    blocking probability exceeded the threshold, the effective boost for all
    CB requests is halved (floor 1); it recovers additively (+0.25) toward
    the configured maximum only after a fully block-free iteration, and
    holds steady in between.  Under sustained contention the boost therefore
    settles at the largest sustainable level instead of oscillating between
    full boost and blocking storms.
    """
    if labels is None:
        return {}, policy.boost_factor
    boost = policy.boost_factor if prev_boost is None else prev_boost
    if labels.iteration_blocking_prob > config.blocking_prob_threshold:
        boost = max(1.0, boost / 2.0)
    elif labels.iteration_blocking_prob == 0.0:
        boost = min(policy.boost_factor, boost + 0.25)
    out: dict[int, RequestLabel] = {}
    for task in tasks:
        if task.msg_pred is None:
            continue
        cb = task.id in labels.cb_tasks
        if policy.boost_outgoing and task.msg_pred in labels.cb_tasks:
            cb = True
        blocked = task.msg_pred in labels.blocked_tasks
        if cb or blocked:
            out[task.id] = RequestLabel(cb=cb, blocked=blocked)
    return out, boost


def verify_label_soundness(
    timeline: Timeline,
    tasks: Sequence[Task],
    labels: LabelSet,
    epsilon_bubble_s: float = 1e-6,
) -> int:
    """Assert every CB label directly against the timeline records.

    Each labeled task must show a measured intra-stage idle gap above epsilon
    and a cross-DC binding input.  Returns the number of labels checked;
    raises RuntimeError on the first unsound label.
    """
    for tid in sorted(labels.cb_tasks):
        task = tasks[tid]
        rec = timeline.tasks[tid]
        if task.chain_pred is None or task.msg_pred is None:
            raise RuntimeError(f"task {tid} labeled CB without an eligible dependency pair")
        gap = rec.start_time - timeline.tasks[task.chain_pred].finish_time
        if gap <= epsilon_bubble_s:
            raise RuntimeError(f"task {tid} labeled CB with idle gap {gap} <= epsilon")
        if not rec.msg_cross_dc:
            raise RuntimeError(f"task {tid} labeled CB without a cross-DC input")
    return len(labels.cb_tasks)


@dataclass
class IterationResult:
    iteration: int
    runtime_s: float
    bubble_ratio: float
    requests: int
    blocked: int
    blocking_prob: float
    labels: LabelSet
    timeline: Timeline


def orchestrate(
    config: OrchestratorConfig,
    net: Network,
    stages: Sequence[Stage],
    tasks: Sequence[Task],
    policy: PolicyConfig,
    params: LatencyParams,
    msg_bits: float,
    bg: BackgroundTrafficModel | None = None,
    audit: bool = True,
) -> list[IterationResult]:
    """Run the full multi-iteration loop; iteration 0 is the warm-up.

    Labels from each finished iteration feed the next one's request plan for
    the adaptive policy; first-fit baselines always run with base demand.
    Egress state resets between iterations; network state (background
    allocations and the arrival stream) carries over, with the clock rebased
    so every iteration runs from t=0 with identical arithmetic.
    """
    if bg is not None:
        net.attach_background(bg)
    labels: LabelSet | None = None
    boost = policy.boost_factor
    results: list[IterationResult] = []
    for it in range(config.n_iterations):
        net.rebase(net.now)
        if policy.selector == "cba":
            req_labels, boost = plan_requests(labels, config, tasks, policy, boost)
            eff_policy = replace(policy, boost_factor=boost)
        else:
            req_labels, eff_policy = {}, policy
        timeline = simulate_iteration(
            net, stages, tasks, eff_policy, params,
            egress=EgressState(), bg=bg,
            request_labels=req_labels, msg_bits=msg_bits,
        )
        labels = label_cb_tasks(timeline, tasks, config.epsilon_bubble_s)
        for task in tasks:
            task.cb_label = task.id in labels.cb_tasks
            task.blocked_flag = task.id in labels.blocked_tasks
        if audit:
            audit_occupancy(net)
        results.append(
            IterationResult(
                iteration=it,
                runtime_s=timeline.iteration_makespan,
                bubble_ratio=bubble_ratio(timeline, len(stages)),
                requests=timeline.cross_dc_requests,
                blocked=timeline.blocked_requests,
                blocking_prob=blocking_probability(timeline),
                labels=labels,
                timeline=timeline,
            )
        )
    return results
