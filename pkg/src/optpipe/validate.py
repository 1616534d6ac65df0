"""Built-in oracle suite behind ``optpipe validate``.

Every check pits a production code path against an independent reference
written the slow, obvious way: closed-form pipeline algebra, exhaustive
path/block enumeration, direct transition-count loops, and log replay.
A corrupted implementation (say, a wrong contiguity window constant) makes
the corresponding check fail, so these double as mutation-test targets.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import cba, engine, rsa, topology, workload
from .latency import LatencyParams, RequestLabel, required_fs


# ----------------------------------------------------------------------
# reference implementations (independent of the production paths)


def ref_ci(occ: list[int], f0: int, f1: int, mode: rsa.CiMode) -> float:
    F = len(occ)
    if mode is rsa.CiMode.LITERAL:
        span = range(f0 + 1, f1 + 1)
    elif mode is rsa.CiMode.WINDOW:
        span = range(max(1, f0), min(F - 1, f1 + 1) + 1)
    else:
        span = range(1, F)
    count = sum(1 for j in span if occ[j - 1] == 0 and occ[j] == 1)
    denom = (F - 1) if mode is rsa.CiMode.GLOBAL else (f1 - f0)
    denom = max(denom, 1)
    return max(0.0, min(1.0, 1.0 - count / denom))


def ref_simple_paths(net: topology.Network, src: str, dst: str) -> list[tuple[str, ...]]:
    paths: list[tuple[float, int, tuple[str, ...]]] = []

    def walk(node: str, seen: tuple[str, ...]) -> None:
        if node == dst:
            km = sum(net.link_between(u, v).length_km for u, v in zip(seen, seen[1:]))
            paths.append((km, len(seen) - 1, seen))
            return
        for nbr in net.graph.neighbors(node):
            if nbr not in seen:
                walk(nbr, seen + (nbr,))

    walk(src, (src,))
    paths.sort()
    return [nodes for _, _, nodes in paths]


def ref_blocks(net: topology.Network, nodes: tuple[str, ...], width: int) -> list[int]:
    links = net.path_links(nodes)
    agg = [0] * net.fs_total
    for link in links:
        for j, bit in enumerate(link.occupancy):
            agg[j] |= int(bit)
    starts = []
    for f in range(net.fs_total - width + 1):
        if all(agg[f + i] == 0 for i in range(width)):
            starts.append(f)
    return starts


def ref_gamma(net: topology.Network, nodes: tuple[str, ...], width: int,
              mode: rsa.CiMode) -> tuple[float, list[int], list[int]]:
    """(gamma, free starts, clamped transition counts) per the documented rules:
    mean-per-link availability divisor, integer-count contiguity mean with the
    positive floor so that zero means exactly "no feasible block"."""
    links = net.path_links(nodes)
    agg = [0] * net.fs_total
    occupied_total = 0
    for link in links:
        for j, bit in enumerate(link.occupancy):
            agg[j] |= int(bit)
            occupied_total += int(bit)
    starts = ref_blocks(net, nodes, width)
    delta = 1.0 - occupied_total / (len(links) * net.fs_total)
    if not starts or delta <= 0.0:
        return 0.0, starts, []
    F = net.fs_total
    d = max(width - 1, 1)
    counts = []
    for f in range(len(agg) - width + 1):
        f1 = f + width - 1
        if mode is rsa.CiMode.LITERAL:
            span = range(f + 1, f1 + 1)
        elif mode is rsa.CiMode.WINDOW:
            span = range(max(1, f), min(F - 1, f1 + 1) + 1)
        else:
            span = range(1, F)
        c = sum(1 for j in span if agg[j - 1] == 0 and agg[j] == 1)
        counts.append(min(c, d))
    m = [counts[f] for f in starts]
    n = len(starts)
    mean_ci = (n * d - sum(m)) / (n * d)
    length = 0.0
    for u, v in zip(nodes, nodes[1:]):
        length += net.link_between(u, v).length_km
    return max(mean_ci, 1e-9) / (length * delta), starts, m


def ref_select(net: topology.Network, src: str, dst: str, width: int, k: int,
               mode: rsa.CiMode, selector: str,
               params: LatencyParams) -> tuple[tuple[str, ...] | None, int | None]:
    all_paths = ref_simple_paths(net, src, dst)[:k]
    if selector == "sd_ff":
        def prop(nodes):
            km = sum(net.link_between(u, v).length_km for u, v in zip(nodes, nodes[1:]))
            return km * params.prop_s_per_km + (len(nodes) - 1) * params.per_hop_overhead_s
        all_paths = sorted(all_paths, key=prop)
    if selector in ("ksp_ff", "sd_ff"):
        for nodes in all_paths:
            starts = ref_blocks(net, nodes, width)
            if starts:
                return nodes, starts[0]
        return None, None
    best = None
    for i, nodes in enumerate(all_paths):
        gamma, starts, m = ref_gamma(net, nodes, width, mode)
        if gamma <= 0.0:
            continue
        km = sum(net.link_between(u, v).length_km for u, v in zip(nodes, nodes[1:]))
        key = (-gamma, km, len(nodes) - 1, i)
        if best is None or key < best[0]:
            j = m.index(min(m))
            best = (key, nodes, starts[j])
    if best is None:
        return None, None
    return best[1], best[2]


def random_instance(rng: np.random.Generator) -> topology.Network:
    """Small connected network with random lengths and random occupancy."""
    n = int(rng.integers(2, 6))
    names = [chr(ord("A") + i) for i in range(n)]
    specs = []
    seen = set()
    for i in range(1, n):  # random spanning tree keeps it connected
        j = int(rng.integers(0, i))
        specs.append((names[j], names[i], float(rng.integers(1, 20))))
        seen.add(frozenset((names[j], names[i])))
    for a, b in itertools.combinations(names, 2):
        if frozenset((a, b)) not in seen and rng.random() < 0.4:
            specs.append((a, b, float(rng.integers(1, 20))))
    F = int(rng.integers(4, 11))
    net = topology.Network(names, specs, fs_total=F)
    for link in net.links:
        bits = rng.random(F) < rng.uniform(0.1, 0.9)
        if bits.any():
            # write occupancy directly; these nets are never advanced in time
            net.occupancy_matrix[link.index, :] = bits.astype(np.uint8)
    return net


# ----------------------------------------------------------------------
# checks


def check_bubble_closed_form() -> tuple[bool, str]:
    p = 8
    worst = 0.0
    for m in (8, 16, 32):
        profile = workload.build_profile(
            "uniform", n_layers=p, fwd_time_per_layer_s=2e-3,
            bwd_time_per_layer_s=4e-3, msg_bytes_per_microbatch=1,
        )
        stages = workload.partition_stages(profile, p, ["WA"] * p)
        tasks = workload.build_schedule(workload.ScheduleKind.GPIPE, stages, m)
        net = topology.load_nsfnet()
        params = LatencyParams(intra_dc_latency_s=0.0)
        tl = engine.simulate_iteration(
            net, stages, tasks, engine.PolicyConfig(), params, msg_bits=0.0,
        )
        expected = (p - 1) / (m + p - 1)
        worst = max(worst, abs(engine.bubble_ratio(tl, p) - expected))
    return worst < 1e-9, f"max |simulated - analytic| = {worst:.2e}"


def check_ci_reference() -> tuple[bool, str]:
    F = 8
    worst = 0.0
    for bits in range(2 ** F):
        occ = [(bits >> j) & 1 for j in range(F)]
        arr = np.array(occ, dtype=np.uint8)
        for f0 in range(F):
            for f1 in range(f0, F):
                for mode in rsa.CiMode:
                    got = rsa.contiguity_index(arr, (f0, f1), mode)
                    want = ref_ci(occ, f0, f1, mode)
                    if not (0.0 <= got <= 1.0):
                        return False, f"CI out of range for {occ} block ({f0},{f1})"
                    worst = max(worst, abs(got - want))
    return worst < 1e-12, f"max |production - reference| = {worst:.2e}"


def check_selection_bruteforce(n_instances: int = 200) -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    params = LatencyParams()
    for i in range(n_instances):
        net = random_instance(rng)
        names = net.nodes
        src, dst = rng.choice(len(names), size=2, replace=False)
        src, dst = names[int(src)], names[int(dst)]
        width = int(rng.integers(1, 4))
        k = int(rng.choice([1, 2, 3, 8]))
        mode = rsa.CiMode(["literal", "window", "global"][int(rng.integers(0, 3))])
        for selector in engine.SELECTORS:
            if selector == "cba":
                got = rsa.select_cba(net, src, dst, width, k, mode)
            elif selector == "ksp_ff":
                got = rsa.select_ksp_ff(net, src, dst, width, k)
            else:
                got = rsa.select_sd_ff(net, src, dst, width, k, params)
            want_nodes, want_start = ref_select(net, src, dst, width, k, mode,
                                                selector, params)
            got_nodes = got.path.nodes if got.path else None
            got_start = got.block.f_start if got.block else None
            if (got_nodes, got_start) != (want_nodes, want_start):
                return False, (
                    f"instance {i} {selector}: got {got_nodes}/{got_start}, "
                    f"want {want_nodes}/{want_start}"
                )
    return True, f"{n_instances} random instances, 3 selectors each"


def check_ksp_bruteforce(n_instances: int = 100) -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    for i in range(n_instances):
        net = random_instance(rng)
        names = net.nodes
        src, dst = rng.choice(len(names), size=2, replace=False)
        src, dst = names[int(src)], names[int(dst)]
        k = int(rng.choice([1, 2, 3, 10]))
        got = [p.nodes for p in rsa.k_shortest_paths(net, src, dst, k)]
        want = ref_simple_paths(net, src, dst)[:k]
        if got != want:
            return False, f"instance {i}: got {got}, want {want}"
    return True, f"{n_instances} random instances"


def check_first_fit_lowest_block(n_instances: int = 100) -> tuple[bool, str]:
    rng = np.random.default_rng(13)
    for i in range(n_instances):
        net = random_instance(rng)
        names = net.nodes
        src, dst = rng.choice(len(names), size=2, replace=False)
        src, dst = names[int(src)], names[int(dst)]
        width = int(rng.integers(1, 4))
        sel = rsa.select_ksp_ff(net, src, dst, width, 3)
        if sel.blocked:
            continue
        starts = ref_blocks(net, sel.path.nodes, width)
        if starts[0] != sel.block.f_start:
            return False, f"instance {i}: block {sel.block.f_start}, lowest {starts[0]}"
    return True, f"{n_instances} random instances"


def check_spectrum_audit() -> tuple[bool, str]:
    cfg_net = topology.load_nsfnet()
    profile = workload.build_profile("llama3-8b-like")
    placement = ["WA", "CA1", "TX", "IL", "NY", "GA", "WA", "TX"]
    stages = workload.partition_stages(profile, 8, placement)
    tasks = workload.build_schedule(workload.ScheduleKind.GPIPE, stages, 8)
    bg = topology.loaded_background(3)
    cfg_net.attach_background(bg)
    topology.advance_network(cfg_net, 5.0 * bg.mean_hold_s)
    results = cba.orchestrate(
        cba.OrchestratorConfig(n_iterations=4), cfg_net, stages, tasks,
        engine.PolicyConfig(selector="cba"), LatencyParams(),
        msg_bits=profile.msg_bytes_per_microbatch * 8, bg=bg,
    )
    audited = 0
    for r in results:
        audited += engine.audit_event_log(
            cfg_net, r.timeline.event_log_lines(), r.timeline.iteration_makespan
        )
        if cfg_net.active_owners("tx-"):
            return False, "training allocation leaked past an iteration boundary"
    topology.audit_occupancy(cfg_net)
    return True, f"replayed {audited} transfers over 4 iterations"


def check_labeling_soundness() -> tuple[bool, str]:
    net = topology.load_nsfnet()
    profile = workload.build_profile("llama3-8b-like")
    placement = ["WA", "CA1", "TX", "IL", "NY", "GA", "WA", "TX"]
    stages = workload.partition_stages(profile, 8, placement)
    tasks = workload.build_schedule(workload.ScheduleKind.ONE_F_ONE_B, stages, 8)
    results = cba.orchestrate(
        cba.OrchestratorConfig(n_iterations=3), net, stages, tasks,
        engine.PolicyConfig(selector="cba"), LatencyParams(),
        msg_bits=profile.msg_bytes_per_microbatch * 8,
    )
    checked = 0
    for r in results:
        checked += cba.verify_label_soundness(r.timeline, tasks, r.labels)

    # zero-latency variant must label nothing
    stages0 = workload.partition_stages(profile, 8, ["WA"] * 8)
    tasks0 = workload.build_schedule(workload.ScheduleKind.GPIPE, stages0, 8)
    net0 = topology.load_nsfnet()
    tl0 = engine.simulate_iteration(
        net0, stages0, tasks0, engine.PolicyConfig(),
        LatencyParams(intra_dc_latency_s=0.0), msg_bits=0.0,
    )
    empty = cba.label_cb_tasks(tl0, tasks0)
    if empty.cb_tasks:
        return False, "zero-latency run produced CB labels"
    return checked > 0, f"verified {checked} CB labels; zero-latency run labeled none"


def check_required_fs_bounds() -> tuple[bool, str]:
    for base in range(1, 20):
        for boost in (1.0, 1.5, 2.0, 4.0):
            for fs_max in range(1, 20):
                for label in (RequestLabel(), RequestLabel(cb=True),
                              RequestLabel(blocked=True),
                              RequestLabel(cb=True, blocked=True)):
                    n = required_fs(base, label, boost, fs_max)
                    if not (1 <= n <= fs_max):
                        return False, f"required_fs({base},{label},{boost},{fs_max})={n}"
    return True, "all sampled inputs stayed in [1, fs_max]"


def check_occupancy_rebuild() -> tuple[bool, str]:
    rng = np.random.default_rng(23)
    net = topology.load_nsfnet(fs_total=16)
    owners = []
    for step in range(300):
        if owners and rng.random() < 0.4:
            owner = owners.pop(int(rng.integers(0, len(owners))))
            topology.release_spectrum(net, owner)
        else:
            nodes = net.nodes
            i, j = rng.choice(len(nodes), size=2, replace=False)
            paths = rsa.k_shortest_paths(net, nodes[int(i)], nodes[int(j)], 1)
            width = int(rng.integers(1, 4))
            agg = topology.path_aggregate_occupancy(net, paths[0].links)
            start = topology.first_free_block(agg, width)
            if start is None:
                continue
            owner = f"chk-{step}"
            topology.allocate_spectrum(
                net, paths[0].links, (start, start + width - 1), owner, 1e12
            )
            owners.append(owner)
        topology.audit_occupancy(net)
    return True, "300 random allocate/release steps kept the invariant"


def run_all() -> list[tuple[str, bool, str]]:
    checks = [
        ("bubble-closed-form", check_bubble_closed_form),
        ("ci-reference", check_ci_reference),
        ("selection-bruteforce", check_selection_bruteforce),
        ("ksp-bruteforce", check_ksp_bruteforce),
        ("first-fit-lowest-block", check_first_fit_lowest_block),
        ("spectrum-audit", check_spectrum_audit),
        ("labeling-soundness", check_labeling_soundness),
        ("required-fs-bounds", check_required_fs_bounds),
        ("occupancy-rebuild", check_occupancy_rebuild),
    ]
    report = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001
            ok, detail = False, f"raised {exc!r}"
        report.append((name, ok, detail))
    return report
