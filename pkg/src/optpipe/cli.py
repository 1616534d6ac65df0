"""Configuration, experiment harness, and CSV emission.

Config files are UTF-8 JSON with flat dotted keys (``{"latency.fs_rate_bps":
9e10}``).  Every key has a default, so an empty config runs.  CLI flags
override file keys.  Output is plain CSV; the output directory comes from
``--out`` or the ``OPTPIPE_OUTDIR`` environment variable (default ``.``).

Commands:

* ``run``      one policy over the configured workload and seeds;
* ``compare``  all three policies over the full grid with paired placements
               and background seeds per cell, plus a summary with relative
               improvement columns against each baseline;
* ``validate`` the built-in oracle suite (closed-form bubble check,
               brute-force selection equivalence, spectrum audit, ...).

Exit codes: 0 success, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from . import cba, engine, topology, workload
from .latency import LatencyParams
from .rsa import CiMode

# Densest NSFNET region: every inter-DC pair has several near-equal-length
# routes, so route-and-spectrum choice (not raw propagation) dominates.
DEFAULT_DC_NODES = ["IL", "PA", "MI", "NY", "NJ", "DC"]
_PLACEMENT_STREAM = 101

RESULT_COLUMNS = [
    "policy", "model", "schedule", "microbatches", "seed", "iteration",
    "runtime_s", "bubble_ratio", "requests", "blocked", "blocking_prob",
]

SUMMARY_COLUMNS = [
    "policy", "model", "schedule", "microbatches",
    "mean_runtime_s", "mean_bubble_ratio", "mean_blocking_prob",
    "d_runtime_pct_vs_ksp_ff", "d_bubble_vs_ksp_ff", "d_blocking_vs_ksp_ff",
    "d_runtime_pct_vs_sd_ff", "d_bubble_vs_sd_ff", "d_blocking_vs_sd_ff",
]


class ConfigError(ValueError):
    """A config key failed validation; the message names the key."""


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    raise ValueError("expected true/false")


def _as_int_list(v) -> list[int]:
    if isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        return list(v)
    raise ValueError("expected a list of integers")


def _as_str_list(v) -> list[str]:
    if isinstance(v, list) and all(isinstance(x, str) for x in v):
        return list(v)
    raise ValueError("expected a list of strings")


# key -> (default, converter).  Converters raise ValueError on bad input.
KEY_TABLE: dict[str, tuple[Any, Any]] = {
    "topology.path": (None, lambda v: v if v is None else str(v)),
    "topology.fs_total": (80, int),
    "topology.slot_width_ghz": (12.5, float),
    "topology.per_direction": (False, _as_bool),
    "run.policy": ("cba", str),
    "run.schedule": ("gpipe", str),
    "run.model": ("llama3-8b-like", str),
    "run.microbatches": (16, int),
    "run.seeds": ([0], _as_int_list),
    "pp.stages": (8, int),
    "placement.dc_nodes": (DEFAULT_DC_NODES, _as_str_list),
    "placement.n_dcs": (6, int),
    "compare.seeds": ([0, 1, 2], _as_int_list),
    "compare.microbatch_grid": ([16, 32, 64, 128], _as_int_list),
    "compare.models": (["llama3-8b-like", "llama3-70b-like"], _as_str_list),
    "compare.schedules": (["gpipe", "1f1b"], _as_str_list),
    "model.n_layers": (None, lambda v: v if v is None else int(v)),
    "model.fwd_time_per_layer_s": (None, lambda v: v if v is None else float(v)),
    "model.bwd_time_per_layer_s": (None, lambda v: v if v is None else float(v)),
    "model.msg_bytes_per_microbatch": (None, lambda v: v if v is None else int(v)),
    "latency.prop_s_per_km": (5.0e-6, float),
    "latency.per_hop_overhead_s": (1.0e-4, float),
    "latency.fs_rate_bps": (7.5e10, float),
    "latency.intra_dc_latency_s": (5.0e-5, float),
    "latency.intra_dc_rate_bps": (4.0e11, float),
    "latency.queue_penalty_per_conflict_s": (0.0, float),
    "rsa.k": (5, int),
    "rsa.ci_mode": ("window", str),
    "rsa.ci_per_link": (False, _as_bool),
    "fs.base": (4, int),
    "fs.boost_factor": (2.0, float),
    "fs.max": (16, int),
    "engine.max_retries": (5, int),
    "engine.retry_backoff_s": (1e-3, float),
    "engine.fallback_penalty": (3.0, float),
    "cba.n_iterations": (11, int),
    "cba.blocking_prob_threshold": (0.05, float),
    "cba.epsilon_bubble_s": (1e-6, float),
    "cba.boost_outgoing": (False, _as_bool),
    "bg.preset": ("off", str),
    "bg.arrival_rate_per_s": (None, lambda v: v if v is None else float(v)),
    "bg.mean_hold_s": (None, lambda v: v if v is None else float(v)),
    "bg.fs_demand_min": (None, lambda v: v if v is None else int(v)),
    "bg.fs_demand_max": (None, lambda v: v if v is None else int(v)),
    "bg.prewarm_s": (None, lambda v: v if v is None else float(v)),
    "output.event_log": (False, _as_bool),
    "jobs": (None, lambda v: v if v is None else int(v)),
}


@dataclass
class RunConfig:
    """Validated configuration; ``flat`` preserves the resolved key values."""

    flat: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_flat(cls, overrides: dict[str, Any] | None = None) -> "RunConfig":
        flat = {}
        overrides = dict(overrides or {})
        for key, (default, conv) in KEY_TABLE.items():
            if key in overrides:
                raw = overrides.pop(key)
                try:
                    flat[key] = conv(raw)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: invalid value {raw!r} ({exc})") from exc
            else:
                flat[key] = default
        if overrides:
            unknown = sorted(overrides)
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg = cls(flat)
        cfg._validate()
        return cfg

    @classmethod
    def from_file(cls, path: str, overrides: dict[str, Any] | None = None) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object of dotted keys")
        doc.update(overrides or {})
        return cls.from_flat(doc)

    def __getitem__(self, key: str):
        return self.flat[key]

    def _validate(self) -> None:
        f = self.flat
        def require(cond: bool, key: str, msg: str) -> None:
            if not cond:
                raise ConfigError(f"{key}: {msg} (got {f[key]!r})")

        require(f["topology.fs_total"] >= 1, "topology.fs_total", "must be >= 1")
        require(f["topology.slot_width_ghz"] > 0, "topology.slot_width_ghz", "must be positive")
        require(f["pp.stages"] >= 1, "pp.stages", "must be >= 1")
        require(f["run.microbatches"] >= 1, "run.microbatches", "must be >= 1")
        require(f["run.policy"] in engine.SELECTORS, "run.policy",
                f"must be one of {engine.SELECTORS}")
        require(f["run.schedule"] in ("gpipe", "1f1b"), "run.schedule",
                "must be 'gpipe' or '1f1b'")
        require(len(f["run.seeds"]) >= 1, "run.seeds", "must not be empty")
        require(len(f["compare.seeds"]) >= 1, "compare.seeds", "must not be empty")
        require(all(m >= 1 for m in f["compare.microbatch_grid"]),
                "compare.microbatch_grid", "entries must be >= 1")
        require(all(s in ("gpipe", "1f1b") for s in f["compare.schedules"]),
                "compare.schedules", "entries must be 'gpipe' or '1f1b'")
        require(1 <= f["placement.n_dcs"] <= len(f["placement.dc_nodes"]),
                "placement.n_dcs", "must be within the dc_nodes list")
        require(f["rsa.k"] >= 1, "rsa.k", "must be >= 1")
        require(f["rsa.ci_mode"] in ("literal", "window", "global"), "rsa.ci_mode",
                "must be literal, window or global")
        require(f["fs.base"] >= 1, "fs.base", "must be >= 1")
        require(f["fs.boost_factor"] >= 1, "fs.boost_factor", "must be >= 1")
        require(1 <= f["fs.max"] <= f["topology.fs_total"], "fs.max",
                "must be in [1, topology.fs_total]")
        require(f["engine.max_retries"] >= 0, "engine.max_retries", "must be >= 0")
        require(f["engine.retry_backoff_s"] >= 0, "engine.retry_backoff_s",
                "must be nonnegative")
        require(f["engine.fallback_penalty"] >= 1, "engine.fallback_penalty",
                "must be >= 1")
        require(f["cba.n_iterations"] >= 2, "cba.n_iterations", "must be >= 2")
        require(0 <= f["cba.blocking_prob_threshold"] <= 1,
                "cba.blocking_prob_threshold", "must be in [0, 1]")
        require(f["cba.epsilon_bubble_s"] >= 0, "cba.epsilon_bubble_s",
                "must be nonnegative")
        require(f["bg.preset"] in ("off", "loaded", "custom"), "bg.preset",
                "must be off, loaded or custom")
        if f["bg.preset"] == "custom":
            for key in ("bg.arrival_rate_per_s", "bg.mean_hold_s",
                        "bg.fs_demand_min", "bg.fs_demand_max"):
                require(f[key] is not None, key, "required when bg.preset=custom")
        for model in {f["run.model"], *f["compare.models"]}:
            if model != "custom" and model not in workload.profile_presets():
                raise ConfigError(
                    f"model {model!r} is not a preset {workload.profile_presets()} "
                    "or 'custom'"
                )
        if f["run.model"] == "custom" or "custom" in f["compare.models"]:
            for key in ("model.n_layers", "model.fwd_time_per_layer_s",
                        "model.bwd_time_per_layer_s", "model.msg_bytes_per_microbatch"):
                require(f[key] is not None, key, "required for the custom model")

    # ------------------------------------------------------------------
    # constructed objects

    def build_network(self) -> topology.Network:
        f = self.flat
        kwargs = dict(
            fs_total=f["topology.fs_total"],
            slot_width_ghz=f["topology.slot_width_ghz"],
            per_direction=f["topology.per_direction"],
        )
        if f["topology.path"]:
            net = topology.load_topology_file(f["topology.path"], **kwargs)
        else:
            net = topology.load_nsfnet(**kwargs)
        dcs = self.dc_nodes()
        missing = [d for d in dcs if d not in net.graph]
        if missing:
            raise ConfigError(f"placement.dc_nodes: not in topology: {missing}")
        return net

    def dc_nodes(self) -> list[str]:
        f = self.flat
        return list(f["placement.dc_nodes"][: f["placement.n_dcs"]])

    def profile(self, name: str) -> workload.ModelProfile:
        if name != "custom":
            return workload.build_profile(name)
        f = self.flat
        return workload.build_profile(
            "custom",
            n_layers=f["model.n_layers"],
            fwd_time_per_layer_s=f["model.fwd_time_per_layer_s"],
            bwd_time_per_layer_s=f["model.bwd_time_per_layer_s"],
            msg_bytes_per_microbatch=f["model.msg_bytes_per_microbatch"],
        )

    def latency_params(self) -> LatencyParams:
        f = self.flat
        return LatencyParams(
            prop_s_per_km=f["latency.prop_s_per_km"],
            per_hop_overhead_s=f["latency.per_hop_overhead_s"],
            fs_rate_bps=f["latency.fs_rate_bps"],
            intra_dc_latency_s=f["latency.intra_dc_latency_s"],
            intra_dc_rate_bps=f["latency.intra_dc_rate_bps"],
            queue_penalty_per_conflict_s=f["latency.queue_penalty_per_conflict_s"],
        )

    def policy(self, selector: str) -> engine.PolicyConfig:
        f = self.flat
        return engine.PolicyConfig(
            selector=selector,
            k=f["rsa.k"],
            ci_mode=CiMode(f["rsa.ci_mode"]),
            ci_per_link=f["rsa.ci_per_link"],
            base_fs=f["fs.base"],
            boost_factor=f["fs.boost_factor"],
            fs_max=f["fs.max"],
            max_retries=f["engine.max_retries"],
            retry_backoff_s=f["engine.retry_backoff_s"],
            fallback_penalty=f["engine.fallback_penalty"],
            boost_outgoing=f["cba.boost_outgoing"],
        )

    def orchestrator(self) -> cba.OrchestratorConfig:
        f = self.flat
        return cba.OrchestratorConfig(
            n_iterations=f["cba.n_iterations"],
            blocking_prob_threshold=f["cba.blocking_prob_threshold"],
            epsilon_bubble_s=f["cba.epsilon_bubble_s"],
        )

    def background(self, seed: int) -> topology.BackgroundTrafficModel | None:
        f = self.flat
        if f["bg.preset"] == "off":
            return None
        if f["bg.preset"] == "loaded":
            base = topology.loaded_background(seed)
            tweaks = {}
            if f["bg.arrival_rate_per_s"] is not None:
                tweaks["arrival_rate_per_s"] = f["bg.arrival_rate_per_s"]
            if f["bg.mean_hold_s"] is not None:
                tweaks["mean_hold_s"] = f["bg.mean_hold_s"]
            if tweaks:
                from dataclasses import replace
                base = replace(base, **tweaks)
            return base
        return topology.BackgroundTrafficModel(
            arrival_rate_per_s=f["bg.arrival_rate_per_s"],
            mean_hold_s=f["bg.mean_hold_s"],
            fs_demand_range=(f["bg.fs_demand_min"], f["bg.fs_demand_max"]),
            rng_seed=seed,
        )

    def placement(self, seed: int, p: int) -> list[str]:
        dcs = self.dc_nodes()
        rng = np.random.default_rng([seed, _PLACEMENT_STREAM])
        return [dcs[int(i)] for i in rng.integers(0, len(dcs), size=p)]

    def prewarm_s(self) -> float:
        """Seconds of background evolution before iteration 0.

        The loaded preset defaults to five holding times so measured
        iterations see steady-state occupancy instead of a cold start.
        """
        f = self.flat
        if f["bg.prewarm_s"] is not None:
            return f["bg.prewarm_s"]
        if f["bg.preset"] == "loaded":
            return 5.0 * topology.loaded_background(0).mean_hold_s
        return 0.0

    def check_model_depth(self, models: Iterable[str]) -> None:
        p = self.flat["pp.stages"]
        for name in models:
            profile = self.profile(name)
            if p > profile.n_layers:
                raise ConfigError(
                    f"pp.stages: p={p} exceeds n_layers={profile.n_layers} "
                    f"of model {name!r}"
                )


# ----------------------------------------------------------------------
# single-cell execution (shared by run, compare, and the test suite)


@dataclass
class CellOutcome:
    rows: list[list]
    audited_transfers: int
    label_checks: int
    event_lines: list[str]


def run_cell(
    cfg: RunConfig,
    policy_names: Sequence[str],
    model: str,
    schedule: str,
    m: int,
    seed: int,
    collect_events: bool = False,
    audit_logs: bool = True,
) -> CellOutcome:
    """Run one (model, schedule, m, seed) cell for the given policies.

    All policies observe the identical placement and background seed; each
    gets its own fresh network so their spectrum evolution stays independent.
    Every iteration's event log is replay-audited unless disabled.
    """
    p = cfg["pp.stages"]
    profile = cfg.profile(model)
    placement = cfg.placement(seed, p)
    params = cfg.latency_params()
    orch = cfg.orchestrator()
    kind = workload.ScheduleKind(schedule)
    msg_bits = profile.msg_bytes_per_microbatch * 8

    rows: list[list] = []
    audited = 0
    label_checks = 0
    event_lines: list[str] = []
    for policy_name in policy_names:
        net = cfg.build_network()
        bg = cfg.background(seed)
        if bg is not None:
            net.attach_background(bg)
            topology.advance_network(net, cfg.prewarm_s())
        stages = workload.partition_stages(profile, p, placement)
        tasks = workload.build_schedule(kind, stages, m)
        results = cba.orchestrate(
            orch, net, stages, tasks, cfg.policy(policy_name), params,
            msg_bits=msg_bits, bg=bg,
        )
        for r in results:
            lines = r.timeline.event_log_lines()
            if audit_logs:
                audited += engine.audit_event_log(net, lines, r.timeline.iteration_makespan)
                label_checks += cba.verify_label_soundness(
                    r.timeline, tasks, r.labels, orch.epsilon_bubble_s
                )
            if collect_events:
                event_lines.append(
                    f"RUN\tpolicy={policy_name}\tmodel={model}\tschedule={schedule}"
                    f"\tm={m}\tseed={seed}\titeration={r.iteration}"
                )
                event_lines.extend(lines)
            if r.iteration >= 1:
                rows.append([
                    policy_name, model, schedule, m, seed, r.iteration,
                    repr(r.runtime_s), repr(r.bubble_ratio),
                    r.requests, r.blocked, repr(r.blocking_prob),
                ])
    return CellOutcome(rows, audited, label_checks, event_lines)


def _run_cell_job(args: tuple) -> tuple[tuple, CellOutcome]:
    flat, policies, model, schedule, m, seed, collect = args
    cfg = RunConfig.from_flat(flat)
    out = run_cell(cfg, policies, model, schedule, m, seed, collect_events=collect)
    return (model, schedule, m, seed), out


# ----------------------------------------------------------------------
# commands


def _outdir(explicit: str | None) -> str:
    out = explicit or os.environ.get("OPTPIPE_OUTDIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def cmd_run(cfg: RunConfig, outdir: str, verbose: bool = True) -> dict[str, str]:
    """One orchestrate call per seed for the configured policy."""
    os.makedirs(outdir, exist_ok=True)
    cfg.check_model_depth([cfg["run.model"]])
    rows: list[list] = []
    events: list[str] = []
    for seed in cfg["run.seeds"]:
        out = run_cell(
            cfg, [cfg["run.policy"]], cfg["run.model"], cfg["run.schedule"],
            cfg["run.microbatches"], seed, collect_events=cfg["output.event_log"],
        )
        rows.extend(out.rows)
        events.extend(out.event_lines)
        if verbose:
            print(f"run: seed {seed} done ({len(out.rows)} measured rows)",
                  file=sys.stderr, flush=True)

    summary = [
        cfg["run.policy"], cfg["run.model"], cfg["run.schedule"],
        cfg["run.microbatches"], "all", "mean",
        repr(_mean([float(r[6]) for r in rows])),
        repr(_mean([float(r[7]) for r in rows])),
        repr(_mean([float(r[8]) for r in rows])),
        repr(_mean([float(r[9]) for r in rows])),
        repr(_mean([float(r[10]) for r in rows])),
    ]
    paths = {"results": os.path.join(outdir, "run.csv")}
    _write_csv(paths["results"], RESULT_COLUMNS, rows + [summary])
    if cfg["output.event_log"]:
        paths["events"] = os.path.join(outdir, "run_events.log")
        with open(paths["events"], "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(events) + "\n")
    return paths


def compare_grid(
    cfg: RunConfig, jobs: int | None = None, verbose: bool = True,
    collect_events: bool = False,
) -> tuple[list[list], list[list], list[str], int, int]:
    """Run the full paired grid; returns (rows, summary_rows, events, audited,
    label_checks)."""
    cfg.check_model_depth(cfg["compare.models"])
    grid = [
        (model, schedule, m, seed)
        for model in cfg["compare.models"]
        for schedule in cfg["compare.schedules"]
        for m in cfg["compare.microbatch_grid"]
        for seed in cfg["compare.seeds"]
    ]
    policies = list(engine.SELECTORS)
    jobs = jobs if jobs is not None else cfg["jobs"]
    if jobs is None:
        jobs = min(os.cpu_count() or 1, 8)

    outcomes: dict[tuple, CellOutcome] = {}
    work = [(cfg.flat, policies, *cell, collect_events) for cell in grid]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, (key, out) in enumerate(pool.map(_run_cell_job, work)):
                outcomes[key] = out
                if verbose:
                    print(f"compare: cell {i + 1}/{len(work)} {key}",
                          file=sys.stderr, flush=True)
    else:
        for i, args in enumerate(work):
            key, out = _run_cell_job(args)
            outcomes[key] = out
            if verbose:
                print(f"compare: cell {i + 1}/{len(work)} {key}",
                      file=sys.stderr, flush=True)

    rows: list[list] = []
    events: list[str] = []
    audited = 0
    label_checks = 0
    order = lambda r: (r[0], r[1], r[2], int(r[3]), int(r[4]), int(r[5]))
    for cell in grid:
        out = outcomes[tuple(cell)]
        rows.extend(out.rows)
        events.extend(out.event_lines)
        audited += out.audited_transfers
        label_checks += out.label_checks
    rows.sort(key=order)

    summary_rows = _summarize(cfg, rows)
    return rows, summary_rows, events, audited, label_checks


def _summarize(cfg: RunConfig, rows: list[list]) -> list[list]:
    cells: dict[tuple, dict[str, list[float]]] = {}
    for r in rows:
        key = (r[1], r[2], int(r[3]))  # model, schedule, m
        per = cells.setdefault(key, {})
        per.setdefault(r[0], []).append(r)
    out: list[list] = []
    for model in cfg["compare.models"]:
        for schedule in cfg["compare.schedules"]:
            for m in cfg["compare.microbatch_grid"]:
                per = cells.get((model, schedule, m), {})
                means = {}
                for policy, rs in per.items():
                    means[policy] = (
                        _mean([float(x[6]) for x in rs]),
                        _mean([float(x[7]) for x in rs]),
                        _mean([float(x[10]) for x in rs]),
                    )
                for policy in engine.SELECTORS:
                    if policy not in means:
                        continue
                    rt, bub, blk = means[policy]
                    row = [policy, model, schedule, m, repr(rt), repr(bub), repr(blk)]
                    for base in ("ksp_ff", "sd_ff"):
                        brt, bbub, bblk = means[base]
                        d_rt = 100.0 * (brt - rt) / brt if brt else 0.0
                        row.extend([repr(d_rt), repr(bbub - bub), repr(bblk - blk)])
                    out.append(row)
    return out


def cmd_compare(cfg: RunConfig, outdir: str, jobs: int | None = None,
                verbose: bool = True) -> dict[str, str]:
    os.makedirs(outdir, exist_ok=True)
    rows, summary_rows, events, audited, _ = compare_grid(
        cfg, jobs=jobs, verbose=verbose, collect_events=cfg["output.event_log"],
    )
    paths = {
        "results": os.path.join(outdir, "compare.csv"),
        "summary": os.path.join(outdir, "compare_summary.csv"),
    }
    _write_csv(paths["results"], RESULT_COLUMNS, rows)
    _write_csv(paths["summary"], SUMMARY_COLUMNS, summary_rows)
    if cfg["output.event_log"]:
        paths["events"] = os.path.join(outdir, "compare_events.log")
        with open(paths["events"], "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(events) + "\n")
    if verbose:
        print(f"compare: audited {audited} transfers, wrote {paths['results']}",
              file=sys.stderr, flush=True)
    return paths


def cmd_validate(verbose: bool = True) -> int:
    from . import validate
    report = validate.run_all()
    failed = 0
    for name, ok, detail in report:
        status = "PASS" if ok else "FAIL"
        print(f"{name}: {status}" + (f" ({detail})" if detail else ""))
        failed += 0 if ok else 1
    return 1 if failed else 0


# ----------------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="optpipe",
        description="Pipeline-parallel training over multi-DC elastic optical networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one policy over the configured workload")
    p_run.add_argument("--config", help="JSON config of flat dotted keys")
    p_run.add_argument("--policy", choices=engine.SELECTORS)
    p_run.add_argument("--seed", type=int, help="replace run.seeds with one seed")
    p_run.add_argument("--out", help="output directory (or $OPTPIPE_OUTDIR)")

    p_cmp = sub.add_parser("compare", help="run all three policies over the grid")
    p_cmp.add_argument("--config", help="JSON config of flat dotted keys")
    p_cmp.add_argument("--jobs", type=int, help="parallel worker processes")
    p_cmp.add_argument("--out", help="output directory (or $OPTPIPE_OUTDIR)")

    sub.add_parser("validate", help="run the built-in oracle suite")

    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate()
        overrides: dict[str, Any] = {}
        if args.command == "run":
            if args.policy:
                overrides["run.policy"] = args.policy
            if args.seed is not None:
                overrides["run.seeds"] = [args.seed]
        cfg = (
            RunConfig.from_file(args.config, overrides)
            if args.config
            else RunConfig.from_flat(overrides)
        )
        outdir = _outdir(args.out)
        if args.command == "run":
            paths = cmd_run(cfg, outdir)
        else:
            paths = cmd_compare(cfg, outdir, jobs=args.jobs)
        for kind, path in paths.items():
            print(f"{kind}: {path}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
