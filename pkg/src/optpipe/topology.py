"""Multi-datacenter elastic optical network state.

The network is a graph of datacenter nodes joined by fiber links.  Every
link carries the same number of frequency slots (FS); a transfer occupies a
contiguous slot block on every link of its path.  This module owns all
spectrum bookkeeping: committing and releasing allocations, time-driven
state updates, and the synthetic background traffic that makes optical path
availability vary over time.

Occupancy is stored as one uint8 matrix with a row per link (0 free,
1 occupied) plus a trailing all-zero pad row so that variable-length paths
can be evaluated with a single fancy-index.  A link's ``occupancy``
attribute is a view into its row.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

DEFAULT_FS_TOTAL = 80
DEFAULT_SLOT_WIDTH_GHZ = 12.5


class TopologyError(ValueError):
    """Topology file is malformed or violates a structural constraint."""


class SpectrumConflictError(RuntimeError):
    """An allocation would overlap slots already occupied (caller bug)."""


class UnknownOwnerError(KeyError):
    """Release requested for an owner with no active allocations."""


@dataclass(frozen=True)
class SpectrumAllocation:
    """A committed slot block on one link, released at ``release_time``."""

    owner_id: str
    f_start: int
    f_end: int
    release_time: float


@dataclass(eq=False)
class Link:
    """One fiber link.  ``occupancy`` is a live view into the network matrix."""

    index: int
    a: str
    b: str
    length_km: float
    occupancy: np.ndarray
    allocations: dict[str, SpectrumAllocation] = field(default_factory=dict)

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    def __repr__(self) -> str:
        return f"Link({self.a}-{self.b}, {self.length_km} km)"


@dataclass(frozen=True)
class BackgroundTrafficModel:
    """Poisson/exponential background demand parameters.

    Arrivals form a Poisson process of rate ``arrival_rate_per_s``; each
    arrival picks a uniform ordered node pair, a uniform integer FS demand in
    ``fs_demand_range`` (inclusive), and an exponential holding time with
    mean ``mean_hold_s``.  Admission is first-fit on the shortest path and
    silently drops blocked arrivals.
    """

    arrival_rate_per_s: float = 0.0
    mean_hold_s: float = 1.0
    fs_demand_range: tuple[int, int] = (1, 8)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.arrival_rate_per_s < 0:
            raise ValueError("arrival_rate_per_s must be nonnegative")
        if self.mean_hold_s < 0:
            raise ValueError("mean_hold_s must be nonnegative")
        lo, hi = self.fs_demand_range
        if not (1 <= lo <= hi):
            raise ValueError("fs_demand_range must satisfy 1 <= lo <= hi")


def loaded_background(seed: int) -> BackgroundTrafficModel:
    """The documented "loaded" preset used for blocking experiments.

    Calibrated so that first-fit baselines see a few-percent blocking rate
    on NSFNET at 80 slots while the network stays usable.  Runs should
    pre-warm the network by about five holding times before measuring so
    occupancy starts at steady state.
    """
    return BackgroundTrafficModel(
        arrival_rate_per_s=30.0,
        mean_hold_s=6.0,
        fs_demand_range=(2, 10),
        rng_seed=seed,
    )


class _BackgroundStream:
    """Stateful seeded arrival stream for one simulation run.

    The per-arrival draw order is part of the replay contract (tests replay
    it independently): inter-arrival gap, source index, destination offset,
    FS demand, holding time.
    """

    def __init__(self, model: BackgroundTrafficModel, nodes: Sequence[str], base_time: float):
        self.model = model
        self.nodes = list(nodes)
        self.rng = np.random.default_rng(model.rng_seed)
        self._next_time = math.inf
        self._pending: tuple[str, str, int, float] | None = None
        if model.arrival_rate_per_s > 0 and len(self.nodes) >= 2:
            self._next_time = base_time
            self._advance_draw()

    def _advance_draw(self) -> None:
        rng = self.rng
        n = len(self.nodes)
        lo, hi = self.model.fs_demand_range
        self._next_time += rng.exponential(1.0 / self.model.arrival_rate_per_s)
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n - 1))
        if j >= i:
            j += 1
        demand = int(rng.integers(lo, hi + 1))
        hold = float(rng.exponential(self.model.mean_hold_s))
        self._pending = (self.nodes[i], self.nodes[j], demand, hold)

    def peek(self) -> float:
        return self._next_time

    def pop(self) -> tuple[float, str, str, int, float]:
        t = self._next_time
        src, dst, demand, hold = self._pending  # type: ignore[misc]
        self._advance_draw()
        return t, src, dst, demand, hold


class Network:
    """Single-writer network state: topology plus live spectrum occupancy."""

    def __init__(
        self,
        nodes: Sequence[str],
        link_specs: Sequence[tuple[str, str, float]],
        fs_total: int = DEFAULT_FS_TOTAL,
        slot_width_ghz: float = DEFAULT_SLOT_WIDTH_GHZ,
        per_direction: bool = False,
    ):
        if fs_total < 1:
            raise TopologyError("fs_total must be >= 1")
        if slot_width_ghz <= 0:
            raise TopologyError("slot_width_ghz must be positive")
        self.nodes = list(nodes)
        self.fs_total = int(fs_total)
        self.slot_width_ghz = float(slot_width_ghz)
        self.per_direction = per_direction
        self.now = 0.0

        self.graph = nx.Graph()
        self.graph.add_nodes_from(self.nodes)
        oriented: list[tuple[str, str, float]] = []
        for a, b, km in link_specs:
            self.graph.add_edge(a, b, length_km=float(km))
            oriented.append((a, b, float(km)))
            if per_direction:
                oriented.append((b, a, float(km)))

        self._occ = np.zeros((len(oriented) + 1, self.fs_total), dtype=np.uint8)
        self.links: list[Link] = []
        self._by_pair: dict[tuple[str, str], Link] = {}
        for idx, (a, b, km) in enumerate(oriented):
            link = Link(index=idx, a=a, b=b, length_km=km, occupancy=self._occ[idx])
            self.links.append(link)
            self._by_pair[(a, b)] = link
            if not per_direction:
                self._by_pair[(b, a)] = link

        # owner -> (link indices, f_start, f_end, release_time)
        self._active: dict[str, tuple[tuple[int, ...], int, int, float]] = {}
        self._release_heap: list[tuple[float, str]] = []
        self._stream: _BackgroundStream | None = None
        self._bg_counter = 0
        # caches keyed on the immutable topology; safe for a single writer
        self._ksp_cache: dict = {}
        self._pathset_cache: dict = {}
        self._order_cache: dict = {}
        self._sp_cache: dict[tuple[str, str], tuple[Link, ...]] = {}

    # ------------------------------------------------------------------
    # topology queries

    @property
    def occupancy_matrix(self) -> np.ndarray:
        """(n_links + 1, F) uint8 matrix; the final row is an all-free pad."""
        return self._occ

    @property
    def pad_row(self) -> int:
        return len(self.links)

    def link_between(self, a: str, b: str) -> Link:
        try:
            return self._by_pair[(a, b)]
        except KeyError:
            raise TopologyError(f"no link between {a!r} and {b!r}") from None

    def path_links(self, node_seq: Sequence[str]) -> tuple[Link, ...]:
        return tuple(self.link_between(u, v) for u, v in zip(node_seq, node_seq[1:]))

    def active_owners(self, prefix: str = "") -> list[str]:
        return [o for o in self._active if o.startswith(prefix)]

    # ------------------------------------------------------------------
    # background traffic

    def rebase(self, origin: float) -> None:
        """Shift the clock so ``origin`` becomes time zero.

        Used between iterations so each one runs from t=0 with bit-identical
        arithmetic; carried allocations and the arrival stream shift with it.
        """
        if origin == 0.0:
            return
        self.now -= origin
        self._active = {
            o: (idx, f0, f1, t - origin)
            for o, (idx, f0, f1, t) in self._active.items()
        }
        for link in self.links:
            for o, a in list(link.allocations.items()):
                link.allocations[o] = SpectrumAllocation(
                    a.owner_id, a.f_start, a.f_end, a.release_time - origin
                )
        self._release_heap = [(t - origin, o) for t, o in self._release_heap]
        heapq.heapify(self._release_heap)
        if self._stream is not None:
            self._stream._next_time -= origin

    def attach_background(self, model: BackgroundTrafficModel | None) -> None:
        """Seed the arrival stream, based at the current clock.

        Harness code attaches at t=0 so that paired runs with the same seed
        observe bit-identical arrival sequences.  Re-attaching the same model
        is a no-op; attaching a different one is an error.
        """
        if model is None:
            return
        if self._stream is not None:
            if self._stream.model != model:
                raise RuntimeError("a different background stream is already attached")
            return
        self._stream = _BackgroundStream(model, self.nodes, self.now)

    def _shortest_path_links(self, src: str, dst: str) -> tuple[Link, ...]:
        key = (src, dst)
        cached = self._sp_cache.get(key)
        if cached is None:
            nodes = nx.dijkstra_path(self.graph, src, dst, weight="length_km")
            cached = self.path_links(nodes)
            self._sp_cache[key] = cached
        return cached

    def _admit_background(self, t: float, src: str, dst: str, demand: int, hold: float) -> bool:
        if demand > self.fs_total:
            return False
        links = self._shortest_path_links(src, dst)
        agg = path_aggregate_occupancy(self, links)
        start = first_free_block(agg, demand)
        if start is None:
            return False
        self._bg_counter += 1
        owner = f"bg-{self._bg_counter}"
        self._commit(links, start, start + demand - 1, owner, t + hold)
        return True

    # ------------------------------------------------------------------
    # spectrum mutation

    def _commit(self, links: Sequence[Link], f0: int, f1: int, owner: str, release_time: float) -> None:
        for link in links:
            self._occ[link.index, f0 : f1 + 1] = 1
            link.allocations[owner] = SpectrumAllocation(owner, f0, f1, release_time)
        self._active[owner] = (tuple(l.index for l in links), f0, f1, release_time)
        heapq.heappush(self._release_heap, (release_time, owner))

    def _release_owner(self, owner: str) -> None:
        idxs, f0, f1, _ = self._active.pop(owner)
        for i in idxs:
            self._occ[i, f0 : f1 + 1] = 0
            del self.links[i].allocations[owner]


def load_topology(
    text: str,
    fs_total: int = DEFAULT_FS_TOTAL,
    slot_width_ghz: float = DEFAULT_SLOT_WIDTH_GHZ,
    per_direction: bool = False,
) -> Network:
    """Parse UTF-8 JSON topology content into a fresh all-free Network.

    Expected shape: ``{"nodes": [str], "links": [{"a", "b", "length_km"}]}``.
    Slot count and width come from the run configuration, not the file.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"topology is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "nodes" not in doc or "links" not in doc:
        raise TopologyError("topology must be an object with 'nodes' and 'links'")

    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not all(isinstance(n, str) and n for n in nodes):
        raise TopologyError("'nodes' must be a list of nonempty strings")
    if len(set(nodes)) != len(nodes):
        dupes = sorted({n for n in nodes if nodes.count(n) > 1})
        raise TopologyError(f"duplicate node names: {dupes}")
    known = set(nodes)

    specs: list[tuple[str, str, float]] = []
    seen_pairs: set[frozenset[str]] = set()
    for entry in doc["links"]:
        try:
            a, b, km = entry["a"], entry["b"], float(entry["length_km"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TopologyError(f"malformed link entry {entry!r}") from exc
        for end in (a, b):
            if end not in known:
                raise TopologyError(f"link {a}-{b} references unknown node {end!r}")
        if a == b:
            raise TopologyError(f"link {a}-{b} is a self-loop")
        if km <= 0:
            raise TopologyError(f"link {a}-{b} has nonpositive length {km}")
        pair = frozenset((a, b))
        if pair in seen_pairs:
            raise TopologyError(f"duplicate link {a}-{b}")
        seen_pairs.add(pair)
        specs.append((a, b, km))

    net = Network(nodes, specs, fs_total=fs_total, slot_width_ghz=slot_width_ghz,
                  per_direction=per_direction)
    if len(nodes) > 1 and not nx.is_connected(net.graph):
        raise TopologyError("topology graph is not connected")
    return net


def load_topology_file(path: str, **kwargs) -> Network:
    with open(path, encoding="utf-8") as fh:
        return load_topology(fh.read(), **kwargs)


def nsfnet_text() -> str:
    """Raw JSON of the bundled 14-node / 21-link NSFNET reference topology."""
    return resources.files("optpipe.data").joinpath("nsfnet.json").read_text("utf-8")


def load_nsfnet(
    fs_total: int = DEFAULT_FS_TOTAL,
    slot_width_ghz: float = DEFAULT_SLOT_WIDTH_GHZ,
    per_direction: bool = False,
) -> Network:
    return load_topology(nsfnet_text(), fs_total, slot_width_ghz, per_direction)


# ----------------------------------------------------------------------
# operations


def advance_network(net: Network, now: float, bg: BackgroundTrafficModel | None = None) -> int:
    """Bring network state up to ``now``; returns the number of state changes.

    Releases every allocation whose release time has passed and admits
    background arrivals drawn from the attached seeded stream, chronologically
    interleaved (releases first on ties).  Blocked arrivals drop silently.
    Idempotent: a second call at the same ``now`` reports zero changes.
    """
    if now < net.now - 1e-12:
        raise ValueError(f"time went backwards: {now} < {net.now}")
    if bg is not None and net._stream is None:
        net.attach_background(bg)
    stream = net._stream
    heap = net._release_heap
    # fast path: nothing can be due
    if (not heap or heap[0][0] > now) and (stream is None or stream.peek() > now):
        if now > net.now:
            net.now = now
        return 0
    changes = 0
    while True:
        t_rel = math.inf
        while heap:
            t, owner = heap[0]
            rec = net._active.get(owner)
            if rec is None or rec[3] != t:
                heapq.heappop(heap)  # stale entry (manually released)
                continue
            t_rel = t
            break
        t_arr = stream.peek() if stream is not None else math.inf
        t_next = min(t_rel, t_arr)
        if t_next > now:
            break
        if t_rel <= t_arr:
            _, owner = heapq.heappop(heap)
            net._release_owner(owner)
            changes += 1
        else:
            t, src, dst, demand, hold = stream.pop()  # type: ignore[union-attr]
            if net._admit_background(t, src, dst, demand, hold):
                changes += 1
    if now > net.now:
        net.now = now
    return changes


def allocate_spectrum(
    net: Network,
    links: Sequence[Link],
    block: tuple[int, int],
    owner_id: str,
    release_time: float,
) -> None:
    """Commit an identical slot block on every link of the path.

    The caller (the selection policy) must have verified freeness; any
    occupied slot here is a programming error and raises.
    """
    f0, f1 = block
    if not links:
        raise ValueError("empty path")
    if not (0 <= f0 <= f1 < net.fs_total):
        raise ValueError(f"block {block} outside [0, {net.fs_total})")
    if owner_id in net._active:
        raise SpectrumConflictError(f"owner {owner_id!r} already has an active allocation")
    if not (release_time > net.now):
        raise ValueError("release_time must be in the future")
    for link in links:
        if net._occ[link.index, f0 : f1 + 1].any():
            raise SpectrumConflictError(
                f"slots [{f0},{f1}] not free on {link!r} for owner {owner_id!r}"
            )
    net._commit(links, f0, f1, owner_id, release_time)


def release_spectrum(net: Network, owner_id: str) -> None:
    """Remove all of an owner's allocations; restores the occupancy invariant."""
    if owner_id not in net._active:
        raise UnknownOwnerError(owner_id)
    net._release_owner(owner_id)


def path_aggregate_occupancy(net: Network, links: Sequence[Link]) -> np.ndarray:
    """Elementwise OR of link occupancy along the path (fresh array).

    A slot is free for the path iff it is free on every link.
    """
    if not links:
        raise ValueError("empty path")
    if len(links) == 1:
        return links[0].occupancy.copy()
    idx = [l.index for l in links]
    return net._occ[idx].max(axis=0)


def free_block_starts(occupancy: np.ndarray, width: int) -> np.ndarray:
    """All start slots f such that [f, f+width-1] is entirely free, ascending."""
    F = occupancy.shape[0]
    if not (1 <= width <= F):
        return np.empty(0, dtype=np.int64)
    ext = np.zeros(F + 1, dtype=np.int32)
    np.cumsum(occupancy, out=ext[1:])
    window = ext[width:] - ext[: F - width + 1]
    return np.flatnonzero(window == 0)


def first_free_block(occupancy: np.ndarray, width: int) -> int | None:
    """Lowest start slot of a free block of ``width`` slots, or None."""
    starts = free_block_starts(occupancy, width)
    return int(starts[0]) if starts.size else None


def audit_occupancy(net: Network) -> None:
    """Rebuild-and-compare check of the occupancy invariant.

    Raises SpectrumConflictError if any link's occupancy vector differs from
    the union of its active allocation ranges, or if two allocations overlap.
    """
    for link in net.links:
        rebuilt = np.zeros(net.fs_total, dtype=np.uint8)
        for alloc in link.allocations.values():
            if rebuilt[alloc.f_start : alloc.f_end + 1].any():
                raise SpectrumConflictError(
                    f"overlapping allocations on {link!r} at [{alloc.f_start},{alloc.f_end}]"
                )
            rebuilt[alloc.f_start : alloc.f_end + 1] = 1
        if not np.array_equal(rebuilt, link.occupancy):
            raise SpectrumConflictError(f"occupancy out of sync with allocations on {link!r}")
