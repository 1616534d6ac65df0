"""Routing and spectrum assignment over the elastic optical network.

Candidate routes come from k-shortest-path enumeration; candidate slot
blocks from a sliding scan of the path-aggregate occupancy.  Three selection
policies are provided:

* fitness-based selection: scores each candidate path by
  ``gamma = [B nonempty] / (length_km * availability) * mean block contiguity``
  and picks the argmax, then the highest-contiguity block on that path;
* ``ksp_ff``: first feasible path in shortest-path order, lowest block;
* ``sd_ff``: first feasible path in lowest-propagation-delay order,
  lowest block.

All selectors are pure: they never mutate the network.  Committing the
returned block is the caller's job via ``topology.allocate_spectrum``.

Determinism contract: path order is (length_km, hop count, node sequence);
fitness ties break by shorter length, fewer hops, then path order; block
ties break by lowest start slot.  The contiguity mean is computed from
integer transition counts with a single float division so that independent
reimplementations can match it bit for bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import networkx as nx
import numpy as np

from .latency import LatencyParams, alpha
from .topology import Link, Network, free_block_starts


class CiMode(enum.Enum):
    """Window placement for the contiguity transition count.

    ``literal`` sums strictly inside the block, which makes every free block
    score 1.0; ``window`` (the default) extends the sum one slot past each
    block edge so neighboring occupancy influences the score; ``global``
    counts transitions over the whole vector with denominator F-1.
    """

    LITERAL = "literal"
    WINDOW = "window"
    GLOBAL = "global"


# Lower bound on the mean-contiguity factor when feasible blocks exist.
# Keeps availability equivalent to feasibility (score 0 means exactly "no
# block fits / no capacity"), even in modes where every individual block can
# score 0; far below the smallest genuine contiguity quantum, so it never
# reorders paths with nonzero scores.
CI_FLOOR = 1e-9


@dataclass(frozen=True)
class CandidatePath:
    """A loopless route with its precomputed length and link row indices."""

    nodes: tuple[str, ...]
    links: tuple[Link, ...]
    length_km: float
    hop_count: int
    link_indices: tuple[int, ...] = ()


@dataclass(frozen=True)
class CandidateBlock:
    f_start: int
    f_end: int

    @property
    def width(self) -> int:
        return self.f_end - self.f_start + 1


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of one route-and-spectrum selection.

    ``path``/``block`` are None when every candidate was infeasible
    (a blocking event); ``fitness`` is the winning path's score.
    """

    path: CandidatePath | None
    block: CandidateBlock | None
    fitness: float
    candidates_examined: int

    @property
    def blocked(self) -> bool:
        return self.path is None


def _path_length(net: Network, nodes: Sequence[str]) -> float:
    total = 0.0
    for u, v in zip(nodes, nodes[1:]):
        total += net.link_between(u, v).length_km
    return total


def _make_candidate(net: Network, nodes: Sequence[str]) -> CandidatePath:
    links = net.path_links(nodes)
    return CandidatePath(
        nodes=tuple(nodes),
        links=links,
        length_km=_path_length(net, nodes),
        hop_count=len(links),
        link_indices=tuple(l.index for l in links),
    )


class _PathSet:
    """Candidate paths of one (src, dst, k) plus precomputed batch arrays.

    ``idxmat`` is padded with the network's all-free row so the whole set
    aggregates with a single fancy-index, regardless of hop counts.
    """

    __slots__ = ("paths", "idxmat", "lengths", "n_links", "hops")

    def __init__(self, net: Network, paths: Sequence[CandidatePath]):
        self.paths = tuple(paths)
        max_links = max((len(p.links) for p in paths), default=1)
        self.idxmat = np.full((len(paths), max_links), net.pad_row, dtype=np.intp)
        for i, p in enumerate(paths):
            self.idxmat[i, : len(p.links)] = p.link_indices
        self.lengths = np.array([p.length_km for p in paths])
        self.n_links = np.array([len(p.links) for p in paths], dtype=np.int64)
        self.hops = np.array([p.hop_count for p in paths], dtype=np.int64)


def _path_set(net: Network, src: str, dst: str, k: int) -> _PathSet | None:
    key = (src, dst, k)
    pset = net._pathset_cache.get(key)
    if pset is None:
        paths = k_shortest_paths(net, src, dst, k)
        if not paths:
            return None
        pset = _PathSet(net, paths)
        net._pathset_cache[key] = pset
    return pset


def k_shortest_paths(net: Network, src: str, dst: str, k: int) -> list[CandidatePath]:
    """Up to k loopless paths sorted by (length_km, hops, node sequence).

    Matches brute-force enumeration of all simple paths under the same key,
    truncated to k.  Returns an empty list when no path exists.
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    if k < 1:
        raise ValueError("k must be >= 1")
    cache_key = (src, dst, k)
    cached = net._ksp_cache.get(cache_key)
    if cached is not None:
        return list(cached)

    collected: list[tuple[float, int, tuple[str, ...]]] = []
    try:
        gen = nx.shortest_simple_paths(net.graph, src, dst, weight="length_km")
        for nodes in gen:
            length = _path_length(net, nodes)
            collected.append((length, len(nodes) - 1, tuple(nodes)))
            if len(collected) >= k:
                # paths arrive in nondecreasing length; once the newest one is
                # strictly longer than the kth-best we have every tie candidate
                kth = sorted(collected)[k - 1][0]
                if length > kth * (1 + 1e-12) + 1e-12:
                    break
    except nx.NetworkXNoPath:
        pass
    collected.sort()
    result = [_make_candidate(net, nodes) for _, _, nodes in collected[:k]]
    net._ksp_cache[cache_key] = tuple(result)
    return result


def find_candidate_blocks(net: Network, path: CandidatePath, width: int) -> list[CandidateBlock]:
    """Every free block of ``width`` slots on the path, ascending by start."""
    if not (1 <= width <= net.fs_total):
        raise ValueError(f"width {width} outside [1, {net.fs_total}]")
    agg = net.occupancy_matrix[list(path.link_indices)].max(axis=0)
    starts = free_block_starts(agg, width)
    return [CandidateBlock(int(f), int(f) + width - 1) for f in starts]


def contiguity_index(
    occupancy: np.ndarray | Sequence[int],
    block: tuple[int, int],
    mode: CiMode = CiMode.WINDOW,
) -> float:
    """Fragmentation score in [0, 1] for one block on one occupancy vector.

    Counts free-to-occupied transitions (s[j-1]=0 and s[j]=1) over the
    mode's summation window and normalizes by the block span (or F-1 in
    global mode).  Width-1 blocks use denominator 1; results clamp to [0,1].
    """
    s = np.asarray(occupancy, dtype=np.uint8)
    F = s.shape[0]
    f0, f1 = block
    if not (0 <= f0 <= f1 < F):
        raise ValueError(f"block {block} outside [0, {F})")
    if mode is CiMode.LITERAL:
        lo, hi = f0 + 1, f1
    elif mode is CiMode.WINDOW:
        lo, hi = max(1, f0), min(F - 1, f1 + 1)
    elif mode is CiMode.GLOBAL:
        lo, hi = 1, F - 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    count = 0
    for j in range(lo, hi + 1):
        if s[j - 1] == 0 and s[j] == 1:
            count += 1
    denom = (F - 1) if mode is CiMode.GLOBAL else (f1 - f0)
    denom = max(denom, 1)
    return (denom - min(count, denom)) / denom


def availability_factor(net: Network, path: CandidatePath) -> float:
    """1 - occupied/F over the path-aggregate occupancy; 0 only when full."""
    agg = net.occupancy_matrix[list(path.link_indices)].max(axis=0)
    return 1.0 - int(agg.sum()) / net.fs_total


# ----------------------------------------------------------------------
# vectorized path evaluation (shared by fitness and the selectors)

_IDX_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _window_bounds(F: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-start (hi, lo-1) cumulative-count indices for window mode."""
    key = (F, width)
    cached = _IDX_CACHE.get(key)
    if cached is None:
        starts = np.arange(F - width + 1)
        hi = np.minimum(starts + width, F - 1)
        lo = np.maximum(starts, 1) - 1
        cached = (hi, lo)
        _IDX_CACHE[key] = cached
    return cached


@dataclass(frozen=True)
class PathEvaluation:
    """Per-path selection inputs: score, free block starts, transition counts."""

    gamma: float
    delta: float
    starts: np.ndarray       # free block start slots, ascending
    clamped_counts: np.ndarray  # min(transition count, denom) per start
    denom: int


class _BatchEval:
    """Vectorized fitness inputs for one path set at the current occupancy."""

    __slots__ = ("gamma", "delta", "free_mask", "counts", "denom", "feasible")

    def __init__(self, gamma, delta, free_mask, counts, denom, feasible):
        self.gamma = gamma          # (n,) float
        self.delta = delta          # (n,) float
        self.free_mask = free_mask  # (n, nstarts) bool
        self.counts = counts        # (n, nstarts) clamped transition counts
        self.denom = denom
        self.feasible = feasible    # (n,) bool


def _gamma_batch(
    net: Network,
    pset: _PathSet,
    width: int,
    mode: CiMode,
    ci_per_link: bool = False,
    delta_aggregate: bool = False,
) -> _BatchEval:
    """Evaluate fitness for every path in one shot against current occupancy.

    The availability divisor is the mean per-link free fraction by default;
    ``delta_aggregate`` switches it to the union-occupancy variant, which
    flattens the length preference on multi-hop paths (a longer path's union
    occupancy is systematically higher, cancelling the 1/L term).

    Mean contiguity is formed from integer transition counts and a single
    float division so a straightforward reimplementation reproduces the
    scores bit for bit.
    """
    F = net.fs_total
    n = len(pset.paths)
    rows = net.occupancy_matrix[pset.idxmat]  # (n, max_links, F)
    agg = rows.max(axis=1)
    ext = np.zeros((n, F + 1), dtype=np.int32)
    np.cumsum(agg, axis=1, out=ext[:, 1:])
    window_occ = ext[:, width:] - ext[:, : F - width + 1]
    free_mask = window_occ == 0

    denom = max(width - 1, 1)
    if ci_per_link:
        counts = np.stack(_per_link_counts(net, pset.paths, width, mode, denom))
        S = (counts * free_mask).sum(axis=1)
    else:
        counts = _transition_counts(agg, n, F, width, mode, denom)
        S = (counts * free_mask).sum(axis=1, dtype=np.int64)
    nfree = free_mask.sum(axis=1, dtype=np.int64)

    if delta_aggregate:
        delta = 1.0 - ext[:, F].astype(np.float64) / F
    else:
        per_link_occupied = rows.sum(axis=(1, 2), dtype=np.int64)  # pad rows are zero
        delta = 1.0 - per_link_occupied / (pset.n_links * F)

    feasible = (nfree > 0) & (delta > 0.0)
    nd = np.maximum(nfree * denom, 1)
    mean_ci = (nd - S) / nd
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.maximum(mean_ci, CI_FLOOR) / (pset.lengths * delta)
    gamma = np.where(feasible, gamma, 0.0)
    return _BatchEval(gamma, delta, free_mask, counts, denom, feasible)


def _evaluate_paths(
    net: Network,
    paths: Sequence[CandidatePath],
    width: int,
    mode: CiMode,
    ci_per_link: bool = False,
    delta_aggregate: bool = False,
) -> list[PathEvaluation]:
    """Per-path view of the batch evaluation (query API and audits)."""
    ev = _gamma_batch(net, _PathSet(net, paths), width, mode, ci_per_link, delta_aggregate)
    out = []
    for i in range(len(paths)):
        starts = np.flatnonzero(ev.free_mask[i])
        out.append(
            PathEvaluation(
                gamma=float(ev.gamma[i]),
                delta=float(ev.delta[i]),
                starts=starts,
                clamped_counts=ev.counts[i][starts],
                denom=ev.denom,
            )
        )
    return out


def _transition_counts(
    agg: np.ndarray, n: int, F: int, width: int, mode: CiMode, denom: int
) -> np.ndarray:
    """min(count, denom) of 0->1 transitions per block start, for each row."""
    trans = (1 - agg[:, :-1]) * agg[:, 1:]
    tc = np.zeros((n, F), dtype=np.int32)
    if F > 1:
        np.cumsum(trans, axis=1, out=tc[:, 1:])
    nstarts = F - width + 1
    if mode is CiMode.LITERAL:
        counts = tc[:, width - 1 :] - tc[:, :nstarts]
    elif mode is CiMode.WINDOW:
        hi, lo = _window_bounds(F, width)
        counts = tc[:, hi] - tc[:, lo]
    else:
        counts = np.broadcast_to(tc[:, F - 1 : F], (n, nstarts)).copy()
    return np.minimum(counts, denom)


def _per_link_counts(
    net: Network, paths: Sequence[CandidatePath], width: int, mode: CiMode, denom: int
) -> list[np.ndarray]:
    """Per-block clamped counts averaged across the path's links (float)."""
    F = net.fs_total
    occ = net.occupancy_matrix
    result = []
    for p in paths:
        rows = occ[list(p.link_indices)]
        counts = _transition_counts(rows, rows.shape[0], F, width, mode, denom)
        result.append(counts.mean(axis=0))
    return result


def fitness(
    net: Network,
    path: CandidatePath,
    width: int,
    mode: CiMode = CiMode.WINDOW,
    ci_per_link: bool = False,
) -> float:
    """Candidate path score: availability-indicator / (L * delta) * mean CI.

    Zero exactly when no block fits (or the aggregate is fully occupied);
    strictly decreasing in path length for fixed spectrum state.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    return _evaluate_paths(net, [path], width, mode, ci_per_link)[0].gamma


def select_cba(
    net: Network,
    src: str,
    dst: str,
    width: int,
    k: int,
    mode: CiMode = CiMode.WINDOW,
    ci_per_link: bool = False,
) -> SelectionResult:
    """Fitness-based selection: argmax gamma, then highest-CI block.

    Ties: shorter length, fewer hops, earlier path order; block ties take
    the lowest start slot.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    pset = _path_set(net, src, dst, k)
    if pset is None:
        return SelectionResult(None, None, 0.0, 0)
    ev = _gamma_batch(net, pset, width, mode, ci_per_link)

    best_i = -1
    best_key: tuple | None = None
    for i, p in enumerate(pset.paths):
        g = ev.gamma[i]
        if g <= 0.0:
            continue
        key = (-g, p.length_km, p.hop_count, i)
        if best_key is None or key < best_key:
            best_key = key
            best_i = i
    if best_i < 0:
        return SelectionResult(None, None, 0.0, len(pset.paths))

    starts = np.flatnonzero(ev.free_mask[best_i])
    j = int(np.argmin(ev.counts[best_i][starts]))  # max CI = min count; first wins
    f0 = int(starts[j])
    block = CandidateBlock(f0, f0 + width - 1)
    return SelectionResult(pset.paths[best_i], block, float(ev.gamma[best_i]), len(pset.paths))


def _gamma_single(net: Network, pset: _PathSet, i: int, width: int, mode: CiMode) -> float:
    """Fitness of one path of the set; same arithmetic as the batch path."""
    F = net.fs_total
    rows = net.occupancy_matrix[pset.idxmat[i]]
    agg = rows.max(axis=0)
    ext = np.zeros(F + 1, dtype=np.int32)
    np.cumsum(agg, out=ext[1:])
    free_mask = (ext[width:] - ext[: F - width + 1]) == 0
    nfree = int(free_mask.sum())
    path = pset.paths[i]
    delta = 1.0 - int(rows.sum()) / (len(path.links) * F)
    if nfree == 0 or delta <= 0.0:
        return 0.0
    denom = max(width - 1, 1)
    counts = _transition_counts(agg[None, :], 1, F, width, mode, denom)[0]
    S = int(counts[free_mask].sum())
    nd = nfree * denom
    mean_ci = (nd - S) / nd
    return max(mean_ci, CI_FLOOR) / (path.length_km * delta)


def _first_fit_over(
    net: Network, pset: _PathSet | None, order: Sequence[int], width: int
) -> SelectionResult:
    if pset is None:
        return SelectionResult(None, None, 0.0, 0)
    occ = net.occupancy_matrix
    for examined, i in enumerate(order, start=1):
        agg = occ[pset.idxmat[i]].max(axis=0)
        starts = free_block_starts(agg, width)
        if starts.size:
            f0 = int(starts[0])
            block = CandidateBlock(f0, f0 + width - 1)
            gamma = _gamma_single(net, pset, i, width, CiMode.WINDOW)
            return SelectionResult(pset.paths[i], block, gamma, examined)
    return SelectionResult(None, None, 0.0, len(pset.paths))


def select_ksp_ff(net: Network, src: str, dst: str, width: int, k: int) -> SelectionResult:
    """First path in shortest-path order with any feasible block, lowest slot."""
    if width < 1:
        raise ValueError("width must be >= 1")
    pset = _path_set(net, src, dst, k)
    return _first_fit_over(net, pset, range(len(pset.paths)) if pset else (), width)


def select_sd_ff(
    net: Network, src: str, dst: str, width: int, k: int, params: LatencyParams
) -> SelectionResult:
    """First-fit over the same candidates reordered by propagation delay.

    The delay term is length * per-km delay + hops * per-hop overhead, so the
    order can differ from pure km order when hop counts differ.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    pset = _path_set(net, src, dst, k)
    if pset is None:
        return SelectionResult(None, None, 0.0, 0)
    cache_key = (src, dst, k, params.prop_s_per_km, params.per_hop_overhead_s)
    order = net._order_cache.get(cache_key)
    if order is None:
        # stable sort keeps the shortest-path composite order within alpha ties
        order = sorted(range(len(pset.paths)), key=lambda i: alpha(params, pset.paths[i]))
        net._order_cache[cache_key] = order
    return _first_fit_over(net, pset, order, width)


def all_simple_paths_sorted(net: Network, src: str, dst: str) -> list[CandidatePath]:
    """Every simple path under the KSP sort key (small graphs; used by audits)."""
    found: list[tuple[float, int, tuple[str, ...]]] = []
    n = len(net.nodes)
    stack: list[tuple[str, tuple[str, ...]]] = [(src, (src,))]
    while stack:
        node, seen = stack.pop()
        if node == dst:
            found.append((_path_length(net, seen), len(seen) - 1, seen))
            continue
        if len(seen) > n:
            continue
        for nbr in net.graph.neighbors(node):
            if nbr not in seen:
                stack.append((nbr, seen + (nbr,)))
    found.sort()
    return [_make_candidate(net, nodes) for _, _, nodes in found]
