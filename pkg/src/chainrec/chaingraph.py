"""Cell discretization and the epsilon-pseudo-orbit reachability digraph.

A cell u points to a different cell v when some sample x of u has
dist(f(x), closure(v)) < epsilon in the space metric (quotient metric on
the torus).  A self edge u -> u instead requires a genuine one-step
return d(f(x), x) < epsilon at some sample: measuring self edges against
the whole cell closure would certify recurrence at slack epsilon plus a
cell width and mint spurious singleton recurrent classes along slow
drifts.  Strongly connected components of this digraph are the grid
chain classes; a singleton class is recurrent only if it carries a self
loop, mirroring the k >= 1 requirement in the underlying closed-chain
relation.

Soundness guideline (documented, not enforced): epsilon at least one
cell width, so that cell-quantization error is absorbed by the edge
slack.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import scc
from .errors import NotReachable, ResolutionOverflow
from .systems import MapSpec, PhaseSpace

__all__ = [
    "Grid", "ChainGraph", "ChainClass", "PseudoOrbitPath",
    "StabilizationReport", "build_graph", "classes", "reaches", "witness",
    "verify_pseudo_orbit", "refine", "DEFAULT_CELL_CAP",
]

DEFAULT_CELL_CAP = 1 << 24


def _kronecker_offsets(count: int, dim: int) -> np.ndarray:
    """Fixed low-discrepancy offsets in (0,1)^dim (R_d Kronecker sequence)."""
    phi = 2.0
    for _ in range(40):
        phi = (1 + phi) ** (1 / (dim + 1))
    alphas = np.array([(1 / phi) ** (j + 1) for j in range(dim)])
    out = np.mod(0.5 + np.outer(np.arange(1, count + 1), alphas), 1.0)
    return out


@dataclass(frozen=True)
class Grid:
    """Partition of the phase space into half-open boxes (wrapping on tori)."""

    space: PhaseSpace
    resolution: tuple[int, ...]

    def __post_init__(self):
        res = tuple(int(n) for n in (self.resolution
                                     if isinstance(self.resolution, (tuple, list))
                                     else [self.resolution] * self.space.dim))
        if len(res) != self.space.dim or any(n < 1 for n in res):
            raise ValueError("resolution needs one positive count per axis")
        object.__setattr__(self, "resolution", res)

    @property
    def h(self) -> np.ndarray:
        return self.space.widths() / np.array(self.resolution)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.resolution))

    def cell_of(self, pts: np.ndarray) -> np.ndarray:
        """Per-axis cell indices of points (batch), total and deterministic."""
        pts = self.space.reduce(np.atleast_2d(np.asarray(pts, float)))
        rel = (pts - self.space.lows()) / self.h
        idx = np.floor(rel).astype(np.int64)
        res = np.array(self.resolution)
        if self.space.kind == "torus":
            idx = np.mod(idx, res)
        else:
            idx = np.clip(idx, 0, res - 1)
        return idx

    def flat(self, idx: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(np.atleast_2d(idx).T, self.resolution)

    def unflat(self, flat: int | np.ndarray) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.resolution), axis=-1)

    def flat_cell_of(self, pts) -> np.ndarray:
        return self.flat(self.cell_of(pts))

    def centers(self, flat: np.ndarray | None = None) -> np.ndarray:
        if flat is None:
            flat = np.arange(self.ncells)
        idx = self.unflat(np.asarray(flat))
        return self.space.lows() + (idx + 0.5) * self.h

    def cell_bounds(self, flat: int) -> list[tuple[float, float]]:
        idx = self.unflat(flat)
        lo = self.space.lows() + idx * self.h
        return [(float(a), float(a + w)) for a, w in zip(lo, self.h)]

    def samples(self, per_cell: int) -> np.ndarray:
        """(ncells * per_cell, d) sample points: center first, then fixed
        low-discrepancy offsets, cell-major order."""
        if per_cell < 1:
            raise ValueError("samples per cell must be >= 1")
        offs = np.vstack([np.full((1, self.space.dim), 0.5),
                          _kronecker_offsets(per_cell - 1, self.space.dim)])
        idx = self.unflat(np.arange(self.ncells))  # (C, d)
        lo = self.space.lows() + idx * self.h
        pts = lo[:, None, :] + offs[None, :, :] * self.h
        return pts.reshape(-1, self.space.dim)


@dataclass(frozen=True)
class ChainClass:
    id: int
    cells: frozenset[int]
    recurrent: bool


@dataclass(frozen=True)
class PseudoOrbitPath:
    """Finite point sequence with per-step error below ``epsilon``."""

    points: np.ndarray
    epsilon: float
    jumps: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points",
                           np.atleast_2d(np.asarray(self.points, float)))


def jump_indices(mapspec: MapSpec, points: np.ndarray,
                 tol: float = 1e-10) -> tuple[int, ...]:
    """Indices i with d(x_{i+1}, f(x_i)) > tol (the non-genuine steps)."""
    pts = np.atleast_2d(np.asarray(points, float))
    if len(pts) < 2:
        return ()
    imgs = mapspec.evaluate_batch(pts[:-1])
    dist = mapspec.space.distance(pts[1:], imgs)
    return tuple(int(i) for i in np.nonzero(dist > tol)[0])


@dataclass
class ChainGraph:
    grid: Grid
    epsilon: float
    samples_per_cell: int
    adj: list[list[int]]
    edge_sample: dict = field(default_factory=dict, repr=False)
    mapspec: MapSpec | None = None

    @property
    def nedges(self) -> int:
        return sum(len(a) for a in self.adj)

    def edges(self):
        for u, succ in enumerate(self.adj):
            for v in succ:
                yield u, v


def _interval_dist(space: PhaseSpace, y: np.ndarray, lo: np.ndarray,
                   width: np.ndarray) -> np.ndarray:
    """Per-axis distance from coordinates y to closed intervals [lo, lo+width]."""
    if space.kind == "torus":
        rel = np.mod(y - lo, 1.0)
        outside = np.minimum(rel - width, 1.0 - rel)
        return np.where(rel <= width, 0.0, np.maximum(outside, 0.0))
    below = lo - y
    above = y - (lo + width)
    return np.maximum(np.maximum(below, above), 0.0)


def build_graph(mapspec: MapSpec, grid: Grid, epsilon: float,
                samples: int = 1, cell_cap: int = DEFAULT_CELL_CAP,
                chunk: int = 1 << 16) -> ChainGraph:
    """Deterministic pseudo-orbit digraph over the grid cells.

    Edge u -> v (u != v) iff some sample x of u has
    dist(f(x), closure(v)) < epsilon; self edge u -> u iff some sample
    returns to itself, d(f(x), x) < epsilon.  Samples are the cell center
    plus ``samples - 1`` fixed low-discrepancy points; the edge set
    depends only on (map, grid, epsilon, samples).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if grid.ncells > cell_cap:
        raise ResolutionOverflow(
            f"{grid.ncells} cells exceed the configured cap {cell_cap}")
    space = grid.space
    d = space.dim
    h = grid.h
    res = np.array(grid.resolution)
    windows = [np.arange(-(int(math.floor(epsilon / h[j])) + 1),
                         int(math.floor(epsilon / h[j])) + 2)
               for j in range(d)]
    offsets = np.array(list(itertools.product(*windows)))  # (W, d)

    pts = grid.samples(samples)
    src_flat = np.repeat(np.arange(grid.ncells), samples)
    pairs: dict[int, int] = {}  # (u * C + v) -> first generating sample row
    C = grid.ncells
    for start in range(0, len(pts), chunk):
        block = slice(start, min(start + chunk, len(pts)))
        imgs = mapspec.evaluate_batch(pts[block])
        base = grid.cell_of(imgs)  # (B, d)
        cand = base[:, None, :] + offsets[None, :, :]  # (B, W, d)
        if space.kind == "torus":
            cand_idx = np.mod(cand, res)
            valid = np.ones(cand.shape[:2], dtype=bool)
        else:
            valid = np.all((cand >= 0) & (cand < res), axis=-1)
            cand_idx = np.clip(cand, 0, res - 1)
        lo = space.lows() + cand_idx * h
        ax = _interval_dist(space, imgs[:, None, :], lo, h)
        if space.metric == "sup":
            dist = ax.max(axis=-1)
        else:
            dist = np.sqrt((ax * ax).sum(axis=-1))
        hit = valid & (dist < epsilon)
        rows, cols = np.nonzero(hit)
        dst = np.ravel_multi_index(
            tuple(cand_idx[rows, cols, :].T), grid.resolution)
        src = src_flat[block][rows]
        cross = src != dst
        keys = src[cross].astype(np.int64) * C + dst[cross]
        sample_rows = rows[cross] + start
        # self edges: genuine one-step return at a sample
        ret = space.distance(imgs, pts[block]) < epsilon
        self_src = src_flat[block][ret]
        self_keys = self_src.astype(np.int64) * C + self_src
        keys = np.concatenate([keys, self_keys])
        sample_rows = np.concatenate(
            [sample_rows, np.nonzero(ret)[0] + start])
        order = np.argsort(sample_rows, kind="stable")
        for key, srow in zip(keys[order].tolist(),
                             sample_rows[order].tolist()):
            if key not in pairs:
                pairs[key] = srow
    adj: list[list[int]] = [[] for _ in range(C)]
    for key in pairs:
        adj[key // C].append(key % C)
    for lst in adj:
        lst.sort()
    edge_sample = {(key // C, key % C): pts[row] for key, row in pairs.items()}
    return ChainGraph(grid, float(epsilon), samples, adj, edge_sample, mapspec)


def classes(g: ChainGraph) -> tuple[list[ChainClass], list[set[int]]]:
    """SCC decomposition and the (acyclic) condensation adjacency.

    Class ids follow a topological order of the condensation: every DAG
    edge goes from a lower id to a higher id.
    """
    comp = scc.tarjan_scc(g.grid.ncells, g.adj)
    ncomp, dag = scc.condensation(g.grid.ncells, g.adj, comp)
    members: list[list[int]] = [[] for _ in range(ncomp)]
    for cell, c in enumerate(comp):
        members[c].append(cell)
    out = []
    for cid in range(ncomp):
        cells = members[cid]
        recurrent = len(cells) > 1 or (cells and cells[0] in g.adj[cells[0]])
        out.append(ChainClass(cid, frozenset(cells), recurrent))
    return out, dag


def _bfs_from_successors(g: ChainGraph, start: int) -> tuple[set[int], dict[int, int]]:
    """Cells reachable from ``start`` by >= 1 edge, with BFS parents."""
    seen: set[int] = set()
    parent: dict[int, int] = {}
    frontier = []
    for v in g.adj[start]:
        if v not in seen:
            seen.add(v)
            parent[v] = start
            frontier.append(v)
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.adj[u]:
                if v not in seen:
                    seen.add(v)
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    return seen, parent


def reaches(g: ChainGraph, x: Sequence[float], y: Sequence[float]) -> bool:
    """Grid approximation of the one-way chain relation (>= 1 edge)."""
    cx = int(g.grid.flat_cell_of(np.asarray(x, float))[0])
    cy = int(g.grid.flat_cell_of(np.asarray(y, float))[0])
    seen, _ = _bfs_from_successors(g, cx)
    return cy in seen


def _project_to_cell(grid: Grid, point: np.ndarray, flat: int) -> np.ndarray:
    """Nearest point of the closed cell to ``point`` (wrap-aware per axis)."""
    space = grid.space
    out = np.array(point, float)
    for j, (lo, hi) in enumerate(grid.cell_bounds(flat)):
        yj = out[j]
        if space.kind == "torus":
            rel = math.fmod(yj - lo, 1.0)
            if rel < 0:
                rel += 1.0
            width = hi - lo
            if rel <= width:
                continue
            out[j] = lo + (width if rel - width <= 1.0 - rel else 1.0)
            out[j] = math.fmod(out[j], 1.0)
        else:
            out[j] = min(max(yj, lo), hi)
    return out


def witness(g: ChainGraph, x: Sequence[float], y: Sequence[float],
            tol: float = 1e-10) -> PseudoOrbitPath:
    """Explicit pseudo-orbit from x to y along a shortest cell path.

    Each intermediate point is the projection of the previous image onto
    the next cell of the path, so every step inherits the edge slack plus
    at most one cell of quantization.  The returned path always validates
    against its own recorded epsilon, which equals the graph epsilon
    whenever quantization stays inside the slack.
    """
    if g.mapspec is None:
        raise ValueError("witness needs the graph's generating map")
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    cx = int(g.grid.flat_cell_of(x)[0])
    cy = int(g.grid.flat_cell_of(y)[0])
    seen, parent = _bfs_from_successors(g, cx)
    if cy not in seen:
        raise NotReachable(f"cell {cy} not reachable from cell {cx}")
    path_cells = [cy]
    while path_cells[-1] != cx or len(path_cells) == 1:
        path_cells.append(parent[path_cells[-1]])
        if path_cells[-1] == cx:
            break
    path_cells.reverse()
    pts = [x]
    for flat in path_cells[1:-1]:
        img = g.mapspec.evaluate_batch(pts[-1][None, :])[0]
        pts.append(_project_to_cell(g.grid, img, flat))
    pts.append(y)
    points = np.vstack(pts)
    imgs = g.mapspec.evaluate_batch(points[:-1])
    dists = g.mapspec.space.distance(points[1:], imgs)
    eps_path = max(g.epsilon, float(dists.max()) * (1 + 1e-12) + 1e-15)
    return PseudoOrbitPath(points, eps_path,
                           jump_indices(g.mapspec, points, tol))


def verify_pseudo_orbit(mapspec: MapSpec, path: PseudoOrbitPath,
                        epsilon: float) -> bool:
    """Strict check d(x_{i+1}, f(x_i)) < epsilon for every consecutive pair."""
    pts = path.points
    if len(pts) < 2:
        return True
    imgs = mapspec.evaluate_batch(pts[:-1])
    dist = mapspec.space.distance(pts[1:], imgs)
    return bool(np.all(dist < epsilon))


@dataclass(frozen=True)
class StabilizationReport:
    levels: tuple[dict, ...]
    stabilized: bool

    @property
    def class_counts(self) -> list[int]:
        return [lv["n_recurrent"] for lv in self.levels]


def refine(mapspec: MapSpec, base_grid: Grid, eps_schedule: Sequence[float],
           levels: int, samples: int = 1, probes: int = 16,
           cell_cap: int = DEFAULT_CELL_CAP) -> StabilizationReport:
    """Repeated classes runs on doubling grids, approximating the
    all-epsilon chain relation from above.

    Tracks the class membership of fixed probe points; ``stabilized``
    requires the recurrent-class count and the probe partition to agree
    on the last two levels.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if len(eps_schedule) != levels:
        raise ValueError("need one epsilon per level")
    if any(b <= a for a, b in zip(eps_schedule[1:], eps_schedule[:-1])):
        raise ValueError("epsilon schedule must be strictly decreasing")
    space = base_grid.space
    probe_pts = space.lows() + _kronecker_offsets(probes, space.dim) \
        * space.widths()
    rows = []
    for lv in range(levels):
        res = tuple(n * (1 << lv) for n in base_grid.resolution)
        grid = Grid(space, res)
        g = build_graph(mapspec, grid, eps_schedule[lv], samples,
                        cell_cap=cell_cap)
        cls, _ = classes(g)
        cell_class = {}
        for c in cls:
            for cell in c.cells:
                cell_class[cell] = c.id
        sig = [cell_class[int(f)] for f in grid.flat_cell_of(probe_pts)]
        canon: dict[int, int] = {}
        partition = []
        for s in sig:
            partition.append(canon.setdefault(s, len(canon)))
        rows.append({
            "resolution": res,
            "epsilon": eps_schedule[lv],
            "n_classes": len(cls),
            "n_recurrent": sum(1 for c in cls if c.recurrent),
            "probe_partition": tuple(partition),
        })
    stabilized = (levels >= 2
                  and rows[-1]["n_recurrent"] == rows[-2]["n_recurrent"]
                  and rows[-1]["probe_partition"] == rows[-2]["probe_partition"])
    return StabilizationReport(tuple(rows), stabilized)
