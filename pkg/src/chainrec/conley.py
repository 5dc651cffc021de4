"""Complete Lyapunov data, filtrations and grid towers on the condensation.

The Lyapunov function increases along the dynamics, so quasi-attractors
sit at maximal values and filtration sets are superlevel sets.
Recurrent classes receive distinct middle-thirds Cantor values ordered
by a linear extension of the condensation; non-recurrent classes are
interpolated strictly between the values of their predecessors and the
minimum over their recurrent descendants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chaingraph import ChainClass, ChainGraph, Grid
from .errors import DepthExceeded, NotAQuasiAttractor, ShortCycle, Unreachable
from .systems import MapSpec

__all__ = ["LyapunovFunction", "Filtration", "TowerResult", "lyapunov",
           "filtration", "quasi_attractors", "weak_basin", "build_tower",
           "coloring_constant_metadata"]


def coloring_constant_metadata(dim: int) -> dict:
    """Recorded bookkeeping constant kappa_d = 2*(2d+1)^2 + 1 (unused
    algorithmically; the greedy grid tower needs no shift bound)."""
    k_d = (2 * dim + 1) ** 2
    return {"k_d": k_d, "kappa_d": 2 * k_d + 1}


@dataclass(frozen=True)
class LyapunovFunction:
    class_value: dict[int, float]
    cell_value: dict[int, float]
    cantor_depth: int

    def of_cell(self, cell: int) -> float:
        return self.cell_value[cell]


def _cantor_value(index: int, depth: int) -> float:
    """index-th point (in increasing order) of the depth-B middle-thirds
    family: binary digits of index become ternary digits in {0, 2}."""
    val = 0.0
    for pos in range(depth):
        bit = (index >> (depth - 1 - pos)) & 1
        val += (2 * bit) / 3 ** (pos + 1)
    return val


def lyapunov(cls: list[ChainClass], dag: list[set[int]],
             depth: int = 20) -> LyapunovFunction:
    """Values by topological order: Cantor points on recurrent classes,
    strict interpolation elsewhere; increasing along every DAG edge."""
    n = len(cls)
    recurrent = [c.recurrent for c in cls]
    nrec = sum(recurrent)
    if nrec > (1 << depth):
        raise DepthExceeded(
            f"{nrec} recurrent classes exceed Cantor budget 2^{depth}")
    # class ids are already a topological order (edges low -> high)
    order = range(n)
    value: dict[int, float] = {}
    rec_rank = 0
    for cid in order:
        if recurrent[cid]:
            value[cid] = _cantor_value(rec_rank, depth)
            rec_rank += 1
    # min recurrent value among descendants, by reverse topological sweep
    ub = [np.inf] * n
    for cid in reversed(range(n)):
        if recurrent[cid]:
            ub[cid] = value[cid]
            continue
        for succ in dag[cid]:
            ub[cid] = min(ub[cid], ub[succ])
    preds: list[list[int]] = [[] for _ in range(n)]
    for cid in range(n):
        for succ in dag[cid]:
            preds[succ].append(cid)
    for cid in order:
        if recurrent[cid]:
            continue
        upper = ub[cid]
        if not np.isfinite(upper):
            # no recurrent descendant: cannot happen when every cell has
            # outgoing edges, but stay total
            upper = 1.0 + cid
        lows = [value[p] for p in preds[cid] if p in value]
        lo = max(lows) if lows else upper - 1.0
        value[cid] = (lo + upper) / 2
    cell_value = {}
    for c in cls:
        for cell in c.cells:
            cell_value[cell] = value[c.id]
    return LyapunovFunction(value, cell_value, depth)


@dataclass(frozen=True)
class Filtration:
    thresholds: tuple[float, ...]
    sets: tuple[frozenset[int], ...]  # superlevel cell-sets, one per threshold


def filtration(lyap: LyapunovFunction, cls: list[ChainClass],
               g: ChainGraph) -> Filtration:
    """One threshold per gap between consecutive recurrent-class values;
    X_i is the superlevel cell-set, strictly edge-invariant."""
    rec_vals = sorted(lyap.class_value[c.id] for c in cls if c.recurrent)
    thresholds = [float((a + b) / 2)
                  for a, b in zip(rec_vals[:-1], rec_vals[1:])]
    sets = []
    for th in thresholds:
        cells = frozenset(cell for cell, v in lyap.cell_value.items()
                          if v >= th)
        sets.append(cells)
    return Filtration(tuple(thresholds), tuple(sets))


def quasi_attractors(cls: list[ChainClass], dag: list[set[int]]) -> list[int]:
    """Recurrent classes with no outgoing condensation edge (grid analog
    of possessing strictly forward-invariant neighborhoods)."""
    return [c.id for c in cls if c.recurrent and not dag[c.id]]


def weak_basin(g: ChainGraph, cls: list[ChainClass], dag: list[set[int]],
               class_id: int) -> frozenset[int]:
    """Cells committed to the quasi-attractor: the only recurrent class
    reachable from them is ``class_id``."""
    if class_id >= len(cls) or dag[class_id]:
        raise NotAQuasiAttractor(f"class {class_id} has outgoing edges")
    n = len(cls)
    # recurrent classes reachable from each class, reverse topological sweep
    reach: list[frozenset[int]] = [frozenset()] * n
    for cid in reversed(range(n)):
        acc = {cid} if cls[cid].recurrent else set()
        for succ in dag[cid]:
            acc |= reach[succ]
        reach[cid] = frozenset(acc)
    target = frozenset({class_id})
    cells = set()
    for c in cls:
        if reach[c.id] == target:
            cells |= c.cells
    return frozenset(cells)


# -- grid-level topological tower ------------------------------------------


def center_cell_map(mapspec: MapSpec, grid: Grid) -> np.ndarray:
    """Single-valued cell map: cell of the image of each cell center."""
    centers = grid.centers()
    return grid.flat_cell_of(mapspec.evaluate_batch(centers))


@dataclass(frozen=True)
class TowerResult:
    U: frozenset[int]
    order: int
    iterate_cells: tuple[frozenset[int], ...]  # t = 0 .. order
    return_bound: int
    excluded: frozenset[int]
    metadata: dict


def short_cycle_cells(F: np.ndarray, n0: int) -> np.ndarray:
    """Boolean mask of cells lying on a cycle of length <= n0 of the
    functional graph: F^L(c) == c for some 1 <= L <= n0."""
    n = len(F)
    start = np.arange(n)
    pos = start.copy()
    returned = np.zeros(n, dtype=bool)
    for _ in range(n0):
        pos = F[pos]
        returned |= pos == start
    return returned


def _example_cycle(F: np.ndarray, cell: int, n0: int) -> list[int]:
    cycle = [cell]
    cur = int(F[cell])
    while cur != cell and len(cycle) <= n0:
        cycle.append(cur)
        cur = int(F[cur])
    return cycle


def build_tower(g: ChainGraph, n0: int, return_bound: int) -> TowerResult:
    """Greedy grid tower: a cell set U whose n0+1 iterate sets (under the
    center cell map) are pairwise disjoint, meeting the forward orbit of
    every non-excluded cell within ``return_bound`` steps.

    Cells sitting on grid cycles of length <= n0 make the disjointness
    unachievable through them, so they are flagged and excluded, the grid
    stand-in for the special treatment of low-period orbits and their
    local invariant manifolds.  If exclusion would swallow the whole
    grid, ShortCycle reports an offending cycle.  Seeds are processed in
    cell-index order; a seed already reaching U is skipped, otherwise the
    first shift along its orbit that preserves disjointness is
    incorporated.
    """
    if g.mapspec is None:
        raise ValueError("tower construction needs the graph's map")
    if return_bound < n0:
        raise ValueError("return_bound must be >= n0")
    grid = g.grid
    F = center_cell_map(g.mapspec, grid)
    excluded_mask = short_cycle_cells(F, n0)
    if excluded_mask.all():
        first = int(np.nonzero(excluded_mask)[0][0])
        raise ShortCycle(
            f"every cell lies on a cycle of length <= {n0}",
            cycle=_example_cycle(F, first, n0))
    excluded = frozenset(int(c) for c in np.nonzero(excluded_mask)[0])

    n = grid.ncells
    owner_t: dict[int, int] = {}  # cell -> unique layer t it occupies
    U: list[int] = []
    layers: list[set[int]] = [set() for _ in range(n0 + 1)]

    def orbit(c: int, length: int) -> list[int]:
        out = [c]
        for _ in range(length):
            c = int(F[c])
            out.append(c)
        return out

    def can_add(cell: int) -> list[int] | None:
        if cell in excluded:
            return None
        its = orbit(cell, n0)
        seen = set()
        for t, ct in enumerate(its):
            if ct in seen:  # would collide with its own iterates
                return None
            seen.add(ct)
            if owner_t.get(ct, t) != t:
                return None
        return its

    unreachable = []
    for seed in range(n):
        if seed in excluded:
            continue
        orb = orbit(seed, return_bound)
        if any(owner_t.get(c) == 0 for c in orb):
            continue  # seed's orbit already meets U
        placed = False
        for shifted in orb:
            its = can_add(shifted)
            if its is not None:
                U.append(shifted)
                for t, ct in enumerate(its):
                    owner_t[ct] = t
                    layers[t].add(ct)
                placed = True
                break
        if not placed:
            unreachable.append(seed)
    if unreachable:
        raise Unreachable(
            f"{len(unreachable)} cells cannot be covered within "
            f"{return_bound} steps", cells=unreachable)
    return TowerResult(frozenset(U), n0,
                       tuple(frozenset(s) for s in layers),
                       return_bound, excluded,
                       coloring_constant_metadata(grid.space.dim))


def check_tower(result: TowerResult, g: ChainGraph) -> bool:
    """Re-derive the tower invariants from scratch: pairwise disjoint
    iterate sets and coverage of every non-excluded cell within the
    return bound."""
    layers = result.iterate_cells
    for i in range(len(layers)):
        for j in range(i + 1, len(layers)):
            if layers[i] & layers[j]:
                return False
    F = center_cell_map(g.mapspec, g.grid)
    # layers really are the iterates of U
    cur = set(result.U)
    for t in range(result.order + 1):
        if frozenset(cur) != layers[t]:
            return False
        cur = {int(F[c]) for c in cur}
    in_U = np.zeros(g.grid.ncells, dtype=bool)
    in_U[list(result.U)] = True
    pos = np.arange(g.grid.ncells)
    hit = in_U.copy()
    for _ in range(result.return_bound):
        pos = F[pos]
        hit |= in_U[pos]
    hit[list(result.excluded)] = True
    return bool(hit.all())
