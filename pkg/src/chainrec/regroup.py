"""Jump bookkeeping for pseudo-orbits around tiled perturbation boxes.

Three layers of machinery:

* greedy selection of jump subsequences so that consecutive selected
  segments start and end in one tile each, all tiles distinct;
* rewriting a pseudo-orbit with small jumps into one whose jumps happen
  only at returns into tile cores, with the jump source and the
  preimage of the jump target inside one common tile, genuine orbit
  segments in between;
* the nondecreasing scheduling sequence that walks a block family
  (N+1 points per block) while visiting each proximity class at most
  once per phase, which keeps the downstream perturbation balls
  pairwise disjoint.

Boxes must not straddle the torus seam: margins are measured in plain
chart coordinates.  Maps must be invertible (inverse iterates decide
membership in the box image layers exactly).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .chaingraph import Grid, PseudoOrbitPath, jump_indices
from .errors import EpsilonTooLarge, PartitionMismatch, ReturnsTooSparse
from .systems import MapSpec
from .tiling import StandardTile, TiledCube

__all__ = ["BoxSet", "PairSequence", "NuSequence", "select_subsequence",
           "check_preserves_quadrillage", "regroup_jumps", "nu_schedule",
           "epsilon_bound", "sampled_lipschitz", "schedule_balls"]

GENUINE_TOL = 1e-10  # drift is rounding-only for paths built in-process
CORE_RATIO = Fraction(9, 10)


@dataclass(frozen=True)
class BoxSet:
    """Perturbation boxes of a common order with validated geometry.

    ``tile_level`` caps the tile family carrying return cores (the
    quadrillage is infinite near the box boundary).  Iterate geometry
    f^t(B) is represented conservatively as one-cell-inflated hulls of
    iterated samples; ``validate`` checks the hulls of all (box, t)
    layers are pairwise disjoint.
    """

    boxes: tuple[TiledCube, ...]
    order: int
    tile_level: int = 1

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.order < 1:
            raise ValueError("box order must be >= 1")
        if self.tile_level < 0:
            raise ValueError("tile_level must be >= 0")

    def layer_of(self, mapspec: MapSpec, p: np.ndarray
                 ) -> tuple[int, int] | None:
        """(box index, t) with f^-t(p) in the open box, t in 0..order."""
        cur = np.asarray(p, float)
        for t in range(self.order + 1):
            for b, box in enumerate(self.boxes):
                if box.contains(cur):
                    return b, t
            cur = mapspec.inverse_batch(cur[None, :])[0]
        return None

    def core_site(self, p: np.ndarray) -> tuple[int, StandardTile] | None:
        """(box index, tile) when p sits in a level <= tile_level tile core."""
        for b, box in enumerate(self.boxes):
            if not box.contains(p):
                continue
            tile = box.tile_of(p)
            if tile.kind != "root" and tile.level > self.tile_level:
                return None
            if box.in_tile_core(p, tile, CORE_RATIO):
                return b, tile
            return None
        return None

    def iterate_hulls(self, mapspec: MapSpec, grid: Grid,
                      samples_per_axis: int = 12) -> list[list[set[int]]]:
        """Cell hulls of f^t(B), one-cell inflated, per box and t."""
        d = grid.space.dim
        axes = [np.linspace(-3, 3, samples_per_axis + 2)[1:-1]] * d
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        hulls = []
        offsets = np.stack(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij"),
                           axis=-1).reshape(-1, d)
        res = np.array(grid.resolution)
        for box in self.boxes:
            pts = np.array([[float(Fraction(x) * box.scale + c)
                             for x, c in zip(row, box.center)]
                            for row in mesh])
            layer_sets = []
            cur = grid.space.reduce(pts)
            for _t in range(self.order + 1):
                idx = grid.cell_of(cur)
                inflated = (idx[:, None, :] + offsets[None, :, :])
                if grid.space.kind == "torus":
                    inflated = np.mod(inflated, res)
                else:
                    inflated = np.clip(inflated, 0, res - 1)
                flat = np.ravel_multi_index(
                    tuple(inflated.reshape(-1, d).T), grid.resolution)
                layer_sets.append(set(int(f) for f in flat))
                cur = mapspec.evaluate_batch(cur)
            hulls.append(layer_sets)
        return hulls

    def validate(self, mapspec: MapSpec, grid: Grid,
                 samples_per_axis: int = 12) -> bool:
        """Conservative support disjointness across all (box, t) layers."""
        hulls = self.iterate_hulls(mapspec, grid, samples_per_axis)
        flat = [(b, t, cells) for b, layers in enumerate(hulls)
                for t, cells in enumerate(layers)]
        for i in range(len(flat)):
            for j in range(i + 1, len(flat)):
                if flat[i][0] == flat[j][0] and flat[i][1] == flat[j][1]:
                    continue
                if flat[i][2] & flat[j][2]:
                    return False
        return True


@dataclass(frozen=True)
class PairSequence:
    """Point pairs (x_i, y_i) in one box, each pair sharing a tile."""

    xs: np.ndarray  # (l, d)
    ys: np.ndarray  # (l, d)
    box: TiledCube
    tiles: tuple[StandardTile, ...] = ()

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, float))
        ys = np.atleast_2d(np.asarray(self.ys, float))
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if len(xs) != len(ys) or len(xs) == 0:
            raise ValueError("need equally many xs and ys, at least one pair")
        if not self.tiles:
            tiles = []
            for x, y in zip(xs, ys):
                tx = self.box.tile_of(x)
                ty = self.box.tile_of(y)
                if tx != ty:
                    raise ValueError(
                        f"pair ({x}, {y}) does not share a tile: {tx} vs {ty}")
                tiles.append(tx)
            object.__setattr__(self, "tiles", tuple(tiles))

    def __len__(self) -> int:
        return len(self.xs)


def select_subsequence(pairs: PairSequence) -> list[tuple[int, StandardTile]]:
    """Greedy segment starts: i_0 = 0; k_n the largest index whose pair
    lies in the segment tile C_n; i_(n+1) = k_n + 1.

    Returned tiles are pairwise distinct.  Segment n runs from i_n to
    i_(n+1) - 1; its endpoints a^n = x_(i_n) and b^n = y_(i_(n+1)-1)
    both lie in C_n.
    """
    out: list[tuple[int, StandardTile]] = []
    i = 0
    while i < len(pairs):
        tile = pairs.tiles[i]
        k = max(j for j in range(i, len(pairs)) if pairs.tiles[j] == tile)
        out.append((i, tile))
        i = k + 1
    assert len({(t.kind, t.level, t.j0, t.k) for _, t in out}) == len(out)
    return out


def segment_endpoints(pairs: PairSequence,
                      selection: list[tuple[int, StandardTile]]
                      ) -> list[tuple[np.ndarray, np.ndarray]]:
    """(a^n, b^n) per selected segment."""
    ends = []
    for n, (i_n, _tile) in enumerate(selection):
        last = (selection[n + 1][0] - 1 if n + 1 < len(selection)
                else len(pairs) - 1)
        ends.append((pairs.xs[i_n], pairs.ys[last]))
    return ends


def sampled_lipschitz(mapspec: MapSpec, probes: int = 256,
                      delta: float = 1e-6, safety: float = 1.25) -> float:
    """Finite-difference bound on the expansion of f and its inverse."""
    rng = np.random.default_rng(7)
    d = mapspec.space.dim
    pts = mapspec.space.lows() + rng.random((probes, d)) * mapspec.space.widths()
    best = 1.0
    for fn in (mapspec.evaluate_batch,
               mapspec.inverse_batch if mapspec.invertible else None):
        if fn is None:
            continue
        base = fn(pts)
        for j in range(d):
            shifted = pts.copy()
            shifted[:, j] += delta
            moved = fn(mapspec.space.reduce(shifted))
            ratio = mapspec.space.distance(moved, base) / delta
            best = max(best, float(ratio.max()))
    return best * safety


def epsilon_bound(boxes: BoxSet, mapspec: MapSpec, n1: int,
                  lipschitz: float | None = None) -> float:
    """Largest jump size the regrouping tolerates.

    eta1 = minimal chart distance between a tile core and its tile
    boundary over the core-carrying tile family; a pseudo-orbit with
    jumps below eta1 / sum_{j=1..n1} Lip^j stays within eta1 of the
    matching genuine orbit over n1 steps, forwards and backwards.
    """
    lip = sampled_lipschitz(mapspec) if lipschitz is None else lipschitz
    margin = min(
        box.scale * (1 - CORE_RATIO) / 2 * Fraction(1, 1 << boxes.tile_level)
        for box in boxes.boxes)
    amplification = sum(lip ** j for j in range(1, n1 + 1))
    return float(margin) / amplification


def regroup_jumps(path: PseudoOrbitPath, boxes: BoxSet, mapspec: MapSpec,
                  n1: int, lipschitz: float | None = None) -> PseudoOrbitPath:
    """Rewrite a small-jump pseudo-orbit so jumps happen only at core
    returns, inside one tile each.

    Between consecutive returns the output follows genuine orbits:
    forward from the start point up to the first return, backward from
    each return point across its preceding segment.  Endpoints are kept
    exactly; a segment of the input without jumps is reproduced
    verbatim, so the number of jumps never grows.
    """
    pts = path.points
    k = len(pts) - 1
    if k < 1:
        return path
    for endpoint in (pts[0], pts[-1]):
        if boxes.layer_of(mapspec, endpoint) is not None:
            raise ValueError("path endpoints must lie outside box supports")
    eps1 = epsilon_bound(boxes, mapspec, n1, lipschitz)
    if path.epsilon > eps1:
        raise EpsilonTooLarge(
            f"path epsilon {path.epsilon} exceeds the regroup bound {eps1}")
    returns = [i for i in range(1, k)
               if boxes.core_site(pts[i]) is not None]
    times = [0] + returns + [k]
    gaps = [(b - a) for a, b in zip(times[:-1], times[1:])]
    if max(gaps) > n1:
        worst = int(np.argmax(gaps))
        raise ReturnsTooSparse(
            f"gap {gaps[worst]} between returns {times[worst]} and "
            f"{times[worst + 1]} exceeds n1 = {n1}")
    out = np.array(pts)
    # forward orbit over [0, t_1]
    cur = pts[0]
    for i in range(1, times[1] + 1):
        cur = mapspec.evaluate_batch(cur[None, :])[0]
        out[i] = cur
    # backward orbit over each (t_s, t_{s+1}]
    for s in range(1, len(times) - 1):
        t_next = times[s + 1]
        cur = pts[t_next]
        out[t_next] = cur
        for i in range(t_next - 1, times[s], -1):
            cur = mapspec.inverse_batch(cur[None, :])[0]
            out[i] = cur
    jumps = jump_indices(mapspec, out, GENUINE_TOL)
    assert len(jumps) <= len(jump_indices(mapspec, pts, GENUINE_TOL))
    imgs = mapspec.evaluate_batch(out[:-1])
    dmax = float(mapspec.space.distance(out[1:], imgs).max())
    eps_out = max(path.epsilon, dmax * (1 + 1e-12) + 1e-15)
    return PseudoOrbitPath(out, eps_out, jumps)


def check_preserves_quadrillage(path: PseudoOrbitPath, boxes: BoxSet,
                                mapspec: MapSpec,
                                tol: float = GENUINE_TOL) -> bool:
    """True iff the path's box visits decompose into entry-plus-N-genuine
    -iterates segments started by a same-tile point, and every step
    outside box supports is genuine."""
    pts = path.points
    n = len(pts)
    N = boxes.order
    i = 0
    while i < n - 1:
        layer = boxes.layer_of(mapspec, pts[i])
        if layer is not None and layer[1] == 0:
            if i + N > n - 1:
                return False  # truncated box segment
            b = layer[0]
            box = boxes.boxes[b]
            y = mapspec.inverse_batch(pts[i + 1][None, :])[0]
            if not box.contains(y):
                return False
            if box.tile_of(y) != box.tile_of(pts[i]):
                return False
            cur = pts[i + 1]
            for t in range(2, N + 1):
                cur = mapspec.evaluate_batch(cur[None, :])[0]
                if mapspec.space.distance(pts[i + t], cur) > tol:
                    return False
            i += N
        else:
            img = mapspec.evaluate_batch(pts[i][None, :])[0]
            if mapspec.space.distance(pts[i + 1], img) > tol:
                return False
            i += 1
    return True


# -- scheduling sequence ---------------------------------------------------


@dataclass(frozen=True)
class NuSequence:
    """Nondecreasing block schedule nu(0..s(N+1)+N) with unit increments
    at phase boundaries k(N+1)."""

    s: int
    nu: tuple[int, ...]
    order: int  # N
    m: int

    def __post_init__(self):
        N = self.order
        assert len(self.nu) == self.s * (N + 1) + N + 1
        assert self.nu[0] == 0 and self.nu[-1] == self.m
        assert all(a <= b for a, b in zip(self.nu, self.nu[1:]))
        for k in range(1, self.s + 1):
            assert self.nu[k * (N + 1)] == self.nu[k * (N + 1) - 1] + 1

    def at(self, k: int, t: int) -> int:
        return self.nu[k * (self.order + 1) + t]


def nu_schedule(m: int, N: int, partition) -> NuSequence:
    """Three-case recursion over the flattened block points.

    ``partition`` lists classes of flat indices n*N + t covering all
    (n, t) with n <= m and t <= N-1; a class must not mix phases t.
    Within a phase t < N the schedule jumps to the largest block whose
    phase-t point shares the current point's class; at t = N it
    increments, terminating once it reaches block m.
    """
    total = (m + 1) * N
    class_of: dict[int, int] = {}
    for cid, cls in enumerate(partition):
        for flat in cls:
            if flat in class_of:
                raise PartitionMismatch(f"index {flat} in two classes")
            class_of[int(flat)] = cid
    if sorted(class_of) != list(range(total)):
        raise PartitionMismatch(
            f"partition must cover exactly the {total} flat indices")
    members: dict[int, list[int]] = {}
    for flat, cid in class_of.items():
        members.setdefault(cid, []).append(flat)
    for cid, idxs in members.items():
        if len({f % N for f in idxs}) > 1:
            raise PartitionMismatch(f"class {cid} mixes phases")

    nu = [0]
    while True:
        pos = len(nu) - 1
        k, t = divmod(pos, N + 1)
        if t < N:
            flat = nu[pos] * N + t
            cls = members[class_of[flat]]
            nu.append(max(f // N for f in cls))
        elif nu[pos] < m:
            nu.append(nu[pos] + 1)
        else:
            return NuSequence(k, tuple(nu), N, m)


def schedule_balls(images: np.ndarray, sched: NuSequence,
                   lam: float) -> list[tuple[tuple[int, int], np.ndarray, float]]:
    """Perturbation balls of the schedule: for k <= s and t <= N-1 the
    ball sits at images[nu(k(N+1)+t), t] with radius lam times the
    distance to images[nu(k(N+1)+t+1), t+1].

    ``images`` has shape (m+1, N+1, d) holding the iterated block points.
    """
    N = sched.order
    balls = []
    for k in range(sched.s + 1):
        for t in range(N):
            c = images[sched.at(k, t), t]
            nxt = images[sched.at(k, t + 1), t + 1]
            r = lam * float(np.linalg.norm(np.asarray(nxt) - np.asarray(c)))
            balls.append(((k, t), np.asarray(c, float), r))
    return balls
