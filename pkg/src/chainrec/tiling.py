"""Dyadic tiling of the open cube (-3,3)^d and affinely embedded copies.

The cube is paved by a central root tile [-1,1]^d plus, for every level
i >= 0, a shell of dyadic tiles of side 2^-i filling the sup-norm
annulus between 3 - 2^-(i-1) and 3 - 2^-i.  All coordinates are exact
dyadic rationals held as ``fractions.Fraction`` (binary floats convert
losslessly), so containment, disjointness and adjacency are decided
exactly, never through a tolerance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import PointOutsideCube

__all__ = [
    "StandardTile",
    "TiledCube",
    "enumerate_tiles",
    "locate",
    "adjacent",
    "embed",
    "tile_record",
    "tile_from_record",
    "box_record",
    "dyadic_str",
    "dyadic_from_str",
]


def _ext(level: int) -> int:
    """Integer-scaled shell bound 2^i * alpha_i = 3*2^i - 1 (exact)."""
    return 3 * (1 << level) - 1


def alpha(level: int) -> Fraction:
    """Shell outer radius alpha_i = 3 - 2^-i; alpha(-1) = 1 by convention."""
    if level < 0:
        return Fraction(1)
    return Fraction(3 * (1 << level) - 1, 1 << level)


@dataclass(frozen=True, order=True)
class StandardTile:
    """One tile of the standard paving of (-3,3)^d.

    ``kind`` is "root" or "shell".  Shell tiles carry the refinement
    level i, the canonical boundary axis ``j0`` (smallest axis whose
    index is extreme) and the integer index vector ``k``; the closure is
    the product of [k_j / 2^i, (k_j+1) / 2^i].  Field order makes the
    dataclass ordering the documented (kind, level, j0, k) tie-break.
    """

    kind: str
    level: int = 0
    j0: int = 0
    k: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == "root":
            if self.level or self.j0 or self.k:
                raise ValueError("root tile carries no shell fields")
            return
        if self.kind != "shell":
            raise ValueError(f"unknown tile kind {self.kind!r}")
        if self.level < 0 or not self.k:
            raise ValueError("shell tile needs level >= 0 and an index vector")
        ext = _ext(self.level)
        extremes = [j for j, kj in enumerate(self.k)
                    if kj in (-ext, ext - 1)]
        if not extremes or any(not (-ext <= kj <= ext - 1) for kj in self.k):
            raise ValueError(f"index vector {self.k} invalid at level {self.level}")
        if self.j0 != extremes[0]:
            raise ValueError(f"j0 must be the smallest extreme axis {extremes[0]}")

    @property
    def dim(self) -> int:
        return len(self.k) if self.kind == "shell" else 0

    def side(self) -> Fraction:
        return Fraction(2) if self.kind == "root" else Fraction(1, 1 << self.level)

    def bounds(self, dim: int | None = None) -> list[tuple[Fraction, Fraction]]:
        """Closed per-axis intervals of the tile closure."""
        if self.kind == "root":
            if dim is None:
                raise ValueError("root tile bounds need an explicit dimension")
            one = Fraction(1)
            return [(-one, one)] * dim
        den = 1 << self.level
        return [(Fraction(kj, den), Fraction(kj + 1, den)) for kj in self.k]

    def contains(self, q: Sequence[Fraction], dim: int | None = None) -> bool:
        bs = self.bounds(dim if dim is not None else len(q))
        return all(lo <= x <= hi for x, (lo, hi) in zip(q, bs))


def _shell_tile(level: int, k: tuple[int, ...]) -> StandardTile:
    ext = _ext(level)
    j0 = next(j for j, kj in enumerate(k) if kj in (-ext, ext - 1))
    return StandardTile("shell", level, j0, k)


def enumerate_tiles(max_level: int, dim: int) -> list[StandardTile]:
    """Root tile plus every shell tile of level <= max_level, no duplicates.

    Shell tiles are produced by direct boundary enumeration: the tile is
    keyed to its smallest extreme axis, axes before it stay strictly
    interior, axes after it are unrestricted.
    """
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    tiles = [StandardTile("root")]
    for level in range(max_level + 1):
        ext = _ext(level)
        full = range(-ext, ext)           # -ext .. ext-1
        inner = range(-ext + 1, ext - 1)  # strictly non-extreme
        for j0 in range(dim):
            axis_ranges = ([inner] * j0
                           + [(-ext, ext - 1)]
                           + [full] * (dim - j0 - 1))
            for combo in itertools.product(*axis_ranges):
                tiles.append(StandardTile("shell", level, j0, combo))
    return tiles


def _exact(p: Sequence[float | Fraction]) -> list[Fraction]:
    return [x if isinstance(x, Fraction) else Fraction(x) for x in p]


def _axis_candidates(x: Fraction, level: int) -> list[int]:
    """Indices k with x in [k/2^i, (k+1)/2^i], clipped to the shell range."""
    ext = _ext(level)
    scaled = x * (1 << level)
    fl = scaled.numerator // scaled.denominator
    cands = [fl]
    if scaled.denominator == 1:  # on a grid line: the left tile also contains x
        cands.append(fl - 1)
    return sorted(c for c in cands if -ext <= c <= ext - 1)


def locate(p: Sequence[float | Fraction], dim: int | None = None) -> StandardTile:
    """Tile whose closure contains p, lexicographic (kind, level, j0, k) on ties.

    Raises PointOutsideCube when some |p_j| >= 3.
    """
    q = _exact(p)
    d = dim if dim is not None else len(q)
    if any(abs(x) >= 3 for x in q):
        raise PointOutsideCube(f"point {p} outside (-3,3)^{d}")
    m = max(abs(x) for x in q)
    candidates: list[StandardTile] = []
    if m <= 1:
        candidates.append(StandardTile("root"))
    # smallest level i with m <= alpha_i, then every level whose closed
    # annulus [alpha_{i-1}, alpha_i] contains m (at most two).
    i_lo = 0
    while m > alpha(i_lo):
        i_lo += 1
    for level in (i_lo, i_lo + 1):
        if not alpha(level - 1) <= m <= alpha(level):
            continue
        per_axis = [_axis_candidates(x, level) for x in q]
        if any(not c for c in per_axis):
            continue
        ext = _ext(level)
        for combo in itertools.product(*per_axis):
            if any(kj in (-ext, ext - 1) for kj in combo):
                candidates.append(_shell_tile(level, combo))
    best = min(candidates)
    assert best.contains(q, d)
    return best


def adjacent(t1: StandardTile, t2: StandardTile, dim: int | None = None) -> bool:
    """True iff the tile closures intersect (exact interval test)."""
    d = dim
    if d is None:
        d = t1.dim or t2.dim
        if d == 0:
            raise ValueError("adjacency of two root tiles needs a dimension")
    b1, b2 = t1.bounds(d), t2.bounds(d)
    return all(max(lo1, lo2) <= min(hi1, hi2)
               for (lo1, hi1), (lo2, hi2) in zip(b1, b2))


@dataclass(frozen=True)
class TiledCube:
    """Affine image of the tiled cube: x -> scale * x + center, in one chart."""

    center: tuple[Fraction, ...]
    scale: Fraction
    chart: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_exact(self.center)))
        object.__setattr__(self, "scale",
                           self.scale if isinstance(self.scale, Fraction)
                           else Fraction(self.scale))
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def to_cube(self, p: Sequence[float | Fraction]) -> list[Fraction]:
        """Pull a chart point back to standard-cube coordinates (exact)."""
        return [(x - c) / self.scale for x, c in zip(_exact(p), self.center)]

    def from_cube(self, q: Sequence[Fraction]) -> list[Fraction]:
        return [self.scale * x + c for x, c in zip(q, self.center)]

    def contains(self, p: Sequence[float | Fraction]) -> bool:
        """Point lies in the open embedded cube scale*(-3,3)^d + center."""
        return all(abs(x) < 3 for x in self.to_cube(p))

    def tile_of(self, p: Sequence[float | Fraction]) -> StandardTile:
        return locate(self.to_cube(p), self.dim)

    def in_tile_core(self, p: Sequence[float | Fraction], tile: StandardTile,
                     ratio: Fraction = Fraction(9, 10)) -> bool:
        """Point lies in the tile shrunk about its midpoint by ``ratio``."""
        q = self.to_cube(p)
        for x, (lo, hi) in zip(q, tile.bounds(self.dim)):
            mid = (lo + hi) / 2
            if abs(x - mid) > ratio * (hi - lo) / 2:
                return False
        return True


def embed(cube: TiledCube, tile: StandardTile) -> list[tuple[Fraction, Fraction]]:
    """Closed axis-aligned box scale*closure(tile) + center in chart coordinates."""
    return [(cube.scale * lo + c, cube.scale * hi + c)
            for (lo, hi), c in zip(tile.bounds(cube.dim), cube.center)]


# -- serialization -------------------------------------------------------

def dyadic_str(x: Fraction) -> str:
    """Render an exact dyadic rational as "num/2^e"."""
    den = x.denominator
    e = den.bit_length() - 1
    if den != 1 << e:
        raise ValueError(f"{x} is not dyadic")
    return f"{x.numerator}/2^{e}"


def dyadic_from_str(s: str) -> Fraction:
    num, _, rest = s.partition("/2^")
    return Fraction(int(num), 1 << int(rest))


def tile_record(tile: StandardTile) -> dict:
    if tile.kind == "root":
        return {"kind": "root"}
    return {"kind": "shell", "level": tile.level, "j0": tile.j0,
            "k": list(tile.k)}


def tile_from_record(rec: dict) -> StandardTile:
    if rec["kind"] == "root":
        return StandardTile("root")
    return StandardTile("shell", rec["level"], rec["j0"], tuple(rec["k"]))


def box_record(box: Iterable[tuple[Fraction, Fraction]]) -> dict:
    los, his = zip(*box)
    return {"lo": [dyadic_str(x) for x in los],
            "hi": [dyadic_str(x) for x in his]}
