"""Proximal-point grouping: merge points with radii into classes whose
enlarged ball unions are pairwise disjoint.

Starting from singletons, level k+1 merges the classes whose level-k
ball unions intersect (transitively).  Under the overlap hypothesis
(every K-ball meets at most N* of the K-balls, counting itself) and the
constant inequality (6 lambda N*)^(N*+1) < K, the partition stabilizes
by step N*+1 and the stabilized ball unions B_j are pairwise disjoint,
each trapped inside the K-ball of its widest member.

All distance comparisons are strict with no tolerance; exact equality at
a ball boundary counts as non-intersecting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesesViolated, NoFixpoint

__all__ = ["ClusterInstance", "ClusterResult", "check_hypotheses",
           "cluster", "verify"]


@dataclass(frozen=True)
class ClusterInstance:
    points: np.ndarray          # (n, d)
    radii: np.ndarray           # (n,)
    lam: float                  # enlargement factor > 1
    nstar: int                  # overlap bound N* >= 1
    K: float
    space: str = "euclidean"    # "euclidean" | "torus"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, float))
        if pts.size == 0:
            pts = pts.reshape(0, 1)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radii",
                           np.asarray(self.radii, float).reshape(-1))
        if len(self.radii) != len(self.points):
            raise ValueError("need one radius per point")
        if np.any(self.radii <= 0):
            raise ValueError("radii must be positive")
        if self.lam <= 1:
            raise ValueError("lambda must exceed 1")
        if self.nstar < 1:
            raise ValueError("nstar must be >= 1")
        if self.space not in ("euclidean", "torus"):
            raise ValueError("space must be 'euclidean' or 'torus'")

    @property
    def n(self) -> int:
        return len(self.points)

    def pairwise(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros((0, 0))
        diff = np.abs(self.points[:, None, :] - self.points[None, :, :])
        if self.space == "torus":
            diff = np.mod(diff, 1.0)
            diff = np.minimum(diff, 1.0 - diff)
        return np.sqrt((diff * diff).sum(axis=-1))

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        diff = np.abs(np.asarray(a, float) - np.asarray(b, float))
        if self.space == "torus":
            diff = np.mod(diff, 1.0)
            diff = np.minimum(diff, 1.0 - diff)
        return float(np.sqrt((diff * diff).sum()))


def check_hypotheses(inst: ClusterInstance) -> dict:
    """Brute-force overlap count and the constant inequality.

    ``max_overlap`` counts, for the worst i, how many K-balls meet
    B(x_i, K r_i) including itself.  On the torus the K-balls must also
    stay well inside the injectivity radius (K max r < 1/4).
    """
    constant_ok = (6 * inst.lam * inst.nstar) ** (inst.nstar + 1) < inst.K
    if inst.n == 0:
        return {"ok": constant_ok, "max_overlap": 0,
                "constant_ok": constant_ok}
    dist = inst.pairwise()
    reach = inst.K * (inst.radii[:, None] + inst.radii[None, :])
    overlap_counts = (dist < reach).sum(axis=1)
    max_overlap = int(overlap_counts.max())
    ok = constant_ok and max_overlap <= inst.nstar
    if inst.space == "torus":
        ok = ok and inst.K * float(inst.radii.max()) < 0.25
    return {"ok": bool(ok), "max_overlap": max_overlap,
            "constant_ok": bool(constant_ok)}


def _class_stats(inst: ClusterInstance, members: tuple[int, ...],
                 dist: np.ndarray) -> tuple[float, float, float, int]:
    """(delta1, delta2, delta, anchor) of one class."""
    idx = np.array(members)
    delta1 = float(dist[np.ix_(idx, idx)].max()) if len(idx) > 1 else 0.0
    radii = inst.radii[idx]
    delta2 = float(radii.max())
    anchor = int(idx[int(np.argmax(radii))])  # argmax takes the first max
    return delta1, delta2, delta1 + delta2, anchor


@dataclass(frozen=True)
class ClusterResult:
    classes: tuple[tuple[int, ...], ...]
    delta1: tuple[float, ...]
    delta2: tuple[float, ...]
    delta: tuple[float, ...]
    anchors: tuple[int, ...]
    levels: tuple[tuple[dict, ...], ...] = field(default=(), repr=False)

    @property
    def nclasses(self) -> int:
        return len(self.classes)


def _partition_level(inst: ClusterInstance, parts: list[tuple[int, ...]],
                     dist: np.ndarray) -> tuple[list[tuple[int, ...]], list[dict]]:
    """One coarsening step: merge classes whose ball unions intersect."""
    stats = [_class_stats(inst, p, dist) for p in parts]
    m = len(parts)
    # union-of-balls intersection: some generating pair closer than the
    # summed enlarged radii (strict)
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(m):
        for j in range(i + 1, m):
            di = inst.lam * stats[i][2]
            dj = inst.lam * stats[j][2]
            dmin = dist[np.ix_(parts[i], parts[j])].min()
            if dmin < di + dj:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict[int, list[int]] = {}
    for i in range(m):
        groups.setdefault(find(i), []).append(i)
    merged = [tuple(sorted(sum((list(parts[i]) for i in g), [])))
              for g in groups.values()]
    merged.sort()
    level_info = [{"members": p, "delta1": s[0], "delta2": s[1],
                   "delta": s[2], "anchor": s[3]}
                  for p, s in zip(parts, stats)]
    return merged, level_info


def cluster(inst: ClusterInstance) -> ClusterResult:
    """Iterate the adjacency coarsening to its fixed point (at most
    N*+1 steps on hypothesis-satisfying input)."""
    report = check_hypotheses(inst)
    if not report["ok"]:
        raise HypothesesViolated(f"hypotheses fail: {report}")
    dist = inst.pairwise()
    parts: list[tuple[int, ...]] = [(i,) for i in range(inst.n)]
    levels: list[tuple[dict, ...]] = []
    for _step in range(inst.nstar + 2):
        merged, info = _partition_level(inst, parts, dist)
        levels.append(tuple(info))
        if merged == parts:
            stats = [_class_stats(inst, p, dist) for p in parts]
            return ClusterResult(
                tuple(parts),
                tuple(s[0] for s in stats),
                tuple(s[1] for s in stats),
                tuple(s[2] for s in stats),
                tuple(s[3] for s in stats),
                tuple(levels),
            )
        parts = merged
    raise NoFixpoint(
        f"partition did not stabilize within N*+1 = {inst.nstar + 1} steps")


def verify(res: ClusterResult, inst: ClusterInstance) -> bool:
    """Recompute every invariant from scratch.

    Checks: classes partition the index set; stored deltas and anchors
    match recomputation; ball unions pairwise disjoint; each union inside
    the K-ball of its anchor; class cardinality at most N*.
    """
    flat = sorted(i for p in res.classes for i in p)
    if flat != list(range(inst.n)):
        return False
    if inst.n == 0:
        return True
    dist = inst.pairwise()
    for j, members in enumerate(res.classes):
        d1, d2, d, anchor = _class_stats(inst, members, dist)
        if (d1, d2, d, anchor) != (res.delta1[j], res.delta2[j],
                                   res.delta[j], res.anchors[j]):
            return False
        if len(members) > inst.nstar:
            return False
        rad = inst.K * inst.radii[anchor]
        for i in members:
            if dist[i, anchor] + inst.lam * d > rad:
                return False
    for a in range(len(res.classes)):
        for b in range(a + 1, len(res.classes)):
            dmin = dist[np.ix_(res.classes[a], res.classes[b])].min()
            if dmin < inst.lam * res.delta[a] + inst.lam * res.delta[b]:
                return False
    return True
