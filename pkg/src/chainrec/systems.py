"""Phase spaces, the built-in map catalog, and orbit iteration.

A ``PhaseSpace`` is either the d-torus (coordinates mod 1, quotient
metric) or an axis-aligned box with the Euclidean (default L2, optional
sup) metric.  ``MapSpec`` instances are immutable and evaluate both
pointwise and on numpy batches; built-ins with exact or Newton-solvable
inverses expose them through ``inverse_evaluate``.

Map-description documents are JSON-shaped::

    {"kind": "standard", "K": 0.9,
     "space": {"kind": "torus", "dim": 2}}

Unknown kinds and missing parameters are rejected at load time.  User
polynomial maps are not checked for injectivity; supplying a wrong
inverse spec is the caller's responsibility.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (ConfigParse, EvaluationDomain, MissingParameter,
                     UnknownMapKind)

__all__ = ["PhaseSpace", "MapSpec", "Orbit", "evaluate", "iterate",
           "load_map", "distance", "builtin_kinds"]

builtin_kinds = ("cat", "standard", "rotation", "north_south", "gradient",
                 "affine", "user")


@dataclass(frozen=True)
class PhaseSpace:
    kind: str  # "torus" | "box"
    dim: int
    bounds: tuple[tuple[float, float], ...] = ()
    metric: str = "l2"  # "l2" | "sup"

    def __post_init__(self):
        if self.kind not in ("torus", "box"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind == "box":
            bs = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(bs) != self.dim or any(lo >= hi for lo, hi in bs):
                raise ValueError("box needs per-axis bounds lo < hi")
            object.__setattr__(self, "bounds", bs)
        if self.metric not in ("l2", "sup"):
            raise ValueError("metric must be 'l2' or 'sup'")

    def reduce(self, p: np.ndarray) -> np.ndarray:
        """Canonical representative: mod 1 per axis on the torus."""
        p = np.asarray(p, dtype=float)
        if self.kind == "torus":
            return np.mod(p, 1.0)
        return p

    def axis_delta(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = np.abs(np.asarray(a, float) - np.asarray(b, float))
        if self.kind == "torus":
            d = np.mod(d, 1.0)
            d = np.minimum(d, 1.0 - d)
        return d

    def distance(self, a, b) -> float | np.ndarray:
        d = self.axis_delta(a, b)
        if self.metric == "sup":
            return d.max(axis=-1)
        return np.sqrt((d * d).sum(axis=-1))

    def contains(self, p: Sequence[float]) -> bool:
        if self.kind == "torus":
            return True
        return all(lo <= x <= hi for x, (lo, hi) in zip(p, self.bounds))

    def widths(self) -> np.ndarray:
        if self.kind == "torus":
            return np.ones(self.dim)
        return np.array([hi - lo for lo, hi in self.bounds])

    def lows(self) -> np.ndarray:
        if self.kind == "torus":
            return np.zeros(self.dim)
        return np.array([lo for lo, _ in self.bounds])


def distance(space: PhaseSpace, a, b):
    return space.distance(a, b)


def _poly_eval(terms: list[dict], p: np.ndarray) -> np.ndarray:
    """Evaluate one polynomial / trig-polynomial component on a batch.

    Each term is {"coef": c, "powers": [e_j], "sin": [s_j], "cos": [c_j]}
    meaning  c * prod x_j^e_j * prod_{s_j!=0} sin(2 pi s_j x_j)
               * prod_{c_j!=0} cos(2 pi c_j x_j).
    """
    out = np.zeros(p.shape[:-1])
    d = p.shape[-1]
    for term in terms:
        val = np.full(p.shape[:-1], float(term.get("coef", 1.0)))
        for j, e in enumerate(term.get("powers", [0] * d)):
            if e:
                val = val * p[..., j] ** e
        for j, s in enumerate(term.get("sin", [0] * d)):
            if s:
                val = val * np.sin(2 * np.pi * s * p[..., j])
        for j, c in enumerate(term.get("cos", [0] * d)):
            if c:
                val = val * np.cos(2 * np.pi * c * p[..., j])
        out = out + val
    return out


def _poly_grad_terms(terms: list[dict], dim: int) -> list[list[dict]]:
    """Partial derivatives of a pure polynomial (no trig factors)."""
    grads: list[list[dict]] = [[] for _ in range(dim)]
    for term in terms:
        powers = list(term.get("powers", [0] * dim))
        if term.get("sin") or term.get("cos"):
            raise ValueError("gradient potentials must be pure polynomials")
        for j in range(dim):
            if powers[j]:
                dp = list(powers)
                dp[j] -= 1
                grads[j].append({"coef": float(term.get("coef", 1.0)) * powers[j],
                                 "powers": dp})
    return grads


@dataclass(frozen=True)
class MapSpec:
    """Immutable description of a concrete self-map of a phase space."""

    name: str
    kind: str
    space: PhaseSpace
    params: dict = field(default_factory=dict)
    invertible: bool = False

    def __post_init__(self):
        if self.kind not in builtin_kinds:
            raise UnknownMapKind(f"unknown map kind {self.kind!r}")

    # -- forward evaluation (batch-first; points are rows) ---------------

    def _raw(self, p: np.ndarray) -> np.ndarray:
        q = np.empty_like(p)
        k = self.kind
        pr = self.params
        if k == "cat":
            q[..., 0] = 2 * p[..., 0] + p[..., 1]
            q[..., 1] = p[..., 0] + p[..., 1]
        elif k == "standard":
            kk = pr["K"] / (2 * np.pi)
            ynew = p[..., 1] + kk * np.sin(2 * np.pi * p[..., 0])
            q[..., 0] = p[..., 0] + ynew
            q[..., 1] = ynew
        elif k == "rotation":
            q = p + np.asarray(pr["angles"], float)
        elif k == "north_south":
            q[..., 0] = p[..., 0] - pr["a"] * np.sin(2 * np.pi * p[..., 0])
        elif k == "gradient":
            step = pr["step"]
            for j, gterms in enumerate(pr["_grad"]):
                q[..., j] = p[..., j] - step * _poly_eval(gterms, p)
        elif k == "affine":
            mat = np.asarray(pr["matrix"], float)
            off = np.asarray(pr.get("offset", np.zeros(self.space.dim)), float)
            q = p @ mat.T + off
        else:  # user
            for j, comp in enumerate(pr["components"]):
                q[..., j] = _poly_eval(comp, p)
        return q

    def evaluate_batch(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = self.space.reduce(self._raw(pts))
        if self.space.kind == "box" and self.kind in ("user", "gradient"):
            lo = self.space.lows()
            hi = lo + self.space.widths()
            if np.any(out < lo - 1e-12) or np.any(out > hi + 1e-12):
                raise EvaluationDomain(
                    f"map {self.name!r} left the box phase space")
        return out

    # -- inverses ---------------------------------------------------------

    def inverse_batch(self, pts: np.ndarray) -> np.ndarray:
        if not self.invertible:
            raise EvaluationDomain(f"map {self.name!r} has no inverse")
        pts = np.asarray(pts, dtype=float)
        k = self.kind
        pr = self.params
        q = np.empty_like(pts)
        if k == "cat":
            q[..., 0] = pts[..., 0] - pts[..., 1]
            q[..., 1] = -pts[..., 0] + 2 * pts[..., 1]
        elif k == "standard":
            x = np.mod(pts[..., 0] - pts[..., 1], 1.0)
            q[..., 0] = x
            q[..., 1] = pts[..., 1] - pr["K"] / (2 * np.pi) * np.sin(2 * np.pi * x)
        elif k == "rotation":
            q = pts - np.asarray(pr["angles"], float)
        elif k == "north_south":
            q[..., 0] = _north_south_inverse(pts[..., 0], pr["a"])
        elif k == "affine":
            inv = np.linalg.inv(np.asarray(pr["matrix"], float))
            off = np.asarray(pr.get("offset", np.zeros(self.space.dim)), float)
            q = (pts - off) @ inv.T
        elif k == "user" and "_inverse" in pr:
            return pr["_inverse"].evaluate_batch(pts)
        else:
            raise EvaluationDomain(f"map {self.name!r} has no inverse")
        return self.space.reduce(q)


def _north_south_inverse(y: np.ndarray, a: float) -> np.ndarray:
    """Invert theta - a sin(2 pi theta) on the circle by bisection + Newton.

    The lift g(t) = t - a sin(2 pi t) is strictly increasing for
    a < 1/(2 pi), commutes with integer translation, so the preimage of
    y in [y - a, y + a] is unique.
    """
    y = np.atleast_1d(np.asarray(y, float))
    lo, hi = y - a, y + a
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        g = mid - a * np.sin(2 * np.pi * mid)
        high = g > y
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return np.mod(0.5 * (lo + hi), 1.0)


@dataclass(frozen=True)
class Orbit:
    points: np.ndarray  # shape (n+1, d)
    map: MapSpec


def evaluate(mapspec: MapSpec, p: Sequence[float]) -> np.ndarray:
    """f(p), reduced mod 1 on torus axes."""
    p = np.asarray(p, dtype=float)
    if not mapspec.space.contains(p):
        raise EvaluationDomain(f"point {p} outside phase space")
    return mapspec.evaluate_batch(p[None, :])[0]


def iterate(mapspec: MapSpec, p: Sequence[float], n: int) -> Orbit:
    """Orbit p, f(p), ..., f^n(p) (length n+1)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    pts = np.empty((n + 1, mapspec.space.dim))
    pts[0] = mapspec.space.reduce(np.asarray(p, float))
    for t in range(n):
        pts[t + 1] = mapspec.evaluate_batch(pts[t][None, :])[0]
    return Orbit(pts, mapspec)


# -- configuration loading ------------------------------------------------

_REQUIRED = {
    "standard": ("K",),
    "rotation": ("angles",),
    "north_south": ("a",),
    "gradient": ("potential", "step"),
    "affine": ("matrix",),
    "user": ("components",),
}


def _space_from_doc(doc: dict, default_dim: int) -> PhaseSpace:
    sp = doc.get("space")
    if sp is None:
        return PhaseSpace("torus", default_dim)
    bounds = tuple(tuple(b) for b in sp.get("bounds", ()))
    return PhaseSpace(sp.get("kind", "torus"), int(sp.get("dim", default_dim)),
                      bounds, sp.get("metric", "l2"))


def load_map(config: str | dict) -> MapSpec:
    """Build a MapSpec from a JSON document (dict, JSON text, or file path)."""
    if isinstance(config, str):
        text = config
        if not config.lstrip().startswith("{"):
            try:
                with open(config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigParse(f"cannot read map file {config!r}: {exc}")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParse(f"invalid map document: {exc}")
    else:
        doc = dict(config)
    kind = doc.get("kind")
    if kind is None:
        raise MissingParameter("map document needs a 'kind'")
    if kind not in builtin_kinds:
        raise UnknownMapKind(f"unknown map kind {kind!r}")
    for param in _REQUIRED.get(kind, ()):
        if param not in doc:
            raise MissingParameter(f"map kind {kind!r} needs parameter {param!r}")

    params: dict = {}
    invertible = False
    if kind == "cat":
        space = _space_from_doc(doc, 2)
        invertible = True
    elif kind == "standard":
        space = _space_from_doc(doc, 2)
        params["K"] = float(doc["K"])
        invertible = True
    elif kind == "rotation":
        angles = [float(a) for a in (doc["angles"] if isinstance(doc["angles"], list)
                                     else [doc["angles"]])]
        space = _space_from_doc(doc, len(angles))
        if len(angles) != space.dim:
            raise MissingParameter("rotation needs one angle per axis")
        params["angles"] = tuple(angles)
        invertible = True
    elif kind == "north_south":
        space = _space_from_doc(doc, 1)
        a = float(doc["a"])
        if not 0 < a < 1 / (2 * math.pi):
            raise MissingParameter(
                "north_south needs 0 < a < 1/(2 pi) for a diffeomorphism")
        params["a"] = a
        invertible = True
    elif kind == "gradient":
        space = _space_from_doc(doc, int(doc.get("dim", 1)))
        terms = list(doc["potential"])
        params["potential"] = terms
        params["step"] = float(doc["step"])
        params["_grad"] = _poly_grad_terms(terms, space.dim)
        # explicit-Euler stability: step below inverse curvature scale,
        # sampled over the box
        if params["step"] <= 0:
            raise MissingParameter("gradient step must be positive")
    elif kind == "affine":
        mat = doc["matrix"]
        space = _space_from_doc(doc, len(mat))
        params["matrix"] = tuple(tuple(float(v) for v in row) for row in mat)
        params["offset"] = tuple(float(v) for v in doc.get("offset",
                                                           [0.0] * space.dim))
        invertible = abs(np.linalg.det(np.asarray(mat, float))) > 1e-12
    else:  # user
        comps = doc["components"]
        space = _space_from_doc(doc, len(comps))
        if len(comps) != space.dim:
            raise MissingParameter("user map needs one component per axis")
        params["components"] = comps
        if "inverse" in doc:
            params["_inverse"] = load_map(doc["inverse"])
            invertible = True
    name = doc.get("name", kind)
    return MapSpec(name, kind, space, params, invertible)
