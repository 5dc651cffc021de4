"""Rotation perturbations of SL(2,R) matrix sequences.

Given a finite sequence A_0..A_n and an angle budget epsilon, small
rotations R(alpha_i) are composed onto each factor so that the product
B_n...B_0 with B_i = R(alpha_i) A_i acquires real eigenvalues; an extra
nudge then pushes it to strict hyperbolicity.

The dichotomy behind ``realize_real_eigenvalues``: either some
contiguous product (starting at index >= 1) is strongly expanding, in
which case two synchronized angles create an invariant direction by a
half-circle sweep of a one-parameter family; or every such product
displaces epsilon-separated directions by at least a computable eta > 0,
and the cumulative one-sided sweep of the full family over all factors
exceeds a half turn of the projective line, again forcing an invariant
direction.  The minimum sequence length is ceil(pi / eta) + 1 with eta
measured in radians.

Everything acts on directions in radians; eigendirection logic is mod
pi, interfaces report angles in [0, 2*pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNudge, NumericalFailure, SequenceTooShort

__all__ = ["SL2Matrix", "AngleSolution", "kak_decompose", "eta_bound",
           "sigma_threshold", "min_length", "realize_real_eigenvalues",
           "hyperbolize", "projective_action", "sigma_of"]

UNIMODULAR_TOL = 1e-12
TRACE_TOL = 1e-9          # |trace| >= 2 - TRACE_TOL certifies real eigenvalues
HYPERBOLIC_MARGIN = 1e-6


@dataclass(frozen=True)
class SL2Matrix:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if det <= 0:
            raise ValueError("matrix must have positive determinant")
        if abs(det - 1.0) > UNIMODULAR_TOL:
            s = math.sqrt(det)
            object.__setattr__(self, "a", self.a / s)
            object.__setattr__(self, "b", self.b / s)
            object.__setattr__(self, "c", self.c / s)
            object.__setattr__(self, "d", self.d / s)

    @classmethod
    def from_array(cls, m) -> "SL2Matrix":
        m = np.asarray(m, float)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    def array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def trace(self) -> float:
        return self.a + self.d


def rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def sigma_of(m: np.ndarray) -> float:
    """Largest singular value of a unimodular 2x2 matrix (closed form)."""
    f = float((m * m).sum())  # sigma^2 + sigma^-2
    f = max(f, 2.0)
    return math.sqrt((f + math.sqrt(f * f - 4.0)) / 2.0)


def projective_action(A: SL2Matrix | np.ndarray, phi: float) -> float:
    """Direction of A (cos phi, sin phi) as an angle in [0, 2*pi)."""
    m = A.array() if isinstance(A, SL2Matrix) else np.asarray(A, float)
    v = m @ np.array([math.cos(phi), math.sin(phi)])
    return math.atan2(v[1], v[0]) % (2 * math.pi)


def kak_decompose(A: SL2Matrix) -> tuple[float, float, float]:
    """(o1, sigma, o2) with A = R(o1) diag(sigma, 1/sigma) R(o2), sigma >= 1.

    Rotation angles are canonical only mod pi (simultaneous sign flips of
    the orthogonal factors leave the middle diagonal unchanged).
    """
    m = A.array()
    u, s, vt = np.linalg.svd(m)
    if np.linalg.det(u) < 0:
        u = u @ np.diag([1.0, -1.0])
        vt = np.diag([1.0, -1.0]) @ vt
    o1 = math.atan2(u[1, 0], u[0, 0])
    o2 = math.atan2(vt[1, 0], vt[0, 0])
    sigma = float(s[0] / math.sqrt(s[0] * s[1]))  # renormalize det to 1
    return o1, sigma, o2


def _diag_action(sigma: float, phi: np.ndarray) -> np.ndarray:
    return np.arctan2(np.sin(phi) / sigma, sigma * np.cos(phi))


def sigma_threshold(epsilon: float) -> float:
    """Smallest sigma_0 such that every diag(sigma, 1/sigma) with
    sigma > sigma_0 admits the symmetric alignment angle
    theta = arctan(1/sigma) inside (0, epsilon)."""
    if not 0 < epsilon < math.pi / 4:
        raise ValueError("epsilon must lie in (0, pi/4)")
    return 1.0 / math.tan(epsilon)


def eta_bound(epsilon: float, sigma_max: float, phi_samples: int = 2048,
              sigma_samples: int = 64) -> float:
    """Minimal projective displacement d(D(phi+epsilon), D(phi)) over
    diagonal matrices with sigma in [1, sigma_max] (dense grid, radians).

    Rotations act as isometries of the direction circle, so this bounds
    the displacement of every SL(2,R) matrix with top singular value at
    most sigma_max.  For sigma_max = 1 the bound is exactly epsilon.
    """
    if not 0 < epsilon < math.pi / 4:
        raise ValueError("epsilon must lie in (0, pi/4)")
    if sigma_max < 1:
        raise ValueError("sigma_max must be >= 1")
    sigmas = np.linspace(1.0, sigma_max, sigma_samples)
    phis = np.linspace(0.0, math.pi, phi_samples, endpoint=False)
    best = math.inf
    for sg in sigmas:
        a = _diag_action(sg, phis)
        b = _diag_action(sg, phis + epsilon)
        disp = np.abs(b - a) % (2 * math.pi)
        disp = np.minimum(disp, 2 * math.pi - disp)
        best = min(best, float(disp.min()))
    return best


def min_length(epsilon: float) -> int:
    """Sequence length guaranteeing success of the realization at angle
    budget epsilon: the cumulative sweep (length * eta) must exceed a
    half turn (pi radians) of the direction circle."""
    eta = eta_bound(epsilon, sigma_threshold(epsilon))
    return int(math.ceil(math.pi / eta)) + 1


@dataclass(frozen=True)
class AngleSolution:
    angles: tuple[float, ...]
    product: SL2Matrix
    trace: float
    mode: str  # "unperturbed" | "case1" | "case2"


def _product(mats: list[np.ndarray]) -> np.ndarray:
    out = np.eye(2)
    for m in mats:
        out = m @ out
    return out


def _normalized_prefixes(mats: list[np.ndarray]
                         ) -> tuple[list[np.ndarray], list[float]]:
    """P_j = A_j ... A_0 stored as unit-Frobenius matrices plus log scales."""
    prefixes, logs = [], []
    cur = np.eye(2)
    log = 0.0
    for m in mats:
        cur = m @ cur
        norm = float(np.linalg.norm(cur))
        cur = cur / norm
        log += math.log(norm)
        prefixes.append(cur.copy())
        logs.append(log)
    return prefixes, logs


def _scan_expanding_product(mats: list[np.ndarray], sigma0: float,
                            block: int = 1024
                            ) -> tuple[int, int] | None:
    """(k, l) with k >= 1 maximizing sigma(A_l ... A_k), if above sigma0.

    Uses the identity |A_l...A_k|_F^2 = vec(P_l^T P_l) . vec((P_{k-1}
    P_{k-1}^T)^{-1}) on norm-rescaled prefixes, so the scan is a blocked
    matrix product immune to overflow.
    """
    n1 = len(mats)
    if n1 < 2:
        return None
    # quick interval bound: largest possible log sigma over contiguous runs
    logs_sigma = np.array([math.log(sigma_of(m)) for m in mats])
    csum = np.concatenate([[0.0], np.cumsum(logs_sigma)])
    spread = 0.0
    running_min = 0.0
    for j in range(1, n1 + 1):
        spread = max(spread, csum[j] - running_min)
        running_min = min(running_min, csum[j])
    if spread <= math.log(sigma0):
        return None
    prefixes, logs = _normalized_prefixes(mats)
    P = np.stack(prefixes)          # (n1, 2, 2) unit norm
    logs = np.array(logs)
    gram = np.einsum("nji,njk->nik", P, P)                   # P^T P
    q = gram.reshape(n1, 4)
    # (P^-1)(P^-1)^T = (P^T P)^-1; F(k,l) = <vec gram_l, vec inv_(k-1)>
    inv = np.empty_like(gram)
    det = gram[:, 0, 0] * gram[:, 1, 1] - gram[:, 0, 1] * gram[:, 1, 0]
    inv[:, 0, 0] = gram[:, 1, 1]
    inv[:, 1, 1] = gram[:, 0, 0]
    inv[:, 0, 1] = -gram[:, 0, 1]
    inv[:, 1, 0] = -gram[:, 1, 0]
    inv /= det[:, None, None]
    s = inv.reshape(n1, 4)
    thresh = sigma0 ** 2 + sigma0 ** -2
    cols = np.arange(n1)
    best = (-math.inf, None)
    if np.abs(logs).max() < 300.0:
        # scales fit in float64: fold them in and run one blocked matmul
        qs = q * np.exp(2 * logs)[:, None]
        ss = s * np.exp(-2 * logs)[:, None]
        for start in range(1, n1, block):
            stop = min(start + block, n1)
            fro = ss[start - 1:stop - 1] @ qs.T              # (B, n1)
            fro[cols[None, start:stop].T > cols[None, :]] = -math.inf
            idx = np.unravel_index(np.argmax(fro), fro.shape)
            val = fro[idx]
            if val > best[0]:
                best = (val, (start + int(idx[0]), int(idx[1])))
            if best[0] > thresh:
                return best[1]  # any product above the threshold works
        return None
    log_thresh = math.log(thresh)
    for start in range(1, n1, block):
        stop = min(start + block, n1)
        fro = s[start - 1:stop - 1] @ q.T                    # (B, n1)
        with np.errstate(divide="ignore"):
            logf = np.log(np.maximum(fro, 1e-300))
        logf += logs[None, :] * 2
        logf -= 2 * logs[start - 1:stop - 1, None]
        logf[cols[None, start:stop].T > cols[None, :]] = -math.inf
        idx = np.unravel_index(np.argmax(logf), logf.shape)
        val = logf[idx]
        if val > best[0]:
            best = (val, (start + int(idx[0]), int(idx[1])))
    if best[0] > log_thresh:
        return best[1]
    return None


def _monotone_angle_crossing(angle_fn, grid: np.ndarray, target_dir: float,
                             max_step: float = 1.0,
                             refine_budget: int = 200000,
                             precomputed: np.ndarray | None = None
                             ) -> tuple[float, float] | None:
    """First parameter where the monotone lifted angle hits target_dir
    mod pi, located by bisection; returns (parameter, residual).

    Intervals whose angular increment exceeds ``max_step`` are split
    until the unwrap is unambiguous (the motion is monotone, so every
    increment is a true forward step once below a half turn).
    """
    ts = [float(t) for t in grid]
    if precomputed is not None:
        angles = [float(a) for a in precomputed]
    else:
        angles = [angle_fn(t) for t in ts]
    i = 0
    budget = refine_budget
    while i < len(ts) - 1:
        delta = (angles[i + 1] - angles[i]) % (2 * math.pi)
        if delta > max_step and ts[i + 1] - ts[i] > 1e-14 and budget > 0:
            mid = 0.5 * (ts[i] + ts[i + 1])
            ts.insert(i + 1, mid)
            angles.insert(i + 1, angle_fn(mid))
            budget -= 1
            continue
        i += 1
    if budget <= 0:
        raise NumericalFailure("sweep refinement budget exhausted")
    arr = np.array(angles)
    deltas = np.mod(np.diff(arr), 2 * math.pi)
    lift = np.concatenate([[arr[0]], arr[0] + np.cumsum(deltas)])
    offset = (target_dir - lift[0]) % math.pi
    target = lift[0] + offset
    if offset < 1e-15:
        return float(ts[0]), 0.0
    hit = np.nonzero(lift >= target)[0]
    if len(hit) == 0:
        return None
    j = int(hit[0])
    lo, hi = ts[j - 1], ts[j]
    lo_lift = lift[j - 1]

    def lifted(t: float) -> float:
        return lo_lift + (angle_fn(t) - lo_lift) % (2 * math.pi)

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lifted(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    t = 0.5 * (lo + hi)
    return t, abs(lifted(t) - target)


def _unit(phi: float) -> np.ndarray:
    return np.array([math.cos(phi), math.sin(phi)])


def _polish_trace(trace_fn, t: float, lo: float, hi: float) -> float:
    """Nudge the crossing parameter to maximize trace^2 locally.

    At the exact crossing |trace| = 2 and an interval of |trace| >= 2
    opens on one side; a two-sided geometric ladder of offsets finds a
    point inside it without assumptions on its width.
    """
    cands = [t]
    for mag in (1e-15, 1e-13, 1e-11, 1e-9, 1e-7, 1e-5, 1e-3):
        for sign in (1.0, -1.0):
            u = t + sign * mag
            if lo <= u <= hi:
                cands.append(u)
    return max(cands, key=lambda u: trace_fn(u) ** 2)


def realize_real_eigenvalues(seq: list[SL2Matrix],
                             epsilon: float) -> AngleSolution:
    """Angles alpha_i in (-epsilon, epsilon) making the rotated product
    B_n ... B_0 have real eigenvalues (|trace| >= 2 - 1e-9)."""
    need = min_length(epsilon)
    if len(seq) < need:
        raise SequenceTooShort(
            f"need at least {need} matrices at epsilon={epsilon}, "
            f"got {len(seq)}")
    mats = [m.array() for m in seq]
    n1 = len(mats)
    base = _product(mats)
    if base[0, 0] + base[1, 1] >= 2.0 or base[0, 0] + base[1, 1] <= -2.0:
        p = SL2Matrix.from_array(base)
        return AngleSolution((0.0,) * n1, p, p.trace, "unperturbed")
    sigma0 = sigma_threshold(epsilon)
    found = _scan_expanding_product(mats, sigma0)
    if found is not None:
        return _case1(seq, mats, epsilon, *found)
    return _case2(seq, mats, epsilon, sigma0)


def _case1(seq, mats, epsilon, k, l) -> AngleSolution:
    """Two synchronized angles t*theta around the expanding block."""
    n1 = len(mats)
    A = _product(mats[k:l + 1])
    o1, sigma, o2 = kak_decompose(SL2Matrix.from_array(A))
    theta = math.atan2(1.0, sigma)
    if not 0 < theta < epsilon:
        raise NumericalFailure(
            f"alignment angle {theta} escaped (0, {epsilon})")
    phi = (math.pi / 2 - o2)  # O2 maps it to the vertical direction
    pre = _product(mats[:k])
    post_mats = mats[l + 1:]
    xi_vec = np.linalg.solve(pre, _unit(phi))
    u0 = _unit(phi)  # = direction of pre applied to xi

    def m_dir(t: float) -> float:
        w = rot(t * theta) @ u0
        w = A @ w
        w /= np.linalg.norm(w)
        w = rot(t * theta) @ w
        for m in post_mats:
            w = m @ w
            nrm = np.linalg.norm(w)
            if not np.isfinite(nrm) or nrm == 0:
                raise NumericalFailure("direction collapsed in case 1")
            w /= nrm
        return math.atan2(w[1], w[0])

    xi_dir = math.atan2(xi_vec[1], xi_vec[0])
    # the sweep from t=-1 to t=1 covers a half circle; refinement in the
    # crossing locator handles local sigma^2-fold expansion
    grid = np.linspace(-1.0, 1.0, 257)
    hit = _monotone_angle_crossing(m_dir, grid, xi_dir)
    if hit is None:
        raise NumericalFailure("case-1 sweep found no invariant direction")
    t_star, _res = hit

    post = _product(mats[l + 1:])
    cyc = pre @ post  # tr(post X pre) = tr(X pre post)

    def trace_at(t: float) -> float:
        x = rot(t * theta) @ A @ rot(t * theta) @ cyc
        return x[0, 0] + x[1, 1]

    t_star = _polish_trace(trace_at, t_star, -1.0, 1.0)
    angles = [0.0] * n1
    angles[k - 1] = t_star * theta
    angles[l] = t_star * theta
    prod = _product([rot(a) @ m for a, m in zip(angles, mats)])
    p = SL2Matrix.from_array(prod)
    if p.trace ** 2 < 4.0 - 4.0 * TRACE_TOL:
        raise NumericalFailure(f"case-1 trace {p.trace} not real-eigenvalue")
    return AngleSolution(tuple(angles), p, p.trace, "case1")


def _case2(seq, mats, epsilon, sigma0) -> AngleSolution:
    """One-sided sweep: full-budget rotations below a moving index."""
    n1 = len(mats)
    eps_w = epsilon * (1 - 1e-9)
    r_eps = rot(eps_w)
    # u_i = (R A_{i-1}) ... (R A_0) applied to the base direction
    phi0 = 0.0
    u = [np.array([1.0, 0.0])]
    for i in range(n1 - 1):
        w = r_eps @ (mats[i] @ u[-1])
        u.append(w / np.linalg.norm(w))
    X = np.stack([mats[i] @ u[i] for i in range(n1)])  # (n1, 2)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    posts = [np.eye(2)]
    for i in range(n1 - 1, 0, -1):
        m = posts[-1] @ mats[i]
        posts.append(m / np.linalg.norm(m))
    posts.reverse()  # posts[i] ~ A_n ... A_{i+1}
    S = np.stack(posts)  # (n1, 2, 2)

    tgrid = np.linspace(0.0, 1.0, 33)[:-1]  # t=1 coincides with next i, t=0
    angs = np.empty((n1, len(tgrid)))
    for jt, t in enumerate(tgrid):
        w = np.einsum("ij,nj->ni", rot(t * eps_w), X)
        w = np.einsum("nij,nj->ni", S, w)
        angs[:, jt] = np.arctan2(w[:, 1], w[:, 0])
    final = S[-1] @ (rot(eps_w) @ X[-1])
    flat = np.concatenate([angs.reshape(-1),
                           [math.atan2(final[1], final[0])]])
    params = np.concatenate([
        (np.arange(n1)[:, None] + tgrid[None, :]).reshape(-1), [float(n1)]])

    def dir_at(s: float) -> float:
        i = min(int(s), n1 - 1)
        t = s - i
        w = S[i] @ (rot(t * eps_w) @ X[i])
        return math.atan2(w[1], w[0])

    hit = _monotone_angle_crossing(dir_at, params, phi0, max_step=2.0,
                                   precomputed=flat)
    if hit is None:
        raise NumericalFailure("case-2 sweep fell short of a half turn")
    s_star, _res = hit

    # tr(high R(t eps) A_i low) = cos(t eps) tr(G_i) + sin(t eps) asym(G_i)
    # with G_i = A_i low_i high_i; magnitudes stay modest because no
    # contiguous product is strongly expanding in case 2
    lows = [np.eye(2)]
    for i in range(n1 - 1):
        lows.append((r_eps @ mats[i]) @ lows[-1])
    highs = [np.eye(2)]
    for i in range(n1 - 1, 0, -1):
        highs.append(highs[-1] @ mats[i])
    highs.reverse()  # highs[i] = A_n ... A_{i+1}

    def trace_for(s: float) -> float:
        i = min(int(s), n1 - 1)
        t = s - i
        g = mats[i] @ lows[i] @ highs[i]
        te = t * eps_w
        return math.cos(te) * (g[0, 0] + g[1, 1]) \
            + math.sin(te) * (g[0, 1] - g[1, 0])

    s_star = _polish_trace(trace_for, s_star, 0.0, float(n1))
    i_star = min(int(s_star), n1 - 1)
    t_star = s_star - i_star
    angles = [eps_w] * i_star + [t_star * eps_w] + [0.0] * (n1 - i_star - 1)
    prod = _product([rot(a) @ m for a, m in zip(angles, mats)])
    p = SL2Matrix.from_array(prod)
    if p.trace ** 2 < 4.0 - 4.0 * TRACE_TOL:
        raise NumericalFailure(f"case-2 trace {p.trace} not real-eigenvalue")
    return AngleSolution(tuple(angles), p, p.trace, "case2")


def hyperbolize(seq: list[SL2Matrix], epsilon: float) -> AngleSolution:
    """Realize real eigenvalues at half budget, then nudge one angle to
    push |trace| beyond 2 + margin.

    For one tweaked angle the trace is A cos(delta) + b sin(delta) with
    A the current trace and b the antisymmetry of the cyclically rotated
    product, so the best single-angle gain has a closed form; a matrix
    with |trace| ~ 2 that is not +-identity has a nonzero b at some
    index.  A coarse two-angle grid is the fallback.
    """
    need = min_length(epsilon / 2)
    if len(seq) < need:
        raise SequenceTooShort(
            f"hyperbolize needs at least {need} matrices at "
            f"epsilon={epsilon} (half budget), got {len(seq)}")
    mats = [m.array() for m in seq]
    n1 = len(mats)
    base = _product(mats)
    if abs(base[0, 0] + base[1, 1]) > 2.0 + HYPERBOLIC_MARGIN:
        p = SL2Matrix.from_array(base)
        return AngleSolution((0.0,) * n1, p, p.trace, "unperturbed")
    sol = realize_real_eigenvalues(seq, epsilon / 2)
    if abs(sol.trace) > 2.0 + HYPERBOLIC_MARGIN:
        return sol
    budget = epsilon / 2 * (1 - 1e-9)
    bmats = [rot(a) @ m for a, m in zip(sol.angles, mats)]
    prefixes = [np.eye(2)]
    for m in bmats:
        prefixes.append(m @ prefixes[-1])  # W_i = B_i ... B_0 at i+1
    suffixes = [np.eye(2)]
    for m in reversed(bmats):
        suffixes.append(suffixes[-1] @ m)  # U_i = B_n ... B_i
    suffixes.reverse()
    tr0 = sol.trace
    best = (abs(tr0), None, 0.0)
    for i in range(n1):
        w_u = prefixes[i + 1] @ suffixes[i + 1]  # W_i U_{i+1}, cyclic product
        b = w_u[0, 1] - w_u[1, 0]
        room = min(budget, epsilon * (1 - 1e-9) - abs(sol.angles[i]))
        if room <= 0:
            continue
        delta0 = math.atan2(b, tr0)
        cands = [max(-room, min(room, delta0)), room, -room]
        for delta in cands:
            val = abs(tr0 * math.cos(delta) + b * math.sin(delta))
            if val > best[0]:
                best = (val, i, delta)
    if best[1] is not None and best[0] > 2.0 + HYPERBOLIC_MARGIN:
        i, delta = best[1], best[2]
        angles = list(sol.angles)
        angles[i] += delta
        prod = _product([rot(a) @ m for a, m in zip(angles, mats)])
        p = SL2Matrix.from_array(prod)
        if abs(p.trace) > 2.0 + HYPERBOLIC_MARGIN:
            return AngleSolution(tuple(angles), p, p.trace, sol.mode)
    # fallback: coarse grid over the two most responsive angles
    resp = []
    for i in range(n1):
        w_u = prefixes[i + 1] @ suffixes[i + 1]
        resp.append((abs(w_u[0, 1] - w_u[1, 0]), i))
    resp.sort(reverse=True)
    top = [i for _, i in resp[:4]]
    grid = np.linspace(-budget, budget, 15)
    for ai in top:
        for aj in top:
            if ai >= aj:
                continue
            for da in grid:
                for db in grid:
                    angles = list(sol.angles)
                    angles[ai] += da
                    angles[aj] += db
                    if any(abs(a) >= epsilon for a in angles):
                        continue
                    prod = _product([rot(a) @ m
                                     for a, m in zip(angles, mats)])
                    if abs(prod[0, 0] + prod[1, 1]) > 2.0 + HYPERBOLIC_MARGIN:
                        p = SL2Matrix.from_array(prod)
                        return AngleSolution(tuple(angles), p, p.trace,
                                             sol.mode)
    raise DegenerateNudge(
        "no rotation nudge within budget increases |trace| beyond "
        f"{2.0 + HYPERBOLIC_MARGIN} (pure rotation products cannot leave "
        "the elliptic family)")
