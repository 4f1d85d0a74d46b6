"""Asymmetric point sets: determinant certificates, witnesses, generation, weights."""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax
from scipy.spatial.transform import Rotation as _SciRotation

from .._validation import check_unit_vector, readonly
from ..errors import (
    DegenerateSetError,
    GenerationFailedError,
    InvalidArgumentError,
    TooFewPointsError,
)

DET_TOL = 1e-10
PARALLEL_TOL = 1e-10
DRAW_BUDGET = 10**6
COVERAGE_GRID = 4096


def _six_pairings():
    """The 15 ways of splitting six indices into three unordered pairs."""
    out = []
    for x in range(1, 6):
        rest = [i for i in range(1, 6) if i != x]
        a = rest[0]
        for y in rest[1:]:
            c, d = [i for i in rest[1:] if i != y]
            out.append((0, x, a, y, c, d))
    return np.array(out)


_PAIRINGS = _six_pairings()


@dataclass(frozen=True)
class PointSet:
    """Distinct points strictly inside the ball of radius ``support_radius``."""

    points: np.ndarray
    support_radius: float = 1.0

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        if P.ndim != 2 or P.shape[1] != 3:
            raise InvalidArgumentError(f"points must have shape (n, 3), got {P.shape}")
        if np.any(np.linalg.norm(P, axis=1) >= self.support_radius):
            raise InvalidArgumentError("points must lie inside the support ball")
        d = np.linalg.norm(P[:, None] - P[None], axis=-1)[np.triu_indices(len(P), 1)]
        if d.size and d.min() == 0:
            raise InvalidArgumentError("points must be pairwise distinct")
        object.__setattr__(self, "points", readonly(P))

    def __len__(self):
        return len(self.points)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.points, dtype=dtype)


def _as_points(P):
    P = np.asarray(P.points if isinstance(P, PointSet) else P, dtype=float)
    if P.ndim != 2 or P.shape[1] != 3:
        raise InvalidArgumentError(f"points must have shape (n, 3), got {P.shape}")
    return P


def _scale(P):
    """Point-set diameter, falling back to the largest norm for tiny sets."""
    if len(P) < 2:
        return float(np.linalg.norm(P, axis=1).max(initial=0.0)) or 1.0
    d = np.linalg.norm(P[:, None] - P[None], axis=-1).max()
    return float(max(d, np.linalg.norm(P, axis=1).max()))


def _det3(a, b, c):
    return np.einsum("...i,...i->...", a, np.cross(b, c))


def _chunks(it, size=20000):
    buf = []
    for x in it:
        buf.append(x)
        if len(buf) == size:
            yield np.array(buf)
            buf = []
    if buf:
        yield np.array(buf)


def _triple_min(P, new=None):
    """Smallest |det(p_i, p_j, p_k)|; with ``new`` only triples containing it."""
    idx = range(len(P))
    best = np.inf
    if new is None:
        it = combinations(idx, 3)
    else:
        others = [i for i in idx if i != new]
        it = ((new, a, b) for a, b in combinations(others, 2))
    for c in _chunks(it):
        best = min(best, np.abs(_det3(P[c[:, 0]], P[c[:, 1]], P[c[:, 2]])).min())
    return best


def _cross_min(P, new=None):
    """Smallest |det(p_i x p_j, p_k x p_l, p_m x p_n)| over six distinct indices."""
    idx = range(len(P))
    if new is None:
        it = combinations(idx, 6)
    else:
        others = [i for i in idx if i != new]
        it = ((new,) + c for c in combinations(others, 5))
    best = np.inf
    for c in _chunks(it, 4000):
        q = c[:, _PAIRINGS]  # (m, 15, 6)
        X = P[q]
        a = np.cross(X[..., 0, :], X[..., 1, :])
        b = np.cross(X[..., 2, :], X[..., 3, :])
        d = np.cross(X[..., 4, :], X[..., 5, :])
        best = min(best, np.abs(_det3(a, b, d)).min())
    return best


def _pair_diff_min(P):
    """Smallest |det| of three distinct pair differences spanning >= 4 indices."""
    pidx = np.array(list(combinations(range(len(P)), 2)))
    D = P[pidx[:, 1]] - P[pidx[:, 0]]
    best = np.inf
    it = combinations(range(len(pidx)), 3)
    for c in _chunks(it, 50000):
        ind = pidx[c].reshape(len(c), 6)
        s = np.sort(ind, axis=1)
        nuniq = 1 + (np.diff(s, axis=1) != 0).sum(1)
        keep = nuniq >= 4
        if not np.any(keep):
            continue
        c = c[keep]
        best = min(best, np.abs(_det3(D[c[:, 0]], D[c[:, 1]], D[c[:, 2]])).min())
    return best


def _pair_diff_min_new(P, new):
    """Incremental variant of :func:`_pair_diff_min` for the last point added."""
    pairs = np.array(list(combinations(range(len(P)), 2)))
    D = P[pairs[:, 1]] - P[pairs[:, 0]]
    has = np.where((pairs == new).any(1))[0]
    rest = np.setdiff1d(np.arange(len(pairs)), has)
    best = np.inf
    # one, two or three of the pairs touch the new point
    groups = [
        ((h, a, b) for h in has for a, b in combinations(rest, 2)),
        ((h1, h2, a) for h1, h2 in combinations(has, 2) for a in rest),
        combinations(has, 3),
    ]
    for it in groups:
        for c in _chunks(it, 50000):
            ind = pairs[c].reshape(len(c), 6)
            s = np.sort(ind, axis=1)
            keep = 1 + (np.diff(s, axis=1) != 0).sum(1) >= 4
            if np.any(keep):
                c = c[keep]
                best = min(best, np.abs(_det3(D[c[:, 0]], D[c[:, 1]], D[c[:, 2]])).min())
    return best


def dt_pointset_certificate(P, tol=DET_TOL):
    """Sufficient determinant test for DT asymmetry (needs at least 8 points).

    The triple determinants are compared against ``tol * scale**3`` and the
    cross-product determinants, being of degree six, against ``tol * scale**6``.
    """
    P = _as_points(P)
    if len(P) < 8:
        raise TooFewPointsError(f"DT certificate needs >= 8 points, got {len(P)}")
    s = _scale(P)
    return bool(_triple_min(P) > tol * s**3 and _cross_min(P) > tol * s**6)


def pb_pointset_certificate(P, tol=DET_TOL):
    """Sufficient determinant test for PB asymmetry (needs at least 7 points)."""
    P = _as_points(P)
    if len(P) < 7:
        raise TooFewPointsError(f"PB certificate needs >= 7 points, got {len(P)}")
    s = _scale(P)
    return bool(_triple_min(P) > tol * s**3 and _pair_diff_min(P) > tol * s**3)


def pointset_direction_witness(P, xi, model, tol=PARALLEL_TOL):
    """Two points witnessing asymmetry along ``xi``, or ``None``.

    DT: each point has a nonzero projection onto ``xi`` and an orthogonal
    projection not parallel to the projection of any other point (points
    projecting to zero are skipped). PB: each point has a projection onto
    ``xi`` shared by no other point, and ``xi`` and the two points are
    linearly independent.
    """
    P = _as_points(P)
    xi = check_unit_vector(xi, "xi", tol=1e-12)
    model = str(model).upper()
    s = _scale(P)
    along = P @ xi
    if model == "DT":
        proj = P - along[:, None] * xi
        norms = np.linalg.norm(proj, axis=1)
        nz = norms > tol * s
        cand = []
        for j in range(len(P)):
            if not nz[j] or abs(along[j]) <= tol * s:
                continue
            others = nz.copy()
            others[j] = False
            sines = np.linalg.norm(np.cross(proj[j], proj[others]), axis=1) / (norms[j] * norms[others])
            if np.all(sines >= tol):
                cand.append(j)
            if len(cand) == 2:
                return P[cand[0]].copy(), P[cand[1]].copy()
        return None
    if model == "PB":
        gap = np.abs(along[:, None] - along[None])
        np.fill_diagonal(gap, np.inf)
        cand = np.where(gap.min(1) > tol * s)[0]
        for a, b in combinations(cand, 2):
            if abs(_det3(xi, P[a], P[b])) > tol * s**2:
                return P[a].copy(), P[b].copy()
        return None
    raise InvalidArgumentError("model must be 'DT' or 'PB'")


def fibonacci_sphere(n, rotation=None):
    """``n`` nearly uniform unit vectors on a Fibonacci lattice."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    th = np.pi * (1.0 + 5**0.5) * i
    U = np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)
    return U if rotation is None else U @ np.asarray(rotation).T


def cap_coverage(P, eps, grid=COVERAGE_GRID):
    """Worst-case best cap margin ``max_p <p/|p|, u> - (1 - eps/r)`` over a direction grid.

    Positive means every cap of height ``eps`` around a grid direction holds
    a point of ``P`` (all points assumed on one sphere of radius ``r``).
    """
    P = _as_points(P)
    r = np.linalg.norm(P, axis=1).mean()
    U = fibonacci_sphere(grid) if np.isscalar(grid) else np.asarray(grid)
    best = (U @ (P / np.linalg.norm(P, axis=1, keepdims=True)).T).max(1)
    return float(best.min() - (1.0 - eps / r))


def _covering_objective(x, U, beta, gamma):
    n = x.size // 3
    X = x.reshape(n, 3)
    nr = np.linalg.norm(X, axis=1, keepdims=True)
    P = X / nr
    D = U @ P.T
    s = logsumexp(beta * D, axis=1) / beta  # soft nearest-point cosine
    f = -logsumexp(-gamma * s) / gamma  # soft worst direction
    G = (softmax(-gamma * s)[:, None] * softmax(beta * D, axis=1)).T @ U
    G = (G - (G * P).sum(1, keepdims=True) * P) / nr
    return -f, -G.ravel()


def optimized_covering(n, rng, grid=12000, restarts=3):
    """Unit vectors approximately minimizing the covering radius of the sphere."""
    Q = _SciRotation.random(random_state=rng.integers(2**31)).as_matrix()
    U = fibonacci_sphere(grid, Q)
    best, best_val = None, -np.inf
    for k in range(restarts):
        x = fibonacci_sphere(n).ravel() if k == 0 else rng.normal(size=3 * n)
        for beta in (30.0, 100.0, 300.0, 1000.0):
            x = minimize(_covering_objective, x, args=(U, beta, beta), jac=True,
                         method="L-BFGS-B", options={"maxiter": 300}).x
        P = x.reshape(n, 3)
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        val = (U @ P.T).max(1).min()
        if val > best_val:
            best, best_val = P, val
    return best, U


def _passes_incremental(P, new, margin, need_dt, need_pb):
    s = _scale(P)
    if len(P) >= 3 and _triple_min(P, new) <= margin * s**3:
        return False
    if need_dt and len(P) >= 6 and _cross_min(P, new) <= margin * s**6:
        return False
    if need_pb and len(P) >= 4 and _pair_diff_min_new(P, new) <= margin * s**3:
        return False
    return True


def generate_asymmetric_pointset(n, seed=0, placement="ball", r_min=0.2, r_max=0.5,
                                 radius=None, eps=None, support_radius=1.0, margin=None,
                                 coverage_grid=COVERAGE_GRID):
    """Random point set passing both the DT and the PB certificates.

    ``placement="ball"`` draws points uniformly from the shell
    ``r_min <= |p| <= r_max``. ``placement="shell"`` puts the points on the
    sphere of radius ``radius`` (default ``support_radius - eps``) so that every
    cap of height ``eps`` around a ``coverage_grid`` direction holds a point;
    points are added beyond ``n`` if the covering needs them.
    Candidates are accepted only if every certificate determinant exceeds
    ``margin`` times the matching power of the set scale (default ``1e-6`` for
    ball placement, ten times the certificate tolerance for shell placement,
    where millions of determinant combinations push the minimum down).
    """
    n = int(n)
    if n < 8:
        raise InvalidArgumentError("generate_asymmetric_pointset needs n >= 8")
    rng = np.random.default_rng(seed)
    if placement == "ball":
        if not 0 <= r_min < r_max < support_radius:
            raise InvalidArgumentError("need 0 <= r_min < r_max < support_radius")
        margin = 1e-6 if margin is None else margin
        pts = []
        draws = 0
        while len(pts) < n:
            draws += 1
            if draws > DRAW_BUDGET:
                raise GenerationFailedError("rejection budget exhausted")
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            r = (r_min**3 + rng.random() * (r_max**3 - r_min**3)) ** (1 / 3)
            cand = np.array(pts + [r * v])
            if _passes_incremental(cand, len(pts), margin, True, True):
                pts.append(r * v)
        return PointSet(np.array(pts), support_radius)
    if placement == "shell":
        if eps is None or not 0 < eps < support_radius / 8:
            raise InvalidArgumentError("shell placement needs eps in (0, support_radius/8)")
        radius = support_radius - eps if radius is None else float(radius)
        margin = 10 * DET_TOL if margin is None else margin
        m = n
        for _ in range(64):
            U, _ = optimized_covering(m, rng)
            for _ in range(50):
                P = radius * U
                ok = all(_passes_incremental(P[: k + 1], k, margin, True, True) for k in range(2, m))
                if ok:
                    break
                U = U + 1e-3 * rng.normal(size=U.shape)
                U /= np.linalg.norm(U, axis=1, keepdims=True)
            else:
                raise GenerationFailedError("could not perturb the covering into general position")
            if cap_coverage(P, eps, coverage_grid) > 0:
                return PointSet(P, support_radius)
            m += 1
        raise GenerationFailedError("cap covering not reached")
    raise InvalidArgumentError("placement must be 'ball' or 'shell'")


def balance_weights(P, n_lambda=121):
    """Nonzero weights with ``sum_j w_j p_j = 0`` and ``max |w_j| = 1``.

    Built inductively: ``p4`` is written in terms of ``p1..p3`` and each further
    point in terms of its three predecessors, mixing in a multiple ``lam`` of
    that relation. ``lam`` is picked on a grid to keep the smallest weight as
    large as possible relative to the largest one.
    """
    P = _as_points(P)
    n = len(P)
    if n < 4:
        raise TooFewPointsError("balance_weights needs at least 4 points")
    s = _scale(P)
    if _triple_min(P) <= DET_TOL * s**3:
        raise DegenerateSetError("some triple of points is linearly dependent")
    a = np.linalg.solve(P[:3].T, P[3])
    w = np.append(a, -1.0)
    for N in range(4, n):
        a = np.linalg.solve(P[N - 3:N].T, P[N])
        mag = np.median(np.abs(w))
        lams = mag * np.concatenate([-np.geomspace(3.0, 0.02, n_lambda // 2), np.geomspace(0.02, 3.0, n_lambda // 2)])
        tail = w[N - 3:N][None, :] - lams[:, None] * a[None, :]
        head = np.abs(w[: N - 3]).min() if N > 3 else np.inf
        allw = np.concatenate([tail, lams[:, None]], axis=1)
        absw = np.abs(allw)
        top = np.maximum(absw.max(1), np.abs(w[: N - 3]).max(initial=0))
        score = np.minimum(absw.min(1), head) / top
        lam = lams[np.argmax(score)]
        w = np.concatenate([w[: N - 3], w[N - 3:N] - lam * a, [lam]])
    w = w / np.abs(w).max()
    # remove accumulated roundoff with a correction on the first three weights
    for _ in range(2):
        w[:3] += np.linalg.solve(P[:3].T, -(w @ P))
    if np.any(w == 0):
        raise DegenerateSetError("weight construction produced a zero weight")
    return w
