"""Parallel-beam solvers: first-order common line, third-order coefficients, sign continuation.

First order: ``d_t m(t, lam phi) = zeta <grad_k m(t, lam phi), lam phi_perp>``
for all ``lam`` determines ``(phi, zeta)``. Third order: with
``X1 = rho^2`` and ``X2 = rho'/rho`` the rows ``a02 X1 + a1 X2 = -a0`` over
``lam`` determine ``|rho|``; the sign follows from continuity.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import (
    ContinuityViolationError,
    DegenerateDataError,
    InsufficientDataError,
    InsufficientStencilError,
    ModelViolationError,
)
from ..forward.measure import radial_points
from ..so3 import phi_perp, to_cylindrical, unwrap_cylindrical
from .common import azimuth_search, batched_lstsq, check_sanity, stack_complex

JUMP_LIMIT = np.pi / 4


def _model(jets):
    cfg = getattr(jets, "cfg", None)
    if cfg is None or cfg.model != "PB" or not len(cfg.samples):
        raise InsufficientDataError("PB solver needs a PB model config with lambda samples on the jet provider")
    return cfg


@dataclass
class FirstOrderEstimate:
    """``(phi, zeta)`` from the first-order equation; ``phi`` is nan for the rho-zero family."""

    phi: float
    zeta: float
    ambiguity: str
    residual: float
    ratio: float = np.inf
    profile: tuple = None

    @property
    def flagged(self):
        return self.ambiguity != "unique"


def pb_first_order_system(jets, t_index, phis):
    """Rows ``A (n_phi, n_lam, 1)`` for ``zeta`` and targets ``y (n_phi, n_lam)``."""
    lam = _model(jets).sample_array
    phis = np.atleast_1d(phis)
    j = jets.jets(t_index, radial_points(phis, lam), ("dt", "grad"))
    G = np.einsum("pma,pa->pm", j.grad, phi_perp(phis))
    return (lam * G)[..., None], j.dt


def _solver(jets, t_index):
    def solve(phis):
        A, y = pb_first_order_system(jets, t_index, phis)
        Ar, yr = stack_complex(A, y)
        x, res, sv = batched_lstsq(Ar, yr)
        return x, res, sv, (np.linalg.norm(yr, axis=-1), np.linalg.norm(Ar, axis=(-2, -1)))
    return solve


def _same(phi_a, xa, phi_b, xb):
    return abs(xa[0] - xb[0]) <= 1e-3 * (1 + abs(xa[0])) and (
        min(abs(phi_a - phi_b), np.pi - abs(phi_a - phi_b)) <= 1e-3)


def pb_first_order_step(jets, t_index, cfg):
    """Azimuth and third component of ``omega(t)`` from the first-order equation."""
    found = azimuth_search(_solver(jets, t_index), cfg, _same)
    check_sanity(found["residual"], cfg)
    if found["low"].size == int(cfg.phi_grid):
        # every azimuth solves the equation: omega = (0, 0, zeta)
        zeta = float(np.median(found["grid_x"][:, 0]))
        return FirstOrderEstimate(np.nan, zeta, "rho-zero-family", found["residual"], np.inf, found["profile"])
    ambiguity = "unique" if found["ratio"] >= cfg.ambiguity_ratio else "degenerate"
    return FirstOrderEstimate(found["phi"], float(found["x"][0]), ambiguity, found["residual"],
                              found["ratio"], found["profile"])


def pb_first_order_residual(jets, t_index, phi, zeta, cfg):
    """Normalized first-order residual at ``(phi, zeta)`` (same scale as the solver)."""
    from .common import phi_candidates
    A, y = pb_first_order_system(jets, t_index, phi_candidates(cfg.phi_grid))
    Ar, yr = stack_complex(A, y)
    scale = np.sqrt(np.mean(np.linalg.norm(yr, axis=-1) ** 2)) + np.sqrt(
        np.mean(np.linalg.norm(Ar, axis=(-2, -1)) ** 2))
    A1, y1 = pb_first_order_system(jets, t_index, np.array([phi]))
    Ar1, yr1 = stack_complex(A1, y1)
    return float(np.linalg.norm(Ar1[0, :, 0] * zeta - yr1[0]) / (scale if scale > 0 else 1.0))


# series derivatives ------------------------------------------------------------

_C4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12
_F4 = {0: np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12,
       1: np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12}


def series_derivative(times, values, index, one_sided=True):
    """Fourth-order finite-difference derivative of a uniformly sampled series at ``index``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    n = t.size
    if n < 5:
        raise InsufficientStencilError("series derivatives need at least 5 samples")
    h = (t[-1] - t[0]) / (n - 1)
    if 2 <= index <= n - 3:
        return float(_C4 @ v[index - 2:index + 3]) / h
    if not one_sided:
        raise InsufficientStencilError(f"index {index} needs a one-sided stencil")
    if index < 2:
        return float(_F4[index] @ v[:5]) / h
    return -float(_F4[n - 1 - index] @ v[::-1][:5]) / h


@dataclass
class FirstOrderSeries:
    """First-order results on the whole grid with optional exact derivatives."""

    times: np.ndarray
    phi: np.ndarray
    zeta: np.ndarray
    dphi: np.ndarray = None
    dzeta: np.ndarray = None
    one_sided: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        if np.any(~np.isfinite(self.phi)):
            raise InsufficientDataError("first-order series has undefined azimuths (rho-zero steps)")
        # continuous lift of phi (period pi); derivatives are taken on the lift
        self.phi_lift = np.unwrap(self.phi, period=np.pi)

    @classmethod
    def from_trajectory(cls, traj):
        """Exact series from a trajectory with ``omega`` and ``omega_dot``."""
        c = to_cylindrical(traj.omega)
        perp = phi_perp(c.phi)
        dphi = np.einsum("ij,ij->i", traj.omega_dot[:, :2], perp) / c.rho
        return cls(traj.times, c.phi, c.zeta, dphi, traj.omega_dot[:, 2].copy())

    def derivatives(self, index):
        if self.dphi is not None:
            return float(self.dphi[index]), float(self.dzeta[index])
        return (series_derivative(self.times, self.phi_lift, index, self.one_sided),
                series_derivative(self.times, self.zeta, index, self.one_sided))


# third order ---------------------------------------------------------------------

def pb_coefficients(jets, t_index, series, cfg=None):
    """Rows ``(a0, a02, a1)`` over the lambda grid from measurement jets."""
    lam = _model(jets).sample_array
    phi, zeta = float(series.phi[t_index]), float(series.zeta[t_index])
    dphi, dzeta = series.derivatives(t_index)
    e = np.array([np.cos(phi), np.sin(phi)])
    ep = phi_perp(phi)
    k = lam[:, None] * e
    j = jets.jets(t_index, k, ("grad", "hess", "third", "dt_grad", "dt_hess", "dtt_grad"))
    v = lam[:, None] * ep
    w = lam[:, None] * e
    D1 = lambda a: np.einsum("ma,ma->m", j.grad, a)
    D2 = lambda a, b: np.einsum("mab,ma,mb->m", j.hess, a, b)
    a0 = (zeta * (zeta - dphi) * np.einsum("mabc,ma,mb,mc->m", j.third, v, v, v)
          + 2 * D2(v, zeta * dphi * w - dzeta * v)
          + 2 * D1(zeta**2 * v + dzeta * w)
          - (3 * zeta - dphi) * np.einsum("mab,ma,mb->m", j.dt_hess, v, v)
          + 2 * np.einsum("ma,ma->m", j.dtt_grad, v))
    a02 = 2 * D1(v)
    a1 = 2 * (zeta * D2(v, v) - zeta * D1(w) - np.einsum("ma,ma->m", j.dt_grad, v))
    return a0, a02, a1


def pb_coefficients_object(obj, traj, t_index, lams):
    """Object-space forms of ``(a0, a02, a1)`` from ``grad f^`` on the line ``lam e1``."""
    lams = np.asarray(lams, dtype=float)
    w, wd = traj.omega[t_index], traj.omega_dot[t_index]
    c = to_cylindrical(w)
    e = np.array([np.cos(c.phi), np.sin(c.phi)])
    drho = float(wd[:2] @ e)
    R = traj.R[t_index]
    e1, e2, e3 = R @ np.r_[e, 0.0], R @ np.r_[phi_perp(c.phi), 0.0], R[:, 2]
    g = obj.spectral(lams[:, None] * e1, 1).grad
    g2 = lams * (g @ e2)
    g3 = lams * (g @ e3)
    return 2 * drho * g3 - 2 * c.rho**2 * g2, 2 * g2, -2 * c.rho * g3


def prefactor_scale(zeta, dphi):
    """Relative size ``|zeta + phi'| / (|zeta| + |phi'|)`` of the third-order prefactor."""
    den = abs(zeta) + abs(dphi)
    return abs(zeta + dphi) / den if den > 0 else 0.0


def pb_third_order_step(rows, cfg, prefactor=1.0):
    """Least squares for ``(X1, X2)``; returns ``(X1, X2, condition)``.

    The condition is the singular value ratio of ``[a02, a1]`` divided by the
    relative size of the factor ``zeta + phi'`` that multiplies the whole
    third-order equation, so degenerate motions show up as overflow.
    """
    a0, a02, a1 = (np.asarray(r, dtype=complex) for r in rows)
    keep = (np.abs(a02) + np.abs(a1)) > 0
    if keep.sum() < 2:
        raise InsufficientDataError("third-order system needs at least two nonzero rows")
    A = np.stack([a02[keep], a1[keep]], axis=-1)
    Ar, yr = stack_complex(A, -a0[keep])
    x, _, sv = batched_lstsq(Ar, yr)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    cond = cond / prefactor if prefactor > 0 else np.inf
    X1, X2 = float(x[0]), float(x[1])
    if X1 < -cfg.x1_tol * max(1.0, abs(X2)):
        raise ModelViolationError(f"X1 = {X1:.3g} < 0 although it models rho^2")
    return X1, X2, float(cond)


def rho_sign_continuation(X1, X2, cfg, phi=None):
    """Signed radius series from ``X1 = rho^2``.

    ``rho`` starts positive (the branch convention); along the continuous
    lift of ``phi`` it keeps its sign, so in [0, pi) coordinates it flips
    exactly when ``phi`` wraps. ``X2`` is only used as a consistency input.
    """
    X1 = np.asarray(X1, dtype=float)
    if np.any(~(X1 > 0)):
        raise DegenerateDataError("X1 = rho^2 must be positive on the whole grid")
    rho = np.sqrt(X1)
    if phi is None:
        return rho
    phi = np.asarray(phi, dtype=float)
    lifted = np.unwrap(phi, period=np.pi)
    if np.any(np.abs(np.diff(lifted)) > JUMP_LIMIT):
        raise ContinuityViolationError("azimuth series jumps too far to continue the sign of rho")
    rho_s, _ = unwrap_cylindrical(rho, phi)
    return rho_s
