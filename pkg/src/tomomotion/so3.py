"""Kinematics on SO(3).

Rotations are plain 3x3 arrays. Angular velocities use the body convention
``R^T R' = [w]_x``, so that ``R' = R [w]_x``.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_times, check_unit_vector, readonly
from .errors import (
    InconsistentDerivativeError,
    InsufficientDataError,
    InvalidArgumentError,
    StepTooLargeError,
)

SIGMA = np.diag([1.0, 1.0, -1.0])
ANTISYM_TOL = 1e-8
DRIFT_TOL = 1e-6


def hat(w):
    """Skew matrix ``[w]_x`` with ``[w]_x y = w x y``; batches over leading axes."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -w[..., 2], w[..., 1]
    out[..., 1, 0], out[..., 1, 2] = w[..., 2], -w[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -w[..., 1], w[..., 0]
    return out


def vee(M):
    """Inverse of :func:`hat` applied to the antisymmetric part of ``M``."""
    M = np.asarray(M, dtype=float)
    A = 0.5 * (M - np.swapaxes(M, -1, -2))
    return np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)


def rodrigues(axis, angle):
    """Rotation by ``angle`` about the unit vector ``axis``."""
    w = check_unit_vector(axis)
    c, s = np.cos(angle), np.sin(angle)
    return c * np.eye(3) + s * hat(w) + (1.0 - c) * np.outer(w, w)


def project_to_so3(M):
    """Nearest rotation in the Frobenius norm (polar factor)."""
    U, _, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    return U @ np.diag([1.0, 1.0, d]) @ Vt


class CylVector(NamedTuple):
    """Signed cylindrical coordinates ``(rho, phi, zeta)`` with ``phi`` in [0, pi)."""

    rho: float
    phi: float
    zeta: float


def to_cylindrical(v):
    """Signed cylindrical coordinates of ``v`` (or of each row of ``v``).

    The azimuth is folded onto [0, pi) and the lower half plane is absorbed
    by a negative radius. A zero radius gets azimuth 0.
    """
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    rho = np.hypot(x, y)
    phi = np.arctan2(y, x)
    flip = (phi < 0) | (phi >= np.pi)
    phi = np.where(phi < 0, phi + np.pi, phi)
    phi = np.where(phi >= np.pi, phi - np.pi, phi)
    rho = np.where(flip, -rho, rho)
    phi = np.where(rho == 0, 0.0, phi)
    if v.ndim == 1:
        return CylVector(float(rho), float(phi), float(z))
    return CylVector(rho, phi, z.copy())


def from_cylindrical(c):
    rho, phi, zeta = (np.asarray(a, dtype=float) for a in c)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), zeta + 0 * rho], axis=-1)


def phi_perp(phi):
    """Unit vector ``(-sin phi, cos phi)``."""
    phi = np.asarray(phi, dtype=float)
    return np.stack([-np.sin(phi), np.cos(phi)], axis=-1)


def unwrap_cylindrical(rho, phi):
    """Continue ``phi`` modulo pi along a series, flipping ``rho`` with each jump."""
    phi = np.asarray(phi, dtype=float)
    phi_u = np.unwrap(phi, period=np.pi)
    k = np.rint((phi_u - phi) / np.pi).astype(int)
    return np.asarray(rho, dtype=float) * (-1.0) ** k, phi_u


def angular_velocity(R, Rdot, tol=ANTISYM_TOL):
    """Vector ``w`` with ``R^T Rdot = [w]_x``.

    Raises if ``R^T Rdot`` has a symmetric part larger than ``tol`` (relative
    to its size, floor 1).
    """
    A = np.swapaxes(np.asarray(R, dtype=float), -1, -2) @ np.asarray(Rdot, dtype=float)
    sym = np.linalg.norm(A + np.swapaxes(A, -1, -2), axis=(-2, -1))
    scale = np.maximum(1.0, np.linalg.norm(A, axis=(-2, -1)))
    if np.any(sym > tol * scale):
        raise InconsistentDerivativeError(f"R^T R' not antisymmetric (|sym| = {np.max(sym):.3g})")
    return vee(A)


def sigma_conjugate(R):
    """``Sigma R Sigma`` with ``Sigma = diag(1, 1, -1)``."""
    return SIGMA @ np.asarray(R, dtype=float) @ SIGMA


def sigma_velocity(w):
    """Angular velocity of the conjugated motion, ``-Sigma w``."""
    return np.asarray(w, dtype=float) * np.array([-1.0, -1.0, 1.0])


@dataclass(frozen=True)
class MotionTrajectory:
    """Sampled rotational motion.

    ``Rdot``, ``Rddot``, ``omega`` and ``omega_dot`` are optional so that bare
    rotation samples (e.g. recovered or loaded data) can be represented.
    """

    times: np.ndarray
    R: np.ndarray
    Rdot: Optional[np.ndarray] = None
    Rddot: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    omega_dot: Optional[np.ndarray] = None

    def __post_init__(self):
        t = check_times(self.times, min_len=1)
        n = t.size
        object.__setattr__(self, "times", readonly(t))
        shapes = {"R": (n, 3, 3), "Rdot": (n, 3, 3), "Rddot": (n, 3, 3), "omega": (n, 3), "omega_dot": (n, 3)}
        for name, shape in shapes.items():
            val = getattr(self, name)
            if val is None:
                continue
            val = np.asarray(val, dtype=float)
            if val.shape != shape:
                raise InvalidArgumentError(f"{name} has shape {val.shape}, expected {shape}")
            object.__setattr__(self, name, readonly(val))
        if self.omega is None and self.Rdot is not None:
            object.__setattr__(self, "omega", readonly(angular_velocity(self.R, self.Rdot)))
        if self.omega_dot is None and self.Rddot is not None:
            # d/dt (R^T R') = R'^T R' + R^T R''; the first term is symmetric
            wd = vee(np.swapaxes(self.R, 1, 2) @ self.Rddot)
            object.__setattr__(self, "omega_dot", readonly(wd))

    def __len__(self):
        return self.times.size

    def sigma(self):
        """The conjugated motion ``Sigma R Sigma``."""
        f = lambda a: None if a is None else SIGMA @ a @ SIGMA
        g = lambda a: None if a is None else sigma_velocity(a)
        return MotionTrajectory(self.times, f(self.R), f(self.Rdot), f(self.Rddot), g(self.omega), g(self.omega_dot))

    def subset(self, idx):
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else a[idx]
        return MotionTrajectory(self.times[idx], self.R[idx], pick(self.Rdot), pick(self.Rddot),
                                pick(self.omega), pick(self.omega_dot))


def _eval(f, t):
    return np.asarray(f(t), dtype=float).reshape(3)


def motion_kinematics(omega, omega_dot, grid, substeps=1):
    """Integrate ``R' = R [w(t)]_x`` from ``R = I`` with classical RK4.

    Every step is projected back onto SO(3). ``substeps`` subdivides each grid
    interval; derivatives are filled in analytically from ``omega`` and
    ``omega_dot``.
    """
    t = check_times(grid)
    substeps = int(substeps)
    if substeps < 1:
        raise InvalidArgumentError("substeps must be >= 1")
    n = t.size
    R = np.empty((n, 3, 3))
    R[0] = np.eye(3)
    X = np.eye(3)
    for i in range(n - 1):
        h = (t[i + 1] - t[i]) / substeps
        for j in range(substeps):
            s = t[i] + j * h
            k1 = X @ hat(_eval(omega, s))
            wm = hat(_eval(omega, s + 0.5 * h))
            k2 = (X + 0.5 * h * k1) @ wm
            k3 = (X + 0.5 * h * k2) @ wm
            k4 = (X + h * k3) @ hat(_eval(omega, s + h))
            Y = X + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            drift = np.linalg.norm(Y.T @ Y - np.eye(3))
            if drift > DRIFT_TOL:
                raise StepTooLargeError(f"orthogonality drift {drift:.3g} at t={s:.6g}; refine the grid")
            X = project_to_so3(Y)
        R[i + 1] = X
    w = np.stack([_eval(omega, s) for s in t])
    wd = np.stack([_eval(omega_dot, s) for s in t])
    W, Wd = hat(w), hat(wd)
    return MotionTrajectory(times=t, R=R, Rdot=R @ W, Rddot=R @ (W @ W + Wd), omega=w, omega_dot=wd)


class NondegeneracyCertificate(NamedTuple):
    det: float
    cyl: float


def nondegeneracy_certificate(traj, t_index):
    """``det(Re3, R'e3, R''e3)`` and ``rho^2 (zeta + phi')`` at one time step.

    The second value is formed from the cylindrical coordinates of ``w`` and
    the azimuthal rate obtained from ``w'``; both vanish exactly on degenerate
    motions.
    """
    if traj.Rdot is None or traj.Rddot is None or traj.omega_dot is None:
        raise InsufficientDataError("trajectory lacks second derivatives")
    i = int(t_index)
    e3 = np.array([0.0, 0.0, 1.0])
    det = float(np.linalg.det(np.stack([traj.R[i] @ e3, traj.Rdot[i] @ e3, traj.Rddot[i] @ e3], axis=1)))
    rho, phi, zeta = to_cylindrical(traj.omega[i])
    wd = traj.omega_dot[i]
    # rho * phi' = <w'_12, phi_perp>
    rho_phid = wd[:2] @ phi_perp(phi)
    return NondegeneracyCertificate(det, float(rho * rho * zeta + rho * rho_phid))
