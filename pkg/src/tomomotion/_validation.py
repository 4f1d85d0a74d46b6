"""Input validation helpers shared across modules."""

import numpy as np

from .errors import InvalidArgumentError


def check_vector(v, name="vector", dim=3):
    a = np.asarray(v, dtype=float)
    if a.shape != (dim,):
        raise InvalidArgumentError(f"{name} must have shape ({dim},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite")
    return a


def check_unit_vector(v, name="axis", tol=1e-12, dim=3):
    a = check_vector(v, name, dim)
    n = np.linalg.norm(a)
    if abs(n - 1.0) > tol:
        raise InvalidArgumentError(f"{name} must have unit norm (got {n!r})")
    return a


def check_rotation(R, name="R", tol=1e-12):
    m = np.asarray(R, dtype=float)
    if m.shape[-2:] != (3, 3):
        raise InvalidArgumentError(f"{name} must be 3x3, got {m.shape}")
    err = np.linalg.norm(np.swapaxes(m, -1, -2) @ m - np.eye(3), axis=(-2, -1))
    if np.any(err > tol) or np.any(np.abs(np.linalg.det(m) - 1.0) > tol):
        raise InvalidArgumentError(f"{name} is not a rotation within {tol:g}")
    return m


def check_frame(xi, eta, tol=1e-10):
    """Unit vectors ``xi`` and ``eta`` with ``<xi, eta> = 0``."""
    xi = check_unit_vector(xi, "xi", tol=1e-10)
    eta = check_unit_vector(eta, "eta", tol=1e-10)
    if abs(xi @ eta) > tol:
        raise InvalidArgumentError("frame vectors are not orthogonal")
    return xi, eta


def check_times(t, name="times", min_len=2):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < min_len:
        raise InvalidArgumentError(f"{name} must be 1-d with at least {min_len} entries")
    if not np.all(np.diff(t) > 0):
        raise InvalidArgumentError(f"{name} must be strictly increasing")
    return t


def check_positive(x, name):
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a positive number, got {x!r}") from None
    if not np.isfinite(x) or x <= 0:
        raise InvalidArgumentError(f"{name} must be positive, got {x!r}")
    return x


def readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a
