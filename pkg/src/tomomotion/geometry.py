"""Measurement geometry shared by the forward models and the symmetry tests."""

import numpy as np


def dt_height(mu, k0):
    """Hemisphere height ``h(mu) = sqrt(k0^2 - mu^2) - k0``."""
    mu = np.asarray(mu, dtype=float)
    return np.sqrt(k0 * k0 - mu * mu) - k0


def dt_height_gradient(k, k0, order=1):
    """Derivatives of ``g(k) = sqrt(k0^2 - |k|^2)`` w.r.t. the 2-vector ``k``.

    Returns ``[Dg, D2g, D3g]`` up to ``order`` with shapes ``(..., 2)``,
    ``(..., 2, 2)`` and ``(..., 2, 2, 2)``. ``h(|k|) = g(k) - k0`` shares them.
    """
    k = np.asarray(k, dtype=float)
    g = np.sqrt(k0 * k0 - np.einsum("...i,...i->...", k, k))
    out = [-k / g[..., None]]
    if order >= 2:
        I = np.eye(2)
        kk = np.einsum("...a,...b->...ab", k, k)
        out.append(-I / g[..., None, None] - kk / g[..., None, None] ** 3)
    if order >= 3:
        I = np.eye(2)
        sym = (np.einsum("ab,...c->...abc", I, k) + np.einsum("ac,...b->...abc", I, k)
               + np.einsum("bc,...a->...abc", I, k))
        kkk = np.einsum("...a,...b,...c->...abc", k, k, k)
        out.append(-sym / g[..., None, None, None] ** 3 - 3 * kkk / g[..., None, None, None] ** 5)
    return out


def lift(k, model, k0=None):
    """Map detector frequencies ``k`` (..., 2) to 3-d points before rotation."""
    k = np.asarray(k, dtype=float)
    if model == "PB":
        third = np.zeros(k.shape[:-1])
    else:
        third = dt_height(np.linalg.norm(k, axis=-1), k0)
    return np.concatenate([k, third[..., None]], axis=-1)


def orthonormal_complement(v):
    """Two unit vectors completing ``v`` to a right-handed orthonormal basis."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    a = np.eye(3)[np.argmin(np.abs(v))]
    u1 = np.cross(v, a)
    u1 /= np.linalg.norm(u1)
    return u1, np.cross(v, u1)
