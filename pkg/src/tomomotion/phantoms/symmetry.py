"""DT/PB symmetry residuals, mirror symmetrization and slice centres."""

import numpy as np
from scipy.ndimage import map_coordinates

from .. import geometry
from .._validation import check_frame, check_positive, check_unit_vector
from ..errors import InvalidArgumentError
from .pointsets import fibonacci_sphere
from .spectral import CompositePhantom, Phantom


def _model(model):
    m = str(model).upper()
    if m not in ("DT", "PB"):
        raise InvalidArgumentError("model must be 'DT' or 'PB'")
    return m


def _residual_points(xi, eta, nu, model, k0, samples, lam_max):
    if model == "DT":
        mu = np.linspace(-0.9 * k0, 0.9 * k0, samples)
        kap = mu[:, None] * xi + geometry.dt_height(mu, k0)[:, None] * eta
        return kap, np.cross(kap, nu)
    lam = np.linspace(-lam_max, lam_max, samples)
    return lam[:, None] * xi, np.broadcast_to(eta, (samples, 3))


def symmetry_residual(ph, frame, model="PB", k0=None, samples=201, lam_max=20.0):
    """Largest |directional derivative| of ``f^`` along the symmetry test curve.

    PB: ``max_lam |<grad f^(lam xi), eta>|`` for ``lam`` in ``[-lam_max, lam_max]``.
    DT: ``max_mu |<grad f^(mu xi + h(mu) eta), (mu xi + h(mu) eta) x nu>|`` for
    ``|mu| <= 0.9 k0``. ``frame`` is ``(xi, eta)`` or ``(xi, eta, nu)``.
    """
    model = _model(model)
    xi, eta = check_frame(frame[0], frame[1])
    nu = None
    if model == "DT":
        if len(frame) < 3:
            raise InvalidArgumentError("DT residual needs a third frame vector nu")
        nu = check_unit_vector(frame[2], "nu", tol=1e-10)
        k0 = check_positive(k0, "k0")
    kap, direction = _residual_points(xi, eta, nu, model, k0, samples, lam_max)
    g = ph.spectral(kap, 1).grad
    return float(np.abs(np.einsum("ij,ij->i", g, direction)).max())


def random_frames(n, seed=0):
    """``n`` frames ``(xi, eta, nu)``: ``xi`` on a Fibonacci lattice, the rest random."""
    rng = np.random.default_rng(seed)
    xi = fibonacci_sphere(n)
    a = rng.normal(size=(n, 3))
    eta = a - np.einsum("ij,ij->i", a, xi)[:, None] * xi
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    nu = rng.normal(size=(n, 3))
    nu /= np.linalg.norm(nu, axis=1, keepdims=True)
    return xi, eta, nu


def symmetry_margin(ph, model="PB", n_frames=10_000, k0=None, samples=101, lam_max=20.0, seed=0,
                    batch=256):
    """Smallest residual over a sweep of random frames (a reported, not proven, margin)."""
    model = _model(model)
    xi, eta, nu = random_frames(n_frames, seed)
    best = np.inf
    for s in range(0, n_frames, batch):
        sl = slice(s, s + batch)
        if model == "DT":
            mu = np.linspace(-0.9 * k0, 0.9 * k0, samples)
            kap = mu[None, :, None] * xi[sl, None] + geometry.dt_height(mu, k0)[None, :, None] * eta[sl, None]
            direction = np.cross(kap, nu[sl, None])
        else:
            lam = np.linspace(-lam_max, lam_max, samples)
            kap = lam[None, :, None] * xi[sl, None]
            direction = np.broadcast_to(eta[sl, None], kap.shape)
        g = ph.spectral(kap, 1).grad
        res = np.abs(np.einsum("fsi,fsi->fs", g, direction)).max(1)
        best = min(best, float(res.min()))
    return best


def mirror_symmetrize(ph, normal):
    """Add the mirror image of every blob across the plane orthogonal to ``normal``.

    Blobs lying on the mirror plane are merged with their image (doubled weight).
    """
    n = check_unit_vector(normal, "normal", tol=1e-10)
    if isinstance(ph, CompositePhantom):
        return CompositePhantom([mirror_symmetrize(c, n) for c in ph.components])
    P, w = ph.points, ph.weights
    Q = P - 2.0 * np.outer(P @ n, n)
    on_plane = np.linalg.norm(Q - P, axis=1) <= 1e-12
    pts = np.vstack([P, Q[~on_plane]])
    wts = np.concatenate([np.where(on_plane, 2 * w, w), w[~on_plane]])
    return Phantom(pts, wts, ph.profile, ph.support_radius, ph.check_moments)


def slice_center(obj, w, n=201, extent=None):
    """``F(w) = int_{E_w} x f(x) dS`` on the plane ``<x, w/|w|> = |w|``.

    Trapezoid rule on an ``n x n`` grid covering the support disc. ``obj`` is
    an analytic phantom (``density`` method) or a :class:`VoxelGrid`
    (trilinear interpolation).
    """
    w = np.asarray(w, dtype=float)
    r = np.linalg.norm(w)
    if w.shape != (3,) or r == 0:
        raise InvalidArgumentError("w must be a nonzero 3-vector")
    wh = w / r
    u1, u2 = geometry.orthonormal_complement(wh)
    R = obj.support_radius if extent is None else extent
    half = np.sqrt(max(R * R - r * r, 0.0))
    if half == 0:
        return np.zeros(3)
    s = np.linspace(-half, half, n)
    ds = s[1] - s[0]
    S1, S2 = np.meshgrid(s, s, indexing="ij")
    X = r * wh + S1[..., None] * u1 + S2[..., None] * u2
    f = obj.density(X)
    tw = np.ones(n)
    tw[0] = tw[-1] = 0.5
    W = np.outer(tw, tw) * ds * ds
    return np.einsum("ij,ij,ijk->k", W, f, X)


def voxel_density(grid, X, order=1):
    """Interpolated voxel values at points ``X`` (..., 3); zero outside the grid."""
    idx = (np.asarray(X) - grid.origin) / grid.spacing
    flat = idx.reshape(-1, 3).T
    vals = map_coordinates(grid.data, flat, order=order, mode="constant", cval=0.0)
    return vals.reshape(np.shape(X)[:-1])
