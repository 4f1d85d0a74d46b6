"""Per-step angular velocity from the infinitesimal common circle equation (DT).

For an azimuth ``phi`` and ``u = (rho phi, zeta)`` the equation reads
``d_t m(t, mu phi) = (mu zeta - h(mu) rho) <grad_k m(t, mu phi), phi_perp>``
for all sampled ``mu``; it is linear in the real unknowns ``(zeta, rho)``.
"""

import numpy as np

from .. import geometry
from ..errors import InsufficientDataError
from ..forward.measure import radial_points
from ..so3 import to_cylindrical
from .common import (
    StepEstimate,
    azimuth_search,
    batched_lstsq,
    check_sanity,
    phi_candidates,
    stack_complex,
)


def _model(jets):
    cfg = getattr(jets, "cfg", None)
    if cfg is None or cfg.model != "DT" or not len(cfg.samples):
        raise InsufficientDataError("DT solver needs a DT model config with mu samples on the jet provider")
    return cfg


def dt_system(jets, t_index, phis):
    """Complex rows ``A (n_phi, n_mu, 2)`` for ``(zeta, rho)`` and targets ``y (n_phi, n_mu)``."""
    cfg = _model(jets)
    mu = cfg.sample_array
    phis = np.atleast_1d(phis)
    j = jets.jets(t_index, radial_points(phis, mu), ("dt", "grad"))
    perp = np.stack([-np.sin(phis), np.cos(phis)], axis=-1)
    G = np.einsum("pma,pa->pm", j.grad, perp)
    h = geometry.dt_height(mu, cfg.k0)
    A = np.stack([mu * G, -h * G], axis=-1)
    return A, j.dt


def _solver(jets, t_index):
    def solve(phis):
        A, y = dt_system(jets, t_index, phis)
        Ar, yr = stack_complex(A, y)
        x, res, sv = batched_lstsq(Ar, yr)
        return x, res, sv, (np.linalg.norm(yr, axis=-1), np.linalg.norm(Ar, axis=(-2, -1)))
    return solve


def _omega(phi, x):
    zeta, rho = x
    return np.array([rho * np.cos(phi), rho * np.sin(phi), zeta])


def _same(phi_a, xa, phi_b, xb):
    wa, wb = _omega(phi_a, xa), _omega(phi_b, xb)
    return np.linalg.norm(wa - wb) <= 1e-3 * (1 + np.linalg.norm(wa))


def dt_recover_step(jets, t_index, cfg):
    """Estimate ``omega(t)`` at one step from DT jets along radial lines."""
    found = azimuth_search(_solver(jets, t_index), cfg, _same)
    check_sanity(found["residual"], cfg)
    phi, x, sv = found["phi"], found["x"], found["sv"]
    omega = _omega(phi, x)
    ambiguity = "unique"
    # a vanishing singular value at the optimum leaves a whole family (rho phi, zeta)
    rank_deficient = sv[-1] / found["scale"] <= cfg.residual_tol
    low = [p for p, xg in zip(phi_candidates(cfg.phi_grid), found["grid_x"])
           if p in found["low"] and not _same(phi, x, p, xg)]
    if rank_deficient or low:
        ambiguity = "planar-family"
    elif found["ratio"] < cfg.ambiguity_ratio:
        ambiguity = "degenerate"
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    return StepEstimate(omega, found["residual"], ambiguity, cond, phi=phi, zeta=float(x[0]),
                        rho=float(x[1]), ratio=found["ratio"], profile=found["profile"])


def dt_residual(jets, t_index, omega, cfg):
    """Normalized residual of the DT equation at a given angular velocity ``u``.

    Uses the same normalization as :func:`dt_recover_step` (rms data scale
    over the azimuth grid of ``cfg``).
    """
    phis = phi_candidates(cfg.phi_grid)
    A, y = dt_system(jets, t_index, phis)
    Ar, yr = stack_complex(A, y)
    scale = np.sqrt(np.mean(np.linalg.norm(yr, axis=-1) ** 2)) + np.sqrt(
        np.mean(np.linalg.norm(Ar, axis=(-2, -1)) ** 2))
    c = to_cylindrical(np.asarray(omega, dtype=float))
    A1, y1 = dt_system(jets, t_index, np.array([c.phi]))
    Ar1, yr1 = stack_complex(A1, y1)
    r = np.linalg.norm(Ar1[0] @ np.array([c.zeta, c.rho]) - yr1[0])
    return float(r / (scale if scale > 0 else 1.0))
