"""Solver configuration, per-step estimates and the azimuth search shared by all solvers."""

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize_scalar

from .._validation import check_positive
from ..errors import InvalidArgumentError, NoSolutionError

AMBIGUITIES = ("unique", "planar-family", "rho-zero-family", "degenerate")


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of the per-step solvers.

    ``residual_tol`` is the floor below which a normalized residual counts as
    zero (1e-8 suits analytic jets, 1e-4 finite differences);
    ``sanity_bound`` rejects steps whose best residual exceeds it.
    """

    phi_grid: int = 90
    refine_iters: int = 200
    residual_tol: float = 1e-8
    ambiguity_ratio: float = 10.0
    condition_max: float = 1e6
    sanity_bound: float = 0.5
    one_sided: bool = True
    x1_tol: float = 1e-8

    def __post_init__(self):
        if int(self.phi_grid) < 8:
            raise InvalidArgumentError("phi_grid must be >= 8")
        if int(self.refine_iters) < 1:
            raise InvalidArgumentError("refine_iters must be >= 1")
        for name in ("residual_tol", "condition_max", "sanity_bound", "x1_tol"):
            check_positive(getattr(self, name), name)
        if not self.ambiguity_ratio > 1:
            raise InvalidArgumentError("ambiguity_ratio must exceed 1")

    @classmethod
    def for_backend(cls, backend, **kw):
        kw.setdefault("residual_tol", 1e-8 if backend == "analytic" else 1e-4)
        return cls(**kw)

    def to_dict(self):
        return asdict(self)


@dataclass
class StepEstimate:
    """Result of one per-step solve; ``phi`` is the azimuth in [0, pi)."""

    omega_hat: np.ndarray
    residual: float
    ambiguity: str = "unique"
    condition: float = 1.0
    phi: float = np.nan
    zeta: float = np.nan
    rho: float = np.nan
    ratio: float = np.inf
    profile: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.ambiguity not in AMBIGUITIES:
            raise InvalidArgumentError(f"unknown ambiguity label {self.ambiguity!r}")

    @property
    def flagged(self):
        return self.ambiguity != "unique"

    def to_dict(self):
        return {"omega_hat": np.asarray(self.omega_hat, dtype=float).tolist(), "residual": self.residual,
                "ambiguity": self.ambiguity, "condition": self.condition, "phi": self.phi,
                "zeta": self.zeta, "rho": self.rho, "ratio": self.ratio}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["omega_hat"] = np.asarray(d["omega_hat"], dtype=float)
        return cls(**{k: (np.nan if v is None else v) for k, v in d.items()})


def stack_complex(A, y):
    """Real least-squares system from complex rows: ``[Re; Im]`` stacked on the row axis."""
    return np.concatenate([A.real, A.imag], axis=-2), np.concatenate([y.real, y.imag], axis=-1)


def batched_lstsq(A, y):
    """Least squares for stacks ``A (..., m, n)``, ``y (..., m)`` via QR.

    Returns ``(x, residual_norm, singular_values)``.
    """
    Q, R = np.linalg.qr(A)
    qty = np.einsum("...mi,...m->...i", Q, y)
    sv = np.linalg.svd(R, compute_uv=False)
    # rank-deficient stacks fall back to the minimum-norm solution
    x = np.einsum("...ij,...j->...i", np.linalg.pinv(R, rcond=1e-14), qty)
    res = np.linalg.norm(np.einsum("...mi,...i->...m", A, x) - y, axis=-1)
    return x, res, sv


def phi_candidates(n):
    return np.pi * np.arange(int(n)) / int(n)


def _circular_local_minima(r):
    return np.nonzero((r <= np.roll(r, 1)) & (r <= np.roll(r, -1)))[0]


def azimuth_search(solve, cfg, same_solution):
    """Coarse grid plus bounded scalar refinement of a residual over phi in [0, pi).

    ``solve(phis)`` returns ``(x, res, sv, scale_terms)`` for an array of
    azimuths, where ``scale_terms = (|y|, |A|_F)`` per azimuth; residuals are
    normalized by the rms of both terms over the grid so that they stay
    meaningful when the data vanish along one azimuth.
    ``same_solution(phi_a, x_a, phi_b, x_b)`` tells whether two candidates
    describe the same angular velocity (used for the ambiguity ratio).
    """
    phis = phi_candidates(cfg.phi_grid)
    x, res, sv, (ny, na) = solve(phis)
    scale = float(np.sqrt(np.mean(ny**2)) + np.sqrt(np.mean(na**2)))
    if scale == 0:
        scale = 1.0
    r = res / scale
    j = int(np.argmin(r))
    width = np.pi / cfg.phi_grid

    # refine the offset from the grid point so the tolerance is absolute, not relative to phi
    def objective(d):
        _, rr, _, _ = solve(np.array([np.mod(phis[j] + d, np.pi)]))
        return float((rr[0] / scale) ** 2)

    opt = minimize_scalar(objective, bounds=(-width, width), method="bounded",
                          options={"xatol": 1e-14, "maxiter": int(cfg.refine_iters)})
    phi = float(np.mod(phis[j] + opt.x, np.pi))
    xb, rb, svb, _ = solve(np.array([phi]))
    best = float(rb[0] / scale)
    if best > r[j]:
        phi, best, xb, svb = float(phis[j]), float(r[j]), x[j:j + 1], sv[j:j + 1]
    # second-best among local minima that describe a different angular velocity
    others = [i for i in _circular_local_minima(r)
              if min(abs(phis[i] - phi), np.pi - abs(phis[i] - phi)) > 1.5 * width
              and not same_solution(phi, xb[0], phis[i], x[i])]
    second = float(min(r[i] for i in others)) if others else np.inf
    ratio = second / best if best > 0 else np.inf
    return {"phi": phi, "x": xb[0], "residual": best, "sv": svb[0], "scale": scale,
            "ratio": ratio, "profile": (phis, r), "low": phis[r <= cfg.residual_tol], "grid_x": x}


def check_sanity(best, cfg):
    if best > cfg.sanity_bound:
        raise NoSolutionError(f"best normalized residual {best:.3g} exceeds the sanity bound "
                              f"{cfg.sanity_bound:g}; data inconsistent with the model")
