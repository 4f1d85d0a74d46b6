"""Whole-trajectory recovery and scikit-learn style estimators."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import InsufficientDataError, InvalidArgumentError
from .common import SolverConfig, StepEstimate
from .dt import dt_recover_step
from .pb import (
    FirstOrderSeries,
    pb_coefficients,
    pb_first_order_step,
    pb_third_order_step,
    prefactor_scale,
    rho_sign_continuation,
)
from .result import RecoveryResult, integrate_omega


def _map(fn, items, n_jobs):
    # per-step solves are independent; results are collected in order
    if n_jobs is None or n_jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=int(n_jobs)) as pool:
        return list(pool.map(fn, items))


def _prefix(steps):
    """Length of the unflagged leading run of steps."""
    for i, s in enumerate(steps):
        if s.flagged:
            return i
    return len(steps)


def _recover_dt(jets, cfg, n_jobs):
    steps = _map(lambda i: dt_recover_step(jets, i, cfg), range(len(jets.times)), n_jobs)
    return steps, {}


def _recover_pb(jets, cfg, n_jobs, series=None):
    n = len(jets.times)
    first = _map(lambda i: pb_first_order_step(jets, i, cfg), range(n), n_jobs)
    if any(f.flagged for f in first):
        steps = []
        for f in first:
            rho = 0.0 if f.ambiguity == "rho-zero-family" else np.nan
            w = np.array([0.0, 0.0, f.zeta]) if rho == 0.0 else np.array([np.nan, np.nan, f.zeta])
            steps.append(StepEstimate(w, f.residual, f.ambiguity, np.nan, phi=f.phi, zeta=f.zeta,
                                      rho=rho, ratio=f.ratio, profile=f.profile))
        return steps, {}

    phi = np.array([f.phi for f in first])
    zeta = np.array([f.zeta for f in first])
    if series is None:
        series = FirstOrderSeries(jets.times, phi, zeta, one_sided=cfg.one_sided)

    def third(i):
        rows = pb_coefficients(jets, i, series, cfg)
        dphi, _ = series.derivatives(i)
        return pb_third_order_step(rows, cfg, prefactor_scale(zeta[i], dphi))

    out = _map(third, range(n), n_jobs)
    X1 = np.array([o[0] for o in out])
    X2 = np.array([o[1] for o in out])
    cond = np.array([o[2] for o in out])
    bad = cond > cfg.condition_max
    m = int(np.argmax(bad)) if bad.any() else n
    rho = np.full(n, np.nan)
    if m > 0:
        rho[:m] = rho_sign_continuation(X1[:m], X2[:m], cfg, phi[:m])
    # beyond the first degenerate step only |rho| is reported
    rho[m:] = np.sqrt(np.clip(X1[m:], 0, None))
    steps = []
    for i, f in enumerate(first):
        w = np.array([rho[i] * np.cos(phi[i]), rho[i] * np.sin(phi[i]), zeta[i]])
        steps.append(StepEstimate(w, f.residual, "degenerate" if bad[i] else "unique", float(cond[i]),
                                  phi=phi[i], zeta=zeta[i], rho=float(rho[i]), ratio=f.ratio, profile=f.profile))
    return steps, {"X1": X1, "X2": X2}


def recover_trajectory(jets, cfg=None, model=None, truth=None, substeps=4, n_jobs=None, series=None):
    """Recover ``omega`` on the jet time grid and integrate ``R`` with ``R(0) = I``.

    If a step is flagged the trajectory covers only the leading run of
    unflagged steps (``None`` if fewer than two); the flags stay in the
    per-step estimates. ``series`` optionally supplies exact first-order
    derivatives for the PB solver.
    """
    cfg = SolverConfig() if cfg is None else cfg
    model = model or getattr(getattr(jets, "cfg", None), "model", None)
    if model not in ("DT", "PB"):
        raise InvalidArgumentError(f"unknown model {model!r}")
    times = np.asarray(jets.times, dtype=float)
    if times.size < 2:
        raise InsufficientDataError("recovery needs at least two time steps")
    if model == "DT":
        steps, extras = _recover_dt(jets, cfg, n_jobs)
    else:
        steps, extras = _recover_pb(jets, cfg, n_jobs, series)
    res = RecoveryResult(model, times, steps, extras=extras)
    m = _prefix(steps)
    if m >= 2:
        res.trajectory = integrate_omega(times[:m], res.omega_hat[:m], substeps=substeps)
    if truth is not None:
        res.compare(truth, model)
    return res


class _RecoveryEstimator(BaseEstimator):
    _model = None

    def __init__(self, phi_grid=90, refine_iters=200, residual_tol=1e-8, ambiguity_ratio=10.0,
                 condition_max=1e6, sanity_bound=0.5, one_sided=True, substeps=4, n_jobs=None):
        self.phi_grid = phi_grid
        self.refine_iters = refine_iters
        self.residual_tol = residual_tol
        self.ambiguity_ratio = ambiguity_ratio
        self.condition_max = condition_max
        self.sanity_bound = sanity_bound
        self.one_sided = one_sided
        self.substeps = substeps
        self.n_jobs = n_jobs

    def solver_config(self):
        return SolverConfig(phi_grid=self.phi_grid, refine_iters=self.refine_iters,
                            residual_tol=self.residual_tol, ambiguity_ratio=self.ambiguity_ratio,
                            condition_max=self.condition_max, sanity_bound=self.sanity_bound,
                            one_sided=self.one_sided)

    def fit(self, X, y=None):
        """``X`` is a jet provider; ``y`` an optional ground-truth trajectory."""
        if not hasattr(X, "jets") or not hasattr(X, "times"):
            raise InvalidArgumentError("fit expects a jet provider with .jets() and .times")
        self.result_ = recover_trajectory(X, self.solver_config(), self._model, truth=y,
                                          substeps=self.substeps, n_jobs=self.n_jobs)
        self.times_ = self.result_.times
        self.omega_ = self.result_.omega_hat
        self.flagged_ = self.result_.flagged_steps
        return self

    def predict(self, times=None):
        """Recovered angular velocity at ``times`` (spline through the unflagged prefix)."""
        check_is_fitted(self, "result_")
        if times is None:
            return self.omega_.copy()
        m = _prefix(self.result_.steps)
        if m < 2:
            raise InsufficientDataError("no unflagged stretch of steps to interpolate")
        t = np.asarray(times, dtype=float)
        if t.min() < self.times_[0] or t.max() > self.times_[m - 1]:
            raise InvalidArgumentError("prediction times outside the recovered interval")
        return CubicSpline(self.times_[:m], self.omega_[:m], axis=0)(t)

    def rotations(self):
        check_is_fitted(self, "result_")
        tr = self.result_.trajectory
        return None if tr is None else tr.R


class CommonCircleEstimator(_RecoveryEstimator):
    """Angular velocity from diffraction-tomography data (common circles)."""

    _model = "DT"


class CommonLineEstimator(_RecoveryEstimator):
    """Angular velocity up to the mirror class from parallel-beam data (common lines)."""

    _model = "PB"
