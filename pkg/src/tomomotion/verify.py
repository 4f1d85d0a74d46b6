"""Desk-scale invariant checks grouped by scope; each check has a stable dotted name."""

import time
from functools import lru_cache

import numpy as np

from . import geometry
from .forward.jets import AnalyticJets, FiniteDifferenceJets
from .forward.measure import AnalyticDetector, ModelConfig, measure, verify_common_line
from .motions import MotionSpec, composite_trajectory, degenerate_motion
from .phantoms.pointsets import (
    balance_weights,
    dt_pointset_certificate,
    generate_asymmetric_pointset,
    pb_pointset_certificate,
    pointset_direction_witness,
)
from .phantoms.spectral import BlobProfile, Phantom
from .phantoms.symmetry import mirror_symmetrize, symmetry_residual
from .recovery.common import SolverConfig
from .recovery.dt import dt_recover_step, dt_residual
from .recovery.pb import (
    FirstOrderSeries,
    pb_coefficients,
    pb_coefficients_object,
    pb_first_order_residual,
    pb_first_order_step,
    pb_third_order_step,
    prefactor_scale,
)
from .so3 import (
    SIGMA,
    from_cylindrical,
    hat,
    motion_kinematics,
    nondegeneracy_certificate,
    phi_perp,
    rodrigues,
    sigma_velocity,
    to_cylindrical,
    vee,
)

SCOPES = ("kinematics", "phantoms", "forward", "recovery")
_SMOOTH = [{"poly": [0.6, 0.3]}, {"poly": [0.3], "sin": [[0.4, 2, 0]]}, {"poly": [1.0, -0.5]}]
DT_CFG = dict(model="DT", k0=20.0, samples=np.linspace(-18, 18, 25))
PB_CFG = dict(model="PB", samples=np.linspace(-15, 15, 31))


@lru_cache(maxsize=None)
def _phantom():
    P = np.asarray(generate_asymmetric_pointset(8, seed=1).points)
    return Phantom(P, balance_weights(P), BlobProfile("gaussian", 0.08))


@lru_cache(maxsize=None)
def _smooth(n=21):
    return MotionSpec("analytic-omega", {"omega": _SMOOTH}, n_steps=n).build()


def _random_omega(rng):
    a, b, c = rng.uniform(-2, 2, size=(3, 3))
    return (lambda s: a + b * np.sin(s) + c * s), (lambda s: b * np.cos(s) + c)


# kinematics ----------------------------------------------------------------------

def check_rodrigues():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        R = rodrigues(v, rng.uniform(-np.pi, np.pi))
        worst = max(worst, np.abs(R.T @ R - np.eye(3)).max(), abs(np.linalg.det(R) - 1), np.abs(R @ v - v).max())
    return worst <= 1e-13, f"max deviation {worst:.2e}"


def check_nondegeneracy_identity():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        w, wd = _random_omega(rng)
        tr = motion_kinematics(w, wd, np.linspace(0, 0.2, 21), substeps=4)
        i = int(rng.integers(21))
        c = nondegeneracy_certificate(tr, i)
        scale = 1 + np.linalg.norm(tr.omega[i]) ** 3 + np.linalg.norm(tr.omega_dot[i]) ** 1.5
        worst = max(worst, abs(c.det - c.cyl) / scale)
    return worst <= 1e-9, f"max |det - rho^2 (zeta + phi')| / scale = {worst:.2e}"


def check_rk4_constant_velocity():
    w = np.array([0.3, -0.5, 0.8])
    tr = motion_kinematics(lambda t: w, lambda t: np.zeros(3), np.linspace(0, 1, 41), substeps=2)
    n = np.linalg.norm(w)
    exact = np.stack([rodrigues(w / n, n * t) for t in tr.times])
    err = np.abs(tr.R - exact).max()
    return err <= 1e-8, f"max |R - exp(t [w])| = {err:.2e}"


def check_angular_velocity_definition():
    tr = _smooth()
    RtRd = np.swapaxes(tr.R, 1, 2) @ tr.Rdot
    err = max(np.abs(RtRd + np.swapaxes(RtRd, 1, 2)).max(), np.abs(vee(RtRd) - tr.omega).max(),
              np.abs(hat(tr.omega) - RtRd).max())
    return err <= 1e-12, f"max deviation {err:.2e}"


def check_sigma_conjugation():
    tr = _smooth()
    S = tr.sigma()
    RtRd = np.swapaxes(S.R, 1, 2) @ S.Rdot
    err = np.abs(vee(RtRd) - sigma_velocity(tr.omega)).max()
    err = max(err, np.abs(S.R - SIGMA @ tr.R @ SIGMA).max())
    return err <= 1e-12, f"max deviation {err:.2e}"


def check_cylindrical_roundtrip():
    rng = np.random.default_rng(2)
    v = rng.normal(size=(500, 3))
    c = to_cylindrical(v)
    err = np.abs(from_cylindrical(c) - v).max()
    ok = err <= 1e-14 and np.all((c.phi >= 0) & (c.phi < np.pi))
    return ok, f"max round-trip error {err:.2e}"


# phantoms --------------------------------------------------------------------------

def check_pointset_certificates():
    ok = all(dt_pointset_certificate(generate_asymmetric_pointset(8, seed=s).points)
             and pb_pointset_certificate(generate_asymmetric_pointset(8, seed=s).points) for s in (1, 2))
    return ok, "generated 8-point sets pass both certificates" if ok else "certificate failed"


def check_direction_witness():
    P = np.asarray(generate_asymmetric_pointset(8, seed=1).points)
    rng = np.random.default_rng(3)
    xi = rng.normal(size=(200, 3))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    miss = sum(pointset_direction_witness(P, x, m) is None for x in xi for m in ("DT", "PB"))
    return miss == 0, f"{miss} of {2 * len(xi)} directions without witness"


def check_balance_weights():
    P = np.asarray(generate_asymmetric_pointset(8, seed=1).points)
    w = balance_weights(P)
    res = np.linalg.norm(w @ P)
    return res <= 1e-12 and np.all(w != 0), f"moment residual {res:.2e}, min |w| {np.abs(w).min():.2e}"


def check_mirror_symmetry_residual():
    ph = _phantom()
    xi, eta = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    sym = mirror_symmetrize(ph, np.cross(xi, eta))
    # PB: derivative along eta vanishes on lam * xi; DT uses nu = xi
    r_pb = symmetry_residual(sym, (xi, np.cross(xi, eta)), "PB")
    r_dt = symmetry_residual(sym, (xi, eta, xi), "DT", k0=20.0)
    scale = np.abs(ph.spectral(np.zeros((1, 3)), 1).value).max()
    return max(r_pb, r_dt) <= 1e-12 * max(scale, 1), f"residuals PB {r_pb:.2e}, DT {r_dt:.2e}"


def check_spectral_gradient():
    ph = _phantom()
    rng = np.random.default_rng(4)
    k = rng.normal(size=(20, 3)) * 5
    h = 1e-5
    g = ph.spectral(k, 1).grad
    fd = np.stack([(ph.spectral(k + h * e, 0).value - ph.spectral(k - h * e, 0).value) / (2 * h)
                   for e in np.eye(3)], axis=-1)
    err = np.abs(g - fd).max() / np.abs(g).max()
    return err <= 1e-7, f"relative gradient error {err:.2e}"


# forward -------------------------------------------------------------------------------

def check_dt_ewald_sphere():
    ph, tr = _phantom(), _smooth()
    k0 = 20.0
    cfg = ModelConfig(**DT_CFG)
    rng = np.random.default_rng(5)
    k = rng.uniform(-12, 12, size=(40, 2))
    # independent hemisphere: height below the tangent plane, on the sphere around -k0 e3
    h = np.sqrt(k0**2 - np.sum(k**2, axis=1)) - k0
    q = np.concatenate([k, h[:, None]], axis=1)
    err = 0.0
    for i in (0, 10, 20):
        want = ph.spectral(q @ tr.R[i].T, 0).value
        err = max(err, np.abs(measure(ph, tr, cfg, i, k) - want).max())
    lifted = geometry.lift(k, "DT", k0)
    sphere = np.abs(np.linalg.norm(lifted + np.array([0, 0, k0]), axis=1) - k0).max()
    return err <= 1e-12 and sphere <= 1e-12, f"value deviation {err:.2e}, sphere deviation {sphere:.2e}"


def check_pb_fourier_slice_plane():
    ph, tr = _phantom(), _smooth()
    cfg = ModelConfig(**PB_CFG)
    k = np.random.default_rng(6).uniform(-15, 15, size=(40, 2))
    err = 0.0
    for i in (0, 20):
        want = ph.spectral(np.concatenate([k, np.zeros((40, 1))], axis=1) @ tr.R[i].T, 0).value
        err = max(err, np.abs(measure(ph, tr, cfg, i, k) - want).max())
    return err <= 1e-12, f"value deviation {err:.2e}"


def check_sigma_data_symmetry():
    ph, tr = _phantom(), _smooth()
    cfg = ModelConfig(**PB_CFG)
    k = np.random.default_rng(7).uniform(-15, 15, size=(40, 2))
    mirrored = ph.reflect([0, 0, 1])
    S = tr.sigma()
    err = max(np.abs(measure(ph, tr, cfg, i, k) - measure(mirrored, S, cfg, i, k)).max() for i in range(0, 21, 5))
    return err <= 1e-12, f"max |m(f, R) - m(f o Sigma, Sigma R Sigma)| = {err:.2e}"


def check_common_line_identity():
    ph, tr = _phantom(), _smooth()
    det = AnalyticDetector(ph, tr, ModelConfig(**PB_CFG))
    lams = np.linspace(-15, 15, 31)
    err = max(verify_common_line(det, tr, s, t, lams) for s, t in [(0, 10), (3, 20), (7, 14)])
    return err <= 1e-12, f"max common-line deviation {err:.2e}"


def check_jets_fd_consistency():
    ph = _phantom()
    fine = MotionSpec("analytic-omega", {"omega": _SMOOTH}, n_steps=201).build()
    cfg = ModelConfig(**DT_CFG)
    fd = FiniteDifferenceJets(AnalyticDetector(ph, fine, cfg), dk=1e-3, cfg=cfg)
    an = AnalyticJets(ph, fine, cfg)
    k = np.random.default_rng(8).uniform(-10, 10, size=(10, 2))
    err = 0.0
    for f in ("dt", "grad", "hess"):
        a = getattr(an.jets(100, k, (f,)), f)
        b = getattr(fd.jets(100, k, (f,)), f)
        err = max(err, np.abs(a - b).max() / np.abs(a).max())
    return err <= 1e-3, f"max relative FD/analytic deviation {err:.2e}"


# recovery -------------------------------------------------------------------------------

def check_dt_truth_residual():
    jets = AnalyticJets(_phantom(), _smooth(), ModelConfig(**DT_CFG))
    r = max(dt_residual(jets, i, _smooth().omega[i], SolverConfig()) for i in range(0, 21, 5))
    return r <= 1e-10, f"max normalized residual {r:.2e}"


def check_pb_truth_residual():
    tr = _smooth()
    jets = AnalyticJets(_phantom(), tr, ModelConfig(**PB_CFG))
    c = to_cylindrical(tr.omega)
    r = max(pb_first_order_residual(jets, i, c.phi[i], c.zeta[i], SolverConfig()) for i in range(0, 21, 5))
    return r <= 1e-10, f"max normalized residual {r:.2e}"


def check_coefficient_identity():
    tr, ph = _smooth(), _phantom()
    cfg = ModelConfig(**PB_CFG)
    jets, ser = AnalyticJets(ph, tr, cfg), FirstOrderSeries.from_trajectory(tr)
    err = 0.0
    for i in (0, 7, 14, 20):
        for a, b in zip(pb_coefficients(jets, i, ser), pb_coefficients_object(ph, tr, i, cfg.sample_array)):
            err = max(err, np.abs(a - b).max() / np.abs(b).max())
    return err <= 1e-8, f"max relative deviation {err:.2e}"


def check_dt_step_unique():
    w = np.array([0.6, 0.3, 1.0])
    tr = MotionSpec("analytic-omega", {"omega": list(w)}, n_steps=11).build()
    est = dt_recover_step(AnalyticJets(_phantom(), tr, ModelConfig(**DT_CFG)), 2, SolverConfig())
    err = np.linalg.norm(est.omega_hat - w)
    return est.ambiguity == "unique" and err <= 1e-6, f"{est.ambiguity}, error {err:.2e}, ratio {est.ratio:.2e}"


def check_mirror_planar_family():
    w = np.array([0.6, 0.3, 1.0])
    c = to_cylindrical(w)
    tr = MotionSpec("analytic-omega", {"omega": list(w)}, n_steps=11).build()
    sym = mirror_symmetrize(_phantom(), np.r_[phi_perp(c.phi), 0.0])
    est = dt_recover_step(AnalyticJets(sym, tr, ModelConfig(**DT_CFG)), 0, SolverConfig())
    return est.ambiguity == "planar-family", f"reported {est.ambiguity}"


def check_rho_zero_family():
    tr = MotionSpec("analytic-omega", {"omega": [0, 0, 2.0]}, n_steps=5, substeps=8).build()
    est = pb_first_order_step(AnalyticJets(_phantom(), tr, ModelConfig(**PB_CFG)), 2, SolverConfig())
    ok = est.ambiguity == "rho-zero-family" and abs(est.zeta - 2) <= 1e-6
    return ok, f"reported {est.ambiguity}, zeta {est.zeta:.12g}"


def check_degenerate_condition():
    tr = composite_trajectory(degenerate_motion(), np.linspace(0, 1, 11))
    ser = FirstOrderSeries.from_trajectory(tr)
    jets = AnalyticJets(_phantom(), tr, ModelConfig(**PB_CFG))
    cfg = SolverConfig()
    cond = min(pb_third_order_step(pb_coefficients(jets, i, ser), cfg,
                                   prefactor_scale(ser.zeta[i], ser.derivatives(i)[0]))[2] for i in (0, 5, 10))
    return cond > cfg.condition_max, f"min condition {cond:.2e} (limit {cfg.condition_max:.0e})"


CHECKS = {
    "kinematics": {
        "kinematics.rodrigues_orthogonal": check_rodrigues,
        "kinematics.nondegeneracy_identity": check_nondegeneracy_identity,
        "kinematics.rk4_constant_velocity": check_rk4_constant_velocity,
        "kinematics.angular_velocity_definition": check_angular_velocity_definition,
        "kinematics.sigma_conjugation": check_sigma_conjugation,
        "kinematics.cylindrical_roundtrip": check_cylindrical_roundtrip,
    },
    "phantoms": {
        "phantoms.pointset_certificates": check_pointset_certificates,
        "phantoms.direction_witness": check_direction_witness,
        "phantoms.balance_weights": check_balance_weights,
        "phantoms.mirror_symmetry_residual": check_mirror_symmetry_residual,
        "phantoms.spectral_gradient": check_spectral_gradient,
    },
    "forward": {
        "forward.dt_ewald_sphere": check_dt_ewald_sphere,
        "forward.pb_fourier_slice_plane": check_pb_fourier_slice_plane,
        "forward.sigma_data_symmetry": check_sigma_data_symmetry,
        "forward.common_line_identity": check_common_line_identity,
        "forward.jets_fd_consistency": check_jets_fd_consistency,
    },
    "recovery": {
        "recovery.dt_truth_residual": check_dt_truth_residual,
        "recovery.pb_truth_residual": check_pb_truth_residual,
        "recovery.coefficient_identity": check_coefficient_identity,
        "recovery.dt_step_unique": check_dt_step_unique,
        "recovery.mirror_planar_family": check_mirror_planar_family,
        "recovery.rho_zero_family": check_rho_zero_family,
        "recovery.degenerate_condition": check_degenerate_condition,
    },
}


def run_checks(scope="all"):
    """Run the checks of one scope (or all); exceptions count as failures."""
    scopes = SCOPES if scope == "all" else (scope,)
    out = []
    for sc in scopes:
        for name, fn in CHECKS[sc].items():
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crashing check is a failing check
                ok, detail = False, f"raised {type(exc).__name__}: {exc}"
            out.append({"name": name, "passed": bool(ok), "detail": detail,
                        "seconds": round(time.perf_counter() - t0, 3)})
    return out
