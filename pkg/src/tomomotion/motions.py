"""Motion specifications built from smooth closed-form profiles."""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ._validation import check_times, check_unit_vector
from .errors import InvalidArgumentError
from .so3 import MotionTrajectory, hat, motion_kinematics, vee

KINDS = ("analytic-omega", "rodrigues-composite", "sampled")


@dataclass(frozen=True)
class Profile:
    """Scalar time function ``sum_k c_k t^k + sum_j a_j sin(f_j t + p_j)``."""

    poly: tuple = ()
    sines: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "poly", tuple(float(c) for c in self.poly))
        sines = tuple(tuple(float(v) for v in s) for s in self.sines)
        if any(len(s) != 3 for s in sines):
            raise InvalidArgumentError("each sine term needs (amplitude, frequency, phase)")
        object.__setattr__(self, "sines", sines)

    @classmethod
    def constant(cls, c):
        return cls(poly=(c,))

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, (int, float)):
            return cls.constant(d)
        unknown = set(d) - {"poly", "sin"}
        if unknown:
            raise InvalidArgumentError(f"unknown profile keys {sorted(unknown)}")
        return cls(poly=d.get("poly", ()), sines=d.get("sin", ()))

    def to_dict(self):
        return {"poly": list(self.poly), "sin": [list(s) for s in self.sines]}

    def __call__(self, t, order=0):
        """Value (``order=0``) or derivative of the given order at ``t``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for k, c in enumerate(self.poly):
            if k >= order:
                coef = c * np.prod(np.arange(k - order + 1, k + 1)) if order else c
                out = out + coef * t ** (k - order)
        for a, f, p in self.sines:
            # d^n/dt^n sin(ft+p) = f^n sin(ft+p+n pi/2)
            out = out + a * f**order * np.sin(f * t + p + order * np.pi / 2)
        return out


def _vector_profile(entries, name):
    if len(entries) != 3:
        raise InvalidArgumentError(f"{name} needs three component profiles")
    return tuple(Profile.from_dict(e) if not isinstance(e, Profile) else e for e in entries)


@dataclass(frozen=True)
class MotionSpec:
    """Description of a rotational motion on ``[t_start, t_end]``.

    ``analytic-omega``: ``params = {"omega": [p1, p2, p3]}`` component profiles.
    ``rodrigues-composite``: ``params = {"factors": [{"axis": v, "angle": p}, ...]}``
    giving ``R(t) = R_{v1}(a1(t)) R_{v2}(a2(t)) ...``.
    ``sampled``: ``params = {"times": [...], "omega": [[w1, w2, w3], ...]}``
    interpolated by a C2 cubic spline.
    """

    kind: str
    params: dict = field(default_factory=dict)
    t_start: float = 0.0
    t_end: float = 1.0
    n_steps: int = 101
    substeps: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"motion kind must be one of {KINDS}")
        if int(self.n_steps) < 2:
            raise InvalidArgumentError("n_steps must be >= 2")
        if not self.t_end > self.t_start:
            raise InvalidArgumentError("t_end must exceed t_start")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(kind=d.pop("kind"), params=d.pop("params", {}), **d)

    def to_dict(self):
        return {"kind": self.kind, "params": self.params, "t_start": self.t_start,
                "t_end": self.t_end, "n_steps": self.n_steps, "substeps": self.substeps}

    @property
    def grid(self):
        return np.linspace(self.t_start, self.t_end, int(self.n_steps))

    def omega_functions(self):
        """Callables ``(omega, omega_dot)`` for the kinds defined through w."""
        if self.kind == "analytic-omega":
            prof = _vector_profile(self.params["omega"], "omega")
            w = lambda t: np.array([p(t) for p in prof])
            wd = lambda t: np.array([p(t, 1) for p in prof])
            return w, wd
        if self.kind == "sampled":
            ts = check_times(self.params["times"])
            ws = np.asarray(self.params["omega"], dtype=float)
            if ws.shape != (ts.size, 3):
                raise InvalidArgumentError("sampled omega must have shape (len(times), 3)")
            cs = CubicSpline(ts, ws, bc_type="natural")
            d1 = cs.derivative()
            return (lambda t: cs(t)), (lambda t: d1(t))
        raise InvalidArgumentError("rodrigues-composite motions are defined through R(t)")

    def build(self, grid=None):
        """Sampled :class:`MotionTrajectory` on ``grid`` (default: the configured time grid)."""
        grid = self.grid if grid is None else check_times(grid)
        if self.kind == "rodrigues-composite":
            return composite_trajectory(self.params["factors"], grid)
        w, wd = self.omega_functions()
        return motion_kinematics(w, wd, grid, substeps=self.substeps)


def _factor_jets(axis, prof, t):
    """``F, F', F''`` for ``F = R_axis(a(t))`` on a batch of times."""
    K = hat(axis)
    a, ad, add = prof(t), prof(t, 1), prof(t, 2)
    c, s = np.cos(a)[:, None, None], np.sin(a)[:, None, None]
    F = c * np.eye(3) + s * K + (1 - c) * np.outer(axis, axis)
    Fd = ad[:, None, None] * (K @ F)
    Fdd = (add[:, None, None] * K + (ad**2)[:, None, None] * (K @ K)) @ F
    return F, Fd, Fdd


def composite_trajectory(factors, grid):
    """Exact ``R, R', R''`` of a product of Rodrigues factors."""
    t = check_times(grid)
    n = t.size
    R = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    Rd = np.zeros((n, 3, 3))
    Rdd = np.zeros((n, 3, 3))
    for fac in factors:
        axis = check_unit_vector(np.asarray(fac["axis"], dtype=float) / np.linalg.norm(fac["axis"]))
        prof = fac["angle"] if isinstance(fac["angle"], Profile) else Profile.from_dict(fac["angle"])
        F, Fd, Fdd = _factor_jets(axis, prof, t)
        # product rule for R <- R F
        R, Rd, Rdd = R @ F, Rd @ F + R @ Fd, Rdd @ F + 2 * Rd @ Fd + R @ Fdd
    RT = np.swapaxes(R, 1, 2)
    return MotionTrajectory(times=t, R=R, Rdot=Rd, Rddot=Rdd, omega=vee(RT @ Rd), omega_dot=vee(RT @ Rdd))


def degenerate_motion(axis_angle=0.4, rho=None, zeta=None):
    """Factors for ``R_v(rho(t)) R_e3(zeta(t))`` with ``v`` in the e1-e2 plane."""
    v = [np.cos(axis_angle), np.sin(axis_angle), 0.0]
    rho = rho or Profile(poly=(0.0, 0.6), sines=((0.2, 1.0, 0.0),))
    zeta = zeta or Profile(poly=(0.0, 1.1, 0.1))
    return [{"axis": v, "angle": rho}, {"axis": [0.0, 0.0, 1.0], "angle": zeta}]
