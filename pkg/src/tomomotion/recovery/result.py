"""Recovery results: integration of the recovered velocity, comparison with truth, JSON IO."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import ParseError
from ..so3 import MotionTrajectory, SIGMA, motion_kinematics, sigma_velocity
from .common import StepEstimate

FORMAT_VERSION = 1


def integrate_omega(times, omega, substeps=4):
    """Trajectory with ``R(0) = I`` from sampled ``omega`` (not-a-knot cubic spline, RK4)."""
    times = np.asarray(times, dtype=float)
    cs = CubicSpline(times, np.asarray(omega, dtype=float), axis=0)
    d1 = cs.derivative()
    return motion_kinematics(cs, d1, times, substeps=substeps)


def equivalence_distance(R_hat, R_true):
    """``min`` over ``{R, Sigma R Sigma}`` of ``max_t |R_hat(t) - branch(R(t))|_F``."""
    R_hat, R_true = np.asarray(R_hat), np.asarray(R_true)
    d_direct = float(np.linalg.norm(R_hat - R_true, axis=(1, 2)).max())
    d_sigma = float(np.linalg.norm(R_hat - SIGMA @ R_true @ SIGMA, axis=(1, 2)).max())
    return (d_direct, "direct") if d_direct <= d_sigma else (d_sigma, "sigma")


def _num(x):
    x = float(x)
    if np.isnan(x):
        return None
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _unnum(x):
    if x is None:
        return np.nan
    if isinstance(x, str):
        return float(x)
    return x


@dataclass
class RecoveryResult:
    """Per-step estimates, the integrated trajectory (possibly a prefix) and truth metrics."""

    model: str
    times: np.ndarray
    steps: list
    trajectory: MotionTrajectory = None
    equivalence_distance: float = None
    branch: str = None
    omega_error: float = None
    extras: dict = field(default_factory=dict)

    @property
    def omega_hat(self):
        return np.stack([s.omega_hat for s in self.steps])

    @property
    def flagged_steps(self):
        return [i for i, s in enumerate(self.steps) if s.flagged]

    @property
    def complete(self):
        return not self.flagged_steps and self.trajectory is not None and len(self.trajectory) == len(self.times)

    def compare(self, truth, model=None):
        """Fill in distances against a ground-truth trajectory on the same grid."""
        model = model or self.model
        if self.trajectory is None:
            return self
        n = len(self.trajectory)
        dist, branch = equivalence_distance(self.trajectory.R, truth.R[:n])
        if model == "DT":
            # DT data are not invariant under Sigma; compare with the direct branch only
            dist = float(np.linalg.norm(self.trajectory.R - truth.R[:n], axis=(1, 2)).max())
            branch = "direct"
        self.equivalence_distance, self.branch = dist, branch
        ref = truth.omega[:n] if branch == "direct" else sigma_velocity(truth.omega[:n])
        self.omega_error = float(np.linalg.norm(self.omega_hat[:n] - ref, axis=1).max())
        return self

    def to_dict(self):
        tr = self.trajectory
        return {
            "format_version": FORMAT_VERSION,
            "type": "recovery-result",
            "model": self.model,
            "times": self.times.tolist(),
            "steps": [{k: (_num(v) if isinstance(v, (float, np.floating)) else v)
                       for k, v in s.to_dict().items()} for s in self.steps],
            "trajectory": None if tr is None else {
                "times": tr.times.tolist(), "R": tr.R.reshape(len(tr), 9).tolist()},
            "equivalence_distance": None if self.equivalence_distance is None else _num(self.equivalence_distance),
            "branch": self.branch,
            "omega_error": None if self.omega_error is None else _num(self.omega_error),
            "extras": {k: [_num(x) for x in np.ravel(v)] for k, v in self.extras.items()},
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d):
        try:
            if d["format_version"] != FORMAT_VERSION or d["type"] != "recovery-result":
                raise ParseError("unsupported recovery result version or type")
            steps = []
            for s in d["steps"]:
                s = {k: _unnum(v) if k not in ("omega_hat", "ambiguity") else v for k, v in s.items()}
                steps.append(StepEstimate.from_dict(s))
            tr = None
            if d["trajectory"] is not None:
                R = np.asarray(d["trajectory"]["R"], dtype=float).reshape(-1, 3, 3)
                tr = MotionTrajectory(np.asarray(d["trajectory"]["times"]), R)
            eq = d.get("equivalence_distance")
            err = d.get("omega_error")
            return cls(d["model"], np.asarray(d["times"], dtype=float), steps, tr,
                       None if eq is None else _unnum(eq), d.get("branch"),
                       None if err is None else _unnum(err),
                       {k: np.array([_unnum(x) for x in v]) for k, v in d.get("extras", {}).items()})
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed recovery result: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read recovery result {path}: {exc}") from exc
        return cls.from_dict(d)
