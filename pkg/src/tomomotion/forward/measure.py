"""DT and PB measurement synthesis, storage, noise and common-line checks.

Measurements are ``m(t, k) = f^(R(t) q(k))`` with ``q(k) = (k, 0)`` for
parallel beam and ``q(k) = (k, h(|k|))`` for diffraction tomography; the
physical prefactors of the diffraction theorem are dropped.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .. import geometry
from .._validation import check_positive
from ..errors import (
    DegeneratePairError,
    InvalidArgumentError,
    OutOfBandError,
    OutOfGridError,
    ParseError,
)

FORMAT_VERSION = 1
NORMALIZATION = "fourier-slice/diffraction theorem without physical prefactors, (2 pi)^(-3/2) transform"
BAND_FRACTION = 0.9


@dataclass(frozen=True)
class ModelConfig:
    """Measurement model, radial sample grid and derivative backend."""

    model: str = "PB"
    k0: float = None
    samples: tuple = ()
    backend: str = "analytic"
    dt: float = 1e-3
    dk: float = 1e-3

    def __post_init__(self):
        m = str(self.model).upper()
        object.__setattr__(self, "model", m)
        if m not in ("DT", "PB"):
            raise InvalidArgumentError("model must be 'DT' or 'PB'")
        s = np.asarray(self.samples, dtype=float).ravel()
        object.__setattr__(self, "samples", tuple(s.tolist()))
        if m == "DT":
            k0 = check_positive(self.k0, "k0")
            object.__setattr__(self, "k0", k0)
            if s.size and np.abs(s).max() > BAND_FRACTION * k0 + 1e-12:
                raise InvalidArgumentError("DT samples must satisfy |mu| <= 0.9 k0")
        if self.backend not in ("analytic", "fd"):
            raise InvalidArgumentError("backend must be 'analytic' or 'fd'")
        check_positive(self.dt, "dt")
        check_positive(self.dk, "dk")

    @property
    def sample_array(self):
        return np.asarray(self.samples, dtype=float)

    def lift(self, k):
        return geometry.lift(k, self.model, self.k0)

    def check_band(self, k):
        if self.model == "DT" and np.any(np.linalg.norm(k, axis=-1) >= self.k0):
            raise OutOfBandError("DT frequencies must satisfy |k| < k0")

    def to_dict(self):
        return {"model": self.model, "k0": self.k0, "samples": list(self.samples),
                "backend": self.backend, "dt": self.dt, "dk": self.dk}


def measure(obj, traj, cfg, t_index, k):
    """``m(t, k)`` at one time index for frequencies ``k`` of shape (..., 2)."""
    k = np.asarray(k, dtype=float)
    cfg.check_band(k)
    q = geometry.lift(k, cfg.model, cfg.k0)
    return obj.spectral(q @ traj.R[t_index].T, 0).value


class AnalyticDetector:
    """Re-measurement of an analytic object at arbitrary frequencies."""

    def __init__(self, obj, traj, cfg):
        self.obj, self.traj, self.cfg = obj, traj, cfg
        self.times = traj.times

    def values(self, t_index, k):
        return measure(self.obj, self.traj, self.cfg, t_index, k)


@dataclass
class MeasurementSet:
    """Values ``m(t_i, k_j)``; ``k_axes`` marks a Cartesian grid ``k = (kx[a], ky[b])``."""

    model: str
    times: np.ndarray
    values: np.ndarray
    k_points: np.ndarray = None
    k_axes: tuple = None
    k0: float = None
    noise: dict = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.model = str(self.model).upper()
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.k_axes is not None:
            kx, ky = (np.asarray(a, dtype=float) for a in self.k_axes)
            self.k_axes = (kx, ky)
            KX, KY = np.meshgrid(kx, ky, indexing="ij")
            self.k_points = np.stack([KX.ravel(), KY.ravel()], axis=1)
        self.k_points = np.asarray(self.k_points, dtype=float)
        if self.values.shape != (self.times.size, len(self.k_points)):
            raise InvalidArgumentError(
                f"values shape {self.values.shape} does not match ({self.times.size}, {len(self.k_points)})")

    def header(self):
        h = {
            "format_version": FORMAT_VERSION,
            "type": "measurement-set",
            "model": self.model,
            "k0": self.k0,
            "times": self.times.tolist(),
            "noise": self.noise,
            "provenance": self.provenance,
            "payload": {"dtype": "<f8", "layout": "complex as (re, im) pairs, time-major",
                        "shape": list(self.values.shape), "sha256": self.payload_hash()},
        }
        if self.k_axes is not None:
            h["k_axes"] = [a.tolist() for a in self.k_axes]
        else:
            h["k_points"] = self.k_points.tolist()
        return h

    def payload_bytes(self):
        v = np.empty(self.values.shape + (2,), dtype="<f8")
        v[..., 0], v[..., 1] = self.values.real, self.values.imag
        return v.tobytes()

    def payload_hash(self):
        return hashlib.sha256(self.payload_bytes()).hexdigest()

    def save(self, path):
        """Write the payload to ``path`` and the header to ``path.json``."""
        with open(path, "wb") as fh:
            fh.write(self.payload_bytes())
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.header(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        hp = str(path) + ".json"
        try:
            with open(hp) as fh:
                h = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read measurement header {hp}: {exc}") from exc
        try:
            if h["format_version"] != FORMAT_VERSION or h["type"] != "measurement-set":
                raise ParseError("unsupported measurement header version or type")
            shape = tuple(h["payload"]["shape"])
            digest = h["payload"]["sha256"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed measurement header: {exc}") from exc
        if not os.path.exists(path):
            raise ParseError(f"missing measurement payload {path}")
        raw = open(path, "rb").read()
        if len(raw) != 16 * int(np.prod(shape)) or hashlib.sha256(raw).hexdigest() != digest:
            raise ParseError("measurement payload does not match its header (size or hash)")
        v = np.frombuffer(raw, dtype="<f8").reshape(shape + (2,))
        kw = {"k_axes": h["k_axes"]} if "k_axes" in h else {"k_points": np.asarray(h["k_points"])}
        return cls(h["model"], np.asarray(h["times"]), v[..., 0] + 1j * v[..., 1], k0=h.get("k0"),
                   noise=h.get("noise"), provenance=h.get("provenance", {}), **kw)


def synthesize(obj, traj, cfg, k_points=None, k_axes=None, provenance=None):
    """Measure ``obj`` under ``traj`` on every time step and sample point."""
    if k_axes is not None:
        KX, KY = np.meshgrid(*k_axes, indexing="ij")
        K = np.stack([KX.ravel(), KY.ravel()], axis=1)
    else:
        K = np.asarray(k_points, dtype=float)
    vals = np.stack([measure(obj, traj, cfg, i, K) for i in range(len(traj))])
    prov = {"normalization": NORMALIZATION}
    if hasattr(obj, "content_hash"):
        prov["phantom_sha256"] = obj.content_hash()
    prov["trajectory_sha256"] = hashlib.sha256(np.ascontiguousarray(traj.R).tobytes()).hexdigest()
    prov["config"] = cfg.to_dict()
    prov.update(provenance or {})
    return MeasurementSet(cfg.model, traj.times, vals, k_points=None if k_axes is not None else K,
                          k_axes=k_axes, k0=cfg.k0, provenance=prov)


class GridDetector:
    """Bicubic spline interpolation of a Cartesian-grid :class:`MeasurementSet`."""

    def __init__(self, ms):
        if ms.k_axes is None:
            raise InvalidArgumentError("grid detector needs a Cartesian k grid")
        self.ms = ms
        self.times = ms.times
        self._cache = {}

    def _splines(self, t_index):
        if t_index not in self._cache:
            kx, ky = self.ms.k_axes
            V = self.ms.values[t_index].reshape(kx.size, ky.size)
            self._cache[t_index] = (RectBivariateSpline(kx, ky, V.real), RectBivariateSpline(kx, ky, V.imag))
            if len(self._cache) > 16:
                self._cache.pop(next(iter(self._cache)))
        return self._cache[t_index]

    def values(self, t_index, k):
        if not 0 <= t_index < self.times.size:
            raise OutOfGridError(f"time index {t_index} outside the sampled grid")
        k = np.asarray(k, dtype=float)
        kx, ky = self.ms.k_axes
        if (np.any(k[..., 0] < kx[0]) or np.any(k[..., 0] > kx[-1])
                or np.any(k[..., 1] < ky[0]) or np.any(k[..., 1] > ky[-1])):
            raise OutOfGridError("frequency outside the sampled k grid")
        sr, si = self._splines(t_index)
        flat = k.reshape(-1, 2)
        out = sr.ev(flat[:, 0], flat[:, 1]) + 1j * si.ev(flat[:, 0], flat[:, 1])
        return out.reshape(k.shape[:-1])


class PointDetector:
    """Exact lookup of stored sample points (no interpolation)."""

    def __init__(self, ms, decimals=12):
        self.ms, self.times, self.decimals = ms, ms.times, decimals
        keys = np.round(ms.k_points, decimals)
        self._index = {tuple(r): j for j, r in enumerate(keys)}

    def values(self, t_index, k):
        k = np.asarray(k, dtype=float)
        if not 0 <= t_index < self.times.size:
            raise OutOfGridError(f"time index {t_index} outside the sampled grid")
        try:
            idx = [self._index[tuple(r)] for r in np.round(k.reshape(-1, 2), self.decimals)]
        except KeyError as exc:
            raise OutOfGridError(f"frequency {exc.args[0]} not among the stored samples") from None
        return self.ms.values[t_index, idx].reshape(k.shape[:-1])


# keyed noise -----------------------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _M64
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _M64
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _M64
    return x ^ (x >> np.uint64(31))


def keyed_normal(seed, t_index, sample_key):
    """Standard complex normals (``E|z|^2 = 1``) keyed by ``(seed, t_index, sample_key)``.

    Counter based, so any subset of samples can be generated independently
    and in any order with identical results.
    """
    with np.errstate(over="ignore"):
        key = _splitmix(np.uint64(seed) ^ _splitmix(np.uint64(t_index) + np.uint64(0x632BE59BD9B4E019)))
        s = _splitmix(np.asarray(sample_key, dtype=np.uint64) ^ key)
        a = _splitmix(s)
        b = _splitmix(a)
    u1 = ((a >> np.uint64(11)).astype(float) + 0.5) / 2.0**53
    u2 = ((b >> np.uint64(11)).astype(float) + 0.5) / 2.0**53
    r = np.sqrt(-np.log(u1))  # E r^2 = 1
    return r * np.exp(2j * np.pi * u2)


def add_noise(ms, level, seed):
    """Copy of ``ms`` with complex Gaussian noise of std ``level * rms(|values|)``."""
    level = float(level)
    if level < 0 or not np.isfinite(level):
        raise InvalidArgumentError("noise level must be >= 0")
    sigma = level * float(np.sqrt(np.mean(np.abs(ms.values) ** 2)))
    vals = ms.values.copy()
    if level > 0:
        idx = np.arange(vals.shape[1], dtype=np.uint64)
        for i in range(vals.shape[0]):
            vals[i] += sigma * keyed_normal(seed, i, idx)
    rec = {"level": level, "seed": int(seed), "sigma": sigma, "generator": "splitmix64 keyed Box-Muller"}
    return MeasurementSet(ms.model, ms.times, vals, k_points=None if ms.k_axes else ms.k_points,
                          k_axes=ms.k_axes, k0=ms.k0, noise=rec, provenance=dict(ms.provenance))


class NoisyDetector:
    """Detector with keyed noise; the sample key is derived from the bits of ``k``."""

    def __init__(self, detector, sigma, seed):
        self.detector, self.sigma, self.seed = detector, float(sigma), int(seed)
        self.cfg = getattr(detector, "cfg", None)
        self.times = detector.times

    def values(self, t_index, k):
        k = np.ascontiguousarray(np.asarray(k, dtype=float))
        v = self.detector.values(t_index, k)
        if self.sigma == 0:
            return v
        bits = k.view(np.uint64).reshape(k.shape[:-1] + (2,))
        with np.errstate(over="ignore"):
            key = _splitmix(bits[..., 0]) ^ (bits[..., 1] * np.uint64(0xD1342543DE82EF95))
        return v + self.sigma * keyed_normal(self.seed, t_index, key)


# common lines ----------------------------------------------------------------

def common_line_directions(traj, s_index, t_index, tol=1e-12):
    """Unit in-plane directions ``(d_t, d_s)`` of the common line of two PB slices."""
    e3 = np.array([0.0, 0.0, 1.0])
    Rs, Rt = traj.R[s_index], traj.R[t_index]
    c = np.linalg.norm(np.cross(Rt @ e3, Rs @ e3))
    if c <= tol:
        raise DegeneratePairError("slices are parallel; the common line is undefined")
    dt_ = np.cross(e3, Rt.T @ Rs @ e3)[:2] / c
    ds_ = np.cross(e3, Rs.T @ Rt @ e3)[:2] / c
    return dt_, ds_


def verify_common_line(detector, traj, s_index, t_index, lams):
    """``max_lam |m(t, lam d_t) - m(s, -lam d_s)|`` for a PB detector."""
    d_t, d_s = common_line_directions(traj, s_index, t_index)
    lams = np.asarray(lams, dtype=float)
    left = detector.values(t_index, lams[:, None] * d_t)
    right = detector.values(s_index, -lams[:, None] * d_s)
    return float(np.abs(left - right).max())


def radial_points(phis, samples):
    """Frequencies ``mu (cos phi, sin phi)`` with shape (n_phi, n_mu, 2)."""
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    d = np.stack([np.cos(phis), np.sin(phis)], axis=-1)
    return np.asarray(samples, dtype=float)[None, :, None] * d[:, None, :]
