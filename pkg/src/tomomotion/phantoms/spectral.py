"""Blob phantoms with closed-form Fourier transforms.

Fourier convention: ``f^(k) = (2 pi)^(-3/2) int f(x) exp(-i <x, k>) dx``.
A phantom is ``f(x) = sum_j w_j psi(x - p_j)`` with a radial blob ``psi``, so
``f^(k) = psi^(k) S(k)`` with the phase sum ``S(k) = sum_j w_j exp(-i <p_j, k>)``.
"""

import hashlib
import json
from dataclasses import dataclass
from math import factorial
from typing import NamedTuple

import numpy as np
from scipy.special import spherical_jn

from .._validation import check_positive, readonly
from ..errors import InvalidArgumentError, ParseError, SupportViolationError

FORMAT_VERSION = 1
GAUSS_TRUNCATION = 6.0
MOMENT_TOL = 1e-12
_SQRT_2_PI = np.sqrt(2.0 / np.pi)


def _double_factorial(n):
    return float(np.prod(np.arange(n, 0, -2))) if n > 0 else 1.0


def _jn_over_xn(n, x):
    """``j_n(x) / x^n`` with a series near the origin."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 2.0
    xs = x[small]
    acc = np.zeros_like(xs)
    term_x = np.ones_like(xs)
    for k in range(24):
        acc += (-1) ** k * term_x / (2.0**k * factorial(k) * _double_factorial(2 * n + 2 * k + 1))
        term_x = term_x * xs * xs
    out[small] = acc
    xl = x[~small]
    out[~small] = spherical_jn(n, xl) / xl**n
    return out


class SpectralDerivatives(NamedTuple):
    """``f^`` and its derivatives at one or many wavenumbers (trailing axes)."""

    value: np.ndarray
    grad: np.ndarray = None
    hess: np.ndarray = None
    third: np.ndarray = None


@dataclass(frozen=True)
class BlobProfile:
    """Radial blob: ``gaussian`` (``exp(-|x|^2 / 2 size^2)``) or ``ball`` indicator of radius ``size``."""

    kind: str
    size: float

    def __post_init__(self):
        if self.kind not in ("gaussian", "ball"):
            raise InvalidArgumentError("blob kind must be 'gaussian' or 'ball'")
        object.__setattr__(self, "size", check_positive(self.size, "blob size"))

    @property
    def extent(self):
        """Radius beyond which the blob is treated as zero."""
        return self.size * (GAUSS_TRUNCATION if self.kind == "gaussian" else 1.0)

    def radial(self, s, order=0):
        """Derivatives ``G^(0..order)`` of ``G(s) = psi^(k)`` with ``s = |k|^2 / 2``."""
        s = np.asarray(s, dtype=float)
        e = self.size
        if self.kind == "gaussian":
            base = e**3 * np.exp(-e * e * s)
            return [base * (-e * e) ** n for n in range(order + 1)]
        # ball: psi^ = sqrt(2/pi) e^3 H(u), H(u) = j1(x)/x, u = x^2 = 2 e^2 s
        x = np.sqrt(2.0 * s) * e
        c = _SQRT_2_PI * e**3
        out = []
        for n in range(order + 1):
            # d^n/du^n [j1(x)/x] = (-1/2)^n j_{n+1}(x) / x^(n+1)
            Hn = (-0.5) ** n * _jn_over_xn(n + 1, x)
            out.append(c * (2.0 * e * e) ** n * Hn)
        return out

    def density(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "gaussian":
            # truncated at the extent so rasterized objects have compact support
            return np.where(r < self.extent, np.exp(-0.5 * (r / self.size) ** 2), 0.0)
        return (r < self.size).astype(float)

    def to_dict(self):
        return {"kind": self.kind, "size": self.size}


def _sym3(A, v):
    """``A_ab v_c + A_ac v_b + A_bc v_a`` with broadcasting over leading axes."""
    return (np.einsum("...ab,...c->...abc", A, v) + np.einsum("...ac,...b->...abc", A, v)
            + np.einsum("...bc,...a->...abc", A, v))


def blob_sum_spectral(points, weights, profile, kappa, order=0):
    """Closed-form derivatives of ``psi^(k) sum_j w_j exp(-i <p_j, k>)``."""
    k = np.asarray(kappa, dtype=float)
    P = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if order not in (0, 1, 2, 3):
        raise InvalidArgumentError("order must be 0..3")
    G = profile.radial(0.5 * np.einsum("...i,...i->...", k, k), order)
    E = w * np.exp(-1j * (k @ P.T))  # (..., N)
    S0 = E.sum(-1)
    val = G[0] * S0
    if order == 0:
        return SpectralDerivatives(val)
    I = np.eye(3)
    S1 = -1j * (E @ P)
    G1 = G[1][..., None] * k
    grad = G1 * S0[..., None] + G[0][..., None] * S1
    if order == 1:
        return SpectralDerivatives(val, grad)
    S2 = -np.einsum("...j,ja,jb->...ab", E, P, P)
    kk = np.einsum("...a,...b->...ab", k, k)
    G2 = G[2][..., None, None] * kk + G[1][..., None, None] * I
    outer = np.einsum("...a,...b->...ab", G1, S1)
    hess = G2 * S0[..., None, None] + outer + np.swapaxes(outer, -1, -2) + G[0][..., None, None] * S2
    if order == 2:
        return SpectralDerivatives(val, grad, hess)
    S3 = 1j * np.einsum("...j,ja,jb,jc->...abc", E, P, P, P)
    kkk = np.einsum("...ab,...c->...abc", kk, k)
    Iden = np.broadcast_to(I, k.shape[:-1] + (3, 3))
    G3 = G[3][..., None, None, None] * kkk + G[2][..., None, None, None] * _sym3(Iden, k)
    third = (G3 * S0[..., None, None, None] + _sym3(G2.astype(complex), S1) + _sym3(S2, G1)
             + G[0][..., None, None, None] * S3)
    return SpectralDerivatives(val, grad, hess, third)


class _SpectralObject:
    """Shared helpers of analytic objects with ``spectral`` and ``density``."""

    def spectral_eval(self, kappa, order=0):
        return self.spectral(kappa, order)

    def __add__(self, other):
        return CompositePhantom(_components(self) + _components(other))

    def content_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _components(obj):
    return list(obj.components) if isinstance(obj, CompositePhantom) else [obj]


@dataclass(frozen=True, eq=False)
class Phantom(_SpectralObject):
    """Weighted blob sum ``sum_j w_j psi(x - p_j)`` inside the ball of radius ``support_radius``."""

    points: np.ndarray
    weights: np.ndarray
    profile: BlobProfile
    support_radius: float = 1.0
    check_moments: bool = True

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if P.ndim != 2 or P.shape[1] != 3 or w.shape != (len(P),):
            raise InvalidArgumentError("points must be (n, 3) and weights (n,)")
        if np.any(w == 0):
            raise InvalidArgumentError("weights must be nonzero")
        reach = np.linalg.norm(P, axis=1) + self.profile.extent
        if np.any(reach > self.support_radius):
            raise SupportViolationError(
                f"blob support reaches {reach.max():.4g} > support radius {self.support_radius:.4g}")
        if self.check_moments:
            m = np.linalg.norm(w @ P)
            if m > MOMENT_TOL * max(1.0, np.abs(w).max() * np.linalg.norm(P, axis=1).max()):
                raise InvalidArgumentError(f"first moment {m:.3g} does not vanish; balance the weights")
        object.__setattr__(self, "points", readonly(P))
        object.__setattr__(self, "weights", readonly(w))

    def spectral(self, kappa, order=0):
        return blob_sum_spectral(self.points, self.weights, self.profile, kappa, order)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for p, w in zip(self.points, self.weights):
            out += w * self.profile.density(np.linalg.norm(x - p, axis=-1))
        return out

    def first_moment(self):
        """``int x f(x) dx``, exact for radial blobs: ``int psi * sum_j w_j p_j``."""
        mass = float(self.profile.radial(np.zeros(1))[0][0]) * (2 * np.pi) ** 1.5
        return mass * (self.weights @ self.points)

    def reflect(self, normal):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        Pm = self.points - 2.0 * np.outer(self.points @ n, n)
        return Phantom(Pm, self.weights, self.profile, self.support_radius, self.check_moments)

    def transformed(self, A):
        """Phantom ``x -> f(A^T x)`` for an orthogonal ``A`` (points mapped by ``A``)."""
        return Phantom(self.points @ np.asarray(A, dtype=float).T, self.weights, self.profile,
                       self.support_radius, self.check_moments)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "type": "phantom",
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
            "profile": self.profile.to_dict(),
            "support_radius": self.support_radius,
        }


@dataclass(frozen=True, eq=False)
class CompositePhantom(_SpectralObject):
    """Sum of phantoms with possibly different blob profiles."""

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise InvalidArgumentError("composite phantom needs components")

    @property
    def support_radius(self):
        return max(c.support_radius for c in self.components)

    def spectral(self, kappa, order=0):
        parts = [c.spectral(kappa, order) for c in self.components]
        return SpectralDerivatives(*[None if parts[0][i] is None else sum(p[i] for p in parts)
                                     for i in range(4)])

    def density(self, x):
        return sum(c.density(x) for c in self.components)

    def first_moment(self):
        return sum(c.first_moment() for c in self.components)

    def reflect(self, normal):
        return CompositePhantom([c.reflect(normal) for c in self.components])

    def transformed(self, A):
        return CompositePhantom([c.transformed(A) for c in self.components])

    def to_dict(self):
        return {"format_version": FORMAT_VERSION, "type": "composite",
                "components": [c.to_dict() for c in self.components]}


def phantom_from_dict(d):
    try:
        if d.get("format_version") != FORMAT_VERSION:
            raise ParseError(f"unsupported phantom format version {d.get('format_version')!r}")
        if d["type"] == "composite":
            return CompositePhantom([phantom_from_dict(c) for c in d["components"]])
        if d["type"] != "phantom":
            raise ParseError(f"unknown phantom type {d['type']!r}")
        prof = BlobProfile(**d["profile"])
        return Phantom(np.array(d["points"]), np.array(d["weights"]), prof, float(d["support_radius"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed phantom document: {exc}") from exc


def load_phantom(path):
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    return phantom_from_dict(d)
