"""Measurement jets: ``m`` and its mixed derivatives in ``t`` and ``k``.

Field names: ``value``, ``dt`` (d/dt), ``grad`` (D_k), ``hess`` (D_k^2),
``third`` (D_k^3), ``dt_grad`` (d/dt D_k), ``dt_hess`` (d/dt D_k^2) and
``dtt_grad`` (d^2/dt^2 D_k). Arrays carry the leading shape of ``k``.
"""

from dataclasses import dataclass

import numpy as np

from .. import geometry
from ..errors import InsufficientDataError, InvalidArgumentError, OutOfGridError

FIELDS = ("value", "dt", "grad", "hess", "third", "dt_grad", "dt_hess", "dtt_grad")
_K_ORDER = {"value": 0, "dt": 0, "grad": 1, "hess": 2, "third": 3,
            "dt_grad": 1, "dt_hess": 2, "dtt_grad": 1}
_T_ORDER = {"value": 0, "dt": 1, "grad": 0, "hess": 0, "third": 0,
            "dt_grad": 1, "dt_hess": 1, "dtt_grad": 2}


@dataclass
class MeasurementJet:
    value: np.ndarray = None
    dt: np.ndarray = None
    grad: np.ndarray = None
    hess: np.ndarray = None
    third: np.ndarray = None
    dt_grad: np.ndarray = None
    dt_hess: np.ndarray = None
    dtt_grad: np.ndarray = None


def _fields(fields):
    fields = FIELDS if fields is None else tuple(fields)
    bad = set(fields) - set(FIELDS)
    if bad:
        raise InvalidArgumentError(f"unknown jet fields {sorted(bad)}")
    return fields


def _lift_jet(k, cfg):
    """``q(k)`` and its derivatives ``Dq (..,3,2)``, ``D2q (..,3,2,2)``, ``D3q (..,3,2,2,2)``."""
    lead = k.shape[:-1]
    q = geometry.lift(k, cfg.model, cfg.k0)
    Dq = np.zeros(lead + (3, 2))
    Dq[..., 0, 0] = Dq[..., 1, 1] = 1.0
    D2q = np.zeros(lead + (3, 2, 2))
    D3q = np.zeros(lead + (3, 2, 2, 2))
    if cfg.model == "DT":
        g1, g2, g3 = geometry.dt_height_gradient(k, cfg.k0, order=3)
        Dq[..., 2, :] = g1
        D2q[..., 2, :, :] = g2
        D3q[..., 2, :, :, :] = g3
    return q, Dq, D2q, D3q


class AnalyticJets:
    """Exact jets by the chain rule through ``R(t)``, ``R'(t)``, ``R''(t)`` and the lift.

    ``obj`` is anything with ``spectral(kappa, order)`` returning value,
    gradient, Hessian and third derivative tensors.
    """

    def __init__(self, obj, traj, cfg):
        if traj.Rdot is None or traj.Rddot is None:
            raise InsufficientDataError("analytic jets need R' and R'' on the trajectory")
        self.obj, self.traj, self.cfg = obj, traj, cfg
        self.times = traj.times

    def jets(self, t_index, k, fields=None):
        fields = _fields(fields)
        k = np.asarray(k, dtype=float)
        self.cfg.check_band(k)
        R, R1, R2 = self.traj.R[t_index], self.traj.Rdot[t_index], self.traj.Rddot[t_index]
        q, Dq, D2q, D3q = _lift_jet(k, self.cfg)
        order = max(_K_ORDER[f] + _T_ORDER[f] for f in fields)
        F = self.obj.spectral(q @ R.T, order)
        P1 = q @ R1.T
        P2 = q @ R2.T
        J = np.einsum("ij,...jb->...ib", R, Dq)
        J1 = np.einsum("ij,...jb->...ib", R1, Dq)
        J2 = np.einsum("ij,...jb->...ib", R2, Dq)
        H = np.einsum("ij,...jbc->...ibc", R, D2q)
        H1 = np.einsum("ij,...jbc->...ibc", R1, D2q)
        T = np.einsum("ij,...jbcd->...ibcd", R, D3q)
        out = MeasurementJet()
        if "value" in fields:
            out.value = F.value
        if "dt" in fields:
            out.dt = np.einsum("...i,...i->...", F.grad, P1)
        if "grad" in fields:
            out.grad = np.einsum("...i,...ia->...a", F.grad, J)
        if "hess" in fields:
            out.hess = (np.einsum("...ij,...ia,...jb->...ab", F.hess, J, J)
                        + np.einsum("...i,...iab->...ab", F.grad, H))
        if "third" in fields:
            F2H = np.einsum("...ij,...iab,...jc->...abc", F.hess, H, J)
            out.third = (np.einsum("...ijl,...ia,...jb,...lc->...abc", F.third, J, J, J)
                         + F2H + F2H.transpose(_perm(F2H, (0, 2, 1)))
                         + F2H.transpose(_perm(F2H, (2, 0, 1)))
                         + np.einsum("...i,...iabc->...abc", F.grad, T))
        if "dt_grad" in fields:
            out.dt_grad = (np.einsum("...ij,...i,...ja->...a", F.hess, P1, J)
                           + np.einsum("...i,...ia->...a", F.grad, J1))
        if "dt_hess" in fields:
            F2JJ1 = np.einsum("...ij,...ia,...jb->...ab", F.hess, J1, J)
            out.dt_hess = (np.einsum("...ijl,...i,...ja,...lb->...ab", F.third, P1, J, J)
                           + F2JJ1 + np.swapaxes(F2JJ1, -1, -2)
                           + np.einsum("...ij,...i,...jab->...ab", F.hess, P1, H)
                           + np.einsum("...i,...iab->...ab", F.grad, H1))
        if "dtt_grad" in fields:
            out.dtt_grad = (np.einsum("...ijl,...i,...j,...la->...a", F.third, P1, P1, J)
                            + np.einsum("...ij,...i,...ja->...a", F.hess, P2, J)
                            + 2 * np.einsum("...ij,...i,...ja->...a", F.hess, P1, J1)
                            + np.einsum("...i,...ia->...a", F.grad, J2))
        return out


def _perm(a, tail):
    """Axis permutation acting on the last three axes of ``a``."""
    n = a.ndim - 3
    return tuple(range(n)) + tuple(n + t for t in tail)


# finite differences ----------------------------------------------------------

# 4th-order central weights on offsets -3..3 for derivative orders 0..3
_K_WEIGHTS = np.array([
    [0, 0, 0, 1, 0, 0, 0],
    [0, 1, -8, 0, 8, -1, 0],
    [0, -1, 16, -30, 16, -1, 0],
    [1, -8, 13, 0, -13, 8, -1],
], dtype=float) / np.array([1, 12, 12, 8])[:, None]


def _time_stencil(i, n, order, one_sided):
    """Offsets and weights (in units of the step) for a 2nd-order time derivative."""
    if order == 0:
        return np.array([0]), np.array([1.0])
    if 1 <= i <= n - 2:
        if order == 1:
            return np.array([-1, 1]), np.array([-0.5, 0.5])
        return np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])
    if not one_sided:
        raise OutOfGridError(f"time stencil at index {i} leaves the sampled grid")
    s = 1 if i == 0 else -1
    if order == 1:
        off, w = np.array([0, 1, 2]), np.array([-1.5, 2.0, -0.5])
        return s * off, s * w
    return s * np.array([0, 1, 2, 3]), np.array([2.0, -5.0, 4.0, -1.0])


class FiniteDifferenceJets:
    """Jets from a detector by finite differences.

    Time: second-order stencils on the detector grid with spacing ``t_stride``
    samples (one-sided at the ends when ``one_sided``). Frequency: fourth-order
    central stencils with step ``dk``, tensorised over the two components;
    third ``k`` derivatives use the larger step ``dk3`` (default ``10 dk``)
    because their roundoff grows like ``dk^-3``. ``steps`` maps jet indices
    to detector time indices.
    """

    def __init__(self, detector, dk=1e-3, steps=None, t_stride=1, one_sided=True, dk3=None, cfg=None):
        self.detector = detector
        self.cfg = getattr(detector, "cfg", None) if cfg is None else cfg
        self.dk = float(dk)
        self.dk3 = 10 * self.dk if dk3 is None else float(dk3)
        self.t_stride = int(t_stride)
        self.one_sided = one_sided
        times = np.asarray(detector.times, dtype=float)
        self.steps = np.arange(times.size) if steps is None else np.asarray(steps, dtype=int)
        if self.steps.min() < 0 or self.steps.max() >= times.size:
            raise OutOfGridError("jet steps outside the detector time grid")
        self.times = times[self.steps]
        d = np.diff(times)
        if times.size < 4 or np.ptp(d) > 1e-9 * d.mean():
            raise InsufficientDataError("finite differences need a uniform time grid of >= 4 samples")
        self.dt = float(d.mean()) * self.t_stride

    def _values_t(self, i, k, order):
        """``d^order/dt^order m(t_i, k)`` by the time stencil."""
        n = self.detector.times.size
        j = self.steps[i]
        # stencil in strided units, mapped back to detector indices
        n_strided = (n - 1 - (j % self.t_stride)) // self.t_stride + 1
        base = j % self.t_stride
        pos = (j - base) // self.t_stride
        off, w = _time_stencil(pos, n_strided, order, self.one_sided)
        idx = base + (pos + off) * self.t_stride
        if idx.min() < 0 or idx.max() >= n:
            raise OutOfGridError(f"time stencil at step {i} leaves the sampled grid")
        acc = 0
        for jj, ww in zip(idx, w):
            acc = acc + ww * self.detector.values(int(jj), k)
        return acc / self.dt**order

    def _k_deriv(self, vals, na, nb, h):
        """Mixed ``d^na/dk1^na d^nb/dk2^nb`` from a (..., 7, 7) stencil grid with step ``h``."""
        return np.einsum("...ab,a,b->...", vals, _K_WEIGHTS[na], _K_WEIGHTS[nb]) / h ** (na + nb)

    def _step(self, field):
        return self.dk3 if _K_ORDER[field] == 3 else self.dk

    def jets(self, t_index, k, fields=None):
        fields = _fields(fields)
        k = np.asarray(k, dtype=float)
        need = {}
        for f in fields:
            key = (_T_ORDER[f], self._step(f))
            need[key] = max(need.get(key, 0), _K_ORDER[f])
        cache = {}
        for (t_ord, h), k_ord in need.items():
            # only the points carrying nonzero weight are evaluated
            mask = np.zeros((7, 7), bool)
            for na in range(k_ord + 1):
                for nb in range(k_ord + 1 - na):
                    mask |= np.outer(_K_WEIGHTS[na] != 0, _K_WEIGHTS[nb] != 0)
            ia, ib = np.nonzero(mask)
            off = np.arange(-3, 4) * h
            pts = k[..., None, :] + np.stack([off[ia], off[ib]], axis=-1)
            grid = np.zeros(k.shape[:-1] + (7, 7), dtype=complex)
            grid[..., ia, ib] = self._values_t(t_index, pts, t_ord)
            cache[t_ord, h] = grid
        out = MeasurementJet()
        for f in fields:
            h = self._step(f)
            g = cache[_T_ORDER[f], h]
            n = _K_ORDER[f]
            if n == 0:
                val = g[..., 3, 3]
            else:
                val = np.empty(k.shape[:-1] + (2,) * n, dtype=complex)
                for idx in np.ndindex(*(2,) * n):
                    na = idx.count(0)
                    val[(Ellipsis,) + idx] = self._k_deriv(g, na, n - na, h)
            setattr(out, f, val)
        return out


def make_jets(cfg, obj=None, traj=None, detector=None, **fd):
    """Jet provider for ``cfg.backend``: analytic needs ``obj``/``traj``, FD a detector."""
    if cfg.backend == "analytic":
        if obj is None or traj is None:
            raise InsufficientDataError("analytic backend needs an object and a trajectory")
        return AnalyticJets(obj, traj, cfg)
    if detector is None:
        from .measure import AnalyticDetector
        if obj is None or traj is None:
            raise InsufficientDataError("finite-difference backend needs sampled measurements")
        detector = AnalyticDetector(obj, traj, cfg)
    fd.setdefault("dk", cfg.dk)
    fd.setdefault("cfg", cfg)
    return FiniteDifferenceJets(detector, **fd)
