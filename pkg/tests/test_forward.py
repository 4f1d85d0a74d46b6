import numpy as np
import pytest

from tomomotion.errors import (
    DegeneratePairError,
    InvalidArgumentError,
    OutOfBandError,
    OutOfGridError,
    ParseError,
)
from tomomotion.forward.ingest import ingest_voxels
from tomomotion.forward.jets import FIELDS, AnalyticJets, FiniteDifferenceJets
from tomomotion.forward.measure import (
    AnalyticDetector,
    GridDetector,
    MeasurementSet,
    ModelConfig,
    add_noise,
    measure,
    synthesize,
    verify_common_line,
)
from tomomotion.motions import composite_trajectory
from tomomotion.phantoms.pointsets import balance_weights, generate_asymmetric_pointset
from tomomotion.phantoms.spectral import BlobProfile, Phantom
from tomomotion.phantoms.voxels import VoxelGrid, rasterize
from tomomotion.so3 import MotionTrajectory, sigma_conjugate

K0 = 20.0
FACTORS = [
    {"axis": [0.0, 0.6, 0.8], "angle": {"poly": [0.1, 0.9], "sin": [[0.3, 2.0, 0.0]]}},
    {"axis": [1.0, 0.0, 0.0], "angle": {"poly": [0.2, 0.4, 0.7]}},
    {"axis": [0.0, 0.0, 1.0], "angle": {"poly": [0.0, 1.3], "sin": [[0.2, 3.0, 0.5]]}},
]
PB = ModelConfig("PB")
DT = ModelConfig("DT", k0=K0)


def phantom(seed=1, size=0.08):
    P = np.asarray(generate_asymmetric_pointset(8, seed=seed).points)
    return Phantom(P, balance_weights(P), BlobProfile("gaussian", size))


def traj(grid):
    return composite_trajectory(FACTORS, grid)


@pytest.fixture(scope="module")
def ph():
    return phantom()


def test_model_config_validation():
    with pytest.raises(InvalidArgumentError):
        ModelConfig("DT", k0=10.0, samples=[9.5])
    with pytest.raises(InvalidArgumentError):
        ModelConfig("DT")
    with pytest.raises(InvalidArgumentError):
        ModelConfig("PB", dt=0.0)
    with pytest.raises(InvalidArgumentError):
        ModelConfig("XRAY")


def test_measure_out_of_band(ph):
    tr = traj(np.linspace(0, 1, 3))
    with pytest.raises(OutOfBandError):
        measure(ph, tr, DT, 0, [[K0, 0.0]])


def test_radial_blob_is_time_invariant():
    blob = Phantom(np.zeros((1, 3)), np.ones(1), BlobProfile("ball", 0.3))
    tr = traj(np.linspace(0, 1, 7))
    k = np.array([[1.5, -2.0], [0.3, 4.0]])
    for cfg in (PB, DT):
        v = np.stack([measure(blob, tr, cfg, i, k) for i in range(7)])
        assert np.abs(v - v[0]).max() <= 1e-15


def test_sigma_equivalent_pb_data(ph):
    tr = traj(np.linspace(0, 1, 11))
    trs = tr.sigma()
    assert np.allclose(trs.R, sigma_conjugate(tr.R))
    phs = ph.reflect([0.0, 0.0, 1.0])
    rng = np.random.default_rng(0)
    k = rng.uniform(-15, 15, size=(200, 2))
    for i in range(len(tr)):
        a = measure(ph, tr, PB, i, k)
        b = measure(phs, trs, PB, i, k)
        assert np.abs(a - b).max() <= 1e-12


def test_pb_hermitian_symmetry(ph):
    tr = traj(np.linspace(0, 1, 5))
    k = np.random.default_rng(1).uniform(-20, 20, size=(300, 2))
    for i in range(5):
        assert np.abs(measure(ph, tr, PB, i, -k) - np.conj(measure(ph, tr, PB, i, k))).max() <= 1e-12


def test_dt_origin_invariant(ph):
    tr = traj(np.linspace(0, 1, 9))
    jets = AnalyticJets(ph, tr, DT)
    f0 = ph.spectral(np.zeros(3)).value
    for i in range(9):
        j = jets.jets(i, np.zeros((1, 2)), ("value", "dt"))
        assert abs(j.value[0] - f0) <= 1e-15
        assert abs(j.dt[0]) <= 1e-15


def test_fourier_slice_quadrature(ph):
    # projection of the spatial density along R e3, sampled on a 64^3 grid in the rotated frame
    tr = traj(np.linspace(0, 1, 3))
    i = 2
    R = tr.R[i]
    n = 64
    s = -1 + (np.arange(n) + 0.5) * 2 / n
    h = s[1] - s[0]
    Y = np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1)
    proj = ph.density(Y @ R.T).sum(axis=2) * h
    k = np.array([[0.0, 0.0], [3.0, -1.0], [-7.5, 4.2], [12.0, 9.0]])
    E1 = np.exp(-1j * np.outer(k[:, 0], s))
    E2 = np.exp(-1j * np.outer(k[:, 1], s))
    ref = (2 * np.pi) ** -1.5 * np.einsum("ka,kb,ab->k", E1, E2, proj) * h * h
    got = measure(ph, tr, PB, i, k)
    assert np.abs(got - ref).max() <= 1e-6 * np.abs(got).max()


def test_pb_grad_is_pushed_gradient(ph):
    tr = traj(np.linspace(0, 1, 4))
    k = np.array([[2.0, 1.0], [-4.0, 3.0]])
    j = AnalyticJets(ph, tr, PB).jets(3, k, ("grad",))
    R = tr.R[3]
    g = ph.spectral(np.c_[k, np.zeros(2)] @ R.T, 1).grad
    assert np.allclose(j.grad, g @ R[:, :2], rtol=0, atol=1e-15)


def test_static_motion_time_derivatives_vanish(ph):
    t = np.linspace(0, 1, 4)
    I = np.broadcast_to(np.eye(3), (4, 3, 3))
    Z = np.zeros((4, 3, 3))
    tr = MotionTrajectory(t, I, Z, Z)
    k = np.array([[1.0, 2.0], [5.0, -3.0]])
    for cfg in (PB, DT):
        j = AnalyticJets(ph, tr, cfg).jets(1, k)
        for f in ("dt", "dt_grad", "dt_hess", "dtt_grad"):
            assert np.abs(getattr(j, f)).max() == 0


def _fd_reference(ph, cfg, t0, k, dt=1e-4, dk=1e-3):
    grid = t0 + dt * np.arange(-3, 4)
    fine = traj(grid)
    return FiniteDifferenceJets(AnalyticDetector(ph, fine, cfg), dk=dk).jets(3, k), fine


@pytest.mark.parametrize("cfg", [PB, DT], ids=["PB", "DT"])
def test_analytic_jets_match_finite_differences(ph, cfg):
    k = np.array([[3.0, -2.0], [-6.5, 1.2], [0.7, 9.0]])
    fd, fine = _fd_reference(ph, cfg, 0.37, k)
    an = AnalyticJets(ph, fine, cfg).jets(3, k)
    for f in FIELDS:
        a, b = getattr(an, f), getattr(fd, f)
        assert np.abs(a - b).max() <= 1e-5 * np.abs(a).max(), f


def test_jet_tensors_symmetric(ph):
    tr = traj(np.linspace(0, 1, 3))
    j = AnalyticJets(ph, tr, DT).jets(1, np.array([[4.0, 5.0]]))
    assert np.allclose(j.hess, np.swapaxes(j.hess, -1, -2), atol=1e-14)
    for p in [(0, 2, 1), (1, 0, 2), (2, 1, 0)]:
        assert np.allclose(j.third, j.third.transpose((0,) + tuple(q + 1 for q in p)), atol=1e-13)


def test_fd_jets_one_sided_and_out_of_grid(ph):
    tr = traj(np.linspace(0, 0.01, 11))
    det = AnalyticDetector(ph, tr, PB)
    k = np.array([[2.0, 1.0]])
    an = AnalyticJets(ph, tr, PB).jets(0, k, ("dt", "dtt_grad"))
    fd = FiniteDifferenceJets(det, dk=1e-3).jets(0, k, ("dt", "dtt_grad"))
    assert np.allclose(fd.dt, an.dt, rtol=1e-4)
    with pytest.raises(OutOfGridError):
        FiniteDifferenceJets(det, one_sided=False).jets(0, k, ("dt",))
    assert FiniteDifferenceJets(det, one_sided=False).jets(5, k, ("value",)).value.shape == (1,)


def test_fd_jets_with_stride_and_steps(ph):
    grid = np.linspace(0, 1, 101)
    tr = traj(grid)
    det = AnalyticDetector(ph, tr, PB)
    jets = FiniteDifferenceJets(det, steps=np.arange(0, 101, 10), t_stride=2)
    assert np.allclose(jets.times, grid[::10])
    k = np.array([[1.0, -1.0]])
    an = AnalyticJets(ph, tr, PB).jets(50, k, ("dt",))
    fd = jets.jets(5, k, ("dt",))
    assert np.allclose(fd.dt, an.dt, rtol=1e-2)  # O(dt^2) with dt = 0.02


def test_common_line_identity_exact(ph):
    tr = traj(np.linspace(0, 2, 41))
    det = AnalyticDetector(ph, tr, PB)
    rng = np.random.default_rng(3)
    lams = np.linspace(-15, 15, 61)
    worst = 0.0
    for _ in range(100):
        s, t = rng.choice(41, size=2, replace=False)
        worst = max(worst, verify_common_line(det, tr, s, t, lams))
    assert worst <= 1e-12


def test_common_line_interpolated_grid(ph):
    tr = traj(np.linspace(0, 1, 6))
    ax = np.linspace(-20, 20, 128)
    ms = synthesize(ph, tr, PB, k_axes=(ax, ax))
    dev = verify_common_line(GridDetector(ms), tr, 1, 4, np.linspace(-15, 15, 61))
    assert dev <= 1e-4 * np.abs(ms.values).max()


def test_common_line_degenerate_pair(ph):
    tr = traj(np.linspace(0, 1, 4))
    with pytest.raises(DegeneratePairError):
        verify_common_line(AnalyticDetector(ph, tr, PB), tr, 2, 2, [1.0])


def test_grid_detector_out_of_grid(ph):
    tr = traj(np.linspace(0, 1, 2))
    ax = np.linspace(-5, 5, 16)
    det = GridDetector(synthesize(ph, tr, PB, k_axes=(ax, ax)))
    with pytest.raises(OutOfGridError):
        det.values(0, [[6.0, 0.0]])


@pytest.fixture(scope="module")
def small_set():
    tr = traj(np.linspace(0, 1, 5))
    k = np.random.default_rng(0).uniform(-8, 8, size=(50, 2))
    return synthesize(phantom(), tr, PB, k_points=k)


def test_measurement_set_round_trip(tmp_path, small_set):
    small_set.save(tmp_path / "m.bin")
    back = MeasurementSet.load(tmp_path / "m.bin")
    assert np.array_equal(back.values, small_set.values)
    assert np.array_equal(back.k_points, small_set.k_points)
    assert back.provenance["phantom_sha256"] == small_set.provenance["phantom_sha256"]
    raw = np.fromfile(tmp_path / "m.bin", dtype="<f8")
    assert raw[0] == small_set.values[0, 0].real and raw[1] == small_set.values[0, 0].imag


def test_measurement_set_corrupted(tmp_path, small_set):
    small_set.save(tmp_path / "m.bin")
    data = bytearray((tmp_path / "m.bin").read_bytes())
    data[100] ^= 1
    (tmp_path / "m.bin").write_bytes(bytes(data))
    with pytest.raises(ParseError):
        MeasurementSet.load(tmp_path / "m.bin")
    with pytest.raises(ParseError):
        MeasurementSet.load(tmp_path / "missing.bin")


def test_noise_level_zero_and_determinism(small_set):
    assert np.array_equal(add_noise(small_set, 0.0, 1).values, small_set.values)
    a = add_noise(small_set, 0.01, 7)
    b = add_noise(small_set, 0.01, 7)
    assert a.payload_bytes() == b.payload_bytes()
    assert a.noise["seed"] == 7 and small_set.noise is None
    assert not np.array_equal(add_noise(small_set, 0.01, 8).values, a.values)
    with pytest.raises(InvalidArgumentError):
        add_noise(small_set, -0.1, 0)


def test_noise_statistics():
    rng = np.random.default_rng(5)
    vals = rng.normal(size=(100, 1000)) + 1j * rng.normal(size=(100, 1000))
    ms = MeasurementSet("PB", np.arange(100.0), vals, k_points=np.zeros((1000, 2)))
    noisy = add_noise(ms, 0.01, 11)
    d = noisy.values - vals
    ratio = np.sqrt(np.mean(np.abs(d) ** 2)) / np.sqrt(np.mean(np.abs(vals) ** 2))
    assert 0.009 <= ratio <= 0.011
    # real and imaginary parts uncorrelated with equal variance
    assert abs(np.mean(d.real * d.imag)) <= 0.05 * np.mean(d.real**2)
    assert abs(np.var(d.real) / np.var(d.imag) - 1) <= 0.05


def test_ingest_matches_closed_form(ph):
    grid = rasterize(ph, 64)
    prov = ingest_voxels(grid, DT)
    rng = np.random.default_rng(2)
    kap = rng.normal(size=(400, 3))
    kap *= (K0 * rng.uniform(0, 1, 400) ** (1 / 3) / np.linalg.norm(kap, axis=1))[:, None]
    ref = ph.spectral(kap).value
    got = prov.spectral(kap).value
    scale = np.abs(ph.spectral(np.zeros(3)).value)
    assert np.abs(got - ref).max() <= 1e-3 * scale


def test_ingest_file_and_zero_grid(tmp_path):
    VoxelGrid.centered(np.zeros((16, 16, 16)), 1.0).save(tmp_path / "z.raw")
    prov = ingest_voxels(str(tmp_path / "z.raw"), k_max=5.0)
    kap = np.random.default_rng(0).uniform(-5, 5, size=(20, 3))
    assert np.all(prov.spectral(kap, 1).value == 0)
    with pytest.raises(ParseError):
        ingest_voxels(str(tmp_path / "missing.raw"))


def test_ingest_projects_first_moments():
    blob = Phantom(np.array([[0.15, -0.1, 0.05]]), np.ones(1), BlobProfile("gaussian", 0.08), check_moments=False)
    grid = rasterize(blob, 40)
    prov = ingest_voxels(grid, k_max=4.0)
    g0 = prov.spectral(np.zeros(3), 1).grad
    # grad f^(0) = -i (2 pi)^(-3/2) * first moment
    raw = (2 * np.pi) ** -1.5 * np.linalg.norm(grid.first_moments())
    assert raw > 1e-5
    assert np.abs(g0).max() <= 1e-6 * raw


def test_ingested_provider_drives_analytic_jets(ph):
    prov = ingest_voxels(rasterize(ph, 48), k_max=8.0)
    tr = traj(np.linspace(0, 1, 3))
    k = np.array([[2.0, 1.0]])
    a = AnalyticJets(prov, tr, PB).jets(1, k, ("value", "dt", "grad"))
    b = AnalyticJets(ph, tr, PB).jets(1, k, ("value", "dt", "grad"))
    assert np.allclose(a.dt, b.dt, rtol=1e-2)
    assert np.allclose(a.grad, b.grad, rtol=1e-2)
