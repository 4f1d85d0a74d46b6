import numpy as np
import pytest
from scipy.integrate import quad

from tomomotion.errors import InvalidArgumentError, ParseError, SupportViolationError
from tomomotion.phantoms.pointsets import balance_weights, generate_asymmetric_pointset
from tomomotion.phantoms.spectral import BlobProfile, CompositePhantom, Phantom, load_phantom


def make_phantom(kind="gaussian", size=0.08, seed=1, n=8):
    P = np.asarray(generate_asymmetric_pointset(n, seed=seed).points)
    return Phantom(P, balance_weights(P), BlobProfile(kind, size))


def radial_oracle(profile, r):
    """psi^(k) for radial psi: sqrt(2/pi) int psi(s) s sin(r s) / r ds."""
    if profile.kind == "ball":
        upper, psi = profile.extent, profile.density
    else:
        # the closed form is the untruncated Gaussian
        upper, psi = 12 * profile.size, lambda s: np.exp(-0.5 * (s / profile.size) ** 2)
    f = lambda s: psi(s) * s * (np.sin(r * s) / r if r > 0 else s)
    return np.sqrt(2 / np.pi) * quad(f, 0, upper, limit=200, epsabs=1e-14, epsrel=1e-12)[0]


def test_ball_transform_at_origin():
    eps = 0.3
    prof = BlobProfile("ball", eps)
    g0 = prof.radial(np.zeros(1))[0][0]
    assert g0 == pytest.approx(np.sqrt(2 / np.pi) * eps**3 / 3, rel=1e-15)
    assert g0 == pytest.approx(radial_oracle(prof, 0.0), rel=1e-10)


@pytest.mark.parametrize("kind,size", [("ball", 0.3), ("gaussian", 0.2)])
@pytest.mark.parametrize("r", [1e-4, 0.5, 3.0, 6.6, 12.0, 40.0])
def test_radial_transform_matches_hankel_quadrature(kind, size, r):
    prof = BlobProfile(kind, size)
    g = prof.radial(np.array([0.5 * r * r]))[0][0]
    assert g == pytest.approx(radial_oracle(prof, r), rel=1e-8, abs=1e-13)


def test_ball_closed_form_matches_formula_away_from_origin():
    eps = 0.25
    r = np.linspace(0.5, 60, 50)
    ref = np.sqrt(2 / np.pi) * (np.sin(eps * r) - eps * r * np.cos(eps * r)) / r**3
    got = BlobProfile("ball", eps).radial(0.5 * r * r)[0]
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-16)


@pytest.mark.parametrize("kind", ["ball", "gaussian"])
def test_radial_derivatives_by_finite_differences(kind):
    prof = BlobProfile(kind, 0.3)
    s = np.array([1e-3, 0.2, 2.0, 11.0, 30.0, 200.0])
    h = 1e-5 * np.maximum(1, s)
    G = prof.radial(s, 3)
    Gp = prof.radial(s + h, 3)
    Gm = prof.radial(s - h, 3)
    for n in range(3):
        fd = (Gp[n] - Gm[n]) / (2 * h)
        assert np.allclose(G[n + 1], fd, rtol=1e-6, atol=1e-12 * abs(G[0]).max())


def test_gaussian_transform_matches_3d_riemann_sum():
    ph = make_phantom(size=0.08)
    n = 72
    x = np.linspace(-1, 1, n, endpoint=False) + 1.0 / n
    dx = x[1] - x[0]
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1)
    f = ph.density(X)
    rng = np.random.default_rng(0)
    for _ in range(5):
        k = rng.normal(size=3) * 4
        ref = (2 * np.pi) ** -1.5 * np.sum(f * np.exp(-1j * X @ k)) * dx**3
        assert abs(ph.spectral(k).value - ref) <= 1e-9


@pytest.mark.parametrize("kind", ["ball", "gaussian"])
def test_spectral_derivatives_by_finite_differences(kind):
    ph = make_phantom(kind, 0.08 if kind == "gaussian" else 0.1)
    rng = np.random.default_rng(1)
    K = rng.normal(size=(100, 3)) * 6
    h = 1e-5
    D = ph.spectral(K, 3)
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        Dp, Dm = ph.spectral(K + e, 3), ph.spectral(K - e, 3)
        fd_grad = (Dp.value - Dm.value) / (2 * h)
        fd_hess = (Dp.grad - Dm.grad) / (2 * h)
        fd_third = (Dp.hess - Dm.hess) / (2 * h)
        sc = np.abs(D.grad).max(1)
        assert np.all(np.abs(D.grad[:, a] - fd_grad) <= 1e-6 * sc)
        sc = np.abs(D.hess).max((1, 2))[:, None]
        assert np.all(np.abs(D.hess[:, a, :] - fd_hess) <= 1e-5 * sc)
        sc = np.abs(D.third).max((1, 2, 3))[:, None, None]
        assert np.all(np.abs(D.third[:, a] - fd_third) <= 1e-5 * sc)


def test_spectral_symmetry_of_higher_derivatives():
    ph = make_phantom()
    D = ph.spectral(np.array([1.3, -2.0, 0.7]), 3)
    assert np.allclose(D.hess, D.hess.T, atol=1e-12, rtol=0)
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0)]:
        assert np.allclose(D.third, D.third.transpose(perm), atol=1e-12, rtol=0)


def test_centred_radial_blob_gradient_parallel_to_kappa():
    ph = Phantom(np.zeros((1, 3)), np.ones(1), BlobProfile("ball", 0.3))
    k = np.array([0.3, 2.0, -1.1])
    g = ph.spectral(k, 1).grad
    assert np.linalg.norm(np.cross(g, k)) <= 1e-14 * np.linalg.norm(g) * np.linalg.norm(k)


def test_hermitian_symmetry():
    ph = make_phantom()
    rng = np.random.default_rng(2)
    K = rng.normal(size=(50, 3)) * 10
    assert np.allclose(ph.spectral(-K).value, np.conj(ph.spectral(K).value), atol=1e-12, rtol=0)


def test_vanishing_first_moment_gradient_at_origin():
    ph = make_phantom()
    g = ph.spectral(np.zeros(3), 1).grad
    assert np.linalg.norm(g) <= 1e-12
    assert np.linalg.norm(ph.first_moment()) <= 1e-12


def test_phantom_rejects_unbalanced_and_escaping():
    P = np.asarray(generate_asymmetric_pointset(8, seed=1).points)
    with pytest.raises(InvalidArgumentError):
        Phantom(P, np.ones(8), BlobProfile("gaussian", 0.05))
    with pytest.raises(SupportViolationError):
        Phantom(P, balance_weights(P), BlobProfile("gaussian", 0.2))
    with pytest.raises(InvalidArgumentError):
        BlobProfile("cube", 1.0)


def test_composite_is_sum(tmp_path):
    a, b = make_phantom(seed=1), make_phantom("ball", 0.1, seed=2)
    c = a + b
    assert isinstance(c, CompositePhantom)
    k = np.array([2.0, 1.0, -3.0])
    assert c.spectral(k, 2).hess == pytest.approx(a.spectral(k, 2).hess + b.spectral(k, 2).hess)
    c.save(tmp_path / "c.json")
    back = load_phantom(tmp_path / "c.json")
    assert back.content_hash() == c.content_hash()
    assert back.spectral(k).value == pytest.approx(c.spectral(k).value, abs=0)


def test_load_rejects_bad_version(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format_version": 99, "type": "phantom"}')
    with pytest.raises(ParseError):
        load_phantom(p)
