import numpy as np
import pytest

from dataconform.errors import NotPsdError
from dataconform.linalg import (
    is_psd,
    smat,
    spectral_radius,
    sqrtm_psd,
    svec,
    svec_dim,
    sym_eig,
    symmetrize,
)

from conftest import rand_pd, rand_symmetric


def test_sym_eig_identity():
    w, v = sym_eig(np.eye(2))
    assert np.allclose(w, [1.0, 1.0])


def test_sym_eig_diagonal_sorted_ascending():
    w, _ = sym_eig(np.diag([0.2, 0.1]))
    assert np.allclose(w, [0.1, 0.2])


def test_sym_eig_recovers_constructed_spectrum():
    # build Q diag(lam) Q' from a seeded orthogonal factor and recover lam
    rng = np.random.default_rng(7)
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    lam = np.sort(rng.uniform(-2.0, 3.0, 5))
    m = q @ np.diag(lam) @ q.T
    w, v = sym_eig(m)
    assert np.max(np.abs(w - lam)) < 1e-8
    recon = v @ np.diag(w) @ v.T
    assert np.linalg.norm(recon - symmetrize(m), "fro") <= 1e-10 * (
        1.0 + np.linalg.norm(m, "fro")
    )


def test_sym_eig_eigenvectors_orthonormal():
    rng = np.random.default_rng(8)
    m = rand_symmetric(rng, 6)
    _, v = sym_eig(m)
    assert np.linalg.norm(v.T @ v - np.eye(6), "fro") <= 1e-10


def test_is_psd_boundary_and_indefinite():
    assert is_psd(np.diag([1.0, 0.0]), tol=1e-9)
    assert not is_psd(np.diag([1.0, -1e-3]), tol=1e-9)
    assert is_psd(np.array([[2.0, 1.0], [1.0, 2.0]]))


def test_is_psd_rejects_negative_tol():
    with pytest.raises(ValueError):
        is_psd(np.eye(2), tol=-1.0)


def test_sqrtm_psd_identity_and_diagonal():
    assert np.allclose(sqrtm_psd(np.eye(3)), np.eye(3))
    assert np.allclose(sqrtm_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_sqrtm_psd_squares_back_on_sampled_covariance(seeded_linear_run):
    from dataconform.sysid import empirical_moments

    gamma = empirical_moments(seeded_linear_run).gamma_data
    s = sqrtm_psd(gamma)
    assert is_psd(s)
    assert np.linalg.norm(s @ s - gamma, "fro") <= 1e-9 * (
        1.0 + np.linalg.norm(gamma, "fro")
    )


def test_sqrtm_psd_rejects_indefinite():
    with pytest.raises(NotPsdError):
        sqrtm_psd(np.diag([1.0, -0.5]))


def test_spectral_radius_benchmark_and_zero(benchmark_model):
    assert spectral_radius(benchmark_model.A) == pytest.approx(0.98)
    assert spectral_radius(np.zeros((3, 3))) == 0.0


def test_spectral_radius_stabilizing_initial_gain(benchmark_model):
    k0 = np.array([[-0.2, -9.0]])
    rho = spectral_radius(benchmark_model.A + benchmark_model.B @ k0)
    assert 0.0 < rho < 1.0


def test_svec_identity_and_forced_scaling():
    assert np.allclose(svec(np.eye(2)), [1.0, 0.0, 1.0])
    m = np.array([[1.0, 3.0], [3.0, 2.0]])
    assert np.allclose(svec(m), [1.0, 3.0 * np.sqrt(2.0), 2.0])


def test_svec_smat_round_trip_and_trace_identity():
    rng = np.random.default_rng(11)
    for n in (1, 2, 4, 7):
        a = rand_symmetric(rng, n)
        b = rand_symmetric(rng, n)
        va, vb = svec(a), svec(b)
        assert va.shape == (svec_dim(n),)
        assert np.allclose(smat(va, n), a)
        trace = np.trace(a @ b)
        assert abs(float(va @ vb) - trace) <= 1e-12 * (1.0 + abs(trace))


def test_smat_length_mismatch():
    with pytest.raises(ValueError):
        smat(np.ones(4), 2)


def test_symmetrize_rejects_nonsquare():
    with pytest.raises(ValueError):
        symmetrize(np.ones((2, 3)))
