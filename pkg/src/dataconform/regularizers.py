"""Distributional machinery for data-conforming design.

Gaussian KL divergence, the log-det/trace-log identity, the Jeffreys-type
surrogate F(G_des) = tr(G_data^{-1} G_des + G_data G_des^{-1}) used as the
joint state-input regularizer, the squared-Frobenius state regularizer, and
the block assembly of the designed state-input covariance.

F is minimized uniquely at G_des == G_data with value 2*dim, is convex in
G_des, and equals the first-order-truncated modified KL divergence up to
additive constants; :func:`f_truncation_error` quantifies the truncation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError
from .linalg import inv_sqrtm_pd, solve_psd, symmetrize

COND_LIMIT = 1e12


@dataclass
class GaussianSummary:
    """Mean and positive definite covariance of a Gaussian over (state, input)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = _pd_guard(self.cov, "covariance")
        if self.cov.shape[0] != self.mean.shape[0]:
            raise ValueError("mean and covariance dimensions differ")

    @property
    def dim(self):
        return self.mean.shape[0]


def _pd_guard(m, name):
    m = symmetrize(m)
    w = np.linalg.eigvalsh(m)
    if w[0] <= 0.0 or w[-1] / w[0] > COND_LIMIT:
        raise DegenerateDataError(
            f"{name} is not safely positive definite (eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}])"
        )
    return m


def design_covariance(Sigma, K, V):
    """Joint state-input covariance of the law u = K x + v:

    [[Sigma, Sigma K'], [K Sigma, K Sigma K' + V]].
    """
    Sigma = _pd_guard(Sigma, "Sigma")
    V = _pd_guard(V, "V")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (V.shape[0], Sigma.shape[0]):
        raise ValueError(
            f"K must be {V.shape[0]} x {Sigma.shape[0]}, got {K.shape}"
        )
    ks = K @ Sigma
    return symmetrize(
        np.block([[Sigma, ks.T], [ks, K @ Sigma @ K.T + V]])
    )


def kl_gaussian(des: GaussianSummary, data: GaussianSummary):
    """KL divergence d_KL(des || data) between Gaussians, in nats."""
    if des.dim != data.dim:
        raise ValueError("dimension mismatch between summaries")
    n = des.dim
    dmu = des.mean - data.mean
    tr_term = float(np.trace(solve_psd(data.cov, des.cov)))
    quad = float(dmu @ solve_psd(data.cov, dmu))
    _, logdet_data = np.linalg.slogdet(data.cov)
    _, logdet_des = np.linalg.slogdet(des.cov)
    return 0.5 * (tr_term + quad - n + logdet_data - logdet_des)


def log_det_ratio(data_cov, des_cov):
    """log det(data_cov) - log det(des_cov); equals tr log(data_cov des_cov^{-1})."""
    data_cov = _pd_guard(data_cov, "data covariance")
    des_cov = _pd_guard(des_cov, "design covariance")
    sign_a, logdet_a = np.linalg.slogdet(data_cov)
    sign_b, logdet_b = np.linalg.slogdet(des_cov)
    if sign_a <= 0 or sign_b <= 0:
        raise DegenerateDataError("log-det requested for a non-PD matrix")
    return float(logdet_a - logdet_b)


def jeffreys_f(des_cov, data_cov):
    """Surrogate regularizer F = tr(data^{-1} des) + tr(data des^{-1}).

    Always >= 2*dim, with equality iff the covariances coincide; twice the
    Jeffreys divergence of the zero-mean Gaussians up to the additive 2*dim.
    """
    des_cov = _pd_guard(des_cov, "design covariance")
    data_cov = _pd_guard(data_cov, "data covariance")
    if des_cov.shape != data_cov.shape:
        raise ValueError("dimension mismatch")
    t1 = float(np.trace(solve_psd(data_cov, des_cov)))
    t2 = float(np.trace(solve_psd(des_cov, data_cov)))
    return t1 + t2


def frobenius_gap(des_sigma, data_sigma):
    """Squared Frobenius distance tr([S - S_data][S - S_data]')."""
    des_sigma = np.asarray(des_sigma, dtype=float)
    data_sigma = np.asarray(data_sigma, dtype=float)
    if des_sigma.shape != data_sigma.shape:
        raise ValueError("dimension mismatch")
    diff = des_sigma - data_sigma
    return float(np.sum(diff * diff))


def _similarity_eigs(des_cov, data_cov):
    # eigenvalues of data_cov des_cov^{-1}, via the symmetric similarity
    # des^{-1/2} data des^{-1/2} so only symmetric eigensolvers are involved
    des_cov = _pd_guard(des_cov, "design covariance")
    data_cov = _pd_guard(data_cov, "data covariance")
    ihalf = inv_sqrtm_pd(des_cov)
    sym = symmetrize(ihalf @ data_cov @ ihalf)
    return np.linalg.eigvalsh(sym)


def f_truncation_error(des_cov, data_cov):
    """|tr log(data des^{-1}) - tr(data des^{-1} - I)|: first-order truncation gap."""
    mu = _similarity_eigs(des_cov, data_cov)
    if np.any(mu <= 0.0):
        raise DegenerateDataError("similarity spectrum not positive")
    return float(abs(np.sum(np.log(mu)) - np.sum(mu - 1.0)))
