"""Classical LQR machinery: discrete Lyapunov and Riccati solvers plus the
two Gramian parametrizations of the steady-state cost.

These are the cross-checks for the SDP design path.  The cost of a stabilizing
gain K can be written either as tr(P [W + B V B']) with the observability-type
Gramian P, or as tr(Q S) + tr(R K S K') with the controllability-type Gramian
S (the steady-state state covariance); both evaluate the same number.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError, NotPsdError, NumericalError
from .linalg import is_pd, is_psd, spectral_radius, symmetrize
from .sysid import LinearModel

DLYAP_RTOL = 1e-12
DLYAP_MAX_DOUBLINGS = 200
RICCATI_RTOL = 1e-12
RICCATI_MAX_ITERS = 10 ** 6


@dataclass
class LqrWeights:
    """Cost weights Q (PSD), R (PD) and exploration-noise covariance V (PD)."""

    Q: np.ndarray
    R: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.Q = symmetrize(self.Q)
        self.R = symmetrize(self.R)
        self.V = symmetrize(self.V)
        if not is_psd(self.Q):
            raise NotPsdError("Q must be PSD")
        if not is_pd(self.R):
            raise NotPsdError("R must be PD")
        if not is_pd(self.V):
            raise NotPsdError("V must be PD")


@dataclass
class GramianPair:
    """Observability-type Gramian P and controllability-type Gramian Sigma."""

    P: np.ndarray
    Sigma: np.ndarray


def _dlyap_stable(a_cl, m):
    """Solve S = a_cl S a_cl' + m by Smith doubling; a_cl must be Schur stable."""
    s = symmetrize(m)
    p = a_cl.copy()
    for _ in range(DLYAP_MAX_DOUBLINGS):
        s = symmetrize(s + p @ s @ p.T)
        p = p @ p
        if np.linalg.norm(p, "fro") ** 2 * (1.0 + np.linalg.norm(s, "fro")) < DLYAP_RTOL:
            break
    else:
        raise NumericalError("Lyapunov doubling iteration exceeded its cap")
    resid = np.linalg.norm(s - a_cl @ s @ a_cl.T - m, "fro")
    if resid > 1e-10 * (1.0 + np.linalg.norm(s, "fro")):
        raise NumericalError(f"Lyapunov residual {resid:.3e} above tolerance")
    return s


def _closed_loop(model: LinearModel, K):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    a_cl = model.A + model.B @ K
    rho = spectral_radius(a_cl)
    if rho >= 1.0:
        raise InstabilityError(
            f"closed loop is not Schur stable (spectral radius {rho:.6f})",
            spectral_radius=rho,
        )
    return a_cl, K


def solve_dlyap_controllability(model: LinearModel, K, V):
    """Steady-state state covariance: Sigma = A_cl Sigma A_cl' + W + B V B'."""
    a_cl, _ = _closed_loop(model, K)
    V = symmetrize(V)
    m = model.W + model.B @ V @ model.B.T
    return _dlyap_stable(a_cl, m)


def solve_dlyap_observability(model: LinearModel, K, weights: LqrWeights):
    """Cost Gramian: P = A_cl' P A_cl + Q + K' R K."""
    a_cl, K = _closed_loop(model, K)
    m = weights.Q + K.T @ weights.R @ K
    return _dlyap_stable(a_cl.T, m)


def solve_riccati(model: LinearModel, weights: LqrWeights):
    """Fixed-point (value) iteration for the discrete algebraic Riccati equation.

    Returns (K, P) with K = -[R + B'PB]^{-1} B'PA and A + BK Schur stable.
    """
    a, b = model.A, model.B
    q, r = weights.Q, weights.R
    p = q.copy()
    for _ in range(RICCATI_MAX_ITERS):
        btp = b.T @ p
        gain_lhs = r + btp @ b
        g = np.linalg.solve(gain_lhs, btp @ a)
        p_next = symmetrize(q + a.T @ p @ a - (btp @ a).T @ g)
        if np.linalg.norm(p_next - p, "fro") <= RICCATI_RTOL * (
            1.0 + np.linalg.norm(p_next, "fro")
        ):
            p = p_next
            break
        p = p_next
    else:
        raise NumericalError("Riccati value iteration exceeded its cap")
    k = -np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
    rho = spectral_radius(a + b @ k)
    if rho >= 1.0:
        raise InstabilityError(
            f"Riccati gain does not stabilize (spectral radius {rho:.6f})",
            spectral_radius=rho,
        )
    return k, p


def closed_loop_gramians(model: LinearModel, K, weights: LqrWeights) -> GramianPair:
    """Both Gramians of a stabilizing gain, for cost cross-checks."""
    return GramianPair(
        P=solve_dlyap_observability(model, K, weights),
        Sigma=solve_dlyap_controllability(model, K, weights.V),
    )


def cost_p_param(model: LinearModel, weights: LqrWeights, P):
    """Steady-state cost tr(P [W + B V B'])."""
    P = symmetrize(P)
    if P.shape != model.W.shape:
        raise ValueError("P must be r_x x r_x")
    return float(np.trace(P @ (model.W + model.B @ weights.V @ model.B.T)))


def cost_sigma_param(weights: LqrWeights, K, Sigma):
    """Steady-state cost tr(Q Sigma) + tr(R K Sigma K')."""
    Sigma = symmetrize(Sigma)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[1] != Sigma.shape[0]:
        raise ValueError("K columns must match Sigma dimension")
    if weights.Q.shape != Sigma.shape:
        raise ValueError("Q must match Sigma dimension")
    return float(
        np.trace(weights.Q @ Sigma) + np.trace(weights.R @ K @ Sigma @ K.T)
    )
