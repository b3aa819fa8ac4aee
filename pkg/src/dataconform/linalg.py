"""Dense symmetric-matrix kernels shared by every other module.

Matrices are plain numpy arrays.  Symmetric quantities are kept exactly
symmetric (``m == m.T`` entrywise); use :func:`symmetrize` when building one.
The svec/smat packing scales off-diagonal entries by sqrt(2) so that
``dot(svec(a), svec(b)) == trace(a @ b)`` and the PSD cone stays self-dual
under the packed inner product.
"""

import numpy as np

from .errors import NotPsdError, NumericalError

PSD_TOL = 1e-9
SQRT2 = np.sqrt(2.0)


def symmetrize(m):
    """Return (m + m.T) / 2 as a float array, validating squareness."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return 0.5 * (m + m.T)


def check_symmetric(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.array_equal(m, m.T):
        raise ValueError(f"{name} is not exactly symmetric; apply symmetrize() first")
    return m


def sym_eig(m):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(w, v)`` with eigenvalues ``w`` ascending and orthonormal
    eigenvectors in the columns of ``v`` so that ``m == v @ diag(w) @ v.T``
    up to roundoff.
    """
    m = symmetrize(m)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver did not converge: {exc}") from exc
    return w, v


def is_psd(m, tol=PSD_TOL):
    """True iff min eigenvalue >= -tol * (1 + max |eigenvalue|)."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    w, _ = sym_eig(m)
    scale = 1.0 + np.max(np.abs(w)) if w.size else 1.0
    return bool(w[0] >= -tol * scale)


def is_pd(m, tol=PSD_TOL):
    """True iff min eigenvalue > tol * (1 + max |eigenvalue|)."""
    w, _ = sym_eig(m)
    scale = 1.0 + np.max(np.abs(w)) if w.size else 1.0
    return bool(w[0] > tol * scale)


def sqrtm_psd(m):
    """Symmetric PSD square root: S with S @ S == m.

    Raises NotPsdError when m has a negative eigenvalue beyond tolerance.
    Eigenvalues within tolerance of zero are clipped to zero.
    """
    w, v = sym_eig(m)
    scale = 1.0 + np.max(np.abs(w)) if w.size else 1.0
    if w[0] < -PSD_TOL * scale:
        raise NotPsdError(f"matrix is not PSD: min eigenvalue {w[0]:.3e}")
    s = v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return symmetrize(s)


def inv_sqrtm_pd(m):
    """Inverse symmetric square root of a positive definite matrix."""
    w, v = sym_eig(m)
    scale = 1.0 + np.max(np.abs(w)) if w.size else 1.0
    if w[0] <= PSD_TOL * scale:
        raise NotPsdError(f"matrix is not PD: min eigenvalue {w[0]:.3e}")
    s = v @ np.diag(1.0 / np.sqrt(w)) @ v.T
    return symmetrize(s)


def spectral_radius(m):
    """Max modulus of the eigenvalues of a (possibly nonsymmetric) square matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    try:
        eigs = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    return float(np.max(np.abs(eigs))) if eigs.size else 0.0


def solve_psd(m, rhs):
    """Solve m @ x = rhs for symmetric positive definite m (no explicit inverse)."""
    m = symmetrize(m)
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPsdError(f"Cholesky failed, matrix not PD: {exc}") from exc
    # two triangular solves; numpy's solve handles the small dense factors fine
    return np.linalg.solve(c.T, np.linalg.solve(c, rhs))


def svec(m):
    """Pack a symmetric matrix into a vector of length n(n+1)/2.

    Upper triangle in row-major order, off-diagonal entries scaled by sqrt(2).
    """
    m = symmetrize(m)
    n = m.shape[0]
    iu, ju = np.triu_indices(n)
    v = m[iu, ju].copy()
    v[iu != ju] *= SQRT2
    return v


def smat(v, n):
    """Inverse of :func:`svec`; v must have length n(n+1)/2."""
    v = np.asarray(v, dtype=float)
    expected = n * (n + 1) // 2
    if v.shape != (expected,):
        raise ValueError(f"svec length mismatch: got {v.shape}, expected ({expected},)")
    m = np.zeros((n, n))
    iu, ju = np.triu_indices(n)
    vals = v.copy()
    vals[iu != ju] /= SQRT2
    m[iu, ju] = vals
    m[ju, iu] = vals
    return m


def svec_dim(n):
    return n * (n + 1) // 2
