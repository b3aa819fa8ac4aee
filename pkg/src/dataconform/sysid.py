"""Trajectory records, persistent-excitation checks, least-squares
identification, and empirical moment estimation.

The raw record is the stacked data matrix D = [X; U] holding N+1 state and
input samples.  Identification regresses the shifted states X1 on [X0; U0];
moments are computed from mean-centered columns with 1/(N+1) normalization.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, NotPsdError, PeViolationError
from .linalg import is_psd, symmetrize

RANK_RTOL = 1e-8          # relative singular-value cutoff for numerical rank
COND_LIMIT = 1e12         # covariance condition bound before data is degenerate


def min_samples(r_x, r_u):
    """Identifiability lower bound on the sample horizon N."""
    return (r_u + 1) * r_x + r_u


@dataclass
class TrajectoryData:
    """State/input record: X is r_x x (N+1), U is r_u x (N+1).

    ``diverged`` marks a simulation that was cut short because a state entry
    left the recordable range; such records never enter identification.
    """

    X: np.ndarray
    U: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        if self.X.shape[1] != self.U.shape[1]:
            raise ValueError(
                f"X and U must have equal column counts, got {self.X.shape[1]} and {self.U.shape[1]}"
            )
        if self.X.shape[1] < 2:
            raise ValueError("need at least two samples (N >= 1)")

    @property
    def r_x(self):
        return self.X.shape[0]

    @property
    def r_u(self):
        return self.U.shape[0]

    @property
    def N(self):
        return self.X.shape[1] - 1

    @property
    def X0(self):
        return self.X[:, :-1]

    @property
    def X1(self):
        return self.X[:, 1:]

    @property
    def U0(self):
        return self.U[:, :-1]

    def data_matrix(self):
        """The stacked (r_x + r_u) x (N+1) record D = [X; U]."""
        return np.vstack([self.X, self.U])

    def to_csv(self, path):
        """Write `k,x1..x{r_x},u1..u{r_u}` rows, one per time step."""
        header = (
            ["k"]
            + [f"x{i + 1}" for i in range(self.r_x)]
            + [f"u{i + 1}" for i in range(self.r_u)]
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(self.N + 1):
                row = [k] + [f"{v:.17g}" for v in self.X[:, k]] + [
                    f"{v:.17g}" for v in self.U[:, k]
                ]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path):
        """Parse a trajectory CSV, enforcing the identifiability bound on N."""
        if hasattr(path, "read"):
            return cls._parse(path)
        with open(path, "r", newline="", encoding="utf-8") as fh:
            return cls._parse(fh)

    @classmethod
    def _parse(cls, fh):
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV") from None
        if not header or header[0] != "k":
            raise ValueError("first CSV column must be 'k'")
        r_x = sum(1 for name in header if name.startswith("x"))
        r_u = sum(1 for name in header if name.startswith("u"))
        expected = ["k"] + [f"x{i + 1}" for i in range(r_x)] + [f"u{i + 1}" for i in range(r_u)]
        if header != expected:
            raise ValueError(f"unexpected CSV header {header!r}")
        xs, us = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != 1 + r_x + r_u:
                raise ValueError(f"row has {len(row)} fields, expected {1 + r_x + r_u}")
            vals = [float(v) for v in row[1:]]
            xs.append(vals[:r_x])
            us.append(vals[r_x:])
        if len(xs) < 2:
            raise ValueError("trajectory CSV must contain at least two rows")
        data = cls(np.array(xs).T, np.array(us).T)
        bound = min_samples(r_x, r_u)
        if data.N < bound:
            raise ValueError(
                f"insufficient samples: N={data.N} below identifiability bound {bound}"
            )
        return data

    def to_csv_string(self):
        buf = io.StringIO()
        header = (
            ["k"]
            + [f"x{i + 1}" for i in range(self.r_x)]
            + [f"u{i + 1}" for i in range(self.r_u)]
        )
        writer = csv.writer(buf)
        writer.writerow(header)
        for k in range(self.N + 1):
            writer.writerow(
                [k]
                + [f"{v:.17g}" for v in self.X[:, k]]
                + [f"{v:.17g}" for v in self.U[:, k]]
            )
        return buf.getvalue()


@dataclass
class LinearModel:
    """State-space model x+ = A x + B u + w with process-noise covariance W."""

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.W = symmetrize(self.W)
        if self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A must be square")
        if self.B.shape[0] != self.A.shape[0]:
            raise ValueError("B row count must match A")
        if self.W.shape != self.A.shape:
            raise ValueError("W must be r_x x r_x")
        if not is_psd(self.W):
            raise NotPsdError("process-noise covariance W must be PSD")

    @property
    def r_x(self):
        return self.A.shape[0]

    @property
    def r_u(self):
        return self.B.shape[1]


@dataclass
class EmpiricalMoments:
    """Second moments of the centered record: blocks of gamma_data.

    gamma_data = [[sigma_data, h_data], [h_data.T, m_data]] exactly, and is
    required to be positive definite.
    """

    sigma_data: np.ndarray
    h_data: np.ndarray
    m_data: np.ndarray
    gamma_data: np.ndarray
    mu_data: np.ndarray

    @property
    def r_x(self):
        return self.sigma_data.shape[0]

    @property
    def r_u(self):
        return self.m_data.shape[0]


def check_pe(data: TrajectoryData):
    """Persistent-excitation check: numerical row rank of D = [X; U].

    Returns (satisfied, rank) where satisfied means rank == r_x + r_u.
    """
    d = data.data_matrix()
    sv = np.linalg.svd(d, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return False, 0
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    return rank == data.r_x + data.r_u, rank


def least_squares_id(data: TrajectoryData) -> LinearModel:
    """Least-squares fit of (A, B) to the shifted record, plus residual covariance.

    Solves min ||X1 - [A, B] [X0; U0]||_F through the QR-based lstsq path and
    sets W_hat = (1/N) Xerr Xerr'.  Raises PeViolationError on rank-deficient
    regressors or when N is below the identifiability bound.
    """
    required = data.r_x + data.r_u
    bound = min_samples(data.r_x, data.r_u)
    if data.N < bound:
        raise PeViolationError(
            f"N={data.N} below identifiability bound {bound}", rank=None, required=required
        )
    phi = np.vstack([data.X0, data.U0])
    satisfied, rank = check_pe(data)
    if not satisfied:
        raise PeViolationError(
            f"persistent excitation violated: rank {rank} < {required}",
            rank=rank,
            required=required,
        )
    coeffs, _, _, _ = np.linalg.lstsq(phi.T, data.X1.T, rcond=None)
    ab = coeffs.T
    a_hat = ab[:, : data.r_x]
    b_hat = ab[:, data.r_x:]
    x_err = data.X1 - ab @ phi
    w_hat = symmetrize(x_err @ x_err.T / data.N)
    return LinearModel(a_hat, b_hat, w_hat)


def empirical_moments(data: TrajectoryData) -> EmpiricalMoments:
    """Sample mean and 1/(N+1)-normalized covariance blocks of the record.

    The sample mean is subtracted before forming second moments so gamma_data
    is a true covariance.  Raises DegenerateDataError unless gamma_data is
    positive definite with condition number below 1e12.
    """
    d = data.data_matrix()
    mu = d.mean(axis=1)
    centered = d - mu[:, None]
    gamma = symmetrize(centered @ centered.T / (data.N + 1))
    w = np.linalg.eigvalsh(gamma)
    if w[0] <= 0.0 or w[-1] / w[0] > COND_LIMIT:
        raise DegenerateDataError(
            f"empirical covariance not positive definite (eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}])"
        )
    r_x = data.r_x
    return EmpiricalMoments(
        sigma_data=gamma[:r_x, :r_x].copy(),
        h_data=gamma[:r_x, r_x:].copy(),
        m_data=gamma[r_x:, r_x:].copy(),
        gamma_data=gamma,
        mu_data=mu,
    )
