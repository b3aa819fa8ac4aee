"""Compilation of the controller-design formulations into block SDPs, and
recovery of the gain and diagnostics from the solved problem.

Decision variables are packed into one vector: svec coordinates for the
symmetric blocks (Sigma, Z0, and the formulation-specific Z blocks) and
row-major entries for the rectangular L = K Sigma.  Every formulation shares
the core LQR structure

    minimize  tr(Q Sigma) + tr(R Z0)  (+ conformity terms)
    s.t.      Sigma >= eps0 I,
              [[Z0, L], [L', Sigma]] >= 0,
              [[Sigma - W - B V B', A Sigma + B L], [., Sigma]] >= 0,

with the data-conforming variants adding their constraints/penalties on top.
The gain is recovered as K = L* Sigma*^{-1}; the dual of the Lyapunov block,
restricted to its leading r_x x r_x corner, is the multiplier that matches
the observability-type Gramian when the relaxed Lyapunov inequality is
active.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, IllConditionedError, NumericalError
from .linalg import smat, solve_psd, svec, svec_dim, symmetrize
from .lqr_core import LqrWeights
from .sdp_solver import STATUS_OPTIMAL, SdpBlock, SdpProblem
from .sysid import EmpiricalMoments, TrajectoryData, empirical_moments, least_squares_id
from .sysid import LinearModel

EPSILON_0 = 1e-8          # floor making Sigma > 0 numerically closed
ACTIVITY_RTOL = 1e-5      # Lyapunov-equality residual threshold
RECOVERY_COND_LIMIT = 1e10
RECOVERY_SHIFT_COND = 1e8

FORMULATIONS = (
    "standard",
    "certainty_equivalence",
    "state_hard",
    "state_band",
    "state_regularized",
    "joint_regularized",
)
_DATA_CONFORMING = ("state_hard", "state_band", "state_regularized", "joint_regularized")


@dataclass
class DesignSpec:
    """A fully-bound design problem: model, weights, data moments, formulation.

    gamma_prime may be zero for ``state_regularized`` (the penalty vanishes
    and the problem coincides with certainty equivalence).
    """

    formulation: str
    weights: LqrWeights
    model: LinearModel = None
    moments: EmpiricalMoments = None
    epsilon: float = None
    gamma_prime: float = None
    gamma: float = None

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.formulation == "state_band" and not (self.epsilon and self.epsilon > 0):
            raise ValueError("state_band requires epsilon > 0")
        if self.formulation == "state_regularized":
            if self.gamma_prime is None or self.gamma_prime < 0:
                raise ValueError("state_regularized requires gamma_prime >= 0")
        if self.formulation == "joint_regularized" and not (self.gamma and self.gamma > 0):
            raise ValueError("joint_regularized requires gamma > 0")
        if self.formulation in _DATA_CONFORMING and self.moments is None:
            raise ValueError(f"{self.formulation} requires empirical moments")


@dataclass
class DesignResult:
    """Recovered controller plus the auxiliary certificates of one design."""

    K: np.ndarray
    Sigma_star: np.ndarray
    L_star: np.ndarray
    aux_blocks: dict
    dual_upsilon: np.ndarray
    lyapunov_active: bool
    objective: float
    solver_status: str
    model: LinearModel
    warnings: list = field(default_factory=list)


class VariableLayout:
    """Maps named matrix variables onto one packed decision vector."""

    def __init__(self):
        self._groups = {}  # name -> (kind, shape, start, size)
        self._size = 0

    def add_symmetric(self, name, n):
        self._add(name, "sym", (n, n), svec_dim(n))

    def add_rectangular(self, name, rows, cols):
        self._add(name, "rect", (rows, cols), rows * cols)

    def _add(self, name, kind, shape, size):
        if name in self._groups:
            raise ValueError(f"duplicate variable {name!r}")
        self._groups[name] = (kind, shape, self._size, size)
        self._size += size

    @property
    def size(self):
        return self._size

    def names(self):
        return list(self._groups)

    def slice_of(self, name):
        _, _, start, size = self._groups[name]
        return slice(start, start + size)

    def _to_matrix(self, name, vec):
        kind, shape, _, _ = self._groups[name]
        if kind == "sym":
            return smat(vec, shape[0])
        return vec.reshape(shape)

    def zeros(self):
        return {
            name: np.zeros(shape) for name, (kind, shape, _, _) in self._groups.items()
        }

    def basis(self, index):
        """Variable matrices for the unit decision vector e_index."""
        out = self.zeros()
        for name, (kind, shape, start, size) in self._groups.items():
            if start <= index < start + size:
                e = np.zeros(size)
                e[index - start] = 1.0
                out[name] = self._to_matrix(name, e)
                break
        return out

    def unpack(self, y):
        y = np.asarray(y, dtype=float)
        return {
            name: self._to_matrix(name, y[start : start + size])
            for name, (kind, shape, start, size) in self._groups.items()
        }


def _compile(layout, objective_fn, block_fns, equalities=None, metadata=None):
    m = layout.size
    zeros = layout.zeros()
    constants = [symmetrize(fn(zeros)) for fn in block_fns]
    c = np.zeros(m)
    coeffs = [np.zeros((m, cst.shape[0], cst.shape[0])) for cst in constants]
    for i in range(m):
        vars_i = layout.basis(i)
        c[i] = objective_fn(vars_i)
        for j, fn in enumerate(block_fns):
            coeffs[j][i] = symmetrize(fn(vars_i)) - constants[j]
    blocks = [
        SdpBlock(dim=cst.shape[0], constant=cst, coefficients=cf)
        for cst, cf in zip(constants, coeffs)
    ]
    return SdpProblem(
        objective=c, blocks=blocks, equalities=equalities, metadata=metadata or {}
    )


def _core_layout(r_x, r_u):
    layout = VariableLayout()
    layout.add_symmetric("Sigma", r_x)
    layout.add_rectangular("L", r_u, r_x)
    layout.add_symmetric("Z0", r_u)
    return layout


def _core_blocks(model: LinearModel, weights: LqrWeights):
    a, b, w = model.A, model.B, model.W
    noise = w + b @ weights.V @ b.T
    r_x = model.r_x

    def positivity(v):
        return v["Sigma"] - EPSILON_0 * np.eye(r_x)

    def gain_epigraph(v):
        return np.block([[v["Z0"], v["L"]], [v["L"].T, v["Sigma"]]])

    def lyapunov(v):
        top = a @ v["Sigma"] + b @ v["L"]
        return np.block([[v["Sigma"] - noise, top], [top.T, v["Sigma"]]])

    return [positivity, gain_epigraph, lyapunov]


def _base_objective(weights):
    def objective(v):
        return float(np.trace(weights.Q @ v["Sigma"]) + np.trace(weights.R @ v["Z0"]))

    return objective


def _metadata(layout, spec):
    # block order: positivity, gain epigraph, Lyapunov, then extras
    return {"layout": layout, "spec": spec, "lyapunov_block": 2}


def build_standard(model: LinearModel, weights: LqrWeights) -> SdpProblem:
    """LQR over the controllability-type Gramian for a known model."""
    layout = _core_layout(model.r_x, model.r_u)
    spec = DesignSpec(formulation="standard", weights=weights, model=model)
    return _compile(
        layout,
        _base_objective(weights),
        _core_blocks(model, weights),
        metadata=_metadata(layout, spec),
    )


def _identify(data: TrajectoryData):
    model = least_squares_id(data)
    try:
        moments = empirical_moments(data)
    except DegenerateDataError:
        moments = None
    return model, moments


def build_certainty_equivalence(data: TrajectoryData, weights: LqrWeights) -> SdpProblem:
    """Standard LQR with the identified (A, B, W) substituted for the truth."""
    model, moments = _identify(data)
    layout = _core_layout(model.r_x, model.r_u)
    spec = DesignSpec(
        formulation="certainty_equivalence", weights=weights, model=model, moments=moments
    )
    return _compile(
        layout,
        _base_objective(weights),
        _core_blocks(model, weights),
        metadata=_metadata(layout, spec),
    )


def build_state_conforming(
    data: TrajectoryData,
    weights: LqrWeights,
    mode="regularized",
    epsilon=None,
    gamma_prime=None,
) -> SdpProblem:
    """State-marginal conformity: hard equality, band, or Frobenius penalty.

    hard:        Sigma == Sigma_data as linear equalities (may be infeasible);
    band:        Sigma_data - eps I <= Sigma <= Sigma_data + eps I;
    regularized: gamma' tr(Z') added with Z' >= (Sigma - Sigma_data)^2.
    A zero gamma' degenerates to the certainty-equivalence problem.
    """
    if mode not in ("hard", "band", "regularized"):
        raise ValueError(f"unknown state-conforming mode {mode!r}")
    if mode == "regularized":
        if gamma_prime is None or gamma_prime < 0:
            raise ValueError("regularized mode requires gamma_prime >= 0")
        if gamma_prime == 0.0:
            return build_certainty_equivalence(data, weights)
    if mode == "band" and not (epsilon and epsilon > 0):
        raise ValueError("band mode requires epsilon > 0")

    model = least_squares_id(data)
    moments = empirical_moments(data)
    sigma_data = moments.sigma_data
    r_x = model.r_x
    blocks = _core_blocks(model, weights)
    base_obj = _base_objective(weights)
    equalities = None

    if mode == "hard":
        layout = _core_layout(r_x, model.r_u)
        sl = layout.slice_of("Sigma")
        a_eq = np.zeros((svec_dim(r_x), layout.size))
        a_eq[:, sl] = np.eye(svec_dim(r_x))
        equalities = (a_eq, svec(sigma_data))
        objective = base_obj
        spec = DesignSpec(
            formulation="state_hard", weights=weights, model=model, moments=moments
        )
    elif mode == "band":
        layout = _core_layout(r_x, model.r_u)

        def lower(v):
            return v["Sigma"] - (sigma_data - epsilon * np.eye(r_x))

        def upper(v):
            return (sigma_data + epsilon * np.eye(r_x)) - v["Sigma"]

        blocks = blocks + [lower, upper]
        objective = base_obj
        spec = DesignSpec(
            formulation="state_band",
            weights=weights,
            model=model,
            moments=moments,
            epsilon=epsilon,
        )
    else:
        layout = _core_layout(r_x, model.r_u)
        layout.add_symmetric("Zp", r_x)

        def frob_epigraph(v):
            gap = v["Sigma"] - sigma_data
            return np.block([[v["Zp"], gap], [gap.T, np.eye(r_x)]])

        blocks = blocks + [frob_epigraph]

        def objective(v):
            return base_obj(v) + gamma_prime * float(np.trace(v["Zp"]))

        spec = DesignSpec(
            formulation="state_regularized",
            weights=weights,
            model=model,
            moments=moments,
            gamma_prime=gamma_prime,
        )
    return _compile(
        layout, objective, blocks, equalities=equalities, metadata=_metadata(layout, spec)
    )


def build_joint_conforming(data: TrajectoryData, weights: LqrWeights, gamma) -> SdpProblem:
    """Joint state-input conformity via the Jeffreys-surrogate penalty.

    Adds Z1 >= Gamma_des, Z2 >= the cross-term square, Z3 >= Sigma^{-1} and
    penalizes gamma * [tr(Gamma_data^{-1} Z1) + tr(V^{-1} Z2) + tr(Sigma_data Z3)].
    """
    if not gamma or gamma <= 0:
        raise ValueError("joint_regularized requires gamma > 0")
    model = least_squares_id(data)
    moments = empirical_moments(data)
    r_x, r_u = model.r_x, model.r_u
    n = r_x + r_u
    sigma_data = moments.sigma_data
    # fixed problem constants: these inverses are formed once per design call
    gamma_data_inv = symmetrize(solve_psd(moments.gamma_data, np.eye(n)))
    v_inv = symmetrize(solve_psd(weights.V, np.eye(r_u)))
    h_t_sigma_inv = solve_psd(moments.sigma_data, moments.h_data).T  # H' Sigma_data^{-1}
    cal_v = np.block(
        [[np.zeros((r_x, r_x)), np.zeros((r_x, r_u))], [np.zeros((r_u, r_x)), weights.V]]
    )

    layout = _core_layout(r_x, r_u)
    layout.add_symmetric("Z1", n)
    layout.add_symmetric("Z2", r_u)
    layout.add_symmetric("Z3", r_x)

    def z1_epigraph(v):
        stacked = np.vstack([v["Sigma"], v["L"]])
        return np.block([[v["Z1"] - cal_v, stacked], [stacked.T, v["Sigma"]]])

    def z2_epigraph(v):
        cross = v["L"] - h_t_sigma_inv @ v["Sigma"]
        return np.block([[v["Z2"], cross], [cross.T, v["Sigma"]]])

    def z3_epigraph(v):
        return np.block([[v["Z3"], np.eye(r_x)], [np.eye(r_x), v["Sigma"]]])

    blocks = _core_blocks(model, weights) + [z1_epigraph, z2_epigraph, z3_epigraph]
    base_obj = _base_objective(weights)

    def objective(v):
        penalty = (
            float(np.trace(gamma_data_inv @ v["Z1"]))
            + float(np.trace(v_inv @ v["Z2"]))
            + float(np.trace(sigma_data @ v["Z3"]))
        )
        return base_obj(v) + gamma * penalty

    spec = DesignSpec(
        formulation="joint_regularized",
        weights=weights,
        model=model,
        moments=moments,
        gamma=gamma,
    )
    return _compile(layout, objective, blocks, metadata=_metadata(layout, spec))


def build_from_data(
    data: TrajectoryData,
    weights: LqrWeights,
    formulation,
    epsilon=None,
    gamma_prime=None,
    gamma=None,
) -> SdpProblem:
    """Dispatch a data-driven formulation name to its builder."""
    if formulation == "certainty_equivalence":
        return build_certainty_equivalence(data, weights)
    if formulation == "state_hard":
        return build_state_conforming(data, weights, mode="hard")
    if formulation == "state_band":
        return build_state_conforming(data, weights, mode="band", epsilon=epsilon)
    if formulation == "state_regularized":
        return build_state_conforming(
            data, weights, mode="regularized", gamma_prime=gamma_prime
        )
    if formulation == "joint_regularized":
        return build_joint_conforming(data, weights, gamma)
    raise ValueError(f"formulation {formulation!r} is not data-driven")


def lyapunov_residual(model: LinearModel, weights: LqrWeights, K, Sigma):
    """Frobenius residual of the closed-loop covariance equation at (K, Sigma)."""
    a_cl = model.A + model.B @ K
    lhs = a_cl @ Sigma @ a_cl.T - Sigma + model.W + model.B @ weights.V @ model.B.T
    return float(np.linalg.norm(lhs, "fro"))


def recover_design(problem: SdpProblem, solution, spec: DesignSpec = None) -> DesignResult:
    """Extract K = L* Sigma*^{-1}, auxiliary blocks, dual multiplier, activity."""
    if solution.status != STATUS_OPTIMAL:
        raise NumericalError(
            f"cannot recover a design from a {solution.status!r} solution"
        )
    if spec is None:
        spec = problem.metadata["spec"]
    layout = problem.metadata["layout"]
    vars_ = layout.unpack(solution.y)
    sigma = symmetrize(vars_["Sigma"])
    l_star = vars_["L"]
    r_x = sigma.shape[0]

    w = np.linalg.eigvalsh(sigma)
    lam_min = float(w[0])
    lam_max = float(w[-1])
    cond = np.inf if lam_min <= 0.0 else lam_max / lam_min
    if cond > RECOVERY_COND_LIMIT:
        raise IllConditionedError(
            f"design covariance condition number {cond:.3e} exceeds {RECOVERY_COND_LIMIT:.0e}"
        )
    warnings = []
    sigma_solve = sigma
    if cond > RECOVERY_SHIFT_COND:
        shift = 1e-12 * np.trace(sigma) / r_x
        sigma_solve = sigma + shift * np.eye(r_x)
        warnings.append(f"near-singular Sigma*: applied Tikhonov shift {shift:.3e}")
    k = solve_psd(sigma_solve, l_star.T).T

    aux = {
        name: symmetrize(vars_[name])
        for name in layout.names()
        if name not in ("Sigma", "L")
    }
    lyap_idx = problem.metadata["lyapunov_block"]
    dual = solution.dual_blocks[lyap_idx]
    upsilon = symmetrize(dual[:r_x, :r_x])

    resid = lyapunov_residual(spec.model, spec.weights, k, sigma)
    active = resid <= ACTIVITY_RTOL * (1.0 + np.linalg.norm(sigma, "fro"))

    return DesignResult(
        K=k,
        Sigma_star=sigma,
        L_star=l_star,
        aux_blocks=aux,
        dual_upsilon=upsilon,
        lyapunov_active=bool(active),
        objective=float(solution.objective),
        solver_status=solution.status,
        model=spec.model,
        warnings=warnings,
    )


def activity_report(spec: DesignSpec, result: DesignResult):
    """Lyapunov-constraint activity plus the definiteness class of the
    stationarity term whose positivity forces the constraint active."""
    resid = lyapunov_residual(spec.model, spec.weights, result.K, result.Sigma_star)
    active = resid <= ACTIVITY_RTOL * (1.0 + np.linalg.norm(result.Sigma_star, "fro"))
    term = _stationarity_term(spec, result)
    w = np.linalg.eigvalsh(term)
    scale = 1e-9 * (1.0 + float(np.max(np.abs(w))))
    if w[0] > scale:
        definiteness = "pd"
    elif w[0] >= -scale:
        definiteness = "psd"
    elif w[-1] <= scale:
        definiteness = "nsd"
    else:
        definiteness = "indefinite"
    return {
        "lyapunov_residual": resid,
        "active": bool(active),
        "term_definiteness": definiteness,
    }


def _stationarity_term(spec: DesignSpec, result: DesignResult):
    q, r = spec.weights.Q, spec.weights.R
    k = result.K
    base = q + k.T @ r @ k
    if spec.formulation == "state_regularized":
        return symmetrize(
            base + 2.0 * spec.gamma_prime * (result.Sigma_star - spec.moments.sigma_data)
        )
    if spec.formulation == "joint_regularized":
        n = spec.moments.gamma_data.shape[0]
        r_x = result.Sigma_star.shape[0]
        gamma_data_inv = symmetrize(solve_psd(spec.moments.gamma_data, np.eye(n)))
        cal_a = gamma_data_inv[:r_x, :r_x]
        cal_b = gamma_data_inv[:r_x, r_x:]
        cal_c = gamma_data_inv[r_x:, r_x:]
        sigma_inv_sd = solve_psd(result.Sigma_star, spec.moments.sigma_data)
        curvature = solve_psd(result.Sigma_star, sigma_inv_sd.T).T
        g = spec.gamma
        return symmetrize(
            base
            + g * cal_a
            + g * k.T @ cal_c @ k
            + g * (k.T @ cal_b.T + cal_b @ k)
            - g * curvature
        )
    return symmetrize(base)
