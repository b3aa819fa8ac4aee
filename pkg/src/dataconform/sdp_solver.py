"""Dense primal-dual interior-point solver for affine SDPs with
block-diagonal PSD cones.

Problem geometry (one LMI per block j, m scalar decision variables):

    minimize    c' y
    subject to  S_j(y) = F0_j + sum_i y_i F_{j,i}  PSD for every block j,
                A_eq y = b_eq                      (optional equalities).

The Lagrange dual is

    maximize   -sum_j <F0_j, Z_j>
    subject to  sum_j <F_{j,i}, Z_j> = c_i,   Z_j PSD,

and tr(S_j Z_j) summed over blocks is the complementarity gap.

Algorithm: infeasible-start path following with Nesterov-Todd scaling and a
Mehrotra predictor-corrector step, solved through the m x m Schur complement
M_ik = sum_j <F_i, W^{-1} F_k W^{-1}> which is symmetric positive definite.
Linear equalities are eliminated onto their nullspace before the cone solve.
Iterates are logged so determinism and per-iterate duality can be audited;
at infeasible iterates the weak-duality inequality carries the correction
term |y' r_p| + |<R_d, Z>| recorded alongside (it vanishes with the
feasibility residuals).

Backends are pluggable through :func:`register_backend`; the built-in dense
engine above is the reference implementation.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .linalg import symmetrize

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_NUMERICAL_FAILURE = "numerical_failure"

_UNBOUNDED_OBJECTIVE = 1e12


@dataclass
class SdpBlock:
    """One LMI block: constant matrix plus one coefficient matrix per variable."""

    dim: int
    constant: np.ndarray
    coefficients: np.ndarray  # (num_vars, dim, dim)

    def __post_init__(self):
        self.constant = symmetrize(self.constant)
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.constant.shape != (self.dim, self.dim):
            raise ValueError("constant block has wrong dimension")
        if self.coefficients.ndim != 3 or self.coefficients.shape[1:] != (self.dim, self.dim):
            raise ValueError("coefficient blocks must be (num_vars, dim, dim)")
        if not np.allclose(self.coefficients, np.swapaxes(self.coefficients, 1, 2)):
            raise ValueError("coefficient blocks must be symmetric")
        self.coefficients = 0.5 * (self.coefficients + np.swapaxes(self.coefficients, 1, 2))


@dataclass
class SdpProblem:
    """Standard-form block SDP; see the module docstring for the geometry.

    ``equalities`` is an optional pair (A_eq, b_eq); each row of A_eq with the
    matching entry of b_eq is one linear equality constraint on y.
    ``metadata`` is carried through untouched (builders stash variable layout
    there); the solver never reads it.
    """

    objective: np.ndarray
    blocks: list
    equalities: tuple = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        for blk in self.blocks:
            if blk.coefficients.shape[0] != self.num_vars:
                raise ValueError("coefficient count must equal num_vars in every block")
        if self.equalities is not None:
            a, b = self.equalities
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.asarray(b, dtype=float).reshape(-1)
            if a.shape != (b.shape[0], self.num_vars):
                raise ValueError("equality system shape mismatch")
            self.equalities = (a, b)

    @property
    def num_vars(self):
        return self.objective.shape[0]

    def to_json_dict(self):
        """Debug representation with dense row-major entries."""
        doc = {
            "num_vars": self.num_vars,
            "objective": self.objective.tolist(),
            "blocks": [
                {
                    "dim": blk.dim,
                    "constant": blk.constant.tolist(),
                    "coefficients": [c.tolist() for c in blk.coefficients],
                }
                for blk in self.blocks
            ],
        }
        if self.equalities is not None:
            a, b = self.equalities
            doc["equalities"] = [
                {"row": a[i].tolist(), "rhs": float(b[i])} for i in range(b.shape[0])
            ]
        return doc

    def dump_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


@dataclass
class SolveOptions:
    max_iters: int = 200
    tol: float = 1e-8
    verbose: bool = False
    step_scale: float = 0.98


@dataclass
class IterateRecord:
    """Per-iteration audit record; y is a copy of the iterate."""

    y: np.ndarray
    primal_obj: float
    dual_obj: float
    gap: float
    primal_res: float
    dual_res: float
    feas_correction: float


@dataclass
class SdpSolution:
    y: np.ndarray
    slack_blocks: list
    dual_blocks: list
    status: str
    gap: float
    iterations: int
    objective: float
    trace: list = field(default_factory=list)
    certificate: list = None
    message: str = ""


def _chol(m):
    return np.linalg.cholesky(symmetrize(m))


def _psd_factor(m):
    """Square factor L with L L' = m; falls back to a clipped eigenfactor
    when the matrix is numerically on the cone boundary."""
    try:
        return _chol(m)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(symmetrize(m))
        floor = max(w[-1], 1.0) * 1e-14
        return v * np.sqrt(np.clip(w, floor, None))


def _step_to_boundary(blocks, deltas):
    """Largest a with X + a dX staying PSD across all blocks."""
    alpha = np.inf
    for x, dx in zip(blocks, deltas):
        l = _psd_factor(x)
        linv = np.linalg.inv(l)
        w = np.linalg.eigvalsh(symmetrize(linv @ dx @ linv.T))
        if w[0] < 0.0:
            alpha = min(alpha, -1.0 / w[0])
    return alpha


class _Workspace:
    """Per-solve state for the built-in engine (no sharing between solves)."""

    def __init__(self, c, blocks):
        self.c = c
        self.m = c.shape[0]
        self.dims = [blk.dim for blk in blocks]
        self.F0 = [blk.constant for blk in blocks]
        self.F = [blk.coefficients for blk in blocks]
        self.ntot = sum(self.dims)
        self.f0_scale = 1.0 + max(np.linalg.norm(f0, "fro") for f0 in self.F0)
        self.c_scale = 1.0 + np.linalg.norm(c)

    def apply_adjoint(self, y):
        # A*(y) per block: sum_i y_i F_{j,i}
        return [np.einsum("i,ikl->kl", y, fj) for fj in self.F]

    def apply_forward(self, zs):
        # [A(Z)]_i = sum_j <F_{j,i}, Z_j>
        out = np.zeros(self.m)
        for fj, zj in zip(self.F, zs):
            out += np.einsum("ikl,kl->i", fj, zj)
        return out


def _nt_scalings(ss, zs):
    """Per block: (G, Ginv, lam) with W = G G', G^{-1} S G^{-T} = G' Z G = diag(lam)."""
    scal = []
    for s, z in zip(ss, zs):
        ls = _psd_factor(s)
        lz = _psd_factor(z)
        u, sv, vt = np.linalg.svd(lz.T @ ls)
        if sv[-1] <= 0.0:
            raise np.linalg.LinAlgError("NT scaling broke down")
        g = ls @ vt.T / np.sqrt(sv)
        ginv = (np.sqrt(sv)[:, None] * vt) @ np.linalg.inv(ls)
        scal.append((g, ginv, sv))
    return scal


def _solve_builtin(problem: SdpProblem, options: SolveOptions) -> SdpSolution:
    if problem.equalities is not None:
        return _solve_with_equalities(problem, options)
    return _solve_cone(problem, options)


def _solve_with_equalities(problem, options):
    a_eq, b_eq = problem.equalities
    y_part, _, _, _ = np.linalg.lstsq(a_eq, b_eq, rcond=None)
    if np.linalg.norm(a_eq @ y_part - b_eq) > 1e-8 * (1.0 + np.linalg.norm(b_eq)):
        return SdpSolution(
            y=y_part,
            slack_blocks=[],
            dual_blocks=[],
            status=STATUS_INFEASIBLE,
            gap=np.inf,
            iterations=0,
            objective=np.nan,
            message="inconsistent equality constraints",
        )
    _, sv, vt = np.linalg.svd(a_eq)
    tol_rank = max(a_eq.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol_rank))
    nullbasis = vt[rank:].T  # m x (m - rank)
    if nullbasis.shape[1] == 0:
        return _evaluate_pinned(problem, y_part, options)
    shifted = [
        SdpBlock(
            dim=blk.dim,
            constant=blk.constant + np.einsum("i,ikl->kl", y_part, blk.coefficients),
            coefficients=np.einsum("ik,ipq->kpq", nullbasis, blk.coefficients),
        )
        for blk in problem.blocks
    ]
    reduced = SdpProblem(objective=nullbasis.T @ problem.objective, blocks=shifted)
    sol = _solve_cone(reduced, options)
    y_full = y_part + nullbasis @ sol.y
    objective = float(problem.objective @ y_full) if np.all(np.isfinite(y_full)) else np.nan
    return SdpSolution(
        y=y_full,
        slack_blocks=sol.slack_blocks,
        dual_blocks=sol.dual_blocks,
        status=sol.status,
        gap=sol.gap,
        iterations=sol.iterations,
        objective=objective,
        trace=sol.trace,
        certificate=sol.certificate,
        message=sol.message,
    )


def _evaluate_pinned(problem, y, options):
    # all variables fixed by the equalities; only feasibility is left to check
    ws = _Workspace(problem.objective, problem.blocks)
    slacks = [symmetrize(f0 + ay) for f0, ay in zip(ws.F0, ws.apply_adjoint(y))]
    feasible = all(np.linalg.eigvalsh(s)[0] >= -options.tol * ws.f0_scale for s in slacks)
    status = STATUS_OPTIMAL if feasible else STATUS_INFEASIBLE
    return SdpSolution(
        y=y,
        slack_blocks=slacks,
        dual_blocks=[np.zeros((d, d)) for d in ws.dims],
        status=status,
        gap=0.0 if feasible else np.inf,
        iterations=0,
        objective=float(problem.objective @ y),
        message="all variables pinned by equalities",
    )


def _solve_cone(problem, options):
    ws = _Workspace(problem.objective, problem.blocks)
    c = ws.c
    eta = ws.f0_scale
    y = np.zeros(ws.m)
    ss = [eta * np.eye(d) for d in ws.dims]
    zs = [eta * np.eye(d) for d in ws.dims]
    trace = []
    best = None
    status = STATUS_NUMERICAL_FAILURE
    message = "iteration cap reached"
    certificate = None
    iterations = 0

    for it in range(options.max_iters):
        iterations = it + 1
        adj = ws.apply_adjoint(y)
        rd = [f0 + ay - s for f0, ay, s in zip(ws.F0, adj, ss)]
        rp = c - ws.apply_forward(zs)
        gap = sum(float(np.sum(s * z)) for s, z in zip(ss, zs))
        mu = gap / ws.ntot
        pobj = float(c @ y)
        dobj = -sum(float(np.sum(f0 * z)) for f0, z in zip(ws.F0, zs))
        pres = np.sqrt(sum(np.linalg.norm(r, "fro") ** 2 for r in rd)) / ws.f0_scale
        dres = np.linalg.norm(rp) / ws.c_scale
        correction = abs(float(y @ rp)) + abs(
            sum(float(np.sum(r * z)) for r, z in zip(rd, zs))
        )
        trace.append(
            IterateRecord(
                y=y.copy(),
                primal_obj=pobj,
                dual_obj=dobj,
                gap=gap,
                primal_res=float(pres),
                dual_res=float(dres),
                feas_correction=correction,
            )
        )
        if options.verbose:
            print(
                f"  it {it:3d}  pobj {pobj: .6e}  dobj {dobj: .6e}  "
                f"gap {gap:.3e}  pres {pres:.3e}  dres {dres:.3e}"
            )
        best = (y.copy(), [s.copy() for s in ss], [z.copy() for z in zs], gap)

        relgap = gap / (1.0 + abs(pobj) + abs(dobj))
        if pres <= options.tol and dres <= options.tol and relgap <= options.tol:
            status = STATUS_OPTIMAL
            message = "converged"
            break

        # Farkas-type certificate of LMI infeasibility: Z PSD with A(Z) ~ 0
        # and <F0, Z> < 0; the dual iterates grow along this ray.
        znorm = sum(np.linalg.norm(z, "fro") for z in zs)
        cert_val = -dobj / znorm
        cert_res = np.linalg.norm(c - rp) / znorm
        if it > 0 and cert_val < -options.tol and cert_res < options.tol * ws.c_scale:
            status = STATUS_INFEASIBLE
            certificate = [z / znorm for z in zs]
            message = "primal infeasibility certificate found"
            break
        if pobj < -_UNBOUNDED_OBJECTIVE * (ws.f0_scale + ws.c_scale):
            status = STATUS_UNBOUNDED
            message = "objective unbounded below"
            break

        try:
            scal = _nt_scalings(ss, zs)
            # Schur complement M_ik = sum_j <Ginv F_i Ginv', Ginv F_k Ginv'>
            mmat = np.zeros((ws.m, ws.m))
            for (g, ginv, lam), fj in zip(scal, ws.F):
                u = np.einsum("pq,iqr,sr->ips", ginv, fj, ginv)
                flat = u.reshape(ws.m, -1)
                mmat += flat @ flat.T
            try:
                mchol = _chol(mmat)
            except np.linalg.LinAlgError:
                jitter = 1e-14 * (1.0 + np.trace(mmat) / ws.m)
                mchol = _chol(mmat + jitter * np.eye(ws.m))

            def solve_direction(rhat):
                cs, winv_rd = [], []
                rhs = -rp.copy()
                for j, ((g, ginv, lam), fj) in enumerate(zip(scal, ws.F)):
                    gamma = 2.0 / np.add.outer(lam, lam)
                    cj = ginv.T @ (gamma * rhat[j]) @ ginv
                    wr = ginv.T @ (ginv @ rd[j] @ ginv.T) @ ginv
                    cs.append(cj)
                    winv_rd.append(wr)
                    rhs += np.einsum("ikl,kl->i", fj, cj - wr)
                dy = np.linalg.solve(mchol.T, np.linalg.solve(mchol, rhs))
                dss, dzs = [], []
                for j, ((g, ginv, lam), fj) in enumerate(zip(scal, ws.F)):
                    dsj = np.einsum("i,ikl->kl", dy, fj) + rd[j]
                    dsj = symmetrize(dsj)
                    winv_ds = ginv.T @ (ginv @ dsj @ ginv.T) @ ginv
                    dzs.append(symmetrize(cs[j] - winv_ds))
                    dss.append(dsj)
                return dy, dss, dzs

            # predictor (affine scaling) step
            rhat_aff = [np.diag(-(lam ** 2)) for (_, _, lam) in scal]
            dy_a, ds_a, dz_a = solve_direction(rhat_aff)
            alpha_s = min(1.0, _step_to_boundary(ss, ds_a))
            alpha_z = min(1.0, _step_to_boundary(zs, dz_a))
            gap_aff = sum(
                float(np.sum((s + alpha_s * ds) * (z + alpha_z * dz)))
                for s, ds, z, dz in zip(ss, ds_a, zs, dz_a)
            )
            sigma = min(1.0, max(0.0, gap_aff / gap) ** 3)

            # corrector with Mehrotra second-order term in the scaled space
            rhat = []
            for j, (g, ginv, lam) in enumerate(scal):
                dz_hat = g.T @ dz_a[j] @ g
                ds_hat = ginv @ ds_a[j] @ ginv.T
                cross = dz_hat @ ds_hat
                rhat.append(
                    sigma * mu * np.eye(len(lam)) - np.diag(lam ** 2) - 0.5 * (cross + cross.T)
                )
            dy, dss, dzs = solve_direction(rhat)
            # lengthen the damped step as the affine step approaches a full one
            tau = min(
                0.999,
                max(options.step_scale, 0.9 + 0.099 * min(1.0, alpha_s, alpha_z)),
            )
            alpha_s = min(1.0, tau * _step_to_boundary(ss, dss))
            alpha_z = min(1.0, tau * _step_to_boundary(zs, dzs))
        except np.linalg.LinAlgError as exc:
            status = STATUS_NUMERICAL_FAILURE
            message = f"linear algebra breakdown: {exc}"
            break

        y = y + alpha_s * dy
        ss = [symmetrize(s + alpha_s * ds) for s, ds in zip(ss, dss)]
        zs = [symmetrize(z + alpha_z * dz) for z, dz in zip(zs, dzs)]

    y_out, s_out, z_out, gap_out = best if best is not None else (y, ss, zs, np.inf)
    return SdpSolution(
        y=y_out,
        slack_blocks=s_out,
        dual_blocks=z_out,
        status=status,
        gap=gap_out,
        iterations=iterations,
        objective=float(ws.c @ y_out),
        trace=trace,
        certificate=certificate,
        message=message,
    )


_BACKENDS = {"builtin": _solve_builtin}


def register_backend(name, solver):
    """Register an external conic backend with the solve_sdp signature."""
    if not callable(solver):
        raise TypeError("solver backend must be callable")
    _BACKENDS[name] = solver


def solve_sdp(problem: SdpProblem, options: SolveOptions = None, backend="builtin") -> SdpSolution:
    """Solve a block SDP; deterministic for identical problems and options."""
    if options is None:
        options = SolveOptions()
    if backend not in _BACKENDS:
        raise NumericalError(f"unknown solver backend {backend!r}")
    for blk in problem.blocks:
        if blk.coefficients.shape[0] != problem.num_vars:
            raise ValueError("problem blocks disagree with num_vars")
    return _BACKENDS[backend](problem, options)


def kkt_residuals(problem: SdpProblem, solution: SdpSolution):
    """Recomputed KKT diagnostics: primal_res, dual_res, gap, complementarity."""
    ws = _Workspace(problem.objective, problem.blocks)
    slacks = [f0 + ay for f0, ay in zip(ws.F0, ws.apply_adjoint(solution.y))]
    primal = 0.0
    for s in slacks:
        w = np.linalg.eigvalsh(symmetrize(s))
        primal = max(primal, max(0.0, -float(w[0])))
    if problem.equalities is not None:
        a_eq, b_eq = problem.equalities
        primal += float(np.linalg.norm(a_eq @ solution.y - b_eq, np.inf))
    dual = 0.0
    if solution.dual_blocks:
        dual = float(np.linalg.norm(ws.c - ws.apply_forward(solution.dual_blocks)))
        for z in solution.dual_blocks:
            w = np.linalg.eigvalsh(symmetrize(z))
            dual += max(0.0, -float(w[0]))
    pobj = float(ws.c @ solution.y)
    dobj = -sum(
        float(np.sum(f0 * z)) for f0, z in zip(ws.F0, solution.dual_blocks)
    ) if solution.dual_blocks else pobj
    comp = 0.0
    for s, z in zip(slacks, solution.dual_blocks):
        comp = max(comp, abs(float(np.sum(s * z))))
    return {
        "primal_res": primal,
        "dual_res": dual,
        "gap": abs(pobj - dobj),
        "complementarity": comp,
    }
