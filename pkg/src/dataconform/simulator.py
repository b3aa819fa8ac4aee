"""Stochastic closed-loop simulation and seeded Monte Carlo campaigns.

Plants: the benchmark two-state linear system, its variant with a quadratic
state nonlinearity, and the variant whose input gain is coupled to the state
through a tanh term.  A campaign repeats (i) an excitation experiment under
the initial law, (ii) identification and controller design for each requested
formulation, (iii) closed-loop evaluation of each design, and reports
stability percentages, conformity gaps, and Lyapunov-activity rates.

Randomness is counter-based (Philox streams keyed by master seed, repetition,
and resampling attempt), so repetitions are reproducible and independent of
execution order; campaigns may run repetitions in parallel processes.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataConformError, NumericalError
from .linalg import spectral_radius, sqrtm_psd, symmetrize
from .lmi_builder import activity_report, build_from_data, build_standard, recover_design
from .lqr_core import LqrWeights, solve_dlyap_controllability
from .regularizers import design_covariance, frobenius_gap, jeffreys_f
from .sdp_solver import STATUS_OPTIMAL, SolveOptions, solve_sdp
from .sysid import LinearModel, TrajectoryData, empirical_moments

DIVERGENCE_LIMIT = 1e9
MAX_PHASE1_ATTEMPTS = 1000

PLANT_KINDS = ("linear", "quad_nonlinear", "bilinear_tanh")

# benchmark system: x+ = A x + B u + w, W = diag(0.2, 0.1)
BENCHMARK_A = np.array([[0.98, 0.1], [0.0, 0.95]])
BENCHMARK_B = np.array([[0.0], [0.1]])
BENCHMARK_W = np.diag([0.2, 0.1])
BENCHMARK_K0 = np.array([[-0.2, -9.0]])
BENCHMARK_THETA = 1.0 / 9.0


@dataclass(frozen=True)
class Plant:
    """Simulation plant: a linear part plus an optional fixed nonlinearity."""

    kind: str
    linear_part: LinearModel
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in PLANT_KINDS:
            raise ValueError(f"unknown plant kind {self.kind!r}")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.kind != "linear" and (self.linear_part.r_x, self.linear_part.r_u) != (2, 1):
            raise ValueError(f"{self.kind} plant requires r_x=2, r_u=1")


@dataclass(frozen=True)
class ControlLaw:
    """State feedback with exploration noise: u = K x + v, v ~ N(0, V)."""

    K: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=float)))
        object.__setattr__(self, "V", symmetrize(self.V))


@dataclass
class DesignRequest:
    """Campaign-level request: the formulation and hyperparameters to bind
    against each repetition's identified data."""

    label: str
    formulation: str
    epsilon: float = None
    gamma_prime: float = None
    gamma: float = None


@dataclass
class CampaignConfig:
    plant: Plant
    initial_law: ControlLaw
    weights: LqrWeights
    designs: list
    horizon: int = 2000
    repetitions: int = 1000
    stability_threshold: float = 50.0
    master_seed: int = 0
    jobs: int = 1
    solver_tol: float = 1e-8

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.stability_threshold <= 0:
            raise ValueError("stability threshold must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class DesignOutcome:
    """Per-repetition record for one design."""

    solved: bool
    stable: bool = False
    frob_gap: float = np.nan
    jeffreys: float = np.nan
    active: bool = False


@dataclass
class RepetitionResult:
    index: int
    attempts: int
    outcomes: list  # one DesignOutcome per design request


@dataclass
class DesignSummary:
    label: str
    formulation: str
    n_evaluated: int
    n_stable: int
    n_designed_failures: int
    percent_stable: float
    mean_frobenius_gap: float
    mean_F: float
    activity_rate: float

    def to_dict(self):
        return {
            "label": self.label,
            "formulation": self.formulation,
            "n_evaluated": self.n_evaluated,
            "n_stable": self.n_stable,
            "n_designed_failures": self.n_designed_failures,
            "percent_stable": self.percent_stable,
            "mean_frobenius_gap": self.mean_frobenius_gap,
            "mean_F": self.mean_F,
            "activity_rate": self.activity_rate,
        }


@dataclass
class CampaignReport:
    designs: list  # DesignSummary per request
    repetitions: int
    phase1_rejections: int
    master_seed: int
    stability_threshold: float

    def to_dict(self):
        return {
            "repetitions": self.repetitions,
            "phase1_rejections": self.phase1_rejections,
            "master_seed": self.master_seed,
            "stability_threshold": self.stability_threshold,
            "designs": [d.to_dict() for d in self.designs],
        }

    def to_json(self, path=None):
        doc = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(doc + "\n")
        return doc


def benchmark_plant(kind="linear", theta=BENCHMARK_THETA):
    """The paper-scale two-state benchmark in any of the three variants."""
    model = LinearModel(BENCHMARK_A, BENCHMARK_B, BENCHMARK_W)
    return Plant(kind=kind, linear_part=model, theta=theta if kind != "linear" else 0.0)


def step(plant: Plant, x, u, w):
    """One transition of the plant; no stability bookkeeping happens here."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    a, b = plant.linear_part.A, plant.linear_part.B
    if x.shape[0] != a.shape[0] or u.shape[0] != b.shape[1] or w.shape[0] != a.shape[0]:
        raise ValueError("state/input/noise dimensions do not match the plant")
    if plant.kind == "linear":
        return a @ x + b @ u + w
    nonlin = np.array([plant.theta * x[1] ** 2, 0.0])
    if plant.kind == "quad_nonlinear":
        return a @ x + nonlin + b @ u + w
    # bilinear_tanh: the input column is [0, 0.1 + theta*tanh(x1)]
    b_eff = np.array([[0.0], [0.1 + plant.theta * np.tanh(x[0])]])
    return a @ x + nonlin + b_eff @ u + w


def _as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate(plant: Plant, law: ControlLaw, x0, horizon, seed) -> TrajectoryData:
    """Run the closed loop for `horizon` steps, recording N+1 state/input pairs.

    Noise w_k ~ N(0, W) and exploration v_k ~ N(0, V) are drawn up front from
    the given seed or generator, so truncation by divergence does not change
    the draws.  Recording stops (and the record is flagged diverged) once any
    state entry leaves [-1e9, 1e9] or is non-finite.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = _as_generator(seed)
    model = plant.linear_part
    r_x, r_u = model.r_x, model.r_u
    chol_w = np.linalg.cholesky(model.W) if np.any(model.W) else np.zeros((r_x, r_x))
    chol_v = np.linalg.cholesky(law.V) if np.any(law.V) else np.zeros((r_u, r_u))
    wdraws = rng.standard_normal((horizon, r_x)) @ chol_w.T
    vdraws = rng.standard_normal((horizon + 1, r_u)) @ chol_v.T

    xs = np.empty((horizon + 1, r_x))
    us = np.empty((horizon + 1, r_u))
    x = np.asarray(x0, dtype=float).reshape(-1)
    k_mat = law.K
    a_mat, b_mat = model.A, model.B
    kind, theta = plant.kind, plant.theta
    diverged = False
    count = 0
    for k in range(horizon + 1):
        if k > 0 and (not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT):
            diverged = True
            break
        u = k_mat @ x + vdraws[k]
        xs[k] = x
        us[k] = u
        count = k + 1
        if k < horizon:
            # inlined copy of step() for the tight loop
            if kind == "linear":
                x = a_mat @ x + b_mat @ u + wdraws[k]
            elif kind == "quad_nonlinear":
                x = a_mat @ x + b_mat @ u + wdraws[k]
                x[0] += theta * xs[k, 1] ** 2
            else:
                x = a_mat @ x + wdraws[k]
                x[0] += theta * xs[k, 1] ** 2
                x[1] += (0.1 + theta * np.tanh(xs[k, 0])) * u[0]
    if count < 2:
        # first transition already left the recordable range; keep a clipped
        # copy of the offending state so the record stays well-formed
        bad = np.nan_to_num(x, nan=DIVERGENCE_LIMIT, posinf=DIVERGENCE_LIMIT, neginf=-DIVERGENCE_LIMIT)
        xs[1] = np.clip(bad, -DIVERGENCE_LIMIT, DIVERGENCE_LIMIT)
        us[1] = k_mat @ xs[1] + vdraws[1]
        count = 2
        diverged = True
    return TrajectoryData(xs[:count].T.copy(), us[:count].T.copy(), diverged=diverged)


def classify_stable(traj: TrajectoryData, threshold) -> bool:
    """Pointwise boundedness of every state coordinate, strict at the threshold."""
    if traj.diverged:
        return False
    return bool(np.all(np.abs(traj.X) <= threshold))


def stationary_initial_state(plant: Plant, law: ControlLaw, rng):
    """Draw x0 from the stationary Gaussian of the linearized closed loop,
    falling back to the origin when the law does not stabilize it."""
    model = plant.linear_part
    if spectral_radius(model.A + model.B @ law.K) >= 1.0:
        return np.zeros(model.r_x)
    sigma = solve_dlyap_controllability(model, law.K, law.V)
    return sqrtm_psd(sigma) @ rng.standard_normal(model.r_x)


def _phase1_initial_state(plant: Plant):
    # campaigns excite from rest; the 2000-step horizon dwarfs the settling
    # transient and starting at the origin keeps the activity statistics of
    # the designed problems in line with the benchmark behavior
    return np.zeros(plant.linear_part.r_x)


def _rep_generator(master_seed, rep, attempt):
    mask = (1 << 64) - 1
    key = np.array(
        [np.uint64(master_seed & mask) ^ np.uint64(rep & mask), np.uint64(attempt & mask)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def design_gain(
    data: TrajectoryData,
    weights: LqrWeights,
    request: DesignRequest,
    solver_tol=1e-8,
    true_model: LinearModel = None,
):
    """Build, solve, and recover one design.

    Data-driven formulations identify from `data`; the `standard` formulation
    designs against `true_model` directly (the campaign passes the plant's
    linear part).
    """
    if request.formulation == "standard":
        if true_model is None:
            raise ValueError("standard formulation needs the true model")
        problem = build_standard(true_model, weights)
    else:
        problem = build_from_data(
            data,
            weights,
            request.formulation,
            epsilon=request.epsilon,
            gamma_prime=request.gamma_prime,
            gamma=request.gamma,
        )
    solution = solve_sdp(problem, SolveOptions(tol=solver_tol))
    if solution.status != STATUS_OPTIMAL:
        raise NumericalError(f"solver returned {solution.status}: {solution.message}")
    return recover_design(problem, solution), problem


def _bounded_phase1(config: CampaignConfig, rep):
    """Excitation experiment, resampled until bounded; returns (record, attempts, rng)."""
    attempts = 0
    while attempts < MAX_PHASE1_ATTEMPTS:
        attempts += 1
        rng = _rep_generator(config.master_seed, rep, attempts - 1)
        x0 = _phase1_initial_state(config.plant)
        candidate = simulate(config.plant, config.initial_law, x0, config.horizon, rng)
        if classify_stable(candidate, config.stability_threshold):
            return candidate, attempts, rng
    raise NumericalError(
        f"no bounded excitation experiment in {MAX_PHASE1_ATTEMPTS} attempts"
    )


def run_repetition(config: CampaignConfig, rep) -> RepetitionResult:
    """One campaign repetition: excite, identify, design, evaluate."""
    phase1, attempts, rng = _bounded_phase1(config, rep)
    x_final = phase1.X[:, -1]

    outcomes = []
    for request in config.designs:
        try:
            result, problem = design_gain(
                phase1,
                config.weights,
                request,
                solver_tol=config.solver_tol,
                true_model=config.plant.linear_part,
            )
        except DataConformError:
            outcomes.append(DesignOutcome(solved=False))
            continue
        spec = problem.metadata["spec"]
        law = ControlLaw(K=result.K, V=config.weights.V)
        phase2 = simulate(config.plant, law, x_final, config.horizon, rng)
        stable = classify_stable(phase2, config.stability_threshold)
        moments = spec.moments
        if moments is not None:
            fgap = frobenius_gap(result.Sigma_star, moments.sigma_data)
            gdes = design_covariance(result.Sigma_star, result.K, config.weights.V)
            jf = jeffreys_f(gdes, moments.gamma_data)
        else:
            fgap, jf = np.nan, np.nan
        act = activity_report(spec, result)
        outcomes.append(
            DesignOutcome(
                solved=True,
                stable=stable,
                frob_gap=fgap,
                jeffreys=jf,
                active=act["active"],
            )
        )
    return RepetitionResult(index=rep, attempts=attempts, outcomes=outcomes)


def run_showcase(config: CampaignConfig, rep=0):
    """One seeded repetition returning the raw records for figure export.

    Returns (phase1, outcomes) where outcomes is a list of
    (request, DesignResult or None, phase2 TrajectoryData or None).
    """
    phase1, _, rng = _bounded_phase1(config, rep)
    x_final = phase1.X[:, -1]
    outcomes = []
    for request in config.designs:
        try:
            result, _ = design_gain(
                phase1,
                config.weights,
                request,
                solver_tol=config.solver_tol,
                true_model=config.plant.linear_part,
            )
        except DataConformError:
            outcomes.append((request, None, None))
            continue
        law = ControlLaw(K=result.K, V=config.weights.V)
        phase2 = simulate(config.plant, law, x_final, config.horizon, rng)
        outcomes.append((request, result, phase2))
    return phase1, outcomes


def _rep_worker(args):
    config, rep = args
    return run_repetition(config, rep)


def run_campaign(config: CampaignConfig) -> CampaignReport:
    """Monte Carlo campaign over seeded repetitions; see the module docstring."""
    reps = range(config.repetitions)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_rep_worker, [(config, r) for r in reps], chunksize=8))
    else:
        results = [run_repetition(config, r) for r in reps]
    results.sort(key=lambda r: r.index)

    summaries = []
    for j, request in enumerate(config.designs):
        evaluated = [r.outcomes[j] for r in results if r.outcomes[j].solved]
        failures = config.repetitions - len(evaluated)
        n_stable = sum(1 for o in evaluated if o.stable)
        n_eval = len(evaluated)
        pct = 100.0 * n_stable / n_eval if n_eval else np.nan
        fgaps = [o.frob_gap for o in evaluated if np.isfinite(o.frob_gap)]
        jfs = [o.jeffreys for o in evaluated if np.isfinite(o.jeffreys)]
        act_rate = 100.0 * sum(1 for o in evaluated if o.active) / n_eval if n_eval else np.nan
        summaries.append(
            DesignSummary(
                label=request.label,
                formulation=request.formulation,
                n_evaluated=n_eval,
                n_stable=n_stable,
                n_designed_failures=failures,
                percent_stable=pct,
                mean_frobenius_gap=float(np.mean(fgaps)) if fgaps else np.nan,
                mean_F=float(np.mean(jfs)) if jfs else np.nan,
                activity_rate=act_rate,
            )
        )
    rejections = sum(r.attempts - 1 for r in results)
    return CampaignReport(
        designs=summaries,
        repetitions=config.repetitions,
        phase1_rejections=rejections,
        master_seed=config.master_seed,
        stability_threshold=config.stability_threshold,
    )
