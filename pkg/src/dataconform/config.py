"""Declarative TOML run configurations for the command-line front end.

A config file has the tables [plant], [weights], [initial_law], [campaign],
[output], an optional [figure] table, and one [[design]] array entry per
requested formulation.  Unknown keys anywhere are rejected.  Matrices are
written as arrays of row arrays.
"""

import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, DataConformError
from .lqr_core import LqrWeights
from .simulator import (
    BENCHMARK_A,
    BENCHMARK_B,
    BENCHMARK_K0,
    BENCHMARK_THETA,
    BENCHMARK_W,
    CampaignConfig,
    ControlLaw,
    DesignRequest,
    Plant,
    PLANT_KINDS,
)
from .sysid import LinearModel
from .lmi_builder import FORMULATIONS

FIGURE_KINDS = ("state_scatter", "x1_timeseries")

_PLANT_KEYS = {"kind", "theta", "A", "B", "W"}
_WEIGHT_KEYS = {"Q", "R", "V"}
_LAW_KEYS = {"K0"}
_CAMPAIGN_KEYS = {
    "horizon",
    "repetitions",
    "stability_threshold",
    "seed",
    "jobs",
    "solver_tol",
}
_DESIGN_KEYS = {"label", "formulation", "epsilon", "gamma_prime", "gamma"}
_FIGURE_KEYS = {"kind"}
_OUTPUT_KEYS = {"directory", "trajectories", "figures"}
_TOP_KEYS = {"plant", "weights", "initial_law", "campaign", "design", "figure", "output"}


@dataclass
class OutputConfig:
    directory: str = "out"
    trajectories: bool = False
    figures: bool = True


@dataclass
class RunConfig:
    plant: Plant
    weights: LqrWeights
    initial_law: ControlLaw
    designs: list
    horizon: int = 2000
    repetitions: int = 1000
    stability_threshold: float = 50.0
    seed: int = 0
    jobs: int = 1
    solver_tol: float = 1e-8
    figure_kind: str = None
    output: OutputConfig = field(default_factory=OutputConfig)

    def campaign_config(self, repetitions=None, seed=None, jobs=None, solver_tol=None):
        return CampaignConfig(
            plant=self.plant,
            initial_law=self.initial_law,
            weights=self.weights,
            designs=self.designs,
            horizon=self.horizon,
            repetitions=repetitions if repetitions is not None else self.repetitions,
            stability_threshold=self.stability_threshold,
            master_seed=seed if seed is not None else self.seed,
            jobs=jobs if jobs is not None else self.jobs,
            solver_tol=solver_tol if solver_tol is not None else self.solver_tol,
        )


def _reject_unknown(table, allowed, where):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{where}]")


def _matrix(table, key, where, required=True, default=None):
    if key not in table:
        if required:
            raise ConfigError(f"missing {key} in [{where}]")
        return default
    try:
        m = np.array(table[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} in [{where}] is not a numeric matrix: {exc}") from exc
    if m.ndim != 2:
        raise ConfigError(f"{key} in [{where}] must be a matrix (array of row arrays)")
    return m


def load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error in {path}: {exc}") from exc


def parse_config(path) -> RunConfig:
    doc = load_toml(path)
    return parse_config_dict(doc)


def parse_config_dict(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table")
    _reject_unknown(doc, _TOP_KEYS, "top level")

    plant_tbl = doc.get("plant", {})
    _reject_unknown(plant_tbl, _PLANT_KEYS, "plant")
    kind = plant_tbl.get("kind", "linear")
    if kind not in PLANT_KINDS:
        raise ConfigError(f"plant kind must be one of {PLANT_KINDS}, got {kind!r}")
    a = _matrix(plant_tbl, "A", "plant", required=False, default=BENCHMARK_A)
    b = _matrix(plant_tbl, "B", "plant", required=False, default=BENCHMARK_B)
    w = _matrix(plant_tbl, "W", "plant", required=False, default=BENCHMARK_W)
    theta = float(plant_tbl.get("theta", BENCHMARK_THETA if kind != "linear" else 0.0))
    try:
        plant = Plant(kind=kind, linear_part=LinearModel(a, b, w), theta=theta)
    except (ValueError, DataConformError) as exc:
        raise ConfigError(f"invalid [plant]: {exc}") from exc

    weights_tbl = doc.get("weights", {})
    _reject_unknown(weights_tbl, _WEIGHT_KEYS, "weights")
    try:
        weights = LqrWeights(
            Q=_matrix(weights_tbl, "Q", "weights"),
            R=_matrix(weights_tbl, "R", "weights"),
            V=_matrix(weights_tbl, "V", "weights"),
        )
    except DataConformError as exc:
        raise ConfigError(f"invalid [weights]: {exc}") from exc

    law_tbl = doc.get("initial_law", {})
    _reject_unknown(law_tbl, _LAW_KEYS, "initial_law")
    k0 = _matrix(law_tbl, "K0", "initial_law", required=False, default=BENCHMARK_K0)
    if k0.shape != (plant.linear_part.r_u, plant.linear_part.r_x):
        raise ConfigError(
            f"K0 must be {plant.linear_part.r_u} x {plant.linear_part.r_x}, got {k0.shape}"
        )
    initial_law = ControlLaw(K=k0, V=weights.V)

    campaign_tbl = doc.get("campaign", {})
    _reject_unknown(campaign_tbl, _CAMPAIGN_KEYS, "campaign")

    designs = []
    for i, entry in enumerate(doc.get("design", [])):
        _reject_unknown(entry, _DESIGN_KEYS, f"design #{i + 1}")
        formulation = entry.get("formulation")
        if formulation not in FORMULATIONS:
            raise ConfigError(
                f"design #{i + 1}: formulation must be one of {FORMULATIONS}, got {formulation!r}"
            )
        request = DesignRequest(
            label=str(entry.get("label", formulation)),
            formulation=formulation,
            epsilon=_optional_float(entry, "epsilon", i),
            gamma_prime=_optional_float(entry, "gamma_prime", i),
            gamma=_optional_float(entry, "gamma", i),
        )
        _validate_request(request, i)
        designs.append(request)

    figure_kind = None
    if "figure" in doc:
        _reject_unknown(doc["figure"], _FIGURE_KEYS, "figure")
        figure_kind = doc["figure"].get("kind")
        if figure_kind not in FIGURE_KINDS:
            raise ConfigError(f"figure kind must be one of {FIGURE_KINDS}, got {figure_kind!r}")

    output_tbl = doc.get("output", {})
    _reject_unknown(output_tbl, _OUTPUT_KEYS, "output")
    output = OutputConfig(
        directory=str(output_tbl.get("directory", "out")),
        trajectories=bool(output_tbl.get("trajectories", False)),
        figures=bool(output_tbl.get("figures", True)),
    )

    try:
        return RunConfig(
            plant=plant,
            weights=weights,
            initial_law=initial_law,
            designs=designs,
            horizon=int(campaign_tbl.get("horizon", 2000)),
            repetitions=int(campaign_tbl.get("repetitions", 1000)),
            stability_threshold=float(campaign_tbl.get("stability_threshold", 50.0)),
            seed=int(campaign_tbl.get("seed", 0)),
            jobs=int(campaign_tbl.get("jobs", 1)),
            solver_tol=float(campaign_tbl.get("solver_tol", 1e-8)),
            figure_kind=figure_kind,
            output=output,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [campaign] value: {exc}") from exc


def _optional_float(entry, key, i):
    if key not in entry:
        return None
    try:
        return float(entry[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"design #{i + 1}: {key} must be a number") from exc


def _validate_request(request, i):
    f = request.formulation
    if f == "state_band" and not (request.epsilon and request.epsilon > 0):
        raise ConfigError(f"design #{i + 1}: state_band needs epsilon > 0")
    if f == "state_regularized" and (
        request.gamma_prime is None or request.gamma_prime < 0
    ):
        raise ConfigError(f"design #{i + 1}: state_regularized needs gamma_prime >= 0")
    if f == "joint_regularized" and not (request.gamma and request.gamma > 0):
        raise ConfigError(f"design #{i + 1}: joint_regularized needs gamma > 0")


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {v!r}")


def _fmt_matrix(m):
    rows = ", ".join("[" + ", ".join(repr(float(x)) for x in row) + "]" for row in m)
    return "[" + rows + "]"


def to_toml_string(config: RunConfig) -> str:
    """Canonical TOML form; parse(to_toml_string(parse(f))) == parse(f)."""
    lines = []
    lines.append("[plant]")
    lines.append(f'kind = "{config.plant.kind}"')
    lines.append(f"theta = {_fmt_value(float(config.plant.theta))}")
    lines.append(f"A = {_fmt_matrix(config.plant.linear_part.A)}")
    lines.append(f"B = {_fmt_matrix(config.plant.linear_part.B)}")
    lines.append(f"W = {_fmt_matrix(config.plant.linear_part.W)}")
    lines.append("")
    lines.append("[weights]")
    lines.append(f"Q = {_fmt_matrix(config.weights.Q)}")
    lines.append(f"R = {_fmt_matrix(config.weights.R)}")
    lines.append(f"V = {_fmt_matrix(config.weights.V)}")
    lines.append("")
    lines.append("[initial_law]")
    lines.append(f"K0 = {_fmt_matrix(config.initial_law.K)}")
    lines.append("")
    lines.append("[campaign]")
    lines.append(f"horizon = {config.horizon}")
    lines.append(f"repetitions = {config.repetitions}")
    lines.append(f"stability_threshold = {_fmt_value(float(config.stability_threshold))}")
    lines.append(f"seed = {config.seed}")
    lines.append(f"jobs = {config.jobs}")
    lines.append(f"solver_tol = {_fmt_value(float(config.solver_tol))}")
    lines.append("")
    for request in config.designs:
        lines.append("[[design]]")
        lines.append(f'label = "{request.label}"')
        lines.append(f'formulation = "{request.formulation}"')
        for key in ("epsilon", "gamma_prime", "gamma"):
            value = getattr(request, key)
            if value is not None:
                lines.append(f"{key} = {_fmt_value(float(value))}")
        lines.append("")
    if config.figure_kind is not None:
        lines.append("[figure]")
        lines.append(f'kind = "{config.figure_kind}"')
        lines.append("")
    lines.append("[output]")
    lines.append(f'directory = "{config.output.directory}"')
    lines.append(f"trajectories = {_fmt_value(config.output.trajectories)}")
    lines.append(f"figures = {_fmt_value(config.output.figures)}")
    lines.append("")
    return "\n".join(lines)
