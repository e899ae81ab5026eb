"""
Experiment harness

Loads experiment files, validates them into model specs, dispatches to the model
operations and writes CSV or JSON results atomically. Outputs carry no timestamps:
the same file and seed produce the same bytes.

Experiment files are INI documents:

    [experiment]
    kind = vacancy
    replicates = 10000
    seed = 42
    out = results/vacancy.csv
    format = csv

    [model]
    intensity = 1
    dimension = 1
    rho = degenerate(1)
"""
import configparser
import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from opentelemetry import trace
from pydantic import BaseModel, Field
from scipy import stats

from src.core.continuum_models import (
    PoissonBooleanSpec,
    ScaledRadiusSpec,
    ShapeKind,
    complete_coverage_verdict,
    coverage_profile,
    estimate_full_coverage_probability,
    estimate_vacancy_expectation,
    simulate_configuration,
)
from src.core.discretization import discretize, rho_u_support, sample_rho_u, sandwich_check
from src.core.distributions import RadiusDistribution, parse_distribution
from src.core.geometry import Box
from src.core.interval_processes import (
    CantorSequence,
    LengthMeasure,
    PowerPiece,
    estimate_cantor_vacancy,
    shepp_criterion,
    shepp_inner,
)
from src.core.lattice_model import (
    LatticeSpec,
    divergence_diagnostic,
    proposition_verdict,
    series_table,
    simulate_lattice_experiment,
)
from src.core.markov_model import (
    InitialState,
    MarkovCoverageSpec,
    brute_force_uncovered,
    k0_conditions,
    partial_fraction_decomposition,
    recurrence_table,
    simulate_markov_experiment,
    threshold_classify,
)
from src.utils.config import (
    ARTIFACT_VERSION,
    DEFAULT_INNER_RADIUS,
    DEFAULT_REPLICATES,
    DEFAULT_SEED,
    MAX_ENUMERATION_LENGTH,
    SpecValidationError,
)
from src.utils.stats import ExperimentResult, Provenance, map_replicates, split_stream, summarize_proportion
from src.utils.utils import config_hash, write_atomic

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

ExperimentKind = Literal[
    "vacancy",
    "full_coverage",
    "coverage_profile",
    "sandwich",
    "rho_u",
    "lattice_series",
    "lattice_simulation",
    "markov_recurrence",
    "markov_threshold",
    "markov_simulation",
    "shepp",
    "cantor",
]


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class ExperimentSettings(BaseModel):
    """The [experiment] section."""
    kind: ExperimentKind = Field(..., description="Experiment kind, see `covlab list-experiments`")
    replicates: int = Field(default=DEFAULT_REPLICATES, ge=1, description="Number of replicates")
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2 ** 64, description="64-bit experiment seed")
    out: Optional[str] = Field(default=None, description="Output path; stdout when omitted")
    format: OutputFormat = Field(default=OutputFormat.CSV, description="Output format")


class ExperimentConfig(BaseModel):
    """A whole experiment file: settings plus the raw [model] keys."""
    experiment: ExperimentSettings
    model: Dict[str, str] = Field(default_factory=dict, description="Model parameters as written in the file")

    def hash_payload(self) -> Dict[str, Any]:
        """Everything that determines the numbers; the output path and format do not."""
        return {
            "experiment": self.experiment.model_dump(mode="json", exclude={"out", "format"}),
            "model": dict(sorted(self.model.items())),
        }


class ModelParameters:
    """Typed access to the [model] section; every failure names the offending key."""

    def __init__(self, raw: Dict[str, str]):
        self.raw = {key.strip().lower(): value.strip() for key, value in raw.items()}
        self.used: set = set()

    def _get(self, key: str, default: Any) -> Optional[str]:
        key = key.lower()
        self.used.add(key)
        if key not in self.raw:
            if default is _REQUIRED:
                raise SpecValidationError(key, "missing from [model]")
            return None
        return self.raw[key]

    def real(self, key: str, default: Any = None) -> float:
        value = self._get(key, default)
        if value is None:
            return default
        try:
            return float(value)
        except ValueError as exc:
            raise SpecValidationError(key, f"expected a number, got {value!r}") from exc

    def integer(self, key: str, default: Any = None) -> int:
        value = self._get(key, default)
        if value is None:
            return default
        try:
            return int(value)
        except ValueError as exc:
            raise SpecValidationError(key, f"expected an integer, got {value!r}") from exc

    def flag(self, key: str, default: bool = False) -> bool:
        value = self._get(key, default)
        if value is None:
            return default
        lowered = value.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise SpecValidationError(key, f"expected a boolean, got {value!r}")

    def text(self, key: str, default: Any = None) -> Optional[str]:
        value = self._get(key, default)
        return default if value is None else value

    def distribution(self, key: str = "rho") -> RadiusDistribution:
        literal = self._get(key, _REQUIRED)
        try:
            return parse_distribution(literal)
        except SpecValidationError as exc:
            raise SpecValidationError(key, str(exc)) from exc

    def unused(self) -> List[str]:
        return sorted(set(self.raw) - self.used)


_REQUIRED = object()


def _parse_pairs(text: str, key: str) -> List[Tuple[float, ...]]:
    """Parse `a:b, c:d` lists; `inf` is accepted."""
    groups = []
    for item in (part.strip() for part in text.split(",")):
        if not item:
            continue
        try:
            groups.append(tuple(float(field) for field in item.split(":")))
        except ValueError as exc:
            raise SpecValidationError(key, f"malformed entry {item!r}") from exc
    return groups


def _parse_annuli(text: str) -> List[Tuple[float, float]]:
    annuli = []
    for group in _parse_pairs(text, "annuli"):
        if len(group) != 2 or not 0 <= group[0] < group[1]:
            raise SpecValidationError("annuli", f"expected r_in:r_out with r_in < r_out, got {group}")
        annuli.append((group[0], group[1]))
    return annuli


def _poisson_spec(params: ModelParameters, orthant: bool = False) -> PoissonBooleanSpec:
    """Unit window by default; orthant runs read the lattice extent n, window [0, n]^d."""
    dimension = params.integer("dimension", 2 if orthant else 1)
    shape_name = params.text("shape", "cube")
    try:
        shape = ShapeKind(shape_name)
    except ValueError as exc:
        raise SpecValidationError("shape", f"expected cube or ball, got {shape_name!r}") from exc
    side = params.real("extent", 20.0) if orthant else params.real("window_side", 1.0)
    if not side > 0:
        raise SpecValidationError("extent" if orthant else "window_side", f"must be positive, got {side}")
    return PoissonBooleanSpec(
        intensity=params.real("intensity", _REQUIRED),
        dimension=dimension,
        rho=params.distribution(),
        shape=shape,
        window=Box.cube((0.0,) * dimension, side),
        orthant=orthant or params.flag("orthant"),
    )


def _lattice_spec(params: ModelParameters) -> LatticeSpec:
    return LatticeSpec(p=params.real("p", _REQUIRED), rho=params.distribution(),
                       dimension=params.integer("dimension", 2))


def _markov_spec(params: ModelParameters) -> MarkovCoverageSpec:
    initial_name = params.text("initial", InitialState.STATIONARY.value)
    try:
        initial = InitialState(initial_name)
    except ValueError as exc:
        raise SpecValidationError("initial", f"expected stationary, start-at-0 or start-at-1, got {initial_name!r}") from exc
    p01 = params.real("p01", _REQUIRED)
    p10 = params.real("p10", _REQUIRED)
    for name, value in (("p01", p01), ("p10", p10)):
        if not 0.0 < value < 1.0:
            raise SpecValidationError(name, f"must lie in (0, 1), got {value}")
    return MarkovCoverageSpec.from_off_diagonal(p01, p10, params.distribution(), initial)


def _length_measure(params: ModelParameters) -> LengthMeasure:
    atoms = []
    for group in _parse_pairs(params.text("atoms", ""), "atoms"):
        if len(group) != 2:
            raise SpecValidationError("atoms", f"expected y:mass, got {group}")
        atoms.append((group[0], group[1]))
    pieces = []
    for group in _parse_pairs(params.text("pieces", ""), "pieces"):
        if len(group) != 4:
            raise SpecValidationError("pieces", f"expected a:b:beta:gamma, got {group}")
        pieces.append(PowerPiece(*group))
    return LengthMeasure(tuple(atoms), tuple(pieces))


def _cantor_sequence(params: ModelParameters) -> CantorSequence:
    lengths = params.text("lengths")
    intensity = params.real("intensity", _REQUIRED)
    if lengths:
        try:
            explicit = tuple(float(t) for t in lengths.split(",") if t.strip())
        except ValueError as exc:
            raise SpecValidationError("lengths", f"expected comma-separated numbers, got {lengths!r}") from exc
        return CantorSequence(intensity, explicit=explicit)
    return CantorSequence(intensity, scale=params.real("scale", _REQUIRED), exponent=params.real("exponent", 1.0))


def _run_vacancy(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    spec = _poisson_spec(params)

    def execute() -> ExperimentResult:
        result = estimate_vacancy_expectation(spec, settings.replicates, settings.seed)
        result.details["coverage_verdict"] = complete_coverage_verdict(spec).to_dict()
        return result

    return execute


def _run_full_coverage(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    spec = _poisson_spec(params)
    return lambda: estimate_full_coverage_probability(spec, settings.replicates, settings.seed)


def _run_coverage_profile(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    dimension = params.integer("dimension", 2)
    base = PoissonBooleanSpec(
        intensity=params.real("intensity", 1.0),
        dimension=dimension,
        rho=params.distribution(),
        shape=ShapeKind.BALL,
    )
    spec = ScaledRadiusSpec(
        base=base,
        scale_constant=params.real("scale_constant", _REQUIRED),
        inner_radius=params.real("inner_radius", DEFAULT_INNER_RADIUS),
    )
    annuli = _parse_annuli(params.text("annuli", "3:5, 5:8, 8:12"))
    return lambda: coverage_profile(spec, annuli, settings.replicates, settings.seed)


def _run_sandwich(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    spec = _poisson_spec(params, orthant=True)
    if spec.shape is not ShapeKind.CUBE:
        raise SpecValidationError("shape", "the lattice sandwich is defined for cubes")
    extent = int(round(spec.window.sides[0]))
    if extent != spec.window.sides[0] or extent < 1:
        raise SpecValidationError("extent", f"must be a positive integer, got {spec.window.sides[0]}")

    def one(r: int, stream: np.random.Generator) -> Dict[str, Any]:
        config = simulate_configuration(spec, stream)
        lattice = discretize(config, extent)
        report = sandwich_check(config, lattice)
        return {
            "replicate": r,
            "ok": report.ok,
            "green": int(lattice.green.sum()),
            "lower": report.lower_cells,
            "far_corner": report.far_corner_cells,
            "touched": report.touched_cells,
            "upper": report.upper_cells,
            "clamped_lower": report.clamped_lower_cells,
            "violation": json.dumps(report.violation) if report.violation else "",
        }

    def execute() -> ExperimentResult:
        rows = map_replicates(one, settings.seed, settings.replicates)
        failures = sum(not row["ok"] for row in rows)
        if failures:
            logger.error(f"Sandwich failed in {failures} of {len(rows)} replicates")
        return summarize_proportion("sandwich", [row["ok"] for row in rows], Provenance(config_hash="", seed=settings.seed),
                                    rows=rows, details={"failures": failures, "extent": extent})

    return execute


def _run_rho_u(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    rho = params.distribution()
    intensity = params.real("intensity", _REQUIRED)
    if not intensity > 0:
        raise SpecValidationError("intensity", f"must be positive, got {intensity}")
    min_expected = params.real("min_expected", 5.0)

    def execute() -> ExperimentResult:
        ks, pmf = rho_u_support(rho, intensity)
        draws = sample_rho_u(rho, intensity, split_stream(settings.seed, 0), settings.replicates)
        observed = np.array([np.sum(draws == k) for k in ks], dtype=float)
        expected = pmf * settings.replicates

        # leading cells while they and the pooled remainder keep enough expected mass
        tail = np.cumsum(expected[::-1])[::-1]
        keep = 0
        while keep < ks.size - 1 and expected[keep] >= min_expected and tail[keep + 1] >= min_expected:
            keep += 1
        obs = np.append(observed[:keep], settings.replicates - observed[:keep].sum())
        exp = np.append(expected[:keep], settings.replicates - expected[:keep].sum())
        statistic, p_value = (0.0, 1.0) if obs.size < 2 else stats.chisquare(obs, exp)

        rows = [{"k": int(k), "pmf": float(m), "observed": int(o), "expected": float(e)}
                for k, m, o, e in zip(ks, pmf, observed, expected)]
        return ExperimentResult(
            kind="rho_u",
            estimate=float(p_value),
            replicates=settings.replicates,
            details={"chi_square": float(statistic), "cells": int(obs.size), "support": int(ks.size)},
            rows=rows,
            provenance=Provenance(config_hash="", seed=settings.seed),
        )

    return execute


def _run_lattice_series(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    spec = _lattice_spec(params)
    if spec.dimension != 2:
        raise SpecValidationError("dimension", "the row series is computed in d = 2")
    j = params.integer("j", 1)
    last = params.integer("last", 2000)
    if not last > j >= 1:
        raise SpecValidationError("last", f"need last > j >= 1, got last={last}, j={j}")
    lo = params.integer("m_lo", max(j + 1, last // 2))
    hi = params.integer("m_hi", last - 1)
    table_rows = params.integer("table_rows", min(last, j + 50))

    def execute() -> ExperimentResult:
        verdict = divergence_diagnostic(spec, j, (lo, hi))
        rows = series_table(spec, j, max(table_rows, j + 1))
        return ExperimentResult(
            kind="lattice_series",
            estimate=verdict.fitted_c,
            details={"verdict": verdict.to_dict(), "regime": proposition_verdict(spec).to_dict()},
            rows=rows,
            provenance=Provenance(config_hash="", seed=settings.seed),
        )

    return execute


def _run_lattice_simulation(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    spec = _lattice_spec(params)
    extent = params.integer("extent", 200)
    return lambda: simulate_lattice_experiment(spec, extent, settings.replicates, settings.seed)


def _run_markov_recurrence(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    spec = _markov_spec(params)
    K = params.integer("K", 50)
    if K < 1:
        raise SpecValidationError("K", f"must be at least 1, got {K}")

    def execute() -> ExperimentResult:
        table = recurrence_table(spec, K)
        checked = min(K, MAX_ENUMERATION_LENGTH - 2)
        gap = max(abs(brute_force_uncovered(spec, k) - float(table.total[k - 1])) for k in range(1, checked + 1))
        return ExperimentResult(
            kind="markov_recurrence",
            estimate=float(table.total[-1]),
            details={"brute_force_max_gap": gap, "brute_force_checked": checked},
            rows=table.rows(),
            provenance=Provenance(config_hash="", seed=settings.seed),
        )

    return execute


def _run_markov_threshold(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    spec = _markov_spec(params)
    C = params.real("C", None)
    k0 = params.integer("k0", None)

    def execute() -> ExperimentResult:
        report = threshold_classify(spec)
        details: Dict[str, Any] = {"verdict": report.to_dict()}
        if C is not None:
            d_coef, e_coef, f_coef = partial_fraction_decomposition(spec, C)
            details["partial_fractions"] = {"C": C, "D": d_coef, "E": e_coef, "F": f_coef}
            if k0 is not None:
                details["k0_conditions"] = k0_conditions(spec, C, k0)
        return ExperimentResult(
            kind="markov_threshold",
            details=details,
            rows=[report.to_dict()],
            provenance=Provenance(config_hash="", seed=settings.seed),
        )

    return execute


def _run_markov_simulation(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    spec = _markov_spec(params)
    n = params.integer("n", 10_000)
    beyond = params.integer("beyond", 100)
    return lambda: simulate_markov_experiment(spec, n, settings.replicates, settings.seed, beyond)


def _run_shepp(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    mu = _length_measure(params)
    grid = params.integer("grid", 20)
    if grid < 1:
        raise SpecValidationError("grid", f"must be at least 1, got {grid}")

    def execute() -> ExperimentResult:
        verdict = shepp_criterion(mu)
        xs = np.geomspace(1e-6, 0.99, grid) if grid > 1 else np.array([0.5])
        rows = [{"x": float(x), "inner": shepp_inner(mu, float(x))} for x in xs]
        return ExperimentResult(
            kind="shepp",
            estimate=verdict.fitted_c,
            details={"verdict": verdict.to_dict()},
            rows=rows,
            provenance=Provenance(config_hash="", seed=settings.seed),
        )

    return execute


def _run_cantor(params: ModelParameters, settings: ExperimentSettings) -> Callable[[], ExperimentResult]:
    seq = _cantor_sequence(params)
    levels = params.integer("levels", len(seq.explicit) if seq.explicit else 10)
    # rejects more levels than explicit lengths
    seq.lengths(levels)
    return lambda: estimate_cantor_vacancy(seq, levels, settings.replicates, settings.seed)


@dataclass(frozen=True)
class ExperimentEntry:
    description: str
    build: Callable[[ModelParameters, ExperimentSettings], Callable[[], ExperimentResult]]


EXPERIMENTS: Dict[str, ExperimentEntry] = {
    "vacancy": ExperimentEntry("Expected vacant fraction of the window vs exp(-lambda E rho^d)", _run_vacancy),
    "full_coverage": ExperimentEntry("Probability that the union covers the whole window", _run_full_coverage),
    "coverage_profile": ExperimentEntry("Covered fraction per annulus in the scaled-radius ball model",
                                        _run_coverage_profile),
    "sandwich": ExperimentEntry("Lower/Poisson/upper lattice coverage chain on orthant realizations", _run_sandwich),
    "rho_u": ExperimentEntry("Upper-model radius pmf against direct simulation (chi-square)", _run_rho_u),
    "lattice_series": ExperimentEntry("Row series P(A(i, j)) with the Gauss-test divergence diagnostic",
                                      _run_lattice_series),
    "lattice_simulation": ExperimentEntry("Eventual-coverage threshold search on the lattice", _run_lattice_simulation),
    "markov_recurrence": ExperimentEntry("P_0(A_k), P_1(A_k) recurrence table with a path-enumeration check",
                                         _run_markov_recurrence),
    "markov_threshold": ExperimentEntry("Tail-functional verdict (l, L, pi_1) and partial fractions",
                                        _run_markov_threshold),
    "markov_simulation": ExperimentEntry("Uncovered sites of the Markov model past a cut-off", _run_markov_simulation),
    "shepp": ExperimentEntry("Line-coverage integral criterion for an interval process", _run_shepp),
    "cantor": ExperimentEntry("Random Cantor set on the circle: vacancy and criteria", _run_cantor),
}


def list_experiments() -> List[Tuple[str, str]]:
    """(kind, description) for every experiment kind, in a fixed order."""
    return [(kind, entry.description) for kind, entry in EXPERIMENTS.items()]


def parse_config_text(text: str) -> ExperimentConfig:
    """
    Parse an experiment file.

    Raises:
        SpecValidationError: If the INI text is malformed or lacks [experiment]
        pydantic.ValidationError: If an [experiment] value is invalid
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise SpecValidationError("config", f"malformed experiment file: {exc}") from exc
    if not parser.has_section("experiment"):
        raise SpecValidationError("experiment", "missing [experiment] section")
    model = dict(parser.items("model")) if parser.has_section("model") else {}
    return ExperimentConfig(experiment=dict(parser.items("experiment")), model=model)


def load_config(path: Path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read an experiment file and apply command-line overrides to [experiment].

    Args:
        path: INI experiment file
        overrides: Values such as seed or replicates; None entries are ignored
    """
    config = parse_config_text(Path(path).read_text(encoding="utf-8"))
    updates = {key: value for key, value in (overrides or {}).items() if value is not None}
    if not updates:
        return config
    settings = ExperimentSettings(**{**config.experiment.model_dump(), **updates})
    return ExperimentConfig(experiment=settings, model=config.model)


def prepare(config: ExperimentConfig) -> Callable[[], ExperimentResult]:
    """
    Validate the [model] section for the configured kind and return the bound experiment.

    Raises:
        SpecValidationError: Naming the first offending parameter
    """
    params = ModelParameters(config.model)
    runner = EXPERIMENTS[config.experiment.kind].build(params, config.experiment)
    extra = params.unused()
    if extra:
        raise SpecValidationError(extra[0], f"not a parameter of the {config.experiment.kind} experiment")
    return runner


def validate(config: ExperimentConfig) -> None:
    """Validate without running."""
    prepare(config)
    logger.info(f"Experiment {config.experiment.kind} is valid")


def _plain(value: Any) -> Any:
    """JSON-safe form: infinities and NaN as strings, numpy scalars as Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def _cell(value: Any) -> Any:
    plain = _plain(value)
    if isinstance(plain, (dict, list)):
        return json.dumps(plain, sort_keys=True)
    if isinstance(plain, float):
        return repr(plain)
    return plain


def render_csv(result: ExperimentResult) -> str:
    """
    One CSV line per row; a single summary line when the result has no rows.

    Every line carries the config hash.
    """
    if result.rows:
        records = result.rows
    else:
        records = [{
            "estimate": result.estimate,
            "standard_error": result.standard_error,
            "interval_lo": result.interval[0] if result.interval else None,
            "interval_hi": result.interval[1] if result.interval else None,
            "replicates": result.replicates,
            **{key: value for key, value in result.details.items()},
        }]
    columns: List[str] = []
    for record in records:
        for key in record:
            if key not in columns:
                columns.append(key)
    if "config_hash" not in columns:
        columns.append("config_hash")

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, restval="", lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow({**{k: "" if v is None else _cell(v) for k, v in record.items()},
                         "config_hash": result.provenance.config_hash})
    return buffer.getvalue()


def render_json(result: ExperimentResult) -> str:
    payload = _plain(result.model_dump())
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def render(result: ExperimentResult, fmt: OutputFormat) -> str:
    return render_json(result) if fmt is OutputFormat.JSON else render_csv(result)


def run(config: ExperimentConfig) -> ExperimentResult:
    """
    Run one experiment and write its output when `out` is set.

    Provenance is re-stamped with the hash of the whole configuration and every
    row is tagged with it.

    Args:
        config: Validated experiment configuration

    Returns:
        ExperimentResult of the dispatched operation

    Raises:
        SpecValidationError: If the model section is invalid; nothing is written
    """
    settings = config.experiment
    with tracer.start_as_current_span("covlab_run") as span:
        span.set_attribute("kind", settings.kind)
        span.set_attribute("replicates", settings.replicates)
        span.set_attribute("seed", str(settings.seed))

        runner = prepare(config)
        logger.info(f"Running {settings.kind} with {settings.replicates} replicates, seed {settings.seed}")
        result = runner()

        digest = config_hash(config.hash_payload())
        result.provenance = Provenance(config_hash=digest, seed=settings.seed, artifact_version=ARTIFACT_VERSION)
        result.rows = [{**row, "config_hash": digest} for row in result.rows]
        span.set_attribute("config_hash", digest)

        if settings.out:
            write_atomic(Path(settings.out), render(result, settings.format))
        logger.info(f"Finished {settings.kind}: estimate {result.estimate}")
        return result
