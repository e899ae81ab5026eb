"""
Stationary Poisson Boolean model on windows and the scaled-radius ball model.

Shapes are cubes x + [0, rho]^d or balls B(x, rho). The stationary model is simulated
on a window enlarged so that shapes anchored outside can reach in; the enlargement
is a rho quantile and is reported whenever an unbounded law had to be truncated.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from opentelemetry import trace
from scipy.special import gamma
from scipy.stats import qmc

from src.core.distributions import (
    DistributionKind,
    RadiusDistribution,
    d_moment,
    quantile,
    sample_many,
    support_max,
    tail_regime,
)
from src.core.geometry import (
    Ball,
    Box,
    CoverageStatus,
    covered_mask_balls,
    covers_bounds,
    union_covers_box_balls,
    vacancy_bounds,
)
from src.core.verdicts import CoverageOutcome, RegimeReport
from src.utils.config import (
    DEFAULT_INNER_RADIUS,
    DEFAULT_MARGIN_QUANTILE,
    MARGIN_CLAMP_FACTOR,
    MAX_EXACT_DIMENSION,
    PROBES_PER_ANNULUS,
    SpecValidationError,
)
from src.utils.stats import (
    ExperimentResult,
    Provenance,
    map_replicates,
    mean_and_standard_error,
    summarize_mean,
    summarize_proportion,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)


class ShapeKind(Enum):
    CUBE = "cube"
    BALL = "ball"


def unit_window(d: int) -> Box:
    return Box.cube((0.0,) * d, 1.0)


@dataclass(frozen=True)
class PoissonBooleanSpec:
    """Stationary Poisson Boolean model: intensity, dimension, shape, radius law and observation window."""
    intensity: float
    dimension: int
    rho: RadiusDistribution
    shape: ShapeKind = ShapeKind.CUBE
    window: Optional[Box] = None
    margin_quantile: float = DEFAULT_MARGIN_QUANTILE
    orthant: bool = False

    def __post_init__(self) -> None:
        if not self.intensity > 0:
            raise SpecValidationError("intensity", f"must be positive, got {self.intensity}")
        if not 1 <= self.dimension <= MAX_EXACT_DIMENSION:
            raise SpecValidationError("dimension", f"must lie in 1..{MAX_EXACT_DIMENSION}, got {self.dimension}")
        if self.window is None:
            object.__setattr__(self, "window", unit_window(self.dimension))
        if self.window.dim != self.dimension:
            raise SpecValidationError("window", f"window dimension {self.window.dim} differs from d={self.dimension}")
        if not 0.9 <= self.margin_quantile < 1.0:
            raise SpecValidationError("margin_quantile", f"must lie in [0.9, 1), got {self.margin_quantile}")
        if self.orthant and any(c != 0.0 for c in self.window.corner):
            raise SpecValidationError("window", "orthant windows must be anchored at the origin")


@dataclass(frozen=True)
class ScaledRadiusSpec:
    """Ball model with radius rho * h(|x|), h = c^(1/d) h0 held constant below r0."""
    base: PoissonBooleanSpec
    scale_constant: float
    inner_radius: float = DEFAULT_INNER_RADIUS

    def __post_init__(self) -> None:
        if self.base.shape is not ShapeKind.BALL:
            raise SpecValidationError("shape", "the scaled-radius model places balls")
        if not self.scale_constant > 0:
            raise SpecValidationError("scale_constant", f"must be positive, got {self.scale_constant}")
        if not self.inner_radius >= math.e:
            raise SpecValidationError("inner_radius", f"must be at least e, got {self.inner_radius}")


@dataclass(eq=False)
class Configuration:
    """A finite realization: anchors (cube corners or ball centres) with their radii."""
    shape: ShapeKind
    anchors: np.ndarray
    radii: np.ndarray
    window: Box
    seed_record: Tuple[int, int] = (0, 0)
    truncation_note: bool = False
    margin: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.radii.shape[0])

    @property
    def shapes(self) -> List[Any]:
        if self.shape is ShapeKind.CUBE:
            return [Box.cube(a, r) for a, r in zip(self.anchors.tolist(), self.radii.tolist())]
        return [Ball(tuple(a), r) for a, r in zip(self.anchors.tolist(), self.radii.tolist())]

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """(lower, upper) corner arrays for cube configurations."""
        if self.shape is not ShapeKind.CUBE:
            raise SpecValidationError("shape", "bounds are defined for cube configurations")
        return self.anchors, self.anchors + self.radii[:, None]


def ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2.0) / float(gamma(d / 2.0 + 1.0))


def sampling_margin(spec: PoissonBooleanSpec) -> Tuple[float, bool]:
    """
    Window enlargement for edge correction.

    Returns:
        (margin, truncated): the support maximum for bounded laws; otherwise the
        margin-quantile clamped at MARGIN_CLAMP_FACTOR times the largest window side
    """
    top = support_max(spec.rho)
    if math.isfinite(top):
        return top, False
    clamp = MARGIN_CLAMP_FACTOR * max(spec.window.sides)
    return min(quantile(spec.rho, spec.margin_quantile), clamp), True


def _sampling_region(spec: PoissonBooleanSpec, margin: float) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(spec.window.corner, dtype=float)
    hi = lo + np.asarray(spec.window.sides, dtype=float)
    if spec.orthant:
        return lo, hi
    if spec.shape is ShapeKind.CUBE:
        return lo - margin, hi
    return lo - margin, hi + margin


def simulate_configuration(spec: PoissonBooleanSpec, stream: np.random.Generator) -> Configuration:
    """
    Realize the Boolean model seen through `spec.window`.

    Draws Poisson(lambda * vol) points uniformly in the enlarged window, one radius
    per point, and keeps the shapes that meet the window.

    Args:
        spec: Model parameters
        stream: Caller-owned random stream

    Returns:
        Configuration with the truncation note set for unbounded radius laws
    """
    margin, truncated = sampling_margin(spec)
    if spec.orthant:
        truncated = False
    lo, hi = _sampling_region(spec, margin)
    count = int(stream.poisson(spec.intensity * float(np.prod(hi - lo))))
    anchors = lo + stream.random((count, spec.dimension)) * (hi - lo)
    radii = sample_many(spec.rho, stream, count)

    w_lo = np.asarray(spec.window.corner, dtype=float)
    w_hi = w_lo + np.asarray(spec.window.sides, dtype=float)
    if spec.shape is ShapeKind.CUBE:
        meets = np.all((anchors <= w_hi) & (anchors + radii[:, None] >= w_lo), axis=1)
    else:
        nearest = np.clip(anchors, w_lo, w_hi)
        meets = np.sqrt(((anchors - nearest) ** 2).sum(axis=1)) <= radii

    if truncated:
        logger.debug(f"Margin {margin:.4g} truncates {spec.rho.describe()}")
    return Configuration(
        shape=spec.shape,
        anchors=anchors[meets],
        radii=radii[meets],
        window=spec.window,
        truncation_note=truncated,
        margin=margin,
    )


def thin_configuration(config: Configuration, keep_probability: float, stream: np.random.Generator) -> Configuration:
    """Independent p-thinning: a Boolean model of intensity lambda realized as one of intensity p * lambda."""
    if not 0.0 <= keep_probability <= 1.0:
        raise SpecValidationError("keep_probability", f"must lie in [0, 1], got {keep_probability}")
    keep = stream.random(config.size) < keep_probability
    return Configuration(
        shape=config.shape,
        anchors=config.anchors[keep],
        radii=config.radii[keep],
        window=config.window,
        seed_record=config.seed_record,
        truncation_note=config.truncation_note,
        margin=config.margin,
    )


def vacancy_expectation_exact(spec: PoissonBooleanSpec) -> float:
    """
    Expected vacant fraction of any window: exp(-lambda E rho^d) for cubes.

    Balls use the moment of the ball volume, exp(-lambda pi_d E rho^d). Returns 0
    when the moment is infinite.
    """
    moment = d_moment(spec.rho, spec.dimension)
    if math.isinf(moment):
        return 0.0
    scale = 1.0 if spec.shape is ShapeKind.CUBE else ball_volume(spec.dimension)
    return math.exp(-spec.intensity * scale * moment)


def _probe_grid(window: Box, count: int) -> np.ndarray:
    sampler = qmc.Halton(d=window.dim, scramble=False)
    unit = sampler.random(count)
    lo = np.asarray(window.corner, dtype=float)
    return lo + unit * np.asarray(window.sides, dtype=float)


def configuration_vacancy(config: Configuration, probes: Optional[np.ndarray] = None) -> float:
    """Vacant fraction of the configuration's window: exact for cubes, probe estimate for balls."""
    if config.shape is ShapeKind.CUBE:
        lower, upper = config.bounds()
        return vacancy_bounds(lower, upper, config.window) / config.window.volume
    points = probes if probes is not None else _probe_grid(config.window, PROBES_PER_ANNULUS)
    return float(1.0 - covered_mask_balls(config.anchors, config.radii, points).mean())


def configuration_covers_window(config: Configuration) -> CoverageStatus:
    if config.shape is ShapeKind.CUBE:
        lower, upper = config.bounds()
        return covers_bounds(lower, upper, config.window).status
    return union_covers_box_balls(config.shapes, config.window).status


def _spec_payload(spec: Any) -> Dict[str, Any]:
    return asdict(spec)


def estimate_vacancy_expectation(spec: PoissonBooleanSpec, replicates: int, seed: int) -> ExperimentResult:
    """
    Monte Carlo estimate of the expected vacant fraction of the window.

    Args:
        spec: Model parameters
        replicates: Number of independent realizations
        seed: Experiment seed; replicate r uses split_stream(seed, r)

    Returns:
        ExperimentResult with mean, standard error and one row per replicate
    """
    with tracer.start_as_current_span("estimate_vacancy_expectation") as span:
        span.set_attribute("replicates", replicates)
        span.set_attribute("intensity", spec.intensity)
        probes = None if spec.shape is ShapeKind.CUBE else _probe_grid(spec.window, PROBES_PER_ANNULUS)

        def one(r: int, stream: np.random.Generator) -> Dict[str, Any]:
            config = simulate_configuration(spec, stream)
            vacancy = configuration_vacancy(config, probes)
            return {"replicate": r, "vacancy": vacancy, "covered": vacancy == 0.0, "n_shapes": config.size,
                    "truncated": config.truncation_note}

        rows = map_replicates(one, seed, replicates)
        logger.info(f"Vacancy estimate over {replicates} replicates for {spec.rho.describe()}")
        return summarize_mean(
            "vacancy",
            [row["vacancy"] for row in rows],
            Provenance.for_payload(_spec_payload(spec), seed),
            rows=rows,
            details={
                "exact": vacancy_expectation_exact(spec),
                "method": "exact-grid" if spec.shape is ShapeKind.CUBE else "probes",
                "truncation_note": any(row["truncated"] for row in rows),
            },
        )


def estimate_full_coverage_probability(spec: PoissonBooleanSpec, replicates: int, seed: int) -> ExperimentResult:
    """Fraction of replicates in which the union covers the whole window, with a Wilson interval."""
    with tracer.start_as_current_span("estimate_full_coverage_probability") as span:
        span.set_attribute("replicates", replicates)

        def one(r: int, stream: np.random.Generator) -> Dict[str, Any]:
            config = simulate_configuration(spec, stream)
            status = configuration_covers_window(config)
            return {"replicate": r, "status": status.value, "covered": status is CoverageStatus.COVERED,
                    "n_shapes": config.size, "truncated": config.truncation_note}

        rows = map_replicates(one, seed, replicates)
        unknown = sum(row["status"] == CoverageStatus.UNKNOWN.value for row in rows)
        if unknown:
            logger.warning(f"{unknown} replicate(s) unresolved at the ball subdivision depth")
        return summarize_proportion(
            "full_coverage",
            [row["covered"] for row in rows],
            Provenance.for_payload(_spec_payload(spec), seed),
            rows=rows,
            details={"unknown": unknown, "truncation_note": any(row["truncated"] for row in rows)},
        )


def h0(r: float, intensity: float, d: int) -> float:
    """
    Critical radius scale ((d / (lambda pi_d)) log r)^(1/d).

    Raises:
        SpecValidationError: When r < e
    """
    if r < math.e:
        raise SpecValidationError("r", f"h0 needs r >= e, got {r}")
    return ((d / (intensity * ball_volume(d))) * math.log(r)) ** (1.0 / d)


def scaled_radius(spec: ScaledRadiusSpec, r: Any) -> Any:
    """h(r) = c^(1/d) h0(max(r, r0)); accepts scalars or arrays."""
    d = spec.base.dimension
    clamped = np.maximum(np.asarray(r, dtype=float), spec.inner_radius)
    base = ((d / (spec.base.intensity * ball_volume(d))) * np.log(clamped)) ** (1.0 / d)
    out = spec.scale_constant ** (1.0 / d) * base
    return float(out) if np.ndim(out) == 0 else out


def simulate_scaled_configuration(spec: ScaledRadiusSpec, extent: float, stream: np.random.Generator) -> Configuration:
    """
    Realize the scaled-radius model as seen from the ball of radius `extent`.

    Points are drawn out to extent + M h(2 extent), M the radius margin, with the
    reach clamped at `extent`; the truncation note is set for unbounded laws or
    when the clamp bites.
    """
    d = spec.base.dimension
    margin, truncated = sampling_margin(spec.base)
    reach = margin * scaled_radius(spec, 2.0 * extent)
    if reach > extent:
        reach, truncated = extent, True
    outer = extent + reach
    count = int(stream.poisson(spec.base.intensity * (2.0 * outer) ** d))
    points = -outer + stream.random((count, d)) * (2.0 * outer)
    rho = sample_many(spec.base.rho, stream, count)
    norms = np.sqrt((points ** 2).sum(axis=1))
    radii = rho * scaled_radius(spec, norms)
    keep = (norms <= outer) & (norms - radii <= extent)
    return Configuration(
        shape=ShapeKind.BALL,
        anchors=points[keep],
        radii=np.asarray(radii, dtype=float)[keep],
        window=Box.cube((-extent,) * d, 2.0 * extent),
        truncation_note=truncated,
        margin=reach,
        metadata={"extent": extent},
    )


def annulus_probes(d: int, r_in: float, r_out: float, count: int = PROBES_PER_ANNULUS) -> np.ndarray:
    """Deterministic Halton points of the cube [-r_out, r_out]^d kept when r_in <= |x| <= r_out."""
    if not 0.0 <= r_in < r_out:
        raise SpecValidationError("annuli", f"need 0 <= r_in < r_out, got ({r_in}, {r_out})")
    sampler = qmc.Halton(d=d, scramble=False)
    kept: List[np.ndarray] = []
    total = 0
    while total < count:
        batch = (sampler.random(4 * count) * 2.0 - 1.0) * r_out
        norms = np.sqrt((batch ** 2).sum(axis=1))
        inside = batch[(norms >= r_in) & (norms <= r_out)]
        kept.append(inside)
        total += inside.shape[0]
    return np.concatenate(kept)[:count]


def coverage_profile(
    spec: ScaledRadiusSpec,
    annuli: Sequence[Tuple[float, float]],
    replicates: int,
    seed: int,
) -> ExperimentResult:
    """
    Covered fraction of a fixed probe set in each annulus, averaged over replicates.

    Measures finite annuli only; it says nothing direct about P(C = R^d).

    Returns:
        ExperimentResult whose rows hold one entry per annulus and whose estimate
        is the smallest mean covered fraction across annuli
    """
    if not annuli:
        raise SpecValidationError("annuli", "at least one annulus is required")
    with tracer.start_as_current_span("coverage_profile") as span:
        span.set_attribute("replicates", replicates)
        span.set_attribute("scale_constant", spec.scale_constant)
        d = spec.base.dimension
        probe_sets = [annulus_probes(d, float(lo), float(hi)) for lo, hi in annuli]
        extent = max(float(hi) for _, hi in annuli)

        def one(r: int, stream: np.random.Generator) -> Tuple[List[float], bool]:
            config = simulate_scaled_configuration(spec, extent, stream)
            fractions = [float(covered_mask_balls(config.anchors, config.radii, p).mean()) for p in probe_sets]
            return fractions, config.truncation_note

        outcomes = map_replicates(one, seed, replicates)
        table = np.array([fractions for fractions, _ in outcomes])
        rows = []
        for k, (lo, hi) in enumerate(annuli):
            mean, se = mean_and_standard_error(table[:, k])
            rows.append({"r_in": float(lo), "r_out": float(hi), "covered_fraction": mean, "standard_error": se,
                         "min_fraction": float(table[:, k].min())})

        moment = d_moment(spec.base.rho, d)
        worst = min(rows, key=lambda row: row["covered_fraction"])
        return ExperimentResult(
            kind="coverage_profile",
            estimate=worst["covered_fraction"],
            standard_error=worst["standard_error"],
            replicates=replicates,
            details={
                "c_times_moment": spec.scale_constant * moment,
                "verdict": scaled_radius_verdict(spec).to_dict(),
                "truncation_note": any(flag for _, flag in outcomes),
            },
            rows=rows,
            provenance=Provenance.for_payload({**_spec_payload(spec), "annuli": [list(a) for a in annuli]}, seed),
        )


def complete_coverage_verdict(spec: PoissonBooleanSpec) -> RegimeReport:
    """The whole space is covered almost surely exactly when E rho^d is infinite."""
    moment = d_moment(spec.rho, spec.dimension)
    outcome = CoverageOutcome.COVERS if math.isinf(moment) else CoverageOutcome.DOES_NOT_COVER
    return RegimeReport(outcome, {"moment": moment, "vacancy_expectation": vacancy_expectation_exact(spec)})


def eventual_coverage_regime_1d(rho: RadiusDistribution, intensity: float) -> RegimeReport:
    """
    Eventual coverage of the half-line by the Poisson interval model.

    l = liminf x G(x), L = limsup x G(x). Covered for lambda > 1/l when l > 0,
    for every lambda when x G(x) grows without bound; not covered for
    lambda < 1/L, and never when x G(x) tends to 0.
    """
    l, big_l = tail_regime(rho)
    evidence = {"l": l, "L": big_l, "intensity": intensity,
                "inv_l": 1.0 / l if l > 0 else math.inf, "inv_L": 1.0 / big_l if big_l > 0 else math.inf}
    if big_l == 0.0:
        return RegimeReport(CoverageOutcome.DOES_NOT_COVER, evidence)
    if math.isinf(l):
        return RegimeReport(CoverageOutcome.COVERS, evidence)
    if l > 0 and intensity > 1.0 / l:
        return RegimeReport(CoverageOutcome.COVERS, evidence)
    if math.isfinite(big_l) and intensity < 1.0 / big_l:
        return RegimeReport(CoverageOutcome.DOES_NOT_COVER, evidence)
    return RegimeReport(CoverageOutcome.INDETERMINATE, evidence)


def eventual_coverage_regime(rho: RadiusDistribution, d: int, intensity: float) -> RegimeReport:
    """Eventual coverage of the orthant; from d = 2 on it does not depend on the intensity."""
    if d == 1:
        return eventual_coverage_regime_1d(rho, intensity)
    l, big_l = tail_regime(rho)
    evidence = {"l": l, "L": big_l, "d": float(d)}
    if l > 0:
        return RegimeReport(CoverageOutcome.COVERS, evidence)
    if big_l == 0.0:
        return RegimeReport(CoverageOutcome.DOES_NOT_COVER, evidence)
    return RegimeReport(CoverageOutcome.INDETERMINATE, evidence)


def _has_moment_above(rho: RadiusDistribution, d: int) -> bool:
    if math.isfinite(support_max(rho)):
        return True
    return rho.kind is DistributionKind.HEAVY and rho.alpha > d


def scaled_radius_verdict(spec: ScaledRadiusSpec) -> RegimeReport:
    """
    Complete coverage in the scaled-radius model.

    For h = c^(1/d) h0 the liminf and limsup of (h/h0)^d both equal c: positive
    probability when c E rho^d > 1, zero when c E rho^d < 1. Needs E rho^(d+eta)
    finite for some eta > 0.
    """
    d = spec.base.dimension
    moment = d_moment(spec.base.rho, d)
    product = spec.scale_constant * moment
    evidence = {"l_h": spec.scale_constant, "L_h": spec.scale_constant, "moment": moment, "c_times_moment": product}
    if not _has_moment_above(spec.base.rho, d):
        return RegimeReport(CoverageOutcome.INDETERMINATE, evidence)
    if product > 1.0:
        return RegimeReport(CoverageOutcome.POSITIVE_PROBABILITY, evidence)
    if product < 1.0:
        return RegimeReport(CoverageOutcome.ZERO_PROBABILITY, evidence)
    return RegimeReport(CoverageOutcome.INDETERMINATE, evidence)
