"""
Depth Optimizer for the QNG Depth Toolkit
One-dimensional parameter sweeps of the QNG depth, golden-section refinement of
the best grid point, and the cw versus pulsed SPDC comparison.
"""
import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import minimize_scalar

from config import QNG_THREADS
from errors import DomainError, UsageError
from fock_core import PhotonNumberDistribution, click_probabilities
from sources import (
    QuantumDotConfig,
    SourceConfig,
    SpdcConfig,
    capture_fraction,
    equivalent_background_rate_hz,
    heralded_state,
    quantum_dot_projected_state,
)
from witnesses import Feature, closed_form_t_min, depth_bisection

logger = logging.getLogger(__name__)

MODULE = "depth_optimizer"

# Bisection tolerance used inside sweeps; tight so refinement sees a smooth objective
OBJECTIVE_TOL_DB = 1e-9

# Relative parameter tolerance of the golden-section search
REFINE_XTOL = 1e-4

# Relative p1 difference above which cw and pulsed sources are not comparable
P1_MATCH_TOLERANCE = 0.01

# Relative difference between the cw accidental rate and the pulsed-equivalent one
BACKGROUND_MATCH_TOLERANCE = 0.1

PROFILE_COLUMNS = ("parameter_value", "p1", "p2plus", "t_min", "depth_db")

Parameter = Literal["tau", "gain", "eta_signal", "lambda_bg", "eta_col"]

_FIELDS = {
    "tau": ("tau_s", SpdcConfig),
    "gain": ("g", SpdcConfig),
    "eta_signal": ("eta_signal", SpdcConfig),
    "lambda_bg": ("lambda_bg", QuantumDotConfig),
    "eta_col": ("eta_col", QuantumDotConfig),
}

Objective = Callable[[float], float]


class SweepSpec(BaseModel):
    """Which source parameter to vary, over which grid, with everything else fixed."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    parameter: Parameter
    grid: List[float] = Field(min_length=1)
    fixed: SourceConfig

    @model_validator(mode="after")
    def _check_grid(self):
        field_name, kind = _FIELDS[self.parameter]
        if not isinstance(self.fixed, kind):
            raise ValueError(f"parameter {self.parameter!r} needs a {kind.__name__} source, got {self.fixed.kind!r}")
        for value in self.grid:
            self.config_at(value)
        return self

    def config_at(self, value: float):
        """The fixed config with the swept field set to ``value``, validated."""
        field_name, _kind = _FIELDS[self.parameter]
        return type(self.fixed).model_validate({**self.fixed.model_dump(), field_name: value})


class SweepPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    depth_db: float
    p1: Optional[float] = None
    p2plus: Optional[float] = None
    t_min: Optional[float] = None
    witnessed: bool = True


class OptimizationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    parameter: str
    best_value: float
    best_depth_db: float
    profile: List[SweepPoint]
    boundary_flag: bool
    refined: bool = False


class ComparisonReport(BaseModel):
    """Closed-form minimal transmittances of a cw and a pulsed SPDC source."""
    model_config = ConfigDict(frozen=True)

    t_min_cw: float
    t_min_pulsed: float
    ratio: float
    predicted_ratio: float
    tau_s: float
    repetition_rate_hz: float
    p1_cw: float
    p1_pulsed: float
    p1_mismatch: float
    background_rate_hz: float
    equivalent_background_rate_hz: float
    background_mismatch: float
    comparable: bool
    mode_statistics_factor: float


def _state_at(spec: SweepSpec, value: float) -> PhotonNumberDistribution:
    if spec.parameter == "eta_col":
        return quantum_dot_projected_state(spec.fixed, value)
    return heralded_state(spec.config_at(value))


def evaluate_point(spec: SweepSpec, value: float, objective: Optional[Objective] = None) -> SweepPoint:
    """Depth at one parameter value; a state without QNG scores 0 dB."""
    value = float(value)
    if objective is not None:
        return SweepPoint(value=value, depth_db=float(objective(value)))
    dist = _state_at(spec, value)
    p = click_probabilities(dist)
    report = depth_bisection(dist, Feature.QNG, tol_db=OBJECTIVE_TOL_DB)
    return SweepPoint(
        value=value,
        depth_db=report.depth_db if report.witnessed else 0.0,
        p1=p.p1,
        p2plus=p.p2plus,
        t_min=report.t_min,
        witnessed=report.witnessed,
    )


def _result(spec: SweepSpec, profile: List[SweepPoint], refined: bool = False) -> OptimizationResult:
    best = max(range(len(profile)), key=lambda i: (profile[i].depth_db, -i))
    return OptimizationResult(
        parameter=spec.parameter,
        best_value=profile[best].value,
        best_depth_db=profile[best].depth_db,
        profile=profile,
        boundary_flag=best in (0, len(profile) - 1),
        refined=refined,
    )


def sweep(spec: SweepSpec, objective: Optional[Objective] = None, workers: Optional[int] = None) -> OptimizationResult:
    """Depth profile over the grid, assembled in grid order."""
    grid = sorted(spec.grid)
    workers = max(1, min(workers or QNG_THREADS, QNG_THREADS))
    logger.info(f"📈 Sweeping {spec.parameter} over {len(grid)} point(s) with {workers} worker(s)")
    if workers == 1 or len(grid) == 1:
        profile = [evaluate_point(spec, v, objective) for v in grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            profile = list(pool.map(lambda v: evaluate_point(spec, v, objective), grid))
    result = _result(spec, profile)
    if result.boundary_flag:
        logger.warning(f"⚠️ Best {spec.parameter} = {result.best_value:g} sits on the grid edge")
    return result


def refine(
    result: OptimizationResult,
    spec: SweepSpec,
    objective: Optional[Objective] = None,
) -> OptimizationResult:
    """
    Golden-section search between the neighbours of the best grid point. A
    boundary optimum is returned unchanged.
    """
    if result.boundary_flag:
        logger.warning("⚠️ Refusing to refine a boundary optimum; widen the grid")
        return result
    values = [pt.value for pt in result.profile]
    i = values.index(result.best_value)
    bracket = (values[i - 1], values[i], values[i + 1])
    try:
        found = minimize_scalar(
            lambda x: -evaluate_point(spec, x, objective).depth_db,
            bracket=bracket,
            method="golden",
            options={"xtol": REFINE_XTOL},
        )
    except ValueError as e:
        # flat top: the middle point is not strictly better than its neighbours
        logger.warning(f"⚠️ Golden-section refinement skipped: {e}")
        return result
    point = evaluate_point(spec, float(found.x), objective)
    profile = sorted([pt for pt in result.profile if pt.value != point.value] + [point], key=lambda pt: pt.value)
    refined = _result(spec, profile, refined=True)
    logger.info(f"🎯 Refined {spec.parameter} = {refined.best_value:.6g} with depth {refined.best_depth_db:.4f} dB")
    return refined


def _closed_form(cfg: SpdcConfig):
    p = click_probabilities(heralded_state(cfg))
    return p, closed_form_t_min(p.p1, p.p2plus)


def compare_cw_pulsed(cw: SpdcConfig, pulsed: SpdcConfig) -> ComparisonReport:
    """
    Ratio of the closed-form minimal transmittances T_cw / T_pulsed next to the
    predicted tau * nu. ``mode_statistics_factor`` is how much that ratio changes
    when the pulsed pairs are thermal instead of poissonian.
    """
    if cw.regime != "cw" or pulsed.regime != "pulsed":
        raise UsageError("compare_cw_pulsed takes a cw config and a pulsed config, in that order", MODULE)
    p_cw, t_cw = _closed_form(cw)
    p_pul, t_pul = _closed_form(pulsed)
    if t_pul <= 0.0:
        raise DomainError("pulsed source has no multiphoton contribution; the ratio is undefined", MODULE)

    mismatch = abs(p_cw.p1 - p_pul.p1) / p_pul.p1 if p_pul.p1 > 0.0 else math.inf
    if mismatch > P1_MATCH_TOLERANCE:
        logger.warning(f"⚠️ cw and pulsed p1 differ by {mismatch:.2%}; the sources are not matched")

    equivalent = equivalent_background_rate_hz(pulsed, cw.eta_signal * capture_fraction(cw.tau_s, cw.jitter_sigma_s))
    bg_mismatch = abs(cw.background_rate_hz - equivalent) / equivalent if equivalent > 0.0 else math.inf
    if bg_mismatch > BACKGROUND_MATCH_TOLERANCE:
        logger.warning(
            f"⚠️ cw accidental rate {cw.background_rate_hz:.4g} Hz differs by {bg_mismatch:.2%} from the "
            f"pulsed-equivalent {equivalent:.4g} Hz; the multiphoton weights are not matched"
        )
    comparable = mismatch <= P1_MATCH_TOLERANCE and bg_mismatch <= BACKGROUND_MATCH_TOLERANCE

    _, t_thermal = _closed_form(pulsed.model_copy(update={"mode_statistics": "thermal"}))
    _, t_poisson = _closed_form(pulsed.model_copy(update={"mode_statistics": "poissonian"}))

    return ComparisonReport(
        t_min_cw=t_cw,
        t_min_pulsed=t_pul,
        ratio=t_cw / t_pul,
        predicted_ratio=cw.tau_s * pulsed.repetition_rate_hz,
        tau_s=cw.tau_s,
        repetition_rate_hz=pulsed.repetition_rate_hz,
        p1_cw=p_cw.p1,
        p1_pulsed=p_pul.p1,
        p1_mismatch=mismatch,
        background_rate_hz=cw.background_rate_hz,
        equivalent_background_rate_hz=equivalent,
        background_mismatch=bg_mismatch,
        comparable=comparable,
        mode_statistics_factor=t_poisson / t_thermal,
    )


def _cell(value) -> str:
    return "" if value is None else repr(float(value))


def profile_csv(result: OptimizationResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(PROFILE_COLUMNS)
    for pt in result.profile:
        writer.writerow([_cell(pt.value), _cell(pt.p1), _cell(pt.p2plus), _cell(pt.t_min), _cell(pt.depth_db)])
    return buffer.getvalue()
