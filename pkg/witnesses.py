"""
Witnesses for the QNG Depth Toolkit
Nonclassicality (NC) and quantum non-Gaussianity (QNG) witnesses on photon-number
and click statistics, classification into the nested state sets, and the depth of
each feature under attenuation (closed form and exact bisection).
"""
import logging
import math
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import bisect
from scipy.special import xlogy

from config import BISECTION_TOL_DB, BORDER_RTOL, SCAN_FLOOR_DB, SCAN_STEP_DB
from errors import DomainError
from fock_core import (
    ClickProbabilities,
    PhotonNumberDistribution,
    apply_loss,
    apply_loss_many,
    click_probabilities,
    validate_transmittance,
)

logger = logging.getLogger(__name__)

MODULE = "witnesses"

# Above this p2+/p1 the cubic QNG approximation is no longer trustworthy
APPROXIMATION_LIMIT = 0.1

# Margin decrease tolerated along a scan before it counts as decreasing
MONOTONE_SLACK = 1e-9


class Feature(str, Enum):
    NC = "NC"
    QNG = "QNG"


class DepthMethod(str, Enum):
    CLOSED_FORM = "closed_form"
    BISECTION = "bisection"


class WitnessMargins(BaseModel):
    """Signed distances to each border; positive means the witness holds."""
    model_config = ConfigDict(frozen=True)

    nc_exact: Optional[float] = None
    nc_approx: float
    qng_approx: float
    wigner: float


class WitnessVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    nc_exact: Optional[bool] = None
    nc_approx: bool
    qng_approx: bool
    wigner_negative_possible: bool
    margins: WitnessMargins
    label: str


class WignerThreshold(BaseModel):
    model_config = ConfigDict(frozen=True)

    p1: float
    t_threshold: float
    attainable: bool


class DepthReport(BaseModel):
    """
    Maximal attenuation under which a witness still holds.

    ``depth_db`` is +inf when the witness held on the whole scan (``verified_to_db``
    says how far that was checked) or when the closed form has no multiphoton term.
    ``witnessed`` is False when the feature already fails without attenuation; the
    depth is then reported as 0 dB.
    """
    model_config = ConfigDict(frozen=True)

    feature: Feature
    method: DepthMethod
    t_min: float
    depth_db: float
    witnessed: bool = True
    infinite: bool = False
    verified_to_db: Optional[float] = None
    lower_bound: bool = False
    non_monotonic: bool = False
    approximation_warning: bool = False
    fiber_km: Optional[float] = None
    loss_db_per_km: Optional[float] = None

    def describe(self) -> str:
        if not self.witnessed:
            return f"not {self.feature.value} (depth 0 dB)"
        if self.infinite:
            if self.verified_to_db is None:
                return "infinite"
            return f"infinite (verified to {self.verified_to_db:g} dB)"
        prefix = ">= " if self.lower_bound else ""
        return f"{prefix}{self.depth_db:.2f} dB ({self.method.value}, {self.feature.value})"


class TrajectoryPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    attenuation_db: float
    transmittance: float
    p1: float
    p2plus: float


def _holds(border: float, value: float) -> bool:
    """Strict ``value < border`` with a relative tolerance on the border."""
    return border - value > BORDER_RTOL * max(abs(border), abs(value))


def attenuation_db(T: float) -> float:
    """-10 log10 T; +inf for T = 0."""
    T = validate_transmittance(T)
    return math.inf if T == 0.0 else -10.0 * math.log10(T)


def transmittance(attenuation: float) -> float:
    """10^(-dB/10) for a nonnegative attenuation in dB."""
    attenuation = float(attenuation)
    if math.isnan(attenuation) or attenuation < 0.0:
        raise DomainError(f"attenuation must be >= 0 dB, got {attenuation!r}", MODULE)
    return 10.0 ** (-attenuation / 10.0)


def nc_exact_margin(dist: PhotonNumberDistribution) -> float:
    """P1 + P0 ln P0, zero on coherent states."""
    return dist[1] + float(xlogy(dist[0], dist[0]))


def nc_exact(dist: PhotonNumberDistribution) -> bool:
    """P1 > -P0 ln P0 (sufficient for nonclassicality)."""
    p0 = dist[0]
    return _holds(dist[1], -float(xlogy(p0, p0)))


def nc_approx(p: ClickProbabilities) -> bool:
    """p2+ < p1^2 / 2."""
    return _holds(0.5 * p.p1 ** 2, p.p2plus)


def qng_approx(p: ClickProbabilities) -> bool:
    """p2+ < 2 p1^3 / 3."""
    return _holds(2.0 / 3.0 * p.p1 ** 3, p.p2plus)


def wigner_negativity_threshold(p1: float) -> WignerThreshold:
    """Transmittance above which Wigner negativity is possible, T > 1/(2 p1)."""
    p1 = float(p1)
    if not 0.0 < p1 <= 1.0:
        raise DomainError(f"p1 must lie in (0, 1] for the Wigner threshold, got {p1!r}", MODULE)
    threshold = 1.0 / (2.0 * p1)
    return WignerThreshold(p1=p1, t_threshold=threshold, attainable=_holds(1.0, threshold))


def classify(state: Union[PhotonNumberDistribution, ClickProbabilities]) -> WitnessVerdict:
    """Evaluate every border and label the most specific witnessed set."""
    dist = state if isinstance(state, PhotonNumberDistribution) else None
    p = click_probabilities(dist) if dist is not None else state

    exact = nc_exact(dist) if dist is not None else None
    approx_nc = nc_approx(p)
    approx_qng = qng_approx(p)
    wigner = p.p1 > 0.0 and wigner_negativity_threshold(p.p1).attainable

    if wigner and approx_qng:
        label = "wigner_negative"
    elif approx_qng:
        label = "quantum_non_gaussian"
    elif approx_nc or exact:
        label = "nonclassical"
    else:
        label = "unclassified"

    margins = WitnessMargins(
        nc_exact=nc_exact_margin(dist) if dist is not None else None,
        nc_approx=0.5 * p.p1 ** 2 - p.p2plus,
        qng_approx=2.0 / 3.0 * p.p1 ** 3 - p.p2plus,
        wigner=p.p1 - 0.5,
    )
    return WitnessVerdict(
        nc_exact=exact,
        nc_approx=approx_nc,
        qng_approx=approx_qng,
        wigner_negative_possible=wigner,
        margins=margins,
        label=label,
    )


def approximate_attenuated_state(p: ClickProbabilities, T: float) -> ClickProbabilities:
    """Conservative attenuated statistics (1 - T p1 - T^2 p2+, T p1, T^2 p2+)."""
    T = validate_transmittance(T)
    return ClickProbabilities.from_values(T * p.p1, T * T * p.p2plus)


def closed_form_t_min(p1: float, p2plus: float) -> float:
    """T_min = (3/2) p2+ / p1^3."""
    if p1 <= 0.0:
        raise DomainError(f"closed-form depth needs p1 > 0, got {p1!r}", MODULE)
    return 1.5 * p2plus / p1 ** 3


def qng_depth_closed_form(p: ClickProbabilities) -> DepthReport:
    t_min = closed_form_t_min(p.p1, p.p2plus)
    warn = p.p2plus / p.p1 > APPROXIMATION_LIMIT
    if warn:
        logger.warning(
            f"⚠️ p2+/p1 = {p.p2plus / p.p1:.3g} exceeds {APPROXIMATION_LIMIT}; closed-form QNG depth is unreliable"
        )
    common = dict(feature=Feature.QNG, method=DepthMethod.CLOSED_FORM, approximation_warning=warn)
    if not qng_approx(p):
        return DepthReport(t_min=1.0, depth_db=0.0, witnessed=False, **common)
    if t_min == 0.0:
        return DepthReport(t_min=0.0, depth_db=math.inf, infinite=True, **common)
    return DepthReport(t_min=t_min, depth_db=-10.0 * math.log10(t_min), **common)


def _click_columns(rows: np.ndarray):
    """p1 and p2+ of each attenuated row; a vacuum-only state has neither."""
    p1 = rows[:, 1] if rows.shape[1] > 1 else np.zeros(rows.shape[0])
    return p1, rows[:, 2:].sum(axis=1)


def _normalized_margin(p1: np.ndarray, p2plus: np.ndarray, feature: Feature) -> np.ndarray:
    """(border - p2+)/max(border, p2+) less the border tolerance; > 0 iff the witness holds."""
    border = 0.5 * p1 ** 2 if feature == Feature.NC else 2.0 / 3.0 * p1 ** 3
    scale = np.maximum(border, p2plus)
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.where(scale > 0.0, (border - p2plus) / scale, -1.0)
    return margin - BORDER_RTOL


def depth_bisection(
    dist: PhotonNumberDistribution,
    feature: Feature = Feature.QNG,
    floor_db: float = SCAN_FLOOR_DB,
    step_db: float = SCAN_STEP_DB,
    tol_db: float = BISECTION_TOL_DB,
) -> DepthReport:
    """
    Depth under the exact loss channel: scan the attenuation from 0 dB to
    ``floor_db`` and bisect the first failure of the witness.
    """
    feature = Feature(feature)
    grid = np.round(np.arange(0.0, floor_db + step_db / 2.0, step_db), 10)
    rows = apply_loss_many(dist, 10.0 ** (-grid / 10.0))
    margins = _normalized_margin(*_click_columns(rows), feature)
    holds = margins > 0.0
    common = dict(feature=feature, method=DepthMethod.BISECTION)

    if not holds[0]:
        return DepthReport(t_min=1.0, depth_db=0.0, witnessed=False, **common)

    if holds.all():
        if np.all(np.diff(margins) >= -MONOTONE_SLACK):
            return DepthReport(t_min=0.0, depth_db=math.inf, infinite=True, verified_to_db=float(grid[-1]), **common)
        logger.warning(f"{feature.value} margin shrinks along the scan without crossing; reporting the scan floor")
        return DepthReport(
            t_min=10.0 ** (-grid[-1] / 10.0),
            depth_db=float(grid[-1]),
            verified_to_db=float(grid[-1]),
            lower_bound=True,
            **common,
        )

    crossings = int(np.count_nonzero(holds[1:] != holds[:-1]))
    if crossings > 1:
        logger.warning(f"{feature.value} margin crosses the border {crossings} times; reporting the first crossing")
    first_fail = int(np.argmin(holds))

    def margin_at(db: float) -> float:
        state = apply_loss(dist, 10.0 ** (-db / 10.0))
        return float(_normalized_margin(np.array(state[1]), np.array(state.probs[2:].sum()), feature))

    root = bisect(margin_at, float(grid[first_fail - 1]), float(grid[first_fail]), xtol=tol_db)
    return DepthReport(
        t_min=10.0 ** (-root / 10.0),
        depth_db=float(root),
        non_monotonic=crossings > 1,
        **common,
    )


def attenuation_trajectory(dist: PhotonNumberDistribution, attenuations: Sequence[float]) -> List[TrajectoryPoint]:
    """(p1, p2+) of the exactly attenuated state at each requested attenuation."""
    ts = [transmittance(a) for a in attenuations]
    if not ts:
        return []
    p1, p2plus = _click_columns(apply_loss_many(dist, ts))
    return [
        TrajectoryPoint(attenuation_db=float(a), transmittance=t, p1=float(x1), p2plus=float(x2))
        for a, t, x1, x2 in zip(attenuations, ts, p1, p2plus)
    ]


def fiber_range(depth_db: float, loss_db_per_km: float) -> float:
    """Fiber length whose loss equals the depth."""
    if loss_db_per_km <= 0.0:
        raise DomainError(f"fiber loss must be > 0 dB/km, got {loss_db_per_km!r}", MODULE)
    if depth_db < 0.0:
        raise DomainError(f"depth must be >= 0 dB, got {depth_db!r}", MODULE)
    return depth_db / loss_db_per_km


def with_fiber_range(report: DepthReport, loss_db_per_km: float) -> DepthReport:
    depth = report.depth_db if report.witnessed else 0.0
    return report.model_copy(update={"fiber_km": fiber_range(depth, loss_db_per_km), "loss_db_per_km": loss_db_per_km})
