"""
Source Models for the QNG Depth Toolkit
Analytic photostatistics of the heralded single-photon sources: the ideal benchmark
state, pulsed and cw SPDC, and the quantum dot with background light.
"""
import logging
import math
from typing import Annotated, List, Literal, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator
from scipy.special import erf

from config import N_MAX_CAP, TAIL_MASS
from errors import DomainError, UsageError
from fock_core import (
    PhotonNumberDistribution,
    apply_loss,
    click_probabilities,
    convolve,
    make_bernoulli,
    make_geometric,
    make_poisson,
    make_thermal,
)
from witnesses import closed_form_t_min

logger = logging.getLogger(__name__)

MODULE = "sources"


class IdealSourceConfig(BaseModel):
    """eta |1><1| + (1 - eta) |0><0|."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["ideal"] = "ideal"
    eta: float = Field(ge=0.0, le=1.0)


class SpdcConfig(BaseModel):
    """
    SPDC source, pulsed or cw. ``g`` is the per-pulse gain of the pair statistics;
    in the cw regime the accidental background enters through
    ``background_rate_hz`` instead, counted at the attenuator input.
    ``pair_rate_hz`` is only needed to simulate a cw source.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["spdc_pulsed", "spdc_cw"]
    g: float = Field(default=0.0, ge=0.0, lt=1.0)
    tau_s: float = Field(gt=0.0)
    repetition_rate_hz: Optional[float] = Field(default=None, gt=0.0)
    background_rate_hz: float = Field(default=0.0, ge=0.0)
    pair_rate_hz: Optional[float] = Field(default=None, gt=0.0)
    eta_trigger: float = Field(default=1.0, ge=0.0, le=1.0)
    eta_signal: float = Field(default=1.0, ge=0.0, le=1.0)
    jitter_sigma_s: float = Field(default=0.0, ge=0.0)
    mode_statistics: Optional[Literal["thermal", "poissonian"]] = None

    @model_validator(mode="after")
    def _check_regime(self):
        if self.kind == "spdc_pulsed" and self.repetition_rate_hz is None:
            raise ValueError("pulsed SPDC needs repetition_rate_hz")
        return self

    @property
    def regime(self) -> str:
        return "pulsed" if self.kind == "spdc_pulsed" else "cw"

    @property
    def statistics(self) -> str:
        """Pair statistics (pulsed) or background statistics (cw)."""
        if self.mode_statistics is not None:
            return self.mode_statistics
        return "thermal" if self.regime == "pulsed" else "poissonian"


class QuantumDotConfig(BaseModel):
    """
    Quantum dot with collection efficiency ``eta_col`` and ``lambda_bg`` background
    photons per window. ``bg_coupling`` only changes how collection-efficiency
    projections treat p2+; the state itself is always the exact convolution.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["quantum_dot"] = "quantum_dot"
    eta_col: float = Field(ge=0.0, le=1.0)
    lambda_bg: float = Field(default=0.0, ge=0.0)
    bg_coupling: Literal["independent", "source_correlated"] = "source_correlated"
    repetition_rate_hz: Optional[float] = Field(default=None, gt=0.0)


SourceConfig = Annotated[Union[IdealSourceConfig, SpdcConfig, QuantumDotConfig], Field(discriminator="kind")]

_source_adapter = TypeAdapter(SourceConfig)


def parse_source_config(data) -> Union[IdealSourceConfig, SpdcConfig, QuantumDotConfig]:
    """Validate a JSON-like dict into the matching source config."""
    return _source_adapter.validate_python(data)


class HeraldedState(NamedTuple):
    state: PhotonNumberDistribution
    trigger_prob: float


class ProjectionPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    factor: float
    eta_col: float
    p1: float
    p2plus: float
    t_min: float
    depth_db: float
    gain_db: float
    constant_p2plus: bool


def ideal_state(cfg: IdealSourceConfig) -> PhotonNumberDistribution:
    return make_bernoulli(cfg.eta)


def capture_fraction(tau: float, jitter_sigma: float) -> float:
    """Probability that a Gaussian-jittered detection lands in a centered window of width tau."""
    if tau < 0.0 or jitter_sigma < 0.0:
        raise DomainError(f"window and jitter must be >= 0, got tau={tau!r}, sigma={jitter_sigma!r}", MODULE)
    if tau == 0.0:
        return 0.0
    if jitter_sigma == 0.0:
        return 1.0
    # 2 Phi(tau / 2 sigma) - 1
    return float(erf(tau / (2.0 * math.sqrt(2.0) * jitter_sigma)))


def mean_pair_number(cfg: SpdcConfig) -> float:
    return cfg.g / (1.0 - cfg.g)


def pair_distribution(cfg: SpdcConfig, cap: int = N_MAX_CAP) -> PhotonNumberDistribution:
    """Pair-number statistics per pulse: thermal (1-g) g^n or Poisson of equal mean."""
    if cfg.statistics == "thermal":
        return make_geometric(cfg.g, cap)
    return make_poisson(mean_pair_number(cfg), cap)


def background_distribution(mean: float, statistics: str) -> PhotonNumberDistribution:
    if statistics == "thermal":
        return make_thermal(mean)
    return make_poisson(mean)


def _pair_weights(cfg: SpdcConfig, cap: int) -> np.ndarray:
    probs = pair_distribution(cfg, cap).probs
    weights = np.zeros(cap + 1)
    weights[:len(probs)] = probs
    return weights


def spdc_pulsed_heralded(cfg: SpdcConfig, cap: int = N_MAX_CAP) -> HeraldedState:
    """
    Signal-arm state conditioned on a trigger click: pair weights times the herald
    probability 1 - (1 - eta_trigger)^n, renormalized, then thinned by
    eta_signal times the capture fraction.
    """
    if cfg.regime != "pulsed":
        raise UsageError("spdc_pulsed_heralded needs a pulsed SPDC config", MODULE)
    ns = np.arange(cap + 1)
    herald = 1.0 - (1.0 - cfg.eta_trigger) ** ns
    weights = _pair_weights(cfg, cap) * herald
    trigger_prob = float(weights.sum())
    if trigger_prob <= 0.0:
        raise DomainError("source never heralds (g = 0 or eta_trigger = 0)", MODULE)
    conditional = weights / trigger_prob
    tail = np.cumsum(conditional[::-1])[::-1]
    beyond = np.append(tail[1:], 0.0)
    n_max = int(np.argmax(beyond < TAIL_MASS))
    if beyond[n_max] >= TAIL_MASS:
        raise DomainError(f"gain {cfg.g:g} needs more than {cap} photons for the heralded state", MODULE)
    heralded = PhotonNumberDistribution(conditional[:n_max + 1])
    efficiency = cfg.eta_signal * capture_fraction(cfg.tau_s, cfg.jitter_sigma_s)
    return HeraldedState(state=apply_loss(heralded, efficiency), trigger_prob=trigger_prob)


def spdc_cw_heralded(cfg: SpdcConfig) -> PhotonNumberDistribution:
    """Heralded twin (Bernoulli) plus accidental background counted in the window."""
    if cfg.regime != "cw":
        raise UsageError("spdc_cw_heralded needs a cw SPDC config", MODULE)
    twin = make_bernoulli(cfg.eta_signal * capture_fraction(cfg.tau_s, cfg.jitter_sigma_s))
    background = background_distribution(cfg.background_rate_hz * cfg.tau_s, cfg.statistics)
    return convolve(twin, background)


def quantum_dot_state(cfg: QuantumDotConfig) -> PhotonNumberDistribution:
    """Exact Bernoulli(eta_col) * Poisson(lambda_bg) convolution."""
    return convolve(make_bernoulli(cfg.eta_col), make_poisson(cfg.lambda_bg))


def quantum_dot_projected_state(cfg: QuantumDotConfig, eta_col: float) -> PhotonNumberDistribution:
    """
    State at a different collection efficiency. With ``independent`` coupling p1
    scales with eta_col while p2+ stays constant (the projection assumption);
    with ``source_correlated`` the model is rebuilt exactly.
    """
    if cfg.bg_coupling == "source_correlated":
        return quantum_dot_state(QuantumDotConfig(**{**cfg.model_dump(), "eta_col": eta_col}))
    if cfg.eta_col <= 0.0:
        raise DomainError("constant-p2+ projection needs a baseline eta_col > 0", MODULE)
    base = click_probabilities(quantum_dot_state(cfg))
    p1 = base.p1 * eta_col / cfg.eta_col
    if p1 + base.p2plus > 1.0:
        raise DomainError(f"projected p1 = {p1:.4g} leaves no room for p2+ = {base.p2plus:.3g}", MODULE)
    return PhotonNumberDistribution(np.array([1.0 - p1 - base.p2plus, p1, base.p2plus]))


def collection_projection(cfg: QuantumDotConfig, factors: Sequence[float]) -> List[ProjectionPoint]:
    """Closed-form QNG depth when the collection efficiency is improved by each factor."""
    if cfg.bg_coupling == "independent":
        logger.info("Projecting with constant p2+ (background assumed independent of collection)")
    base = click_probabilities(quantum_dot_state(cfg))
    base_depth = -10.0 * math.log10(closed_form_t_min(base.p1, base.p2plus))
    points = []
    for factor in factors:
        eta_col = cfg.eta_col * factor
        p = click_probabilities(quantum_dot_projected_state(cfg, eta_col))
        t_min = closed_form_t_min(p.p1, p.p2plus)
        depth = -10.0 * math.log10(t_min) if t_min > 0.0 else math.inf
        points.append(ProjectionPoint(
            factor=factor,
            eta_col=eta_col,
            p1=p.p1,
            p2plus=p.p2plus,
            t_min=t_min,
            depth_db=depth,
            gain_db=depth - base_depth,
            constant_p2plus=cfg.bg_coupling == "independent",
        ))
    return points


def heralded_state(cfg) -> PhotonNumberDistribution:
    """Model state of any source config."""
    if isinstance(cfg, IdealSourceConfig):
        return ideal_state(cfg)
    if isinstance(cfg, SpdcConfig):
        return spdc_pulsed_heralded(cfg).state if cfg.regime == "pulsed" else spdc_cw_heralded(cfg)
    if isinstance(cfg, QuantumDotConfig):
        return quantum_dot_state(cfg)
    raise UsageError(f"unsupported source config {type(cfg).__name__}", MODULE)


def with_transmittance(cfg, T: float):
    """Config whose model state equals the model state attenuated by T."""
    if isinstance(cfg, IdealSourceConfig):
        return cfg.model_copy(update={"eta": cfg.eta * T})
    if isinstance(cfg, SpdcConfig):
        return cfg.model_copy(update={
            "eta_signal": cfg.eta_signal * T,
            "background_rate_hz": cfg.background_rate_hz * T,
        })
    if isinstance(cfg, QuantumDotConfig):
        return cfg.model_copy(update={"eta_col": cfg.eta_col * T, "lambda_bg": cfg.lambda_bg * T})
    raise UsageError(f"unsupported source config {type(cfg).__name__}", MODULE)


def herald_rate_hz(cfg: SpdcConfig) -> float:
    """Heralds per second."""
    if cfg.regime == "pulsed":
        return spdc_pulsed_heralded(cfg).trigger_prob * cfg.repetition_rate_hz
    if cfg.pair_rate_hz is None:
        raise UsageError("cw herald rate needs pair_rate_hz", MODULE)
    return cfg.pair_rate_hz * cfg.eta_trigger


def equivalent_background_rate_hz(pulsed: SpdcConfig, signal_efficiency: float) -> float:
    """
    Accidental rate a cw source with this signal efficiency needs so that its
    window-averaged multiphoton weight equals the pulsed source's heralded
    p2+/p1^3 spread over one repetition period. For weak heralding this is
    eta_signal times the pairs per second; at eta_trigger = 1 it halves for
    poissonian pairs.
    """
    if pulsed.regime != "pulsed":
        raise UsageError("equivalent_background_rate_hz needs a pulsed SPDC config", MODULE)
    p = click_probabilities(spdc_pulsed_heralded(pulsed).state)
    if p.p1 <= 0.0:
        raise DomainError("pulsed source never delivers a signal photon; no cw equivalent exists", MODULE)
    return pulsed.repetition_rate_hz * signal_efficiency ** 2 * p.p2plus / p.p1 ** 3


def matched_cw_config(pulsed: SpdcConfig, tau_s: Optional[float] = None) -> SpdcConfig:
    """
    cw partner of a pulsed source with the same pair flux and efficiencies, and
    the accidental rate from ``equivalent_background_rate_hz``.
    """
    if pulsed.regime != "pulsed":
        raise UsageError("matched_cw_config needs a pulsed SPDC config", MODULE)
    tau_s = tau_s if tau_s is not None else pulsed.tau_s
    pairs_per_second = mean_pair_number(pulsed) * pulsed.repetition_rate_hz
    efficiency = pulsed.eta_signal * capture_fraction(tau_s, pulsed.jitter_sigma_s)
    return SpdcConfig(
        kind="spdc_cw",
        g=pulsed.g,
        tau_s=tau_s,
        background_rate_hz=equivalent_background_rate_hz(pulsed, efficiency),
        pair_rate_hz=pairs_per_second,
        eta_trigger=pulsed.eta_trigger,
        eta_signal=pulsed.eta_signal,
        jitter_sigma_s=pulsed.jitter_sigma_s,
        mode_statistics="poissonian",
    )
