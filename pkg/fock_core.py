"""
Fock Core for the QNG Depth Toolkit
Photon-number-diagonal states, the bosonic loss channel and the click marginals
(p0, p1, p2+) every witness works on.
"""
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import comb, gammaln, xlog1py, xlogy
from scipy.stats import poisson

from config import N_MAX_CAP, NORMALIZATION_TOLERANCE, TAIL_MASS
from errors import DistributionError, DomainError

MODULE = "fock_core"

# Binomial coefficients above this photon number are evaluated in log space
LOG_BINOMIAL_ABOVE = 30

# Entries this far below zero are rounding noise and get clipped
NEGATIVE_NOISE = 1e-15

# Poisson tails are cut far below TAIL_MASS: coherent states sit exactly on the
# NC border and renormalizing a larger tail would push them across it
POISSON_TAIL_MASS = TAIL_MASS * 1e-4


class ClickProbabilities(BaseModel):
    """
    Per-trigger probabilities of no click, exactly one detector clicking and
    both detectors clicking. Built from a photon-number distribution they are
    the marginals P0, P1 and P2+ (sigmas zero).
    """
    model_config = ConfigDict(frozen=True)

    p0: float = Field(ge=0.0, le=1.0)
    p1: float = Field(ge=0.0, le=1.0)
    p2plus: float = Field(ge=0.0, le=1.0)
    sigma_p0: float = Field(default=0.0, ge=0.0)
    sigma_p1: float = Field(default=0.0, ge=0.0)
    sigma_p2plus: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _check_total(self):
        total = self.p0 + self.p1 + self.p2plus
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValueError(f"p0 + p1 + p2plus = {total!r}, expected 1")
        return self

    @classmethod
    def from_values(cls, p1: float, p2plus: float, **sigmas) -> "ClickProbabilities":
        """Build from (p1, p2+) with p0 taking the remaining probability."""
        p0 = 1.0 - p1 - p2plus
        if -NORMALIZATION_TOLERANCE <= p0 < 0.0:
            p0 = 0.0
        return cls(p0=p0, p1=p1, p2plus=p2plus, **sigmas)


@dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Truncated Fock-diagonal statistics P0..P_nmax; immutable after construction."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _validated(self.probs))

    @classmethod
    def from_probs(cls, probs: Union[Sequence[float], np.ndarray]) -> "PhotonNumberDistribution":
        return cls(np.asarray(probs, dtype=float))

    @property
    def n_max(self) -> int:
        return len(self.probs) - 1

    def __getitem__(self, n: int) -> float:
        """P_n, zero beyond the truncation."""
        if n < 0:
            raise IndexError(n)
        return float(self.probs[n]) if n <= self.n_max else 0.0

    def __repr__(self) -> str:
        shown = ", ".join(f"{p:.6g}" for p in self.probs[:6])
        more = ", ..." if self.n_max > 5 else ""
        return f"PhotonNumberDistribution(n_max={self.n_max}, probs=[{shown}{more}])"

    def allclose(self, other: "PhotonNumberDistribution", atol: float = 1e-12) -> bool:
        size = max(len(self.probs), len(other.probs))
        return bool(np.allclose(_padded(self.probs, size), _padded(other.probs, size), rtol=0.0, atol=atol))


def _padded(probs: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    out[:len(probs)] = probs
    return out


def _validated(probs) -> np.ndarray:
    arr = np.array(probs, dtype=float).ravel()
    if arr.size == 0:
        raise DistributionError("empty photon-number distribution", MODULE)
    if not np.all(np.isfinite(arr)):
        raise DistributionError("photon-number distribution contains non-finite entries", MODULE)
    if arr.min() < -NEGATIVE_NOISE:
        raise DistributionError(f"negative probability {arr.min():.3e} in distribution", MODULE)
    arr = np.clip(arr, 0.0, None)
    total = arr.sum()
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise DistributionError(
            f"distribution sums to {total!r}; deviation above {NORMALIZATION_TOLERANCE:g}", MODULE
        )
    arr = arr / total
    arr.setflags(write=False)
    return arr


def validate_transmittance(T: float) -> float:
    """Return T as float, raising DomainError outside [0, 1]."""
    T = float(T)
    if not np.isfinite(T) or T < 0.0 or T > 1.0:
        raise DomainError(f"transmittance must lie in [0, 1], got {T!r}", MODULE)
    return T


def thinning_kernel(transmittances: Union[float, Iterable[float]], n_max: int) -> np.ndarray:
    """
    Binomial loss kernels K[t, n, m] = C(m, n) T_t^n (1-T_t)^(m-n), shape (len(T), n_max+1, n_max+1).
    """
    t = np.atleast_1d(np.asarray(transmittances, dtype=float))[:, None, None]
    n = np.arange(n_max + 1)[None, :, None]
    m = np.arange(n_max + 1)[None, None, :]
    k = m - n
    lower = k >= 0
    k = np.where(lower, k, 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = comb(m, n) * t ** n * (1.0 - t) ** k
        logged = np.exp(gammaln(m + 1) - gammaln(n + 1) - gammaln(k + 1) + xlogy(n, t) + xlog1py(k, -t))
    kernel = np.where(m <= LOG_BINOMIAL_ABOVE, direct, logged)
    return np.where(lower, np.nan_to_num(kernel), 0.0)


def apply_loss(dist: PhotonNumberDistribution, T: float) -> PhotonNumberDistribution:
    """P'_n = sum_{m>=n} C(m,n) T^n (1-T)^(m-n) P_m."""
    T = validate_transmittance(T)
    if T == 1.0:
        return dist
    if T == 0.0:
        vacuum = np.zeros(dist.n_max + 1)
        vacuum[0] = 1.0
        return PhotonNumberDistribution(vacuum)
    return PhotonNumberDistribution(thinning_kernel(T, dist.n_max)[0] @ dist.probs)


def apply_loss_many(dist: PhotonNumberDistribution, transmittances: Sequence[float]) -> np.ndarray:
    """Rows of the attenuated distribution for each transmittance; no per-row validation."""
    ts = np.asarray([validate_transmittance(t) for t in transmittances])
    return np.clip(thinning_kernel(ts, dist.n_max) @ dist.probs, 0.0, None)


def _truncation_order(tail: np.ndarray, cap: int, what: str, tail_mass: float = TAIL_MASS) -> int:
    below = np.nonzero(tail < tail_mass)[0]
    if below.size == 0:
        raise DomainError(
            f"{what} needs more than {cap} photons to keep the tail below {tail_mass:g}; raise QNG_N_MAX_CAP",
            MODULE,
        )
    return int(below[0])


def make_poisson(mean: float, cap: int = N_MAX_CAP) -> PhotonNumberDistribution:
    """Coherent-state statistics e^-l l^n / n!, truncated adaptively."""
    mean = float(mean)
    if not np.isfinite(mean) or mean < 0.0:
        raise DomainError(f"Poisson mean must be >= 0, got {mean!r}", MODULE)
    if mean == 0.0:
        return PhotonNumberDistribution(np.array([1.0]))
    ns = np.arange(cap + 1)
    n_max = _truncation_order(poisson.sf(ns, mean), cap, f"Poisson mean {mean:g}", POISSON_TAIL_MASS)
    return PhotonNumberDistribution(poisson.pmf(np.arange(n_max + 1), mean))


def make_geometric(g: float, cap: int = N_MAX_CAP) -> PhotonNumberDistribution:
    """Single-mode thermal marginal (1-g) g^n of the two-mode SPDC state."""
    g = float(g)
    if not np.isfinite(g) or g < 0.0 or g >= 1.0:
        raise DomainError(f"gain must lie in [0, 1), got {g!r}", MODULE)
    if g == 0.0:
        return PhotonNumberDistribution(np.array([1.0]))
    ns = np.arange(cap + 1)
    n_max = _truncation_order(g ** (ns + 1.0), cap, f"geometric gain {g:g}")
    return PhotonNumberDistribution((1.0 - g) * g ** np.arange(n_max + 1.0))


def make_thermal(mean: float, cap: int = N_MAX_CAP) -> PhotonNumberDistribution:
    """Thermal statistics of the given mean photon number."""
    mean = float(mean)
    if not np.isfinite(mean) or mean < 0.0:
        raise DomainError(f"thermal mean must be >= 0, got {mean!r}", MODULE)
    return make_geometric(mean / (1.0 + mean), cap)


def make_bernoulli(p: float) -> PhotonNumberDistribution:
    """{P0 = 1-p, P1 = p}."""
    p = validate_transmittance(p)
    return PhotonNumberDistribution(np.array([1.0 - p, p]))


def convolve(a: PhotonNumberDistribution, b: PhotonNumberDistribution) -> PhotonNumberDistribution:
    """Photon-number statistics of two independent modes counted together."""
    probs = np.convolve(a.probs, b.probs)
    # drop trailing entries that carry no mass at double precision
    tail = np.cumsum(probs[::-1])[::-1]
    keep = max(1, int(np.count_nonzero(tail > TAIL_MASS * 1e-4)))
    return PhotonNumberDistribution(probs[:keep] / probs[:keep].sum())


def mean_photon_number(dist: PhotonNumberDistribution) -> float:
    return float(np.arange(dist.n_max + 1) @ dist.probs)


def factorial_moment(dist: PhotonNumberDistribution, order: int) -> float:
    """<n(n-1)...(n-order+1)>."""
    ns = np.arange(dist.n_max + 1, dtype=float)
    falling = np.ones_like(ns)
    for j in range(order):
        falling *= ns - j
    return float(falling @ dist.probs)


def g2(dist: PhotonNumberDistribution) -> Optional[float]:
    """Zero-delay second-order correlation <n(n-1)>/<n>^2; None for the vacuum."""
    mean = mean_photon_number(dist)
    if mean == 0.0:
        return None
    return factorial_moment(dist, 2) / mean ** 2


def click_probabilities(dist: PhotonNumberDistribution) -> ClickProbabilities:
    """(P0, P1, sum_{n>=2} P_n)."""
    p0 = dist[0]
    p1 = dist[1]
    p2plus = float(dist.probs[2:].sum())
    return ClickProbabilities(p0=p0, p1=p1, p2plus=p2plus)
