"""
QKD Post-Processing and Key-Rate Math
=====================================

Sifting, QBER estimation, binary entropy, the Shor-Preskill bound for the
entanglement-based protocol and the vacuum + weak decoy bounds for decoy-state
BB84 with a faint pulse source.

Key rates are asymptotic; finite-size effects reduce to an event-count check.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ..exceptions import DomainError
from ..models.source_models import FpsSpec
from ..utils.logger import get_logger

logger = get_logger(__name__)

E0 = 0.5
SHOR_PRESKILL_QBER_LIMIT = 0.11
DEFAULT_EC_EFFICIENCY = 1.16
DEFAULT_SIFTING_FACTOR = 0.5
MIN_EVENTS = {"bell": 1000, "qkd": 10000}


@dataclass(frozen=True)
class SiftedKey:
    """Bit pairs kept after basis reconciliation."""

    ground_bits: np.ndarray
    space_bits: np.ndarray
    n_input: int
    qber_interval: Tuple[float, float] = (0.0, 1.0)

    @property
    def n(self) -> int:
        return len(self.ground_bits)

    @property
    def n_errors(self) -> int:
        return int(np.count_nonzero(self.ground_bits != self.space_bits))

    @property
    def qber(self) -> float:
        return self.n_errors / self.n if self.n else 0.0

    def to_frame(self) -> pd.DataFrame:
        """Audit dump `ground_bit,space_bit`."""
        return pd.DataFrame(
            {"ground_bit": self.ground_bits.astype(np.uint8),
             "space_bit": self.space_bits.astype(np.uint8)}
        )


def clopper_pearson(k: int, n: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Exact binomial confidence interval for k successes out of n."""
    if n == 0:
        return 0.0, 1.0
    alpha = 1.0 - confidence
    low = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2.0, k, n - k + 1))
    high = 1.0 if k == n else float(stats.beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return low, high


def sift(
    ground_basis: np.ndarray,
    ground_bits: np.ndarray,
    space_basis: np.ndarray,
    space_bits: np.ndarray,
    confidence: float = 0.95,
) -> SiftedKey:
    """
    Keep rounds measured in the same basis on both sides.

    Args:
        ground_basis, space_basis: Basis index per round (0 = H/V, 1 = +/-45)
        ground_bits, space_bits: Outcome per round
        confidence: Level of the QBER interval

    Returns:
        SiftedKey with a Clopper-Pearson QBER interval
    """
    ground_basis = np.asarray(ground_basis)
    space_basis = np.asarray(space_basis)
    keep = ground_basis == space_basis
    g = np.asarray(ground_bits)[keep].astype(np.uint8)
    s = np.asarray(space_bits)[keep].astype(np.uint8)
    errors = int(np.count_nonzero(g != s))
    return SiftedKey(
        ground_bits=g,
        space_bits=s,
        n_input=len(ground_basis),
        qber_interval=clopper_pearson(errors, len(g), confidence),
    )


def binary_entropy(x: float) -> float:
    """Shannon entropy of a biased coin, bits."""
    if not 0.0 <= x <= 1.0 or math.isnan(x):
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def shor_preskill_rate(qber: float) -> float:
    """Secret fraction per sifted bit, max(0, 1 - 2 H2(QBER))."""
    if not 0.0 <= qber <= 0.5:
        raise DomainError(f"QBER must lie in [0, 0.5], got {qber}")
    return max(0.0, 1.0 - 2.0 * binary_entropy(qber))


def key_rate_bbm92(
    qber: float, coincidence_rate: float, sifting_factor: float = DEFAULT_SIFTING_FACTOR
) -> float:
    """Asymptotic entanglement-based key rate, bits/s."""
    return sifting_factor * coincidence_rate * shor_preskill_rate(qber)


def decoy_gain_error(
    mu: float, eta: float, y0: float, e_d: float, e0: float = E0
) -> Tuple[float, float]:
    """
    Gain and error rate of a coherent state of mean photon number mu.

    Q = Y0 + 1 - exp(-eta mu);  E Q = e0 Y0 + e_d (1 - exp(-eta mu))
    """
    if not 0.0 <= eta <= 1.0 or not 0.0 <= y0 <= 1.0 or mu < 0:
        raise DomainError(f"invalid channel: mu={mu}, eta={eta}, Y0={y0}")
    signal = -math.expm1(-eta * mu)
    gain = y0 + signal
    if gain == 0.0:
        return 0.0, e0
    return gain, (e0 * y0 + e_d * signal) / gain


@dataclass(frozen=True)
class DecoyObservables:
    """Measured or modelled quantities feeding the decoy bounds."""

    mu: float
    nu: float
    q_mu: float
    e_mu: float
    q_nu: float
    e_nu: float
    y0: float
    rep_rate: float = 1.0e8
    eta: Optional[float] = None
    e_d: Optional[float] = None
    f: float = DEFAULT_EC_EFFICIENCY
    e0: float = E0

    def __post_init__(self):
        if not 0.0 < self.nu < self.mu:
            raise DomainError(f"need 0 < nu < mu, got nu={self.nu}, mu={self.mu}")


@dataclass(frozen=True)
class KeyRateResult:
    """Secret key rate with the decoy intermediates."""

    rate_per_pulse: float
    rate_cps: float
    y1_lower: float
    e1_upper: float
    q1: float
    q_mu: float
    e_mu: float
    flags: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def positive(self) -> bool:
        return self.rate_per_pulse > 0.0

    def as_dict(self) -> dict:
        data = asdict(self)
        data["flags"] = list(self.flags)
        return data


def decoy_observables(
    eta: float,
    fps: FpsSpec,
    y0: float,
    e_d: Optional[float] = None,
    f: float = DEFAULT_EC_EFFICIENCY,
) -> DecoyObservables:
    """Observables predicted by the channel model for a given transmittance."""
    e_d = fps.intrinsic_error if e_d is None else e_d
    q_mu, e_mu = decoy_gain_error(fps.mu_signal, eta, y0, e_d)
    q_nu, e_nu = decoy_gain_error(fps.mu_decoy, eta, y0, e_d)
    return DecoyObservables(
        mu=fps.mu_signal,
        nu=fps.mu_decoy,
        q_mu=q_mu,
        e_mu=e_mu,
        q_nu=q_nu,
        e_nu=e_nu,
        y0=y0,
        rep_rate=fps.rep_rate_pps,
        eta=eta,
        e_d=e_d,
        f=f,
    )


def observables_from_counts(
    fps: FpsSpec,
    sent: Mapping[str, int],
    detected: Mapping[str, int],
    sifted: Mapping[str, int],
    errors: Mapping[str, int],
    f: float = DEFAULT_EC_EFFICIENCY,
) -> DecoyObservables:
    """
    Observables measured from a simulated or recorded pass.

    Gains are detections per pulse sent in each class; error rates come from the
    sifted rounds of each class; Y0 is the vacuum gain.
    """
    def gain(name: str) -> float:
        return detected.get(name, 0) / sent[name] if sent.get(name) else 0.0

    def error_rate(name: str) -> float:
        return errors.get(name, 0) / sifted[name] if sifted.get(name) else E0

    return DecoyObservables(
        mu=fps.mu_signal,
        nu=fps.mu_decoy,
        q_mu=gain("signal"),
        e_mu=error_rate("signal"),
        q_nu=gain("decoy"),
        e_nu=error_rate("decoy"),
        y0=gain("vacuum"),
        rep_rate=fps.rep_rate_pps,
        f=f,
    )


def _assemble_rate(
    obs: DecoyObservables,
    y1: float,
    e1: float,
    sifting_factor: float,
    flags: list,
) -> KeyRateResult:
    q1 = y1 * obs.mu * math.exp(-obs.mu)
    rate = sifting_factor * (
        -obs.q_mu * obs.f * binary_entropy(min(obs.e_mu, 0.5))
        + q1 * (1.0 - binary_entropy(e1))
    )
    if rate <= 0.0:
        flags.append("rate_clamped")
        rate = 0.0
    return KeyRateResult(
        rate_per_pulse=rate,
        rate_cps=rate * obs.rep_rate,
        y1_lower=y1,
        e1_upper=e1,
        q1=q1,
        q_mu=obs.q_mu,
        e_mu=obs.e_mu,
        flags=tuple(flags),
    )


def decoy_key_rate(
    obs: DecoyObservables, sifting_factor: float = DEFAULT_SIFTING_FACTOR
) -> KeyRateResult:
    """
    Key rate lower bound from the vacuum + weak decoy estimates.

    A non-positive Y1 bound yields rate 0 with the `y1_bound_nonpositive` flag.
    """
    mu, nu = obs.mu, obs.nu
    y1 = (mu / (mu * nu - nu**2)) * (
        obs.q_nu * math.exp(nu)
        - obs.q_mu * math.exp(mu) * nu**2 / mu**2
        - (mu**2 - nu**2) / mu**2 * obs.y0
    )
    if y1 <= 0.0:
        logger.debug("Decoy bound Y1 <= 0 (%.3e): channel too noisy", y1)
        return KeyRateResult(
            rate_per_pulse=0.0,
            rate_cps=0.0,
            y1_lower=0.0,
            e1_upper=0.5,
            q1=0.0,
            q_mu=obs.q_mu,
            e_mu=obs.e_mu,
            flags=("y1_bound_nonpositive",),
        )

    y1 = min(y1, 1.0)
    e1 = (obs.e_nu * obs.q_nu * math.exp(nu) - obs.e0 * obs.y0) / (y1 * nu)
    e1 = float(np.clip(e1, 0.0, 0.5))
    return _assemble_rate(obs, y1, e1, sifting_factor, [])


def decoy_key_rate_asymptotic(
    eta: float,
    fps: FpsSpec,
    y0: float,
    e_d: Optional[float] = None,
    f: float = DEFAULT_EC_EFFICIENCY,
    sifting_factor: float = DEFAULT_SIFTING_FACTOR,
) -> KeyRateResult:
    """Infinite-decoy rate: single-photon yield and error known exactly."""
    obs = decoy_observables(eta, fps, y0, e_d, f)
    y1 = y0 + eta
    e1 = (E0 * y0 + obs.e_d * eta) / y1 if y1 > 0 else E0
    return _assemble_rate(obs, y1, min(e1, 0.5), sifting_factor, [])


def events_sufficient(
    n: int, protocol: str, thresholds: Optional[Dict[str, int]] = None
) -> bool:
    """Whether n events meet the statistics threshold of a protocol."""
    if n < 0:
        raise DomainError(f"event count must be non-negative, got {n}")
    thresholds = thresholds or MIN_EVENTS
    if protocol not in thresholds:
        raise DomainError(f"unknown protocol {protocol!r}, expected one of {list(thresholds)}")
    return n >= thresholds[protocol]
