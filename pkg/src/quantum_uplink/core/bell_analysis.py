"""
Bell Analysis
=============

Correlation coefficients and the CHSH parameter from matched coincidences.

S = E(a, b) - E(a, b') + E(a', b) + E(a', b'), the combination that reaches
2 sqrt(2) for phi_plus at a = 0, a' = 45, b = 22.5, b' = 67.5 degrees.
sigma_E uses the binomial form sqrt((1 - E^2) / N); exact multinomial
propagation differs at O(1/N).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..exceptions import DomainError, InsufficientCountsError
from ..models.source_models import BellState, outcome_probabilities
from ..utils.logger import get_logger

logger = get_logger(__name__)

SettingPair = Tuple[float, float]
# (ground angle, space angle) -> [N++, N+-, N-+, N--]
SettingCounts = Dict[SettingPair, np.ndarray]

DEFAULT_GROUND_ANGLES = (0.0, 45.0)
DEFAULT_SPACE_ANGLES = (22.5, 67.5)
CHSH_LABELS = ("ab", "ab'", "a'b", "a'b'")
CANONICAL_SIGNS = (1, -1, 1, 1)
CLASSICAL_BOUND = 2.0
TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)


def correlation_E(counts: Sequence[float]) -> Tuple[float, float]:
    """
    Correlation coefficient of one setting pair.

    Args:
        counts: N++, N+-, N-+, N--

    Returns:
        (E, sigma_E)

    Raises:
        InsufficientCountsError: no counts at all
    """
    n_pp, n_pm, n_mp, n_mm = (float(c) for c in counts)
    if min(n_pp, n_pm, n_mp, n_mm) < 0:
        raise DomainError("counts must be non-negative")
    total = n_pp + n_pm + n_mp + n_mm
    if total == 0:
        raise InsufficientCountsError("correlation needs at least one coincidence")
    e = (n_pp + n_mm - n_pm - n_mp) / total
    return e, math.sqrt(max(0.0, 1.0 - e * e) / total)


@dataclass(frozen=True)
class ChshResult:
    correlations: Dict[str, Tuple[float, float]]
    S: float
    sigma_S: float
    n_total: float
    signs: Tuple[int, int, int, int] = CANONICAL_SIGNS
    settings: Dict[str, SettingPair] = field(default_factory=dict)

    @property
    def n_sigma(self) -> float:
        if self.sigma_S == 0:
            return math.inf if self.S > CLASSICAL_BOUND else 0.0
        return (self.S - CLASSICAL_BOUND) / self.sigma_S

    @property
    def violates(self) -> bool:
        return self.S > CLASSICAL_BOUND

    def csv_row(self) -> dict:
        row = {"S": self.S, "sigma_S": self.sigma_S, "n_sigma": self.n_sigma, "N": self.n_total}
        row.update({f"E_{label}": self.correlations[label][0] for label in CHSH_LABELS})
        return row

    def as_dict(self) -> dict:
        return {
            "S": self.S,
            "sigma_S": self.sigma_S,
            "n_sigma": self.n_sigma,
            "N": self.n_total,
            "signs": list(self.signs),
            "E": {label: {"value": e, "sigma": s} for label, (e, s) in self.correlations.items()},
            "settings": {label: list(pair) for label, pair in self.settings.items()},
        }

    def to_text(self) -> str:
        lines = [
            f"CHSH S = {self.S:.4f} +/- {self.sigma_S:.4f} "
            f"({self.n_sigma:+.2f} sigma from {CLASSICAL_BOUND:g}), N = {self.n_total:g}",
        ]
        for label in CHSH_LABELS:
            e, s = self.correlations[label]
            a, b = self.settings.get(label, (math.nan, math.nan))
            lines.append(f"  E({label:>4}) [{a:5.1f}, {b:5.1f}] = {e:+.4f} +/- {s:.4f}")
        return "\n".join(lines)


def _chsh_pairs(
    ground_angles: Sequence[float], space_angles: Sequence[float]
) -> Dict[str, SettingPair]:
    (a, a2), (b, b2) = ground_angles, space_angles
    return {"ab": (a, b), "ab'": (a, b2), "a'b": (a2, b), "a'b'": (a2, b2)}


def chsh_S(
    counts: SettingCounts,
    ground_angles: Sequence[float] = DEFAULT_GROUND_ANGLES,
    space_angles: Sequence[float] = DEFAULT_SPACE_ANGLES,
    maximize_combination: bool = False,
) -> ChshResult:
    """
    CHSH parameter of the four setting pairs (a, a') x (b, b').

    With maximize_combination the sign pattern (one minus sign, overall sign
    free) giving the largest |S| is reported instead of the canonical one.

    Raises:
        InsufficientCountsError: a setting pair has no counts; lists the pairs
    """
    pairs = _chsh_pairs(ground_angles, space_angles)
    missing = [
        pair
        for pair in pairs.values()
        if pair not in counts or float(np.sum(counts[pair])) == 0.0
    ]
    if missing:
        raise InsufficientCountsError("CHSH needs all four setting pairs", missing)

    correlations = {label: correlation_E(counts[pair]) for label, pair in pairs.items()}
    values = np.array([correlations[label][0] for label in CHSH_LABELS])
    sigma = math.sqrt(sum(correlations[label][1] ** 2 for label in CHSH_LABELS))

    signs = CANONICAL_SIGNS
    if maximize_combination:
        candidates = []
        for minus in range(4):
            pattern = tuple(-1 if i == minus else 1 for i in range(4))
            candidates.append(pattern)
            candidates.append(tuple(-s for s in pattern))
        signs = max(candidates, key=lambda p: float(np.dot(p, values)))
    s_value = float(np.dot(signs, values))

    n_total = float(sum(np.sum(counts[pair]) for pair in pairs.values()))
    result = ChshResult(
        correlations=correlations,
        S=s_value,
        sigma_S=sigma,
        n_total=n_total,
        signs=tuple(int(s) for s in signs),
        settings=pairs,
    )
    logger.debug("CHSH S = %.4f +/- %.4f from %d counts", result.S, result.sigma_S, n_total)
    return result


def chsh_sigma(n_total: float, visibility: float) -> float:
    """sigma_S for n_total counts spread evenly over the canonical settings."""
    if n_total <= 0:
        raise DomainError("need a positive number of coincidences")
    return 4.0 * math.sqrt((1.0 - visibility**2 / 2.0) / n_total)


def required_coincidences(target_sigma: float, visibility: float) -> int:
    """
    Smallest N for which (2 sqrt(2) V - 2) / sigma_S(N, V) reaches target_sigma.

    Raises:
        DomainError: V <= 1/sqrt(2) (no violation possible) or V > 1
    """
    if target_sigma <= 0:
        raise DomainError(f"target significance must be positive, got {target_sigma}")
    if not 1.0 / math.sqrt(2.0) < visibility <= 1.0:
        raise DomainError(f"visibility {visibility} cannot violate the CHSH inequality")
    excess = TSIRELSON_BOUND * visibility - CLASSICAL_BOUND
    n = 16.0 * (1.0 - visibility**2 / 2.0) * target_sigma**2 / excess**2
    return max(1, int(math.ceil(n - 1e-9)))


def setting_counts_from_arrays(
    ground_angle: np.ndarray,
    space_angle: np.ndarray,
    ground_outcome: np.ndarray,
    space_outcome: np.ndarray,
) -> SettingCounts:
    """Tabulate outcomes (0 = '+') per (ground angle, space angle) pair."""
    ground_angle = np.asarray(ground_angle, dtype=float)
    if len(ground_angle) == 0:
        return {}
    keys, inverse = np.unique(
        np.stack([ground_angle, np.asarray(space_angle, dtype=float)], axis=1),
        axis=0,
        return_inverse=True,
    )
    outcome = 2 * np.asarray(ground_outcome, dtype=np.int64) + np.asarray(space_outcome, dtype=np.int64)
    table = np.zeros((len(keys), 4), dtype=np.int64)
    np.add.at(table, (inverse.reshape(-1), outcome), 1)
    return {(float(a), float(b)): table[i] for i, (a, b) in enumerate(keys)}


def setting_counts_from_pairs(coincidences, settings, seed: int = 0) -> SettingCounts:
    """
    SettingCounts of a CoincidenceSet under a MeasurementSettings schedule.

    The active space angle set is looked up at the ground timestamp of each pair.
    """
    g_channel = np.asarray(coincidences.ground_channel)
    s_channel = np.asarray(coincidences.space_channel)
    set_index = settings.space_set_index(coincidences.ground_time_ps, seed)
    return setting_counts_from_arrays(
        settings.ground_angle(g_channel >> 1),
        settings.space_angle(set_index, s_channel >> 1),
        g_channel & 1,
        s_channel & 1,
    )


def _outcome_distribution(a: float, b: float, visibility: float, state: BellState) -> np.ndarray:
    p_same = float(outcome_probabilities(a, b, visibility, state))
    return np.array([p_same, 1.0 - p_same, 1.0 - p_same, p_same]) / 2.0


def expected_counts(
    visibility: float,
    n_total: float,
    ground_angles: Sequence[float] = DEFAULT_GROUND_ANGLES,
    space_angles: Sequence[float] = DEFAULT_SPACE_ANGLES,
    state: BellState = "phi_plus",
) -> SettingCounts:
    """Analytic (non-integer) counts with n_total spread evenly over the four pairs."""
    return {
        pair: n_total / 4.0 * _outcome_distribution(*pair, visibility, state)
        for pair in _chsh_pairs(ground_angles, space_angles).values()
    }


def sample_counts(
    visibility: float,
    n_total: int,
    rng: np.random.Generator,
    ground_angles: Sequence[float] = DEFAULT_GROUND_ANGLES,
    space_angles: Sequence[float] = DEFAULT_SPACE_ANGLES,
    state: BellState = "phi_plus",
) -> SettingCounts:
    """Multinomial counts from the same outcome model, settings chosen uniformly."""
    pairs = list(_chsh_pairs(ground_angles, space_angles).values())
    allocation = rng.multinomial(int(n_total), [0.25] * 4)
    return {
        pair: rng.multinomial(int(n), _outcome_distribution(*pair, visibility, state))
        for pair, n in zip(pairs, allocation)
    }


def relabel_space_outcomes(counts: SettingCounts) -> SettingCounts:
    """Swap '+' and '-' on the space side: [N++, N+-, N-+, N--] -> [N+-, N++, N--, N-+]."""
    return {pair: np.asarray(c)[[1, 0, 3, 2]] for pair, c in counts.items()}


def counts_frame(counts: SettingCounts) -> pd.DataFrame:
    rows: List[dict] = []
    for (a, b), c in sorted(counts.items()):
        n_pp, n_pm, n_mp, n_mm = (float(x) for x in c)
        rows.append(
            {"ground_deg": a, "space_deg": b, "N++": n_pp, "N+-": n_pm, "N-+": n_mp, "N--": n_mm}
        )
    return pd.DataFrame(rows, columns=["ground_deg", "space_deg", "N++", "N+-", "N-+", "N--"])


def write_chsh_csv(path, results: Iterable[ChshResult]) -> None:
    """One row `S,sigma_S,n_sigma,N,E_ab,E_ab',E_a'b,E_a'b'` per result."""
    pd.DataFrame([r.csv_row() for r in results]).to_csv(path, index=False)


def chsh_from_pairs(
    coincidences,
    settings,
    seed: int = 0,
    space_set: int = 0,
    maximize_combination: bool = False,
) -> Tuple[ChshResult, SettingCounts]:
    """CHSH on matched pairs using the ground angles and one space angle set."""
    counts = setting_counts_from_pairs(coincidences, settings, seed)
    result = chsh_S(
        counts,
        settings.ground_angles_deg,
        settings.space_angle_sets_deg[space_set],
        maximize_combination,
    )
    return result, counts


def key_pairs_mask(coincidences, settings, seed: int = 0) -> Optional[np.ndarray]:
    """
    Pairs measured at identical ground and space angles (usable as raw key), or
    None when no space angle set matches the ground angles.
    """
    ground = [float(a) for a in settings.ground_angles_deg]
    matching = [i for i, s in enumerate(settings.space_angle_sets_deg) if [float(a) for a in s] == ground]
    if not matching:
        return None
    set_index = settings.space_set_index(coincidences.ground_time_ps, seed)
    return np.isin(set_index, matching)
