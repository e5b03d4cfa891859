"""Ambiguity-aware margin generation and decision-boundary predicates.

A margin shifts the contrastive decision boundary per point: positive
margins tighten the objective for confident points, negative margins relax
it where the neighborhood is too mixed to separate cleanly.
"""

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

# |m| beyond the cosine-difference range makes one side of the boundary vacuous
_MARGIN_WARN_LIMIT = 2.0

ZERO_BAND = 1e-12


@dataclass
class MarginSpec:
    """Affine map from ambiguity to margin: m = mu * a + nu."""

    mu: float
    nu: float
    clamp_at_zero: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.nu)):
            raise DataError("margin parameters must be finite")


class MarginRegime(enum.Enum):
    POSITIVE = "positive"
    ZERO = "zero"
    NEGATIVE = "negative"


_PRESETS = {
    "s3dis": MarginSpec(mu=-1.0, nu=0.5),
    "scannet": MarginSpec(mu=-1.0, nu=0.6),
    "const0": MarginSpec(mu=0.0, nu=0.0),
    "const05": MarginSpec(mu=0.0, nu=0.5),
    "pos_a": MarginSpec(mu=1.0, nu=0.0),
    "one_minus_a": MarginSpec(mu=-1.0, nu=1.0),
    "clamped": MarginSpec(mu=-1.0, nu=0.5, clamp_at_zero=True),
}

# ablation sweep order: constants first, then the adaptive variants
ABLATION_PRESETS = ("const0", "const05", "pos_a", "one_minus_a", "s3dis", "clamped")


def preset(name: str) -> MarginSpec:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown margin preset {name!r}, expected one of {sorted(_PRESETS)}"
        ) from None


def margin(a: float, spec: MarginSpec) -> float:
    """Margin for one ambiguity value in [0, 1]."""
    if not 0.0 <= a <= 1.0:
        raise DataError(f"ambiguity {a} outside [0, 1]")
    m = spec.mu * a + spec.nu
    if spec.clamp_at_zero:
        m = max(0.0, m)
    if abs(m) > _MARGIN_WARN_LIMIT:
        warnings.warn(f"margin {m} exceeds the cosine similarity difference range")
    return m


def margins_from_ambiguity(values, spec: MarginSpec):
    """Vectorized margin(), same arithmetic element for element."""
    values = np.asarray(values, dtype=np.float64)
    m = spec.mu * values + spec.nu
    if spec.clamp_at_zero:
        m = np.maximum(0.0, m)
    if m.size and np.abs(m).max() > _MARGIN_WARN_LIMIT:
        warnings.warn("some margins exceed the cosine similarity difference range")
    return m


def regime(m: float) -> MarginRegime:
    """Sign classification with a 1e-12 zero band."""
    if not np.isfinite(m):
        raise DataError("margin must be finite")
    if abs(m) < ZERO_BAND:
        return MarginRegime.ZERO
    return MarginRegime.POSITIVE if m > 0 else MarginRegime.NEGATIVE


def boundary_satisfied(sim_intra: float, sim_inter: float, m: float) -> str:
    """Which side of the shifted decision boundary a similarity pair falls on.

    "intra_side" iff sim_intra - sim_inter >= m, else "inter_side".
    """
    return "intra_side" if sim_intra - sim_inter >= m else "inter_side"
