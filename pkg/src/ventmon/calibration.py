"""Closed-form selection of the envelope release coefficient.

During normal cycling the two envelopes drift toward each other between
breaths, so the release coefficient and the ratio alarm threshold must be
chosen jointly. The rule implemented here picks the release coefficient so
that, after a sudden fall from PIP to a constant PEEP, the high envelope
crosses ``r_min * PEEP`` exactly when the time-since-attack condition reaches
its alarm time: both noncycling sub-conditions then fire together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class CalibrationInput:
    """Inputs of the release-coefficient rule.

    ``r_min`` is the envelope-ratio alarm threshold, ``r_nom`` the nominal
    PIP-to-PEEP ratio fixed by the ventilator's mechanical design, and
    ``t_max_samples`` the alarm time expressed in samples (convert from
    seconds at the configuration boundary so the rule stays rate-agnostic).
    """

    r_min: float
    r_nom: float
    t_max_samples: int

    def __post_init__(self) -> None:
        if not 1.0 < self.r_min < self.r_nom:
            raise ConfigError(
                f"ratio threshold must satisfy 1 < r_min < r_nom, got "
                f"r_min={self.r_min} r_nom={self.r_nom}"
            )
        if self.t_max_samples < 1:
            raise ConfigError(f"alarm time must be at least 1 sample, got {self.t_max_samples}")


def release_coefficient(cal: CalibrationInput) -> float:
    """Per-sample release coefficient from the joint alarm design.

    Returns ``((r_min - 1) / (r_nom - 1)) ** (1 / t_max_samples)``, always in
    (0, 1). As ``r_min`` approaches ``r_nom`` the coefficient approaches 1
    (no decay); ``r_min <= 1`` would degenerate to 0 and is rejected by
    :class:`CalibrationInput`.
    """
    base = (cal.r_min - 1.0) / (cal.r_nom - 1.0)
    return base ** (1.0 / cal.t_max_samples)


def decay_prediction(pip: float, peep: float, alpha_r: float, t: float) -> float:
    """Predicted high-envelope value ``t`` samples into a constant-PEEP hold.

    The envelope relaxes exponentially from ``pip`` toward ``peep``:
    ``peep + alpha_r**t * (pip - peep)``.
    """
    if not pip >= peep:
        raise ConfigError(f"pip must be >= peep, got pip={pip} peep={peep}")
    if not 0.0 < alpha_r < 1.0:
        raise ConfigError(f"release coefficient must lie in (0, 1), got {alpha_r}")
    if t < 0:
        raise ConfigError(f"elapsed samples must be non-negative, got {t}")
    return peep + alpha_r**t * (pip - peep)


def trigger_time(pip: float, peep: float, alpha_r: float, r_min: float) -> float:
    """Elapsed samples until the decaying high envelope crosses ``r_min * peep``.

    Solves the decay equation for time; returns 0 when the ratio is already
    at or below the threshold. ``alpha_r`` must lie strictly inside (0, 1):
    with no decay the crossing never happens.
    """
    if not peep > 0.0:
        raise ConfigError(f"peep must be positive, got {peep}")
    if not 0.0 < alpha_r < 1.0:
        raise ConfigError(f"release coefficient must lie in (0, 1), got {alpha_r}")
    if not r_min > 1.0:
        raise ConfigError(f"ratio threshold must exceed 1, got {r_min}")
    ratio = pip / peep
    if r_min >= ratio:
        return 0.0
    return math.log((r_min - 1.0) / (ratio - 1.0)) / math.log(alpha_r)
