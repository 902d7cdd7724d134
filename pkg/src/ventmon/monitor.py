"""Streaming breath monitor for pressure-cycled ventilators.

A pair of nonlinear recursive envelope trackers follows the top and bottom
of the airway-pressure signal. The high envelope rises fast (attack) and
falls slowly (release); the low envelope mirrors that. Alternating attack
events on the two envelopes drive an inhale/exhale state machine from which
peak inspiratory pressure (PIP), end-expiratory pressure (PEEP), and
respiratory rate (RR) are estimated, one update per breath cycle.

Everything here is O(1) per sample with constant state: no past samples are
stored, which is what makes the same algorithm fit on small microcontrollers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import ConfigError


class EnvelopeDirection(enum.Enum):
    """Which extreme of the signal an envelope tracker follows."""

    HIGH = "high"
    LOW = "low"


class BreathPhase(enum.Enum):
    """Inferred ventilator phase; toggled by opposite-envelope attacks."""

    INHALING = "inhaling"
    EXHALING = "exhaling"


def coefficient_for_rate(alpha_ref: float, f_ref: float, f_s: float) -> float:
    """Rescale a one-pole coefficient so decay per second is rate-invariant.

    ``alpha_ref`` is the coefficient quoted at ``f_ref`` samples/sec; the
    returned value is ``alpha_ref ** (f_ref / f_s)``, which preserves
    ``alpha_ref ** f_ref`` (the per-second retention factor) at the new rate.
    The degenerate coefficients 0 and 1 are fixed points of the rule and are
    returned unchanged.
    """
    if not (f_ref > 0.0 and f_s > 0.0):
        raise ConfigError(f"sample rates must be positive, got {f_ref} and {f_s}")
    if alpha_ref == 0.0 or alpha_ref == 1.0:
        return alpha_ref
    if not 0.0 < alpha_ref < 1.0:
        raise ConfigError(f"coefficient must lie in [0, 1], got {alpha_ref}")
    return alpha_ref ** (f_ref / f_s)


@dataclass
class EnvelopeTracker:
    """One nonlinear recursive envelope follower.

    ``value`` moves toward each new sample by ``1 - alpha`` of the gap; the
    attack coefficient applies when the sample pushes the envelope toward its
    tracked extreme (including ties), the release coefficient otherwise.
    The tracker also remembers the raw sample of its most recent attack and
    how many samples have elapsed since then, which the monitor uses for
    breath metrics and the noncycling alarm.
    """

    value: float
    direction: EnvelopeDirection
    alpha_attack: float
    alpha_release: float
    last_attack_value: float = field(default=math.nan)
    samples_since_attack: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha_attack <= self.alpha_release <= 1.0:
            raise ConfigError(
                "envelope coefficients must satisfy "
                f"0 <= attack <= release <= 1, got attack={self.alpha_attack} "
                f"release={self.alpha_release}"
            )
        if not math.isfinite(self.value):
            raise ConfigError(f"initial envelope value must be finite, got {self.value}")
        if math.isnan(self.last_attack_value):
            self.last_attack_value = self.value

    def step(self, p: float) -> bool:
        """Advance one sample; return True if the attack branch was taken.

        A tie (``p`` equal to the current value) counts as an attack. The
        update is written as ``value += (1 - alpha) * (p - value)`` so that a
        sample equal to the envelope leaves it bit-exactly unchanged.
        """
        if not math.isfinite(p):
            raise ConfigError(f"non-finite pressure sample: {p}")
        if self.direction is EnvelopeDirection.HIGH:
            attacked = p >= self.value
        else:
            attacked = p <= self.value
        if attacked:
            self.value += (1.0 - self.alpha_attack) * (p - self.value)
            self.last_attack_value = p
            self.samples_since_attack = 0
        else:
            self.value += (1.0 - self.alpha_release) * (p - self.value)
            self.samples_since_attack += 1
        return attacked

    def release_only(self, p: float) -> None:
        """Take the release branch unconditionally (used for collapsed ties)."""
        self.value += (1.0 - self.alpha_release) * (p - self.value)
        self.samples_since_attack += 1


@dataclass(frozen=True)
class MonitorConfig:
    """Resolved per-stream coefficients at a concrete sample rate."""

    sample_rate: float
    alpha_attack: float
    alpha_release: float
    alpha_smooth: float = 0.5

    def __post_init__(self) -> None:
        if not self.sample_rate > 0.0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")
        if not 0.0 <= self.alpha_attack <= self.alpha_release <= 1.0:
            raise ConfigError(
                "coefficients must satisfy 0 <= attack <= release <= 1, got "
                f"attack={self.alpha_attack} release={self.alpha_release}"
            )
        if not 0.0 <= self.alpha_smooth <= 1.0:
            raise ConfigError(f"smoothing coefficient must lie in [0, 1], got {self.alpha_smooth}")

    @classmethod
    def from_reference(
        cls,
        sample_rate: float,
        *,
        alpha_attack: float = 0.9,
        reference_rate: float = 100.0,
        r_min: float = 1.5,
        r_nom: float = 2.4,
        t_max: float = 15.0,
        alpha_smooth: float = 0.5,
    ) -> "MonitorConfig":
        """Build a config from rate-independent inputs.

        The attack coefficient is quoted at ``reference_rate`` and rescaled;
        the release coefficient is derived from the noncycling alarm design
        (ratio threshold, nominal PIP-to-PEEP ratio, alarm time) so that the
        envelope-ratio and time-since-attack conditions trigger together.
        """
        from .calibration import CalibrationInput, release_coefficient

        t_max_samples = max(1, round(t_max * sample_rate))
        alpha_release = release_coefficient(CalibrationInput(r_min, r_nom, t_max_samples))
        return cls(
            sample_rate=sample_rate,
            alpha_attack=coefficient_for_rate(alpha_attack, reference_rate, sample_rate),
            alpha_release=alpha_release,
            alpha_smooth=alpha_smooth,
        )


@dataclass(frozen=True)
class StepOutput:
    """Branch outcomes of one monitor step, for callers that log or test."""

    high_attacked: bool = False
    low_attacked: bool = False
    phase_changed: bool = False
    metrics_updated: bool = False


@dataclass
class MonitorState:
    """Full per-stream state of the breath monitor.

    Drive one instance per pressure stream via :meth:`step`. The state is a
    plain value with no interior sharing, so it may be moved freely between
    threads as long as a single stream feeds it.
    """

    high: EnvelopeTracker
    low: EnvelopeTracker
    sample_rate: float
    alpha_smooth: float
    breath_phase: BreathPhase = BreathPhase.EXHALING
    samples_since_prev_peak: int = 0
    pip: float = math.nan
    peep: float = math.nan
    breath_period_samples: float = math.nan
    peep_seeded: bool = False
    pip_seeded: bool = False
    rr_seeded: bool = False

    @classmethod
    def initial(cls, config: MonitorConfig, first_sample: float) -> "MonitorState":
        """Start a stream: both envelopes sit on the first sample, phase is
        exhaling, and all metrics are unknown until a full breath is seen."""
        if not math.isfinite(first_sample):
            raise ConfigError(f"non-finite pressure sample: {first_sample}")
        return cls(
            high=EnvelopeTracker(
                value=first_sample,
                direction=EnvelopeDirection.HIGH,
                alpha_attack=config.alpha_attack,
                alpha_release=config.alpha_release,
            ),
            low=EnvelopeTracker(
                value=first_sample,
                direction=EnvelopeDirection.LOW,
                alpha_attack=config.alpha_attack,
                alpha_release=config.alpha_release,
            ),
            sample_rate=config.sample_rate,
            alpha_smooth=config.alpha_smooth,
        )

    @property
    def rr(self) -> float:
        """Respiratory rate in breaths/min, from the smoothed breath period."""
        if not self.rr_seeded:
            return math.nan
        return 60.0 * self.sample_rate / self.breath_period_samples

    @property
    def metrics_valid(self) -> bool:
        """True once PIP, PEEP, and RR have all been measured at least once."""
        return self.peep_seeded and self.pip_seeded and self.rr_seeded

    def _smooth(self, current: float, observed: float, seeded: bool) -> float:
        # First observation assigns directly; smoothing against an arbitrary
        # initial value would corrupt the early readings.
        if not seeded:
            return observed
        return current + (1.0 - self.alpha_smooth) * (observed - current)

    def step(self, p: float) -> StepOutput:
        """Process one pressure sample and update metrics on phase switches.

        A sample that ties *both* envelopes (possible only when the envelopes
        have collapsed onto each other) is treated as a release on both sides:
        a fully flat signal carries no cycling evidence, so it must not reset
        the attack timers or toggle the breath phase.
        """
        if not math.isfinite(p):
            raise ConfigError(f"non-finite pressure sample: {p}")

        self.samples_since_prev_peak += 1

        if p >= self.high.value and p <= self.low.value:
            self.high.release_only(p)
            self.low.release_only(p)
            return StepOutput()

        phase_changed = False
        metrics_updated = False

        high_attacked = self.high.step(p)
        if high_attacked and self.breath_phase is BreathPhase.EXHALING:
            self.breath_phase = BreathPhase.INHALING
            phase_changed = True
            self.peep = self._smooth(self.peep, self.low.last_attack_value, self.peep_seeded)
            self.peep_seeded = True
            metrics_updated = True

        low_attacked = self.low.step(p)
        if low_attacked and self.breath_phase is BreathPhase.INHALING:
            self.breath_phase = BreathPhase.EXHALING
            phase_changed = True
            self.pip = self._smooth(self.pip, self.high.last_attack_value, self.pip_seeded)
            if self.pip_seeded:
                # One full peak-to-peak interval exists only from the second
                # switch on; zero-length periods are degenerate and skipped.
                period = self.samples_since_prev_peak - self.high.samples_since_attack
                if period > 0:
                    self.breath_period_samples = self._smooth(
                        self.breath_period_samples, float(period), self.rr_seeded
                    )
                    self.rr_seeded = True
            self.samples_since_prev_peak = self.high.samples_since_attack
            self.pip_seeded = True
            metrics_updated = True

        return StepOutput(
            high_attacked=high_attacked,
            low_attacked=low_attacked,
            phase_changed=phase_changed,
            metrics_updated=metrics_updated,
        )
