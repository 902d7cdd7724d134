"""Alarm conditions evaluated against the monitor state on every sample.

Five alarm kinds: high/low pressure compare the raw sample against fixed
limits and trigger immediately; high/low respiratory rate compare the
smoothed rate once it exists; the noncycling alarm fires when any of four
sub-conditions indicates the ventilator has stopped alternating (too long
since an attack on either envelope, or the two envelopes too close together
by ratio or by difference).

Conditions are pure predicates over a state snapshot. Raised/Cleared events
are produced separately by edge detection, so integrators that want latching
behaviour can layer it on top.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

from .errors import ConfigError
from .monitor import MonitorState


class AlarmKind(enum.Enum):
    HIGH_PRESSURE = "high_pressure"
    LOW_PRESSURE = "low_pressure"
    HIGH_RR = "high_rr"
    LOW_RR = "low_rr"
    NONCYCLING = "noncycling"


class NoncyclingCause(enum.Enum):
    TIME_SINCE_HIGH_ATTACK = "time_since_high_attack"
    TIME_SINCE_LOW_ATTACK = "time_since_low_attack"
    ENVELOPE_RATIO = "envelope_ratio"
    ENVELOPE_DIFFERENCE = "envelope_difference"


class AlarmEdge(enum.Enum):
    RAISED = "raised"
    CLEARED = "cleared"


# Active-alarm snapshot: kind -> sub-conditions (empty for the simple kinds).
ActiveAlarms = Mapping[AlarmKind, frozenset[NoncyclingCause]]


@dataclass(frozen=True)
class AlarmConfig:
    """User-tunable alarm thresholds.

    Pressure limits are in cm H2O, rates in breaths/min, ``t_max`` in
    seconds. Construction outside the tunable ranges is rejected.
    ``enabled`` gates event emission only, like a mute button: conditions are
    still evaluated while muted.
    """

    p_max: float = 60.0
    p_min: float = 5.0
    rr_max: float = 35.0
    rr_min: float = 6.0
    t_max: float = 15.0
    r_min: float = 1.5
    d_min: float = 3.0
    enabled: bool = True

    def __post_init__(self) -> None:
        checks = (
            (30.0 <= self.p_max <= 90.0, f"p_max must lie in [30, 90], got {self.p_max}"),
            (1.0 <= self.p_min <= 20.0, f"p_min must lie in [1, 20], got {self.p_min}"),
            (15.0 <= self.rr_max <= 60.0, f"rr_max must lie in [15, 60], got {self.rr_max}"),
            (5.0 <= self.rr_min <= 15.0, f"rr_min must lie in [5, 15], got {self.rr_min}"),
            (5.0 <= self.t_max <= 30.0, f"t_max must lie in [5, 30] seconds, got {self.t_max}"),
            (self.r_min > 1.0, f"r_min must exceed 1, got {self.r_min}"),
            (self.d_min > 0.0, f"d_min must be positive, got {self.d_min}"),
            (self.p_min < self.p_max, "p_min must be below p_max"),
            (self.rr_min < self.rr_max, "rr_min must be below rr_max"),
        )
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def t_max_samples(self, sample_rate: float) -> int:
        """Alarm time converted to samples (rounded to nearest)."""
        return round(self.t_max * sample_rate)

    def validate_for_ventilator(self, r_nom: float) -> None:
        """Cross-check the ratio threshold against a paired ventilator."""
        if not self.r_min < r_nom:
            raise ConfigError(
                f"r_min must lie below the ventilator's nominal ratio, got "
                f"r_min={self.r_min} r_nom={r_nom}"
            )


@dataclass(frozen=True)
class AlarmEvent:
    """One Raised or Cleared transition of an alarm kind."""

    kind: AlarmKind
    edge: AlarmEdge
    sample_index: int
    detail: tuple[NoncyclingCause, ...] = ()


def check_alarms(
    state: MonitorState,
    p: float,
    config: AlarmConfig,
    sample_index: int,
) -> dict[AlarmKind, frozenset[NoncyclingCause]]:
    """Evaluate all alarm conditions after the monitor processed ``p``.

    Returns the set of active kinds, with the sub-conditions that hold for
    the noncycling kind. Rate alarms are suppressed until the monitor has
    seen a full breath cycle. The envelope ratio and difference
    sub-conditions are evaluated only once ``t_max`` worth of samples has
    streamed: both envelopes start on the very first sample, so comparing
    them any earlier would alarm on a monitor that was merely just switched
    on. The time-based sub-conditions need no such gate (their counters
    embody the same delay), and the pressure alarms are memoryless.
    """
    active: dict[AlarmKind, frozenset[NoncyclingCause]] = {}

    if p > config.p_max:
        active[AlarmKind.HIGH_PRESSURE] = frozenset()
    if p < config.p_min:
        active[AlarmKind.LOW_PRESSURE] = frozenset()

    if state.metrics_valid:
        rr = state.rr
        if rr > config.rr_max:
            active[AlarmKind.HIGH_RR] = frozenset()
        if rr < config.rr_min:
            active[AlarmKind.LOW_RR] = frozenset()

    t_max_samples = config.t_max_samples(state.sample_rate)
    causes = set()
    if state.high.samples_since_attack > t_max_samples:
        causes.add(NoncyclingCause.TIME_SINCE_HIGH_ATTACK)
    if state.low.samples_since_attack > t_max_samples:
        causes.add(NoncyclingCause.TIME_SINCE_LOW_ATTACK)
    if sample_index >= t_max_samples:
        # Ratio is skipped for non-positive low envelopes: gauge sensors can
        # legitimately read about zero and division must not mask the rest.
        if state.low.value > 0.0 and state.high.value / state.low.value < config.r_min:
            causes.add(NoncyclingCause.ENVELOPE_RATIO)
        if state.high.value - state.low.value < config.d_min:
            causes.add(NoncyclingCause.ENVELOPE_DIFFERENCE)
    if causes:
        active[AlarmKind.NONCYCLING] = frozenset(causes)

    return active


def alarm_edge_detector(
    previous_active: ActiveAlarms,
    current_active: ActiveAlarms,
    sample_index: int,
) -> list[AlarmEvent]:
    """Emit Raised for newly active kinds and Cleared for newly inactive ones.

    Events are ordered by kind so output is deterministic.
    """
    events = []
    for kind in AlarmKind:
        now = kind in current_active
        before = kind in previous_active
        if now and not before:
            detail = tuple(sorted(current_active[kind], key=lambda c: c.value))
            events.append(AlarmEvent(kind, AlarmEdge.RAISED, sample_index, detail))
        elif before and not now:
            events.append(AlarmEvent(kind, AlarmEdge.CLEARED, sample_index))
    return events


class AlarmAnnunciator:
    """Stateful wrapper: feed active sets, collect the ordered event log.

    Honours ``AlarmConfig.enabled``: while muted, no events are emitted (the
    previous-active snapshot still tracks, so unmuting does not replay old
    transitions as fresh raises).
    """

    def __init__(self, config: AlarmConfig) -> None:
        self._config = config
        self._previous: dict[AlarmKind, frozenset[NoncyclingCause]] = {}
        self.events: list[AlarmEvent] = []

    def update(self, active: ActiveAlarms, sample_index: int) -> list[AlarmEvent]:
        new_events = alarm_edge_detector(self._previous, active, sample_index)
        self._previous = dict(active)
        if not self._config.enabled:
            return []
        self.events.extend(new_events)
        return new_events


def write_alarm_csv(events: Iterable[AlarmEvent], sample_rate: float, out: IO[str]) -> None:
    """Serialize an event log, one row per event."""
    writer = csv.writer(out)
    writer.writerow(["sample_index", "time_sec", "kind", "edge", "detail"])
    for event in events:
        writer.writerow(
            [
                event.sample_index,
                f"{event.sample_index / sample_rate:.9g}",
                event.kind.value,
                event.edge.value,
                "+".join(cause.value for cause in event.detail),
            ]
        )
