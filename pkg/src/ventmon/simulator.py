"""Synthetic pressure waveforms for a pressure-cycled ventilator.

The plant model is deliberately minimal: one first-order relaxation per
phase. During inhalation the airway pressure relaxes toward a high source
pressure until it reaches the PIP setpoint; during exhalation it relaxes
toward atmosphere (gauge zero) until it falls to the PEEP setpoint, at which
point the modulator starts the next breath. That reproduces the familiar
sawtooth-with-round-shoulders pressure shape with the fewest parameters.

Fault windows override the plant: circuit disconnects, obstructions that
freeze or park the pressure at a level, patient-triggered dips below PEEP,
and flat plateaus with bounded fluctuation. Every run is deterministic for a
given scenario, sample rate, and seed, and carries ground-truth annotations
(modulator switches, per-cycle extrema, fault windows) for testing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

# Drive pressure behind the inspiratory valve, relative to the PIP setpoint.
# Has to sit comfortably above PIP or the switching threshold is never met.
SOURCE_PRESSURE_FACTOR = 1.4


@dataclass(frozen=True)
class VentilatorSettings:
    """Front-panel state of the ventilator: PIP dial, timing, noise floor."""

    pip_setpoint: float
    r_nom: float = 2.4
    inspiratory_time_constant: float = 0.5
    expiratory_time_constant: float = 2.5
    atmospheric_noise_std: float = 0.1

    def __post_init__(self) -> None:
        if not self.pip_setpoint > 0.0:
            raise ConfigError(f"pip setpoint must be positive, got {self.pip_setpoint}")
        if not self.r_nom > 1.0:
            raise ConfigError(f"nominal ratio must exceed 1, got {self.r_nom}")
        if not (self.inspiratory_time_constant > 0.0 and self.expiratory_time_constant > 0.0):
            raise ConfigError("time constants must be positive")
        if self.atmospheric_noise_std < 0.0:
            raise ConfigError("noise level must be non-negative")

    @property
    def peep_setpoint(self) -> float:
        return self.pip_setpoint / self.r_nom

    @property
    def source_pressure(self) -> float:
        return SOURCE_PRESSURE_FACTOR * self.pip_setpoint


def settings_for_rate(
    pip_setpoint: float,
    breaths_per_min: float,
    *,
    r_nom: float = 2.4,
    insp_fraction: float = 0.3,
    atmospheric_noise_std: float = 0.1,
) -> VentilatorSettings:
    """Solve the phase time constants for a target breath rate.

    The continuous-time plant crosses its thresholds after
    ``tau_i * ln((S - PEEP) / (S - PIP))`` on the way up and
    ``tau_e * ln(r_nom)`` on the way down, so both constants follow directly
    from the requested period split.
    """
    if not breaths_per_min > 0.0:
        raise ConfigError(f"breath rate must be positive, got {breaths_per_min}")
    if not 0.0 < insp_fraction < 1.0:
        raise ConfigError(f"inspiratory fraction must lie in (0, 1), got {insp_fraction}")
    period = 60.0 / breaths_per_min
    source = SOURCE_PRESSURE_FACTOR * pip_setpoint
    peep = pip_setpoint / r_nom
    rise_log = math.log((source - peep) / (source - pip_setpoint))
    return VentilatorSettings(
        pip_setpoint=pip_setpoint,
        r_nom=r_nom,
        inspiratory_time_constant=insp_fraction * period / rise_log,
        expiratory_time_constant=(1.0 - insp_fraction) * period / math.log(r_nom),
        atmospheric_noise_std=atmospheric_noise_std,
    )


class FaultKind(enum.Enum):
    DISCONNECT = "disconnect"
    OBSTRUCTION = "obstruction"
    SPONTANEOUS_BREATH = "spontaneous_breath"
    NOISY_PLATEAU = "noisy_plateau"


@dataclass(frozen=True)
class FaultEvent:
    """One scripted fault window.

    ``level`` targets the hold pressure for obstructions (default: freeze at
    the value seen at onset) and is required for plateaus. ``amplitude``
    bounds the extra fluctuation riding on a hold. ``depth`` is the floor of
    a spontaneous-breath dip. ``relax_tau`` is the time constant used to
    move from the onset pressure toward the hold level.
    """

    time: float
    kind: FaultKind
    duration: float
    level: float | None = None
    amplitude: float = 0.0
    depth: float | None = None
    relax_tau: float = 0.2

    def __post_init__(self) -> None:
        if self.duration <= 0.0:
            raise ConfigError(f"fault duration must be positive, got {self.duration}")
        if self.kind is FaultKind.NOISY_PLATEAU and self.level is None:
            raise ConfigError("noisy_plateau requires a level")
        if self.kind is FaultKind.SPONTANEOUS_BREATH and self.depth is None:
            raise ConfigError("spontaneous_breath requires a dip depth")
        if self.relax_tau <= 0.0:
            raise ConfigError("relax_tau must be positive")

    @property
    def end(self) -> float:
        return self.time + self.duration


@dataclass(frozen=True)
class Scenario:
    """Declarative simulation script: dial timeline plus fault windows."""

    name: str
    duration: float
    settings_timeline: tuple[tuple[float, VentilatorSettings], ...]
    faults: tuple[FaultEvent, ...] = ()
    description: str = ""

    def __post_init__(self) -> None:
        if self.duration < 0.0:
            raise ConfigError(f"duration must be non-negative, got {self.duration}")
        if not self.settings_timeline:
            raise ConfigError("scenario needs at least one settings entry")
        times = [t for t, _ in self.settings_timeline]
        if times[0] != 0.0:
            raise ConfigError("first settings entry must be at time 0")
        if times != sorted(times):
            raise ConfigError("settings timeline must be sorted by time")
        previous_end = -math.inf
        for fault in sorted(self.faults, key=lambda f: f.time):
            if fault.time < 0.0 or fault.end > self.duration:
                raise ConfigError(
                    f"fault window [{fault.time}, {fault.end}] outside scenario duration"
                )
            if fault.time < previous_end:
                raise ConfigError("fault windows must not overlap")
            previous_end = fault.end


@dataclass(frozen=True)
class CycleTruth:
    """Plant-side ground truth for one completed breath cycle."""

    start_time: float
    end_time: float
    peak_pressure: float
    trough_pressure: float

    @property
    def rate(self) -> float:
        return 60.0 / (self.end_time - self.start_time)


@dataclass
class TraceAnnotations:
    """Ground-truth markers recorded while simulating (times in seconds)."""

    switches: list[tuple[float, str]] = field(default_factory=list)
    fault_windows: list[tuple[float, float, str]] = field(default_factory=list)
    cycles: list[CycleTruth] = field(default_factory=list)


@dataclass(frozen=True)
class PressureTrace:
    """Uniformly sampled pressure series in cm H2O."""

    samples: np.ndarray
    sample_rate: float
    annotations: TraceAnnotations = field(default_factory=TraceAnnotations)

    def __post_init__(self) -> None:
        if self.sample_rate <= 0.0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.size and not np.all(np.isfinite(samples)):
            raise DataError("trace contains non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


_INHALE = "inhale"
_EXHALE = "exhale"


def simulate(scenario: Scenario, sample_rate: float, seed: int = 0) -> PressureTrace:
    """Run the plant model over a scenario at a uniform sample rate.

    The emitted trace is the plant pressure plus seeded Gaussian sensor
    noise; annotations carry every modulator switch, per-cycle plant extrema
    (suspended inside fault windows), and the fault windows themselves.
    """
    if sample_rate < 1.0:
        raise ConfigError(f"sample rate must be at least 1, got {sample_rate}")
    n = round(scenario.duration * sample_rate)
    annotations = TraceAnnotations(
        fault_windows=[(f.time, f.end, f.kind.value) for f in scenario.faults]
    )
    if n == 0:
        return PressureTrace(np.empty(0), sample_rate, annotations)

    rng = np.random.default_rng(seed)
    sensor_noise = rng.normal(0.0, 1.0, n)
    bounded_noise = rng.uniform(-1.0, 1.0, n)

    dt = 1.0 / sample_rate
    timeline = list(scenario.settings_timeline)
    faults = sorted(scenario.faults, key=lambda f: f.time)
    samples = np.empty(n)

    settings = timeline[0][1]
    next_setting = 1
    fault_idx = 0
    active_fault: FaultEvent | None = None
    fault_state: dict[str, float] = {}

    phase = _INHALE
    p = settings.peep_setpoint
    cycle_start: float | None = 0.0
    cycle_max = p
    cycle_min = p

    def relax(current: float, target: float, tau: float) -> float:
        return current + (1.0 - math.exp(-dt / tau)) * (target - current)

    for k in range(n):
        t = k * dt
        while next_setting < len(timeline) and timeline[next_setting][0] <= t:
            settings = timeline[next_setting][1]
            next_setting += 1

        if active_fault is not None and t >= active_fault.end:
            if active_fault.kind is FaultKind.SPONTANEOUS_BREATH:
                # Patient effort triggers the next machine breath.
                phase = _INHALE
                annotations.switches.append((t, _INHALE))
            active_fault = None
            fault_state = {}
        if active_fault is None and fault_idx < len(faults) and t >= faults[fault_idx].time:
            active_fault = faults[fault_idx]
            fault_idx += 1
            fault_state = {"onset_pressure": p, "onset_time": t}
            cycle_start = None  # truth for the interrupted cycle is discarded

        emitted = p
        if active_fault is None:
            if phase == _INHALE:
                p = relax(p, settings.source_pressure, settings.inspiratory_time_constant)
                if p >= settings.pip_setpoint:
                    phase = _EXHALE
                    annotations.switches.append((t, _EXHALE))
            else:
                p = relax(p, 0.0, settings.expiratory_time_constant)
                if p <= settings.peep_setpoint:
                    phase = _INHALE
                    annotations.switches.append((t, _INHALE))
                    if cycle_start is not None:
                        annotations.cycles.append(
                            CycleTruth(cycle_start, t, cycle_max, cycle_min)
                        )
                    cycle_start = t
                    cycle_max = p
                    cycle_min = p
            emitted = p
        elif active_fault.kind is FaultKind.DISCONNECT:
            p = relax(p, 0.0, active_fault.relax_tau)
            emitted = p
        elif active_fault.kind is FaultKind.NOISY_PLATEAU:
            p = relax(p, active_fault.level, active_fault.relax_tau)
            emitted = p + active_fault.amplitude * bounded_noise[k]
        elif active_fault.kind is FaultKind.OBSTRUCTION:
            hold = active_fault.level
            if hold is None:
                hold = fault_state["onset_pressure"]
            p = relax(p, hold, active_fault.relax_tau)
            emitted = p + active_fault.amplitude * bounded_noise[k]
        else:  # SPONTANEOUS_BREATH: parametric dip from onset pressure
            u = (t - fault_state["onset_time"]) / active_fault.duration
            base = fault_state["onset_pressure"]
            depth = active_fault.depth
            p = depth + (base - depth) * math.cos(math.pi * u) ** 2
            emitted = p

        cycle_max = max(cycle_max, p)
        cycle_min = min(cycle_min, p)
        samples[k] = emitted + settings.atmospheric_noise_std * sensor_noise[k]

    return PressureTrace(samples, sample_rate, annotations)


def golden_scenarios() -> dict[str, Scenario]:
    """Named scenarios reproducing the canonical field events.

    Each is designed so the expected alarm sequence is unambiguous:

    - ``steady-cycling``: fault-free 20 breaths/min; no alarms expected.
    - ``spontaneous-breath``: a brief patient-triggered dip below the
      low-pressure limit; low-pressure raises and clears, nothing else.
    - ``rollover-disconnect``: the circuit breaks but pressure parks at a
      steady low level above the low-pressure limit; only noncycling fires,
      roughly one alarm time after cycling stops.
    - ``deliberate-blockage``: a momentary drop below the low-pressure limit
      followed by a long hold at high pressure; low pressure first, then
      noncycling during the hold.
    - ``sudden-pip-drop``: the PIP dial is cut in half mid-run; the high
      envelope misses several peaks, which transiently trips the
      time-since-attack condition before the tracker re-locks.
    - ``noisy-plateau``: cycling ends in a flat level with small bounded
      fluctuation; the fluctuation keeps resetting the attack timers, so the
      envelope ratio/difference conditions must catch it.
    """
    cycling = settings_for_rate(36.0, 20.0)
    scenarios = [
        Scenario(
            name="steady-cycling",
            duration=60.0,
            settings_timeline=((0.0, cycling),),
            description="Fault-free mandatory breathing at 20 breaths/min.",
        ),
        Scenario(
            name="spontaneous-breath",
            duration=40.0,
            settings_timeline=((0.0, settings_for_rate(36.0, 18.0)),),
            faults=(
                FaultEvent(
                    time=20.4, kind=FaultKind.SPONTANEOUS_BREATH, duration=0.35, depth=3.0
                ),
            ),
            description="Patient inhales hard enough to pull pressure near zero.",
        ),
        Scenario(
            name="rollover-disconnect",
            duration=45.0,
            settings_timeline=((0.0, cycling),),
            faults=(
                FaultEvent(
                    time=20.0,
                    kind=FaultKind.NOISY_PLATEAU,
                    duration=25.0,
                    level=8.0,
                    amplitude=0.15,
                ),
            ),
            description="Circuit breaks; pressure parks at a steady low level.",
        ),
        Scenario(
            name="deliberate-blockage",
            duration=46.0,
            settings_timeline=((0.0, cycling),),
            faults=(
                FaultEvent(
                    time=15.0, kind=FaultKind.SPONTANEOUS_BREATH, duration=0.4, depth=2.0
                ),
                FaultEvent(
                    time=15.4,
                    kind=FaultKind.OBSTRUCTION,
                    duration=20.0,
                    level=30.0,
                    amplitude=0.2,
                    relax_tau=0.3,
                ),
            ),
            description="Momentary drop, then a steady high hold while blocked.",
        ),
        Scenario(
            name="sudden-pip-drop",
            duration=70.0,
            settings_timeline=(
                (0.0, cycling),
                (25.0, settings_for_rate(18.0, 20.0)),
            ),
            description="PIP dial cut from 36 to 18 mid-run.",
        ),
        Scenario(
            name="noisy-plateau",
            duration=45.0,
            settings_timeline=((0.0, cycling),),
            faults=(
                FaultEvent(
                    time=15.0,
                    kind=FaultKind.NOISY_PLATEAU,
                    duration=30.0,
                    level=24.0,
                    amplitude=1.2,
                ),
            ),
            description="Obstruction that still lets pressure wiggle slightly.",
        ),
    ]
    return {s.name: s for s in scenarios}


def parse_scenario_text(text: str, name: str = "scenario") -> Scenario:
    """Parse the plain declarative scenario format.

    One directive per line; ``#`` starts a comment. Directives::

        duration <seconds>
        settings <time> key=value ...
        fault <time> <kind> duration=<seconds> [key=value ...]

    Settings keys: ``pip``, ``r_nom``, ``tau_insp``, ``tau_exp``, ``noise``,
    plus the convenience pair ``rate`` / ``insp_frac`` which solves the time
    constants for a breath rate. Later ``settings`` lines inherit every
    field they do not override. Fault kinds are ``disconnect``,
    ``obstruction``, ``spontaneous_breath``, ``noisy_plateau`` with optional
    ``level``, ``amplitude``, ``depth``, ``relax_tau``.
    """
    duration: float | None = None
    timeline: list[tuple[float, VentilatorSettings]] = []
    faults: list[FaultEvent] = []

    def parse_pairs(tokens: list[str], line_no: int) -> dict[str, float]:
        pairs = {}
        for token in tokens:
            key, sep, value = token.partition("=")
            if not sep:
                raise DataError(f"line {line_no}: expected key=value, got {token!r}")
            try:
                pairs[key] = float(value)
            except ValueError:
                raise DataError(f"line {line_no}: bad number in {token!r}") from None
        return pairs

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        directive = tokens[0]
        if directive == "duration":
            if len(tokens) != 2:
                raise DataError(f"line {line_no}: duration takes one value")
            duration = float(tokens[1])
        elif directive == "settings":
            if len(tokens) < 3:
                raise DataError(f"line {line_no}: settings needs a time and key=value pairs")
            time = float(tokens[1])
            pairs = parse_pairs(tokens[2:], line_no)
            base = timeline[-1][1] if timeline else None
            timeline.append((time, _settings_from_pairs(pairs, base, line_no)))
        elif directive == "fault":
            if len(tokens) < 4:
                raise DataError(f"line {line_no}: fault needs time, kind, and duration")
            time = float(tokens[1])
            try:
                kind = FaultKind(tokens[2])
            except ValueError:
                valid = ", ".join(k.value for k in FaultKind)
                raise DataError(f"line {line_no}: unknown fault kind {tokens[2]!r} "
                                f"(expected one of: {valid})") from None
            pairs = parse_pairs(tokens[3:], line_no)
            if "duration" not in pairs:
                raise DataError(f"line {line_no}: fault needs duration=<seconds>")
            faults.append(
                FaultEvent(
                    time=time,
                    kind=kind,
                    duration=pairs.pop("duration"),
                    level=pairs.pop("level", None),
                    amplitude=pairs.pop("amplitude", 0.0),
                    depth=pairs.pop("depth", None),
                    relax_tau=pairs.pop("relax_tau", 0.2),
                )
            )
            if pairs:
                raise DataError(f"line {line_no}: unknown fault keys {sorted(pairs)}")
        else:
            raise DataError(f"line {line_no}: unknown directive {directive!r}")

    if duration is None:
        raise DataError("scenario file must declare a duration")
    if not timeline:
        raise DataError("scenario file must declare settings")
    return Scenario(
        name=name,
        duration=duration,
        settings_timeline=tuple(timeline),
        faults=tuple(faults),
    )


def _settings_from_pairs(
    pairs: dict[str, float], base: VentilatorSettings | None, line_no: int
) -> VentilatorSettings:
    known = {"pip", "r_nom", "tau_insp", "tau_exp", "noise", "rate", "insp_frac"}
    unknown = set(pairs) - known
    if unknown:
        raise DataError(f"line {line_no}: unknown settings keys {sorted(unknown)}")
    if base is None and "pip" not in pairs:
        raise DataError(f"line {line_no}: first settings entry must set pip")

    pip = pairs.get("pip", base.pip_setpoint if base else None)
    r_nom = pairs.get("r_nom", base.r_nom if base else 2.4)
    noise = pairs.get("noise", base.atmospheric_noise_std if base else 0.1)
    if "rate" in pairs:
        return settings_for_rate(
            pip,
            pairs["rate"],
            r_nom=r_nom,
            insp_fraction=pairs.get("insp_frac", 0.3),
            atmospheric_noise_std=noise,
        )
    if "insp_frac" in pairs:
        raise DataError(f"line {line_no}: insp_frac requires rate")
    defaults = base or VentilatorSettings(pip_setpoint=pip)
    return replace(
        defaults,
        pip_setpoint=pip,
        r_nom=r_nom,
        inspiratory_time_constant=pairs.get("tau_insp", defaults.inspiratory_time_constant),
        expiratory_time_constant=pairs.get("tau_exp", defaults.expiratory_time_constant),
        atmospheric_noise_std=noise,
    )
