"""Run the monitor over recorded or simulated traces and compare rates.

This module owns the file formats (trace/metric/envelope CSV), the
decimation used for sample-rate experiments, and the RMS error comparison
between per-breath metric series produced at different rates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Callable, Iterable, Sequence

import numpy as np

from .alarms import AlarmAnnunciator, AlarmConfig, AlarmEvent, check_alarms
from .errors import (
    ConfigError,
    DataError,
    EmptyTraceError,
    NonFiniteSampleError,
    NonMonotonicTimestampsError,
)
from .monitor import BreathPhase, MonitorConfig, MonitorState
from .simulator import PressureTrace, TraceAnnotations

TRACE_HEADER = ["time_sec", "pressure_cmh2o"]
METRIC_HEADER = ["breath", "sample", "pip", "peep", "rr"]
ENVELOPE_HEADER = ["sample", "pressure", "v_high", "v_low", "phase"]
SWEEP_HEADER = ["rate", "rms_pip", "rms_rr"]

_FMT = "{:.9g}".format


@dataclass(frozen=True)
class MetricRecord:
    """Per-breath metric snapshot, taken when a breath cycle completes."""

    breath: int
    sample_index: int
    pip: float
    peep: float
    rr: float


@dataclass(frozen=True)
class MetricSeries:
    """Ordered per-breath records plus the rate they were produced at."""

    records: tuple[MetricRecord, ...]
    sample_rate: float

    def __post_init__(self) -> None:
        indices = [r.sample_index for r in self.records]
        if any(later <= earlier for earlier, later in zip(indices, indices[1:])):
            raise DataError("metric records must have strictly increasing sample indices")

    def __len__(self) -> int:
        return len(self.records)

    def times(self) -> np.ndarray:
        return np.array([r.sample_index for r in self.records]) / self.sample_rate

    def values(self, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.records])


@dataclass
class EnvelopePath:
    """Per-sample monitor internals, for plotting and tests."""

    sample: np.ndarray
    pressure: np.ndarray
    v_high: np.ndarray
    v_low: np.ndarray
    phase: np.ndarray
    high_attacked: np.ndarray
    low_attacked: np.ndarray


def ingest_csv(source: str | Path | IO[str], sample_rate: float) -> PressureTrace:
    """Read a trace CSV, resampling irregular timestamps by zero-order hold.

    Rows must be ``time_sec,pressure_cmh2o`` with strictly increasing times
    and finite pressures. Uniform instants are laid down at the declared
    rate starting from the first timestamp; each instant takes the most
    recent row value.
    """
    if sample_rate <= 0.0:
        raise ConfigError(f"sample rate must be positive, got {sample_rate}")
    if isinstance(source, (str, Path)):
        with open(source, newline="") as handle:
            return ingest_csv(handle, sample_rate)

    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise EmptyTraceError("trace file is empty")
    if [h.strip() for h in header] != TRACE_HEADER:
        raise DataError(f"expected header {','.join(TRACE_HEADER)}, got {','.join(header)}")

    times: list[float] = []
    values: list[float] = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"row {row_no}: expected 2 columns, got {len(row)}")
        try:
            t, p = float(row[0]), float(row[1])
        except ValueError:
            raise DataError(f"row {row_no}: values are not numbers: {row}") from None
        if not math.isfinite(p):
            raise NonFiniteSampleError(f"row {row_no}: non-finite pressure {p}")
        if not math.isfinite(t):
            raise NonMonotonicTimestampsError(f"row {row_no}: non-finite timestamp {t}")
        if times and t <= times[-1]:
            raise NonMonotonicTimestampsError(
                f"row {row_no}: timestamp {t} does not increase past {times[-1]}"
            )
        times.append(t)
        values.append(p)

    if not times:
        raise EmptyTraceError("trace file has no data rows")

    t0 = times[0]
    n = int(math.floor((times[-1] - t0) * sample_rate + 1e-9)) + 1
    instants = t0 + np.arange(n) / sample_rate
    # Zero-order hold: value of the latest row at or before each instant.
    indices = np.searchsorted(np.asarray(times), instants + 1e-12, side="right") - 1
    samples = np.asarray(values)[indices]
    return PressureTrace(samples, sample_rate)


def decimate(trace: PressureTrace, factor: int) -> PressureTrace:
    """Keep every ``factor``-th sample starting at index 0.

    No anti-alias filtering is applied: a sensor sampling slowly would also
    see the raw waveform, and low-pass filtering would hide exactly the
    narrow peaks whose loss this experiment measures. Annotations carry
    times in seconds, so they pass through unchanged.
    """
    if factor < 1:
        raise ConfigError(f"decimation factor must be >= 1, got {factor}")
    return PressureTrace(
        trace.samples[::factor].copy(),
        trace.sample_rate / factor,
        trace.annotations,
    )


def run_monitor_over_trace(
    trace: PressureTrace,
    monitor_config: MonitorConfig,
    alarm_config: AlarmConfig,
) -> tuple[MetricSeries, list[AlarmEvent], EnvelopePath]:
    """Stream a trace through the monitor and alarm engine.

    Returns one metric record per completed breath cycle (from the first
    cycle with a full set of metrics), the alarm event log, and the
    per-sample envelope path.
    """
    n = len(trace)
    if n == 0:
        raise EmptyTraceError("cannot replay an empty trace")
    if not math.isclose(monitor_config.sample_rate, trace.sample_rate):
        raise ConfigError(
            f"monitor config is for {monitor_config.sample_rate} samples/sec "
            f"but the trace is {trace.sample_rate}"
        )

    samples = trace.samples
    state = MonitorState.initial(monitor_config, float(samples[0]))
    annunciator = AlarmAnnunciator(alarm_config)

    path = EnvelopePath(
        sample=np.arange(n),
        pressure=samples.copy(),
        v_high=np.empty(n),
        v_low=np.empty(n),
        phase=np.empty(n, dtype=object),
        high_attacked=np.zeros(n, dtype=bool),
        low_attacked=np.zeros(n, dtype=bool),
    )
    records: list[MetricRecord] = []

    for k in range(n):
        p = float(samples[k])
        out = state.step(p)
        active = check_alarms(state, p, alarm_config, k)
        annunciator.update(active, k)

        path.v_high[k] = state.high.value
        path.v_low[k] = state.low.value
        path.phase[k] = state.breath_phase.value
        path.high_attacked[k] = out.high_attacked
        path.low_attacked[k] = out.low_attacked

        if (
            out.phase_changed
            and state.breath_phase is BreathPhase.EXHALING
            and state.metrics_valid
        ):
            records.append(
                MetricRecord(len(records) + 1, k, state.pip, state.peep, state.rr)
            )

    series = MetricSeries(tuple(records), trace.sample_rate)
    return series, annunciator.events, path


def rms_metric_error(reference: MetricSeries, candidate: MetricSeries, metric: str) -> float:
    """RMS difference between two per-breath series for ``pip`` or ``rr``.

    Each candidate record is paired with the reference record nearest in
    time; the mean square runs over all candidate breaths.
    """
    if metric not in ("pip", "rr", "peep"):
        raise ConfigError(f"metric must be pip, peep, or rr, got {metric!r}")
    if not len(reference) or not len(candidate):
        raise EmptyTraceError("metric series must be non-empty")
    ref_times = reference.times()
    ref_values = reference.values(metric)
    cand_times = candidate.times()
    cand_values = candidate.values(metric)

    if len(ref_times) == 1:
        nearest = np.zeros(len(cand_times), dtype=int)
    else:
        right = np.clip(np.searchsorted(ref_times, cand_times), 1, len(ref_times) - 1)
        left = right - 1
        closer_right = np.abs(ref_times[right] - cand_times) < np.abs(
            ref_times[left] - cand_times
        )
        nearest = np.where(closer_right, right, left)
    diffs = cand_values - ref_values[nearest]
    return float(np.sqrt(np.mean(diffs**2)))


@dataclass(frozen=True)
class SweepRow:
    rate: float
    rms_pip: float
    rms_rr: float


def sweep_rates(
    trace: PressureTrace,
    rates: Sequence[float],
    *,
    alarm_config: AlarmConfig | None = None,
    config_factory: Callable[[float], MonitorConfig] = MonitorConfig.from_reference,
) -> list[SweepRow]:
    """Replay a trace at several sample rates and report RMS metric errors.

    The trace's own rate is the baseline. Each requested rate must divide
    it evenly (integer decimation only); coefficients are re-derived for
    every rate through ``config_factory``.
    """
    alarm_config = alarm_config or AlarmConfig()
    baseline, _, _ = run_monitor_over_trace(
        trace, config_factory(trace.sample_rate), alarm_config
    )
    rows = []
    for rate in rates:
        factor = trace.sample_rate / rate
        if abs(factor - round(factor)) > 1e-9 or factor < 1.0 - 1e-9:
            raise ConfigError(
                f"rate {rate} does not evenly divide the baseline {trace.sample_rate}"
            )
        reduced = decimate(trace, round(factor))
        series, _, _ = run_monitor_over_trace(reduced, config_factory(rate), alarm_config)
        rows.append(
            SweepRow(
                rate=rate,
                rms_pip=rms_metric_error(baseline, series, "pip"),
                rms_rr=rms_metric_error(baseline, series, "rr"),
            )
        )
    return rows


def write_trace_csv(trace: PressureTrace, out: IO[str]) -> None:
    writer = csv.writer(out)
    writer.writerow(TRACE_HEADER)
    for k, value in enumerate(trace.samples):
        writer.writerow([_FMT(k / trace.sample_rate), _FMT(value)])


def write_metric_csv(series: MetricSeries, out: IO[str]) -> None:
    writer = csv.writer(out)
    writer.writerow(METRIC_HEADER)
    for r in series.records:
        writer.writerow([r.breath, r.sample_index, _FMT(r.pip), _FMT(r.peep), _FMT(r.rr)])


def write_envelope_csv(path: EnvelopePath, out: IO[str]) -> None:
    writer = csv.writer(out)
    writer.writerow(ENVELOPE_HEADER)
    for k in range(len(path.sample)):
        writer.writerow(
            [
                int(path.sample[k]),
                _FMT(path.pressure[k]),
                _FMT(path.v_high[k]),
                _FMT(path.v_low[k]),
                path.phase[k],
            ]
        )


def write_sweep_csv(rows: Iterable[SweepRow], out: IO[str]) -> None:
    writer = csv.writer(out)
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow([_FMT(row.rate), _FMT(row.rms_pip), _FMT(row.rms_rr)])


ANNOTATION_HEADER = ["kind", "t_start", "t_end", "detail", "peak", "trough"]


def write_annotations_csv(annotations: TraceAnnotations, out: IO[str]) -> None:
    """Ground-truth markers as one sparse-column CSV."""
    writer = csv.writer(out)
    writer.writerow(ANNOTATION_HEADER)
    for t, phase in annotations.switches:
        writer.writerow(["switch", _FMT(t), "", phase, "", ""])
    for t0, t1, kind in annotations.fault_windows:
        writer.writerow(["fault", _FMT(t0), _FMT(t1), kind, "", ""])
    for cycle in annotations.cycles:
        writer.writerow(
            [
                "cycle",
                _FMT(cycle.start_time),
                _FMT(cycle.end_time),
                "",
                _FMT(cycle.peak_pressure),
                _FMT(cycle.trough_pressure),
            ]
        )
