"""Compiled bulk runner for the monitor and alarm conditions.

The pure-Python classes in :mod:`ventmon.monitor` are the reference
implementation; this module repeats the same arithmetic, in the same order,
inside a single numba kernel so that long traces and throughput tests run at
tens of millions of samples per second. A test pins the two paths to
bit-identical outputs, so any change here must be mirrored there.

The whole per-stream state lives in a 16-slot float64 vector (128 bytes) and
the kernel performs no per-sample allocation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .alarms import AlarmConfig
from .monitor import MonitorConfig

STATE_SLOTS = 16

# State vector layout.
_VH, _VH_LAST, _VH_SINCE = 0, 1, 2
_VL, _VL_LAST, _VL_SINCE = 3, 4, 5
_PHASE, _T_PEAK = 6, 7
_PIP, _PEEP, _PERIOD = 8, 9, 10
_PEEP_SEEDED, _PIP_SEEDED, _RR_SEEDED = 11, 12, 13

# Config vector layout.
_A_ATT, _A_REL, _A_SMOOTH, _FS = 0, 1, 2, 3
_P_MAX, _P_MIN, _RR_MAX, _RR_MIN = 4, 5, 6, 7
_T_MAX_SAMPLES, _R_MIN, _D_MIN = 8, 9, 10
CONFIG_SLOTS = 11

# Active-alarm bits (kernel output).
HIGH_PRESSURE_BIT = 1 << 0
LOW_PRESSURE_BIT = 1 << 1
HIGH_RR_BIT = 1 << 2
LOW_RR_BIT = 1 << 3
NONCYCLING_BIT = 1 << 4
TIME_HIGH_BIT = 1 << 5
TIME_LOW_BIT = 1 << 6
RATIO_BIT = 1 << 7
DIFFERENCE_BIT = 1 << 8

# Step-flag bits (kernel output).
FLAG_HIGH_ATTACK = 1 << 0
FLAG_LOW_ATTACK = 1 << 1
FLAG_PHASE_CHANGED = 1 << 2
FLAG_METRICS_UPDATED = 1 << 3
FLAG_INHALING = 1 << 4


def pack_state(config: MonitorConfig, first_sample: float) -> np.ndarray:
    """Fresh state vector equivalent to ``MonitorState.initial``."""
    state = np.zeros(STATE_SLOTS)
    state[_VH] = first_sample
    state[_VH_LAST] = first_sample
    state[_VL] = first_sample
    state[_VL_LAST] = first_sample
    state[_PIP] = np.nan
    state[_PEEP] = np.nan
    state[_PERIOD] = np.nan
    return state


def pack_config(monitor: MonitorConfig, alarms: AlarmConfig) -> np.ndarray:
    cfg = np.zeros(CONFIG_SLOTS)
    cfg[_A_ATT] = monitor.alpha_attack
    cfg[_A_REL] = monitor.alpha_release
    cfg[_A_SMOOTH] = monitor.alpha_smooth
    cfg[_FS] = monitor.sample_rate
    cfg[_P_MAX] = alarms.p_max
    cfg[_P_MIN] = alarms.p_min
    cfg[_RR_MAX] = alarms.rr_max
    cfg[_RR_MIN] = alarms.rr_min
    cfg[_T_MAX_SAMPLES] = alarms.t_max_samples(monitor.sample_rate)
    cfg[_R_MIN] = alarms.r_min
    cfg[_D_MIN] = alarms.d_min
    return cfg


@njit(cache=True)
def _run(samples, state, cfg, start_index, v_high, v_low, flags, alarm_bits,
         rec_sample, rec_pip, rec_peep, rec_rr):  # pragma: no cover - compiled
    a_att = cfg[_A_ATT]
    a_rel = cfg[_A_REL]
    a_s = cfg[_A_SMOOTH]
    fs = cfg[_FS]
    t_max_samples = cfg[_T_MAX_SAMPLES]

    n_records = 0
    for i in range(samples.shape[0]):
        p = samples[i]
        k = start_index + i
        step_flags = 0

        state[_T_PEAK] += 1.0

        if p >= state[_VH] and p <= state[_VL]:
            # Collapsed envelopes: release both sides, no cycling evidence.
            state[_VH] += (1.0 - a_rel) * (p - state[_VH])
            state[_VH_SINCE] += 1.0
            state[_VL] += (1.0 - a_rel) * (p - state[_VL])
            state[_VL_SINCE] += 1.0
        else:
            if p >= state[_VH]:
                state[_VH] += (1.0 - a_att) * (p - state[_VH])
                state[_VH_LAST] = p
                state[_VH_SINCE] = 0.0
                step_flags |= FLAG_HIGH_ATTACK
                if state[_PHASE] == 0.0:
                    state[_PHASE] = 1.0
                    step_flags |= FLAG_PHASE_CHANGED | FLAG_METRICS_UPDATED
                    if state[_PEEP_SEEDED] == 1.0:
                        state[_PEEP] += (1.0 - a_s) * (state[_VL_LAST] - state[_PEEP])
                    else:
                        state[_PEEP] = state[_VL_LAST]
                        state[_PEEP_SEEDED] = 1.0
            else:
                state[_VH] += (1.0 - a_rel) * (p - state[_VH])
                state[_VH_SINCE] += 1.0

            if p <= state[_VL]:
                state[_VL] += (1.0 - a_att) * (p - state[_VL])
                state[_VL_LAST] = p
                state[_VL_SINCE] = 0.0
                step_flags |= FLAG_LOW_ATTACK
                if state[_PHASE] == 1.0:
                    state[_PHASE] = 0.0
                    step_flags |= FLAG_PHASE_CHANGED | FLAG_METRICS_UPDATED
                    if state[_PIP_SEEDED] == 1.0:
                        state[_PIP] += (1.0 - a_s) * (state[_VH_LAST] - state[_PIP])
                        period = state[_T_PEAK] - state[_VH_SINCE]
                        if period > 0.0:
                            if state[_RR_SEEDED] == 1.0:
                                state[_PERIOD] += (1.0 - a_s) * (period - state[_PERIOD])
                            else:
                                state[_PERIOD] = period
                                state[_RR_SEEDED] = 1.0
                    else:
                        state[_PIP] = state[_VH_LAST]
                    state[_T_PEAK] = state[_VH_SINCE]
                    state[_PIP_SEEDED] = 1.0
                    if state[_RR_SEEDED] == 1.0:
                        rec_sample[n_records] = k
                        rec_pip[n_records] = state[_PIP]
                        rec_peep[n_records] = state[_PEEP]
                        rec_rr[n_records] = 60.0 * fs / state[_PERIOD]
                        n_records += 1
            else:
                state[_VL] += (1.0 - a_rel) * (p - state[_VL])
                state[_VL_SINCE] += 1.0

        if state[_PHASE] == 1.0:
            step_flags |= FLAG_INHALING

        bits = 0
        if p > cfg[_P_MAX]:
            bits |= HIGH_PRESSURE_BIT
        if p < cfg[_P_MIN]:
            bits |= LOW_PRESSURE_BIT
        if state[_PEEP_SEEDED] == 1.0 and state[_PIP_SEEDED] == 1.0 and state[_RR_SEEDED] == 1.0:
            rr = 60.0 * fs / state[_PERIOD]
            if rr > cfg[_RR_MAX]:
                bits |= HIGH_RR_BIT
            if rr < cfg[_RR_MIN]:
                bits |= LOW_RR_BIT
        if state[_VH_SINCE] > t_max_samples:
            bits |= TIME_HIGH_BIT
        if state[_VL_SINCE] > t_max_samples:
            bits |= TIME_LOW_BIT
        if k >= t_max_samples:
            if state[_VL] > 0.0 and state[_VH] / state[_VL] < cfg[_R_MIN]:
                bits |= RATIO_BIT
            if state[_VH] - state[_VL] < cfg[_D_MIN]:
                bits |= DIFFERENCE_BIT
        if bits & (TIME_HIGH_BIT | TIME_LOW_BIT | RATIO_BIT | DIFFERENCE_BIT):
            bits |= NONCYCLING_BIT

        v_high[i] = state[_VH]
        v_low[i] = state[_VL]
        flags[i] = step_flags
        alarm_bits[i] = bits

    return n_records


@dataclass
class FastRunResult:
    """Arrays produced by one kernel run over a trace."""

    v_high: np.ndarray
    v_low: np.ndarray
    flags: np.ndarray
    alarm_bits: np.ndarray
    metric_samples: np.ndarray
    metric_pip: np.ndarray
    metric_peep: np.ndarray
    metric_rr: np.ndarray


def run_stream(
    samples: np.ndarray,
    monitor_config: MonitorConfig,
    alarm_config: AlarmConfig,
    *,
    state: np.ndarray | None = None,
    start_index: int = 0,
) -> FastRunResult:
    """Stream samples through the compiled kernel.

    Passing ``state`` (a vector from :func:`pack_state`) continues an
    existing stream; ``start_index`` is the stream index of ``samples[0]``,
    which the noncycling arming gate depends on.
    """
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise ValueError("trace contains non-finite samples")
    n = samples.shape[0]
    if state is None:
        if n == 0:
            raise ValueError("cannot start a stream from an empty trace")
        state = pack_state(monitor_config, float(samples[0]))
    cfg = pack_config(monitor_config, alarm_config)

    v_high = np.empty(n)
    v_low = np.empty(n)
    flags = np.empty(n, dtype=np.uint8)
    alarm_bits = np.empty(n, dtype=np.uint16)
    rec_sample = np.empty(n, dtype=np.int64)
    rec_pip = np.empty(n)
    rec_peep = np.empty(n)
    rec_rr = np.empty(n)

    count = _run(
        samples, state, cfg, start_index,
        v_high, v_low, flags, alarm_bits,
        rec_sample, rec_pip, rec_peep, rec_rr,
    )
    return FastRunResult(
        v_high=v_high,
        v_low=v_low,
        flags=flags,
        alarm_bits=alarm_bits,
        metric_samples=rec_sample[:count].copy(),
        metric_pip=rec_pip[:count].copy(),
        metric_peep=rec_peep[:count].copy(),
        metric_rr=rec_rr[:count].copy(),
    )


def state_nbytes() -> int:
    """Size of the complete per-stream algorithm state, in bytes."""
    return STATE_SLOTS * 8
