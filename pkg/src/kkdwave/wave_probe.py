"""Software model of the directional wave measurement device.

The probe sees the line voltage ``v`` at one end of a short delay line and
the voltage ``v_x`` across it.  For a wave ``v(t, x) = v+(t - x/nu) + v-(t + x/nu)``
the combinations ``dv/dt -/+ nu * dv/dx`` isolate the time derivatives of
the two travelling waves.  Here ``dv/dt`` is a first difference and the
``nu * dv/dx`` path is a short adaptive FIR filter on ``v_x`` whose weights
are learned by normalised LMS while a single right-travelling wave is
present: the left-going output is the error signal, and adaptation stops once
the apparent reflection coefficient falls below ``calib_threshold``.

Sign conventions: ``v_plus`` travels towards the "right" port, and
:func:`measure_reflection` reports the reflection seen looking out of that
port, i.e. ``<v_minus, v_plus> / <v_plus, v_plus>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import signal

from . import kernels
from .errors import CalibrationError, DegenerateDataError, ParameterError, ShapeError, StateError
from .line_model import WavePair
from .noise_gen import SampleStream

# 1.5 m of coax at roughly two thirds of c
DEFAULT_TAP_DELAY = 1.5 / 2.0e8


@dataclass(frozen=True)
class ProbeConfig:
    tap_delay: float = DEFAULT_TAP_DELAY
    sample_rate: float = 50_000.0
    hp_cutoff: float = 100.0
    lms_step: float = 1e-3
    calib_threshold: float = 0.01
    tap_count: int = 2
    band_high: float = 5_500.0
    block_size: int = 1_000
    max_iterations: int = 1_000_000
    hp_order: int = 4

    def __post_init__(self):
        if not 0 < self.tap_delay < 1.0 / (2.0 * self.band_high):
            raise ParameterError(
                f"tap_delay must lie in (0, 1/(2*band_high)) = (0, {1 / (2 * self.band_high):.3g}) s, "
                f"got {self.tap_delay}"
            )
        if not 0 < self.calib_threshold < 1:
            raise ParameterError(f"calib_threshold must lie in (0, 1), got {self.calib_threshold}")
        if not 0 < self.hp_cutoff < self.sample_rate / 2:
            raise ParameterError(f"hp_cutoff must lie in (0, sample_rate/2), got {self.hp_cutoff}")
        if not 0 < self.band_high <= self.sample_rate / 2:
            raise ParameterError(f"band_high must lie in (0, sample_rate/2], got {self.band_high}")
        if self.lms_step <= 0:
            raise ParameterError(f"lms_step must be positive, got {self.lms_step}")
        for name in ("tap_count", "block_size", "max_iterations", "hp_order"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be a positive integer")

    @property
    def lags(self) -> np.ndarray:
        """Sample lags of the ``v_x`` regressor taps.

        Even tap counts are centred half a sample back, which is where the
        first difference on ``v`` places its group delay.
        """
        return np.arange(self.tap_count) - (self.tap_count - 1) // 2


@dataclass
class ProbeState:
    weights: np.ndarray
    converged: bool = False
    measured_gamma: float = math.nan
    iterations: int = 0

    @classmethod
    def initial(cls, config: ProbeConfig) -> "ProbeState":
        return cls(np.zeros(config.tap_count))

    def copy(self) -> "ProbeState":
        return ProbeState(self.weights.copy(), self.converged, self.measured_gamma, self.iterations)


@dataclass(frozen=True)
class TapSignals:
    v: SampleStream
    v_x: SampleStream

    def __post_init__(self):
        if len(self.v) != len(self.v_x) or self.v.sample_rate != self.v_x.sample_rate:
            raise ShapeError("tap signals must share length and sample rate")


class FrequencyPoint(NamedTuple):
    frequency: float
    magnitude: float
    phase: float


def fractional_delay(x: np.ndarray, delay: float, sample_rate: float) -> np.ndarray:
    """Circularly delay ``x`` by ``delay`` seconds (negative advances) with a phase ramp."""
    n = x.size
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    ramp = np.exp(-2j * np.pi * freqs * delay)
    if n % 2 == 0:
        # the Nyquist bin of a real signal cannot carry a phase
        ramp[-1] = math.cos(math.pi * sample_rate * delay)
    return np.fft.irfft(np.fft.rfft(x) * ramp, n)


def synthesize_tap_signals(waves: WavePair, config: ProbeConfig) -> TapSignals:
    """Line voltage at the probe point and the voltage across the delay line."""
    fs = waves.sample_rate
    if config.tap_delay >= waves.v_plus.duration:
        raise ParameterError("tap_delay must be shorter than the stream")
    vp, vm = waves.v_plus.samples, waves.v_minus.samples
    v = vp + vm
    far = fractional_delay(vp, config.tap_delay, fs) + fractional_delay(vm, -config.tap_delay, fs)
    start = waves.valid_from
    return TapSignals(SampleStream(v, fs, start), SampleStream(far - v, fs, start))


def high_pass_warmup(sample_rate: float, cutoff: float) -> int:
    """Samples discarded while the high-pass filter settles (eight cutoff periods)."""
    return int(math.ceil(8.0 * sample_rate / cutoff))


def high_pass(stream: SampleStream, cutoff: float, order: int = 4) -> SampleStream:
    """Causal Butterworth high-pass; the warm-up is flagged through ``valid_from``."""
    fs = stream.sample_rate
    if not 0 < cutoff < fs / 2:
        raise ParameterError(f"cutoff must lie in (0, {fs / 2}), got {cutoff}")
    sos = signal.butter(order, cutoff, btype="highpass", fs=fs, output="sos")
    y = signal.sosfilt(sos, stream.samples)
    warm = min(len(stream), stream.valid_from + high_pass_warmup(fs, cutoff))
    return SampleStream(y, fs, warm)


def time_derivative(x: np.ndarray, sample_rate: float) -> np.ndarray:
    """First difference scaled to units per second; the first sample is zero."""
    return np.diff(x, prepend=x[:1]) * sample_rate


def regressor(v_x: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    """``(n, taps)`` matrix whose column ``j`` is ``v_x`` delayed by ``lags[j]`` (zero-filled)."""
    n = v_x.size
    out = np.zeros((n, len(lags)))
    for j, lag in enumerate(lags):
        if lag >= 0:
            out[lag:, j] = v_x[: n - lag]
        else:
            out[: n + lag, j] = v_x[-lag:]
    return out


def _paths(tap: TapSignals, config: ProbeConfig):
    """High-passed derivative path, regressor matrix and first usable index."""
    fs = tap.v.sample_rate
    if fs != config.sample_rate:
        raise ParameterError(f"tap signals at {fs} Hz but probe configured for {config.sample_rate} Hz")
    hv = high_pass(tap.v, config.hp_cutoff, config.hp_order)
    hx = high_pass(tap.v_x, config.hp_cutoff, config.hp_order)
    lags = config.lags
    start = max(hv.valid_from, hx.valid_from) + 1 + max(0, int(lags.max()))
    stop = len(tap.v) + min(0, int(lags.min()))
    if stop - start < config.block_size:
        raise ParameterError("tap signals too short for the filter warm-up plus one calibration block")
    d = time_derivative(hv.samples, fs)
    x = regressor(hx.samples, lags)
    return d, x, start, stop


def lms_calibrate(tap: TapSignals, config: ProbeConfig, state: ProbeState | None = None) -> ProbeState:
    """Adapt the ``v_x`` filter on a right-travelling-only recording.

    Returns a new converged state with frozen weights, or raises
    :class:`CalibrationError` (carrying the partial state) if the iteration
    budget runs out first.  The recording is cycled if it is shorter than
    the budget.
    """
    state = ProbeState.initial(config) if state is None else state.copy()
    if state.converged:
        return state
    if state.weights.shape != (config.tap_count,):
        raise StateError(f"state has {state.weights.size} weights, config expects {config.tap_count}")
    d, x, start, stop = _paths(tap, config)
    w = np.array(state.weights, dtype=np.float64)
    iterations, gamma, converged = kernels.lms_calibrate(
        d[start:stop], x[start:stop], w, config.lms_step,
        config.block_size, config.calib_threshold, config.max_iterations,
    )
    result = ProbeState(w, converged, gamma, state.iterations + iterations)
    if not converged:
        raise CalibrationError(
            f"LMS calibration did not reach |gamma| < {config.calib_threshold} within "
            f"{config.max_iterations} samples (last gamma {gamma})",
            result,
        )
    return result


def decompose(tap: TapSignals, state: ProbeState, config: ProbeConfig) -> WavePair:
    """Split the tap signals into outputs proportional to ``d v+/dt`` and ``d v-/dt``."""
    if not state.converged:
        raise StateError("probe must be calibrated before decomposing")
    d, x, start, stop = _paths(tap, config)
    path = x @ state.weights
    plus = d - path
    minus = d + path
    # samples past `stop` see zero-filled advanced taps
    plus[stop:] = 0.0
    minus[stop:] = 0.0
    fs = tap.v.sample_rate
    return WavePair(SampleStream(plus, fs, start), SampleStream(minus, fs, start))


def integrate_waves(waves: WavePair) -> WavePair:
    """Undo the first difference of :func:`decompose`, recovering wave amplitudes.

    The running sum starts at the first valid sample, and the mean over the
    valid region is removed to cancel the unknown integration constant.
    """
    fs = waves.sample_rate
    start = waves.valid_from
    out = []
    for s in (waves.v_plus, waves.v_minus):
        y = np.zeros(len(s))
        y[start:] = np.cumsum(s.samples[start:]) / fs
        y[start:] -= y[start:].mean()
        out.append(SampleStream(y, fs, start))
    return WavePair(*out)


def measure_reflection(waves: WavePair) -> float:
    """Real reflection coefficient by cross-correlating reflected and incident waves."""
    pairs = waves.as_pairs()
    incident = pairs[:, 0] @ pairs[:, 0]
    if not incident > 0:
        raise DegenerateDataError("incident wave carries no power")
    return float(pairs[:, 1] @ pairs[:, 0] / incident)


def probe_frequency_response(config: ProbeConfig, frequencies, dc_leakage: float = 0.0,
                             compensate: bool = False, n_samples: int | None = None):
    """Transfer function from line voltage to the delay-line ``dv/dx`` estimate.

    Each frequency drives a right-travelling sinusoid through
    :func:`synthesize_tap_signals`.  The estimate is reported with the
    polarity ``v(0) - v(dx)``, so an ideal spatial derivative reads +90 deg.
    ``dc_leakage`` adds a frequency-flat fraction of ``v`` to ``v_x``,
    modelling series wire resistance; ``compensate`` subtracts the DC
    response ``H(0)``.  Frequencies are snapped to the nearest FFT bin of an
    ``n_samples`` record (one second by default); the snapped value is reported.
    """
    fs = config.sample_rate
    n = int(round(fs)) if n_samples is None else int(n_samples)
    t = np.arange(n) / fs

    def response(drive):
        zeros = SampleStream(np.zeros(n), fs)
        tap = synthesize_tap_signals(WavePair(SampleStream(drive, fs), zeros), config)
        v = tap.v.samples
        estimate = -(tap.v_x.samples + dc_leakage * v)
        return estimate, v

    est0, v0 = response(np.ones(n))
    h_dc = (est0 @ v0) / (v0 @ v0)

    points = []
    for f in frequencies:
        if not 0 < f < fs / 2:
            raise ParameterError(f"frequency {f} outside (0, {fs / 2})")
        k = int(round(f * n / fs))
        if k == 0:
            raise ParameterError(f"frequency {f} below the record's resolution {fs / n} Hz")
        f_bin = k * fs / n
        est, v = response(np.cos(2 * np.pi * f_bin * t))
        phasor = np.exp(-2j * np.pi * f_bin * t)
        h = (est @ phasor) / (v @ phasor)
        if compensate:
            h = h - h_dc
        points.append(FrequencyPoint(f_bin, float(abs(h)), float(np.degrees(np.angle(h)))))
    return points
