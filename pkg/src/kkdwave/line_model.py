"""Travelling-wave model of a resistor-terminated KLJN line.

Alice and Bob each drive the line through a resistor.  With reflection
coefficients ``gamma_a`` and ``gamma_b`` at the two ends and an end-to-end
amplitude transmission ``alpha``, the right-travelling wave ``v_plus`` and
left-travelling wave ``v_minus`` satisfy::

    v_plus  = v_a' + alpha * gamma_a * v_minus
    v_minus = v_b' + alpha * gamma_b * v_plus

where ``v_x' = (1 - gamma_x) / 2 * v_x`` is the wave injected by each source.
The line is treated as electrically short, so there is no propagation delay
between the two ends; only the loss factor distinguishes them.

All quantities are in normalised units: ``noise_scale`` plays the role of the
thermal factor ``kTBZ0`` and a source with resistance ``R`` has variance
``4 * (R / Z0) * noise_scale``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError, SingularConfigurationError
from .noise_gen import BandSpec, SampleStream, SeedLike, generate_band_limited_noise

_SINGULAR_TOL = 1e-12


def loss_db_to_alpha(loss_db: float) -> float:
    """Amplitude transmission for a line loss given in (non-negative) dB."""
    if loss_db < 0 or not math.isfinite(loss_db):
        raise ParameterError(f"loss must be a finite non-negative dB value, got {loss_db}")
    return 10.0 ** (-loss_db / 20.0)


def reflection_coefficient(resistance: float, z0: float) -> float:
    """``(R - Z0) / (R + Z0)``; ``math.inf`` gives an open circuit (+1)."""
    if z0 <= 0:
        raise ParameterError(f"z0 must be positive, got {z0}")
    if resistance < 0:
        raise ParameterError(f"resistance must be non-negative, got {resistance}")
    if math.isinf(resistance):
        return 1.0
    return (resistance - z0) / (resistance + z0)


def source_variance(resistance: float, z0: float, noise_scale: float) -> float:
    """Johnson-noise variance of a source with the given resistance, in normalised units."""
    return 4.0 * resistance / z0 * noise_scale


@dataclass(frozen=True)
class LineConfig:
    """Physical description of one exchange: resistors, line impedance, loss, noise scale."""

    r_alice: float
    r_bob: float
    z0: float = 50.0
    alpha: float = 1.0
    noise_scale: float = 1.0

    def __post_init__(self):
        for name in ("r_alice", "r_bob", "z0"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be positive and finite, got {value}")
        if not 0 < self.alpha <= 1:
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.noise_scale > 0:
            raise ParameterError(f"noise_scale must be positive, got {self.noise_scale}")

    @classmethod
    def from_loss_db(cls, r_alice, r_bob, z0=50.0, loss_db=0.0, noise_scale=1.0):
        return cls(r_alice, r_bob, z0, loss_db_to_alpha(loss_db), noise_scale)


@dataclass(frozen=True)
class ReflectionPair:
    gamma_a: float
    gamma_b: float

    def __post_init__(self):
        for name in ("gamma_a", "gamma_b"):
            g = getattr(self, name)
            if not -1.0 <= g <= 1.0:
                raise ParameterError(f"{name} must lie in [-1, 1], got {g}")

    def swapped(self) -> "ReflectionPair":
        return ReflectionPair(self.gamma_b, self.gamma_a)


@dataclass(frozen=True)
class WavePair:
    """Synchronised right- (``v_plus``) and left-travelling (``v_minus``) waves."""

    v_plus: SampleStream
    v_minus: SampleStream

    def __post_init__(self):
        _check_aligned(self.v_plus, self.v_minus)

    @property
    def sample_rate(self) -> float:
        return self.v_plus.sample_rate

    @property
    def valid_from(self) -> int:
        return max(self.v_plus.valid_from, self.v_minus.valid_from)

    def as_pairs(self, stride: int = 1) -> np.ndarray:
        """``(n, 2)`` array of ``(v_plus, v_minus)`` from the valid region, every ``stride`` samples."""
        start = self.valid_from
        return np.column_stack(
            (self.v_plus.samples[start::stride], self.v_minus.samples[start::stride])
        )


@dataclass(frozen=True)
class Covariance2:
    """Covariance of ``(v_plus, v_minus)``."""

    c_pp: float
    c_mm: float
    c_pm: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.c_pp, self.c_pm], [self.c_pm, self.c_mm]])

    @property
    def correlation(self) -> float:
        return self.c_pm / math.sqrt(self.c_pp * self.c_mm)

    def is_positive_definite(self) -> bool:
        return self.c_pp > 0 and self.c_mm > 0 and self.c_pm**2 < self.c_pp * self.c_mm

    def swapped(self) -> "Covariance2":
        """The same covariance with the two axes exchanged."""
        return Covariance2(self.c_mm, self.c_pp, self.c_pm)

    def max_relative_deviation(self, other: "Covariance2") -> float:
        ours = np.array([self.c_pp, self.c_mm, self.c_pm])
        ref = np.array([other.c_pp, other.c_mm, other.c_pm])
        return float(np.max(np.abs(ours - ref) / np.abs(ref)))

    @classmethod
    def from_matrix(cls, m) -> "Covariance2":
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(m[1, 1]), float(0.5 * (m[0, 1] + m[1, 0])))

    @classmethod
    def empirical(cls, pairs) -> "Covariance2":
        """Zero-mean second-moment estimate from an ``(n, 2)`` array."""
        x = np.asarray(pairs, dtype=float)
        n = x.shape[0]
        return cls(
            float(x[:, 0] @ x[:, 0] / n),
            float(x[:, 1] @ x[:, 1] / n),
            float(x[:, 0] @ x[:, 1] / n),
        )


def _check_aligned(a: SampleStream, b: SampleStream):
    if len(a) != len(b) or a.sample_rate != b.sample_rate:
        raise ShapeError(
            f"streams differ: lengths {len(a)} vs {len(b)}, rates {a.sample_rate} vs {b.sample_rate}"
        )


def _loop_denominator(gammas: ReflectionPair, alpha: float) -> float:
    denom = 1.0 - (alpha * alpha) * (gammas.gamma_a * gammas.gamma_b)
    if abs(denom) < _SINGULAR_TOL:
        raise SingularConfigurationError(
            f"round-trip gain alpha^2*gamma_a*gamma_b = 1 (alpha={alpha}, gammas={gammas})"
        )
    return denom


def reflection_coefficients(config: LineConfig) -> ReflectionPair:
    return ReflectionPair(
        reflection_coefficient(config.r_alice, config.z0),
        reflection_coefficient(config.r_bob, config.z0),
    )


def injected_waves(v_a: SampleStream, v_b: SampleStream, gammas: ReflectionPair):
    """Waves launched onto the line by each source through its terminating resistor."""
    _check_aligned(v_a, v_b)
    inj_a = SampleStream(0.5 * (1.0 - gammas.gamma_a) * v_a.samples, v_a.sample_rate)
    inj_b = SampleStream(0.5 * (1.0 - gammas.gamma_b) * v_b.samples, v_b.sample_rate)
    return inj_a, inj_b


def steady_state_waves(v_a_inj: SampleStream, v_b_inj: SampleStream,
                       gammas: ReflectionPair, alpha: float) -> WavePair:
    """Solve the two coupled reflection equations for ``(v_plus, v_minus)``."""
    _check_aligned(v_a_inj, v_b_inj)
    denom = _loop_denominator(gammas, alpha)
    a, b = v_a_inj.samples, v_b_inj.samples
    v_plus = (a + alpha * gammas.gamma_a * b) / denom
    v_minus = (b + alpha * gammas.gamma_b * a) / denom
    fs = v_a_inj.sample_rate
    return WavePair(SampleStream(v_plus, fs), SampleStream(v_minus, fs))


def theoretical_covariance(gammas: ReflectionPair, alpha: float, noise_scale: float = 1.0) -> Covariance2:
    """Closed-form covariance of ``(v_plus, v_minus)`` for independent Johnson sources."""
    denom = _loop_denominator(gammas, alpha)
    ga, gb = gammas.gamma_a, gammas.gamma_b
    a2 = alpha * alpha
    # (alpha*ga*gb)^2 is symmetric in ga, gb, which keeps the lossless case exactly permutation-invariant
    common = 1.0 - (alpha * (ga * gb)) ** 2
    scale = noise_scale / (denom * denom)
    return Covariance2(
        c_pp=scale * (common + (a2 - 1.0) * ga * ga),
        c_mm=scale * (common + (a2 - 1.0) * gb * gb),
        c_pm=scale * (alpha * ga * (1.0 - gb * gb) + alpha * gb * (1.0 - ga * ga)),
    )


def simulate_exchange(config: LineConfig, band: BandSpec, seed: SeedLike) -> WavePair:
    """Generate Alice's and Bob's noise and propagate it to the travelling waves.

    The two sources use substreams ``(*seed, 0)`` and ``(*seed, 1)``.
    """
    gammas = reflection_coefficients(config)
    key = (seed,) if isinstance(seed, (int, np.integer)) else tuple(seed)
    v_a = generate_band_limited_noise(
        band, source_variance(config.r_alice, config.z0, config.noise_scale), (*key, 0)
    )
    v_b = generate_band_limited_noise(
        band, source_variance(config.r_bob, config.z0, config.noise_scale), (*key, 1)
    )
    inj_a, inj_b = injected_waves(v_a, v_b, gammas)
    return steady_state_waves(inj_a, inj_b, gammas, config.alpha)
