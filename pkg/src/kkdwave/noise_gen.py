"""Band-limited Gaussian noise sources standing in for Alice's and Bob's Johnson noise.

White Gaussian samples are transformed to the frequency domain, every bin
outside the requested band is zeroed, and the result is transformed back and
rescaled to the requested variance.  The band edge is therefore a brick wall:
out-of-band bins are exactly zero rather than merely attenuated.

Random streams come from a counter-based Philox generator keyed through
:class:`numpy.random.SeedSequence`, so a seed may be a plain integer or a
tuple such as ``(seed, trial, stream)`` identifying one of many independent
streams.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ParameterError

SeedLike = Union[int, Sequence[int]]

DEFAULT_SAMPLE_RATE = 50_000.0


@dataclass(frozen=True)
class BandSpec:
    """Sampling and pass-band description of a noise source.

    Parameters
    ----------
    sample_rate : float
        Sampling frequency in Hz.
    f_low, f_high : float
        Inclusive pass-band edges in Hz, ``0 <= f_low < f_high <= sample_rate / 2``.
    n_samples : int
        Stream length.
    """

    sample_rate: float = DEFAULT_SAMPLE_RATE
    f_low: float = 500.0
    f_high: float = 5_500.0
    n_samples: int = 2**16

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if not 0 <= self.f_low < self.f_high <= self.sample_rate / 2:
            raise ParameterError(
                "band must satisfy 0 <= f_low < f_high <= sample_rate/2, got "
                f"f_low={self.f_low}, f_high={self.f_high}, sample_rate={self.sample_rate}"
            )
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise ParameterError(f"n_samples must be an integer >= 2, got {self.n_samples}")

    @property
    def bandwidth(self) -> float:
        return self.f_high - self.f_low

    @property
    def correlation_time(self) -> float:
        """Reciprocal bandwidth, the spacing of effectively independent samples."""
        return 1.0 / self.bandwidth

    @property
    def samples_per_correlation_time(self) -> int:
        return max(1, int(round(self.sample_rate * self.correlation_time)))

    def with_length(self, n_samples: int) -> "BandSpec":
        return BandSpec(self.sample_rate, self.f_low, self.f_high, int(n_samples))


@dataclass(frozen=True, eq=False)
class SampleStream:
    """A uniformly sampled real signal.

    ``valid_from`` marks the first sample after any filter warm-up; analyses
    that assume stationarity should start there.
    """

    samples: np.ndarray
    sample_rate: float
    valid_from: int = 0

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ParameterError("samples must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise ParameterError("samples must be finite")
        if not self.sample_rate > 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if not 0 <= self.valid_from <= x.size:
            raise ParameterError(f"valid_from={self.valid_from} outside stream of length {x.size}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def valid(self) -> np.ndarray:
        return self.samples[self.valid_from:]

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Philox generator for ``seed``; a tuple selects an independent substream."""
    if isinstance(seed, (int, np.integer)):
        ss = np.random.SeedSequence(int(seed))
    else:
        key = [int(k) for k in seed]
        if not key:
            raise ParameterError("seed tuple must not be empty")
        ss = np.random.SeedSequence(key[0], spawn_key=tuple(key[1:]))
    return np.random.Generator(np.random.Philox(ss))


def band_mask(n_samples: int, sample_rate: float, f_low: float, f_high: float) -> np.ndarray:
    """Boolean mask over ``rfft`` bins lying inside ``[f_low, f_high]``."""
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / sample_rate)
    return (freqs >= f_low) & (freqs <= f_high)


def generate_band_limited_noise(spec: BandSpec, target_variance: float, seed: SeedLike) -> SampleStream:
    """Zero-mean Gaussian noise confined to ``[spec.f_low, spec.f_high]``.

    The delivered stream has sample variance exactly ``target_variance``.
    Identical arguments give bit-identical output.
    """
    if not target_variance > 0:
        raise ParameterError(f"target_variance must be positive, got {target_variance}")
    n = int(spec.n_samples)
    white = make_rng(seed).standard_normal(n)

    spectrum = np.fft.rfft(white)
    mask = band_mask(n, spec.sample_rate, spec.f_low, spec.f_high)
    if not mask.any():
        raise ParameterError("band contains no FFT bin at this length; increase n_samples")
    spectrum[~mask] = 0.0
    x = np.fft.irfft(spectrum, n)

    var = np.var(x)
    if var == 0.0:
        raise ParameterError("band retains no power at this length; increase n_samples")
    x *= np.sqrt(target_variance / var)
    return SampleStream(x, spec.sample_rate)
