"""Travelling-wave simulation of the Kish (KLJN) key exchange and a directional-wave attack on it."""

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    DegenerateDataError,
    KKDError,
    ParameterError,
    ShapeError,
    SingularConfigurationError,
    StateError,
)
from .noise_gen import BandSpec, SampleStream, generate_band_limited_noise, make_rng
from .line_model import (
    Covariance2,
    LineConfig,
    ReflectionPair,
    WavePair,
    injected_waves,
    loss_db_to_alpha,
    reflection_coefficient,
    reflection_coefficients,
    simulate_exchange,
    steady_state_waves,
    theoretical_covariance,
)
from .wave_probe import (
    ProbeConfig,
    ProbeState,
    TapSignals,
    decompose,
    high_pass,
    integrate_waves,
    lms_calibrate,
    measure_reflection,
    probe_frequency_response,
    synthesize_tap_signals,
)
from .detector import (
    Decision,
    GaussianModel,
    Hypothesis,
    Observation,
    decide,
    diagonal_baseline,
    fit_model,
    log_likelihood,
    posterior,
)
from .config import ExperimentConfig, load_config
from .kernels import BACKEND
