"""Monte-Carlo experiments: BER curves, LLR histograms, probe validation, covariance checks.

Trials are processed in fixed-size chunks.  Each chunk draws from its own
random substream keyed by ``(seed, experiment, loss, averaging time, chunk)``,
so results do not depend on the number of worker processes and adding a
grid point leaves the others unchanged.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import detector
from .config import ExperimentConfig
from .detector import GaussianModel, Hypothesis
from .errors import CalibrationError
from .line_model import (
    LineConfig,
    WavePair,
    reflection_coefficient,
    reflection_coefficients,
    simulate_exchange,
    theoretical_covariance,
    Covariance2,
)
from .noise_gen import SampleStream, generate_band_limited_noise, make_rng
from .wave_probe import (
    ProbeConfig,
    ProbeState,
    decompose,
    integrate_waves,
    lms_calibrate,
    measure_reflection,
    probe_frequency_response,
    synthesize_tap_signals,
)

CHUNK_TRIALS = 10_000

# substream tags
_BER, _HIST, _COV, _PROBE_SETUP, _PROBE_TRIALS, _CALIB, _FIXTURE, _MATCHED = range(1, 9)

BER_COLUMNS = ("loss_db", "avg_time_corr_units", "trials", "errors", "ber", "ci95_low", "ci95_high")


def loss_key(loss_db: float) -> int:
    """Integer key of a loss value, in micro-dB."""
    return int(round(loss_db * 1e6))


def wilson_interval(errors: int, trials: int, level: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    ci = stats.binomtest(int(errors), int(trials)).proportion_ci(level, method="wilson")
    return float(ci.low), float(ci.high)


def line_config(cfg: ExperimentConfig, hypothesis: Hypothesis, loss_db: float) -> LineConfig:
    """C0 puts the high resistor at Alice's end, C1 at Bob's."""
    if hypothesis == Hypothesis.C0:
        ra, rb = cfg.r_high, cfg.r_low
    else:
        ra, rb = cfg.r_low, cfg.r_high
    return LineConfig.from_loss_db(ra, rb, cfg.z0, loss_db)


def analytic_models(cfg: ExperimentConfig, loss_db: float):
    """Closed-form Gaussian models for (C0, C1) at one loss."""
    out = []
    for hyp in Hypothesis:
        lc = line_config(cfg, hyp, loss_db)
        cov = theoretical_covariance(reflection_coefficients(lc), lc.alpha, lc.noise_scale)
        out.append(GaussianModel.from_covariance(cov))
    return tuple(out)


def _chunks(trials: int):
    full, rest = divmod(trials, CHUNK_TRIALS)
    return [CHUNK_TRIALS] * full + ([rest] if rest else [])


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _stack_by_hypothesis(h, m, pairs0, pairs1):
    x = np.empty((h.size, m, 2))
    x[h == 0] = pairs0.reshape(-1, m, 2)
    x[h == 1] = pairs1.reshape(-1, m, 2)
    return x


# ---------------------------------------------------------------- BER


def _analytic_chunk(task):
    models, m, n, key = task
    rng = make_rng(key)
    h = rng.integers(0, 2, n)
    n0 = int(np.count_nonzero(h == 0))
    pairs0 = models[0].sample(rng, (n0 * m,))
    pairs1 = models[1].sample(rng, ((n - n0) * m,))
    llr = detector.batch_llr(models[0], models[1], _stack_by_hypothesis(h, m, pairs0, pairs1))
    decided = np.where(llr >= 0, 0, 1)
    return int(np.count_nonzero(decided != h))


class ProbeChannel:
    """Noise -> line -> delay-line taps -> calibrated decomposition -> decimated pairs."""

    def __init__(self, cfg: ExperimentConfig, loss_db: float, probe: ProbeConfig, state: ProbeState):
        self.cfg = cfg
        self.loss_db = loss_db
        self.probe = probe
        self.state = state
        self.stride = cfg.band.samples_per_correlation_time

    def waves(self, hypothesis: Hypothesis, key, n_samples: int | None = None) -> WavePair:
        lc = line_config(self.cfg, hypothesis, self.loss_db)
        band = self.cfg.band if n_samples is None else self.cfg.band.with_length(n_samples)
        true = simulate_exchange(lc, band, key)
        tap = synthesize_tap_signals(true, self.probe)
        return integrate_waves(decompose(tap, self.state, self.probe))

    def pairs(self, hypothesis: Hypothesis, count: int, key) -> np.ndarray:
        """``count`` pairs one correlation time apart, drawn from fresh blocks as needed."""
        out, have, block = [], 0, 0
        while have < count:
            # short requests get a short block: warm-up margin plus what is still needed
            length = min(self.cfg.block_samples, (count - have + 1) * self.stride + 2**13)
            w = self.waves(hypothesis, (*key, block), length)
            stop = len(w.v_plus) - self.stride  # last samples see zero-filled advanced taps
            p = w.as_pairs(self.stride)[: (stop - w.valid_from) // self.stride]
            out.append(p)
            have += p.shape[0]
            block += 1
        return np.concatenate(out)[:count] if out else np.empty((0, 2))

    def fit(self, hypothesis: Hypothesis, key) -> GaussianModel:
        """Setup-phase model fitted on every valid sample of one block."""
        w = self.waves(hypothesis, key)
        return detector.fit_model(w.as_pairs()[: -self.stride])


def probe_config_for(cfg: ExperimentConfig) -> ProbeConfig:
    return ProbeConfig(sample_rate=cfg.sample_rate, band_high=cfg.f_high)


def calibrate_probe(cfg: ExperimentConfig, probe: ProbeConfig | None = None, length: int = 2**17):
    """Calibrate on a right-travelling-only fixture (source at one port, matched far end)."""
    probe = probe or probe_config_for(cfg)
    band = cfg.band.with_length(length)
    v_plus = generate_band_limited_noise(band, 1.0, (cfg.seed, _CALIB))
    waves = WavePair(v_plus, SampleStream(np.zeros(length), band.sample_rate))
    return probe, lms_calibrate(synthesize_tap_signals(waves, probe), probe)


def _probe_chunk(task):
    channel, models, m, n, key = task
    rng = make_rng(key)
    h = rng.integers(0, 2, n)
    n0 = int(np.count_nonzero(h == 0))
    pairs0 = channel.pairs(Hypothesis.C0, n0 * m, (*key, 0))
    pairs1 = channel.pairs(Hypothesis.C1, (n - n0) * m, (*key, 1))
    llr = detector.batch_llr(models[0], models[1], _stack_by_hypothesis(h, m, pairs0, pairs1))
    decided = np.where(llr >= 0, 0, 1)
    return int(np.count_nonzero(decided != h))


@dataclass
class BerCurve:
    rows: list = field(default_factory=list)

    columns = BER_COLUMNS

    def lookup(self, loss_db: float, avg_time: int) -> dict:
        for r in self.rows:
            if r["loss_db"] == loss_db and r["avg_time_corr_units"] == avg_time:
                return r
        raise KeyError((loss_db, avg_time))


def run_ber_experiment(cfg: ExperimentConfig) -> BerCurve:
    """Eavesdropper bit-error rate over the (loss, averaging time) grid."""
    probe_setup = None
    if cfg.mode == "probe":
        probe_setup = calibrate_probe(cfg)

    curve = BerCurve()
    for loss in sorted(set(cfg.losses_db)):
        lk = loss_key(loss)
        if probe_setup is None:
            models = analytic_models(cfg, loss)
        else:
            channel = ProbeChannel(cfg, loss, *probe_setup)
            models = tuple(channel.fit(h, (cfg.seed, _PROBE_SETUP, lk, int(h))) for h in Hypothesis)
        for m in sorted(set(cfg.averaging_times)):
            tasks = []
            for c, n in enumerate(_chunks(cfg.trials)):
                if probe_setup is None:
                    tasks.append((models, m, n, (cfg.seed, _BER, lk, m, c)))
                else:
                    tasks.append((channel, models, m, n, (cfg.seed, _PROBE_TRIALS, lk, m, c)))
            fn = _analytic_chunk if probe_setup is None else _probe_chunk
            errors = sum(_map(fn, tasks, cfg.workers))
            low, high = wilson_interval(errors, cfg.trials)
            curve.rows.append({
                "loss_db": loss,
                "avg_time_corr_units": m,
                "trials": cfg.trials,
                "errors": errors,
                "ber": errors / cfg.trials,
                "ci95_low": low,
                "ci95_high": high,
            })
    return curve


def curves_agree(a: BerCurve, b: BerCurve, level: float = 0.95):
    """Two-proportion comparison at every shared grid point, Bonferroni-adjusted.

    Returns ``(agree, worst_z, z_crit)``.  The family-wise coverage over all
    grid points is ``level``.
    """
    keys = [(r["loss_db"], r["avg_time_corr_units"]) for r in a.rows]
    z_crit = stats.norm.isf((1 - level) / (2 * len(keys)))
    worst = 0.0
    for key in keys:
        ra, rb = a.lookup(*key), b.lookup(*key)
        na, nb = ra["trials"], rb["trials"]
        pooled = (ra["errors"] + rb["errors"]) / (na + nb)
        se = math.sqrt(max(pooled * (1 - pooled), 0.0) * (1 / na + 1 / nb))
        diff = abs(ra["ber"] - rb["ber"])
        z = 0.0 if diff == 0 else (math.inf if se == 0 else diff / se)
        worst = max(worst, z)
    return worst <= z_crit, worst, float(z_crit)


# ---------------------------------------------------------------- LLR histograms


@dataclass
class LlrHistogram:
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    columns = ("loss_db", "correlated", "hypothesis", "bin_low", "bin_high", "count")
    summary_columns = ("loss_db", "correlated", "pairs", "trials", "bayes_error", "ber", "mirror_ks")


def bayes_error(llr0: np.ndarray, llr1: np.ndarray, bins: int) -> tuple:
    """Overlap of two empirical distributions as a Bayes error (0.5 = identical)."""
    edges = np.histogram_bin_edges(np.concatenate([llr0, llr1]), bins=bins)
    c0, _ = np.histogram(llr0, edges)
    c1, _ = np.histogram(llr1, edges)
    overlap = 0.5 * float(np.minimum(c0 / llr0.size, c1 / llr1.size).sum())
    return overlap, edges, c0, c1


def run_llr_histogram(cfg: ExperimentConfig, correlated: bool) -> LlrHistogram:
    """Per-hypothesis LLR distributions with full or decorrelated measurements.

    With ``correlated=False`` the cross-covariance is removed from both the
    models and the data generating them, as when the two waves are recorded
    separately and only their marginal statistics are available.
    """
    out = LlrHistogram()
    m = cfg.hist_pairs
    for loss in sorted(set(cfg.losses_db)):
        models = analytic_models(cfg, loss)
        if not correlated:
            models = tuple(detector.diagonal_baseline(x) for x in models)
        llrs = []
        for hyp in Hypothesis:
            parts = []
            for c, n in enumerate(_chunks(cfg.trials)):
                rng = make_rng((cfg.seed, _HIST, loss_key(loss), int(correlated), int(hyp), c))
                parts.append(detector.batch_llr(models[0], models[1], models[hyp].sample(rng, (n, m))))
            llrs.append(np.concatenate(parts))
        overlap, edges, c0, c1 = bayes_error(llrs[0], llrs[1], cfg.hist_bins)
        errors = np.count_nonzero(llrs[0] < 0) + np.count_nonzero(llrs[1] >= 0)
        ks = stats.ks_2samp(llrs[0], -llrs[1]).statistic
        out.summary.append({
            "loss_db": loss,
            "correlated": correlated,
            "pairs": m,
            "trials": cfg.trials,
            "bayes_error": overlap,
            "ber": errors / (2 * cfg.trials),
            "mirror_ks": float(ks),
        })
        for hyp, counts in zip(Hypothesis, (c0, c1)):
            for lo, hi, cnt in zip(edges[:-1], edges[1:], counts):
                out.rows.append({
                    "loss_db": loss,
                    "correlated": correlated,
                    "hypothesis": hyp.name,
                    "bin_low": float(lo),
                    "bin_high": float(hi),
                    "count": int(cnt),
                })
    return out


# ---------------------------------------------------------------- probe validation


@dataclass
class Check:
    name: str
    value: float
    expected: float
    tolerance: float
    passed: bool


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    columns = ("name", "value", "expected", "tolerance", "passed")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def rows(self):
        return [vars(c) for c in self.checks]

    def add(self, name, value, expected, tolerance, passed=None):
        if passed is None:
            passed = bool(abs(value - expected) <= tolerance)
        self.checks.append(Check(name, float(value), float(expected), float(tolerance), bool(passed)))


def reflectometer_fixture(cfg: ExperimentConfig, gamma: float, length: int, key) -> WavePair:
    """Incident noise and its reflection from a load with coefficient ``gamma``."""
    band = cfg.band.with_length(length)
    incident = generate_band_limited_noise(band, 1.0, key)
    return WavePair(incident, SampleStream(gamma * incident.samples, band.sample_rate))


def run_probe_validation(cfg: ExperimentConfig) -> ValidationReport:
    """Calibrate, measure reflectometer fixtures and sweep the dv/dx response."""
    report = ValidationReport()
    probe = probe_config_for(cfg)
    try:
        probe, state = calibrate_probe(cfg, probe)
    except CalibrationError as exc:
        gamma = exc.measured_gamma if exc.measured_gamma is not None else math.nan
        report.add("calibration_gamma", gamma, 0.0, probe.calib_threshold, passed=False)
        return report
    report.add("calibration_gamma", state.measured_gamma, 0.0, probe.calib_threshold,
               passed=abs(state.measured_gamma) < probe.calib_threshold)

    fixtures = [
        ("open", math.inf),
        ("short", 0.0),
        ("matched", cfg.z0),
        ("r_low", cfg.r_low),
        ("r_high", cfg.r_high),
    ]
    for i, (name, r) in enumerate(fixtures):
        gamma = reflection_coefficient(r, cfg.z0)
        waves = reflectometer_fixture(cfg, gamma, 2**16, (cfg.seed, _FIXTURE, i))
        measured = measure_reflection(decompose(synthesize_tap_signals(waves, probe), state, probe))
        report.add(f"reflection_{name}", measured, gamma, 0.05)

    freqs = np.arange(500.0, cfg.f_high + 1.0, 500.0)
    leak = cfg.probe_dc_leakage
    comp = probe_frequency_response(probe, freqs, dc_leakage=leak, compensate=True)
    f = np.array([p.frequency for p in comp])
    mag = np.array([p.magnitude for p in comp])
    r2 = stats.linregress(f, mag).rvalue ** 2
    report.add("dvdx_linearity_r2", r2, 1.0, 0.01, passed=r2 > 0.99)
    mid = probe_frequency_response(probe, [0.5 * (cfg.f_low + cfg.f_high)], dc_leakage=leak,
                                   compensate=True)[0]
    report.add("dvdx_phase_mid_deg", mid.phase, 90.0, 5.0)
    low, high = probe_frequency_response(probe, [1000.0, 2000.0], dc_leakage=leak, compensate=True)
    report.add("dvdx_magnitude_doubling", high.magnitude / low.magnitude, 2.0, 0.04)
    return report


# ---------------------------------------------------------------- covariance check


@dataclass
class CovarianceReport:
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    tolerance: float = 0.02

    columns = ("loss_db", "hypothesis", "c_pp", "c_mm", "c_pm", "c_pp_theory", "c_mm_theory",
               "c_pm_theory", "max_rel_dev", "passed")

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.rows) and all(c.passed for c in self.checks)


def run_covariance_check(cfg: ExperimentConfig) -> CovarianceReport:
    """Compare simulated (v+, v-) covariances with the closed form."""
    report = CovarianceReport()
    band = cfg.band.with_length(cfg.covariance_pairs)
    for loss in sorted(set(cfg.losses_db)):
        empirical = {}
        for hyp in Hypothesis:
            lc = line_config(cfg, hyp, loss)
            waves = simulate_exchange(lc, band, (cfg.seed, _COV, loss_key(loss), int(hyp)))
            emp = Covariance2.empirical(waves.as_pairs())
            th = theoretical_covariance(reflection_coefficients(lc), lc.alpha, lc.noise_scale)
            dev = emp.max_relative_deviation(th)
            empirical[hyp] = emp
            report.rows.append({
                "loss_db": loss,
                "hypothesis": hyp.name,
                "c_pp": emp.c_pp,
                "c_mm": emp.c_mm,
                "c_pm": emp.c_pm,
                "c_pp_theory": th.c_pp,
                "c_mm_theory": th.c_mm,
                "c_pm_theory": th.c_pm,
                "max_rel_dev": dev,
                "passed": bool(dev < report.tolerance),
            })
        if loss == 0.0:
            swap = empirical[Hypothesis.C0].max_relative_deviation(empirical[Hypothesis.C1].swapped())
            check = Check("lossless_swap_symmetry", swap, 0.0, report.tolerance, swap < report.tolerance)
            report.checks.append(check)

    matched = simulate_exchange(LineConfig(cfg.z0, cfg.z0, cfg.z0, 1.0), band, (cfg.seed, _MATCHED))
    rho = Covariance2.empirical(matched.as_pairs()).correlation
    report.checks.append(Check("matched_correlation", rho, 0.0, 0.02, abs(rho) < 0.02))
    return report
