//! Python bindings: cue generation, agent simulation, trace synthesis and
//! detection, matching and unwrapping, curves, gain estimation and whole
//! experiment runs.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use stepsync_core::detect::{self, DetectorConfig, ThresholdHeight};
use stepsync_core::estimate::{self, FitWindow};
use stepsync_core::harness::{self, ExperimentConfig, HarnessError};
use stepsync_core::simulate::{self, builtin_presets, find_preset};
use stepsync_core::timing::{self, Direction, Foot, OnsetSeries, PerturbationSpec, Source};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_error(e: HarnessError) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn direction(name: &str) -> PyResult<Direction> {
    match name {
        "positive" => Ok(Direction::Positive),
        "negative" => Ok(Direction::Negative),
        other => Err(PyValueError::new_err(format!(
            "direction must be 'positive' or 'negative', got {other:?}"
        ))),
    }
}

fn fit_window(name: &str) -> PyResult<FitWindow> {
    match name {
        "post" => Ok(FitWindow::PostPerturbation),
        "whole" => Ok(FitWindow::WholeTrial),
        other => Err(PyValueError::new_err(format!("window must be 'post' or 'whole', got {other:?}"))),
    }
}

fn onsets(times: &[f64], source: Source) -> PyResult<OnsetSeries> {
    OnsetSeries::from_times(times, source).map_err(value_error)
}

/// Cue onsets with one perturbed interval.
#[pyclass(frozen, from_py_object, module = "stepsync")]
#[derive(Clone)]
pub struct CueSchedule {
    inner: timing::CueSchedule,
}

#[pymethods]
impl CueSchedule {
    /// Builds a schedule from recorded cue onset times.
    #[staticmethod]
    #[pyo3(signature = (times, perturbed_step, direction="positive", magnitude=0.15, window=(10, 16)))]
    fn from_onsets(
        times: Vec<f64>,
        perturbed_step: usize,
        direction: &str,
        magnitude: f64,
        window: (usize, usize),
    ) -> PyResult<Self> {
        let perturbation = PerturbationSpec {
            direction: self::direction(direction)?,
            magnitude,
            window,
        };
        let inner = harness::cue_from_onsets(onsets(&times, Source::Cue)?, perturbation, perturbed_step)
            .map_err(harness_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn onsets(&self) -> Vec<f64> {
        self.inner.onsets().times()
    }

    #[getter]
    fn intervals(&self) -> Vec<f64> {
        self.inner.intervals().intervals().to_vec()
    }

    #[getter]
    fn nominal_isi(&self) -> f64 {
        self.inner.nominal_isi()
    }

    #[getter]
    fn perturbed_step(&self) -> usize {
        self.inner.perturbed_step()
    }

    #[getter]
    fn direction(&self) -> &'static str {
        self.inner.perturbation().direction.label()
    }

    fn __len__(&self) -> usize {
        self.inner.n_steps()
    }

    fn __repr__(&self) -> String {
        format!(
            "CueSchedule(n_steps={}, nominal_isi={}, perturbed_step={}, direction='{}')",
            self.inner.n_steps(),
            self.inner.nominal_isi(),
            self.inner.perturbed_step(),
            self.direction()
        )
    }
}

/// Phase-correction agent parameters, seconds.
#[pyclass(frozen, skip_from_py_object, module = "stepsync")]
#[derive(Clone)]
pub struct AgentParams {
    inner: simulate::PhaseCorrectionParams,
}

#[pymethods]
impl AgentParams {
    #[new]
    #[pyo3(signature = (alpha, timekeeper_mean, timekeeper_sd=0.0, motor_mean=0.0, motor_sd=0.0))]
    fn new(alpha: f64, timekeeper_mean: f64, timekeeper_sd: f64, motor_mean: f64, motor_sd: f64) -> PyResult<Self> {
        let inner = simulate::PhaseCorrectionParams {
            alpha,
            timekeeper_mean,
            timekeeper_sd,
            motor_mean,
            motor_sd,
        };
        inner.validate().map_err(value_error)?;
        Ok(Self { inner })
    }

    /// Parameters of a built-in preset at the given tempo.
    #[staticmethod]
    fn preset(name: &str, nominal_isi: f64) -> PyResult<Self> {
        let presets = builtin_presets();
        let preset = find_preset(&presets, name)
            .ok_or_else(|| PyValueError::new_err(format!("no preset named {name:?}")))?;
        Ok(Self {
            inner: preset.params_for(nominal_isi),
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn timekeeper_mean(&self) -> f64 {
        self.inner.timekeeper_mean
    }

    #[getter]
    fn timekeeper_sd(&self) -> f64 {
        self.inner.timekeeper_sd
    }

    #[getter]
    fn motor_mean(&self) -> f64 {
        self.inner.motor_mean
    }

    #[getter]
    fn motor_sd(&self) -> f64 {
        self.inner.motor_sd
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "AgentParams(alpha={}, timekeeper_mean={}, timekeeper_sd={}, motor_mean={}, motor_sd={})",
            p.alpha, p.timekeeper_mean, p.timekeeper_sd, p.motor_mean, p.motor_sd
        )
    }
}

/// Participant onsets paired with cue onsets.
#[pyclass(frozen, from_py_object, module = "stepsync")]
#[derive(Clone)]
pub struct AsynchronySeries {
    inner: timing::AsynchronySeries,
}

#[pymethods]
impl AsynchronySeries {
    /// Participant minus cue time for every pair, seconds.
    #[getter]
    fn asynchronies(&self) -> Vec<f64> {
        self.inner.asynchronies()
    }

    /// 1-based cue step of every pair.
    #[getter]
    fn cue_steps(&self) -> Vec<usize> {
        self.inner.pairs().iter().map(|p| p.cue_step).collect()
    }

    #[getter]
    fn participant_steps(&self) -> Vec<usize> {
        self.inner.pairs().iter().map(|p| p.participant_step).collect()
    }

    #[getter]
    fn gaps(&self) -> Vec<usize> {
        self.inner.gaps().to_vec()
    }

    #[getter]
    fn breaks(&self) -> Vec<usize> {
        self.inner.breaks().to_vec()
    }

    #[getter]
    fn unwrap_applied(&self) -> bool {
        self.inner.unwrap_applied()
    }

    #[getter]
    fn discontinuity_count(&self) -> usize {
        self.inner.discontinuity_count()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "AsynchronySeries(pairs={}, gaps={}, breaks={}, unwrap_applied={})",
            self.inner.len(),
            self.inner.gaps().len(),
            self.inner.breaks().len(),
            self.inner.unwrap_applied()
        )
    }
}

/// Relative asynchrony at offsets -4..=6 around the perturbation.
#[pyclass(frozen, skip_from_py_object, module = "stepsync")]
#[derive(Clone)]
pub struct Curve {
    inner: timing::RelativeAsynchronyCurve,
}

#[pymethods]
impl Curve {
    #[getter]
    fn offsets(&self) -> Vec<i64> {
        timing::RelativeAsynchronyCurve::offsets().collect()
    }

    #[getter]
    fn values(&self) -> Vec<Option<f64>> {
        self.inner.values.clone()
    }

    #[getter]
    fn baseline_mean(&self) -> f64 {
        self.inner.baseline_mean
    }

    #[getter]
    fn baseline_n(&self) -> usize {
        self.inner.baseline_n
    }

    fn at(&self, offset: i64) -> Option<f64> {
        self.inner.at(offset)
    }

    fn __repr__(&self) -> String {
        format!("Curve(values={:?})", self.inner.values)
    }
}

/// Result of a correction-gain fit.
#[pyclass(frozen, skip_from_py_object, module = "stepsync")]
#[derive(Clone)]
pub struct Estimate {
    inner: estimate::PhaseCorrectionEstimate,
}

#[pymethods]
impl Estimate {
    #[getter]
    fn alpha_hat(&self) -> f64 {
        self.inner.alpha_hat
    }

    #[getter]
    fn timekeeper_mean(&self) -> f64 {
        self.inner.timekeeper_mean
    }

    #[getter]
    fn residual_variance(&self) -> f64 {
        self.inner.residual_variance
    }

    /// `(timekeeper_variance, motor_variance)` or `None`.
    #[getter]
    fn noise_decomposition(&self) -> Option<(f64, f64)> {
        self.inner
            .noise_decomposition
            .map(|n| (n.timekeeper_variance, n.motor_variance))
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points
    }

    #[getter]
    fn bound_active(&self) -> bool {
        self.inner.bound_active
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    fn __repr__(&self) -> String {
        format!(
            "Estimate(alpha_hat={}, n_points={}, bound_active={})",
            self.inner.alpha_hat, self.inner.n_points, self.inner.bound_active
        )
    }
}

/// Two-channel heel-height trace.
#[pyclass(frozen, skip_from_py_object, module = "stepsync")]
#[derive(Clone)]
pub struct Trace {
    inner: simulate::MarkerTrace,
}

impl Trace {
    fn channel(&self, foot: Foot) -> Vec<f64> {
        self.inner.channel(foot).map(|c| c.heights.clone()).unwrap_or_default()
    }
}

#[pymethods]
impl Trace {
    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.sample_rate
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.channels.first().map(|c| c.times.clone()).unwrap_or_default()
    }

    #[getter]
    fn left(&self) -> Vec<f64> {
        self.channel(Foot::Left)
    }

    #[getter]
    fn right(&self) -> Vec<f64> {
        self.channel(Foot::Right)
    }

    fn __repr__(&self) -> String {
        format!("Trace(sample_rate={}, samples={})", self.inner.sample_rate, self.times().len())
    }
}

#[pyfunction]
fn preset_names() -> Vec<String> {
    builtin_presets().into_iter().map(|p| p.name).collect()
}

#[pyfunction]
#[pyo3(signature = (nominal_isi, n_steps=30, direction="positive", magnitude=0.15, window=(10, 16), jitter_sd=0.0, seed=0))]
fn generate_cue_schedule(
    nominal_isi: f64,
    n_steps: usize,
    direction: &str,
    magnitude: f64,
    window: (usize, usize),
    jitter_sd: f64,
    seed: u64,
) -> PyResult<CueSchedule> {
    let spec = PerturbationSpec {
        direction: self::direction(direction)?,
        magnitude,
        window,
    };
    let inner = simulate::generate_cue_schedule(nominal_isi, n_steps, spec, jitter_sd, seed).map_err(value_error)?;
    Ok(CueSchedule { inner })
}

/// Returns `(participant_onset_times, true_asynchronies)`.
#[pyfunction]
#[pyo3(signature = (params, cue, initial_asynchrony=0.0, seed=0))]
fn simulate_agent(
    params: &AgentParams,
    cue: &CueSchedule,
    initial_asynchrony: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, AsynchronySeries)> {
    let (onsets, truth) =
        simulate::simulate_agent(&params.inner, &cue.inner, initial_asynchrony, seed).map_err(value_error)?;
    Ok((onsets.times(), AsynchronySeries { inner: truth }))
}

#[pyfunction]
fn match_onsets(participant: Vec<f64>, cue: Vec<f64>) -> PyResult<AsynchronySeries> {
    let inner = timing::match_onsets(&onsets(&participant, Source::Participant)?, &onsets(&cue, Source::Cue)?);
    Ok(AsynchronySeries { inner })
}

#[pyfunction]
fn unwrap_asynchronies(series: &AsynchronySeries, nominal_isi: f64) -> PyResult<AsynchronySeries> {
    if !(nominal_isi > 0.0 && nominal_isi.is_finite()) {
        return Err(PyValueError::new_err("nominal_isi must be positive"));
    }
    Ok(AsynchronySeries {
        inner: timing::unwrap_asynchronies(&series.inner, nominal_isi),
    })
}

#[pyfunction]
#[pyo3(signature = (series, perturbed_step, exclude_first=3))]
fn relative_asynchrony(series: &AsynchronySeries, perturbed_step: usize, exclude_first: usize) -> PyResult<Curve> {
    let inner = timing::relative_asynchrony(&series.inner, perturbed_step, exclude_first).map_err(value_error)?;
    Ok(Curve { inner })
}

#[pyfunction]
#[pyo3(signature = (series, cue, window="post"))]
fn fit_phase_correction(series: &AsynchronySeries, cue: &CueSchedule, window: &str) -> PyResult<Estimate> {
    let inner = estimate::fit_phase_correction(&series.inner, &cue.inner, fit_window(window)?).map_err(value_error)?;
    Ok(Estimate { inner })
}

/// One gain for several `(series, cue)` trials.
#[pyfunction]
#[pyo3(signature = (trials, window="post"))]
fn fit_phase_correction_pooled(trials: Vec<(AsynchronySeries, CueSchedule)>, window: &str) -> PyResult<Estimate> {
    let inner = estimate::fit_phase_correction_pooled(trials.iter().map(|(s, c)| (&s.inner, &c.inner)), fit_window(window)?)
        .map_err(value_error)?;
    Ok(Estimate { inner })
}

#[pyfunction]
fn percent_correction(curve: &Curve) -> PyResult<f64> {
    estimate::percent_correction(&curve.inner).map_err(value_error)
}

/// Steps alternate feet, starting with the left.
#[pyfunction]
#[pyo3(signature = (onset_times, sample_rate=100.0, step_amplitude=0.12, step_duration=0.15, noise_sd=0.001, seed=0))]
fn synthesize_trace(
    onset_times: Vec<f64>,
    sample_rate: f64,
    step_amplitude: f64,
    step_duration: f64,
    noise_sd: f64,
    seed: u64,
) -> PyResult<Trace> {
    let params = simulate::TraceParams {
        sample_rate,
        step_amplitude,
        step_duration,
        noise_sd,
    };
    let inner = simulate::synthesize_trace(&onsets(&onset_times, Source::Participant)?, &params, seed)
        .map_err(value_error)?;
    Ok(Trace { inner })
}

/// Onset times found in a trace. `threshold` is an absolute height in metres;
/// by default it is 20% of the median step peak.
#[pyfunction]
#[pyo3(signature = (trace, threshold=None, hysteresis_fraction=0.25, refractory=0.15, interpolate=true))]
fn detect_onsets(
    trace: &Trace,
    threshold: Option<f64>,
    hysteresis_fraction: f64,
    refractory: f64,
    interpolate: bool,
) -> PyResult<Vec<f64>> {
    let config = DetectorConfig {
        threshold: threshold.map_or(ThresholdHeight::PeakFraction(0.2), ThresholdHeight::Fixed),
        hysteresis_fraction,
        refractory,
        interpolate,
    };
    let found = detect::detect_onsets(&trace.inner, &config, Source::Participant).map_err(value_error)?;
    Ok(found.times())
}

fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Full matched-and-fitted analysis of one trial, as a dict.
#[pyfunction]
#[pyo3(signature = (participant, cue, exclude_first=3, max_discontinuities=2, window="post"))]
fn analyze_trial<'py>(
    py: Python<'py>,
    participant: Vec<f64>,
    cue: &CueSchedule,
    exclude_first: usize,
    max_discontinuities: usize,
    window: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let options = harness::AnalysisOptions {
        exclude_first,
        max_discontinuities,
        fit_window: fit_window(window)?,
    };
    let result = harness::analyze_trial(&onsets(&participant, Source::Participant)?, &cue.inner, &options);
    to_python(py, &result)
}

/// Runs a whole experiment. `config` is TOML text (defaults when omitted);
/// returns the results document as a dict.
#[pyfunction]
#[pyo3(signature = (config=None, seed=None, workers=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: Option<&str>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut config = match config {
        Some(text) => ExperimentConfig::from_toml_str(text).map_err(harness_error)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(workers) = workers {
        config.workers = workers;
    }
    let report = py.detach(|| harness::run_experiment(&config)).map_err(harness_error)?;
    to_python(py, &report)
}

#[pymodule]
fn stepsync(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<CueSchedule>()?;
    m.add_class::<AgentParams>()?;
    m.add_class::<AsynchronySeries>()?;
    m.add_class::<Curve>()?;
    m.add_class::<Estimate>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(generate_cue_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_agent, m)?)?;
    m.add_function(wrap_pyfunction!(match_onsets, m)?)?;
    m.add_function(wrap_pyfunction!(unwrap_asynchronies, m)?)?;
    m.add_function(wrap_pyfunction!(relative_asynchrony, m)?)?;
    m.add_function(wrap_pyfunction!(fit_phase_correction, m)?)?;
    m.add_function(wrap_pyfunction!(fit_phase_correction_pooled, m)?)?;
    m.add_function(wrap_pyfunction!(percent_correction, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_trace, m)?)?;
    m.add_function(wrap_pyfunction!(detect_onsets, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("SCHEMA_VERSION", harness::SCHEMA_VERSION)?;
    Ok(())
}

