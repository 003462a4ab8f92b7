use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectorConfig, ThresholdHeight};
use crate::estimate::FitWindow;
use crate::simulate::{builtin_presets, find_preset, AgentPreset, TraceParams, DEFAULT_STEPS};
use crate::timing::{Direction, PerturbationSpec, DEFAULT_EXCLUDE_FIRST};

use super::{HarnessError, SCHEMA_VERSION};

/// Tempos with an inter-step interval below this are the "Fast" class.
pub const FAST_TEMPO_BELOW: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Analyse the simulated onsets directly.
    Exact,
    /// Render heel-marker traces for both agents and detect onsets from them.
    Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub magnitude: f64,
    pub window: (usize, usize),
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            magnitude: PerturbationSpec::DEFAULT_MAGNITUDE,
            window: PerturbationSpec::DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub participant_rate: f64,
    pub cue_rate: f64,
    pub step_amplitude: f64,
    pub step_duration: f64,
    pub noise_sd: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            participant_rate: 100.0,
            cue_rate: 75.0,
            step_amplitude: 0.12,
            step_duration: 0.15,
            noise_sd: 0.001,
        }
    }
}

impl TraceConfig {
    pub fn params(&self, sample_rate: f64) -> TraceParams {
        TraceParams {
            sample_rate,
            step_amplitude: self.step_amplitude,
            step_duration: self.step_duration,
            noise_sd: self.noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSettings {
    /// Threshold as a fraction of the median step peak.
    pub threshold_fraction: f64,
    pub hysteresis_fraction: f64,
    /// Refractory period as a fraction of the nominal inter-step interval.
    pub refractory_fraction: f64,
    pub interpolate: bool,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        let d = DetectorConfig::default();
        Self {
            threshold_fraction: 0.2,
            hysteresis_fraction: d.hysteresis_fraction,
            refractory_fraction: 0.4,
            interpolate: d.interpolate,
        }
    }
}

impl DetectorSettings {
    pub fn config(&self, nominal_isi: f64) -> DetectorConfig {
        DetectorConfig {
            threshold: ThresholdHeight::PeakFraction(self.threshold_fraction),
            hysteresis_fraction: self.hysteresis_fraction,
            refractory: self.refractory_fraction * nominal_isi,
            interpolate: self.interpolate,
        }
    }
}

/// Full description of a simulated experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    /// Nominal cue inter-step intervals, seconds.
    pub tempos: Vec<f64>,
    /// Modality names. Each resolves to the preset `"{modality}-Fast"` or
    /// `"{modality}-Slow"` by tempo class, or to a preset named exactly
    /// `modality` when no such tempo-specific preset exists.
    pub modalities: Vec<String>,
    pub directions: Vec<Direction>,
    pub trials_per_cell: usize,
    pub n_steps: usize,
    pub pipeline: Pipeline,
    pub exclude_first: usize,
    /// Trials with more gaps plus unwrap breaks than this are excluded.
    pub max_discontinuities: usize,
    pub fit_window: FitWindow,
    /// SD of independent Gaussian jitter on every cue interval, seconds.
    pub cue_jitter_sd: f64,
    pub initial_asynchrony: f64,
    /// 0 uses every available core.
    pub workers: usize,
    pub perturbation: PerturbationConfig,
    pub trace: TraceConfig,
    pub detector: DetectorSettings,
    /// Extra presets, consulted before the built-in ones.
    pub presets: Vec<AgentPreset>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed: 0,
            tempos: vec![0.4, 0.8],
            modalities: vec!["VisualOnly".into(), "AuditoryVisual".into()],
            directions: vec![Direction::Positive, Direction::Negative],
            trials_per_cell: 5,
            n_steps: DEFAULT_STEPS,
            pipeline: Pipeline::Exact,
            exclude_first: DEFAULT_EXCLUDE_FIRST,
            max_discontinuities: 2,
            fit_window: FitWindow::PostPerturbation,
            cue_jitter_sd: 0.005,
            initial_asynchrony: 0.0,
            workers: 0,
            perturbation: PerturbationConfig::default(),
            trace: TraceConfig::default(),
            detector: DetectorSettings::default(),
            presets: Vec::new(),
        }
    }
}

/// One validation failure, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Condition cell of the design: one agent preset at one tempo and direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub modality: String,
    pub preset: String,
    pub tempo: f64,
    pub direction: Direction,
}

impl Cell {
    /// Stable identifier, also used as a file stem and as seed material.
    pub fn id(&self) -> String {
        format!("{}_{}s_{}", self.preset, self.tempo, self.direction.label())
    }
}

pub fn tempo_class(tempo: f64) -> &'static str {
    if tempo < FAST_TEMPO_BELOW {
        "Fast"
    } else {
        "Slow"
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: Self =
            toml::from_str(text).map_err(|e| HarnessError::ConfigParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn all_presets(&self) -> Vec<AgentPreset> {
        let mut presets = self.presets.clone();
        presets.extend(builtin_presets());
        presets
    }

    fn resolve_preset(&self, presets: &[AgentPreset], modality: &str, tempo: f64) -> Option<AgentPreset> {
        let specific = format!("{modality}-{}", tempo_class(tempo));
        find_preset(presets, &specific)
            .or_else(|| find_preset(presets, modality))
            .cloned()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut issues = Vec::new();
        let mut issue = |path: String, message: String| issues.push(ConfigIssue { path, message });

        if self.schema_version != SCHEMA_VERSION {
            issue(
                "schema_version".into(),
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        if self.tempos.is_empty() {
            issue("tempos".into(), "at least one tempo is required".into());
        }
        for (i, &tempo) in self.tempos.iter().enumerate() {
            if !(tempo > 0.0 && tempo.is_finite()) {
                issue(format!("tempos[{i}]"), format!("tempo {tempo} must be positive"));
            }
        }
        if self.modalities.is_empty() {
            issue("modalities".into(), "at least one modality is required".into());
        }
        if self.directions.is_empty() {
            issue("directions".into(), "at least one direction is required".into());
        }
        if self.trials_per_cell == 0 {
            issue("trials_per_cell".into(), "must be at least 1".into());
        }
        let presets = self.all_presets();
        for (i, modality) in self.modalities.iter().enumerate() {
            for &tempo in self.tempos.iter().filter(|t| **t > 0.0) {
                if self.resolve_preset(&presets, modality, tempo).is_none() {
                    issue(
                        format!("modalities[{i}]"),
                        format!(
                            "no preset named {modality}-{} or {modality}",
                            tempo_class(tempo)
                        ),
                    );
                }
            }
        }
        for (i, preset) in self.presets.iter().enumerate() {
            if let Err(e) = preset.params_for(1.0).validate() {
                issue(format!("presets[{i}]"), e.to_string());
            }
        }
        let (lo, hi) = self.perturbation.window;
        let spec = PerturbationSpec {
            direction: Direction::Positive,
            magnitude: self.perturbation.magnitude,
            window: (lo, hi),
        };
        if let Err(e) = spec.validate(self.n_steps) {
            let path = match e {
                crate::timing::TimingError::InvalidMagnitude(_) => "perturbation.magnitude",
                _ => "perturbation.window",
            };
            issue(path.into(), e.to_string());
        } else if self.n_steps <= hi + 6 {
            issue(
                "n_steps".into(),
                format!("{} steps leave no room for 6 steps after step {hi}", self.n_steps),
            );
        }
        if lo <= self.exclude_first + 1 {
            issue(
                "exclude_first".into(),
                format!("excluding {} steps empties the baseline before step {lo}", self.exclude_first),
            );
        }
        if !(self.cue_jitter_sd >= 0.0 && self.cue_jitter_sd.is_finite()) {
            issue("cue_jitter_sd".into(), "must be finite and non-negative".into());
        }
        if !self.initial_asynchrony.is_finite() {
            issue("initial_asynchrony".into(), "must be finite".into());
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        for (name, value) in [
            ("trace.participant_rate", self.trace.participant_rate),
            ("trace.cue_rate", self.trace.cue_rate),
            ("trace.step_amplitude", self.trace.step_amplitude),
            ("trace.step_duration", self.trace.step_duration),
        ] {
            if !positive(value) {
                issue(name.into(), format!("{value} must be positive"));
            }
        }
        if !(self.trace.noise_sd >= 0.0 && self.trace.noise_sd.is_finite()) {
            issue("trace.noise_sd".into(), "must be finite and non-negative".into());
        }
        if self.pipeline == Pipeline::Detector {
            if let Some(&fastest) = self.tempos.iter().filter(|t| **t > 0.0).reduce(|a, b| if a < b { a } else { b }) {
                let shortest = fastest * (1.0 - self.perturbation.magnitude) - 4.0 * self.cue_jitter_sd;
                if self.trace.step_duration >= shortest {
                    issue(
                        "trace.step_duration".into(),
                        format!("{} s overlaps consecutive steps at tempo {fastest} s", self.trace.step_duration),
                    );
                }
            }
        }
        if let Err(e) = self.detector.config(1.0).validate() {
            issue("detector".into(), e.to_string());
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::InvalidConfig(issues))
        }
    }

    /// Condition cells in a fixed order: modality, then tempo, then direction.
    pub fn cells(&self) -> Vec<(Cell, AgentPreset)> {
        let presets = self.all_presets();
        let mut cells = Vec::new();
        for modality in &self.modalities {
            for &tempo in &self.tempos {
                let Some(preset) = self.resolve_preset(&presets, modality, tempo) else {
                    continue;
                };
                for &direction in &self.directions {
                    cells.push((
                        Cell {
                            modality: modality.clone(),
                            preset: preset.name.clone(),
                            tempo,
                            direction,
                        },
                        preset.clone(),
                    ));
                }
            }
        }
        cells
    }

    pub fn perturbation_spec(&self, direction: Direction) -> PerturbationSpec {
        PerturbationSpec {
            direction,
            magnitude: self.perturbation.magnitude,
            window: self.perturbation.window,
        }
    }
}
