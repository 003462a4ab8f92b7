use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_onsets, DetectorConfig};
use crate::estimate::{fit_phase_correction, percent_correction, FitWindow, PhaseCorrectionEstimate};
use crate::rng::derive_seed;
use crate::simulate::{generate_cue_schedule, simulate_agent, synthesize_trace, AgentPreset};
use crate::timing::{
    compute_isi, match_onsets, relative_asynchrony, summarize_pre_perturbation, unwrap_asynchronies,
    AsynchronySeries, CueSchedule, OnsetSeries, PerturbationSpec, PrePerturbationSummary,
    RelativeAsynchronyCurve, Source, DEFAULT_EXCLUDE_FIRST,
};

use super::aggregate::{aggregate, ConditionSummary};
use super::config::{Cell, ExperimentConfig, Pipeline};
use super::{HarnessError, SCHEMA_VERSION};

/// Settings for turning one pair of onset streams into a trial result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub exclude_first: usize,
    pub max_discontinuities: usize,
    pub fit_window: FitWindow,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            exclude_first: DEFAULT_EXCLUDE_FIRST,
            max_discontinuities: 2,
            fit_window: FitWindow::PostPerturbation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exclusion {
    /// Too many missed steps or unwrap restarts.
    Discontinuities { count: usize, limit: usize },
    /// Cue detection did not recover every generated cue step.
    CueDetection { expected: usize, detected: usize },
    /// An analysis stage failed.
    Analysis { stage: String, message: String },
}

impl Exclusion {
    fn analysis(stage: &str, err: impl std::fmt::Display) -> Self {
        Exclusion::Analysis {
            stage: stage.to_string(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub cell: Option<Cell>,
    pub trial: usize,
    pub seed: Option<u64>,
    pub perturbed_step: usize,
    pub n_participant_onsets: usize,
    pub n_cue_onsets: usize,
    pub cue_mean_isi: f64,
    pub participant_mean_isi: Option<f64>,
    pub participant_sd_isi: Option<f64>,
    pub pre_perturbation: Option<PrePerturbationSummary>,
    pub curve: Option<RelativeAsynchronyCurve>,
    pub estimate: Option<PhaseCorrectionEstimate>,
    pub percent_correction: Option<f64>,
    pub gaps: usize,
    pub breaks: usize,
    pub unwrap_applied: bool,
    pub exclusion: Option<Exclusion>,
}

impl TrialResult {
    pub fn included(&self) -> bool {
        self.exclusion.is_none()
    }
}

/// Match, unwrap, summarise and fit one trial.
///
/// The cue schedule supplies the perturbed step; its intervals are taken from
/// the cue onsets themselves, so a schedule rebuilt from exported onsets gives
/// the same result as the in-memory original.
pub fn analyze_trial(
    participant: &OnsetSeries,
    cue: &CueSchedule,
    options: &AnalysisOptions,
) -> TrialResult {
    let perturbed_step = cue.perturbed_step();
    let mut result = TrialResult {
        cell: None,
        trial: 0,
        seed: None,
        perturbed_step,
        n_participant_onsets: participant.len(),
        n_cue_onsets: cue.onsets().len(),
        cue_mean_isi: cue.mean_isi(),
        participant_mean_isi: None,
        participant_sd_isi: None,
        pre_perturbation: None,
        curve: None,
        estimate: None,
        percent_correction: None,
        gaps: 0,
        breaks: 0,
        unwrap_applied: false,
        exclusion: None,
    };

    let raw = match_onsets(participant, cue.onsets());
    let series: AsynchronySeries = unwrap_asynchronies(&raw, cue.nominal_isi());
    result.gaps = series.gaps().len();
    result.breaks = series.breaks().len();
    result.unwrap_applied = series.unwrap_applied();

    let isi = match compute_isi(participant) {
        Ok(isi) => isi,
        Err(e) => {
            result.exclusion = Some(Exclusion::analysis("isi", e));
            return result;
        }
    };
    result.participant_mean_isi = Some(isi.mean());
    result.participant_sd_isi = Some(crate::timing::sample_sd(isi.intervals()));

    match summarize_pre_perturbation(&series, &isi, perturbed_step, options.exclude_first) {
        Ok(summary) => result.pre_perturbation = Some(summary),
        Err(e) => result.exclusion = Some(Exclusion::analysis("summary", e)),
    }
    match relative_asynchrony(&series, perturbed_step, options.exclude_first) {
        Ok(curve) => {
            result.percent_correction = percent_correction(&curve).ok();
            result.curve = Some(curve);
        }
        Err(e) => {
            result.exclusion.get_or_insert(Exclusion::analysis("curve", e));
        }
    }
    match fit_phase_correction(&series, cue, options.fit_window) {
        Ok(estimate) => result.estimate = Some(estimate),
        Err(e) => {
            result.exclusion.get_or_insert(Exclusion::analysis("fit", e));
        }
    }

    let count = series.discontinuity_count();
    if count > options.max_discontinuities {
        result.exclusion = Some(Exclusion::Discontinuities {
            count,
            limit: options.max_discontinuities,
        });
    }
    result
}

/// Analysis view of recorded cue onsets: the nominal interval is the median
/// recorded interval, as it would be for data read back from a file.
pub fn cue_from_onsets(
    onsets: OnsetSeries,
    perturbation: PerturbationSpec,
    perturbed_step: usize,
) -> Result<CueSchedule, HarnessError> {
    let intervals = compute_isi(&onsets)?;
    let nominal = crate::timing::median(intervals.intervals());
    Ok(CueSchedule::from_onsets(nominal, onsets, perturbation, perturbed_step)?)
}

/// Everything one `run` produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub summaries: Vec<ConditionSummary>,
    /// Cells whose every trial was excluded.
    pub empty_cells: Vec<String>,
}

/// Seeds used for one trial, all derived from the master seed.
#[derive(Debug, Clone, Copy)]
struct TrialSeeds {
    trial: u64,
    cue: u64,
    agent: u64,
    participant_trace: u64,
    cue_trace: u64,
}

impl TrialSeeds {
    fn new(master: u64, cell: &Cell, trial: usize) -> Self {
        let trial = derive_seed(master, &[&cell.id(), &trial.to_string()]);
        Self {
            trial,
            cue: derive_seed(trial, &["cue"]),
            agent: derive_seed(trial, &["agent"]),
            participant_trace: derive_seed(trial, &["participant-trace"]),
            cue_trace: derive_seed(trial, &["cue-trace"]),
        }
    }
}

impl ExperimentConfig {
    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            exclude_first: self.exclude_first,
            max_discontinuities: self.max_discontinuities,
            fit_window: self.fit_window,
        }
    }
}

/// Generates and analyses a single trial of a cell.
pub fn run_trial(
    config: &ExperimentConfig,
    cell: &Cell,
    preset: &AgentPreset,
    trial: usize,
) -> Result<TrialResult, HarnessError> {
    let seeds = TrialSeeds::new(config.master_seed, cell, trial);
    let perturbation: PerturbationSpec = config.perturbation_spec(cell.direction);
    let generated = generate_cue_schedule(
        cell.tempo,
        config.n_steps,
        perturbation,
        config.cue_jitter_sd,
        seeds.cue,
    )?;
    let params = preset.params_for(cell.tempo);
    let (participant, _) = simulate_agent(&params, &generated, config.initial_asynchrony, seeds.agent)?;

    let options = config.analysis_options();
    let mut result = match config.pipeline {
        Pipeline::Exact => {
            let cue = cue_from_onsets(generated.onsets().clone(), perturbation, generated.perturbed_step())?;
            analyze_trial(&participant, &cue, &options)
        }
        Pipeline::Detector => {
            let detector: DetectorConfig = config.detector.config(cell.tempo);
            let participant_trace = synthesize_trace(
                &participant,
                &config.trace.params(config.trace.participant_rate),
                seeds.participant_trace,
            )?;
            let cue_trace = synthesize_trace(
                generated.onsets(),
                &config.trace.params(config.trace.cue_rate),
                seeds.cue_trace,
            )?;
            let detected_participant = detect_onsets(&participant_trace, &detector, Source::Participant)?;
            let detected_cue = detect_onsets(&cue_trace, &detector, Source::Cue)?;
            if detected_cue.len() != generated.n_steps() {
                excluded_for_cue(&generated, &detected_participant, detected_cue.len())
            } else {
                let cue = cue_from_onsets(detected_cue, perturbation, generated.perturbed_step())?;
                analyze_trial(&detected_participant, &cue, &options)
            }
        }
    };
    result.cell = Some(cell.clone());
    result.trial = trial;
    result.seed = Some(seeds.trial);
    Ok(result)
}

fn excluded_for_cue(generated: &CueSchedule, participant: &OnsetSeries, detected: usize) -> TrialResult {
    TrialResult {
        cell: None,
        trial: 0,
        seed: None,
        perturbed_step: generated.perturbed_step(),
        n_participant_onsets: participant.len(),
        n_cue_onsets: detected,
        cue_mean_isi: generated.mean_isi(),
        participant_mean_isi: None,
        participant_sd_isi: None,
        pre_perturbation: None,
        curve: None,
        estimate: None,
        percent_correction: None,
        gaps: 0,
        breaks: 0,
        unwrap_applied: false,
        exclusion: Some(Exclusion::CueDetection {
            expected: generated.n_steps(),
            detected,
        }),
    }
}

/// Runs every trial of every cell and aggregates per cell.
///
/// Trials run on a pool of `config.workers` threads (all cores when 0).
/// Results are collected in cell-then-trial order, so the report does not
/// depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let cells = config.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.trials_per_cell).map(move |t| (c, t)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let trials: Vec<TrialResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, t)| run_trial(config, &cells[c].0, &cells[c].1, t))
            .collect::<Result<_, _>>()
    })?;

    let mut summaries = Vec::new();
    let mut empty_cells = Vec::new();
    for (chunk, (cell, _)) in trials.chunks(config.trials_per_cell).zip(&cells) {
        match aggregate(chunk) {
            Ok(summary) => summaries.push(summary),
            Err(HarnessError::EmptyCell(_)) => empty_cells.push(cell.id()),
            Err(e) => return Err(e),
        }
    }
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        trials,
        summaries,
        empty_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{generate_cue_schedule, simulate_agent, PhaseCorrectionParams};
    use crate::timing::Direction;

    #[test]
    fn default_grid_counts() {
        let config = ExperimentConfig::default();
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.trials.len(), 40);
        let used: usize = report.summaries.iter().map(|s| s.n_included + s.n_excluded).sum();
        assert_eq!(used + report.empty_cells.len() * config.trials_per_cell, 40);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let one = ExperimentConfig { workers: 1, trials_per_cell: 2, ..ExperimentConfig::default() };
        let four = ExperimentConfig { workers: 4, ..one.clone() };
        let a = run_experiment(&one).unwrap();
        let b = run_experiment(&four).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.summaries, b.summaries);
    }

    #[test]
    fn noiseless_trial_recovers_alpha() {
        let cue = generate_cue_schedule(0.8, 30, PerturbationSpec::new(Direction::Negative), 0.0, 3).unwrap();
        let (participant, _) = simulate_agent(&PhaseCorrectionParams::noiseless(0.5, 0.8), &cue, 0.0, 0).unwrap();
        let result = analyze_trial(&participant, &cue, &AnalysisOptions::default());
        assert!(result.included());
        assert!((result.estimate.unwrap().alpha_hat - 0.5).abs() < 1e-6);
        assert!((result.percent_correction.unwrap() - 100.0 * (1.0 - 0.5f64.powi(5)) / 5.0).abs() < 1e-9);
        assert_eq!(result.pre_perturbation.unwrap().n_used, cue.perturbed_step() - 4);
    }

    #[test]
    fn missing_steps_exclude_the_trial() {
        let cue = generate_cue_schedule(0.8, 30, PerturbationSpec::new(Direction::Positive), 0.0, 1).unwrap();
        let (participant, _) = simulate_agent(&PhaseCorrectionParams::noiseless(0.5, 0.8), &cue, 0.0, 0).unwrap();
        let kept: Vec<_> = participant
            .onsets()
            .iter()
            .enumerate()
            .filter(|(i, _)| ![5, 7, 20].contains(i))
            .map(|(_, o)| *o)
            .collect();
        let sparse = OnsetSeries::new(kept, Source::Participant).unwrap();
        let result = analyze_trial(&sparse, &cue, &AnalysisOptions::default());
        assert_eq!(result.gaps, 3);
        assert_eq!(result.exclusion, Some(Exclusion::Discontinuities { count: 3, limit: 2 }));
    }
}
