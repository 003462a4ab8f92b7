//! Cue generation and stepping agents driven by linear phase correction.

mod presets;
mod trace;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded_rng;
use crate::timing::{
    AsynchronyPair, AsynchronySeries, CueSchedule, Foot, Onset, OnsetSeries, PerturbationSpec,
    Source, TimingError,
};

pub use presets::{builtin_presets, find_preset, AgentPreset};
pub use trace::{synthesize_trace, FootTrace, MarkerTrace, TraceParams};

/// Time of the first cue onset. Leaves room for early participant steps.
pub const CUE_START: f64 = 1.0;

/// Default number of cue steps in a trial.
pub const DEFAULT_STEPS: usize = 30;

/// Steps after the perturbed step that an analysis needs.
const POST_PERTURBATION_STEPS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error("invalid agent parameters: {0}")]
    InvalidParams(String),
    #[error("{n_steps} steps leave no room for 6 analysed steps after a perturbation at step {window_hi}")]
    TooFewSteps { n_steps: usize, window_hi: usize },
    #[error("cue jitter SD must be finite and non-negative, got {0}")]
    InvalidJitter(f64),
    #[error("step duration {step_duration} s is not shorter than the smallest inter-onset interval {min_isi} s")]
    BumpOverlap { step_duration: f64, min_isi: f64 },
    #[error("onset at {0} s precedes the start of the trace")]
    NegativeOnset(f64),
    #[error("invalid trace parameter: {0}")]
    InvalidTrace(String),
}

/// Parameters of `A[n+1] = (1 - alpha) A[n] + T[n] + M[n+1] - M[n] - C[n]`
/// with Gaussian timekeeper intervals `T` and motor delays `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCorrectionParams {
    pub alpha: f64,
    pub timekeeper_mean: f64,
    pub timekeeper_sd: f64,
    pub motor_mean: f64,
    pub motor_sd: f64,
}

impl PhaseCorrectionParams {
    /// Noise-free agent whose timekeeper runs at `isi`.
    pub fn noiseless(alpha: f64, isi: f64) -> Self {
        Self {
            alpha,
            timekeeper_mean: isi,
            timekeeper_sd: 0.0,
            motor_mean: 0.0,
            motor_sd: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(0.0..=2.0).contains(&self.alpha) {
            return Err(SimulationError::InvalidParams(format!(
                "alpha {} outside [0, 2]",
                self.alpha
            )));
        }
        if !(self.timekeeper_sd >= 0.0 && self.timekeeper_sd.is_finite())
            || !(self.motor_sd >= 0.0 && self.motor_sd.is_finite())
        {
            return Err(SimulationError::InvalidParams(
                "noise SDs must be finite and non-negative".into(),
            ));
        }
        if !self.timekeeper_mean.is_finite() || !self.motor_mean.is_finite() {
            return Err(SimulationError::InvalidParams("means must be finite".into()));
        }
        Ok(())
    }
}

/// Builds a cue schedule with one perturbed interval.
///
/// The perturbed step is drawn uniformly from the window first, then each
/// interval gets independent Gaussian jitter. The perturbed interval is its
/// jittered baseline times the perturbation factor.
pub fn generate_cue_schedule(
    nominal_isi: f64,
    n_steps: usize,
    perturbation: PerturbationSpec,
    cue_jitter_sd: f64,
    seed: u64,
) -> Result<CueSchedule, SimulationError> {
    if !(nominal_isi > 0.0 && nominal_isi.is_finite()) {
        return Err(TimingError::InvalidInterval(nominal_isi).into());
    }
    if !(cue_jitter_sd >= 0.0 && cue_jitter_sd.is_finite()) {
        return Err(SimulationError::InvalidJitter(cue_jitter_sd));
    }
    perturbation.validate(n_steps)?;
    let (lo, hi) = perturbation.window;
    if n_steps <= hi + POST_PERTURBATION_STEPS {
        return Err(SimulationError::TooFewSteps {
            n_steps,
            window_hi: hi,
        });
    }

    let mut rng = seeded_rng(seed);
    let perturbed_step = rng.random_range(lo..=hi);
    let jitter = Normal::new(0.0, cue_jitter_sd).expect("validated SD");
    let intervals = (1..n_steps)
        .map(|step| {
            let base = if cue_jitter_sd > 0.0 {
                nominal_isi + jitter.sample(&mut rng)
            } else {
                nominal_isi
            };
            if step == perturbed_step {
                base * perturbation.factor()
            } else {
                base
            }
        })
        .collect();
    Ok(CueSchedule::from_intervals(
        nominal_isi,
        CUE_START,
        intervals,
        perturbation,
        perturbed_step,
    )?)
}

/// Runs a stepping agent against a cue schedule.
///
/// Returns the participant onsets (cue onset plus asynchrony) and the
/// generating asynchronies paired step-for-step with the cue. Asynchronies are
/// stored as `onset - cue`, which keeps them bit-identical to what matching
/// the returned onsets recovers.
pub fn simulate_agent(
    params: &PhaseCorrectionParams,
    cue: &CueSchedule,
    initial_asynchrony: f64,
    seed: u64,
) -> Result<(OnsetSeries, AsynchronySeries), SimulationError> {
    params.validate()?;
    let mut rng = seeded_rng(seed);
    let timekeeper = Normal::new(params.timekeeper_mean, params.timekeeper_sd)
        .map_err(|e| SimulationError::InvalidParams(e.to_string()))?;
    let motor = Normal::new(params.motor_mean, params.motor_sd)
        .map_err(|e| SimulationError::InvalidParams(e.to_string()))?;

    let cue_times = cue.onsets().times();
    let n = cue_times.len();
    let mut onsets = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);

    let mut motor_prev = motor.sample(&mut rng);
    let mut asynchrony = initial_asynchrony;
    for step in 1..=n {
        let cue_time = cue_times[step - 1];
        let onset = cue_time + asynchrony;
        let pair = AsynchronyPair::new(step, onset, step, cue_time);
        asynchrony = pair.asynchrony;
        onsets.push(Onset {
            time: onset,
            foot: Foot::for_step(step),
        });
        pairs.push(pair);

        if step < n {
            let interval = cue_times[step] - cue_time;
            let timekeeper_interval = timekeeper.sample(&mut rng);
            let motor_next = motor.sample(&mut rng);
            asynchrony = (1.0 - params.alpha) * asynchrony + timekeeper_interval + motor_next
                - motor_prev
                - interval;
            motor_prev = motor_next;
        }
    }

    let onsets = OnsetSeries::new(onsets, Source::Participant)?;
    let truth = AsynchronySeries::from_pairs(pairs, cue_times)?;
    Ok((onsets, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::Direction;

    fn schedule(isi: f64, direction: Direction, seed: u64) -> CueSchedule {
        generate_cue_schedule(isi, DEFAULT_STEPS, PerturbationSpec::new(direction), 0.0, seed).unwrap()
    }

    #[test]
    fn negative_perturbation_shortens_one_interval() {
        let cue = schedule(0.8, Direction::Negative, 3);
        let t = cue.perturbed_step();
        assert!((10..=16).contains(&t));
        for (i, &c) in cue.intervals().intervals().iter().enumerate() {
            if i + 1 == t {
                assert!((c - 0.68).abs() < 1e-12);
            } else {
                assert_eq!(c, 0.8);
            }
        }
    }

    #[test]
    fn positive_perturbation_lengthens_one_interval() {
        let cue = schedule(0.4, Direction::Positive, 11);
        let c = cue.interval_after(cue.perturbed_step()).unwrap();
        assert!((c - 0.46).abs() < 1e-12);
    }

    #[test]
    fn schedules_are_seed_deterministic() {
        assert_eq!(schedule(0.8, Direction::Negative, 5), schedule(0.8, Direction::Negative, 5));
        let steps: std::collections::BTreeSet<_> = (0..200)
            .map(|s| schedule(0.8, Direction::Negative, s).perturbed_step())
            .collect();
        assert_eq!(steps.into_iter().collect::<Vec<_>>(), (10..=16).collect::<Vec<_>>());
    }

    #[test]
    fn window_must_fit_trial() {
        let mut spec = PerturbationSpec::new(Direction::Positive);
        spec.window = (0, 16);
        assert!(matches!(
            generate_cue_schedule(0.8, 30, spec, 0.0, 1),
            Err(SimulationError::Timing(TimingError::InvalidWindow { .. }))
        ));
        spec.window = (10, 25);
        assert!(matches!(
            generate_cue_schedule(0.8, 30, spec, 0.0, 1),
            Err(SimulationError::TooFewSteps { .. })
        ));
    }

    #[test]
    fn jitter_keeps_perturbation_ratio() {
        let cue = generate_cue_schedule(0.8, 30, PerturbationSpec::new(Direction::Positive), 0.005, 9).unwrap();
        let intervals = cue.intervals().intervals();
        assert!(intervals.iter().any(|&c| c != 0.8));
        let t = cue.perturbed_step();
        assert!(intervals[t - 1] > 0.8 * 1.1);
    }

    #[test]
    fn full_correction_without_noise_stays_synchronous() {
        // Unperturbed cue: the record names a step but no interval is changed.
        let cue = CueSchedule::from_intervals(
            0.8,
            CUE_START,
            vec![0.8; 29],
            PerturbationSpec::new(Direction::Positive),
            12,
        )
        .unwrap();
        let (_, truth) = simulate_agent(&PhaseCorrectionParams::noiseless(1.0, 0.8), &cue, 0.0, 0).unwrap();
        assert!(truth.asynchronies().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn one_step_correction_after_shortened_interval() {
        let cue = schedule(0.8, Direction::Negative, 21);
        let t = cue.perturbed_step();
        let (_, truth) = simulate_agent(&PhaseCorrectionParams::noiseless(1.0, 0.8), &cue, 0.0, 0).unwrap();
        let a = truth.asynchronies();
        assert!((a[t] - 0.12).abs() < 1e-12);
        assert!(a[t + 1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn partial_correction_decays_geometrically() {
        let cue = schedule(0.8, Direction::Negative, 21);
        let t = cue.perturbed_step();
        let (_, truth) = simulate_agent(&PhaseCorrectionParams::noiseless(0.35, 0.8), &cue, 0.0, 0).unwrap();
        let a = truth.asynchronies();
        assert!((a[t] - 0.12).abs() < 1e-12);
        assert!((a[t + 1] - 0.078).abs() < 1e-12);
        assert!((a[t + 2] - 0.0507).abs() < 1e-12);
    }

    #[test]
    fn onsets_minus_cue_reproduce_truth_exactly() {
        let cue = generate_cue_schedule(0.4, 30, PerturbationSpec::new(Direction::Positive), 0.005, 2).unwrap();
        let params = PhaseCorrectionParams {
            alpha: 0.3,
            timekeeper_mean: 0.41,
            timekeeper_sd: 0.02,
            motor_mean: 0.05,
            motor_sd: 0.01,
        };
        let (onsets, truth) = simulate_agent(&params, &cue, 0.0, 77).unwrap();
        for (pair, (p, c)) in truth
            .pairs()
            .iter()
            .zip(onsets.times().iter().zip(cue.onsets().times()))
        {
            assert_eq!(pair.asynchrony.to_bits(), (p - c).to_bits());
        }
        let (again, _) = simulate_agent(&params, &cue, 0.0, 77).unwrap();
        assert_eq!(again, onsets);
    }

    #[test]
    fn rejects_out_of_range_alpha() {
        let cue = schedule(0.8, Direction::Negative, 1);
        let params = PhaseCorrectionParams::noiseless(2.5, 0.8);
        assert!(matches!(
            simulate_agent(&params, &cue, 0.0, 0),
            Err(SimulationError::InvalidParams(_))
        ));
    }
}
