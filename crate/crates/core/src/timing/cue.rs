use serde::{Deserialize, Serialize};

use super::{compute_isi, IsiSeries, OnsetSeries, Source, TimingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Lengthened cue interval.
    Positive,
    /// Shortened cue interval.
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        }
    }
}

/// A single lengthened or shortened cue interval placed somewhere in an
/// inclusive window of 1-based step numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub direction: Direction,
    pub magnitude: f64,
    pub window: (usize, usize),
}

impl PerturbationSpec {
    pub const DEFAULT_MAGNITUDE: f64 = 0.15;
    pub const DEFAULT_WINDOW: (usize, usize) = (10, 16);

    pub fn new(direction: Direction) -> Self {
        Self {
            direction,
            magnitude: Self::DEFAULT_MAGNITUDE,
            window: Self::DEFAULT_WINDOW,
        }
    }

    /// Multiplier applied to the perturbed interval.
    pub fn factor(&self) -> f64 {
        match self.direction {
            Direction::Positive => 1.0 + self.magnitude,
            Direction::Negative => 1.0 - self.magnitude,
        }
    }

    pub fn validate(&self, n_steps: usize) -> Result<(), TimingError> {
        if !(self.magnitude > 0.0 && self.magnitude < 1.0) {
            return Err(TimingError::InvalidMagnitude(self.magnitude));
        }
        let (lo, hi) = self.window;
        if lo < 1 || hi < lo || hi >= n_steps {
            return Err(TimingError::InvalidWindow { lo, hi, n_steps });
        }
        Ok(())
    }
}

/// Realised cue (avatar) onsets plus the record of the one perturbed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSchedule {
    nominal_isi: f64,
    n_steps: usize,
    onsets: OnsetSeries,
    intervals: IsiSeries,
    perturbation: PerturbationSpec,
    perturbed_step: usize,
}

impl CueSchedule {
    /// Assembles a schedule from generated intervals. `intervals` are kept as
    /// given; onsets are their cumulative sum from `first_onset`.
    pub fn from_intervals(
        nominal_isi: f64,
        first_onset: f64,
        intervals: Vec<f64>,
        perturbation: PerturbationSpec,
        perturbed_step: usize,
    ) -> Result<Self, TimingError> {
        let n_steps = intervals.len() + 1;
        let mut times = Vec::with_capacity(n_steps);
        let mut t = first_onset;
        times.push(t);
        for &isi in &intervals {
            t += isi;
            times.push(t);
        }
        let onsets = OnsetSeries::from_times(&times, Source::Cue)?;
        let schedule = Self {
            nominal_isi,
            n_steps,
            onsets,
            intervals: IsiSeries {
                intervals,
                source: Source::Cue,
            },
            perturbation,
            perturbed_step,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Wraps externally recorded cue onsets. Intervals are measured from the onsets.
    pub fn from_onsets(
        nominal_isi: f64,
        onsets: OnsetSeries,
        perturbation: PerturbationSpec,
        perturbed_step: usize,
    ) -> Result<Self, TimingError> {
        let intervals = compute_isi(&onsets)?;
        let schedule = Self {
            nominal_isi,
            n_steps: onsets.len(),
            onsets,
            intervals,
            perturbation,
            perturbed_step,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Recovers the perturbation record from recorded cue onsets: the nominal
    /// interval is the median interval and the perturbed step is the interval
    /// deviating most from it, searched within `window`.
    pub fn infer_from_onsets(
        onsets: OnsetSeries,
        window: (usize, usize),
    ) -> Result<Self, TimingError> {
        let intervals = compute_isi(&onsets)?;
        let nominal = median(intervals.intervals());
        let (lo, hi) = window;
        if lo < 1 || hi < lo || hi >= onsets.len() {
            return Err(TimingError::InvalidWindow {
                lo,
                hi,
                n_steps: onsets.len(),
            });
        }
        let mut perturbed_step = lo;
        let mut largest = f64::NEG_INFINITY;
        for step in lo..=hi {
            let deviation = (intervals.intervals()[step - 1] - nominal).abs();
            if deviation > largest {
                largest = deviation;
                perturbed_step = step;
            }
        }
        let ratio = intervals.intervals()[perturbed_step - 1] / nominal;
        let direction = if ratio >= 1.0 {
            Direction::Positive
        } else {
            Direction::Negative
        };
        let magnitude = (ratio - 1.0).abs().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        let perturbation = PerturbationSpec {
            direction,
            magnitude,
            window,
        };
        Self::from_onsets(nominal, onsets, perturbation, perturbed_step)
    }

    fn validate(&self) -> Result<(), TimingError> {
        if !(self.nominal_isi > 0.0 && self.nominal_isi.is_finite()) {
            return Err(TimingError::InvalidInterval(self.nominal_isi));
        }
        if self.onsets.len() != self.n_steps {
            return Err(TimingError::StepCountMismatch {
                expected: self.n_steps,
                got: self.onsets.len(),
            });
        }
        self.perturbation.validate(self.n_steps)?;
        let (lo, hi) = self.perturbation.window;
        if self.perturbed_step < lo || self.perturbed_step > hi {
            return Err(TimingError::PerturbedStepOutsideWindow {
                step: self.perturbed_step,
                lo,
                hi,
            });
        }
        Ok(())
    }

    pub fn nominal_isi(&self) -> f64 {
        self.nominal_isi
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn onsets(&self) -> &OnsetSeries {
        &self.onsets
    }

    pub fn intervals(&self) -> &IsiSeries {
        &self.intervals
    }

    pub fn perturbation(&self) -> &PerturbationSpec {
        &self.perturbation
    }

    /// 1-based step whose following interval is perturbed. The first displaced
    /// cue onset is `perturbed_step + 1`.
    pub fn perturbed_step(&self) -> usize {
        self.perturbed_step
    }

    /// `C_n` for a 1-based step, i.e. the interval from cue step `n` to `n + 1`.
    pub fn interval_after(&self, step: usize) -> Option<f64> {
        self.intervals.starting_at_step(step)
    }

    /// Mean of the realised cue intervals.
    pub fn mean_isi(&self) -> f64 {
        self.intervals.mean()
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
