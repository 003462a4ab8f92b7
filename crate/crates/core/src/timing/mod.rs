//! Temporal data model for step synchronisation trials.
//!
//! Step numbers are 1-based throughout: step 1 is the first onset of a
//! stream, and the cue interval `C_n` runs from cue step `n` to `n + 1`.

mod cue;
mod matching;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cue::{CueSchedule, Direction, PerturbationSpec};
pub use matching::{match_onsets, unwrap_asynchronies, AsynchronyPair, AsynchronySeries};
pub use stats::{
    compute_isi, relative_asynchrony, summarize_pre_perturbation, PrePerturbationSummary,
    RelativeAsynchronyCurve, CURVE_OFFSETS, DEFAULT_EXCLUDE_FIRST,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimingError {
    #[error("series has {len} onsets, at least 2 are required")]
    EmptySeries { len: usize },
    #[error("onset times must be finite and strictly increasing (violated at index {index})")]
    NonIncreasing { index: usize },
    #[error("baseline window is empty for perturbed step {perturbed_step} with {exclude_first} excluded steps")]
    InsufficientBaseline {
        perturbed_step: usize,
        exclude_first: usize,
    },
    #[error("perturbation window {lo}..={hi} is invalid for {n_steps} steps")]
    InvalidWindow { lo: usize, hi: usize, n_steps: usize },
    #[error("perturbation magnitude {0} must lie strictly between 0 and 1")]
    InvalidMagnitude(f64),
    #[error("nominal inter-step interval must be positive and finite, got {0}")]
    InvalidInterval(f64),
    #[error("perturbed step {step} lies outside the window {lo}..={hi}")]
    PerturbedStepOutsideWindow { step: usize, lo: usize, hi: usize },
    #[error("cue schedule has {got} onsets but declares {expected} steps")]
    StepCountMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    /// Foot that takes the given 1-based step when stepping starts on the left.
    pub fn for_step(step: usize) -> Foot {
        if step % 2 == 1 {
            Foot::Left
        } else {
            Foot::Right
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Foot::Left => "L",
            Foot::Right => "R",
        }
    }

    pub fn from_code(code: &str) -> Option<Foot> {
        match code {
            "L" => Some(Foot::Left),
            "R" => Some(Foot::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Participant,
    Cue,
}

impl Source {
    pub fn code(self) -> &'static str {
        match self {
            Source::Participant => "participant",
            Source::Cue => "cue",
        }
    }

    pub fn from_code(code: &str) -> Option<Source> {
        match code {
            "participant" => Some(Source::Participant),
            "cue" => Some(Source::Cue),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Onset {
    pub time: f64,
    pub foot: Foot,
}

/// Ordered step onsets of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetSeries {
    onsets: Vec<Onset>,
    source: Source,
}

impl OnsetSeries {
    pub fn new(onsets: Vec<Onset>, source: Source) -> Result<Self, TimingError> {
        for (index, onset) in onsets.iter().enumerate() {
            if !onset.time.is_finite() || (index > 0 && onset.time <= onsets[index - 1].time) {
                return Err(TimingError::NonIncreasing { index });
            }
        }
        Ok(Self { onsets, source })
    }

    /// Builds a series from bare times, alternating feet starting on the left.
    pub fn from_times(times: &[f64], source: Source) -> Result<Self, TimingError> {
        let onsets = times
            .iter()
            .enumerate()
            .map(|(i, &time)| Onset {
                time,
                foot: Foot::for_step(i + 1),
            })
            .collect();
        Self::new(onsets, source)
    }

    pub fn empty(source: Source) -> Self {
        Self {
            onsets: Vec::new(),
            source,
        }
    }

    pub fn onsets(&self) -> &[Onset] {
        &self.onsets
    }

    pub fn times(&self) -> Vec<f64> {
        self.onsets.iter().map(|o| o.time).collect()
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn len(&self) -> usize {
        self.onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }

    /// Time of a 1-based step, if recorded.
    pub fn time_of_step(&self, step: usize) -> Option<f64> {
        step.checked_sub(1)
            .and_then(|i| self.onsets.get(i))
            .map(|o| o.time)
    }

    /// True when consecutive onsets never repeat a foot.
    pub fn feet_alternate(&self) -> bool {
        self.onsets.windows(2).all(|w| w[0].foot != w[1].foot)
    }
}

/// Inter-onset intervals of one agent. `intervals[k]` spans onsets `k` and `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsiSeries {
    intervals: Vec<f64>,
    source: Source,
}

impl IsiSeries {
    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Interval starting at a 1-based step.
    pub fn starting_at_step(&self, step: usize) -> Option<f64> {
        step.checked_sub(1).and_then(|i| self.intervals.get(i)).copied()
    }

    pub fn mean(&self) -> f64 {
        stats::mean(&self.intervals)
    }

    /// Rebuilds onset times from a first onset by cumulative summation.
    pub fn reconstruct(&self, first_onset: f64) -> Vec<f64> {
        let mut times = Vec::with_capacity(self.intervals.len() + 1);
        let mut t = first_onset;
        times.push(t);
        for &isi in &self.intervals {
            t += isi;
            times.push(t);
        }
        times
    }
}

pub(crate) use cue::median;
pub(crate) use stats::{mean, sample_sd};
