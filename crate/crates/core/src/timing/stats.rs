use serde::{Deserialize, Serialize};

use super::{AsynchronySeries, IsiSeries, OnsetSeries, TimingError};

/// Steps dropped from the start of every trial while the stepper settles in.
pub const DEFAULT_EXCLUDE_FIRST: usize = 3;

/// Step offsets reported around the perturbation, `T-4 ..= T+6`.
pub const CURVE_OFFSETS: std::ops::RangeInclusive<i64> = -4..=6;

const CURVE_LEN: usize = 11;

pub fn compute_isi(onsets: &OnsetSeries) -> Result<IsiSeries, TimingError> {
    if onsets.len() < 2 {
        return Err(TimingError::EmptySeries { len: onsets.len() });
    }
    let intervals = onsets
        .onsets()
        .windows(2)
        .map(|w| w[1].time - w[0].time)
        .collect();
    Ok(IsiSeries {
        intervals,
        source: onsets.source(),
    })
}

/// Asynchrony around the perturbation, relative to the pre-perturbation mean.
///
/// `values[i]` belongs to offset `-4 + i`; offset 0 is the participant step
/// matched to the cue step that opens the perturbed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeAsynchronyCurve {
    pub values: Vec<Option<f64>>,
    pub baseline_mean: f64,
    pub baseline_n: usize,
}

impl RelativeAsynchronyCurve {
    pub fn at(&self, offset: i64) -> Option<f64> {
        if !CURVE_OFFSETS.contains(&offset) {
            return None;
        }
        self.values[(offset - CURVE_OFFSETS.start()) as usize]
    }

    pub fn offsets() -> impl Iterator<Item = i64> {
        CURVE_OFFSETS
    }
}

fn baseline_window(
    perturbed_step: usize,
    exclude_first: usize,
) -> Result<std::ops::RangeInclusive<usize>, TimingError> {
    let first = exclude_first + 1;
    if perturbed_step <= first {
        return Err(TimingError::InsufficientBaseline {
            perturbed_step,
            exclude_first,
        });
    }
    Ok(first..=perturbed_step - 1)
}

pub fn relative_asynchrony(
    series: &AsynchronySeries,
    perturbed_step: usize,
    exclude_first: usize,
) -> Result<RelativeAsynchronyCurve, TimingError> {
    let window = baseline_window(perturbed_step, exclude_first)?;
    let baseline: Vec<f64> = series
        .pairs()
        .iter()
        .filter(|p| window.contains(&p.cue_step))
        .map(|p| p.asynchrony)
        .collect();
    if baseline.is_empty() {
        return Err(TimingError::InsufficientBaseline {
            perturbed_step,
            exclude_first,
        });
    }
    let baseline_mean = mean(&baseline);
    let values = CURVE_OFFSETS
        .map(|offset| {
            let step = perturbed_step as i64 + offset;
            if step < 1 {
                return None;
            }
            series
                .pair_at_cue_step(step as usize)
                .map(|p| p.asynchrony - baseline_mean)
        })
        .collect::<Vec<_>>();
    debug_assert_eq!(values.len(), CURVE_LEN);
    Ok(RelativeAsynchronyCurve {
        values,
        baseline_mean,
        baseline_n: baseline.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrePerturbationSummary {
    pub mean_asynchrony: f64,
    pub sd_asynchrony: f64,
    pub mean_isi: f64,
    pub sd_isi: f64,
    pub n_used: usize,
}

/// Asynchrony and participant interval statistics over steps
/// `exclude_first + 1 ..= perturbed_step - 1`. The interval attached to a
/// step is the one ending at its participant onset.
pub fn summarize_pre_perturbation(
    series: &AsynchronySeries,
    participant_isi: &IsiSeries,
    perturbed_step: usize,
    exclude_first: usize,
) -> Result<PrePerturbationSummary, TimingError> {
    let window = baseline_window(perturbed_step, exclude_first)?;
    let in_window: Vec<_> = series
        .pairs()
        .iter()
        .filter(|p| window.contains(&p.cue_step))
        .collect();
    let asynchronies: Vec<f64> = in_window.iter().map(|p| p.asynchrony).collect();
    let intervals: Vec<f64> = in_window
        .iter()
        .filter_map(|p| {
            p.participant_step
                .checked_sub(1)
                .and_then(|prev| participant_isi.starting_at_step(prev))
        })
        .collect();
    if asynchronies.is_empty() || intervals.is_empty() {
        return Err(TimingError::InsufficientBaseline {
            perturbed_step,
            exclude_first,
        });
    }
    Ok(PrePerturbationSummary {
        mean_asynchrony: mean(&asynchronies),
        sd_asynchrony: sample_sd(&asynchronies),
        mean_isi: mean(&intervals),
        sd_isi: sample_sd(&intervals),
        n_used: asynchronies.len(),
    })
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}
