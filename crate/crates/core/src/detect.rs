//! Step-onset extraction from heel-marker height traces by threshold crossing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulate::{FootTrace, MarkerTrace};
use crate::timing::{Foot, Onset, OnsetSeries, Source, TimingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("{foot:?} channel timestamps decrease at sample {index}")]
    MalformedTrace { foot: Foot, index: usize },
    #[error("{foot:?} channel has {times} timestamps but {heights} heights")]
    LengthMismatch {
        foot: Foot,
        times: usize,
        heights: usize,
    },
    #[error("trace has no samples")]
    EmptyTrace,
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Timing(#[from] TimingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdHeight {
    /// Absolute height above the floor, metres.
    Fixed(f64),
    /// Fraction of the median step peak estimated from the trace itself.
    PeakFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold: ThresholdHeight,
    /// The signal must drop below `threshold * (1 - hysteresis_fraction)`
    /// before another onset can fire.
    pub hysteresis_fraction: f64,
    /// Minimum spacing between emitted onsets, seconds.
    pub refractory: f64,
    pub interpolate: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdHeight::PeakFraction(0.2),
            hysteresis_fraction: 0.25,
            refractory: 0.15,
            interpolate: true,
        }
    }
}

impl DetectorConfig {
    /// Default configuration with the refractory period tied to a known tempo.
    pub fn for_nominal_isi(nominal_isi: f64) -> Self {
        Self {
            refractory: 0.4 * nominal_isi,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let threshold_ok = match self.threshold {
            ThresholdHeight::Fixed(h) => h > 0.0 && h.is_finite(),
            ThresholdHeight::PeakFraction(f) => f > 0.0 && f < 1.0,
        };
        if !threshold_ok {
            return Err(DetectError::InvalidConfig(format!(
                "threshold {:?} must be positive (fractions below 1)",
                self.threshold
            )));
        }
        if !(0.0..1.0).contains(&self.hysteresis_fraction) {
            return Err(DetectError::InvalidConfig(format!(
                "hysteresis fraction {} outside [0, 1)",
                self.hysteresis_fraction
            )));
        }
        if !(self.refractory >= 0.0 && self.refractory.is_finite()) {
            return Err(DetectError::InvalidConfig(format!(
                "refractory period {} must be non-negative",
                self.refractory
            )));
        }
        Ok(())
    }
}

fn check_channel(channel: &FootTrace) -> Result<(), DetectError> {
    if channel.times.len() != channel.heights.len() {
        return Err(DetectError::LengthMismatch {
            foot: channel.foot,
            times: channel.times.len(),
            heights: channel.heights.len(),
        });
    }
    match channel.times.windows(2).position(|w| !(w[1] >= w[0])) {
        Some(i) => Err(DetectError::MalformedTrace {
            foot: channel.foot,
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Median of the per-excursion maxima, where an excursion is a run of samples
/// above half the trace's overall maximum. `None` for a trace that never rises.
pub fn estimate_peak_height(trace: &MarkerTrace) -> Option<f64> {
    let overall = trace
        .channels
        .iter()
        .flat_map(|c| c.heights.iter().copied())
        .fold(0.0_f64, f64::max);
    if overall <= 0.0 {
        return None;
    }
    let cut = 0.5 * overall;
    let mut peaks = Vec::new();
    for channel in &trace.channels {
        let mut current: Option<f64> = None;
        for &h in &channel.heights {
            if h > cut {
                current = Some(current.map_or(h, |m: f64| m.max(h)));
            } else if let Some(m) = current.take() {
                peaks.push(m);
            }
        }
        peaks.extend(current);
    }
    Some(crate::timing::median(&peaks))
}

/// Upward threshold crossings of one channel, before the refractory filter.
fn channel_crossings(channel: &FootTrace, threshold: f64, config: &DetectorConfig) -> Vec<f64> {
    let lower = threshold * (1.0 - config.hysteresis_fraction);
    let (times, heights) = (&channel.times, &channel.heights);
    let mut crossings = Vec::new();
    let Some(&first) = heights.first() else {
        return crossings;
    };
    let mut armed = first < threshold;
    for i in 1..heights.len() {
        let h = heights[i];
        if armed && h >= threshold {
            let (t0, t1, h0) = (times[i - 1], times[i], heights[i - 1]);
            let time = if config.interpolate {
                t0 + (threshold - h0) / (h - h0) * (t1 - t0)
            } else {
                0.5 * (t0 + t1)
            };
            crossings.push(time);
            armed = false;
        } else if !armed && h < lower {
            armed = true;
        }
    }
    crossings
}

/// Extracts step onsets from both feet of a marker trace.
///
/// Each channel fires once per upward crossing of the threshold and re-arms
/// only after falling below the hysteresis level. Onsets of both feet are then
/// merged, and any onset closer than the refractory period to the previously
/// kept one is dropped. With interpolation the onset is placed on the line
/// between the two samples straddling the threshold; without it, midway
/// between them.
pub fn detect_onsets(
    trace: &MarkerTrace,
    config: &DetectorConfig,
    source: Source,
) -> Result<OnsetSeries, DetectError> {
    config.validate()?;
    if !(trace.sample_rate > 0.0) {
        return Err(DetectError::InvalidConfig(format!(
            "sample rate {} must be positive",
            trace.sample_rate
        )));
    }
    if trace.is_empty() {
        return Err(DetectError::EmptyTrace);
    }
    for channel in &trace.channels {
        check_channel(channel)?;
    }

    let threshold = match config.threshold {
        ThresholdHeight::Fixed(h) => h,
        ThresholdHeight::PeakFraction(f) => match estimate_peak_height(trace) {
            Some(peak) => f * peak,
            None => return Ok(OnsetSeries::empty(source)),
        },
    };

    let mut candidates: Vec<Onset> = trace
        .channels
        .iter()
        .flat_map(|c| {
            channel_crossings(c, threshold, config)
                .into_iter()
                .map(move |time| Onset { time, foot: c.foot })
        })
        .collect();
    candidates.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut kept: Vec<Onset> = Vec::with_capacity(candidates.len());
    for onset in candidates {
        match kept.last() {
            Some(last) if onset.time <= last.time || onset.time - last.time < config.refractory => {}
            _ => kept.push(onset),
        }
    }
    Ok(OnsetSeries::new(kept, source)?)
}
