use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimulationError;
use crate::rng::seeded_rng;
use crate::timing::{Foot, OnsetSeries};

/// Samples recorded after the last bump ends.
const TAIL: f64 = 0.5;

/// Vertical heel-marker height of one foot, sampled on a shared clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootTrace {
    pub foot: Foot,
    pub times: Vec<f64>,
    pub heights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerTrace {
    pub sample_rate: f64,
    pub channels: Vec<FootTrace>,
}

impl MarkerTrace {
    pub fn channel(&self, foot: Foot) -> Option<&FootTrace> {
        self.channels.iter().find(|c| c.foot == foot)
    }

    pub fn is_empty(&self) -> bool {
        self.channels.iter().all(|c| c.times.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub sample_rate: f64,
    pub step_amplitude: f64,
    pub step_duration: f64,
    pub noise_sd: f64,
}

impl TraceParams {
    /// Time at which a bump starting at `onset` first reaches `threshold`.
    pub fn crossing_time(&self, onset: f64, threshold: f64) -> f64 {
        let phase = (1.0 - 2.0 * threshold / self.step_amplitude).acos();
        onset + self.step_duration * phase / (2.0 * std::f64::consts::PI)
    }

    /// Noise-free height of a bump that starts at `onset`.
    pub fn bump(&self, onset: f64, t: f64) -> f64 {
        let u = (t - onset) / self.step_duration;
        if (0.0..=1.0).contains(&u) {
            0.5 * self.step_amplitude * (1.0 - (2.0 * std::f64::consts::PI * u).cos())
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.sample_rate) {
            return Err(SimulationError::InvalidTrace(format!("sample rate {}", self.sample_rate)));
        }
        if !positive(self.step_amplitude) || !positive(self.step_duration) {
            return Err(SimulationError::InvalidTrace(
                "step amplitude and duration must be positive".into(),
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(SimulationError::InvalidTrace(format!("noise SD {}", self.noise_sd)));
        }
        Ok(())
    }
}

/// Renders onsets as raised-cosine heel lifts on the foot that took each step,
/// plus Gaussian sensor noise. Heights are floored at zero.
pub fn synthesize_trace(
    onsets: &OnsetSeries,
    params: &TraceParams,
    seed: u64,
) -> Result<MarkerTrace, SimulationError> {
    params.validate()?;
    let times = onsets.times();
    if let Some(&first) = times.first() {
        if first < 0.0 {
            return Err(SimulationError::NegativeOnset(first));
        }
    }
    if let Some(min_isi) = times.windows(2).map(|w| w[1] - w[0]).reduce(f64::min) {
        if params.step_duration >= min_isi {
            return Err(SimulationError::BumpOverlap {
                step_duration: params.step_duration,
                min_isi,
            });
        }
    }

    let end = times.last().map_or(0.0, |t| t + params.step_duration) + TAIL;
    let n_samples = (end * params.sample_rate).ceil() as usize + 1;
    let clock: Vec<f64> = (0..n_samples).map(|i| i as f64 / params.sample_rate).collect();

    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, params.noise_sd).expect("validated SD");
    let channels = [Foot::Left, Foot::Right]
        .into_iter()
        .map(|foot| {
            let mut heights = vec![0.0; n_samples];
            for onset in onsets.onsets().iter().filter(|o| o.foot == foot) {
                let first = (onset.time * params.sample_rate).ceil() as usize;
                let last = ((onset.time + params.step_duration) * params.sample_rate).floor() as usize;
                for i in first..=last.min(n_samples - 1) {
                    heights[i] += params.bump(onset.time, clock[i]);
                }
            }
            if params.noise_sd > 0.0 {
                for h in heights.iter_mut() {
                    *h = (*h + noise.sample(&mut rng)).max(0.0);
                }
            }
            FootTrace {
                foot,
                times: clock.clone(),
                heights,
            }
        })
        .collect();

    Ok(MarkerTrace {
        sample_rate: params.sample_rate,
        channels,
    })
}
