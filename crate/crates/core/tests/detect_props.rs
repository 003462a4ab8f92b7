use proptest::prelude::*;

use stepsync_core::detect::{detect_onsets, estimate_peak_height, DetectorConfig, ThresholdHeight};
use stepsync_core::simulate::{synthesize_trace, FootTrace, MarkerTrace, TraceParams};
use stepsync_core::timing::{Foot, OnsetSeries, Source};

fn onset_times() -> impl Strategy<Value = Vec<f64>> {
    (0.3..2.0f64, prop::collection::vec(0.35..1.0f64, 1..30)).prop_map(|(start, gaps)| {
        let mut t = start;
        let mut times = vec![t];
        for g in gaps.into_iter().skip(1) {
            t += g;
            times.push(t);
        }
        times
    })
}

fn trace_params(noise_sd: f64) -> TraceParams {
    TraceParams {
        sample_rate: 100.0,
        step_amplitude: 0.1,
        step_duration: 0.3,
        noise_sd,
    }
}

fn fixed(threshold: f64) -> DetectorConfig {
    DetectorConfig {
        threshold: ThresholdHeight::Fixed(threshold),
        ..DetectorConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn round_trip_recovers_every_onset(
        times in onset_times(),
        noise_sd in 0.0..0.002f64,
        interpolate in any::<bool>(),
        seed in any::<u64>(),
    ) {
        // Noise stays at or below 10% of the 20 mm threshold.
        let params = trace_params(noise_sd);
        let onsets = OnsetSeries::from_times(&times, Source::Participant).unwrap();
        let trace = synthesize_trace(&onsets, &params, seed).unwrap();
        let config = DetectorConfig { interpolate, ..fixed(0.02) };
        let found = detect_onsets(&trace, &config, Source::Participant).unwrap();
        prop_assert_eq!(found.len(), times.len());
        let tolerance = if interpolate { 0.5 } else { 1.0 } / params.sample_rate;
        for (detected, &onset) in found.onsets().iter().zip(&times) {
            let expected = params.crossing_time(onset, 0.02);
            if noise_sd == 0.0 {
                prop_assert!((detected.time - expected).abs() <= tolerance + 1e-12);
            } else {
                prop_assert!((detected.time - expected).abs() <= 2.0 / params.sample_rate);
            }
        }
        prop_assert!(found.feet_alternate());
    }

    #[test]
    fn noiseless_round_trip_within_sample_bounds(
        times in onset_times(),
        interpolate in any::<bool>(),
    ) {
        let params = trace_params(0.0);
        let onsets = OnsetSeries::from_times(&times, Source::Participant).unwrap();
        let trace = synthesize_trace(&onsets, &params, 0).unwrap();
        let config = DetectorConfig { interpolate, ..fixed(0.02) };
        let found = detect_onsets(&trace, &config, Source::Participant).unwrap();
        prop_assert_eq!(found.len(), times.len());
        let tolerance = if interpolate { 0.5 } else { 1.0 } / params.sample_rate;
        for (detected, &onset) in found.onsets().iter().zip(&times) {
            prop_assert!((detected.time - params.crossing_time(onset, 0.02)).abs() <= tolerance + 1e-12);
        }
    }

    #[test]
    fn raising_threshold_never_adds_onsets(
        times in onset_times(),
        amplitudes in prop::collection::vec(0.02..0.15f64, 30),
        mut thresholds in prop::collection::vec(0.001..0.2f64, 2..6),
    ) {
        // Bumps of varying height so that higher thresholds miss some steps.
        let params = trace_params(0.0);
        let onsets = OnsetSeries::from_times(&times, Source::Participant).unwrap();
        let base = synthesize_trace(&onsets, &params, 0).unwrap();
        let mut trace = base.clone();
        for channel in trace.channels.iter_mut() {
            for (h, t) in channel.heights.iter_mut().zip(&channel.times) {
                let step = times.iter().rposition(|&o| o <= *t).unwrap_or(0);
                *h *= amplitudes[step] / params.step_amplitude;
            }
        }
        thresholds.sort_by(f64::total_cmp);
        let counts: Vec<usize> = thresholds
            .iter()
            .map(|&th| detect_onsets(&trace, &fixed(th), Source::Participant).unwrap().len())
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{:?} at {:?}", counts, thresholds);
    }

    #[test]
    fn onsets_increase_and_respect_refractory(
        heights in prop::collection::vec(0.0..0.1f64, 20..400),
        refractory in 0.0..0.5f64,
        hysteresis in 0.0..0.9f64,
        threshold in 0.005..0.09f64,
    ) {
        let times: Vec<f64> = (0..heights.len()).map(|i| i as f64 / 100.0).collect();
        let trace = MarkerTrace {
            sample_rate: 100.0,
            channels: vec![
                FootTrace { foot: Foot::Left, times: times.clone(), heights: heights.clone() },
                FootTrace { foot: Foot::Right, times, heights: heights.iter().rev().copied().collect() },
            ],
        };
        let config = DetectorConfig {
            threshold: ThresholdHeight::Fixed(threshold),
            hysteresis_fraction: hysteresis,
            refractory,
            interpolate: true,
        };
        let found = detect_onsets(&trace, &config, Source::Participant).unwrap().times();
        for w in found.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!(w[1] - w[0] >= refractory);
        }
    }
}

#[test]
fn estimated_peak_is_bump_amplitude() {
    let params = trace_params(0.0);
    let onsets = OnsetSeries::from_times(&[1.0, 1.5, 2.0, 2.5], Source::Participant).unwrap();
    let trace = synthesize_trace(&onsets, &params, 0).unwrap();
    let peak = estimate_peak_height(&trace).unwrap();
    // The bump top is sampled at 1.15 s, 1.65 s, ... exactly on the 100 Hz grid.
    assert!((peak - 0.1).abs() < 1e-9);
}

#[test]
fn noisy_bump_train_gives_one_onset_per_bump() {
    let params = trace_params(0.001);
    let times: Vec<f64> = (0..30).map(|i| 0.5 + 0.4 * i as f64).collect();
    let onsets = OnsetSeries::from_times(&times, Source::Participant).unwrap();
    for seed in 0..50 {
        let trace = synthesize_trace(&onsets, &params, seed).unwrap();
        let found = detect_onsets(&trace, &fixed(0.02), Source::Participant).unwrap();
        assert_eq!(found.len(), 30, "seed {seed}");
        for (d, &o) in found.times().iter().zip(&times) {
            assert!((d - params.crossing_time(o, 0.02)).abs() <= 0.01);
        }
    }
}

#[test]
fn flat_trace_yields_nothing() {
    let trace = synthesize_trace(&OnsetSeries::empty(Source::Cue), &trace_params(0.0), 0).unwrap();
    assert!(detect_onsets(&trace, &DetectorConfig::default(), Source::Cue).unwrap().is_empty());
}
