use proptest::prelude::*;

use stepsync_core::timing::{
    compute_isi, match_onsets, relative_asynchrony, unwrap_asynchronies, AsynchronySeries, OnsetSeries,
    Source,
};

fn increasing_times(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    (0.0..5.0f64, prop::collection::vec(0.05..1.5f64, n)).prop_map(|(start, gaps)| {
        let mut t = start;
        let mut times = vec![t];
        for g in gaps {
            t += g;
            times.push(t);
        }
        times
    })
}

fn regular(n: usize, isi: f64, start: f64) -> Vec<f64> {
    (0..n).map(|i| start + i as f64 * isi).collect()
}

/// Every pair that directly continues the previous one stays within half an interval.
fn max_continuous_jump(series: &AsynchronySeries) -> f64 {
    let pairs = series.pairs();
    (1..pairs.len())
        .filter(|&i| series.continues_previous(i))
        .map(|i| (pairs[i].asynchrony - pairs[i - 1].asynchrony).abs())
        .fold(0.0, f64::max)
}

/// All injective assignments of participants to cues with the smallest total
/// absolute asynchrony, found by exhaustive search.
fn brute_force(participant: &[f64], cue: &[f64]) -> Vec<(usize, usize)> {
    fn search(
        i: usize,
        participant: &[f64],
        cue: &[f64],
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        cost: f64,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        if cost >= best.0 {
            return;
        }
        if i == participant.len() {
            *best = (cost, current.clone());
            return;
        }
        for j in 0..cue.len() {
            if !used[j] {
                used[j] = true;
                current.push((i + 1, j + 1));
                let c = cost + (participant[i] - cue[j]).abs();
                search(i + 1, participant, cue, used, current, c, best);
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    search(0, participant, cue, &mut vec![false; cue.len()], &mut Vec::new(), 0.0, &mut best);
    let mut pairs = best.1;
    pairs.sort_by_key(|&(_, c)| c);
    pairs
}

proptest! {
    #[test]
    fn isi_cumulative_sum_reconstructs_onsets(times in increasing_times(1..40)) {
        let onsets = OnsetSeries::from_times(&times, Source::Participant).unwrap();
        let isi = compute_isi(&onsets).unwrap();
        prop_assert_eq!(isi.len(), times.len() - 1);
        prop_assert!(isi.intervals().iter().all(|&v| v > 0.0));
        let rebuilt = isi.reconstruct(times[0]);
        for (a, b) in rebuilt.iter().zip(&times) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn constant_shift_gives_constant_asynchrony(
        isi in 0.3..1.0f64,
        frac in -0.49..0.49f64,
        n in 2usize..40,
        start in 0.0..3.0f64,
    ) {
        let c = frac * isi;
        let cue = OnsetSeries::from_times(&regular(n, isi, start), Source::Cue).unwrap();
        let shifted: Vec<f64> = cue.times().iter().map(|t| t + c).collect();
        let participant = OnsetSeries::from_times(&shifted, Source::Participant).unwrap();
        let series = match_onsets(&participant, &cue);
        prop_assert_eq!(series.len(), n);
        for p in series.pairs() {
            prop_assert_eq!(p.cue_step, p.participant_step);
            prop_assert!((p.asynchrony - c).abs() < 1e-9);
        }
    }

    #[test]
    fn asynchrony_sign_follows_onset_order(
        cue_times in increasing_times(2..25),
        participant_times in increasing_times(2..25),
    ) {
        let cue = OnsetSeries::from_times(&cue_times, Source::Cue).unwrap();
        let participant = OnsetSeries::from_times(&participant_times, Source::Participant).unwrap();
        let raw = match_onsets(&participant, &cue);
        let unwrapped = unwrap_asynchronies(&raw, 0.5);
        for series in [&raw, &unwrapped] {
            for p in series.pairs() {
                prop_assert_eq!(p.asynchrony, p.participant_time - p.cue_time);
                prop_assert_eq!(p.participant_time > p.cue_time, p.asynchrony > 0.0);
            }
            prop_assert!(series.pairs().windows(2).all(|w| w[1].cue_step > w[0].cue_step));
        }
    }

    #[test]
    fn matching_pairs_each_cue_at_most_once(
        cue_times in increasing_times(1..25),
        participant_times in increasing_times(1..25),
    ) {
        let cue = OnsetSeries::from_times(&cue_times, Source::Cue).unwrap();
        let participant = OnsetSeries::from_times(&participant_times, Source::Participant).unwrap();
        let series = match_onsets(&participant, &cue);
        prop_assert_eq!(series.len() + series.unmatched().len(), participant.len());
        prop_assert_eq!(series.len(), participant.len().min(cue.len()));
        let mut participants: Vec<_> = series.pairs().iter().map(|p| p.participant_step).collect();
        participants.sort();
        participants.dedup();
        prop_assert_eq!(participants.len(), series.len());
    }

    #[test]
    fn unwrap_is_continuous_and_idempotent(
        cue_isi in 0.3..1.0f64,
        drift in -0.3..0.3f64,
        lag in -0.2..0.2f64,
        n in 3usize..35,
        jitter in prop::collection::vec(-0.02..0.02f64, 35),
    ) {
        let cue = OnsetSeries::from_times(&regular(n, cue_isi, 2.0), Source::Cue).unwrap();
        let participant_isi = cue_isi * (1.0 + drift);
        let times: Vec<f64> = (0..n)
            .map(|i| 2.0 + lag * cue_isi + i as f64 * participant_isi + jitter[i] * cue_isi)
            .collect();
        let participant = OnsetSeries::from_times(&times, Source::Participant).unwrap();
        let raw = match_onsets(&participant, &cue);
        let once = unwrap_asynchronies(&raw, cue_isi);
        prop_assert!(max_continuous_jump(&once) < cue_isi / 2.0);
        let twice = unwrap_asynchronies(&once, cue_isi);
        prop_assert_eq!(&once, &twice);
    }

    #[test]
    fn continuous_series_is_left_alone(
        isi in 0.3..1.0f64,
        lags in prop::collection::vec(-0.2..0.2f64, 3..30),
    ) {
        // Step-to-step asynchrony changes stay below a quarter interval.
        let cue = OnsetSeries::from_times(&regular(lags.len(), isi, 1.0), Source::Cue).unwrap();
        let mut a = 0.0;
        let times: Vec<f64> = lags
            .iter()
            .enumerate()
            .map(|(i, l)| {
                a = (a + l * isi).clamp(-0.24 * isi, 0.24 * isi);
                1.0 + i as f64 * isi + a
            })
            .collect();
        let participant = OnsetSeries::from_times(&times, Source::Participant).unwrap();
        let raw = match_onsets(&participant, &cue);
        let unwrapped = unwrap_asynchronies(&raw, isi);
        prop_assert!(!unwrapped.unwrap_applied());
        prop_assert_eq!(unwrapped.pairs(), raw.pairs());
    }

    #[test]
    fn relative_curve_baseline_is_zero(
        asynchronies in prop::collection::vec(-0.3..0.3f64, 24..31),
        t in 10usize..17,
        exclude in 0usize..5,
    ) {
        let cue: Vec<f64> = regular(asynchronies.len(), 0.8, 1.0);
        let participant: Vec<f64> = cue.iter().zip(&asynchronies).map(|(c, a)| c + a).collect();
        let c = OnsetSeries::from_times(&cue, Source::Cue).unwrap();
        let p = OnsetSeries::from_times(&participant, Source::Participant).unwrap();
        let series = unwrap_asynchronies(&match_onsets(&p, &c), 0.8);
        let curve = relative_asynchrony(&series, t, exclude).unwrap();
        let window: Vec<f64> = series
            .pairs()
            .iter()
            .filter(|p| p.cue_step > exclude && p.cue_step < t)
            .map(|p| p.asynchrony - curve.baseline_mean)
            .collect();
        prop_assert_eq!(window.len(), curve.baseline_n);
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        prop_assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn missing_step_matches_brute_force(
        isi in 0.3..1.0f64,
        lags in prop::collection::vec(-0.2..0.2f64, 6),
        jitter in prop::collection::vec(-0.03..0.03f64, 6),
        missing in 0usize..6,
    ) {
        let cue: Vec<f64> = (0..6).map(|i| 1.0 + i as f64 * isi + jitter[i] * isi).collect();
        let participant: Vec<f64> = (0..6)
            .filter(|&i| i != missing)
            .map(|i| cue[i] + lags[i] * isi)
            .collect();
        let c = OnsetSeries::from_times(&cue, Source::Cue).unwrap();
        let p = OnsetSeries::from_times(&participant, Source::Participant).unwrap();
        let series = match_onsets(&p, &c);
        let found: Vec<(usize, usize)> = series.pairs().iter().map(|p| (p.participant_step, p.cue_step)).collect();
        prop_assert_eq!(found, brute_force(&participant, &cue));
        let interior = missing > 0 && missing < 5;
        prop_assert_eq!(series.gaps().to_vec(), if interior { vec![missing + 1] } else { vec![] });
    }
}

#[test]
fn constant_drift_unwraps_to_a_ramp() {
    let n = 30;
    let cue = OnsetSeries::from_times(&regular(n, 0.4, 1.0), Source::Cue).unwrap();
    // Participant step n lands 0.04 n after cue step n.
    let participant = OnsetSeries::from_times(&regular(n, 0.44, 1.04), Source::Participant).unwrap();
    let raw = match_onsets(&participant, &cue);
    let unwrapped = unwrap_asynchronies(&raw, 0.4);
    assert!(unwrapped.unwrap_applied());
    for p in unwrapped.pairs() {
        assert!((p.asynchrony - 0.04 * p.cue_step as f64).abs() < 1e-9, "step {}: {}", p.cue_step, p.asynchrony);
    }
    assert!(unwrapped.asynchronies().last().unwrap() > &0.4);
}

#[test]
fn drift_example_wraps_then_unwraps() {
    let cue = OnsetSeries::from_times(&regular(30, 0.4, 1.0), Source::Cue).unwrap();
    let participant = OnsetSeries::from_times(&regular(30, 0.44, 1.0), Source::Participant).unwrap();
    let raw = match_onsets(&participant, &cue);
    let jumps = raw.asynchronies().windows(2).filter(|w| w[1] < w[0]).count();
    assert!(jumps >= 2, "raw asynchronies should wrap");
    let unwrapped = unwrap_asynchronies(&raw, 0.4);
    assert!(unwrapped.asynchronies().windows(2).all(|w| w[1] > w[0]));
}
