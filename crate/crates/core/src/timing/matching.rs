//! Pairing participant onsets with cue onsets and removing phase wraps.

use serde::{Deserialize, Serialize};

use super::{OnsetSeries, TimingError};

/// One participant onset matched to one cue onset. `asynchrony` is
/// `participant_time - cue_time`, so a lagging participant is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsynchronyPair {
    pub participant_step: usize,
    pub cue_step: usize,
    pub participant_time: f64,
    pub cue_time: f64,
    pub asynchrony: f64,
}

impl AsynchronyPair {
    pub fn new(participant_step: usize, participant_time: f64, cue_step: usize, cue_time: f64) -> Self {
        Self {
            participant_step,
            cue_step,
            participant_time,
            cue_time,
            asynchrony: participant_time - cue_time,
        }
    }
}

/// Matched onset pairs ordered by cue step.
///
/// `gaps` lists interior cue steps with no participant onset. `breaks` lists
/// pair positions where unwrapping could not keep the series continuous and
/// restarted instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsynchronySeries {
    pairs: Vec<AsynchronyPair>,
    cue_times: Vec<f64>,
    unmatched: Vec<(usize, f64)>,
    gaps: Vec<usize>,
    breaks: Vec<usize>,
    unwrap_applied: bool,
}

impl AsynchronySeries {
    /// Builds a series from pairs already ordered by strictly increasing cue step.
    pub fn from_pairs(pairs: Vec<AsynchronyPair>, cue_times: Vec<f64>) -> Result<Self, TimingError> {
        if let Some(index) = pairs
            .windows(2)
            .position(|w| w[1].cue_step <= w[0].cue_step)
        {
            return Err(TimingError::NonIncreasing { index: index + 1 });
        }
        let gaps = interior_gaps(&pairs);
        Ok(Self {
            pairs,
            cue_times,
            unmatched: Vec::new(),
            gaps,
            breaks: Vec::new(),
            unwrap_applied: false,
        })
    }

    pub fn pairs(&self) -> &[AsynchronyPair] {
        &self.pairs
    }

    pub fn asynchronies(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.asynchrony).collect()
    }

    pub fn cue_times(&self) -> &[f64] {
        &self.cue_times
    }

    /// Participant onsets (step, time) that found no cue onset.
    pub fn unmatched(&self) -> &[(usize, f64)] {
        &self.unmatched
    }

    pub fn gaps(&self) -> &[usize] {
        &self.gaps
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    pub fn unwrap_applied(&self) -> bool {
        self.unwrap_applied
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Missing cue steps plus continuity restarts.
    pub fn discontinuity_count(&self) -> usize {
        self.gaps.len() + self.breaks.len()
    }

    pub fn pair_at_cue_step(&self, cue_step: usize) -> Option<&AsynchronyPair> {
        self.pairs
            .binary_search_by_key(&cue_step, |p| p.cue_step)
            .ok()
            .map(|i| &self.pairs[i])
    }

    /// Whether pair `index` directly continues pair `index - 1`: adjacent cue
    /// steps and no restart between them.
    pub fn continues_previous(&self, index: usize) -> bool {
        index > 0
            && index < self.pairs.len()
            && self.pairs[index].cue_step == self.pairs[index - 1].cue_step + 1
            && !self.breaks.contains(&index)
    }

    /// Cue time at a 1-based step, extrapolated at `nominal_isi` past either end.
    fn cue_time_at(&self, step: usize, nominal_isi: f64) -> f64 {
        let n = self.cue_times.len();
        if step == 0 {
            self.cue_times[0] - nominal_isi
        } else if step <= n {
            self.cue_times[step - 1]
        } else {
            self.cue_times[n - 1] + (step - n) as f64 * nominal_isi
        }
    }

    /// Cue step `>= min_step` whose asynchrony for an onset at `time` is
    /// closest to `target`. Asynchrony falls strictly with the step, so the
    /// distance is unimodal and a forward climb finds the minimum.
    fn closest_step(&self, time: f64, min_step: usize, target: f64, nominal_isi: f64) -> usize {
        let distance = |step: usize| (time - self.cue_time_at(step, nominal_isi) - target).abs();
        let n = self.cue_times.len();
        let mut step = min_step.max(1);
        // Skip ahead inside the recorded stream before climbing.
        if step <= n {
            let goal = time - target;
            let first_after = self.cue_times.partition_point(|&c| c < goal) + 1;
            if first_after > step + 1 {
                step = (first_after - 1).min(n).max(step);
            }
        }
        let mut best = distance(step);
        loop {
            let next = distance(step + 1);
            if next < best {
                step += 1;
                best = next;
            } else {
                return step;
            }
        }
    }
}

fn interior_gaps(pairs: &[AsynchronyPair]) -> Vec<usize> {
    pairs
        .windows(2)
        .flat_map(|w| (w[0].cue_step + 1)..w[1].cue_step)
        .collect()
}

/// Walks cue onsets outward from a participant onset, nearest first, earlier
/// cue first on exact ties.
struct NearestCues<'a> {
    cues: &'a [f64],
    time: f64,
    below: Option<usize>,
    above: usize,
}

impl<'a> NearestCues<'a> {
    fn new(cues: &'a [f64], time: f64) -> Self {
        let above = cues.partition_point(|&c| c < time);
        Self {
            cues,
            time,
            below: above.checked_sub(1),
            above,
        }
    }
}

impl Iterator for NearestCues<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let below = self.below.map(|i| (i, self.time - self.cues[i]));
        let above = (self.above < self.cues.len()).then(|| (self.above, self.cues[self.above] - self.time));
        match (below, above) {
            (Some((i, dl)), Some((_, dh))) if dl <= dh => {
                self.below = i.checked_sub(1);
                Some(i)
            }
            (_, Some((j, _))) => {
                self.above += 1;
                Some(j)
            }
            (Some((i, _)), None) => {
                self.below = i.checked_sub(1);
                Some(i)
            }
            (None, None) => None,
        }
    }
}

/// Pairs every participant onset with its nearest cue onset, one participant
/// per cue. When two participant onsets compete for a cue the nearer keeps it
/// (the earlier onset on exact ties) and the other moves on to its next-nearest
/// free cue. The result is the participant-proposing stable matching, so it
/// does not depend on processing order.
pub fn match_onsets(participant: &OnsetSeries, cue: &OnsetSeries) -> AsynchronySeries {
    let p_times = participant.times();
    let c_times = cue.times();

    let mut holder: Vec<Option<usize>> = vec![None; c_times.len()];
    let mut candidates: Vec<NearestCues> = p_times
        .iter()
        .map(|&t| NearestCues::new(&c_times, t))
        .collect();
    let mut unmatched = Vec::new();
    let mut free: Vec<usize> = (0..p_times.len()).rev().collect();

    while let Some(i) = free.pop() {
        let Some(j) = candidates[i].next() else {
            unmatched.push((i + 1, p_times[i]));
            continue;
        };
        let distance = (p_times[i] - c_times[j]).abs();
        match holder[j] {
            None => holder[j] = Some(i),
            Some(k) => {
                let held = (p_times[k] - c_times[j]).abs();
                if distance < held || (distance == held && i < k) {
                    holder[j] = Some(i);
                    free.push(k);
                } else {
                    free.push(i);
                }
            }
        }
    }

    let pairs: Vec<AsynchronyPair> = holder
        .iter()
        .enumerate()
        .filter_map(|(j, h)| h.map(|i| AsynchronyPair::new(i + 1, p_times[i], j + 1, c_times[j])))
        .collect();
    unmatched.sort_by_key(|&(step, _)| step);
    let gaps = interior_gaps(&pairs);
    AsynchronySeries {
        pairs,
        cue_times: c_times,
        unmatched,
        gaps,
        breaks: Vec::new(),
        unwrap_applied: false,
    }
}

/// Reassigns cue steps so that asynchrony evolves continuously.
///
/// Participant onsets are visited in order. The first keeps its raw cue; each
/// later onset takes the next free cue step whose asynchrony is closest to the
/// previous one. When even that jump is at least `nominal_isi / 2` the onset
/// keeps its raw cue (or its nearest later cue) and continuity restarts there.
/// Cue times beyond the recorded stream are extrapolated at `nominal_isi`, so
/// unwrapped asynchronies may exceed one interval.
pub fn unwrap_asynchronies(raw: &AsynchronySeries, nominal_isi: f64) -> AsynchronySeries {
    assert!(
        nominal_isi > 0.0 && nominal_isi.is_finite(),
        "nominal_isi must be positive"
    );
    if raw.cue_times.is_empty() {
        return raw.clone();
    }

    let mut onsets: Vec<(usize, f64, Option<usize>)> = raw
        .pairs
        .iter()
        .map(|p| (p.participant_step, p.participant_time, Some(p.cue_step)))
        .chain(raw.unmatched.iter().map(|&(step, t)| (step, t, None)))
        .collect();
    onsets.sort_by_key(|&(step, _, _)| step);

    let half = nominal_isi / 2.0;
    let mut pairs: Vec<AsynchronyPair> = Vec::with_capacity(onsets.len());
    let mut breaks = Vec::new();
    let mut changed = false;

    for &(participant_step, time, raw_cue) in &onsets {
        let cue_step = match pairs.last() {
            None => raw_cue.unwrap_or_else(|| raw.closest_step(time, 1, 0.0, nominal_isi)),
            Some(prev) => {
                let step = raw.closest_step(time, prev.cue_step + 1, prev.asynchrony, nominal_isi);
                let asynchrony = time - raw.cue_time_at(step, nominal_isi);
                if (asynchrony - prev.asynchrony).abs() < half {
                    step
                } else {
                    breaks.push(pairs.len());
                    match raw_cue {
                        Some(j) if j > prev.cue_step => j,
                        _ => raw.closest_step(time, prev.cue_step + 1, 0.0, nominal_isi),
                    }
                }
            }
        };
        changed |= raw_cue != Some(cue_step);
        pairs.push(AsynchronyPair::new(
            participant_step,
            time,
            cue_step,
            raw.cue_time_at(cue_step, nominal_isi),
        ));
    }

    let gaps = interior_gaps(&pairs);
    AsynchronySeries {
        pairs,
        cue_times: raw.cue_times.clone(),
        unmatched: Vec::new(),
        gaps,
        breaks,
        unwrap_applied: raw.unwrap_applied || changed,
    }
}
