use serde::{Deserialize, Serialize};

use crate::timing::{mean, sample_sd, CURVE_OFFSETS};

use super::config::Cell;
use super::pipeline::TrialResult;
use super::HarnessError;

/// Mean of one quantity over the included trials of a cell. `sd` and `sem`
/// are absent with fewer than two values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub sem: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let spread = (n >= 2).then(|| sample_sd(values));
        Self {
            mean: (n > 0).then(|| mean(values)),
            sd: spread,
            sem: spread.map(|sd| sd / (n as f64).sqrt()),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub offset: i64,
    pub mean: Option<f64>,
    pub sem: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub cell: Option<Cell>,
    pub n_included: usize,
    pub n_excluded: usize,
    pub cue_mean_isi: Stat,
    pub participant_mean_isi: Stat,
    pub participant_sd_isi: Stat,
    pub mean_asynchrony: Stat,
    pub sd_asynchrony: Stat,
    pub alpha_hat: Stat,
    pub percent_correction: Stat,
    pub curve: Vec<CurvePoint>,
}

impl ConditionSummary {
    pub fn label(&self) -> String {
        self.cell.as_ref().map_or_else(|| "trials".to_string(), Cell::id)
    }
}

fn collect<'a>(trials: &[&'a TrialResult], field: impl Fn(&'a TrialResult) -> Option<f64>) -> Stat {
    let values: Vec<f64> = trials.iter().filter_map(|t| field(t)).collect();
    Stat::of(&values)
}

/// Summarises the trials of one cell. Excluded trials are counted but do not
/// enter any statistic; curve points missing from a trial are skipped for
/// that point only.
pub fn aggregate(trials: &[TrialResult]) -> Result<ConditionSummary, HarnessError> {
    let cell = trials.first().and_then(|t| t.cell.clone());
    if trials.iter().any(|t| t.cell != cell) {
        return Err(HarnessError::MixedCells);
    }
    let included: Vec<&TrialResult> = trials.iter().filter(|t| t.included()).collect();
    if included.is_empty() {
        let label = cell.as_ref().map_or_else(|| "<no trials>".to_string(), Cell::id);
        return Err(HarnessError::EmptyCell(label));
    }

    let curve = CURVE_OFFSETS
        .map(|offset| {
            let values: Vec<f64> = included
                .iter()
                .filter_map(|t| t.curve.as_ref().and_then(|c| c.at(offset)))
                .collect();
            let stat = Stat::of(&values);
            CurvePoint {
                offset,
                mean: stat.mean,
                sem: stat.sem,
                n: stat.n,
            }
        })
        .collect();

    Ok(ConditionSummary {
        cell,
        n_included: included.len(),
        n_excluded: trials.len() - included.len(),
        cue_mean_isi: collect(&included, |t| Some(t.cue_mean_isi)),
        participant_mean_isi: collect(&included, |t| t.participant_mean_isi),
        participant_sd_isi: collect(&included, |t| t.participant_sd_isi),
        mean_asynchrony: collect(&included, |t| t.pre_perturbation.as_ref().map(|s| s.mean_asynchrony)),
        sd_asynchrony: collect(&included, |t| t.pre_perturbation.as_ref().map(|s| s.sd_asynchrony)),
        alpha_hat: collect(&included, |t| t.estimate.as_ref().map(|e| e.alpha_hat)),
        percent_correction: collect(&included, |t| t.percent_correction),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::pipeline::{analyze_trial, AnalysisOptions, Exclusion};
    use crate::simulate::{generate_cue_schedule, simulate_agent, PhaseCorrectionParams};
    use crate::timing::{Direction, PerturbationSpec};

    fn trial(alpha: f64, direction: Direction) -> TrialResult {
        let cue = generate_cue_schedule(0.8, 30, PerturbationSpec::new(direction), 0.0, 5).unwrap();
        let (participant, _) = simulate_agent(&PhaseCorrectionParams::noiseless(alpha, 0.8), &cue, 0.0, 0).unwrap();
        analyze_trial(&participant, &cue, &AnalysisOptions::default())
    }

    #[test]
    fn single_trial_summary_has_no_spread() {
        let t = trial(0.4, Direction::Positive);
        let s = aggregate(std::slice::from_ref(&t)).unwrap();
        assert_eq!(s.n_included, 1);
        assert_eq!(s.alpha_hat.mean, Some(t.estimate.as_ref().unwrap().alpha_hat));
        assert_eq!(s.alpha_hat.sem, None);
        assert_eq!(s.curve.len(), 11);
        for point in &s.curve {
            assert_eq!(point.mean, t.curve.as_ref().unwrap().at(point.offset));
            assert_eq!(point.sem, None);
        }
    }

    #[test]
    fn opposite_curves_cancel() {
        let a = trial(0.4, Direction::Positive);
        let b = trial(0.4, Direction::Negative);
        let s = aggregate(&[a, b]).unwrap();
        assert!(s.curve.iter().all(|p| p.mean.unwrap().abs() < 1e-12 && p.n == 2));
    }

    #[test]
    fn excluded_trials_are_counted_not_used() {
        let a = trial(0.4, Direction::Positive);
        let mut b = trial(0.9, Direction::Positive);
        b.exclusion = Some(Exclusion::Discontinuities { count: 3, limit: 2 });
        let s = aggregate(&[a.clone(), b.clone()]).unwrap();
        assert_eq!((s.n_included, s.n_excluded), (1, 1));
        assert_eq!(s.alpha_hat.mean, Some(a.estimate.unwrap().alpha_hat));
        assert!(matches!(aggregate(&[b]), Err(HarnessError::EmptyCell(_))));
    }

    #[test]
    fn stat_arithmetic() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, Some(2.5));
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s.sd.unwrap() - sd).abs() < 1e-15);
        assert!((s.sem.unwrap() - sd / 2.0).abs() < 1e-15);
        assert_eq!(Stat::of(&[]).mean, None);
    }
}
