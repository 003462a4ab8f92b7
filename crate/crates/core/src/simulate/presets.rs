use serde::{Deserialize, Serialize};

use super::PhaseCorrectionParams;

/// Named stepping agent. The timekeeper runs at the cue's nominal interval
/// plus `timekeeper_bias`, so one preset can be used at any tempo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentPreset {
    pub name: String,
    pub alpha: f64,
    #[serde(default)]
    pub timekeeper_bias: f64,
    pub timekeeper_sd: f64,
    #[serde(default)]
    pub motor_mean: f64,
    pub motor_sd: f64,
}

impl AgentPreset {
    pub fn params_for(&self, nominal_isi: f64) -> PhaseCorrectionParams {
        PhaseCorrectionParams {
            alpha: self.alpha,
            timekeeper_mean: nominal_isi + self.timekeeper_bias,
            timekeeper_sd: self.timekeeper_sd,
            motor_mean: self.motor_mean,
            motor_sd: self.motor_sd,
        }
    }
}

fn preset(name: &str, alpha: f64, timekeeper_sd: f64, motor_sd: f64) -> AgentPreset {
    AgentPreset {
        name: name.to_string(),
        alpha,
        timekeeper_bias: 0.0,
        timekeeper_sd,
        motor_mean: 0.05,
        motor_sd,
    }
}

/// Modality presets. Auditory-visual agents correct more and vary less than
/// visual-only agents; the visual-only fast agent barely corrects at all.
pub fn builtin_presets() -> Vec<AgentPreset> {
    vec![
        preset("AuditoryVisual-Slow", 0.405, 0.020, 0.010),
        preset("AuditoryVisual-Fast", 0.400, 0.020, 0.010),
        preset("VisualOnly-Slow", 0.265, 0.030, 0.015),
        preset("VisualOnly-Fast", 0.050, 0.035, 0.015),
    ]
}

pub fn find_preset<'a>(presets: &'a [AgentPreset], name: &str) -> Option<&'a AgentPreset> {
    presets.iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_are_unique() {
        let presets = builtin_presets();
        let mut names: Vec<_> = presets.iter().map(|p| p.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), presets.len());
    }

    #[test]
    fn presets_follow_modality_ordering() {
        let presets = builtin_presets();
        let av = find_preset(&presets, "AuditoryVisual-Slow").unwrap();
        let vo = find_preset(&presets, "VisualOnly-Slow").unwrap();
        assert!(av.alpha > vo.alpha && av.timekeeper_sd < vo.timekeeper_sd);
        assert_eq!(av.params_for(0.8).timekeeper_mean, 0.8);
        assert!(av.params_for(0.8).validate().is_ok());
    }
}
