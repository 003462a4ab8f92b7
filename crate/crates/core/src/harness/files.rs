use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::{detect_onsets, DetectorConfig};
use crate::simulate::{FootTrace, MarkerTrace};
use crate::timing::{
    compute_isi, median, CueSchedule, Direction, Foot, Onset, OnsetSeries, PerturbationSpec, Source,
};

use super::pipeline::{analyze_trial, cue_from_onsets, AnalysisOptions, ExperimentReport, TrialResult};
use super::{HarnessError, SCHEMA_VERSION};

const ONSET_HEADER: [&str; 3] = ["onset_time_s", "foot", "source"];
const TRACE_HEADER: [&str; 3] = ["time_s", "heel_y_m", "foot"];

/// Shortest representation that reads back to the same value, with at least
/// six decimals so columns line up.
pub fn format_seconds(value: f64) -> String {
    let mut s = format!("{value}");
    let decimals = match s.find('.') {
        Some(dot) => s.len() - dot - 1,
        None => {
            s.push('.');
            0
        }
    };
    for _ in decimals..6 {
        s.push('0');
    }
    s
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), HarnessError> {
    let mut out = create(path)?;
    let mut body = String::new();
    body.push_str(header);
    body.push('\n');
    for row in rows {
        body.push_str(&row);
        body.push('\n');
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| HarnessError::io(path, e))
}

/// Writes one or more onset streams as `onset_time_s,foot,source` rows.
pub fn write_onsets_csv(path: &Path, streams: &[&OnsetSeries]) -> Result<(), HarnessError> {
    let rows = streams.iter().flat_map(|s| {
        s.onsets()
            .iter()
            .map(move |o| format!("{},{},{}", format_seconds(o.time), o.foot.code(), s.source().code()))
    });
    write_lines(path, &ONSET_HEADER.join(","), rows)
}

/// Writes a marker trace as `time_s,heel_y_m,foot` rows, left channel first.
pub fn write_trace_csv(path: &Path, trace: &MarkerTrace) -> Result<(), HarnessError> {
    let rows = trace.channels.iter().flat_map(|c| {
        c.times
            .iter()
            .zip(&c.heights)
            .map(move |(t, h)| format!("{},{},{}", format_seconds(*t), format_seconds(*h), c.foot.code()))
    });
    write_lines(path, &TRACE_HEADER.join(","), rows)
}

struct CsvRows {
    path: String,
    reader: csv::Reader<std::fs::File>,
}

impl CsvRows {
    fn open(path: &Path, header: &[&str]) -> Result<Self, HarnessError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| HarnessError::io(path, e))?;
        let label = path.display().to_string();
        let found = reader.headers().map_err(|e| HarnessError::io(path, e))?.clone();
        for (i, expected) in header.iter().enumerate() {
            match found.get(i) {
                Some(name) if name == *expected => {}
                Some(name) => {
                    return Err(HarnessError::Schema {
                        path: label,
                        line: 1,
                        column: name.to_string(),
                        message: format!("expected column `{expected}`"),
                    })
                }
                None => {
                    return Err(HarnessError::Schema {
                        path: label,
                        line: 1,
                        column: expected.to_string(),
                        message: "missing column".into(),
                    })
                }
            }
        }
        if let Some(extra) = found.get(header.len()) {
            return Err(HarnessError::Schema {
                path: label,
                line: 1,
                column: extra.to_string(),
                message: "unexpected column".into(),
            });
        }
        Ok(Self { path: label, reader })
    }

    /// Calls `row` with each record's line number and fields.
    fn for_each(
        mut self,
        mut row: impl FnMut(&str, u64, &csv::StringRecord) -> Result<(), HarnessError>,
    ) -> Result<(), HarnessError> {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = record.position().map_or(0, |p| p.line());
                    row(&self.path, line, &record)?;
                }
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Err(HarnessError::Schema {
                        path: self.path.clone(),
                        line,
                        column: String::new(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
}

fn schema(path: &str, line: u64, column: &str, message: String) -> HarnessError {
    HarnessError::Schema {
        path: path.to_string(),
        line,
        column: column.to_string(),
        message,
    }
}

fn parse_number(path: &str, line: u64, column: &str, text: &str) -> Result<f64, HarnessError> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| schema(path, line, column, format!("`{text}` is not a finite number")))
}

fn parse_foot(path: &str, line: u64, text: &str) -> Result<Foot, HarnessError> {
    Foot::from_code(text).ok_or_else(|| schema(path, line, "foot", format!("`{text}` is not L or R")))
}

/// Participant and cue streams read from one onsets file.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetStreams {
    pub participant: Option<OnsetSeries>,
    pub cue: Option<OnsetSeries>,
}

pub fn read_onsets_csv(path: &Path) -> Result<OnsetStreams, HarnessError> {
    let mut participant = Vec::new();
    let mut cue = Vec::new();
    let mut last_line = [0u64; 2];
    CsvRows::open(path, &ONSET_HEADER)?.for_each(|file, line, record| {
        let time = parse_number(file, line, "onset_time_s", &record[0])?;
        let foot = parse_foot(file, line, &record[1])?;
        let source = Source::from_code(&record[2]).ok_or_else(|| {
            schema(file, line, "source", format!("`{}` is not participant or cue", &record[2]))
        })?;
        let (rows, slot) = match source {
            Source::Participant => (&mut participant, 0),
            Source::Cue => (&mut cue, 1),
        };
        if rows.last().is_some_and(|o: &Onset| time <= o.time) {
            return Err(schema(
                file,
                line,
                "onset_time_s",
                format!("{} onsets must be strictly increasing (previous row at line {})", source.code(), last_line[slot]),
            ));
        }
        last_line[slot] = line;
        rows.push(Onset { time, foot });
        Ok(())
    })?;
    let build = |rows: Vec<Onset>, source| -> Result<Option<OnsetSeries>, HarnessError> {
        if rows.is_empty() {
            Ok(None)
        } else {
            Ok(Some(OnsetSeries::new(rows, source)?))
        }
    };
    Ok(OnsetStreams {
        participant: build(participant, Source::Participant)?,
        cue: build(cue, Source::Cue)?,
    })
}

/// Reads a trace file. The sample rate is the reciprocal of the median
/// sample spacing of the first channel.
pub fn read_trace_csv(path: &Path) -> Result<MarkerTrace, HarnessError> {
    let mut channels: Vec<FootTrace> = Vec::new();
    CsvRows::open(path, &TRACE_HEADER)?.for_each(|file, line, record| {
        let time = parse_number(file, line, "time_s", &record[0])?;
        let height = parse_number(file, line, "heel_y_m", &record[1])?;
        let foot = parse_foot(file, line, &record[2])?;
        let channel = match channels.iter_mut().position(|c| c.foot == foot) {
            Some(i) => &mut channels[i],
            None => {
                channels.push(FootTrace {
                    foot,
                    times: Vec::new(),
                    heights: Vec::new(),
                });
                channels.last_mut().expect("just pushed")
            }
        };
        if channel.times.last().is_some_and(|&t| time <= t) {
            return Err(schema(file, line, "time_s", "timestamps must increase within a foot".into()));
        }
        channel.times.push(time);
        channel.heights.push(height);
        Ok(())
    })?;
    let spacings: Vec<f64> = channels
        .first()
        .map(|c| c.times.windows(2).map(|w| w[1] - w[0]).collect())
        .unwrap_or_default();
    if spacings.is_empty() {
        return Err(schema(&path.display().to_string(), 1, "time_s", "trace needs at least two samples".into()));
    }
    Ok(MarkerTrace {
        sample_rate: 1.0 / median(&spacings),
        channels,
    })
}

/// Constant-tempo cue with one perturbed interval, for data recorded without
/// a cue stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metronome {
    pub isi: f64,
    pub first_onset: f64,
    pub n_steps: usize,
    pub perturbed_step: usize,
    pub perturbation: PerturbationSpec,
}

impl Metronome {
    pub fn schedule(&self) -> Result<CueSchedule, HarnessError> {
        if self.n_steps < 2 {
            return Err(HarnessError::Usage(format!("metronome needs at least 2 steps, got {}", self.n_steps)));
        }
        let intervals = (1..self.n_steps)
            .map(|step| {
                if step == self.perturbed_step {
                    self.isi * self.perturbation.factor()
                } else {
                    self.isi
                }
            })
            .collect();
        Ok(CueSchedule::from_intervals(
            self.isi,
            self.first_onset,
            intervals,
            self.perturbation,
            self.perturbed_step,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParticipantInput {
    /// Participant rows of an onsets file.
    Onsets(PathBuf),
    Trace(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CueInput {
    /// Cue rows of an onsets file (possibly the participant's file).
    Onsets(PathBuf),
    Trace(PathBuf),
    Metronome(Metronome),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileInputs {
    pub participant: ParticipantInput,
    pub cue: Option<CueInput>,
    /// Perturbed step if known; otherwise the largest interval deviation
    /// inside `window` is taken.
    pub perturbed_step: Option<usize>,
    pub window: (usize, usize),
    pub detector: DetectorConfig,
    pub options: AnalysisOptions,
}

fn perturbation_at(onsets: &OnsetSeries, step: usize, window: (usize, usize)) -> Result<PerturbationSpec, HarnessError> {
    let isi = compute_isi(onsets)?;
    let nominal = median(isi.intervals());
    let interval = isi.starting_at_step(step).ok_or_else(|| {
        HarnessError::Usage(format!("perturbed step {step} has no following cue onset"))
    })?;
    let ratio = interval / nominal;
    Ok(PerturbationSpec {
        direction: if ratio >= 1.0 { Direction::Positive } else { Direction::Negative },
        magnitude: (ratio - 1.0).abs().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON),
        window,
    })
}

/// Runs the trial analysis on exported files.
pub fn analyze_files(inputs: &FileInputs) -> Result<TrialResult, HarnessError> {
    let participant = match &inputs.participant {
        ParticipantInput::Onsets(path) => read_onsets_csv(path)?
            .participant
            .ok_or(HarnessError::MissingParticipant)?,
        ParticipantInput::Trace(path) => {
            detect_onsets(&read_trace_csv(path)?, &inputs.detector, Source::Participant)?
        }
    };
    let cue_onsets = match &inputs.cue {
        None => return Err(HarnessError::MissingCue),
        Some(CueInput::Metronome(m)) => {
            let schedule = m.schedule()?;
            return Ok(analyze_trial(&participant, &schedule, &inputs.options));
        }
        Some(CueInput::Onsets(path)) => read_onsets_csv(path)?.cue.ok_or(HarnessError::MissingCue)?,
        Some(CueInput::Trace(path)) => detect_onsets(&read_trace_csv(path)?, &inputs.detector, Source::Cue)?,
    };
    let cue = match inputs.perturbed_step {
        Some(step) => {
            let perturbation = perturbation_at(&cue_onsets, step, inputs.window)?;
            cue_from_onsets(cue_onsets, perturbation, step)?
        }
        None => CueSchedule::infer_from_onsets(cue_onsets, inputs.window)?,
    };
    Ok(analyze_trial(&participant, &cue, &inputs.options))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    text.push('\n');
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| HarnessError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| HarnessError::Schema {
        path: path.display().to_string(),
        line: e.line() as u64,
        column: String::new(),
        message: e.to_string(),
    })?;
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(SCHEMA_VERSION as u64) {
        return Err(HarnessError::Schema {
            path: path.display().to_string(),
            line: 1,
            column: "schema_version".into(),
            message: format!("expected schema_version {SCHEMA_VERSION}, found {version:?}"),
        });
    }
    serde_json::from_value(value).map_err(|e| HarnessError::Schema {
        path: path.display().to_string(),
        line: 0,
        column: String::new(),
        message: e.to_string(),
    })
}

pub fn write_results(path: &Path, report: &ExperimentReport) -> Result<(), HarnessError> {
    write_json(path, report)
}

pub fn read_results(path: &Path) -> Result<ExperimentReport, HarnessError> {
    read_json(path)
}

/// Single analysed trial as written by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub trial: TrialResult,
}

pub fn write_trial_record(path: &Path, trial: &TrialResult) -> Result<(), HarnessError> {
    write_json(
        path,
        &TrialRecord {
            schema_version: SCHEMA_VERSION,
            trial: trial.clone(),
        },
    )
}

pub fn read_trial_record(path: &Path) -> Result<TrialRecord, HarnessError> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seconds_formatting() {
        assert_eq!(format_seconds(1.0), "1.000000");
        assert_eq!(format_seconds(0.8), "0.800000");
        assert_eq!(format_seconds(2.4000000000000004), "2.4000000000000004");
        assert_eq!(format_seconds(-0.05), "-0.050000");
        for v in [0.1 + 0.2, 1.0 / 3.0, 12345.678901234] {
            assert_eq!(format_seconds(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn onsets_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("onsets.csv");
        let p = OnsetSeries::from_times(&[1.05, 1.8500000000000003, 2.61], Source::Participant).unwrap();
        let c = OnsetSeries::from_times(&[1.0, 1.8, 2.6], Source::Cue).unwrap();
        write_onsets_csv(&path, &[&p, &c]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("onset_time_s,foot,source\n1.050000,L,participant\n"));
        let back = read_onsets_csv(&path).unwrap();
        assert_eq!(back.participant.unwrap(), p);
        assert_eq!(back.cue.unwrap(), c);
    }

    #[test]
    fn bad_header_names_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "onset_time,foot,source\n1.0,L,cue\n").unwrap();
        match read_onsets_csv(&path) {
            Err(HarnessError::Schema { line, column, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(column, "onset_time");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "onset_time_s,foot,source\n1.0,L,cue\n1.5,X,cue\n").unwrap();
        match read_onsets_csv(&path) {
            Err(HarnessError::Schema { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "foot");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_cue_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = OnsetSeries::from_times(&[1.0, 1.8, 2.6], Source::Participant).unwrap();
        write_onsets_csv(&path, &[&p]).unwrap();
        let inputs = FileInputs {
            participant: ParticipantInput::Onsets(path.clone()),
            cue: Some(CueInput::Onsets(path)),
            perturbed_step: None,
            window: (10, 16),
            detector: DetectorConfig::default(),
            options: AnalysisOptions::default(),
        };
        assert!(matches!(analyze_files(&inputs), Err(HarnessError::MissingCue)));
        let inputs = FileInputs { cue: None, ..inputs };
        assert!(matches!(analyze_files(&inputs), Err(HarnessError::MissingCue)));
    }
}
