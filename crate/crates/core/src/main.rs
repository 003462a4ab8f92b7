use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stepsync_core::detect::{detect_onsets, DetectorConfig, ThresholdHeight};
use stepsync_core::harness::{
    analyze_files, emit_report, read_results, read_trace_csv, run_experiment, write_onsets_csv,
    write_results, write_trace_csv, write_trial_record, AnalysisOptions, CueInput, ExperimentConfig,
    FileInputs, Format, HarnessError, Metronome, ParticipantInput, SCHEMA_VERSION,
};
use stepsync_core::rng::derive_seed;
use stepsync_core::simulate::{
    generate_cue_schedule, simulate_agent, synthesize_trace, CUE_START,
};
use stepsync_core::timing::{Direction, PerturbationSpec, Source};

#[derive(Parser)]
#[command(name = "stepsync", version, about = "Simulate and analyse stepping in time with a perturbed cue")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trial and write its onsets (and optionally traces).
    Simulate(SimulateArgs),
    /// Detect step onsets in a heel-marker trace file.
    Detect(DetectArgs),
    /// Analyse one trial from onset or trace files.
    Analyze(AnalyzeArgs),
    /// Run a full experiment from a config file.
    Run(RunArgs),
    /// Render curve CSVs and plots from a results file.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Svg,
    All,
    None,
}

impl FormatArg {
    fn formats(self) -> Vec<Format> {
        match self {
            FormatArg::Csv => vec![Format::Csv],
            FormatArg::Svg => vec![Format::Svg],
            FormatArg::All => vec![Format::Csv, Format::Svg],
            FormatArg::None => vec![],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Positive,
    Negative,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Positive => Direction::Positive,
            DirectionArg::Negative => Direction::Negative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Participant,
    Cue,
}

#[derive(Args)]
struct SimulateArgs {
    /// Config supplying presets, perturbation, jitter and trace settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name, e.g. AuditoryVisual-Slow.
    #[arg(long, default_value = "AuditoryVisual-Slow")]
    preset: String,
    /// Nominal cue interval, seconds.
    #[arg(long, default_value_t = 0.8)]
    tempo: f64,
    #[arg(long, value_enum, default_value_t = DirectionArg::Positive)]
    direction: DirectionArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write participant and cue heel-marker traces.
    #[arg(long)]
    traces: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = SourceArg::Participant)]
    source: SourceArg,
    /// Absolute threshold height in metres (default: 20% of the median peak).
    #[arg(long)]
    threshold: Option<f64>,
    /// Refractory period in seconds.
    #[arg(long)]
    refractory: Option<f64>,
    #[arg(long)]
    no_interpolate: bool,
    /// Output onsets CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Onsets CSV; its participant rows are used, and its cue rows unless
    /// another cue source is given.
    #[arg(long)]
    onsets: Option<PathBuf>,
    /// Separate onsets CSV holding the cue rows.
    #[arg(long)]
    cue: Option<PathBuf>,
    #[arg(long)]
    participant_trace: Option<PathBuf>,
    #[arg(long)]
    cue_trace: Option<PathBuf>,
    /// Use a constant metronome with this interval (seconds) as the cue.
    #[arg(long)]
    metronome_isi: Option<f64>,
    #[arg(long, default_value_t = CUE_START)]
    metronome_start: f64,
    #[arg(long, default_value_t = 30)]
    metronome_steps: usize,
    #[arg(long, value_enum, default_value_t = DirectionArg::Positive)]
    direction: DirectionArg,
    #[arg(long, default_value_t = PerturbationSpec::DEFAULT_MAGNITUDE)]
    magnitude: f64,
    /// Step whose following cue interval is perturbed; inferred when omitted.
    #[arg(long)]
    perturbed_step: Option<usize>,
    #[arg(long, default_value_t = PerturbationSpec::DEFAULT_WINDOW.0)]
    window_lo: usize,
    #[arg(long, default_value_t = PerturbationSpec::DEFAULT_WINDOW.1)]
    window_hi: usize,
    #[arg(long, default_value_t = 3)]
    exclude_first: usize,
    /// Output trial JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::All)]
    format: FormatArg,
    /// Worker threads (0 = all cores); overrides the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::All)]
    format: FormatArg,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

#[derive(Serialize)]
struct ScheduleRecord {
    schema_version: u32,
    preset: String,
    tempo: f64,
    perturbation: PerturbationSpec,
    perturbed_step: usize,
    seed: u64,
}

fn simulate(args: SimulateArgs) -> Result<(), HarnessError> {
    let config = load_config(args.config.as_deref())?;
    let direction: Direction = args.direction.into();
    if !(args.tempo > 0.0 && args.tempo.is_finite()) {
        return Err(HarnessError::Usage(format!("tempo {} must be positive", args.tempo)));
    }
    let preset = stepsync_core::simulate::find_preset(
        &config.presets.iter().cloned().chain(stepsync_core::simulate::builtin_presets()).collect::<Vec<_>>(),
        &args.preset,
    )
    .cloned()
    .ok_or_else(|| HarnessError::Usage(format!("unknown preset {}", args.preset)))?;
    let perturbation = config.perturbation_spec(direction);
    let cue = generate_cue_schedule(
        args.tempo,
        config.n_steps,
        perturbation,
        config.cue_jitter_sd,
        derive_seed(args.seed, &["cue"]),
    )?;
    let (participant, _) = simulate_agent(
        &preset.params_for(args.tempo),
        &cue,
        config.initial_asynchrony,
        derive_seed(args.seed, &["agent"]),
    )?;
    write_onsets_csv(&args.out.join("onsets.csv"), &[&participant, cue.onsets()])?;
    let record = ScheduleRecord {
        schema_version: SCHEMA_VERSION,
        preset: preset.name.clone(),
        tempo: args.tempo,
        perturbation,
        perturbed_step: cue.perturbed_step(),
        seed: args.seed,
    };
    let path = args.out.join("schedule.json");
    let text = serde_json::to_string_pretty(&record).map_err(|e| HarnessError::Runtime(e.to_string()))? + "\n";
    std::fs::write(&path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if args.traces {
        let p = synthesize_trace(
            &participant,
            &config.trace.params(config.trace.participant_rate),
            derive_seed(args.seed, &["participant-trace"]),
        )?;
        let c = synthesize_trace(
            cue.onsets(),
            &config.trace.params(config.trace.cue_rate),
            derive_seed(args.seed, &["cue-trace"]),
        )?;
        write_trace_csv(&args.out.join("participant_trace.csv"), &p)?;
        write_trace_csv(&args.out.join("cue_trace.csv"), &c)?;
    }
    Ok(())
}

fn detector_from(threshold: Option<f64>, refractory: Option<f64>, no_interpolate: bool) -> DetectorConfig {
    let mut config = DetectorConfig::default();
    if let Some(h) = threshold {
        config.threshold = ThresholdHeight::Fixed(h);
    }
    if let Some(r) = refractory {
        config.refractory = r;
    }
    config.interpolate = !no_interpolate;
    config
}

fn detect(args: DetectArgs) -> Result<(), HarnessError> {
    let config = detector_from(args.threshold, args.refractory, args.no_interpolate);
    config.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
    let source = match args.source {
        SourceArg::Participant => Source::Participant,
        SourceArg::Cue => Source::Cue,
    };
    let onsets = detect_onsets(&read_trace_csv(&args.trace)?, &config, source)?;
    write_onsets_csv(&args.out, &[&onsets])
}

fn analyze(args: AnalyzeArgs) -> Result<(), HarnessError> {
    let participant = match (&args.onsets, &args.participant_trace) {
        (_, Some(trace)) => ParticipantInput::Trace(trace.clone()),
        (Some(onsets), None) => ParticipantInput::Onsets(onsets.clone()),
        (None, None) => return Err(HarnessError::MissingParticipant),
    };
    let window = (args.window_lo, args.window_hi);
    let cue = if let Some(isi) = args.metronome_isi {
        let perturbed_step = args.perturbed_step.ok_or_else(|| {
            HarnessError::Usage("--metronome-isi needs --perturbed-step".into())
        })?;
        Some(CueInput::Metronome(Metronome {
            isi,
            first_onset: args.metronome_start,
            n_steps: args.metronome_steps,
            perturbed_step,
            perturbation: PerturbationSpec {
                direction: args.direction.into(),
                magnitude: args.magnitude,
                window,
            },
        }))
    } else if let Some(trace) = args.cue_trace {
        Some(CueInput::Trace(trace))
    } else {
        args.cue.or(args.onsets).map(CueInput::Onsets)
    };
    let inputs = FileInputs {
        participant,
        cue,
        perturbed_step: args.perturbed_step,
        window,
        detector: DetectorConfig::default(),
        options: AnalysisOptions {
            exclude_first: args.exclude_first,
            ..AnalysisOptions::default()
        },
    };
    let result = analyze_files(&inputs)?;
    write_trial_record(&args.out, &result)
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    let report = run_experiment(&config)?;
    write_results(&args.out.join("results.json"), &report)?;
    emit_report(&report, &args.out, &args.format.formats())?;
    let included: usize = report.summaries.iter().map(|s| s.n_included).sum();
    println!(
        "{} trials, {} included, {} cells, results in {}",
        report.trials.len(),
        included,
        report.summaries.len(),
        args.out.display()
    );
    for cell in &report.empty_cells {
        eprintln!("warning: every trial in {cell} was excluded");
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), HarnessError> {
    let report = read_results(&args.results)?;
    for path in emit_report(&report, &args.out, &args.format.formats())? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Detect(args) => detect(args),
        Command::Analyze(args) => analyze(args),
        Command::Run(args) => run(args),
        Command::Report(args) => report(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
