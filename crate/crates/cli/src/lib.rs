//! Commands behind the `siamcorners` binary. Each one validates its inputs
//! before it writes anything, so a failed run leaves no partial output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use siamcorners::config::{Config, ExtractorKind};
use siamcorners::cropping::BBox;
use siamcorners::evaluation::{aggregate, BenchmarkReport, MetricReport, SequenceOutcome};
use siamcorners::io;
use siamcorners::selftest::{self, CheckResult};
use siamcorners::synth::{generate, Sequence, SequenceSpec};
use siamcorners::tracker::train::{overfit_train, synthetic_pairs, TrainOutcome};
use siamcorners::tracker::save_params;
use siamcorners::Error;

/// Colour of predicted boxes in overlay images.
pub const OVERLAY_COLOR: [f64; 3] = [0.1, 1.0, 0.1];

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numeric(_) | Error::Contract(_) | Error::Shape(_) => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads `path` (or the defaults) and applies command-line overrides.
pub fn effective_config(path: Option<&Path>, seed: Option<u64>, extractor: Option<&str>) -> CliResult<Config> {
    let mut c = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?
        }
        None => Config::default(),
    };
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(e) = extractor {
        c.extractor = e.parse::<ExtractorKind>()?;
    }
    c.validate()?;
    Ok(c)
}

#[derive(Clone, Debug)]
pub struct TrackOutput {
    pub boxes: Vec<BBox>,
    pub seconds: f64,
    pub fps: f64,
}

pub const BOXES_FILE: &str = "boxes.txt";

/// Tracks one sequence directory; writes `boxes.txt` and `overlay/NNNNN.png`
/// under `out_dir`. Timing is returned, not written, so reruns are byte-identical.
pub fn cmd_track(sequence_dir: &Path, config: &Config, out_dir: &Path) -> CliResult<TrackOutput> {
    let seq = io::load_sequence_dir(sequence_dir)?;
    let tracker = config.build_tracker()?;
    let start = Instant::now();
    let boxes = tracker.run(&seq.frames, seq.groundtruth[0])?;
    let seconds = start.elapsed().as_secs_f64();
    let fps = if seconds > 0.0 { boxes.len() as f64 / seconds } else { 0.0 };

    let overlay_dir = out_dir.join("overlay");
    fs::create_dir_all(&overlay_dir)?;
    io::write_boxes(&out_dir.join(BOXES_FILE), &boxes)?;
    for (i, (frame, b)) in seq.frames.iter().zip(&boxes).enumerate() {
        io::save_frame(&overlay_dir.join(format!("{:05}.png", i + 1)), &io::draw_box(frame, b, OVERLAY_COLOR))?;
    }
    Ok(TrackOutput { boxes, seconds, fps })
}

/// Scores result boxes against every sequence of `dataset_dir`. Sequences
/// whose results are missing or have the wrong length are flagged and skipped.
/// Writes `<name>.txt` reports, `<name>.plot` curves, `aggregate.txt`,
/// `aggregate.plot` and `summary.txt` to `out_dir`.
pub fn cmd_eval(dataset_dir: &Path, results_dir: &Path, out_dir: &Path) -> CliResult<BenchmarkReport> {
    let dirs = io::list_sequence_dirs(dataset_dir).map_err(|e| CliError::input(format!("{}: {e}", dataset_dir.display())))?;
    if dirs.is_empty() {
        return Err(CliError::input(format!("no sequences with {} in {}", io::GROUNDTRUTH_FILE, dataset_dir.display())));
    }
    if !results_dir.is_dir() {
        return Err(CliError::input(format!("results directory {} not found", results_dir.display())));
    }
    let outcomes: Vec<SequenceOutcome> = dirs
        .iter()
        .map(|d| {
            let name = d.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            let report = io::read_boxes(&d.join(io::GROUNDTRUTH_FILE))
                .and_then(|gt| {
                    let pred = io::load_result_boxes(results_dir, &name)?;
                    MetricReport::from_boxes(&pred, &gt, 0.0)
                })
                .map_err(|e| e.to_string());
            SequenceOutcome { name, report }
        })
        .collect();
    let report = aggregate(outcomes)?;

    fs::create_dir_all(out_dir)?;
    let mut summary = String::from("sequence success_auc precision_at_20 norm_precision_auc\n");
    for s in &report.sequences {
        match &s.report {
            Ok(r) => {
                fs::write(out_dir.join(format!("{}.txt", s.name)), r.to_text())?;
                fs::write(out_dir.join(format!("{}.plot", s.name)), r.plot_data())?;
                summary.push_str(&format!("{} {:.6} {:.6} {:.6}\n", s.name, r.success_auc, r.precision_at_20, r.norm_precision_auc));
            }
            Err(msg) => summary.push_str(&format!("{} skipped: {msg}\n", s.name)),
        }
    }
    let a = &report.aggregate;
    summary.push_str(&format!("mean {:.6} {:.6} {:.6}\n", a.success_auc, a.precision_at_20, a.norm_precision_auc));
    fs::write(out_dir.join("aggregate.txt"), a.to_text())?;
    fs::write(out_dir.join("aggregate.plot"), a.plot_data())?;
    fs::write(out_dir.join("summary.txt"), summary)?;
    Ok(report)
}

/// Renders a synthetic sequence directory from an optional JSON spec.
pub fn cmd_synth(spec_path: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> CliResult<Sequence> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<SequenceSpec>(&text).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?
        }
        None => SequenceSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let seq = generate(&spec)?;
    io::write_sequence_dir(out_dir, &seq)?;
    Ok(seq)
}

pub const PARAMS_FILE: &str = "params.bin";
pub const LOSS_FILE: &str = "loss.txt";

/// Fits the heads on synthetic pairs with the toy extractor of `config`;
/// writes `params.bin` and a `step loss` log.
pub fn cmd_train(config: &Config, out_dir: &Path) -> CliResult<TrainOutcome> {
    let extractor = config.toy_extractor();
    let pairs = synthetic_pairs(config.train_pairs, config.seed, config.template_size, config.search_size, config.t_wh)?;
    let outcome = overfit_train(&extractor, config.initial_params(), &pairs, &config.train_config())?;
    fs::create_dir_all(out_dir)?;
    save_params(&outcome.params, &out_dir.join(PARAMS_FILE))?;
    let log: String = outcome.losses.iter().enumerate().map(|(i, l)| format!("{i} {l:.9e}\n")).collect();
    fs::write(out_dir.join(LOSS_FILE), log)?;
    Ok(outcome)
}

/// Runs the built-in checks; returns the results and whether all passed.
pub fn cmd_selftest() -> (Vec<CheckResult>, bool) {
    let results = selftest::run_all();
    let ok = results.iter().all(|r| r.passed);
    (results, ok)
}

pub fn default_out(command: &str) -> PathBuf {
    PathBuf::from("out").join(command)
}
