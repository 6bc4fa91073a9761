//! Command-line front end: argument parsing, configuration resolution and the
//! `cmd_*` entry points used by the `scratch-anomaly` binary.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use scratch_anomaly::corpus::{generate_corpus, CorpusSpec};
use scratch_anomaly::ingest::{load_dataset, load_project, Dataset};
use scratch_anomaly::miner::MiningConfig;
use scratch_anomaly::model::extract_models;
use scratch_anomaly::props::props_all;
use scratch_anomaly::ratio::{parse_rational, to_fixed, Rational};
use scratch_anomaly::report::{model_file_stem, model_to_json, Analysis, AnomalyReport, DatasetStats, SweepReport};
use scratch_anomaly::{dot, Error, Result};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;

/// Support values tried by `sweep` when none are given.
pub const DEFAULT_SWEEP_SUPPORTS: [usize; 5] = [1, 5, 10, 15, 20];

pub fn default_sweep_confidences() -> Vec<Rational> {
    (1..=9).map(|i| Rational::new(i, 10)).collect()
}

#[derive(Debug, Parser)]
#[command(name = "scratch-anomaly", version, about = "Find anomalous scripts in a class of Scratch solutions")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, env = "SCRATCH_ANOMALY_JOBS")]
    pub jobs: Option<usize>,

    /// Log loader warnings and progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset statistics: solutions, models, patterns, anomalies and means.
    Stats {
        dataset: PathBuf,
        #[command(flatten)]
        mining: MiningArgs,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one model file per script, named by project, actor and index.
    ExtractModels {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelFormat::Dot)]
        format: ModelFormat,
    },
    /// Mine patterns and report the top-ranked anomalies.
    Mine {
        dataset: PathBuf,
        #[command(flatten)]
        mining: MiningArgs,
        /// Number of anomalies listed.
        #[arg(long, default_value_t = 10, env = "SCRATCH_ANOMALY_TOP")]
        top: usize,
        #[arg(long, value_enum, default_value_t = MineFormat::Text)]
        format: MineFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Anomaly counts over a grid of minimum supports and confidences.
    Sweep {
        dataset: PathBuf,
        #[command(flatten)]
        mining: MiningArgs,
        /// Comma-separated minimum supports [default: 1,5,10,15,20].
        #[arg(long, value_delimiter = ',')]
        supports: Vec<usize>,
        /// Comma-separated minimum confidences [default: 0.1,0.2,...,0.9].
        #[arg(long, value_delimiter = ',', value_parser = confidence_arg)]
        confidences: Vec<Rational>,
        #[arg(long, value_enum, default_value_t = SweepFormat::Csv)]
        format: SweepFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic class from a reference solution and a TOML spec.
    GenCorpus {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Minimum support 10 and minimum confidence 0.7.
    SmallClass,
}

/// Thresholds. Precedence: flag, then environment, then preset, then default.
#[derive(Debug, Clone, Default, Args)]
pub struct MiningArgs {
    #[arg(long, env = "SCRATCH_ANOMALY_MIN_SUPPORT")]
    pub min_support: Option<usize>,
    #[arg(long, env = "SCRATCH_ANOMALY_MIN_CONFIDENCE", value_parser = confidence_arg)]
    pub min_confidence: Option<Rational>,
    /// Smallest violated pattern reported.
    #[arg(long, env = "SCRATCH_ANOMALY_MIN_SIZE")]
    pub min_size: Option<usize>,
    /// Largest number of missing properties reported.
    #[arg(long, env = "SCRATCH_ANOMALY_MAX_DEVIATION")]
    pub max_deviation: Option<usize>,
    #[arg(long, value_enum, env = "SCRATCH_ANOMALY_PRESET")]
    pub preset: Option<Preset>,
}

impl MiningArgs {
    pub fn resolve(&self) -> Result<MiningConfig> {
        let base = match self.preset {
            Some(Preset::SmallClass) => MiningConfig::small_class(),
            None => MiningConfig::default(),
        };
        let config = MiningConfig {
            min_support: self.min_support.unwrap_or(base.min_support),
            min_pattern_size: self.min_size.unwrap_or(base.min_pattern_size),
            max_deviation_level: self.max_deviation.unwrap_or(base.max_deviation_level),
            min_confidence: self.min_confidence.unwrap_or(base.min_confidence),
        };
        config.validate()?;
        Ok(config)
    }
}

fn confidence_arg(s: &str) -> std::result::Result<Rational, String> {
    parse_rational(s).ok_or_else(|| format!("`{s}` is not a decimal or fraction"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    #[value(alias = "structured")]
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelFormat {
    Dot,
    #[value(alias = "structured")]
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MineFormat {
    Text,
    #[value(alias = "structured")]
    Json,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepFormat {
    Csv,
    #[value(alias = "structured")]
    Json,
    Text,
}

fn load(dir: &Path) -> Result<Dataset> {
    let ds = load_dataset(dir)?;
    info!("loaded {} projects from {} ({} skipped)", ds.projects.len(), dir.display(), ds.skipped.len());
    Ok(ds)
}

pub fn cmd_stats(dataset: &Path, config: &MiningConfig, format: ReportFormat) -> Result<String> {
    let ds = load(dataset)?;
    let analysis = Analysis::run(&ds.projects, config);
    let stats = DatasetStats::compute(&ds.projects, &analysis);
    Ok(match format {
        ReportFormat::Text => stats.to_text(),
        ReportFormat::Json => stats.to_json(),
    })
}

/// Writes one file per script model into `out`; returns the written paths in
/// dataset order.
pub fn cmd_extract_models(dataset: &Path, out: &Path, format: ModelFormat) -> Result<Vec<PathBuf>> {
    let ds = load(dataset)?;
    let models = extract_models(&ds.projects);
    fs::create_dir_all(out).map_err(|e| Error::OutputUnwritable { path: out.to_path_buf(), source: e })?;
    let mut written = Vec::with_capacity(models.len());
    let mut stems = HashSet::new();
    for m in &models {
        let (ext, body) = match format {
            ModelFormat::Dot => ("dot", dot::script_model(m)),
            ModelFormat::Json => ("json", model_to_json(m)),
        };
        // Sanitizing can map distinct names to one stem.
        let base = model_file_stem(m.source());
        let mut stem = base.clone();
        for n in 2.. {
            if stems.insert(stem.clone()) {
                break;
            }
            stem = format!("{base}~{n}");
        }
        let path = out.join(format!("{stem}.{ext}"));
        write_file(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_mine(dataset: &Path, config: &MiningConfig, top_n: usize, format: MineFormat) -> Result<String> {
    config.validate()?;
    let ds = load(dataset)?;
    let analysis = Analysis::run(&ds.projects, config);
    let report = AnomalyReport::build(&ds, &analysis, config, top_n);
    Ok(match format {
        MineFormat::Text => report.to_text(),
        MineFormat::Json => report.to_json(),
        MineFormat::Dot => report.to_dot(),
    })
}

pub fn cmd_sweep(
    dataset: &Path,
    supports: &[usize],
    confidences: &[Rational],
    fixed: &MiningConfig,
    format: SweepFormat,
) -> Result<String> {
    let ds = load(dataset)?;
    let sets = props_all(&extract_models(&ds.projects));
    let report = SweepReport::run(&sets, supports, confidences, fixed);
    Ok(match format {
        SweepFormat::Csv => report.to_csv(),
        SweepFormat::Json => report.to_json(),
        SweepFormat::Text => sweep_table(&report, supports, confidences),
    })
}

/// Supports as rows, confidences as columns.
fn sweep_table(report: &SweepReport, supports: &[usize], confidences: &[Rational]) -> String {
    let mut s = String::from("support\\confidence");
    for c in confidences {
        write!(s, "\t{}", to_fixed(*c, 2)).unwrap();
    }
    s.push('\n');
    for (row, k) in report.cells.chunks(confidences.len().max(1)).zip(supports) {
        write!(s, "{k}").unwrap();
        for cell in row {
            write!(s, "\t{}", cell.anomalies).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn cmd_gen_corpus(spec_path: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| Error::CorpusSpec(format!("cannot read {}: {e}", spec_path.display())))?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let spec = CorpusSpec::from_toml(&text, base)?;
    let reference = load_project(&spec.reference)?;
    generate_corpus(&reference, spec.n_correct, &spec.mutations, out)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::OutputUnwritable { path: path.to_path_buf(), source: e })
}

fn emit(body: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => write_file(path, body),
        None => stdout
            .write_all(body.as_bytes())
            .map_err(|e| Error::OutputUnwritable { path: PathBuf::from("<stdout>"), source: e }),
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::CorpusSpec(_) | Error::Mutation(_) => EXIT_USAGE,
        Error::ArchiveUnreadable { .. }
        | Error::MalformedProject { .. }
        | Error::DatasetUnreadable { .. }
        | Error::DatasetEmpty(_)
        | Error::OutputUnwritable { .. } => EXIT_DATA,
    }
}

/// Runs the command; returns the output body and where it goes (`None`
/// for stdout).
fn execute(command: Command) -> Result<(String, Option<PathBuf>)> {
    match command {
        Command::Stats { dataset, mining, format, out } => Ok((cmd_stats(&dataset, &mining.resolve()?, format)?, out)),
        Command::ExtractModels { dataset, out, format } => {
            let written = cmd_extract_models(&dataset, &out, format)?;
            Ok((format!("wrote {} model files to {}\n", written.len(), out.display()), None))
        }
        Command::Mine { dataset, mining, top, format, out } => {
            Ok((cmd_mine(&dataset, &mining.resolve()?, top, format)?, out))
        }
        Command::Sweep { dataset, mining, mut supports, mut confidences, format, out } => {
            let fixed = mining.resolve()?;
            if supports.is_empty() {
                supports = DEFAULT_SWEEP_SUPPORTS.to_vec();
            }
            if confidences.is_empty() {
                confidences = default_sweep_confidences();
            }
            for &c in &confidences {
                MiningConfig { min_confidence: c, ..fixed }.validate()?;
            }
            Ok((cmd_sweep(&dataset, &supports, &confidences, &fixed, format)?, out))
        }
        Command::GenCorpus { spec, out } => {
            let written = cmd_gen_corpus(&spec, &out)?;
            Ok((format!("wrote {} projects to {}\n", written.len(), out.display()), None))
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render();
            let text = if e.use_stderr() { rendered.to_string() } else { rendered.ansi().to_string() };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Error,
        1 => log::LevelFilter::Warn,
        2 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let command = cli.command;
    let result = match cli.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(command)),
            Err(e) => Err(Error::InvalidConfig(format!("cannot start {n} worker threads: {e}"))),
        },
        None => execute(command),
    }
    .and_then(|(body, out)| emit(&body, out.as_deref(), stdout));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
