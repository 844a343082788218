//! `mdop`: simulate gait recordings, export representations, extract features,
//! fit subspaces and run cross-validated evaluations.
//!
//! Exit codes: 0 success (and evaluation thresholds met), 1 invalid input or unmet
//! thresholds, 2 runtime failure.

mod commands;
mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use microdoppler::cvd::RepresentationKind;
use microdoppler::io;
use microdoppler::subspace;

use commands::{PcaSource, SweepAxis};
use config::{FeatureChoice, RunConfig};
use plot::PlotKind;

/// Input that fails validation; exits with code 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// Evaluation finished but missed a configured threshold; exits with code 1.
#[derive(Debug)]
pub struct Unmet;

impl std::fmt::Display for Unmet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("acceptance thresholds not met")
    }
}

impl std::error::Error for Unmet {}

#[derive(Parser)]
#[command(name = "mdop", version, about = "Radar micro-Doppler gait analysis")]
struct Cli {
    /// Run configuration (JSON). Missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; overrides MDOP_THREADS and the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled corpus of IQ recordings plus manifest.csv.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// SNR in dB against total signal power.
        #[arg(long, conflicts_with = "noiseless")]
        snr: Option<f64>,
        #[arg(long)]
        noiseless: bool,
    },
    /// Export one representation per recording as CSV plus JSON sidecar.
    Represent {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: RepresentationKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a feature table with one row per recording.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        set: FeatureChoice,
        /// Subspace model to project onto (pca only).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Fit the subspace on this manifest first; saved to --model when given.
        #[arg(long)]
        fit: bool,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<RepresentationKind>,
        #[arg(long)]
        lambda: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an eigenimage subspace on every recording of a manifest.
    FitPca {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<RepresentationKind>,
        #[arg(long)]
        lambda: Option<usize>,
        #[arg(long)]
        no_center: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated evaluation; writes report.json and confusion CSVs.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also sweep λ or κ over the config's grid.
        #[arg(long, value_enum)]
        sweep: Vec<SweepAxis>,
    },
    /// Render an exported matrix as a PNG (or the plotted values as CSV).
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<RepresentationKind, String> {
    s.parse().map_err(|e: microdoppler::Error| e.to_string())
}

fn load_manifest(path: &Path) -> anyhow::Result<io::Manifest> {
    io::Manifest::load(path).map_err(|e| Invalid(format!("manifest {}: {e}", path.display())).into())
}

fn thread_count(flag: Option<usize>, cfg: &RunConfig) -> anyhow::Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    if let Ok(v) = std::env::var("MDOP_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Invalid(format!("MDOP_THREADS={v:?} is not a positive integer")))?;
        return Ok(Some(n));
    }
    Ok(cfg.threads)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = thread_count(cli.threads, &cfg)? {
        if n == 0 {
            return Err(Invalid("thread count must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate { out, subjects, runs, seed, snr, noiseless } => {
            let mut opts = cfg.dataset.clone();
            opts.n_subjects = subjects.unwrap_or(opts.n_subjects);
            opts.runs_per_class = runs.unwrap_or(opts.runs_per_class);
            opts.seed = seed.unwrap_or(opts.seed);
            if noiseless {
                opts.snr_db = None;
            } else if snr.is_some() {
                opts.snr_db = snr;
            }
            let manifest = commands::simulate(&opts, &out)?;
            for (class, n) in commands::class_counts(&manifest) {
                println!("{class}\t{n}");
            }
            println!("wrote {} recordings to {}", manifest.entries.len(), out.display());
        }
        Command::Represent { manifest, kind, out } => {
            let m = load_manifest(&manifest)?;
            let n = commands::represent(&m, kind, &cfg, &out)?;
            println!("wrote {n} {kind} matrices to {}", out.display());
        }
        Command::Featurize { manifest, set, model, fit, kind, lambda, out } => {
            let m = load_manifest(&manifest)?;
            let loaded = match (&model, fit) {
                (Some(p), false) if set == FeatureChoice::Pca => Some(subspace::load(p)?),
                _ => None,
            };
            let pca = match (set, &loaded, fit) {
                (FeatureChoice::Pca, Some(model), _) => Some(PcaSource::Model(model)),
                (FeatureChoice::Pca, None, true) => Some(PcaSource::Fit { lambda: lambda.unwrap_or(cfg.lambda), center: cfg.center }),
                _ => None,
            };
            let kind = kind.unwrap_or(cfg.representation);
            let (names, rows, fitted) = commands::featurize(&m, set, pca, kind, &cfg)?;
            let mut buf = Vec::new();
            io::write_feature_table(&names, &rows, &mut buf)?;
            io::write_atomic(&out, &buf)?;
            if let (true, Some(p), Some(model)) = (fit, &model, &fitted) {
                subspace::save(model, p)?;
            }
            println!("wrote {} rows × {} {} features to {}", rows.len(), names.len(), set.as_str(), out.display());
        }
        Command::FitPca { manifest, kind, lambda, no_center, out } => {
            let m = load_manifest(&manifest)?;
            let kind = kind.unwrap_or(cfg.representation);
            let model = commands::fit_pca(&m, kind, lambda.unwrap_or(cfg.lambda), cfg.center && !no_center, &cfg)?;
            subspace::save(&model, &out)?;
            let explained: f64 = subspace::explained_variance(&model).iter().sum();
            println!("{kind} subspace λ = {} explains {:.1} % of the variance; saved to {}", model.lambda(), 100.0 * explained, out.display());
        }
        Command::Evaluate { manifest, out, sweep } => {
            let m = load_manifest(&manifest)?;
            let o = commands::evaluate(&m, &cfg, &sweep, &out)?;
            for (name, r) in &o.reports {
                println!(
                    "{name:7} ACC {:5.1} ± {:.1} %  FPR {:5.1} %  FNR {:5.1} %",
                    100.0 * r.accuracy,
                    100.0 * r.ci95_halfwidth,
                    100.0 * r.fpr,
                    100.0 * r.fnr
                );
            }
            commands::check_thresholds(&o)?;
        }
        Command::Plot { input, kind, out } => commands::plot(&input, kind, &out)?,
    }
    Ok(())
}

fn is_validation(err: &anyhow::Error) -> bool {
    use microdoppler::Error as E;
    err.chain().any(|e| {
        e.is::<Invalid>()
            || e.is::<Unmet>()
            || matches!(
                e.downcast_ref::<E>(),
                Some(
                    E::InvalidConfig(_)
                        | E::InvalidProfile(_)
                        | E::OutOfRange(_)
                        | E::TooFewMembers { .. }
                        | E::Format(_)
                )
            )
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_validation(&e) { 1 } else { 2 })
        }
    }
}
