//! `insertkit`: single runs, batch evaluation, manifest tools and the server.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use insertkit::evaluation::{self, synthetic, BatchOptions};
use insertkit::imaging::{PlacementBox, RasterImage};
use insertkit::pipeline::names;
use insertkit::{ArtifactStore, Error, MetricReport, Mode, Pipeline, ProfileTable};
use insertkit_service::{ServiceConfig, ENV_ARTIFACT_ROOT, ENV_PROFILES};

const EXIT_VALIDATION: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_SAMPLES_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "insertkit", version, about = "Two-stage object insertion pipeline")]
struct Cli {
    /// Profile table TOML layered over the built-in mock profiles.
    #[arg(long, global = true, env = ENV_PROFILES)]
    profile_table: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one composition.
    Run {
        #[arg(long)]
        bg: PathBuf,
        #[arg(long = "ref", required = true, num_args = 1..)]
        refs: Vec<PathBuf>,
        /// x,y,w,h
        #[arg(long = "box")]
        placement: String,
        #[arg(long, default_value = "mock-oracle")]
        profile: String,
        #[arg(long, default_value = "auto")]
        mode: String,
        #[arg(long, env = ENV_ARTIFACT_ROOT, default_value = "artifacts")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a manifest under one or more profiles.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated profile names.
        #[arg(long, value_delimiter = ',', required = true)]
        profiles: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Fill the wall_time_s column (makes the CSV run-dependent).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        no_sheets: bool,
    },
    /// Serve the HTTP API until SIGTERM or Ctrl-C.
    Serve {
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a manifest from a MureCOM-style directory tree.
    ConvertMurecom {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic suite and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        high_contrast: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::StageFailed(_) | Error::BackendUnavailable { .. } | Error::MissingOracle => EXIT_BACKEND,
            _ => EXIT_VALIDATION,
        };
        let message = match &e {
            Error::StageFailed(f) => format!("stage {} failed ({}): {}", f.stage, f.kind, f.message),
            Error::BackendUnavailable { stage, cause } => format!("stage {stage} failed (backend_unavailable): {cause}"),
            other => other.to_string(),
        };
        Self { code, message }
    }
}

impl From<insertkit_service::ServeError> for Failure {
    fn from(e: insertkit_service::ServeError) -> Self {
        use insertkit_service::ServeError as S;
        let code = match e {
            S::Config(_) | S::Bind { .. } => EXIT_VALIDATION,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn profiles(path: Option<&Path>) -> Result<ProfileTable, Failure> {
    match path {
        Some(p) => ProfileTable::load(p).map_err(Failure::from),
        None => Ok(ProfileTable::default()),
    }
}

fn print_metrics(r: &MetricReport) {
    let show = |name: &str, v: Option<f64>| match v {
        Some(v) => println!("{name}\t{v:.6}"),
        None => println!("{name}\t-"),
    };
    println!("bg_max_abs\t{}", r.bg_max_abs.map(|v| v.to_string()).unwrap_or("-".into()));
    show("bg_mean_abs", r.bg_mean_abs);
    show("bbox_adherence", r.bbox_adherence);
    show("mask_iou", r.mask_iou);
    show("fidelity_hist", r.fidelity_hist);
    show("stage1_fidelity_hist", r.stage1_fidelity_hist);
    show("fidelity_ssim", r.fidelity_ssim);
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    table: &ProfileTable,
    bg: &Path,
    refs: &[PathBuf],
    placement: &str,
    profile: &str,
    mode: &str,
    out: &Path,
    seed: u64,
) -> Result<(), Failure> {
    let placement: PlacementBox = placement
        .parse()
        .map_err(|e: Error| Failure::validation(format!("--box: {e}")))?;
    let mode: Mode = mode.parse().map_err(|e: Error| Failure::validation(format!("--mode: {e}")))?;
    let profile = table
        .get(profile)
        .cloned()
        .ok_or_else(|| Failure::validation(format!("unknown profile {profile:?}")))?;
    let background = RasterImage::load(bg).map_err(|e| Failure::validation(format!("--bg: {e}")))?;
    let references = refs
        .iter()
        .map(|p| RasterImage::load(p).map_err(|e| Failure::validation(format!("--ref: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;

    let pipeline = Pipeline::new(ArtifactStore::open(out)?);
    let mut job = pipeline.create_job(&background, &references, placement, profile, mode, Some(seed))?;
    let dir = pipeline.store().job_dir(&job.id)?;
    let _guard = pipeline.lock(&job.id)?;
    pipeline.advance(&mut job)?;
    if let Some(f) = &job.error {
        return Err(Error::StageFailed(f.clone()).into());
    }
    if mode == Mode::Review {
        println!("{}", dir.display());
        eprintln!("job {} waiting for review in state {}", job.id, job.state);
        return Ok(());
    }
    let key = job
        .artifact_key(names::FINAL)
        .ok_or_else(|| Failure::validation("job finished without a final image"))?;
    println!("{}", dir.join(key).display());
    let mut report = MetricReport::pending("run", &job.profile.name, "");
    report.job_id = Some(job.id.clone());
    evaluation::fill_metrics(&pipeline, &job, &background, &references, None, &mut report)?;
    print_metrics(&report);
    Ok(())
}

fn cmd_eval(
    table: &ProfileTable,
    manifest: &Path,
    names: &[String],
    out: &Path,
    opts: BatchOptions,
) -> Result<u8, Failure> {
    let samples = evaluation::load_manifest(manifest)?;
    let profiles = names
        .iter()
        .map(|n| {
            table
                .get(n)
                .cloned()
                .ok_or_else(|| Failure::validation(format!("unknown profile {n:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = evaluation::run_batch(&samples, &profiles, out, &opts)?;
    println!("{}", summary.csv_path.display());
    eprintln!("{} runs, {} failed", summary.reports.len(), summary.failed);
    Ok(if summary.failed > 0 { EXIT_SAMPLES_FAILED } else { 0 })
}

fn cmd_serve(table_path: Option<&Path>, addr: Option<String>, config: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = ServiceConfig::from_env(config).map_err(|e| Failure::validation(e.to_string()))?;
    if let Some(p) = table_path {
        cfg.profiles = profiles(Some(p))?;
    }
    if let Some(a) = addr {
        cfg.listen = a;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    rt.block_on(insertkit_service::serve(cfg, insertkit_service::shutdown_signal()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let table_path = cli.profile_table.as_deref();
    match cli.command {
        Command::Run {
            bg,
            refs,
            placement,
            profile,
            mode,
            out,
            seed,
        } => {
            let table = profiles(table_path)?;
            cmd_run(&table, &bg, &refs, &placement, &profile, &mode, &out, seed)?;
            Ok(0)
        }
        Command::Eval {
            manifest,
            profiles: names,
            out,
            parallel,
            timing,
            no_sheets,
        } => {
            if parallel == 0 {
                return Err(Failure::validation("--parallel must be at least 1"));
            }
            let table = profiles(table_path)?;
            let opts = BatchOptions {
                parallel,
                timing,
                contact_sheets: !no_sheets,
            };
            cmd_eval(&table, &manifest, &names, &out, opts)
        }
        Command::Serve { addr, config } => {
            cmd_serve(table_path, addr, config.as_deref())?;
            Ok(0)
        }
        Command::ConvertMurecom { root, out } => {
            let samples = evaluation::murecom::convert(&root)?;
            evaluation::write_manifest(&out, &samples)?;
            eprintln!("{} samples", samples.len());
            Ok(0)
        }
        Command::Synth {
            out,
            count,
            high_contrast,
            seed,
        } => {
            let cfg = synthetic::SuiteSpec {
                count,
                high_contrast,
                seed,
                ..Default::default()
            };
            let samples = synthetic::generate(&cfg)?;
            let manifest = synthetic::write_suite(&out, &samples)?;
            println!("{}", manifest.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
