use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use magic_core::baselines::{fit_mtgp, fit_sgp};
use magic_core::eval::{merge_reports, run_benchmark, run_loocv, Feature, Method, ProtocolKind};
use magic_core::io::{
    format_table, ingest_long_csv, load_model, read_prior_means, save_model, write_class_means,
    write_imputations, write_labels_csv, write_long_csv, write_predictions, write_report,
    CheckpointModel, ModelCheckpoint, RunConfig, SEED_ENV,
};
use magic_core::model::{fit, zero_prior_means, SampleSeries};
use magic_core::sim::{apply_missingness, derive_seed, generate_dataset};
use magic_core::{MagicError, Result};

/// Joint imputation and classification of sparse, misaligned time series.
#[derive(Parser)]
#[command(name = "magic", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides MAGIC_SEED and the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-class simulation dataset.
    Simulate {
        /// Output directory (series.csv, labels.csv, truth.csv, class_means.csv).
        #[arg(long)]
        out: PathBuf,
        /// Thin every series to this missing ratio; truth.csv stays complete.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Fit a model and write a checkpoint plus its objective trace.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: Option<Method>,
        /// Per-class prior means (`time,prior0,prior1` columns); zero if absent.
        #[arg(long)]
        prior_means: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Objective trace file (default: next to the checkpoint).
        #[arg(long)]
        q_history: Option<PathBuf>,
    },
    /// Classify series with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Output CSV (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Complete series on the model grid with a saved model.
    Impute {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated stratified-split benchmark on simulated data.
    Benchmark {
        /// Comma-separated missing ratios.
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// `all` or a comma-separated subset of magic, sgp, mtgp.
        #[arg(long, default_value = "all")]
        method: String,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out evaluation (with nested masking) on CSV data.
    Loocv {
        /// Feature series as NAME=PATH; repeat for several features.
        #[arg(long = "feature", value_name = "NAME=PATH")]
        features: Vec<String>,
        /// Single-feature shorthand for --feature.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        method: String,
        /// Skip the inner one-value masking (AUC only).
        #[arg(long)]
        no_mask: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Long-format series CSV (sample_id,time,value).
    #[arg(long)]
    series: Option<PathBuf>,
    /// Labels CSV (sample_id,label).
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    cfg.resolve_seed(cli.common.seed, env.as_deref())?;

    match cli.command {
        Command::Simulate { out, alpha } => simulate(&cfg, &out, alpha),
        Command::Fit {
            data,
            method,
            prior_means,
            out,
            q_history,
        } => {
            let method = method.unwrap_or(cfg.method);
            fit_cmd(&cfg, &data, method, prior_means.as_deref(), &out, q_history)
        }
        Command::Predict { model, data, out } => {
            let (ck, samples) = load_with_data(&cfg, &model, &data)?;
            let mut rows = Vec::with_capacity(samples.len());
            for s in &samples {
                rows.push(ck.model.predict(s)?.0);
            }
            write_predictions(sink(out.as_deref())?, &rows)
        }
        Command::Impute { model, data, out } => {
            let (ck, samples) = load_with_data(&cfg, &model, &data)?;
            let mut rows = Vec::with_capacity(samples.len());
            for s in samples {
                let imp = ck.model.predict(&s)?.1;
                rows.push((s, imp));
            }
            write_imputations(sink(out.as_deref())?, ck.model.grid(), &rows)
        }
        Command::Benchmark {
            alpha,
            method,
            reps,
            out,
        } => {
            let methods = parse_methods(&method)?;
            let mut protocol = cfg.eval_protocol();
            protocol.kind = ProtocolKind::RepeatedSplit;
            if let Some(a) = alpha {
                protocol.alphas = a;
            }
            if let Some(r) = reps {
                protocol.repetitions = r;
            }
            let data = generate_dataset(&cfg.sim()?)?;
            let report = run_benchmark(&protocol, &methods, &data, &cfg.eval())?;
            emit_report(&report, out.as_deref())
        }
        Command::Loocv {
            features,
            series,
            labels,
            method,
            no_mask,
            out,
        } => {
            let methods = parse_methods(&method)?;
            let grid = cfg.grid()?;
            let labels = labels
                .or_else(|| cfg.labels.clone())
                .ok_or_else(|| MagicError::Config("loocv needs --labels".into()))?;
            let mut specs = Vec::new();
            for f in &features {
                let (name, path) = f.split_once('=').ok_or_else(|| {
                    MagicError::Config(format!("--feature expects NAME=PATH, got '{f}'"))
                })?;
                specs.push((name.to_string(), PathBuf::from(path)));
            }
            if let Some(p) = series.or_else(|| cfg.series.clone()).filter(|_| specs.is_empty()) {
                let name = p.file_stem().map_or("series".into(), |s| s.to_string_lossy().into_owned());
                specs.push((name, p));
            }
            if specs.is_empty() {
                return Err(MagicError::Config("loocv needs --feature or --series".into()));
            }
            let mut feats = Vec::new();
            for (name, path) in specs {
                let samples = ingest_long_csv(&path, Some(&labels), &grid)?;
                feats.push(Feature {
                    name,
                    grid: grid.clone(),
                    samples,
                    prior_means: zero_prior_means(&grid),
                });
            }
            let kind = if no_mask { ProtocolKind::Loocv } else { ProtocolKind::NestedMask };
            let mut reports = Vec::new();
            for m in methods {
                reports.push(run_loocv(&feats, m, kind, &cfg.eval())?);
            }
            let mut report = merge_reports(reports)?;
            report.seed = cfg.seed;
            emit_report(&report, out.as_deref())
        }
    }
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Method::ALL.to_vec());
    }
    s.split(',').map(|m| m.trim().parse()).collect()
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_data(cfg: &RunConfig, data: &DataArgs) -> Result<Vec<SampleSeries>> {
    read_on_grid(cfg, data, &cfg.grid()?)
}

fn read_on_grid(
    cfg: &RunConfig,
    data: &DataArgs,
    grid: &magic_core::math::TimeGrid,
) -> Result<Vec<SampleSeries>> {
    let series = data
        .series
        .clone()
        .or_else(|| cfg.series.clone())
        .ok_or_else(|| MagicError::Config("no series file (--series or `series` in the config)".into()))?;
    let labels = data.labels.clone().or_else(|| cfg.labels.clone());
    ingest_long_csv(&series, labels.as_deref(), grid)
}

fn load_with_data(
    cfg: &RunConfig,
    model: &Path,
    data: &DataArgs,
) -> Result<(ModelCheckpoint, Vec<SampleSeries>)> {
    let ck = load_model(model)?;
    // Series are read against the grid the model was fitted on.
    let samples = read_on_grid(cfg, data, ck.model.grid())?;
    Ok((ck, samples))
}

fn simulate(cfg: &RunConfig, out: &Path, alpha: Option<f64>) -> Result<()> {
    let data = generate_dataset(&cfg.sim()?)?;
    std::fs::create_dir_all(out)?;
    let observed = match alpha {
        Some(a) => data
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| apply_missingness(s, a, derive_seed(cfg.seed, 1 + i as u64)))
            .collect::<Result<Vec<_>>>()?,
        None => data.samples.clone(),
    };
    write_long_csv(&out.join("series.csv"), &observed)?;
    write_labels_csv(&out.join("labels.csv"), &data.samples)?;
    write_long_csv(&out.join("truth.csv"), &data.samples)?;
    write_class_means(&out.join("class_means.csv"), &data.grid, &data.class_means, &data.prior_means)?;
    eprintln!("wrote {} series to {}", observed.len(), out.display());
    Ok(())
}

fn fit_cmd(
    cfg: &RunConfig,
    data: &DataArgs,
    method: Method,
    prior_means: Option<&Path>,
    out: &Path,
    q_history: Option<PathBuf>,
) -> Result<()> {
    let grid = cfg.grid()?;
    let samples = read_data(cfg, data)?;
    let priors = match prior_means {
        Some(p) => read_prior_means(p, &grid)?,
        None => zero_prior_means(&grid),
    };
    let eval = cfg.eval();
    let model = match method {
        Method::Magic => CheckpointModel::Magic(fit(&grid, &samples, priors, &eval.magic)?.model),
        Method::Sgp => CheckpointModel::Sgp(fit_sgp(&grid, &samples, &eval.magic, &eval.baseline)?),
        Method::Mtgp => {
            let common = (&priors[0] + &priors[1]) * 0.5;
            CheckpointModel::Mtgp(fit_mtgp(&grid, &samples, common, &eval.magic, &eval.baseline)?)
        }
    };
    let history = match &model {
        CheckpointModel::Magic(m) => m.q_history.clone(),
        CheckpointModel::Sgp(b) | CheckpointModel::Mtgp(b) => b.q_history.clone(),
    };
    save_model(out, &ModelCheckpoint::new(model))?;
    let qpath = q_history.unwrap_or_else(|| out.with_extension("q_history.csv"));
    let mut w = BufWriter::new(File::create(&qpath)?);
    writeln!(w, "iteration,objective")?;
    for (i, q) in history.iter().enumerate() {
        writeln!(w, "{i},{q}")?;
    }
    w.flush()?;
    eprintln!("wrote {} and {}", out.display(), qpath.display());
    Ok(())
}

fn emit_report(report: &magic_core::eval::BenchmarkReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            write_report(BufWriter::new(File::create(p)?), report)?;
            print!("{}", format_table(report));
        }
        None => write_report(io::stdout().lock(), report)?,
    }
    for f in &report.failures {
        eprintln!("failure: {f}");
    }
    Ok(())
}
