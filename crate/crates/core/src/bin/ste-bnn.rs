use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use ste_bnn::config::{parse_config, parse_overrides, ResolvedConfig};
use ste_bnn::diagnostics::{expectation_identity_check, gradient_symmetry_check};
use ste_bnn::harness::{
    run_concentration_campaign, run_recurrence_experiment, run_sweep, RunOutcome, RunSetup, VSpec,
};
use ste_bnn::model::{unit, NetworkSpec, NoiseSpec};
use ste_bnn::output::{self, Metadata};
use ste_bnn::{rng, svg, Error, Result, StepSchedule};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "STE_BNN_OUT";

#[derive(Parser)]
#[command(
    name = "ste-bnn",
    version,
    about = "STE training of two-layer binary networks: sweeps, runs and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory (default: $STE_BNN_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand)]
enum Command {
    /// Recovery-rate grid over (n, N/n).
    Sweep(ConfigArgs),
    /// Single training run from a config (uses m, n, N, T, noise, schedule, init, seed).
    Train(ConfigArgs),
    /// Noisy recurrence run.
    Recurrence(RecurrenceArgs),
    /// Sup-norm drift deviation against N.
    Concentration(ConcentrationArgs),
    /// Monte-Carlo check of the drift expectation identity.
    CheckExpectation(ExpectationArgs),
    /// Sign frequencies of the gradient at the optimum under label noise.
    CheckSymmetry(SymmetryArgs),
}

#[derive(Args, Serialize)]
struct RecurrenceArgs {
    #[arg(long, default_value_t = 128)]
    m: usize,
    #[arg(long, default_value_t = 25)]
    n: usize,
    #[serde(rename = "N")]
    #[arg(long = "N", default_value_t = 140)]
    n_samples: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[serde(rename = "T")]
    #[arg(long = "T", default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 1.0)]
    eta0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[serde(skip)]
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Serialize)]
struct ConcentrationArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[serde(rename = "N-list")]
    #[arg(
        long = "N-list",
        value_delimiter = ',',
        default_value = "512,1024,2048,4096,8192"
    )]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Label noise standard deviation (0 for noiseless).
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[serde(skip)]
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Serialize)]
struct ExpectationArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Number of random (w, w*) pairs.
    #[arg(long, default_value_t = 10)]
    pairs: usize,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[serde(skip)]
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Serialize)]
struct SymmetryArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[serde(rename = "N")]
    #[arg(long = "N", default_value_t = 64)]
    n_samples: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[serde(skip)]
    #[command(flatten)]
    out: OutArg,
}

fn out_dir(arg: &OutArg) -> Result<PathBuf> {
    let dir = arg
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn load_config(args: &ConfigArgs) -> Result<ResolvedConfig> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?,
        None => String::new(),
    };
    parse_config(&text, &parse_overrides(&args.set)?)
}

fn config_meta(sub: &str, resolved: &ResolvedConfig) -> Metadata {
    let mut meta = Metadata::new(
        sub,
        resolved.config.echo(),
        resolved.config.seed,
        serde_json::to_value(&resolved.config).unwrap_or_default(),
    );
    meta.defaulted_keys = resolved
        .defaulted_keys()
        .into_iter()
        .map(String::from)
        .collect();
    meta
}

/// Flags rendered as `key = value` lines for the metadata echo.
fn flags_meta<T: Serialize>(sub: &str, params: &T, seed: u64) -> Metadata {
    let value = serde_json::to_value(params).unwrap_or_default();
    let mut echo = String::new();
    if let Some(obj) = value.as_object() {
        for (k, v) in obj {
            echo.push_str(&format!("{k} = {v}\n"));
        }
    }
    Metadata::new(sub, echo, seed, value)
}

fn emit(path: &Path, meta: &Metadata, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    write(path)?;
    output::write_sidecar(path, meta)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn emit_run(dir: &Path, outcome: &RunOutcome, meta: &Metadata) -> Result<()> {
    emit(&dir.join("recurrence.csv"), meta, |p| {
        output::emit_recurrence_csv(&outcome.record, p)
    })?;
    emit(&dir.join("record.json"), meta, |p| {
        output::write_json(outcome, p)
    })?;
    let chart = svg::lines_svg(&outcome.record)?;
    emit(&dir.join("lines.svg"), meta, |p| {
        output::write_text(&chart, p)
    })?;
    let s = &outcome.summary;
    println!(
        "visits {} escapes {} first_visit {:?} time_at_optimum {:.4} final_hamming {}",
        s.visits, s.escapes, s.first_visit, s.time_at_optimum, s.final_hamming
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep(args) => {
            let resolved = load_config(&args)?;
            let dir = out_dir(&args.out)?;
            let meta = config_meta("sweep", &resolved);
            let report = run_sweep(&resolved.config.sweep())?;
            emit(&dir.join("report.csv"), &meta, |p| {
                output::emit_report_csv(&report, p)
            })?;
            emit(&dir.join("report.json"), &meta, |p| {
                output::write_json(&report, p)
            })?;
            let map = svg::heatmap_svg(&report)?;
            emit(&dir.join("heatmap.svg"), &meta, |p| {
                output::write_text(&map, p)
            })?;
            for c in &report.cells {
                println!(
                    "n={:<4} N={:<6} ergodic {:.2} last-iterate {:.2}",
                    c.n,
                    c.n_samples,
                    c.rate_for(ste_bnn::harness::SuccessKind::Ergodic),
                    c.rate_for(ste_bnn::harness::SuccessKind::LastIterate)
                );
            }
        }
        Command::Train(args) => {
            let resolved = load_config(&args)?;
            let dir = out_dir(&args.out)?;
            let outcome = run_recurrence_experiment(&resolved.config.run_setup())?;
            emit_run(&dir, &outcome, &config_meta("train", &resolved))?;
        }
        Command::Recurrence(args) => {
            if args.sigma.is_nan() || args.sigma < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "sigma must be >= 0, got {}",
                    args.sigma
                )));
            }
            let dir = out_dir(&args.out)?;
            let setup = RunSetup {
                m: args.m,
                n: args.n,
                n_samples: args.n_samples,
                noise: NoiseSpec::gaussian(args.sigma)?,
                iterations: args.iterations,
                schedule: StepSchedule::Constant { eta0: args.eta0 },
                ..RunSetup::recurrence(args.sigma, args.seed)
            };
            let outcome = run_recurrence_experiment(&setup)?;
            emit_run(&dir, &outcome, &flags_meta("recurrence", &args, args.seed))?;
        }
        Command::Concentration(args) => {
            let dir = out_dir(&args.out)?;
            let noise = if args.sigma > 0.0 {
                NoiseSpec::gaussian(args.sigma)?
            } else {
                NoiseSpec::None
            };
            let table = run_concentration_campaign(
                args.n,
                args.m,
                &VSpec::Gaussian,
                &args.n_list,
                args.repeats,
                noise,
                args.seed,
            )?;
            let meta = flags_meta("concentration", &args, args.seed);
            emit(&dir.join("concentration.csv"), &meta, |p| {
                output::emit_concentration_csv(&table, p)
            })?;
            emit(&dir.join("concentration.json"), &meta, |p| {
                output::write_json(&table, p)
            })?;
            for r in &table.rows {
                println!(
                    "N={:<7} median delta {:.5} median rho {:.4}",
                    r.n_samples, r.median, r.median_rho
                );
            }
            if let Some(s) = table.slope {
                println!("log-log slope {s:.4}");
            }
        }
        Command::CheckExpectation(args) => {
            if args.n == 0 || args.pairs == 0 {
                return Err(Error::InvalidArgument("n and pairs must be >= 1".into()));
            }
            let dir = out_dir(&args.out)?;
            let mut results = Vec::new();
            for k in 0..args.pairs as u64 {
                let pair_seed = rng::derive_seed(args.seed, &[k]);
                let (w, w_star) = random_pair(args.n, pair_seed);
                let check = expectation_identity_check(&w, &w_star, args.draws, pair_seed)?;
                println!("pair {k}: deviation {:.3e}", check.deviation);
                results.push(json!({ "w": w, "w_star": w_star, "check": check }));
            }
            let meta = flags_meta("check-expectation", &args, args.seed);
            emit(&dir.join("expectation.json"), &meta, |p| {
                output::write_json(&results, p)
            })?;
        }
        Command::CheckSymmetry(args) => {
            let dir = out_dir(&args.out)?;
            let spec = NetworkSpec::random(
                args.m,
                args.n,
                &mut rng::stream(args.seed, &[rng::tag::INSTANCE]),
            )?;
            let report = gradient_symmetry_check(
                &spec,
                NoiseSpec::gaussian(args.sigma)?,
                args.n_samples,
                args.trials,
                args.seed,
            )?;
            for (p, f) in report.positive_frequency.iter().enumerate() {
                println!(
                    "coordinate {p}: P(G>0) = {f:.4}, P(G=0) = {:.4}",
                    report.zero_frequency[p]
                );
            }
            let meta = flags_meta("check-symmetry", &args, args.seed);
            emit(&dir.join("symmetry.json"), &meta, |p| {
                output::write_json(&report, p)
            })?;
        }
    }
    Ok(())
}

/// Two hypercube points that differ in at least one coordinate.
fn random_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let u = unit(n);
    let mut r = rng::stream(seed, &[rng::tag::INSTANCE]);
    loop {
        let mut draw = || -> Vec<f64> {
            (0..n)
                .map(|_| if r.gen::<bool>() { u } else { -u })
                .collect()
        };
        let (a, b) = (draw(), draw());
        if a != b {
            return (a, b);
        }
    }
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
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
