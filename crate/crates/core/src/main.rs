//! Batch experiment runner for robust posterior simulations.
//!
//! Usage: `rho-bayes <run|check|bounds> <config.json>` with optional
//! `--seed`, `--threads` and `--out` overrides. The output directory is
//! resolved in order: `RHO_BAYES_OUT` environment variable, then `--out`,
//! then the `output` field of the config, then `./out`.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
//! failures, 4 when `check` finds a scenario threshold violated.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rho_bayes::experiment::{
    run_bounds_report, run_scenario, write_bounds_outputs, write_outputs, ExperimentConfig,
    ExperimentError, ResultRow, Scenario,
};

#[derive(Parser)]
#[command(name = "rho-bayes", version, about = "Robust posterior experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario and write its result table.
    Run(CommonArgs),
    /// Run the scenario and verify its qualitative thresholds.
    Check(CommonArgs),
    /// Compute the bounds report for the configured net and prior.
    Bounds(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the JSON experiment configuration.
    config: PathBuf,
    /// Override the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overridden by RHO_BAYES_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_THRESHOLD: u8 = 4;

fn exit_for(err: &ExperimentError) -> u8 {
    if err.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

fn load_config(args: &CommonArgs) -> Result<(ExperimentConfig, String), ExperimentError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        ExperimentError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok((cfg, text))
}

fn output_dir(args: &CommonArgs, cfg: &ExperimentConfig) -> PathBuf {
    if let Ok(dir) = std::env::var("RHO_BAYES_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    args.out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn init_threads(threads: Option<usize>) -> Result<(), ExperimentError> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(ExperimentError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
    }
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = xs.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn metric_values(rows: &[ResultRow], n: usize, metric: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.n == n && r.metric == metric)
        .map(|r| r.value)
        .collect()
}

/// Per-scenario qualitative thresholds for `check`, returning a list of
/// human-readable violations.
fn check_thresholds(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Vec<String> {
    let mut violations = Vec::new();
    match cfg.scenario {
        Scenario::Contamination => {
            // robust posterior must stay near the truth despite contamination
            let n = *cfg.n_ladder.last().expect("validated");
            let t0 = cfg.truth[0];
            let medians = metric_values(rows, n, "rho_median");
            let ok = medians
                .iter()
                .filter(|&&m| (0.8 * t0..=1.2 * t0).contains(&m))
                .count();
            let frac = ok as f64 / medians.len().max(1) as f64;
            if frac < 0.9 {
                violations.push(format!(
                    "robust posterior median within 20% of the truth in only {:.0}% of runs (need 90%)",
                    100.0 * frac
                ));
            }
        }
        Scenario::Agreement => {
            // posterior distance must shrink roughly like a power of n
            let slope = rows
                .iter()
                .find(|r| r.metric == "loglog_slope")
                .map(|r| r.value);
            match slope {
                Some(s) if s <= -0.35 => {}
                Some(s) => violations.push(format!(
                    "log-log slope of the posterior gap is {s:.3} (need <= -0.35)"
                )),
                None => violations.push(
                    "no slope estimate (need at least 3 ladder points with positive medians)".into(),
                ),
            }
        }
        Scenario::Histogram => {
            // posterior-mean risk must drop with n, with factor-2 slack on
            // the square-root rate
            if cfg.n_ladder.len() >= 2 {
                let lo = cfg.n_ladder[0];
                let hi = *cfg.n_ladder.last().unwrap();
                let r_lo = median(metric_values(rows, lo, "post_mean_hellinger"));
                let r_hi = median(metric_values(rows, hi, "post_mean_hellinger"));
                let bound = 2.0 * (lo as f64 / hi as f64).sqrt();
                if !(r_hi / r_lo <= bound.min(1.0)) {
                    violations.push(format!(
                        "risk ratio {:.3} between n={hi} and n={lo} exceeds {:.3}",
                        r_hi / r_lo,
                        bound.min(1.0)
                    ));
                }
            }
        }
        Scenario::ModelSelection => {
            // the modal selected model must carry a posterior majority
            let n = *cfg.n_ladder.last().expect("validated");
            let selected = metric_values(rows, n, "selected_model");
            let modal = {
                let mut counts = std::collections::HashMap::new();
                for &s in &selected {
                    *counts.entry(s as usize).or_insert(0usize) += 1;
                }
                counts.into_iter().max_by_key(|&(_, c)| c).map(|(m, _)| m)
            };
            if let Some(m) = modal {
                let masses = metric_values(rows, n, &format!("model_mass_{m}"));
                let med = median(masses);
                if !(med >= 0.5) {
                    violations.push(format!(
                        "modal model {m} has median posterior mass {med:.3} (need >= 0.5)"
                    ));
                }
            }
        }
        Scenario::BoundsReport => {}
    }
    violations
}

fn run(args: &CommonArgs, check: bool) -> Result<u8, ExperimentError> {
    init_threads(args.threads)?;
    let (cfg, text) = load_config(args)?;
    let dir = output_dir(args, &cfg);
    if cfg.scenario == Scenario::BoundsReport {
        let reports = run_bounds_report(&cfg)?;
        let path = write_bounds_outputs(&dir, &reports, &text, cfg.seed)?;
        println!("wrote {}", path.display());
        for r in &reports {
            if !r.formula_value.is_finite() {
                eprintln!("check failed: {} is not finite", r.quantity);
                return Ok(EXIT_THRESHOLD);
            }
        }
        return Ok(0);
    }
    let rows = run_scenario(&cfg)?;
    let path = write_outputs(&dir, cfg.scenario, &rows, &text, cfg.seed)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    if check {
        let violations = check_thresholds(&cfg, &rows);
        if !violations.is_empty() {
            for v in &violations {
                eprintln!("check failed: {v}");
            }
            return Ok(EXIT_THRESHOLD);
        }
        println!("check passed");
    }
    Ok(0)
}

fn run_bounds(args: &CommonArgs) -> Result<u8, ExperimentError> {
    init_threads(args.threads)?;
    let (cfg, text) = load_config(args)?;
    if cfg.scenario != Scenario::BoundsReport {
        return Err(ExperimentError::Config(
            "the bounds subcommand needs a bounds_report config".into(),
        ));
    }
    let dir = output_dir(args, &cfg);
    let reports = run_bounds_report(&cfg)?;
    let path = write_bounds_outputs(&dir, &reports, &text, cfg.seed)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args, false),
        Command::Check(args) => run(args, true),
        Command::Bounds(args) => run_bounds(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}
