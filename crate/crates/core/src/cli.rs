//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds::{self, BoundEvaluator};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::montecarlo::{self, Quantity};
use crate::spectrum;
use crate::trajectory::{self, RegionInput};
use crate::verify;

#[derive(Debug, Parser)]
#[command(
    name = "gd-compat",
    version,
    about = "Gradient-descent trajectories and bounds for overparameterized linear regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective dimensions over a grid of sample sizes.
    Spectrum(CommonArgs),
    /// Mean risk curve over repeated trials.
    Trajectory(CommonArgs),
    /// Bias and variance bounds along the trajectory, and bound rates.
    Bounds(CommonArgs),
    /// Optimal and min-norm risk for several spectra.
    Table(CommonArgs),
    /// Epoch regions where the mean risk stays below a threshold.
    Scan(CommonArgs),
    /// Numerical cross-checks; exits 1 if any fails.
    Verify(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads, or `auto`.
    #[arg(long, default_value = "auto")]
    pub threads: String,
    /// Override a config entry, e.g. `instance.trials=10`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Master seed for sampling and checks.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Spectrum(a)
            | Command::Trajectory(a)
            | Command::Bounds(a)
            | Command::Table(a)
            | Command::Scan(a)
            | Command::Verify(a) => a,
        }
    }
}

fn parse_threads(raw: &str) -> Result<usize> {
    if raw == "auto" {
        return Ok(0);
    }
    match raw.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::Config(format!(
            "--threads must be a positive integer or `auto`, got `{raw}`"
        ))),
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let args = cli.command.args().clone();
    let threads = parse_threads(&args.threads)?;
    let mut cfg = Config::load(args.config.as_deref(), &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.instance.master_seed = seed;
        cfg.verify.seed = seed;
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", args.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Spectrum(_) => cmd_spectrum(&cfg, &args.out),
        Command::Trajectory(_) => cmd_trajectory(&cfg, &args.out),
        Command::Bounds(_) => cmd_bounds(&cfg, &args.out),
        Command::Table(_) => cmd_table(&cfg, &args.out),
        Command::Scan(_) => cmd_scan(&cfg, &args.out),
        Command::Verify(_) => cmd_verify(&cfg, &args.out),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn cmd_spectrum(cfg: &Config, out: &Path) -> Result<i32> {
    let spec = cfg.spectrum.spec()?;
    let dim = cfg.spectrum.rate_dim(&spec)?;
    let rows = spectrum::rate_table(
        &spec,
        dim,
        &cfg.spectrum.n_grid,
        cfg.spectrum.c0,
        cfg.spectrum.c1,
    )?;
    let (k0_slope, k1_slope) = spectrum::rate_slopes(&rows);
    let path = out.join(format!("spectrum_{}.csv", spec.id()));
    let mut w = csv_writer(&path)?;
    w.write_record(["n", "k0", "k1", "r_sigma", "k0_slope", "k1_slope"])?;
    for r in &rows {
        w.write_record([
            r.n.to_string(),
            r.k0.to_string(),
            r.k1.to_string(),
            r.r_sigma.to_string(),
            opt_cell(k0_slope),
            opt_cell(k1_slope),
        ])?;
    }
    w.flush()?;
    println!("wrote {}", path.display());
    match k1_slope {
        Some(s) => println!("k1 slope {s:.4} (expected order {})", spec.k1_order()),
        None => println!("k1 slope: insufficient points for a fit"),
    }
    Ok(0)
}

pub fn cmd_trajectory(cfg: &Config, out: &Path) -> Result<i32> {
    let spec = cfg.spectrum.spec()?;
    let mut plan = cfg.plan(
        "trajectory",
        spec,
        cfg.instance.n,
        cfg.instance.p,
        cfg.instance.trials,
    );
    plan.quantities
        .extend([Quantity::ArgminT, Quantity::FullCurve]);
    let result = montecarlo::run_experiment(&plan)?;
    for path in montecarlo::write_result(out, &plan, &result)? {
        println!("wrote {}", path.display());
    }
    if let (Some(opt), Some(mn)) = (result.optimal_risk, result.min_norm_risk) {
        println!(
            "optimal risk {:.6} ± {:.6}, min-norm risk {:.6} ± {:.6}",
            opt.mean, opt.half_width, mn.mean, mn.half_width
        );
    }
    Ok(0)
}

#[derive(Serialize)]
struct BoundsSummary<'a> {
    report: &'a bounds::BoundReport,
    minimum: Option<bounds::MinBound>,
    minimum_error: Option<String>,
}

pub fn cmd_bounds(cfg: &Config, out: &Path) -> Result<i32> {
    let spec = cfg.spectrum.spec()?;
    let plan = cfg.plan("bounds", spec.clone(), cfg.instance.n, cfg.instance.p, 1);
    let inst = plan.instance()?;
    let spectrum = inst.spectrum();
    let n = inst.n;
    let lr = cfg
        .bounds
        .learning_rate
        .unwrap_or_else(|| trajectory::default_learning_rate(spectrum));
    let params = cfg.bounds.params(inst.noise_sigma, inst.theta_star.norm());
    let t_grid = cfg
        .bounds
        .t_grid
        .clone()
        .unwrap_or_else(|| bounds::bound_grid(n, lr));
    let report = bounds::bound_report(spectrum, n, lr, params, cfg.bounds.ctn, &t_grid)?;

    let stem = out
        .join("bounds")
        .join(format!("{}_n{}_p{}", spec.id(), n, inst.p));
    let csv_path = stem.with_extension("csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(["t", "B_t", "V_t", "B_t+V_t", "k2_t"])?;
    for j in 0..report.t_grid.len() {
        w.write_record([
            report.t_grid[j].to_string(),
            report.bias[j].to_string(),
            report.variance[j].to_string(),
            (report.bias[j] + report.variance[j]).to_string(),
            report.k2[j].to_string(),
        ])?;
    }
    w.flush()?;
    println!("wrote {}", csv_path.display());

    let eval = BoundEvaluator::new(spectrum, n, lr, params, cfg.bounds.ctn)?;
    let (minimum, minimum_error) = match bounds::min_bound_over_t(&eval, &t_grid) {
        Ok(m) => (Some(m), None),
        Err(e @ Error::GridTooNarrow(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    write_json(
        &stem.with_extension("json"),
        &BoundsSummary {
            report: &report,
            minimum,
            minimum_error,
        },
    )?;

    let families = if cfg.bounds.families.is_empty() {
        vec![spec]
    } else {
        cfg.bounds
            .families
            .iter()
            .map(|f| f.spec())
            .collect::<Result<Vec<_>>>()?
    };
    let rates = montecarlo::bound_rate_table(&families, params, cfg.bounds.ctn)?;
    write_json(&out.join("bounds").join("rates.json"), &rates)?;
    Ok(0)
}

pub fn cmd_table(cfg: &Config, out: &Path) -> Result<i32> {
    let plans = cfg.table_plans()?;
    let table = montecarlo::table_report(&plans)?;
    let dir = out.join(&cfg.table.name);
    fs::create_dir_all(&dir)?;
    let csv_path = dir.join(format!("table_n{}_p{}.csv", cfg.instance.n, cfg.instance.p));
    fs::write(&csv_path, table.to_csv()?)?;
    let text = table.to_text();
    fs::write(csv_path.with_extension("txt"), &text)?;
    print!("{text}");
    println!("wrote {}", csv_path.display());
    Ok(0)
}

pub fn cmd_scan(cfg: &Config, out: &Path) -> Result<i32> {
    let spec = cfg.spectrum.spec()?;
    let trials = cfg.scan.trials.unwrap_or(cfg.instance.trials);
    let mut inputs = Vec::with_capacity(cfg.scan.n_grid.len());
    for &n in &cfg.scan.n_grid {
        let mut plan = cfg.plan("scan", spec.clone(), n, cfg.scan.p_factor * n, trials);
        plan.quantities.insert(Quantity::FullCurve);
        let result = montecarlo::run_experiment(&plan)?;
        montecarlo::write_result(out, &plan, &result)?;
        let curve = result.curve.expect("curve requested");
        inputs.push(RegionInput {
            n,
            learning_rate: result.learning_rate,
            t_grid: curve.t_grid,
            mean_risk: curve.mean,
        });
    }
    let rows = trajectory::region_scan(&inputs, cfg.scan.threshold);
    let path = out.join("scan").join(format!("{}_regions.csv", spec.id()));
    let mut w = csv_writer(&path)?;
    w.write_record(["n", "start_t", "end_t", "start_scaled", "end_scaled"])?;
    for r in &rows {
        w.write_record([
            r.n.to_string(),
            opt_cell(r.start_t),
            opt_cell(r.end_t),
            opt_cell(r.start_scaled),
            opt_cell(r.end_scaled),
        ])?;
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(0)
}

pub fn cmd_verify(cfg: &Config, out: &Path) -> Result<i32> {
    let report = verify::run_checks(&cfg.verify)?;
    print!("{}", report.to_text());
    write_json(&out.join("verify").join("report.json"), &report)?;
    Ok(if report.passed() { 0 } else { 1 })
}
