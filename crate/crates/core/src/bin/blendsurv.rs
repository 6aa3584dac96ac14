use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use blendsurv::blend::{weight_table, BlendSpec};
use blendsurv::distributions::{Distribution, Family};
use blendsurv::elicitation::{fit_external, synthesize_dataset, ElicitationSpec};
use blendsurv::fit::parametric_draws;
use blendsurv::io::{load_dataset, CurveTable, TimeUnit};
use blendsurv::piecewise::{McmcConfig, Precision};
use blendsurv::pipeline::{fit_observed, CurveSet, ObservedModelConfig};
use blendsurv::scenario::{parse_seed_override, run_scenario_file, validate_outputs, SEED_ENV};
use blendsurv::simulate::{reference_truth, simulate_cuts, to_csv, TrialDesign};
use blendsurv::{Error, Grid, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blendsurv", version, about = "Blended survival curves for long-term extrapolation")]
struct Cli {
    /// Read and write times in years instead of months.
    #[arg(long, global = true)]
    years: bool,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the piecewise-exponential model to observed data.
    Fit(FitArgs),
    /// Build a synthetic dataset from survival statements and fit it.
    Elicit(ElicitArgs),
    /// Run a full scenario file.
    Blend(BlendArgs),
    /// Compare scenario outputs with a later data cut.
    Validate(ValidateArgs),
    /// Tabulate the blending weight and its derivative.
    Weight(WeightArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Write the bundled simulated trial data.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    arm: Option<String>,
    #[arg(long, default_value_t = 8)]
    intervals: usize,
    #[arg(long, default_value_t = 1)]
    rw_order: u8,
    /// Fixed random-walk precision instead of the Gamma(1, 0.01) hyperprior.
    #[arg(long)]
    precision: Option<f64>,
    /// Retained draws per chain.
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    #[arg(long, default_value_t = 2000)]
    burn_in: usize,
    #[arg(long, default_value_t = 2)]
    chains: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Extrapolation horizon in months.
    #[arg(long, default_value_t = 180.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ElicitArgs {
    /// Elicitation spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Candidate families, comma separated (default: all five).
    #[arg(long, value_delimiter = ',')]
    families: Vec<Family>,
    /// Number of parameter draws for the curve band.
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Curve horizon in months (default: T_max).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BlendArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed (and BLEND_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Output directory of a `blend` run.
    #[arg(long)]
    outputs: PathBuf,
    /// Later data cut, CSV.
    #[arg(long)]
    later: PathBuf,
    #[arg(long)]
    arm: Option<String>,
}

#[derive(Args)]
struct WeightArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    /// Defaults to b.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Minutes of inactivity before a session is dropped.
    #[arg(long, default_value_t = 30)]
    idle_minutes: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 12.0)]
    accrual: f64,
    /// Data cuts in months.
    #[arg(long, value_delimiter = ',', default_values_t = [48.0, 96.0])]
    cuts: Vec<f64>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let unit = if cli.years { TimeUnit::Years } else { TimeUnit::Months };
    match run(cli.command, unit) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command, unit: TimeUnit) -> Result<()> {
    match command {
        Command::Fit(args) => fit(args, unit),
        Command::Elicit(args) => elicit(args, unit),
        Command::Blend(args) => {
            let seed = match args.seed {
                Some(s) => Some(s),
                None => parse_seed_override(std::env::var(SEED_ENV).ok().as_deref())?,
            };
            let result = run_scenario_file(&args.scenario, &args.out, unit, seed)?;
            for row in &result.landmarks {
                println!(
                    "t={:<8} observed {:.4} external {:.4} blended {:.4} [{:.4}, {:.4}]",
                    unit.from_months(row.time),
                    row.observed.median,
                    row.external.median,
                    row.blended.median,
                    row.blended.lo95,
                    row.blended.hi95
                );
            }
            Ok(())
        }
        Command::Validate(args) => {
            let later = load_dataset(&args.later, args.arm.as_deref(), unit)?;
            let report = validate_outputs(&args.outputs, &later, unit)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Weight(args) => weight(args, unit),
        Command::Serve(args) => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(blendsurv::service::serve(
                args.bind,
                Duration::from_secs(args.idle_minutes * 60),
            ))?;
            Ok(())
        }
        Command::Simulate(args) => {
            let design = TrialDesign {
                n: args.n,
                accrual: args.accrual,
                seed: args.seed,
            };
            let cuts = simulate_cuts(&reference_truth(), &design, &args.cuts)?;
            fs::create_dir_all(&args.out)?;
            for (cut, data) in args.cuts.iter().zip(&cuts) {
                let path = args.out.join(format!("simulated_cut{cut}.csv"));
                fs::write(&path, to_csv(data))?;
                println!("{}: {} patients, {} events", path.display(), data.len(), data.n_events());
            }
            Ok(())
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn fit(args: FitArgs, unit: TimeUnit) -> Result<()> {
    let data = load_dataset(&args.data, args.arm.as_deref(), unit)?;
    let config = ObservedModelConfig {
        intervals: args.intervals,
        rw_order: args.rw_order,
        precision: args.precision.map_or_else(Precision::default, Precision::Fixed),
        mcmc: McmcConfig {
            n_draws: args.draws,
            burn_in: args.burn_in,
            chains: args.chains,
            seed: args.seed,
        },
    };
    let post = fit_observed(&data, &config, args.horizon)?;
    let grid = Grid::new(args.horizon, args.spacing)?;
    let curves = CurveSet::from_posterior(&post, &grid)?;
    fs::create_dir_all(&args.out)?;
    CurveTable::new(&grid, curves.survival.summary()).write(&args.out.join("survival_observed.csv"), unit)?;
    CurveTable::new(&grid, curves.hazard.summary()).write(&args.out.join("hazard_observed.csv"), unit)?;
    write_json(
        &args.out.join("fit.json"),
        &serde_json::json!({
            "config": config,
            "cutpoints": post.partition.cutpoints(),
            "n_fitted": post.partition.n_fitted(),
            "equal_width_fallback": post.partition.equal_width_fallback,
            "diagnostics": post.diagnostics,
        }),
    )?;
    println!(
        "fitted {} intervals to {} records ({} events); deviance {:.2}",
        post.partition.n_fitted(),
        data.len(),
        data.n_events(),
        post.diagnostics.deviance
    );
    Ok(())
}

fn elicit(args: ElicitArgs, unit: TimeUnit) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Error::Spec(format!("cannot read {}: {e}", args.spec.display())))?;
    let spec: ElicitationSpec =
        serde_json::from_str(&text).map_err(|e| Error::Spec(format!("elicitation spec: {e}")))?;
    let synthetic = synthesize_dataset(&spec)?;
    for w in &synthetic.warnings {
        eprintln!("warning: {w}");
    }
    let external = fit_external(&synthetic.dataset, &args.families)?;
    let best = &external.best;
    let draws = parametric_draws(best, args.draws, args.seed)?
        .iter()
        .map(|p| Distribution::new(best.family, p))
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(args.horizon.unwrap_or(spec.t_max), args.spacing)?;
    let curves = CurveSet::from_distributions(&draws, &grid)?;

    fs::create_dir_all(&args.out)?;
    let mut csv = String::from("time,event\n");
    for r in synthetic.dataset.records() {
        csv.push_str(&format!("{},{}\n", unit.from_months(r.time), u8::from(r.event)));
    }
    fs::write(args.out.join("synthetic.csv"), csv)?;
    CurveTable::new(&grid, curves.survival.summary()).write(&args.out.join("survival_external.csv"), unit)?;
    CurveTable::new(&grid, curves.hazard.summary()).write(&args.out.join("hazard_external.csv"), unit)?;
    write_json(
        &args.out.join("external_fit.json"),
        &serde_json::json!({
            "spec": spec,
            "segment_counts": synthetic.segment_counts,
            "warnings": synthetic.warnings,
            "best": best,
            "ranked": external.ranked,
        }),
    )?;
    println!("segments {:?}", synthetic.segment_counts);
    for f in &external.ranked {
        println!("{:<12} AIC {:>10.3} params {:?}", f.family.name(), f.aic, f.params.values);
    }
    Ok(())
}

fn weight(args: WeightArgs, unit: TimeUnit) -> Result<()> {
    let spec = BlendSpec {
        alpha: args.alpha,
        beta: args.beta,
        a: unit.to_months(args.a),
        b: unit.to_months(args.b),
        horizon: unit.to_months(args.horizon.unwrap_or(args.b)),
    };
    let grid = Grid::new(spec.horizon, unit.to_months(args.spacing))?;
    let (pi, density) = weight_table(&grid, &spec)?;
    println!("time,pi,density");
    for ((t, p), d) in grid.points().iter().zip(&pi).zip(&density) {
        // The density is per unit of the printed time axis.
        println!("{},{},{}", unit.from_months(*t), p, unit.to_months(*d));
    }
    Ok(())
}
