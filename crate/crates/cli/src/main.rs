use std::error::Error as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinbath::bath_order::{order_sweep, SamplingPolicy};
use spinbath::driver::{
    self, reproduce_table1, sweep, table1_spec, InitialState, RunConfig, SweepParameter, TABLE1_TEMPERATURES,
    TABLE1_THRESHOLDS,
};
use spinbath::{Parallelism, SimError};

#[derive(Parser)]
#[command(name = "spinbath", version, about = "Two coupled spins in a thermal spin bath")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration and write its time series.
    Run(Overrides),
    /// Repeat a run over several values of one parameter.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// lambda-bb, temperature or bath-spins.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Retained bath-state counts for the m = 8, λ_bb = 4 table.
    Table1 {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Half-filling ordering probability against λ_bb.
    OrderSweep {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9,10")]
        lambda_grid: Vec<f64>,
        /// Bin n to report (default m/2).
        #[arg(long)]
        bin: Option<usize>,
        /// Sample at this time instead of time-averaging.
        #[arg(long)]
        at: Option<f64>,
        /// Leading fraction of the window dropped from the time average.
        #[arg(long, default_value_t = 0.1)]
        discard: f64,
    },
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bath_spins: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_bb: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_ss: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_sb: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    temperature: Option<f64>,
    /// bell1..bell4, or custom:re00,im00,re01,im01,re10,im10,re11,im11.
    #[arg(long, value_parser = parse_state)]
    initial_state: Option<InitialState>,
    #[arg(long, allow_negative_numbers = true)]
    t_max: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    threshold: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
    /// Compare every trajectory against dense diagonalization.
    #[arg(long)]
    oracle_check: bool,
    /// Evolve ensemble members one at a time.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_state(s: &str) -> Result<InitialState, String> {
    s.parse().map_err(|e: SimError| e.to_string())
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, SimError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.bath_spins {
            cfg.model.n_bath = v;
        }
        if let Some(v) = self.lambda_bb {
            cfg.model.lambda_bb = v;
        }
        if let Some(v) = self.lambda_ss {
            cfg.model.lambda_ss = v;
        }
        if let Some(v) = self.lambda_sb {
            cfg.model.lambda_sb = v;
        }
        if let Some(v) = self.temperature {
            cfg.model.temperature = v;
        }
        if let Some(v) = self.initial_state {
            cfg.initial_state = v;
        }
        if let Some(v) = self.t_max {
            cfg.t_max = v;
        }
        if let Some(v) = self.samples {
            cfg.n_samples = v;
        }
        if let Some(v) = self.threshold {
            cfg.weight_threshold = v;
        }
        if let Some(v) = self.alpha {
            cfg.propagator.alpha = v;
        }
        if let Some(v) = self.kmax {
            cfg.propagator.k_max = v;
        }
        if self.oracle_check {
            cfg.oracle_check = true;
        }
        if self.sequential {
            cfg.parallelism = Parallelism::Sequential;
        }
        if let Some(dir) = &self.out {
            cfg.output.dir = Some(dir.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_run(overrides: &Overrides) -> Result<(), SimError> {
    let cfg = overrides.resolve()?;
    let result = driver::run(&cfg)?;
    let meta = &result.metadata;
    let last = result.records.last().expect("grid has at least two points");
    println!(
        "N = {}, M = {} (retained weight {:.6}), dt = {}",
        cfg.model.n_spins(),
        meta.ensemble_size,
        meta.retained_weight,
        meta.accepted_dt
    );
    println!(
        "t = {}: cxx = {:.6}, cyy = {:.6}, czz = {:.6}, concurrence = {:.6}",
        last.time, last.c_xx, last.c_yy, last.c_zz, last.concurrence
    );
    if let Some(dev) = meta.oracle_max_deviation {
        println!("oracle max deviation {dev:.3e}");
    }
    if let Some(dir) = &cfg.output.dir {
        report_written(&driver::write_run_files(dir, "timeseries", &result)?);
    }
    Ok(())
}

fn cmd_sweep(overrides: &Overrides, param: &str, values: &[f64]) -> Result<(), SimError> {
    let parameter: SweepParameter = param.parse()?;
    let cfg = overrides.resolve()?;
    let outcomes = sweep(&cfg, parameter, values)?;
    println!("{:>12}  {:>4}  {:>10}  {:>10}  {:>10}  {:>10}", parameter.name(), "M", "rms cxx", "rms cyy", "rms czz", "rms C");
    for o in &outcomes {
        match &o.result {
            Ok((res, s)) => println!(
                "{:>12}  {:>4}  {:>10.4e}  {:>10.4e}  {:>10.4e}  {:>10.4e}",
                o.value, res.metadata.ensemble_size, s.cxx, s.cyy, s.czz, s.concurrence
            ),
            Err(e) => println!("{:>12}  failed: {e}", o.value),
        }
    }
    if let Some(dir) = &cfg.output.dir {
        report_written(&driver::write_sweep_files(dir, parameter, &outcomes)?);
    }
    match outcomes.into_iter().find_map(|o| o.result.err()) {
        Some(first) => Err(first),
        None => Ok(()),
    }
}

fn cmd_table1(out: Option<&Path>) -> Result<(), SimError> {
    let table = reproduce_table1(&table1_spec())?;
    print!("{:>9}", "ω_th \\ T");
    for t in TABLE1_TEMPERATURES {
        print!("{t:>10}");
    }
    println!();
    for th in TABLE1_THRESHOLDS {
        print!("{th:>9e}");
        for t in TABLE1_TEMPERATURES {
            let c = table.cell(th, t).expect("full grid");
            let mark = if c.matches { ' ' } else { '*' };
            print!("{:>10}", format!("{}/{}{}", c.computed, c.reference, mark));
        }
        println!();
    }
    println!("computed/reference, * marks cells off by more than one state");
    if let Some(dir) = out {
        report_written(&[driver::write_table1_file(dir, &table)?]);
    }
    Ok(())
}

fn cmd_order_sweep(
    overrides: &Overrides,
    lambda_grid: &[f64],
    bin: Option<usize>,
    at: Option<f64>,
    discard: f64,
) -> Result<(), SimError> {
    let cfg = overrides.resolve()?;
    let policy = match at {
        Some(time) => SamplingPolicy::Instant { time },
        None => SamplingPolicy::TimeAverage { discard_fraction: discard },
    };
    let points = order_sweep(&cfg, lambda_grid, policy, bin, cfg.parallelism)?;
    println!("{:>10}  {:>10}  {:>10}", "lambda_bb", "P", "sd(t)");
    for p in &points {
        println!("{:>10}  {:>10.6}  {:>10.6}", p.lambda_bb, p.probability, p.stderr_over_time);
    }
    if let Some(dir) = &cfg.output.dir {
        report_written(&[driver::write_order_sweep_file(dir, &cfg, &points)?]);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match &cli.command {
        Command::Run(o) => cmd_run(o),
        Command::Sweep { overrides, param, values } => cmd_sweep(overrides, param, values),
        Command::Table1 { out } => cmd_table1(out.as_deref()),
        Command::OrderSweep { overrides, lambda_grid, bin, at, discard } => {
            cmd_order_sweep(overrides, lambda_grid, *bin, *at, *discard)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
