use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use opex::harness::{
    check_bounds, run_experiment, suite_glm, suite_traffic, ExperimentConfig, GlmSuite, GlmSuiteKind, SuiteReport,
    TrafficSuite,
};
use opex::schedules::{validate, PolicyName, Schedule, ScheduleInputs};

const EXIT_CONFIG: u8 = 1;
const EXIT_CHECK: u8 = 2;

#[derive(Parser)]
#[command(name = "opex", version, about = "Operator extrapolation solvers and benchmarks for monotone VIs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override keys of an experiment config.
#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    cadence: Option<usize>,
    /// Record per-iteration wall time (makes CSVs nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, seed) pair of a TOML config and write CSVs.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a canned benchmark suite.
    Suite {
        #[arg(value_enum)]
        which: SuiteName,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Traffic network sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        d_minus: Option<f64>,
    },
    /// Compare measured quantities with the convergence bounds of each policy.
    Check {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a stepsize policy's side conditions up to iteration k.
    ValidateSchedule {
        policy: String,
        #[arg(long = "L")]
        lipschitz: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        b: Option<usize>,
        /// Block Lipschitz constant (defaults to L).
        #[arg(long)]
        lbar: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        v1: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    Traffic,
    GlmHinge,
    GlmRamp,
}

fn load(path: &PathBuf, o: &Overrides) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(k) = o.k {
        cfg.k = k;
    }
    if let Some(s) = &o.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(p) = &o.output {
        cfg.output = p.clone();
    }
    if o.workers.is_some() {
        cfg.workers = o.workers;
    }
    if let Some(c) = o.cadence {
        cfg.cadence = c;
    }
    cfg.timing |= o.timing;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn print_suite(report: &SuiteReport) {
    for (name, res) in &report.setups {
        for p in &res.policies {
            let v = p.final_value("V_to_solution").map_or("-".to_string(), |(m, se)| format!("{m:.6e} ± {se:.1e}"));
            println!("{name:<24} {:<12} final V = {v}", p.label);
        }
        for e in &res.errors {
            println!("{name:<24} {:<12} ERROR {}", e.label, e.message);
        }
    }
    for t in &report.timing {
        println!("n = {:<6} OE {:>12.0} ns/iter   SBOE {:>12.0} ns/iter", t.n, t.oe_ns, t.sboe_ns);
    }
    for (name, ok, detail) in &report.assertions {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
            for p in &res.policies {
                println!("{}: {} seeds, {} oracle calls", p.label, p.seeds, p.oracle_calls_total);
            }
            for e in &res.errors {
                eprintln!("{}: {}", e.label, e.message);
            }
            println!("wrote {} files to {}", res.files.len(), cfg.output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let report = check_bounds(&cfg).map_err(|e| e.to_string())?;
            print!("{}", report.to_csv());
            for (label, note) in &report.notes {
                eprintln!("{label}: {note}");
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK) })
        }
        Command::Suite { which, seeds, k, output, workers, sizes, d_minus } => {
            let report = match which {
                SuiteName::Traffic => {
                    let mut s = TrafficSuite::default();
                    if let Some(v) = sizes {
                        s.sizes = v;
                    }
                    if let Some(d) = d_minus {
                        s.d_minus = d;
                    }
                    s.seeds = seeds.unwrap_or(s.seeds);
                    s.k = k.or(s.k);
                    s.output = output.unwrap_or(s.output);
                    s.workers = workers;
                    suite_traffic(&s)
                }
                SuiteName::GlmHinge | SuiteName::GlmRamp => {
                    let kind = if matches!(which, SuiteName::GlmHinge) { GlmSuiteKind::Hinge } else { GlmSuiteKind::Ramp };
                    let mut s = GlmSuite::new(kind);
                    s.seeds = seeds.unwrap_or(s.seeds);
                    s.k = k.unwrap_or(s.k);
                    s.output = output.unwrap_or(s.output);
                    s.workers = workers;
                    suite_glm(&s)
                }
            }
            .map_err(|e| e.to_string())?;
            print_suite(&report);
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK) })
        }
        Command::ValidateSchedule { policy, lipschitz, mu, k, b, lbar, sigma, v1 } => {
            let name: PolicyName = policy.parse().map_err(|e: opex::Error| e.to_string())?;
            let mut inputs = ScheduleInputs::new(lipschitz, mu).sigma(sigma).v1(v1).horizon(k);
            if let Some(b) = b {
                inputs = inputs.blocks(b, lbar.unwrap_or(lipschitz));
            }
            let schedule = Schedule::new(name, inputs).map_err(|e| e.to_string())?;
            let report = validate(&schedule, k);
            print!("{report}");
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK) })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
