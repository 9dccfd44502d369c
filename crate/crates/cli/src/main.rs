//! `levystop`: solve, verify and sweep threshold stopping problems for Lévy
//! models, and tabulate scale functions and Appell functions.
//!
//! Exit codes: 0 success, 1 parse or usage error, 2 failed precondition,
//! 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use levystop::appell::AppellFamily;
use levystop::fluctuation::{extrema_law, extrema_law_cached, Side, DEFAULT_SAMPLES};
use levystop::scale_functions::{build_numeric_scale_table, build_scale_table};
use levystop::simulation::{linspace, sweep_threshold, PathGrid};
use levystop::stopping_solvers::{
    solve_mckean, solve_ns, solve_ns_exponential, solve_ss, SolverConfig, ThresholdSolution,
};
use levystop::verify::{default_x0, payoff_of, sweep_grid, verify, VerifyConfig};
use levystop::{Error, LevyModel};

#[derive(Parser)]
#[command(name = "levystop", version, about = "Threshold optimal stopping for Lévy processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic threshold and value function.
    Solve {
        problem: ProblemKind,
        #[command(flatten)]
        common: ProblemArgs,
        /// Points of the value-function grid written with --out.
        #[arg(long, default_value_t = 201)]
        grid_points: usize,
    },
    /// Analytic solution checked against a Monte Carlo threshold sweep.
    Verify {
        problem: ProblemKind,
        #[command(flatten)]
        common: ProblemArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Shift added to the analytic threshold before testing.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        offset: f64,
    },
    /// Monte Carlo payoff estimates along a threshold grid.
    Sweep {
        problem: ProblemKind,
        #[command(flatten)]
        common: ProblemArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Grid start; defaults to the verify grid around the analytic threshold.
        #[arg(long, allow_negative_numbers = true, requires = "to")]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true, requires = "from")]
        to: Option<f64>,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Scale functions of a spectrally negative model.
    Scale {
        #[command(subcommand)]
        action: ScaleAction,
    },
    /// Appell functions of the supremum at an exponential time.
    Appell {
        #[command(subcommand)]
        action: AppellAction,
    },
}

#[derive(Subcommand)]
enum ScaleAction {
    /// CSV grid `x,W,Z,W'` on `[from, to]`.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 0.01)]
        from: f64,
        #[arg(long, default_value_t = 10.0)]
        to: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Force numerical Laplace inversion even when a closed form exists.
        #[arg(long)]
        numeric: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AppellAction {
    /// `Q_s(y)` for the family of order `nu`.
    Eval {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        nu: f64,
        /// Order to evaluate; defaults to `nu`.
        #[arg(long, allow_negative_numbers = true)]
        s: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        y: f64,
    },
    /// Unique positive root of `Q_nu`.
    Root {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        nu: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemKind {
    Mckean,
    Ns,
    NsExp,
    Ss,
}

#[derive(Args)]
struct LawArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    q: f64,
    #[arg(long)]
    seed: u64,
    /// Samples of an empirical extremum law.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    law_samples: usize,
    /// Directory caching empirical laws across runs.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct ProblemArgs {
    #[command(flatten)]
    law: LawArgs,
    /// Strike of the American put.
    #[arg(long)]
    strike: Option<f64>,
    /// Exponent of the power payoff.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Path horizon; defaults to the point where discounting drops below 1e-6.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    antithetic: bool,
    /// Start point of the simulated paths.
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::InvalidModel(_) | Error::Usage(_) | Error::Io(_) => 1,
        Error::Precondition(_) | Error::Domain { .. } | Error::UnsupportedModel(_) | Error::InsufficientSamples { .. } => 2,
        Error::Numerical(_) | Error::SingularProfile { .. } => 3,
    }
}

fn load_model(path: &Path) -> Result<LevyModel, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    LevyModel::from_json_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn solver_config(law: &LawArgs) -> SolverConfig {
    let mut cfg = SolverConfig::new(law.seed);
    cfg.sampling = cfg.sampling.with_samples(law.law_samples);
    cfg.cache_dir = law.cache.clone();
    cfg
}

fn solve(kind: ProblemKind, args: &ProblemArgs) -> Result<ThresholdSolution, Error> {
    let model = load_model(&args.law.model)?;
    let q = args.law.q;
    let cfg = solver_config(&args.law);
    match kind {
        ProblemKind::Mckean => {
            let strike = args
                .strike
                .ok_or_else(|| Error::Usage("mckean needs --strike".into()))?;
            solve_mckean(&model, q, strike, &cfg)
        }
        ProblemKind::Ns => {
            let nu = args.nu.ok_or_else(|| Error::Usage("ns needs --nu".into()))?;
            solve_ns(&model, q, nu, &cfg)
        }
        ProblemKind::NsExp => solve_ns_exponential(&model, q, &cfg),
        ProblemKind::Ss => solve_ss(&model, q),
    }
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serialises");
    s.push('\n');
    s
}

fn value_grid(sol: &ThresholdSolution, points: usize) -> Vec<f64> {
    let lo = match sol.problem {
        levystop::stopping_solvers::Problem::SheppShiryaev => 0.0,
        _ => sol.threshold - 5.0,
    };
    linspace(lo, sol.threshold + 5.0, points.max(2))
}

fn verify_config(seed: u64, mc: &McArgs) -> VerifyConfig {
    let mut cfg = VerifyConfig::new(seed);
    cfg.n_paths = mc.paths;
    cfg.dt = mc.dt;
    cfg.t_max = mc.t_max;
    cfg.antithetic = mc.antithetic;
    cfg.x0 = mc.x0;
    cfg
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve {
            problem,
            common,
            grid_points,
        } => {
            let sol = solve(problem, &common)?;
            let summary = pretty(&sol.summary_json());
            print!("{summary}");
            if let Some(dir) = &common.out {
                write_out(dir, "solution.json", &summary)?;
                write_out(dir, "value.csv", &sol.value_csv(&value_grid(&sol, grid_points))?)?;
            }
        }
        Command::Verify {
            problem,
            common,
            mc,
            offset,
        } => {
            let sol = solve(problem, &common)?;
            let mut cfg = verify_config(common.law.seed, &mc);
            cfg.offset = offset;
            let report = verify(&sol, &cfg)?;
            println!("{}", report.summary_line());
            if let Some(dir) = &common.out {
                let mut doc = serde_json::to_value(&report)?;
                doc["solution"] = sol.summary_json();
                write_out(dir, "verify.json", &pretty(&doc))?;
                write_out(dir, "sweep.csv", &report.sweep.to_csv())?;
            }
        }
        Command::Sweep {
            problem,
            common,
            mc,
            from,
            to,
            points,
        } => {
            let sol = solve(problem, &common)?;
            let cfg = verify_config(common.law.seed, &mc);
            let levels = match (from, to) {
                (Some(a), Some(b)) => linspace(a, b, points),
                _ => sweep_grid(&sol, sol.threshold, &VerifyConfig { grid_points: points, ..cfg }),
            };
            let x0 = mc.x0.unwrap_or_else(|| default_x0(&sol, &cfg));
            let payoff = payoff_of(&sol.problem);
            let mut grid = PathGrid::for_payoff(&sol.model, sol.q, &payoff, cfg.seed)
                .with_dt(cfg.dt)
                .with_antithetic(cfg.antithetic);
            if let Some(t) = cfg.t_max {
                grid = grid.with_t_max(t);
            }
            let sweep = sweep_threshold(&sol.model, sol.q, payoff, x0, &levels, grid, cfg.n_paths)?;
            let csv = sweep.to_csv();
            print!("{csv}");
            if let Some(dir) = &common.out {
                write_out(dir, "sweep.csv", &csv)?;
                let doc = json!({
                    "problem": sol.problem.name(),
                    "threshold": sol.threshold,
                    "x0": x0,
                    "argmax": sweep.argmax_level(),
                    "argmax_interval": [sweep.flat_interval.0, sweep.flat_interval.1],
                    "interval_contains_threshold": sweep.interval_contains(sol.threshold),
                    "n_paths": cfg.n_paths,
                    "seed": cfg.seed,
                });
                write_out(dir, "sweep.json", &pretty(&doc))?;
            }
        }
        Command::Scale {
            action:
                ScaleAction::Eval {
                    model,
                    q,
                    from,
                    to,
                    points,
                    numeric,
                    out,
                },
        } => {
            let model = load_model(&model)?;
            if !(from > 0.0 && to >= from) {
                return Err(Error::Usage(format!("scale grid needs 0 < from <= to, got [{from}, {to}]")));
            }
            let table = if numeric {
                build_numeric_scale_table(&model, q)?
            } else {
                build_scale_table(&model, q)?
            };
            let mut csv = String::from("x,W,Z,W'\n");
            for x in linspace(from, to, points) {
                csv.push_str(&format!("{x},{},{},{}\n", table.w(x), table.z(x), table.w_prime(x)?));
            }
            print!("{csv}");
            if let Some(dir) = &out {
                write_out(dir, "scale.csv", &csv)?;
            }
        }
        Command::Appell { action } => {
            let (law_args, nu) = match &action {
                AppellAction::Eval { law, nu, .. } | AppellAction::Root { law, nu } => (law, *nu),
            };
            let model = load_model(&law_args.model)?;
            let cfg = solver_config(law_args);
            let law = match &cfg.cache_dir {
                Some(dir) => extrema_law_cached(&model, law_args.q, Side::Supremum, &cfg.sampling, dir)?,
                None => extrema_law(&model, law_args.q, Side::Supremum, &cfg.sampling)?,
            };
            let fam = AppellFamily::new(&model, law, nu)?;
            let doc = match action {
                AppellAction::Eval { s, y, .. } => {
                    let s = s.unwrap_or(nu);
                    json!({ "nu": nu, "s": s, "y": y, "value": fam.eval(s, y)? })
                }
                AppellAction::Root { .. } => json!({ "nu": nu, "root": fam.root()? }),
            };
            print!("{}", pretty(&doc));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
