//! `coinmax`: command-line front end for the minimax coin workbench.
//!
//! Every command prints either a JSON run report or CSV on stdout.
//! Diagnostics go to stderr. Exit codes: 0 success, 2 usage error,
//! 3 solver non-convergence, 4 invalid certificate, 5 invariant failure.

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use coinmax_core::asymptotics::decay_table;
use coinmax_core::estimators::{
    aeme_solve, closed_form_nodes, equimax_residual, Method, SolverConfig,
};
use coinmax_core::game::nash_certificate;
use coinmax_core::penalty::{
    build_piecewise, certify_maxima, eval_penalty, unit_grid, Loss, NodeSet, DEFAULT_MAXIMA_EPS,
};
use coinmax_core::report::{csv_string, fmt_g17, RunReport};
use coinmax_core::verify::{run_suite, VerifyConfig};
use coinmax_core::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_INVALID_CERTIFICATE: u8 = 4;
const EXIT_INVARIANT: u8 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "coinmax",
    version,
    about = "Minimax estimators for a coin's bias under absolute-error loss"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// Solver tolerance on the spread of the interval maxima.
    #[arg(long, global = true, env = "COINMAX_TOL", default_value_t = 1e-10)]
    tol: f64,
    /// Seed for multistart and sampling.
    #[arg(long, global = true, env = "COINMAX_SEED", default_value_t = 0)]
    seed: u64,
    /// Newton iteration cap.
    #[arg(long, global = true, env = "COINMAX_MAX_ITER", default_value_t = 200)]
    max_iter: usize,
    /// Record wall-clock time in the report (makes output non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Mle,
    Mmle,
    Seme,
    Aeme,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Mle => Method::Mle,
            MethodArg::Mmle => Method::Mmle,
            MethodArg::Seme => Method::Seme,
            MethodArg::Aeme => Method::Aeme,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Abs,
    Sq,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Nodes, sup-norm and certified maxima of one estimator.
    Estimators {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "json")]
        out: Format,
    },
    /// Penalty values on an equispaced grid of [0, 1].
    Penalty {
        /// Comma-separated nodes a_0,..,a_n in [0, 1].
        #[arg(long, value_parser = parse_nodes, allow_hyphen_values = true)]
        nodes: NodeSet,
        #[arg(long, value_enum, default_value = "abs")]
        loss: LossArg,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..), default_value_t = 101)]
        grid: u64,
        #[arg(long, value_enum, default_value = "csv")]
        out: Format,
    },
    /// Least-favorable prior and equilibrium residuals.
    Nash {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
    },
    /// Sup-norm decay and counting-measure diagnostics for n = 1..max-n.
    Asymptotics {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        max_n: u64,
        #[arg(
            long,
            value_enum,
            value_delimiter = ',',
            default_value = "mle,mmle,seme,aeme"
        )]
        methods: Vec<MethodArg>,
        #[arg(long, value_enum, default_value = "csv")]
        out: Format,
    },
    /// Run the invariant suite.
    Verify {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 10)]
        max_n: u64,
        /// Shift the first optimal node by this amount before the dominance
        /// checks (negative control; the suite should then fail).
        #[arg(long, allow_hyphen_values = true)]
        perturb: Option<f64>,
        /// Allowed relative excess of the MMLE sup-norm over the optimum.
        #[arg(long, default_value_t = 0.15)]
        near_optimal_threshold: f64,
        /// Random samples for the Jensen check.
        #[arg(long, default_value_t = 100_000)]
        jensen_samples: usize,
    },
}

fn parse_nodes(s: &str) -> Result<NodeSet, String> {
    let values = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<Vec<f64>, String>>()?;
    NodeSet::new(values).map_err(|e| e.to_string())
}

/// Outcome of a command: the text to print and the exit code.
struct Outcome {
    text: String,
    code: u8,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Outcome { text, code: 0 }
    }
}

struct Failure {
    message: String,
    code: u8,
    text: Option<String>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
            Error::InvalidConfig(_) | Error::InvalidNodes(_) | Error::Domain { .. } => EXIT_USAGE,
            Error::AtomOnNode { .. } | Error::RankDeficient { .. } | Error::SupportCount { .. } => {
                EXIT_INVALID_CERTIFICATE
            }
            _ => 1,
        };
        Failure {
            message: e.to_string(),
            code,
            text: None,
        }
    }
}

struct Ctx {
    solver: SolverConfig,
    started: Instant,
    timing: bool,
}

impl Ctx {
    fn finish(&self, report: RunReport) -> Result<String, Failure> {
        let report = if self.timing {
            report.with_elapsed(self.started.elapsed().as_secs_f64())
        } else {
            report
        };
        Ok(report.to_json()?)
    }
}

fn g(x: f64) -> String {
    fmt_g17(x)
}

fn cmd_estimators(ctx: &Ctx, n: usize, method: Method, out: Format) -> Result<Outcome, Failure> {
    let config = json!({"solver": ctx.solver, "n": n, "method": method});
    let (nodes, maxima, residual, extra) = match closed_form_nodes(method, n) {
        Some(ns) => {
            let maxima = certify_maxima(&build_piecewise(&ns), DEFAULT_MAXIMA_EPS)?;
            let residual = equimax_residual(&ns)?;
            (ns, maxima, residual, json!({}))
        }
        None => match aeme_solve(n, &ctx.solver) {
            Ok(res) => {
                let extra =
                    json!({"iterations": res.iterations, "used_fallback": res.used_fallback});
                (res.nodes, res.maxima, res.equimax_residual, extra)
            }
            Err(Error::NonConvergence {
                iterations,
                residual,
                best_nodes,
            }) => {
                let diag = json!({"iterations": iterations, "residual": residual, "best_nodes": best_nodes});
                let report = RunReport::new(
                    "estimators",
                    &config,
                    &diag,
                    &json!({"equimax_residual": residual}),
                )?;
                return Err(Failure {
                    message: format!("solver did not converge after {iterations} iterations"),
                    code: EXIT_NONCONVERGENCE,
                    text: Some(ctx.finish(report)?),
                });
            }
            Err(e) => return Err(e.into()),
        },
    };
    let text = match out {
        Format::Json => {
            let payload = json!({
                "method": method,
                "n": n,
                "nodes": nodes.nodes(),
                "sup_norm": maxima.sup_norm,
                "maxima_points": maxima.points,
                "equimax_residual": residual,
                "solver": extra,
            });
            let residuals = json!({"equimax_residual": residual});
            ctx.finish(RunReport::new("estimators", &config, &payload, &residuals)?)?
        }
        Format::Csv => {
            let mut rows = Vec::new();
            for (k, a) in nodes.nodes().iter().enumerate() {
                rows.push(vec!["node".into(), k.to_string(), g(*a)]);
            }
            for (k, p) in maxima.points.iter().enumerate() {
                rows.push(vec!["maximum".into(), k.to_string(), g(*p)]);
            }
            rows.push(vec!["sup_norm".into(), String::new(), g(maxima.sup_norm)]);
            rows.push(vec!["equimax_residual".into(), String::new(), g(residual)]);
            csv_string(&["quantity", "index", "value"], &rows)?
        }
    };
    Ok(Outcome::ok(text))
}

fn cmd_penalty(
    ctx: &Ctx,
    nodes: &NodeSet,
    loss: Loss,
    grid: usize,
    out: Format,
) -> Result<Outcome, Failure> {
    let points = unit_grid(grid);
    let values: Vec<f64> = points
        .iter()
        .map(|&p| eval_penalty(nodes, loss, p))
        .collect();
    let text = match out {
        Format::Csv => {
            let rows: Vec<Vec<String>> = points
                .iter()
                .zip(&values)
                .map(|(p, v)| vec![g(*p), g(*v)])
                .collect();
            csv_string(&["p", "value"], &rows)?
        }
        Format::Json => {
            let config = json!({"nodes": nodes.nodes(), "loss": loss, "grid": grid});
            let payload = json!({"p": points, "value": values});
            let max = values.iter().copied().fold(f64::MIN, f64::max);
            let min = values.iter().copied().fold(f64::MAX, f64::min);
            ctx.finish(RunReport::new(
                "penalty",
                &config,
                &payload,
                &json!({"grid_max": max, "grid_min": min}),
            )?)?
        }
    };
    Ok(Outcome::ok(text))
}

fn cmd_nash(ctx: &Ctx, n: usize) -> Result<Outcome, Failure> {
    let cert = nash_certificate(n, &ctx.solver)?;
    let config = json!({"solver": ctx.solver, "n": n});
    let residuals = json!({
        "value_gap": cert.value_gap,
        "stationarity_residual": cert.stationarity_residual,
        "support_gap": cert.support_gap,
    });
    let text = ctx.finish(RunReport::new("nash", &config, &cert, &residuals)?)?;
    if cert.valid {
        Ok(Outcome::ok(text))
    } else {
        Err(Failure {
            message: format!("certificate for n={n} is invalid"),
            code: EXIT_INVALID_CERTIFICATE,
            text: Some(text),
        })
    }
}

fn cmd_asymptotics(
    ctx: &Ctx,
    max_n: usize,
    methods: &[Method],
    out: Format,
) -> Result<Outcome, Failure> {
    let n_values: Vec<usize> = (1..=max_n).collect();
    let rows = decay_table(&n_values, methods, &ctx.solver);
    let any_ok = rows.iter().any(|r| r.converged);
    let text = match out {
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.method.as_str().to_string(),
                        g(r.sup_norm),
                        g(r.bound),
                        g(r.kolmogorov_distance),
                        r.converged.to_string(),
                        r.note.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            csv_string(
                &[
                    "n",
                    "method",
                    "sup_norm",
                    "bound",
                    "kolmogorov_distance",
                    "converged",
                    "note",
                ],
                &table,
            )?
        }
        Format::Json => {
            let config = json!({"solver": ctx.solver, "max_n": max_n, "methods": methods});
            let residuals = json!({
                "failed_rows": rows.iter().filter(|r| !r.converged).count(),
                "kolmogorov_threshold_at_n20": 0.15,
                "threshold_note": "no convergence rate is known; thresholds are engineering choices",
            });
            ctx.finish(RunReport::new("asymptotics", &config, &rows, &residuals)?)?
        }
    };
    if any_ok {
        Ok(Outcome::ok(text))
    } else {
        Err(Failure {
            message: "no row could be computed".into(),
            code: EXIT_NONCONVERGENCE,
            text: Some(text),
        })
    }
}

fn cmd_verify(ctx: &Ctx, cfg: VerifyConfig) -> Result<Outcome, Failure> {
    let report = run_suite(&cfg)?;
    for c in report.checks.iter().filter(|c| !c.passed) {
        let kind = if c.gating { "FAIL" } else { "note" };
        eprintln!(
            "{kind}: {} measured {:e} threshold {:e} ({})",
            c.name, c.measured, c.threshold, c.detail
        );
    }
    let residuals =
        json!({"failed_gating": report.failed_gating, "failed_reported": report.failed_reported});
    let text = ctx.finish(RunReport::new("verify", &cfg, &report, &residuals)?)?;
    if report.passed {
        Ok(Outcome::ok(text))
    } else {
        Err(Failure {
            message: format!("{} invariant check(s) failed", report.failed_gating),
            code: EXIT_INVARIANT,
            text: Some(text),
        })
    }
}

fn run(cli: Cli) -> Result<Outcome, Failure> {
    let solver = SolverConfig {
        tol: cli.global.tol,
        max_iterations: cli.global.max_iter,
        seed: cli.global.seed,
        ..SolverConfig::default()
    };
    solver.validate()?;
    let ctx = Ctx {
        solver,
        started: Instant::now(),
        timing: cli.global.timing,
    };
    match cli.command {
        Command::Estimators { n, method, out } => {
            cmd_estimators(&ctx, n as usize, method.into(), out)
        }
        Command::Penalty {
            nodes,
            loss,
            grid,
            out,
        } => {
            let loss = match loss {
                LossArg::Abs => Loss::Abs,
                LossArg::Sq => Loss::Sq,
            };
            cmd_penalty(&ctx, &nodes, loss, grid as usize, out)
        }
        Command::Nash { n } => cmd_nash(&ctx, n as usize),
        Command::Asymptotics {
            max_n,
            methods,
            out,
        } => {
            let mut list: Vec<Method> = Vec::new();
            for m in methods.into_iter().map(Method::from) {
                if !list.contains(&m) {
                    list.push(m);
                }
            }
            cmd_asymptotics(&ctx, max_n as usize, &list, out)
        }
        Command::Verify {
            max_n,
            perturb,
            near_optimal_threshold,
            jensen_samples,
        } => {
            let cfg = VerifyConfig {
                max_n: max_n as usize,
                solver: ctx.solver.clone(),
                jensen_samples,
                perturbation: perturb,
                near_optimal_threshold,
                ..VerifyConfig::default()
            };
            cmd_verify(&ctx, cfg)
        }
    }
}

fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            emit(&outcome.text);
            ExitCode::from(outcome.code)
        }
        Err(f) => {
            if let Some(text) = &f.text {
                emit(text);
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
