//! `locclab` command-line front end.
//!
//! Every command prints one JSON report on stdout. Exit codes: 0 when the
//! queried verdict holds, 1 when it does not, 2 for usage or input errors and
//! 3 for numerical failures.

mod commands;
mod inputs;
mod report;
mod suite;

use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use locclab::DEFAULT_TOL;

use inputs::Ctx;
use report::{status_name, CliError, Report, EXIT_NEGATIVE, EXIT_PASS, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "locclab", version, about = "Deterministic and LOCC transformations of multipartite states")]
pub struct Cli {
    /// RNG seed for randomized routines; `sep verify-cert` also accepts a seed state here.
    #[arg(long, global = true, env = "LOCCLAB_SEED")]
    seed: Option<String>,
    /// Numerical tolerance.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Indent the JSON report.
    #[arg(long, global = true)]
    pretty: bool,
    /// Include wall time in the report.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build or classify states.
    #[command(subcommand)]
    State(StateCmd),
    /// Stabilizer families and quasi-commutation.
    #[command(subcommand)]
    Symmetry(SymmetryCmd),
    /// Weak isolation and generic-isolation witnesses.
    #[command(subcommand)]
    Isolation(IsolationCmd),
    /// Round-based protocols.
    #[command(subcommand)]
    Protocol(ProtocolCmd),
    /// Separable-map necessary conditions.
    #[command(subcommand)]
    Sep(SepCmd),
    /// Controlled-unitary preparation of diagonal-family states.
    #[command(subcommand)]
    Decomp(DecompCmd),
    /// Run a fixed battery of checks.
    Suite(SuiteArgs),
}

#[derive(Subcommand)]
pub enum StateCmd {
    /// Print a state with its norm and local spectra.
    Build {
        #[arg(long)]
        spec: String,
    },
    /// Classify a diagonal-family member; exits 1 outside the family.
    Classify {
        /// `a1,b1,a2,b2`
        #[arg(long)]
        params: String,
    },
}

#[derive(Subcommand)]
pub enum SymmetryCmd {
    /// Check `op|state> = |state>`; exits 1 otherwise.
    Verify {
        #[arg(long)]
        op: String,
        #[arg(long)]
        state: String,
    },
    /// Draw family elements and check them on the family's reference state.
    Sample {
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Nontrivial elements quasi-commuting with `H` on the required sites; exits 1 when none exist.
    Solve {
        #[arg(long)]
        family: String,
        /// JSON list of matrices, inline or as a file.
        #[arg(long = "H")]
        h: String,
        /// 1-based sites; all sites when omitted.
        #[arg(long)]
        required: Option<String>,
    },
}

#[derive(Subcommand)]
pub enum IsolationCmd {
    /// Decide weak isolation; exits 0 when isolated, 1 otherwise.
    Check {
        #[arg(long)]
        family: String,
        /// JSON list of matrices or a class-state object.
        #[arg(long = "G")]
        g: String,
    },
    /// Build and verify a generic-isolation witness; exits 1 when the conditions fail.
    Theorem5 {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: f64,
        /// Fixed perturbation; halved automatically from 1e-2 when omitted.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        probes: usize,
    },
    /// Four-qubit stabilizer case; exits 0 when the sampled state is isolated.
    Fourqubit {
        #[arg(long)]
        case: String,
    },
}

#[derive(Subcommand)]
pub enum ProtocolCmd {
    /// Check completeness and correction unitarity; exits 1 on failure.
    Validate {
        #[arg(long)]
        file: String,
    },
    /// Simulate every branch; exits 0 when deterministic and on target.
    Run {
        #[arg(long)]
        file: String,
        /// State spec or JSON; defaults to the protocol's own input.
        #[arg(long)]
        input: Option<String>,
    },
    /// Emit a built-in protocol.
    Builtin {
        #[arg(long)]
        name: String,
        /// JSON object of parameters.
        #[arg(long)]
        params: Option<String>,
        /// Also write the bare protocol JSON here.
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Subcommand)]
pub enum SepCmd {
    /// Decide the literal system; exits 1 when inconsistent.
    Feasibility {
        /// `a1,b1,a2,b2`
        #[arg(long)]
        initial: String,
        /// `a1,a2`
        #[arg(long)]
        target: String,
        /// Ratio of squared norms; 1 by default.
        #[arg(long)]
        r: Option<String>,
        /// Rational arithmetic; inputs are read as exact decimals or fractions.
        #[arg(long)]
        exact: bool,
    },
    /// Both directions between two family members; exits 1 when the forward one is forbidden.
    Report {
        #[arg(long)]
        initial: String,
        /// `a1,b1,a2,b2`
        #[arg(long)]
        target: String,
    },
    /// Boundary value of `a2'` and an optional grid scan around it.
    Boundary {
        /// `a1,a2`
        #[arg(long)]
        target: String,
        #[arg(long)]
        alpha1p: String,
        /// `lo,hi,step`
        #[arg(long)]
        scan: Option<String>,
    },
    /// Evaluate a certificate; exits 1 when the residual exceeds the tolerance.
    VerifyCert {
        #[arg(long)]
        file: String,
        #[arg(long)]
        g: String,
        #[arg(long)]
        h: String,
        /// Seed state; `--seed <state>` is accepted too.
        #[arg(long)]
        seed_state: Option<String>,
    },
}

#[derive(Subcommand)]
pub enum DecompCmd {
    /// Run the circuit against the target; exits 1 when the residual exceeds the tolerance.
    Verify(DecompArgs),
    /// Print the decomposition data.
    Show(DecompArgs),
}

#[derive(Args)]
pub struct DecompArgs {
    /// `a1,a2,b1,b2`
    #[arg(long)]
    params: String,
    /// Read `--params` in the state-family order `a1,b1,a2,b2`.
    #[arg(long)]
    family_order: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SuiteName {
    PaperIdentities,
    IsolationSurvey,
    SepScan,
    DecompSweep,
}

#[derive(Args)]
pub struct SuiteArgs {
    #[arg(value_enum)]
    name: SuiteName,
    /// Override the per-case draw count.
    #[arg(long)]
    draws: Option<usize>,
}

fn emit(report: &Report, pretty: bool) {
    let text = if pretty { serde_json::to_string_pretty(report) } else { serde_json::to_string(report) };
    println!("{}", text.expect("report serializes"));
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let command: Vec<String> = argv.iter().skip(1).cloned().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let report = Report {
                inputs_digest: Ctx::new(DEFAULT_TOL, None).digest(&command),
                command,
                seed: 0,
                tol: DEFAULT_TOL,
                status: status_name(EXIT_USAGE),
                exit_code: EXIT_USAGE,
                result: None,
                error: Some(e.render().to_string().trim_end().to_string()),
                wall_time_s: None,
            };
            emit(&report, false);
            std::process::exit(EXIT_USAGE);
        }
    };

    let start = Instant::now();
    let ctx = Ctx::new(cli.tol, cli.seed.clone());
    let names_state = matches!(cli.command, Command::Sep(SepCmd::VerifyCert { .. }));
    let seed = if names_state { Ok(ctx.seed().unwrap_or(0)) } else { ctx.seed() };
    let seed_value = seed.as_ref().map_or(0, |s| *s);
    let outcome = match seed {
        Err(err) => Err(err),
        Ok(_) if !(cli.tol.is_finite() && cli.tol > 0.0) => {
            Err(CliError::usage(format!("--tol must be positive, got {}", cli.tol)))
        }
        Ok(_) => commands::dispatch(&cli.command, &ctx),
    };
    let (code, result, error) = match outcome {
        Ok(o) => (if o.positive { EXIT_PASS } else { EXIT_NEGATIVE }, Some(o.result), None),
        Err(err) => (err.code, None, Some(err.message)),
    };
    let report = Report {
        inputs_digest: ctx.digest(&command),
        command,
        seed: seed_value,
        tol: cli.tol,
        status: status_name(code),
        exit_code: code,
        result,
        error,
        wall_time_s: cli.timing.then(|| start.elapsed().as_secs_f64()),
    };
    emit(&report, cli.pretty);
    std::process::exit(code);
}
