//! `blockprox` command line: generate instances, run one solver, or run a
//! benchmark grid.

mod bench;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use blockprox::config::RunConfig;
use blockprox::instance::{self, LassoInstance, CERTIFICATE_TOL};
use blockprox::trace::TraceWriter;
use blockprox::{Method, Regularizer, RunTrace, Solver, SolverParams};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] blockprox::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use blockprox::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(E::LineSearchFailure(_) | E::Divergence { .. }) => 3,
            CliError::Solver(
                E::Parameter(_)
                | E::InvalidParams(_)
                | E::InvalidPartition(_)
                | E::Config { .. }
                | E::Dimension { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "blockprox",
    version,
    about = "Randomized block proximal gradient solvers for l1 least squares"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a lasso instance with a certified optimum and write it as BPXI.
    Gen(GenArgs),
    /// Run one method on one instance and stream the trace CSV.
    Run(RunArgs),
    /// Run a (method x block size x seed) grid and aggregate epochs to target.
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    sparsity: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Where the instance comes from: a file, or generator flags.
#[derive(Args, Clone)]
pub struct SourceArgs {
    /// BPXI file, or a CSV file whose last column is b.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sparsity: Option<usize>,
    /// Weight of the l1 term for generated and CSV instances.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    gen_seed: u64,
}

impl SourceArgs {
    pub fn load(&self) -> CliResult<LassoInstance> {
        if let Some(path) = &self.instance {
            let is_csv = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            return Ok(if is_csv {
                instance::load_csv(path, self.lambda)?
            } else {
                instance::load_instance(path)?
            });
        }
        match (self.m, self.n, self.sparsity) {
            (Some(m), Some(n), Some(s)) => Ok(instance::generate_lasso(
                m,
                n,
                s,
                self.lambda,
                self.gen_seed,
            )?),
            _ => Err(CliError::Usage(
                "give --instance <file> or all of --m, --n, --sparsity".into(),
            )),
        }
    }
}

/// Solver settings shared by `run` and `bench`. Precedence: defaults, then
/// `--config`, then explicit flags.
#[derive(Args, Clone)]
pub struct TuningArgs {
    /// key = value file with solver parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Nonmonotone memory M.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    max_epochs: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    target_gap: f64,
}

impl TuningArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let p = &mut cfg.params;
        if let Some(w) = self.window {
            p.window = w;
        }
        if let Some(k) = self.max_iters {
            p.max_iters = k;
        }
        if self.max_epochs.is_some() {
            p.max_epochs = self.max_epochs;
        }
        p.gap_tol = self.target_gap;
        p.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// rnbpg, rnbpg_nobb, rbcd or rbcd_ls.
    #[arg(long, default_value = "rnbpg")]
    method: Method,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace CSV path; the trace goes to stdout and the summary to stderr
    /// when omitted.
    #[arg(long)]
    trace: Option<PathBuf>,
}

/// Outcome of one solver run, as reported by `run` and `bench`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub method: Method,
    pub block_size: usize,
    pub seed: u64,
    pub iterations: usize,
    pub epochs: f64,
    pub iters_to_target: Option<usize>,
    pub epochs_to_target: Option<f64>,
    pub final_f: f64,
    pub final_gap: Option<f64>,
    pub wall_s: f64,
}

pub const SUMMARY_COLUMNS: &str =
    "method,block_size,seed,hit,iterations,epochs,iters_to_target,epochs_to_target,final_f,final_gap,wall_s";

impl RunSummary {
    pub fn from_trace(
        method: Method,
        block_size: usize,
        seed: u64,
        gap_tol: f64,
        trace: &RunTrace,
        wall_s: f64,
    ) -> Self {
        let last = trace.last();
        let hit = trace.first_hit(gap_tol);
        Self {
            method,
            block_size,
            seed,
            iterations: last.k,
            epochs: last.epoch,
            iters_to_target: hit.map(|r| r.k),
            epochs_to_target: hit.map(|r| r.epoch),
            final_f: last.f_value,
            final_gap: last.gap,
            wall_s,
        }
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{:e},{},{},{:e},{},{:e}",
            self.method,
            self.block_size,
            self.seed,
            if self.epochs_to_target.is_some() {
                "yes"
            } else {
                "no"
            },
            self.iterations,
            self.epochs,
            opt(self.iters_to_target.map(|k| k.to_string())),
            opt(self.epochs_to_target.map(|e| format!("{e:e}"))),
            self.final_f,
            opt(self.final_gap.map(|g| format!("{g:e}"))),
            self.wall_s,
        )
    }
}

/// Build solver parameters for one cell of a run or benchmark.
pub fn cell_params(cfg: &RunConfig, inst: &LassoInstance, seed: u64) -> SolverParams {
    SolverParams {
        seed,
        f_star: inst.f_star(),
        ..cfg.params.clone()
    }
}

pub fn cell_problem(
    inst: &LassoInstance,
    block_size: usize,
    reg: Option<Regularizer>,
) -> CliResult<blockprox::CompositeProblem> {
    let mut problem = inst.problem(block_size)?;
    if let Some(reg) = reg {
        problem = blockprox::CompositeProblem::new(problem.oracle, reg)?;
    }
    Ok(problem)
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let inst = instance::generate_lasso(args.m, args.n, args.sparsity, args.lambda, args.seed)?;
    let kkt = inst.verify()?;
    instance::save_instance(&inst, &args.out)?;
    let f_star = inst.f_star().expect("generated instances carry an optimum");
    println!(
        "wrote {} (m={}, N={}, sparsity={}, lambda={}, F*={f_star:e})",
        args.out.display(),
        args.m,
        args.n,
        args.sparsity,
        args.lambda
    );
    println!("KKT residual {kkt:e} <= {CERTIFICATE_TOL:e}");
    Ok(())
}

fn open_trace(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let inst = args.source.load()?;
    let cfg = args.tuning.resolve()?;
    let block_size = args.block_size.or(cfg.block_size).unwrap_or(1);
    let seed = args.seed.unwrap_or(cfg.params.seed);
    let problem = cell_problem(&inst, block_size, cfg.reg)?;
    let params = cell_params(&cfg, &inst, seed);
    let gap_tol = params.gap_tol;
    let solver = Solver::new(&problem, args.method, params)?;

    let mut writer = TraceWriter::new(open_trace(args.trace.as_deref())?)?;
    let mut write_err = None;
    let start = Instant::now();
    let result = solver.run(None, |r| {
        if write_err.is_none() {
            if let Err(e) = writer.write(r) {
                write_err = Some(e);
            }
        }
    });
    let wall_s = start.elapsed().as_secs_f64();
    writer.flush()?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let trace = result?;
    let summary = RunSummary::from_trace(args.method, block_size, seed, gap_tol, &trace, wall_s);
    let text = format!("{SUMMARY_COLUMNS}\n{}\n", summary.csv_row());
    if args.trace.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => bench::cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Solver(blockprox::Error::LineSearchFailure(f)) => {
                    eprintln!("error: numerical failure\n{f:#?}");
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
