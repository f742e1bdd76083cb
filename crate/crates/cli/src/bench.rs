//! Benchmark grid: every (method, block size, seed) cell runs independently
//! from `x⁰ = 0` on the same instance, in parallel.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use blockprox::trace::TraceWriter;
use blockprox::{CompositeProblem, Method, Solver, SolverParams};
use clap::Args;
use rayon::prelude::*;

use crate::{
    cell_params, cell_problem, CliError, CliResult, RunSummary, SourceArgs, TuningArgs,
    SUMMARY_COLUMNS,
};

/// Epoch budget per cell when neither flags nor config give one.
const DEFAULT_EPOCH_BUDGET: f64 = 1000.0;

pub const AGGREGATE_COLUMNS: &str =
    "method,block_size,runs,hits,misses,failed,mean_epochs,sd_epochs,median_epochs,mean_iters";

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long, value_delimiter = ',', default_value = "rnbpg,rbcd_ls,rbcd")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "20")]
    block_sizes: Vec<usize>,
    /// Seed range `a..b` (end exclusive) or comma separated list.
    #[arg(long, default_value = "0..10", value_parser = parse_seeds)]
    seeds: Seeds,
    /// Aggregate CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-run summary CSV.
    #[arg(long)]
    runs: Option<PathBuf>,
    /// Directory for per-cell trace CSVs.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Seeds(pub Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |e: std::num::ParseIntError| format!("bad seed list {s:?}: {e}");
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (
            a.trim().parse().map_err(bad)?,
            b.trim().parse().map_err(bad)?,
        );
        (a..b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(bad))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("seed list {s:?} is empty"));
    }
    Ok(Seeds(seeds))
}

/// Per-(method, block size) statistics over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub runs: usize,
    pub hits: usize,
    pub misses: usize,
    pub failed: usize,
    pub mean_epochs: Option<f64>,
    pub sd_epochs: Option<f64>,
    pub median_epochs: Option<f64>,
    pub mean_iters: Option<f64>,
}

impl CellStats {
    /// Statistics of epochs-to-target over the runs that hit the target; the
    /// standard deviation is the sample one, 0 for a single hit.
    pub fn from_runs(runs: &[Result<RunSummary, String>]) -> Self {
        let ok: Vec<&RunSummary> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
        let mut epochs: Vec<f64> = ok.iter().filter_map(|s| s.epochs_to_target).collect();
        let iters: Vec<f64> = ok
            .iter()
            .filter_map(|s| s.iters_to_target.map(|k| k as f64))
            .collect();
        let n = epochs.len();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let mean_epochs = mean(&epochs);
        let sd_epochs = mean_epochs.map(|mu| {
            if n < 2 {
                0.0
            } else {
                (epochs.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            }
        });
        epochs.sort_by(f64::total_cmp);
        let median_epochs = (n > 0).then(|| {
            if n % 2 == 1 {
                epochs[n / 2]
            } else {
                0.5 * (epochs[n / 2 - 1] + epochs[n / 2])
            }
        });
        Self {
            runs: runs.len(),
            hits: n,
            misses: ok.len() - n,
            failed: runs.len() - ok.len(),
            mean_epochs,
            sd_epochs,
            median_epochs,
            mean_iters: mean(&iters),
        }
    }

    pub fn csv_row(&self, method: Method, block_size: usize) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{method},{block_size},{},{},{},{},{},{},{},{}",
            self.runs,
            self.hits,
            self.misses,
            self.failed,
            f(self.mean_epochs),
            f(self.sd_epochs),
            f(self.median_epochs),
            f(self.mean_iters),
        )
    }
}

fn run_cell(
    problem: &CompositeProblem,
    method: Method,
    block_size: usize,
    params: SolverParams,
    trace_path: Option<PathBuf>,
) -> CliResult<RunSummary> {
    let seed = params.seed;
    let gap_tol = params.gap_tol;
    let solver = Solver::new(problem, method, params)?;
    let start = Instant::now();
    let trace = solver.run(None, |_| {})?;
    let wall_s = start.elapsed().as_secs_f64();
    if let Some(path) = trace_path {
        let mut w = TraceWriter::new(BufWriter::new(File::create(path)?))?;
        for r in &trace.records {
            w.write(r)?;
        }
        w.flush()?;
    }
    Ok(RunSummary::from_trace(
        method, block_size, seed, gap_tol, &trace, wall_s,
    ))
}

pub fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let inst = args.source.load()?;
    let mut cfg = args.tuning.resolve()?;
    // budgets are in epochs; the iteration default would cut small blocks short
    if cfg.params.max_epochs.is_none() {
        cfg.params.max_epochs = Some(DEFAULT_EPOCH_BUDGET);
    }
    if args.tuning_max_iters_is_default(&cfg.params) {
        cfg.params.max_iters = usize::MAX;
    }
    if let Some(dir) = &args.trace_dir {
        fs::create_dir_all(dir)?;
    }

    let problems: Vec<(usize, Result<CompositeProblem, String>)> = args
        .block_sizes
        .iter()
        .map(|&bs| {
            (
                bs,
                cell_problem(&inst, bs, cfg.reg).map_err(|e| e.to_string()),
            )
        })
        .collect();
    let cells: Vec<(Method, usize, u64)> = args
        .methods
        .iter()
        .flat_map(|&m| {
            let seeds = &args.seeds.0;
            args.block_sizes
                .iter()
                .flat_map(move |&bs| seeds.iter().map(move |&s| (m, bs, s)))
        })
        .collect();

    let work = || -> Vec<Result<RunSummary, String>> {
        cells
            .par_iter()
            .map(|&(method, bs, seed)| {
                let (_, problem) = problems
                    .iter()
                    .find(|(b, _)| *b == bs)
                    .expect("block size listed");
                let problem = problem.as_ref().map_err(Clone::clone)?;
                let trace_path = args
                    .trace_dir
                    .as_ref()
                    .map(|d| d.join(format!("{method}_b{bs}_s{seed}.csv")));
                run_cell(
                    problem,
                    method,
                    bs,
                    cell_params(&cfg, &inst, seed),
                    trace_path,
                )
                .map_err(|e| format!("{method} block_size={bs} seed={seed}: {e}"))
            })
            .collect()
    };
    let results = match args.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(work),
        None => work(),
    };

    for err in results.iter().filter_map(|r| r.as_ref().err()) {
        eprintln!("cell failed: {err}");
    }
    if let Some(path) = &args.runs {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{SUMMARY_COLUMNS}")?;
        for s in results.iter().filter_map(|r| r.as_ref().ok()) {
            writeln!(w, "{}", s.csv_row())?;
        }
        w.flush()?;
    }

    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    writeln!(out, "{AGGREGATE_COLUMNS}")?;
    for &method in &args.methods {
        for &bs in &args.block_sizes {
            let group: Vec<Result<RunSummary, String>> = cells
                .iter()
                .zip(&results)
                .filter(|((m, b, _), _)| *m == method && *b == bs)
                .map(|(_, r)| r.clone())
                .collect();
            writeln!(out, "{}", CellStats::from_runs(&group).csv_row(method, bs))?;
        }
    }
    out.flush()?;
    Ok(())
}

impl BenchArgs {
    fn tuning_max_iters_is_default(&self, params: &SolverParams) -> bool {
        self.tuning.max_iters.is_none() && params.max_iters == SolverParams::default().max_iters
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(epochs: Option<f64>) -> RunSummary {
        RunSummary {
            method: Method::RNBPG,
            block_size: 1,
            seed: 0,
            iterations: 10,
            epochs: 1.0,
            iters_to_target: epochs.map(|e| (e * 10.0) as usize),
            epochs_to_target: epochs,
            final_f: 0.0,
            final_gap: Some(0.0),
            wall_s: 0.0,
        }
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap().0, vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9").unwrap().0, vec![4, 9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn stats_use_sample_deviation() {
        let runs = vec![
            Ok(summary(Some(2.0))),
            Ok(summary(Some(4.0))),
            Ok(summary(Some(9.0))),
        ];
        let s = CellStats::from_runs(&runs);
        assert_eq!(s.mean_epochs, Some(5.0));
        // deviations −3, −1, 4 → 26 / 2
        assert!((s.sd_epochs.unwrap() - 13f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.median_epochs, Some(4.0));
    }

    #[test]
    fn single_seed_has_zero_deviation() {
        let s = CellStats::from_runs(&[Ok(summary(Some(3.0)))]);
        assert_eq!(s.sd_epochs, Some(0.0));
    }

    #[test]
    fn misses_and_failures_are_counted() {
        let runs = vec![
            Ok(summary(Some(1.0))),
            Ok(summary(None)),
            Err("boom".to_string()),
        ];
        let s = CellStats::from_runs(&runs);
        assert_eq!((s.runs, s.hits, s.misses, s.failed), (3, 1, 1, 1));
        assert_eq!(s.mean_epochs, Some(1.0));
    }

    #[test]
    fn no_hits_leave_blank_fields() {
        let s = CellStats::from_runs(&[Ok(summary(None))]);
        assert_eq!(s.csv_row(Method::RbcdLs, 5), "rbcd_ls,5,1,0,1,0,,,,");
    }
}
