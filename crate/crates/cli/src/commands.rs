//! Subcommand definitions and their handlers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use wlra_core::opt_bounds::bracket;
use wlra_core::{
    build_instance, generate, solve, BoundParams, GenSpec, SolveOptions, StructuredInstance,
    WeightStyle,
};

use crate::bench::{run_bench, write_csv, BenchConfig, BenchRecord};
use crate::error::{CliError, Result};
use crate::format::{factors_to_bytes, InstanceFile, Sidecar};

#[derive(Debug, Parser)]
#[command(name = "wlra", version, about = "Weighted low-rank approximation on structured weights")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted structured instance.
    Gen(GenArgs),
    /// Factorize an instance file.
    Solve(SolveArgs),
    /// Time sweeps across instance sizes.
    Bench(BenchArgs),
    /// Recompute pattern structure and the OPT bracket of an instance file.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub k_true: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value = "block_random")]
    pub style: WeightStyle,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Omit the stored group ids.
    #[arg(long)]
    pub no_sidecar: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, default_value_t = 100)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sketchless: bool,
    /// Per-half-sweep CSV report.
    #[arg(long)]
    pub out_report: Option<PathBuf>,
    /// Defaults to `<in>.factors`.
    #[arg(long)]
    pub out_factors: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub rank_tol: f64,
    #[arg(long, default_value_t = wlra_core::sketch::DEFAULT_SKETCH_CONSTANT)]
    pub sketch_constant: f64,
    /// Reuse one sketch per side for every sweep.
    #[arg(long)]
    pub fixed_sketch: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Pattern detection tolerance.
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
    /// Fail unless W has at most this many distinct rows and columns.
    #[arg(long)]
    pub assume_r: Option<usize>,
    #[arg(long)]
    pub assume_p: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated ascending sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub r: usize,
    #[arg(long, default_value_t = 4)]
    pub p: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, default_value_t = 3)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value = "block_random")]
    pub style: WeightStyle,
    #[arg(long)]
    pub sketchless: bool,
    /// Solve with every row and column in its own group.
    #[arg(long)]
    pub dense_baseline: bool,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Rank used for the lower bound and iteration budget.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_exp: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_poly: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
}

/// Stdout and stderr sinks for one invocation.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {
        writeln!($w, $($arg)*).map_err(|e| CliError::io("<stdout>", e))
    };
}

pub fn dispatch(cli: Cli, io: &mut Io<'_>) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(&args, io),
        Command::Solve(args) => with_threads(args.threads, io, |io| cmd_solve(&args, io)),
        Command::Bench(args) => with_threads(args.threads, io, |io| cmd_bench(&args, io)),
        Command::Verify(args) => cmd_verify(&args, io),
    }
}

/// Runs `f` on a pool of `threads` workers (the global pool for 0), with
/// output buffered and forwarded once `f` returns.
fn with_threads<F>(threads: usize, io: &mut Io<'_>, f: F) -> Result<()>
where
    F: FnOnce(&mut Io<'_>) -> Result<()> + Send,
{
    if threads == 0 {
        return f(io);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let result = pool.install(|| {
        f(&mut Io {
            out: &mut out,
            err: &mut err,
        })
    });
    io.out.write_all(&out).map_err(|e| CliError::io("<stdout>", e))?;
    io.err.write_all(&err).map_err(|e| CliError::io("<stderr>", e))?;
    result
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_instance(path: &Path) -> Result<InstanceFile> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    InstanceFile::from_bytes(&bytes)
}

fn structure(file: &InstanceFile, tolerance: f64) -> Result<StructuredInstance> {
    Ok(build_instance(&file.a, &file.weights(), tolerance)?)
}

pub fn cmd_gen(args: &GenArgs, io: &mut Io<'_>) -> Result<()> {
    let spec = GenSpec {
        noise_sigma: args.noise,
        weight_style: args.style,
        ..GenSpec::new(args.n, args.r, args.p, args.k_true, args.seed)
    };
    let planted = generate(&spec)?;
    let file = InstanceFile {
        a: planted.dense_a(),
        w: Some(planted.dense_w()),
        sidecar: (!args.no_sidecar).then(|| Sidecar::from_instance(&planted.instance)),
    };
    write_file(&args.out, &file.to_bytes())?;
    let inst = &planted.instance;
    say!(io.out, "n={}", inst.n())?;
    say!(io.out, "r={}", inst.r())?;
    say!(io.out, "p={}", inst.p())?;
    say!(io.out, "out={}", args.out.display())
}

pub fn cmd_solve(args: &SolveArgs, io: &mut Io<'_>) -> Result<()> {
    let file = read_instance(&args.input)?;
    if args.k > file.n() {
        return Err(CliError::Usage(format!("k = {} exceeds n = {}", args.k, file.n())));
    }
    let inst = structure(&file, args.tolerance)?;
    if args.assume_r.is_some() || args.assume_p.is_some() {
        inst.check_assumption(
            args.assume_r.unwrap_or(usize::MAX),
            args.assume_p.unwrap_or(usize::MAX),
        )?;
    }
    let opts = SolveOptions {
        eps: args.eps,
        max_sweeps: args.sweeps,
        rel_tol: args.rel_tol,
        seed: args.seed,
        restarts: args.restarts,
        rank_tolerance: args.rank_tol,
        sketchless: args.sketchless,
        sketch_constant: args.sketch_constant,
        fixed_sketch: args.fixed_sketch,
        ..SolveOptions::new(args.k)
    };
    let (factors, report) = solve(&inst, &opts)?;

    let factor_path = args.out_factors.clone().unwrap_or_else(|| {
        let mut p = args.input.clone().into_os_string();
        p.push(".factors");
        PathBuf::from(p)
    });
    write_file(&factor_path, &factors_to_bytes(&factors.u, &factors.v))?;
    if let Some(path) = &args.out_report {
        let records = BenchRecord::from_report(inst.n(), inst.r(), inst.p(), &opts, &report);
        let mut buf = Vec::new();
        write_csv(&mut buf, &records)?;
        write_file(path, &buf)?;
    }

    let b = &report.bracket;
    say!(io.out, "lambda={:?}", report.final_cost)?;
    say!(io.out, "upper_bound={:?}", b.upper)?;
    say!(io.out, "lower_bound_log2={:?}", b.lower.log2)?;
    say!(io.out, "lower_bound_magnitude_log2={:?}", b.lower.magnitude_log2)?;
    say!(io.out, "iteration_budget={}", b.iteration_budget)?;
    say!(io.out, "bracket=[2^{:?}, {:?}]", b.lower.log2, b.upper)?;
    say!(io.out, "sweeps={}", report.sweeps())?;
    say!(io.out, "regressions={}", report.regressions_solved)?;
    say!(io.out, "factors={}", factor_path.display())
}

pub fn cmd_bench(args: &BenchArgs, io: &mut Io<'_>) -> Result<()> {
    let cfg = BenchConfig {
        eps: args.eps,
        sweeps: args.sweeps,
        trials: args.trials,
        seed: args.seed,
        noise: args.noise,
        style: args.style,
        sketchless: args.sketchless,
        dense_baseline: args.dense_baseline,
        ..BenchConfig::new(args.sizes.clone(), args.r, args.p, args.k)
    };
    let summary = run_bench(&cfg)?;
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        write_csv(&mut buf, &summary.records)?;
        write_file(path, &buf)?;
    }
    for (n, t) in &summary.medians {
        say!(io.out, "n={n} median_sweep_s={t:?}")?;
    }
    match summary.slope {
        Some(s) => say!(io.out, "slope={s:.4}"),
        None => say!(io.out, "slope=n/a"),
    }
}

/// Group ids relabelled in order of first appearance.
fn canonical(ids: &[u32]) -> Vec<u32> {
    let mut seen = std::collections::HashMap::new();
    ids.iter()
        .map(|id| {
            let next = seen.len() as u32;
            *seen.entry(*id).or_insert(next)
        })
        .collect()
}

fn sidecar_matches(stored: &Sidecar, computed: &Sidecar) -> bool {
    [
        (&stored.w_rows, &computed.w_rows),
        (&stored.w_cols, &computed.w_cols),
        (&stored.wa_rows, &computed.wa_rows),
        (&stored.wa_cols, &computed.wa_cols),
    ]
    .into_iter()
    .all(|(s, c)| canonical(s) == canonical(c))
}

pub fn cmd_verify(args: &VerifyArgs, io: &mut Io<'_>) -> Result<()> {
    let file = read_instance(&args.input)?;
    let inst = structure(&file, args.tolerance)?;
    let params = BoundParams {
        c_exp: args.c_exp,
        c_poly: args.c_poly,
        ..BoundParams::for_instance(inst.n(), inst.r(), args.k, args.eps)
    };
    let br = bracket(&inst, &params)?;
    say!(io.out, "n={}", inst.n())?;
    say!(io.out, "r={}", inst.r())?;
    say!(io.out, "p={}", inst.p())?;
    say!(io.out, "w_row_groups={}", inst.w_rows().num_groups())?;
    say!(io.out, "w_col_groups={}", inst.w_cols().num_groups())?;
    say!(io.out, "wa_row_groups={}", inst.wa_rows().num_groups())?;
    say!(io.out, "wa_col_groups={}", inst.wa_cols().num_groups())?;
    say!(io.out, "upper_bound={:?}", br.upper)?;
    say!(io.out, "lower_bound_log2={:?}", br.lower.log2)?;
    say!(io.out, "iteration_budget={}", br.iteration_budget)?;
    match &file.sidecar {
        None => say!(io.out, "sidecar=absent"),
        Some(stored) if sidecar_matches(stored, &Sidecar::from_instance(&inst)) => {
            say!(io.out, "sidecar=match")
        }
        Some(_) => {
            say!(io.out, "sidecar=mismatch")?;
            Err(CliError::Mismatch(
                "stored group ids disagree with the recomputed patterns".into(),
            ))
        }
    }
}
