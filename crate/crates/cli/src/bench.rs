//! Per-sweep timing across instance sizes and the log-log slope fit.

use std::io::Write;

use serde::Serialize;
use wlra_core::grouped_als::derive_seed;
use wlra_core::{generate, solve, GenSpec, SolveOptions, SolveReport, WeightStyle};

use crate::error::{CliError, Result};

/// One half-sweep; the CSV header is the field list in order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub k: usize,
    pub eps: f64,
    pub sweep: usize,
    pub wall_s: f64,
    pub cost: f64,
    pub regressions: usize,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "n,r,p,k,eps,sweep,wall_s,cost,regressions,seed";

impl BenchRecord {
    /// One record per half-sweep of a solve report.
    pub fn from_report(n: usize, r: usize, p: usize, opts: &SolveOptions, report: &SolveReport) -> Vec<Self> {
        report
            .cost_per_sweep
            .iter()
            .enumerate()
            .map(|(h, &cost)| BenchRecord {
                n,
                r,
                p,
                k: opts.k,
                eps: opts.eps,
                sweep: h,
                wall_s: report.sweep_wall_times[h].as_secs_f64(),
                cost,
                regressions: report.regressions_per_half_sweep[h],
                seed: report.run_seed,
            })
            .collect()
    }
}

pub fn write_csv(out: impl Write, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))
            .map_err(|e| CliError::io("<csv>", e.into()))?;
    }
    for rec in records {
        w.serialize(rec).map_err(|e| CliError::io("<csv>", e.into()))?;
    }
    w.flush().map_err(|e| CliError::io("<csv>", e))
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub r: usize,
    pub p: usize,
    pub k: usize,
    pub eps: f64,
    pub sweeps: usize,
    pub trials: usize,
    pub seed: u64,
    pub noise: f64,
    pub style: WeightStyle,
    pub sketchless: bool,
    /// Solve every instance with all rows and columns ungrouped.
    pub dense_baseline: bool,
}

impl BenchConfig {
    pub fn new(sizes: Vec<usize>, r: usize, p: usize, k: usize) -> Self {
        Self {
            sizes,
            r,
            p,
            k,
            eps: 0.25,
            sweeps: 3,
            trials: 3,
            seed: 0,
            noise: 0.01,
            style: WeightStyle::BlockRandom,
            sketchless: false,
            dense_baseline: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSummary {
    pub records: Vec<BenchRecord>,
    /// `(n, median seconds per full sweep)` for each size.
    pub medians: Vec<(usize, f64)>,
    pub slope: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Least-squares slope of `log2 t` against `log2 n`. With three or more
/// sizes the smallest is dropped as warm-up; fewer than two usable points
/// give `None`.
pub fn fit_loglog_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts = if points.len() >= 3 { &points[1..] } else { points };
    if pts.len() < 2 || pts.iter().any(|&(n, t)| n == 0 || t <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|&(n, _)| (n as f64).log2()).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, t)| t.log2()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchSummary> {
    if cfg.sizes.is_empty() {
        return Err(CliError::Usage("no sizes given".into()));
    }
    if cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("sizes must be strictly ascending".into()));
    }
    if cfg.trials == 0 || cfg.sweeps == 0 {
        return Err(CliError::Usage("trials and sweeps must be positive".into()));
    }
    let mut records = Vec::new();
    let mut medians = Vec::new();
    for &n in &cfg.sizes {
        let mut sweep_times = Vec::new();
        for trial in 0..cfg.trials {
            let seed = derive_seed(cfg.seed, trial as u64);
            let spec = GenSpec {
                noise_sigma: cfg.noise,
                weight_style: cfg.style,
                ..GenSpec::new(n, cfg.r, cfg.p, cfg.k, seed)
            };
            let planted = generate(&spec)?;
            let inst = if cfg.dense_baseline {
                planted.instance.ungrouped()
            } else {
                planted.instance
            };
            let opts = SolveOptions {
                eps: cfg.eps,
                max_sweeps: cfg.sweeps,
                rel_tol: 0.0,
                seed,
                sketchless: cfg.sketchless,
                ..SolveOptions::new(cfg.k)
            };
            let (_, report) = solve(&inst, &opts)?;
            for pair in report.sweep_wall_times.chunks(2) {
                sweep_times.push(pair.iter().map(|d| d.as_secs_f64()).sum());
            }
            records.extend(BenchRecord::from_report(n, cfg.r, cfg.p, &opts, &report));
        }
        medians.push((n, median(sweep_times)));
    }
    let slope = fit_loglog_slope(&medians);
    Ok(BenchSummary {
        records,
        medians,
        slope,
    })
}
