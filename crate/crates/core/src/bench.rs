//! CPU-time comparison of the two routes to the last block column of the
//! deviation matrix on random models.

use std::io::Write;

use cpu_time::ThreadTime;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{QbdError, Result};
use crate::linalg::{self, Mat};
use crate::matrix_eq::{GMatrices, SolverConfig};
use crate::model::QbdBlocks;
use crate::passage;
use crate::perturbation;
use crate::stationary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BenchMethod {
    DifferenceEq,
    Perturbation,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 2] = [BenchMethod::DifferenceEq, BenchMethod::Perturbation];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchMethod::DifferenceEq => "DifferenceEq",
            BenchMethod::Perturbation => "Perturbation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub n: usize,
    #[serde(rename = "C")]
    pub capacity: usize,
    pub method: BenchMethod,
    pub mean_cpu_seconds: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Seed used for the model of size `(n, capacity)`.
pub fn case_seed(base: u64, n: usize, capacity: usize) -> u64 {
    base.wrapping_mul(1_000_003)
        .wrapping_add((n as u64) << 32 | capacity as u64)
}

/// Random model: off-diagonal block entries uniform on `[0, 1]`, diagonals
/// making every row conservative. `B0` and `C0` share `A0`'s off-diagonal part.
pub fn random_model(n: usize, capacity: usize, seed: u64) -> Result<QbdBlocks> {
    if n == 0 || capacity == 0 {
        return Err(QbdError::Parameter("random models need n >= 1 and C >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |off_diagonal_only: bool| {
        Mat::from_fn(n, n, |i, j| {
            if off_diagonal_only && i == j {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
    };
    let am1 = draw(false);
    let a1 = draw(false);
    let local = draw(true);
    let row = |m: &Mat| m * linalg::ones(n);
    let diag = |v: linalg::Vector| Mat::from_diagonal(&(-v));
    let out_local = row(&local);
    let a0 = &local + diag(&out_local + row(&am1) + row(&a1));
    let b0 = &local + diag(&out_local + row(&a1));
    let c0 = &local + diag(&out_local + row(&am1));
    QbdBlocks::new(capacity, am1, a0, a1, b0, c0)
}

/// Blocks `D_{k,C}`, `k = 0..=C`, from the matrix difference equations.
pub fn last_column_diffeq(blocks: &QbdBlocks) -> Result<Vec<Mat>> {
    let gm = GMatrices::at_zero(blocks, &SolverConfig::default())?;
    let pi = stationary::stationary_from_g(blocks, &gm.g, &gm.ghat)?;
    let cols = passage::passage_columns_for_level(blocks, blocks.capacity, &gm)?;
    passage::deviation_level_blocks(&pi, &cols)
}

/// Same blocks read off the full deviation matrix of the capacity ladder.
pub fn last_column_perturbation(blocks: &QbdBlocks) -> Result<Vec<Mat>> {
    let st = perturbation::deviation_recursive(blocks)?;
    let c = blocks.capacity;
    Ok((0..=c).map(|k| linalg::block(&st.dev, k, c, blocks.n)).collect())
}

pub fn last_column(blocks: &QbdBlocks, method: BenchMethod) -> Result<Vec<Mat>> {
    match method {
        BenchMethod::DifferenceEq => last_column_diffeq(blocks),
        BenchMethod::Perturbation => last_column_perturbation(blocks),
    }
}

/// Repetition policy: at least `reps` timed runs, continued until
/// `min_seconds` of CPU time have accumulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingOptions {
    pub reps: usize,
    pub min_seconds: f64,
}

impl TimingOptions {
    pub fn exact(reps: usize) -> Self {
        TimingOptions { reps, min_seconds: 0.0 }
    }
}

/// Mean CPU seconds of the calling thread per run, and the number of timed
/// runs, after one untimed warm-up run.
pub fn time_method(blocks: &QbdBlocks, method: BenchMethod, opts: &TimingOptions) -> Result<(f64, usize)> {
    if opts.reps == 0 {
        return Err(QbdError::Parameter("reps must be at least 1".into()));
    }
    std::hint::black_box(last_column(blocks, method)?);
    let start = ThreadTime::now();
    let mut runs = 0;
    while runs < opts.reps || start.elapsed().as_secs_f64() < opts.min_seconds {
        std::hint::black_box(last_column(std::hint::black_box(blocks), method)?);
        runs += 1;
    }
    let secs = start.elapsed().as_secs_f64() / runs as f64;
    Ok((secs.max(f64::MIN_POSITIVE), runs))
}

/// One record per `(n, C, method)`, sequentially.
pub fn run_bench(ns: &[usize], capacities: &[usize], opts: &TimingOptions, seed: u64) -> Result<Vec<BenchRecord>> {
    let mut out = Vec::with_capacity(ns.len() * capacities.len() * 2);
    for &n in ns {
        for &c in capacities {
            let case = case_seed(seed, n, c);
            let blocks = random_model(n, c, case)?;
            for method in BenchMethod::ALL {
                let (mean, reps) = time_method(&blocks, method, opts)?;
                out.push(BenchRecord {
                    n,
                    capacity: c,
                    method,
                    mean_cpu_seconds: mean,
                    reps,
                    seed: case,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "C", "method", "mean_cpu_seconds", "reps", "seed"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.capacity.to_string(),
            r.method.as_str().to_string(),
            r.mean_cpu_seconds.to_string(),
            r.reps.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> QbdError {
    QbdError::Io(std::io::Error::other(e.to_string()))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `(C, seconds)` pairs of one method and one `n`, sorted by `C`.
pub fn series(records: &[BenchRecord], n: usize, method: BenchMethod) -> Vec<(usize, f64)> {
    let mut s: Vec<(usize, f64)> = records
        .iter()
        .filter(|r| r.n == n && r.method == method)
        .map(|r| (r.capacity, r.mean_cpu_seconds))
        .collect();
    s.sort_by_key(|p| p.0);
    s
}

/// Smallest `C` from which the capacity ladder stays slower than the
/// difference equations, if the ordering flips within the range.
pub fn crossover(records: &[BenchRecord], n: usize) -> Option<usize> {
    let d = series(records, n, BenchMethod::DifferenceEq);
    let p = series(records, n, BenchMethod::Perturbation);
    let diffs: Vec<(usize, f64)> = d.iter().zip(&p).map(|(a, b)| (a.0, b.1 - a.1)).collect();
    if diffs.first().is_none_or(|f| f.1 >= 0.0) {
        return None;
    }
    let last_faster = diffs.iter().rposition(|x| x.1 < 0.0)?;
    diffs.get(last_faster + 1).map(|x| x.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_models_are_valid_and_reproducible() {
        let a = random_model(3, 4, 7).unwrap();
        assert!(a.validate().is_empty());
        assert_eq!(a, random_model(3, 4, 7).unwrap());
        assert_ne!(a, random_model(3, 4, 8).unwrap());
    }

    #[test]
    fn methods_agree_on_last_column() {
        let b = random_model(2, 6, 11).unwrap();
        let d = last_column_diffeq(&b).unwrap();
        let p = last_column_perturbation(&b).unwrap();
        for (x, y) in d.iter().zip(&p) {
            assert!((x - y).amax() < 1e-9);
        }
    }

    #[test]
    fn small_sweep() {
        let caps: Vec<usize> = (1..=10).collect();
        let recs = run_bench(&[2], &caps, &TimingOptions::exact(1), 3).unwrap();
        assert_eq!(recs.len(), 20);
        assert!(recs.iter().all(|r| r.mean_cpu_seconds > 0.0));
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,C,method,mean_cpu_seconds,reps,seed\n"));
        assert_eq!(text.lines().count(), 21);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
