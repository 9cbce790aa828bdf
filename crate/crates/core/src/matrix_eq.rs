//! Minimal nonnegative solutions of the QBD quadratic matrix equations
//!
//! ```text
//! G(s):  Am1 + (A0 - sI) X + A1  X^2 = 0
//! Gh(s): A1  + (A0 - sI) X + Am1 X^2 = 0
//! ```
//!
//! and the derived kernels `H0(s)`, `R`, `R̂`. Everything is generic over the
//! scalar field so the same code serves real `s` and complex `s` on a
//! Laplace-inversion contour.

use nalgebra::DMatrix;

use crate::error::{QbdError, Result};
use crate::linalg::{self, Mat, Scalar};
use crate::model::{DriftTag, QbdBlocks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    /// `X <- (sI - A0)^{-1} (Am1 + A1 X^2)` from `X = 0`. Linear convergence.
    FunctionalIteration,
    /// Latouche–Ramaswami logarithmic reduction. Quadratic convergence.
    #[default]
    LogarithmicReduction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Bound on the entrywise max-norm residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub algorithm: Algorithm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-12,
            max_iterations: 100_000,
            algorithm: Algorithm::LogarithmicReduction,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(QbdError::Parameter("solver tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(QbdError::Parameter("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticSolution<T: Scalar> {
    pub x: DMatrix<T>,
    pub residual: f64,
    pub iterations: usize,
}

/// `G(s)`, `Ĝ(s)` and `H0(s)` at one transform argument.
#[derive(Debug, Clone)]
pub struct GMatrices<T: Scalar> {
    pub s: T,
    pub g: DMatrix<T>,
    pub ghat: DMatrix<T>,
    pub h0: DMatrix<T>,
    pub residual_g: f64,
    pub residual_ghat: f64,
}

impl<T: Scalar> GMatrices<T> {
    pub fn compute(blocks: &QbdBlocks, s: T, config: &SolverConfig) -> Result<Self> {
        let g = solve_g(blocks, s, config)?;
        let ghat = solve_ghat(blocks, s, config)?;
        let h0 = h0(blocks, s, &g.x, &ghat.x)?;
        Ok(GMatrices {
            s,
            g: g.x,
            ghat: ghat.x,
            h0,
            residual_g: g.residual,
            residual_ghat: ghat.residual,
        })
    }
}

impl GMatrices<f64> {
    /// The `s = 0` matrices used by the asymptotic formulas.
    pub fn at_zero(blocks: &QbdBlocks, config: &SolverConfig) -> Result<Self> {
        Self::compute(blocks, 0.0, config)
    }
}

fn check_s<T: Scalar>(s: T) -> Result<()> {
    if !(s.real() >= 0.0) || !s.modulus().is_finite() {
        return Err(QbdError::Parameter(format!(
            "transform argument must have nonnegative real part (got real part {})",
            s.real()
        )));
    }
    Ok(())
}

fn shifted<T: Scalar>(m: &Mat, s: T) -> DMatrix<T> {
    let mut out = linalg::lift::<T>(m);
    for i in 0..m.nrows() {
        out[(i, i)] -= s;
    }
    out
}

/// Max-norm residual of `down + local X + up X^2`.
pub fn quadratic_residual<T: Scalar>(down: &DMatrix<T>, local: &DMatrix<T>, up: &DMatrix<T>, x: &DMatrix<T>) -> f64 {
    linalg::max_abs(&(down + local * x + up * (x * x)))
}

/// Minimal nonnegative solution of `Am1 + (A0 - sI) X + A1 X^2 = 0`.
pub fn solve_g<T: Scalar>(blocks: &QbdBlocks, s: T, config: &SolverConfig) -> Result<QuadraticSolution<T>> {
    check_s(s)?;
    config.check()?;
    let down = linalg::lift::<T>(&blocks.a_minus1);
    let up = linalg::lift::<T>(&blocks.a1);
    let local = shifted(&blocks.a0, s);
    solve_quadratic(&down, &local, &up, config, "G")
}

/// Minimal nonnegative solution of `A1 + (A0 - sI) X + Am1 X^2 = 0`.
pub fn solve_ghat<T: Scalar>(blocks: &QbdBlocks, s: T, config: &SolverConfig) -> Result<QuadraticSolution<T>> {
    check_s(s)?;
    config.check()?;
    let down = linalg::lift::<T>(&blocks.a_minus1);
    let up = linalg::lift::<T>(&blocks.a1);
    let local = shifted(&blocks.a0, s);
    solve_quadratic(&up, &local, &down, config, "Ghat")
}

fn solve_quadratic<T: Scalar>(
    down: &DMatrix<T>,
    local: &DMatrix<T>,
    up: &DMatrix<T>,
    config: &SolverConfig,
    what: &'static str,
) -> Result<QuadraticSolution<T>> {
    match config.algorithm {
        Algorithm::LogarithmicReduction => logarithmic_reduction(down, local, up, config, what),
        Algorithm::FunctionalIteration => functional_iteration(down, local, up, config, what),
    }
}

fn logarithmic_reduction<T: Scalar>(
    down: &DMatrix<T>,
    local: &DMatrix<T>,
    up: &DMatrix<T>,
    config: &SolverConfig,
    what: &'static str,
) -> Result<QuadraticSolution<T>> {
    let n = local.nrows();
    let eye = DMatrix::<T>::identity(n, n);
    let neg_local = -local;
    // Embedded jump chain: X = L + H X^2 with L = (-local)^{-1} down, H = (-local)^{-1} up.
    let mut h = linalg::solve(&neg_local, up, "logarithmic reduction setup")?;
    let mut l = linalg::solve(&neg_local, down, "logarithmic reduction setup")?;
    let mut x = l.clone();
    let mut t = h.clone();
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let u = &h * &l + &l * &h;
        let lhs = &eye - u;
        let hh = &h * &h;
        let ll = &l * &l;
        h = linalg::solve(&lhs, &hh, "logarithmic reduction step")?;
        l = linalg::solve(&lhs, &ll, "logarithmic reduction step")?;
        let inc = &t * &l;
        x += &inc;
        t = &t * &h;
        let scale = linalg::max_abs(&x).max(1.0);
        if linalg::max_abs(&inc) <= f64::EPSILON * scale || linalg::max_abs(&t) <= f64::EPSILON {
            break;
        }
    }
    let residual = quadratic_residual(down, local, up, &x);
    if residual <= config.tolerance && x.iter().all(|v| v.modulus().is_finite()) {
        Ok(QuadraticSolution {
            x,
            residual,
            iterations,
        })
    } else {
        Err(QbdError::IterationLimit {
            what,
            iterations,
            residual,
        })
    }
}

fn functional_iteration<T: Scalar>(
    down: &DMatrix<T>,
    local: &DMatrix<T>,
    up: &DMatrix<T>,
    config: &SolverConfig,
    what: &'static str,
) -> Result<QuadraticSolution<T>> {
    let n = local.nrows();
    let lu = (-local).lu();
    if !lu.is_invertible() {
        return Err(QbdError::Singular("functional iteration setup".into()));
    }
    let mut x = DMatrix::<T>::zeros(n, n);
    let mut residual = f64::INFINITY;
    for it in 1..=config.max_iterations {
        let rhs = down + up * (&x * &x);
        let next = lu
            .solve(&rhs)
            .ok_or_else(|| QbdError::Singular("functional iteration".into()))?;
        let inc = linalg::max_abs(&(&next - &x));
        x = next;
        residual = quadratic_residual(down, local, up, &x);
        if residual <= config.tolerance && inc <= 1e-2 * config.tolerance {
            return Ok(QuadraticSolution {
                x,
                residual,
                iterations: it,
            });
        }
    }
    if residual <= config.tolerance {
        Ok(QuadraticSolution {
            x,
            residual,
            iterations: config.max_iterations,
        })
    } else {
        Err(QbdError::IterationLimit {
            what,
            iterations: config.max_iterations,
            residual,
        })
    }
}

fn is_zero<T: Scalar>(s: T) -> bool {
    s.modulus() == 0.0
}

fn guard_null_recurrent(blocks: &QbdBlocks, what: &str) -> Result<()> {
    let drift = blocks.classify_drift()?;
    if drift.tag == DriftTag::NullRecurrent {
        return Err(QbdError::AsymptoticsUndefined(format!(
            "{what} at s = 0 needs a non null-recurrent model (mean drift {:e})",
            drift.mean_drift
        )));
    }
    Ok(())
}

/// `H0(s) = -(A0 - sI + A1 G(s) + Am1 Ĝ(s))^{-1}`.
pub fn h0<T: Scalar>(blocks: &QbdBlocks, s: T, g: &DMatrix<T>, ghat: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_s(s)?;
    if is_zero(s) {
        guard_null_recurrent(blocks, "H0")?;
    }
    let inner = shifted(&blocks.a0, s) + linalg::lift::<T>(&blocks.a1) * g + linalg::lift::<T>(&blocks.a_minus1) * ghat;
    linalg::inverse(&(-inner), "H0").map_err(|_| {
        if is_zero(s) {
            QbdError::AsymptoticsUndefined("A0 + A1 G + Am1 Ghat is singular".into())
        } else {
            QbdError::Singular("H0(s)".into())
        }
    })
}

/// `R = A1 (-(A0 + A1 G))^{-1}` and `R̂ = Am1 (-(A0 + Am1 Ĝ))^{-1}`.
pub fn rate_matrices(blocks: &QbdBlocks, g: &Mat, ghat: &Mat) -> Result<(Mat, Mat)> {
    guard_null_recurrent(blocks, "R and Rhat")?;
    let up_inner = -(&blocks.a0 + &blocks.a1 * g);
    let down_inner = -(&blocks.a0 + &blocks.a_minus1 * ghat);
    let undefined = |_| QbdError::AsymptoticsUndefined("rate-matrix inner inverse is singular".into());
    // R = A1 X^{-1}  <=>  X^T R^T = A1^T
    let r = linalg::solve(&up_inner.transpose(), &blocks.a1.transpose(), "R").map_err(undefined)?;
    let rhat = linalg::solve(&down_inner.transpose(), &blocks.a_minus1.transpose(), "Rhat").map_err(undefined)?;
    Ok((r.transpose(), rhat.transpose()))
}
