//! Laplace-domain expected reward and transient deviation matrix, block by
//! block.
//!
//! For `Re(s) > 0` the level-`k` block of `R̃(s) = (sI - Q)^{-1} g / s` is
//!
//! ```text
//! R̃_k(s) = G(s)^k v + Ĝ(s)^(C-k) w + ν_k(s, C)
//! ν_k(s, C) = Σ_{j=0}^{k-1} G(s)^j H0(s) g_{k-j}/s + Σ_{j=1}^{C-k} Ĝ(s)^j H0(s) g_{k+j}/s
//! ```
//!
//! with `(v, w)` fixed by the two boundary levels through the `2n x 2n`
//! matrix `Z(s, C)`. Blocks of `D̃(s)` follow by taking unit rewards at a
//! single level. All of this runs over `f64` or `Complex64`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QbdError, Result};
use crate::laplace::{self, InversionConfig};
use crate::linalg::{self, Mat, Scalar, Vector};
use crate::matrix_eq::{GMatrices, SolverConfig};
use crate::model::{QbdBlocks, RewardSpec};
use crate::stationary::StationaryDistribution;

/// `G(s)`, `Ĝ(s)`, `H0(s)` at one `s` plus the power sequences
/// `G(s)^0..=G(s)^C` and `Ĝ(s)^0..=Ĝ(s)^C`.
#[derive(Debug, Clone)]
pub struct TransformContext<T: Scalar> {
    pub blocks: QbdBlocks,
    pub gmat: GMatrices<T>,
    pub powers_g: Vec<DMatrix<T>>,
    pub powers_ghat: Vec<DMatrix<T>>,
    am1: DMatrix<T>,
    a1: DMatrix<T>,
    b0_s: DMatrix<T>,
    c0_s: DMatrix<T>,
}

fn check_positive<T: Scalar>(s: T) -> Result<()> {
    if !(s.real() > 0.0) {
        return Err(QbdError::Parameter(format!(
            "transform argument needs a positive real part (got {})",
            s.real()
        )));
    }
    Ok(())
}

fn shift<T: Scalar>(m: &Mat, s: T) -> DMatrix<T> {
    let mut out = linalg::lift::<T>(m);
    for i in 0..m.nrows() {
        out[(i, i)] -= s;
    }
    out
}

impl<T: Scalar> TransformContext<T> {
    pub fn new(blocks: &QbdBlocks, s: T, config: &SolverConfig) -> Result<Self> {
        check_positive(s)?;
        let gmat = GMatrices::compute(blocks, s, config)?;
        Self::from_gmatrices(blocks, gmat)
    }

    pub fn from_gmatrices(blocks: &QbdBlocks, gmat: GMatrices<T>) -> Result<Self> {
        check_positive(gmat.s)?;
        let c = blocks.capacity;
        let s = gmat.s;
        Ok(TransformContext {
            powers_g: linalg::power_sequence(&gmat.g, c),
            powers_ghat: linalg::power_sequence(&gmat.ghat, c),
            am1: linalg::lift(&blocks.a_minus1),
            a1: linalg::lift(&blocks.a1),
            b0_s: shift(&blocks.b0, s),
            c0_s: shift(&blocks.c0, s),
            blocks: blocks.clone(),
            gmat,
        })
    }

    pub fn s(&self) -> T {
        self.gmat.s
    }

    pub fn capacity(&self) -> usize {
        self.blocks.capacity
    }

    fn n(&self) -> usize {
        self.blocks.n
    }

    fn scaled_rewards(&self, rewards: &RewardSpec) -> Result<Vec<DMatrix<T>>> {
        rewards.check(&self.blocks)?;
        let inv_s = T::one() / self.s();
        Ok(rewards
            .g
            .iter()
            .map(|g| DMatrix::from_iterator(g.len(), 1, g.iter().map(|&x| T::from_real(x) * inv_s)))
            .collect())
    }

    /// `ν_k(s, C)` for every level at once, for right-hand sides `g_l(s)`
    /// that are already divided by `s` (any number of columns).
    pub fn nu_all(&self, g_s: &[DMatrix<T>]) -> Vec<DMatrix<T>> {
        let c = self.capacity();
        let h0 = &self.gmat.h0;
        let y: Vec<DMatrix<T>> = g_s.iter().map(|g| h0 * g).collect();
        let cols = g_s[0].ncols();
        let zero = DMatrix::<T>::zeros(self.n(), cols);
        // forward part a_k = Σ_{j<k} G^j y_{k-j}:  a_{k+1} = y_{k+1} + G a_k
        let mut fwd = vec![zero.clone(); c + 1];
        for k in 1..=c {
            fwd[k] = &y[k] + &self.gmat.g * &fwd[k - 1];
        }
        // backward part b_k = Σ_{j=1}^{C-k} Ĝ^j y_{k+j}:  b_k = Ĝ (y_{k+1} + b_{k+1})
        let mut bwd = vec![zero; c + 1];
        for k in (0..c).rev() {
            bwd[k] = &self.gmat.ghat * (&y[k + 1] + &bwd[k + 1]);
        }
        fwd.into_iter().zip(bwd).map(|(a, b)| a + b).collect()
    }

    /// Boundary matrix of the level-0 / level-C conditions.
    pub fn z_matrix(&self) -> DMatrix<T> {
        let c = self.capacity();
        let g = &self.gmat.g;
        let gh = &self.gmat.ghat;
        linalg::from_blocks(&[
            vec![
                &self.b0_s + &self.a1 * g,
                (&self.b0_s * gh + &self.a1) * &self.powers_ghat[c - 1],
            ],
            vec![
                (&self.am1 + &self.c0_s * g) * &self.powers_g[c - 1],
                &self.am1 * gh + &self.c0_s,
            ],
        ])
    }

    /// `[[I, Ĝ(s)^C], [G(s)^C, I]]`, the right factor of `Z(s, C)`.
    pub fn z_right_factor(&self) -> DMatrix<T> {
        let c = self.capacity();
        let n = self.n();
        let eye = DMatrix::<T>::identity(n, n);
        linalg::from_blocks(&[
            vec![eye.clone(), self.powers_ghat[c].clone()],
            vec![self.powers_g[c].clone(), eye],
        ])
    }

    /// Generator of the process killed at rate `s`, watched on levels 0 and
    /// `C` only; built by censoring the dense `Q - sI`.
    pub fn censored_killed_generator(&self) -> Result<DMatrix<T>> {
        let q = self.blocks.assemble_generator()?;
        let qs = shift(&q, self.s());
        linalg::censor(&qs, &linalg::level_indices(&[0, self.capacity()], self.n()))
    }

    /// Solve the level equations for right-hand sides `g_s` (divided by `s`).
    fn solve_levels(&self, g_s: &[DMatrix<T>]) -> Result<Vec<DMatrix<T>>> {
        let c = self.capacity();
        let nu = self.nu_all(g_s);
        let top = &g_s[0] + &self.b0_s * &nu[0] + &self.a1 * &nu[1];
        let bottom = &g_s[c] + &self.am1 * &nu[c - 1] + &self.c0_s * &nu[c];
        let rhs = -linalg::vstack(&[&top, &bottom]);
        let vw = linalg::solve(&self.z_matrix(), &rhs, "Z(s, C)")?;
        let n = self.n();
        let v = vw.rows(0, n).into_owned();
        let w = vw.rows(n, n).into_owned();
        Ok(nu
            .into_iter()
            .enumerate()
            .map(|(k, nu_k)| &self.powers_g[k] * &v + &self.powers_ghat[c - k] * &w + nu_k)
            .collect())
    }

    /// Transform of the deviation matrix restricted to target level `l`:
    /// all blocks `D̃_{k,l}(s)`, `k = 0..=C`.
    pub fn deviation_transform_column(&self, pi: &StationaryDistribution, l: usize) -> Result<Vec<DMatrix<T>>> {
        let c = self.capacity();
        if l > c {
            return Err(QbdError::LevelOutOfRange { level: l, max: c });
        }
        let n = self.n();
        let s = self.s();
        let inv_s = T::one() / s;
        let g = &self.gmat.g;
        let h0 = &self.gmat.h0;
        let pg = &self.powers_g;
        let ph = &self.powers_ghat;
        let minus_sz = self.z_matrix() * (-s);

        let pi_term = linalg::ones_col::<T>(n) * linalg::lift_row::<T>(&pi.pi[l]) * (inv_s * inv_s);

        let blocks = if l == 0 {
            let rhs = linalg::vstack(&[&DMatrix::identity(n, n), &DMatrix::zeros(n, n)]);
            let vw = linalg::solve(&minus_sz, &rhs, "Z(s, C)")?;
            let v = vw.rows(0, n).into_owned();
            let w = vw.rows(n, n).into_owned();
            (0..=c).map(|k| &pg[k] * &v + &ph[c - k] * &w - &pi_term).collect()
        } else if l < c {
            let top = &self.b0_s * &ph[l] + &self.a1 * &ph[l - 1];
            let bottom = &self.am1 * &pg[c - 1 - l] + &self.c0_s * &pg[c - l];
            let vw = linalg::solve(&minus_sz, &linalg::vstack(&[&top, &bottom]), "Z(s, C)")?;
            let v = vw.rows(0, n).into_owned();
            let w = vw.rows(n, n).into_owned();
            (0..=c)
                .map(|k| {
                    let local = if l <= k { &pg[k - l] } else { &ph[l - k] };
                    (&pg[k] * &v + &ph[c - k] * &w + local * inv_s) * h0 - &pi_term
                })
                .collect()
        } else {
            let top = &self.b0_s * &ph[c] + &self.a1 * &ph[c - 1];
            let bottom = linalg::lift::<T>(&(&self.blocks.c0 - &self.blocks.a0)) - &self.a1 * g;
            let vw = linalg::solve(&minus_sz, &linalg::vstack(&[&top, &bottom]), "Z(s, C)")?;
            let v = vw.rows(0, n).into_owned();
            let w = vw.rows(n, n).into_owned() + DMatrix::<T>::identity(n, n) * inv_s;
            (0..=c)
                .map(|k| (&pg[k] * &v + &ph[c - k] * &w) * h0 - &pi_term)
                .collect()
        };
        Ok(blocks)
    }

    /// Assembled `D̃(s)` of order `n (C + 1)`.
    pub fn deviation_transform_full(&self, pi: &StationaryDistribution) -> Result<DMatrix<T>> {
        let c = self.capacity();
        let n = self.n();
        let mut out = DMatrix::<T>::zeros(n * (c + 1), n * (c + 1));
        for l in 0..=c {
            for (k, b) in self.deviation_transform_column(pi, l)?.iter().enumerate() {
                linalg::set_block(&mut out, k, l, b);
            }
        }
        Ok(out)
    }
}

/// `ν_k(s, C)` straight from its defining sums.
pub fn nu_k<T: Scalar>(ctx: &TransformContext<T>, rewards: &RewardSpec, k: usize) -> Result<DVector<T>> {
    let c = ctx.capacity();
    if k > c {
        return Err(QbdError::LevelOutOfRange { level: k, max: c });
    }
    let g_s = ctx.scaled_rewards(rewards)?;
    let h0 = &ctx.gmat.h0;
    let mut acc = DMatrix::<T>::zeros(ctx.n(), 1);
    for j in 0..k {
        acc += &ctx.powers_g[j] * h0 * &g_s[k - j];
    }
    for j in 1..=(c - k) {
        acc += &ctx.powers_ghat[j] * h0 * &g_s[k + j];
    }
    Ok(acc.column(0).into_owned())
}

pub fn z_matrix<T: Scalar>(ctx: &TransformContext<T>) -> DMatrix<T> {
    ctx.z_matrix()
}

/// `R̃_k(s)` for every level `k`.
pub fn reward_transform<T: Scalar>(ctx: &TransformContext<T>, rewards: &RewardSpec) -> Result<Vec<DVector<T>>> {
    let g_s = ctx.scaled_rewards(rewards)?;
    Ok(ctx
        .solve_levels(&g_s)?
        .into_iter()
        .map(|m| m.column(0).into_owned())
        .collect())
}

pub fn deviation_transform_block<T: Scalar>(
    ctx: &TransformContext<T>,
    pi: &StationaryDistribution,
    k: usize,
    l: usize,
) -> Result<DMatrix<T>> {
    let c = ctx.capacity();
    if k > c {
        return Err(QbdError::LevelOutOfRange { level: k, max: c });
    }
    Ok(ctx.deviation_transform_column(pi, l)?.swap_remove(k))
}

/// Reward rates of a process without an upper level bound.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardTail {
    /// `g_k` given for `k < len`, zero beyond.
    Finite(Vec<Vector>),
    /// `g_k = head[k]` for `k < head.len()`, `tail` for every higher level.
    EventuallyConstant { head: Vec<Vector>, tail: Vector },
}

impl RewardTail {
    fn level(&self, k: usize) -> Option<&Vector> {
        match self {
            RewardTail::Finite(g) => g.get(k),
            RewardTail::EventuallyConstant { head, tail } => Some(head.get(k).unwrap_or(tail)),
        }
    }

    fn support_end(&self) -> Option<usize> {
        match self {
            RewardTail::Finite(g) => Some(g.len()),
            RewardTail::EventuallyConstant { .. } => None,
        }
    }

    fn head_len(&self) -> usize {
        match self {
            RewardTail::Finite(g) => g.len(),
            RewardTail::EventuallyConstant { head, .. } => head.len(),
        }
    }
}

const TAIL_MAX_TERMS: usize = 1_000_000;

fn lift_vec<T: Scalar>(v: &Vector, scale: T) -> DMatrix<T> {
    DMatrix::from_iterator(v.len(), 1, v.iter().map(|&x| T::from_real(x) * scale))
}

/// `ν_k(s, ∞)`, the tail series truncated once its terms are negligible.
pub fn nu_k_unbounded<T: Scalar>(
    blocks: &QbdBlocks,
    gmat: &GMatrices<T>,
    tail: &RewardTail,
    k: usize,
) -> Result<DMatrix<T>> {
    let n = blocks.n;
    let inv_s = T::one() / gmat.s;
    let h0 = &gmat.h0;
    let mut acc = DMatrix::<T>::zeros(n, 1);
    let mut p = DMatrix::<T>::identity(n, n);
    for j in 0..k {
        if let Some(g) = tail.level(k - j) {
            acc += &p * h0 * lift_vec(g, inv_s);
        }
        p = &p * &gmat.g;
    }
    let mut p = gmat.ghat.clone();
    let mut j = 1;
    loop {
        let level = k + j;
        if let Some(end) = tail.support_end() {
            if level >= end {
                break;
            }
        }
        let Some(g) = tail.level(level) else { break };
        let term = &p * h0 * lift_vec(g, inv_s);
        acc += &term;
        if level >= tail.head_len() {
            let bound = linalg::max_abs(&p) * linalg::max_abs(h0) * g.amax() * inv_s.modulus() * n as f64;
            if bound <= f64::EPSILON * linalg::max_abs(&acc).max(f64::MIN_POSITIVE) || bound == 0.0 {
                break;
            }
        }
        j += 1;
        if j > TAIL_MAX_TERMS {
            return Err(QbdError::TailConvergence {
                terms: TAIL_MAX_TERMS,
                last_term: linalg::max_abs(&term),
            });
        }
        p = &p * &gmat.ghat;
    }
    Ok(acc)
}

/// `R̃_k(s, ∞)` of the process without upper bound.
pub fn reward_transform_unbounded<T: Scalar>(
    blocks: &QbdBlocks,
    gmat: &GMatrices<T>,
    tail: &RewardTail,
    k: usize,
) -> Result<DVector<T>> {
    check_positive(gmat.s)?;
    let s = gmat.s;
    let b0_s = shift(&blocks.b0, s);
    let a1 = linalg::lift::<T>(&blocks.a1);
    let nu0 = nu_k_unbounded(blocks, gmat, tail, 0)?;
    let nu1 = nu_k_unbounded(blocks, gmat, tail, 1)?;
    let g0 = match tail.level(0) {
        Some(g) => lift_vec(g, T::one() / s),
        None => DMatrix::zeros(blocks.n, 1),
    };
    let lhs = &b0_s + &a1 * &gmat.g;
    let v = -linalg::solve(&lhs, &(g0 + &b0_s * nu0 + &a1 * nu1), "(B0 - sI) + A1 G(s)")?;
    let nu_k = nu_k_unbounded(blocks, gmat, tail, k)?;
    let r = linalg::mat_pow(&gmat.g, k) * v + nu_k;
    Ok(r.column(0).into_owned())
}

/// `D̃_{k,l}(s, ∞)`. `pi_l` is the level-`l` block of the stationary vector of
/// the unrestricted process; pass `None` when it does not exist (transient or
/// null-recurrent drift), in which case the stationary term vanishes.
pub fn deviation_transform_unbounded<T: Scalar>(
    blocks: &QbdBlocks,
    gmat: &GMatrices<T>,
    pi_l: Option<&Vector>,
    k: usize,
    l: usize,
) -> Result<DMatrix<T>> {
    check_positive(gmat.s)?;
    let n = blocks.n;
    let s = gmat.s;
    let inv_s = T::one() / s;
    let b0_s = shift(&blocks.b0, s);
    let a1 = linalg::lift::<T>(&blocks.a1);
    let minus_s_lhs = (&b0_s + &a1 * &gmat.g) * (-s);
    let pi_term = match pi_l {
        Some(p) => linalg::ones_col::<T>(n) * linalg::lift_row::<T>(p) * (inv_s * inv_s),
        None => DMatrix::zeros(n, n),
    };
    let gk = linalg::mat_pow(&gmat.g, k);
    if l == 0 {
        let v = linalg::inverse(&minus_s_lhs, "(B0 - sI) + A1 G(s)")?;
        return Ok(gk * v - pi_term);
    }
    let rhs = (&b0_s * &gmat.ghat + &a1) * linalg::mat_pow(&gmat.ghat, l - 1);
    let v = linalg::solve(&minus_s_lhs, &rhs, "(B0 - sI) + A1 G(s)")?;
    let local = if l <= k {
        linalg::mat_pow(&gmat.g, k - l)
    } else {
        linalg::mat_pow(&gmat.ghat, l - k)
    };
    Ok((gk * v + local * inv_s) * &gmat.h0 - pi_term)
}

/// Solver and inversion settings for time-domain quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimeDomainConfig {
    pub solver: SolverConfig,
    pub inversion: InversionConfig,
}

/// `R_k(t)` for every level `k`.
pub fn reward_time_levels(
    blocks: &QbdBlocks,
    rewards: &RewardSpec,
    t: f64,
    config: &TimeDomainConfig,
) -> Result<Vec<Vector>> {
    rewards.check(blocks)?;
    if !(t >= 0.0) {
        return Err(QbdError::Parameter(format!("t must be nonnegative (got {t})")));
    }
    let n = blocks.n;
    let levels = blocks.capacity + 1;
    if t == 0.0 {
        return Ok(vec![Vector::zeros(n); levels]);
    }
    let stacked = laplace::invert_laplace(
        |s| {
            let ctx = TransformContext::<Complex64>::new(blocks, s, &config.solver)?;
            let r = reward_transform(&ctx, rewards)?;
            Ok(DMatrix::from_iterator(
                n * levels,
                1,
                r.iter().flat_map(|v| v.iter().copied()),
            ))
        },
        t,
        &config.inversion,
    )?;
    Ok((0..levels)
        .map(|k| stacked.view((k * n, 0), (n, 1)).column(0).into_owned())
        .collect())
}

pub fn reward_time(
    blocks: &QbdBlocks,
    rewards: &RewardSpec,
    t: f64,
    k: usize,
    config: &TimeDomainConfig,
) -> Result<Vector> {
    if k > blocks.capacity {
        return Err(QbdError::LevelOutOfRange {
            level: k,
            max: blocks.capacity,
        });
    }
    Ok(reward_time_levels(blocks, rewards, t, config)?.swap_remove(k))
}

/// `D(t)` by inverting the block-assembled `D̃(s)`.
pub fn transient_deviation(
    blocks: &QbdBlocks,
    pi: &StationaryDistribution,
    t: f64,
    config: &TimeDomainConfig,
) -> Result<Mat> {
    if !(t >= 0.0) {
        return Err(QbdError::Parameter(format!("t must be nonnegative (got {t})")));
    }
    if t == 0.0 {
        return Ok(Mat::zeros(blocks.order(), blocks.order()));
    }
    laplace::invert_laplace(
        |s| TransformContext::<Complex64>::new(blocks, s, &config.solver)?.deviation_transform_full(pi),
        t,
        &config.inversion,
    )
}

/// Expected occupation times `V(t) = 1 pi t + D(t)`.
pub fn occupation_matrix(
    blocks: &QbdBlocks,
    pi: &StationaryDistribution,
    t: f64,
    config: &TimeDomainConfig,
) -> Result<Mat> {
    let d = transient_deviation(blocks, pi, t, config)?;
    let pi_row = pi.stacked().transpose();
    Ok(linalg::ones(blocks.order()) * pi_row * t + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::stationary::stationary_rmatrix;

    fn scalar(lambda: f64, mu: f64, c: usize) -> QbdBlocks {
        QbdBlocks::birth_death(lambda, mu, c).unwrap()
    }

    fn ctx(b: &QbdBlocks, s: f64) -> TransformContext<f64> {
        TransformContext::new(b, s, &SolverConfig::default()).unwrap()
    }

    fn only_top(b: &QbdBlocks, v: f64) -> RewardSpec {
        let mut g = RewardSpec::zeros(b);
        g.g[b.capacity] = Vector::from_element(b.n, v);
        g
    }

    #[test]
    fn nu_with_reward_only_at_top() {
        let b = scalar(1.0, 2.0, 4);
        let cx = ctx(&b, 1.0);
        let g = only_top(&b, 3.0);
        let gs = 3.0 / 1.0;
        let top = nu_k(&cx, &g, 4).unwrap();
        assert!((top[0] - cx.gmat.h0[(0, 0)] * gs).abs() < 1e-15);
        for k in 0..4 {
            let v = nu_k(&cx, &g, k).unwrap();
            let expected = cx.gmat.ghat[(0, 0)].powi((4 - k) as i32) * cx.gmat.h0[(0, 0)] * gs;
            assert!((v[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn nu_zero_rewards() {
        let b = scalar(1.0, 2.0, 3);
        let cx = ctx(&b, 0.5);
        for k in 0..=3 {
            assert_eq!(nu_k(&cx, &RewardSpec::zeros(&b), k).unwrap().amax(), 0.0);
        }
        assert!(nu_k(&cx, &RewardSpec::zeros(&b), 4).is_err());
    }

    #[test]
    fn nu_recursion_matches_sums() {
        let b = scalar(1.3, 0.7, 6);
        let cx = ctx(&b, 0.4);
        let g = RewardSpec::new((0..7).map(|k| Vector::from_element(1, (k as f64).sin())).collect(), &b).unwrap();
        let gs = cx.scaled_rewards(&g).unwrap();
        let all = cx.nu_all(&gs);
        for (k, v) in all.iter().enumerate() {
            assert!((v[(0, 0)] - nu_k(&cx, &g, k).unwrap()[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn z_for_capacity_one() {
        let b = scalar(1.0, 2.0, 1);
        let cx = ctx(&b, 1.0);
        let z = cx.z_matrix();
        let (g, gh) = (cx.gmat.g[(0, 0)], cx.gmat.ghat[(0, 0)]);
        let (b0, c0, a1, am1) = (-2.0, -3.0, 1.0, 2.0);
        let expected = Mat::from_row_slice(2, 2, &[b0 + a1 * g, b0 * gh + a1, am1 + c0 * g, am1 * gh + c0]);
        assert!((z - expected).amax() < 1e-15);
    }

    #[test]
    fn z_factorization_scalar() {
        let b = scalar(1.0, 2.0, 2);
        let cx = ctx(&b, 1.0);
        let lhs = cx.censored_killed_generator().unwrap() * cx.z_right_factor();
        assert!((lhs - cx.z_matrix()).amax() < 1e-10);
    }

    #[test]
    fn zero_and_uniform_rewards() {
        let b = scalar(1.0, 2.0, 3);
        let cx = ctx(&b, 0.8);
        for v in reward_transform(&cx, &RewardSpec::zeros(&b)).unwrap() {
            assert_eq!(v.amax(), 0.0);
        }
        let g = RewardSpec::new(vec![Vector::from_element(1, 2.0); 4], &b).unwrap();
        for v in reward_transform(&cx, &g).unwrap() {
            assert!((v[0] - 2.0 / 0.64).abs() < 1e-12);
        }
    }

    #[test]
    fn deviation_block_matches_dense_scalar() {
        let b = scalar(1.0, 2.0, 2);
        let cx = ctx(&b, 1.0);
        let st = stationary_rmatrix(&b).unwrap();
        let q = b.assemble_generator().unwrap();
        let dense = oracle::oracle_deviation_transform(&q, &st.stacked(), 1.0).unwrap();
        let blk = deviation_transform_block(&cx, &st, 0, 2).unwrap();
        assert!((blk[(0, 0)] - dense[(0, 2)]).abs() < 1e-12);
        let full = cx.deviation_transform_full(&st).unwrap();
        assert!((full - dense).amax() < 1e-12);
    }

    #[test]
    fn zero_time_is_zero() {
        let b = scalar(1.0, 2.0, 2);
        let g = only_top(&b, 1.0);
        let r = reward_time(&b, &g, 0.0, 1, &TimeDomainConfig::default()).unwrap();
        assert_eq!(r.amax(), 0.0);
    }

    #[test]
    fn occupation_rows_sum_to_t() {
        let b = scalar(1.0, 2.0, 3);
        let st = stationary_rmatrix(&b).unwrap();
        let v = occupation_matrix(&b, &st, 1.5, &TimeDomainConfig::default()).unwrap();
        for r in v.row_iter() {
            assert!((r.sum() - 1.5).abs() < 1e-7);
        }
    }

    #[test]
    fn unbounded_nu_zero_relation() {
        let b = scalar(1.0, 2.0, 5);
        let gm = GMatrices::compute(&b, 1.0, &SolverConfig::default()).unwrap();
        let tail = RewardTail::EventuallyConstant {
            head: vec![Vector::from_element(1, 1.0)],
            tail: Vector::from_element(1, 0.5),
        };
        let nu0 = nu_k_unbounded(&b, &gm, &tail, 0).unwrap();
        let nu1 = nu_k_unbounded(&b, &gm, &tail, 1).unwrap();
        assert!((nu0 - &gm.ghat * nu1).amax() < 1e-14);
    }

    #[test]
    fn unbounded_zero_reward() {
        let b = scalar(1.0, 2.0, 5);
        let gm = GMatrices::compute(&b, 1.0, &SolverConfig::default()).unwrap();
        let r = reward_transform_unbounded(&b, &gm, &RewardTail::Finite(vec![]), 3).unwrap();
        assert_eq!(r.amax(), 0.0);
    }

    #[test]
    fn unbounded_deviation_level_zero_has_no_ghat() {
        let b = scalar(1.0, 2.0, 5);
        let mut gm = GMatrices::compute(&b, 1.0, &SolverConfig::default()).unwrap();
        let pi0 = Vector::from_element(1, 0.5);
        let a = deviation_transform_unbounded(&b, &gm, Some(&pi0), 0, 0).unwrap();
        gm.ghat *= 0.3;
        let b2 = deviation_transform_unbounded(&b, &gm, Some(&pi0), 0, 0).unwrap();
        assert_eq!(a, b2);
    }
}
