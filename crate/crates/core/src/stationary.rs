//! Stationary distribution of the finite QBD through the rate matrices
//! `R`, `R̂`: `pi_k = v0 R^k + vC R̂^(C-k)`.

use crate::error::{QbdError, Result};
use crate::linalg::{self, Mat, Vector};
use crate::matrix_eq::{self, GMatrices, SolverConfig};
use crate::model::{DriftTag, QbdBlocks};

/// Roundoff below this magnitude is clamped to zero.
const CLAMP: f64 = 1e-13;
/// Relative singular-value threshold for the boundary kernel.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    /// One row vector per level.
    pub pi: Vec<Vector>,
    pub v0: Vector,
    pub v_c: Vector,
}

impl StationaryDistribution {
    pub fn stacked(&self) -> Vector {
        let n = self.pi[0].len();
        Vector::from_iterator(n * self.pi.len(), self.pi.iter().flat_map(|v| v.iter().copied()))
    }

    /// Per-level split of a stacked vector; the boundary coefficients are
    /// left at zero.
    pub fn from_stacked(v: &Vector, n: usize) -> Self {
        let levels = v.len() / n;
        let pi = (0..levels).map(|k| v.rows(k * n, n).into_owned()).collect();
        StationaryDistribution {
            pi,
            v0: Vector::zeros(n),
            v_c: Vector::zeros(n),
        }
    }
}

/// Stationary distribution from the `2n`-dimensional boundary system.
pub fn stationary_rmatrix(blocks: &QbdBlocks) -> Result<StationaryDistribution> {
    let gm = GMatrices::at_zero(blocks, &SolverConfig::default())?;
    stationary_from_g(blocks, &gm.g, &gm.ghat)
}

pub fn stationary_from_g(blocks: &QbdBlocks, g: &Mat, ghat: &Mat) -> Result<StationaryDistribution> {
    let (r, rhat) = matrix_eq::rate_matrices(blocks, g, ghat)?;
    stationary_from_rates(blocks, &r, &rhat)
}

pub fn stationary_from_rates(blocks: &QbdBlocks, r: &Mat, rhat: &Mat) -> Result<StationaryDistribution> {
    let n = blocks.n;
    let c = blocks.capacity;
    let r_pows = linalg::power_sequence(r, c);
    let rh_pows = linalg::power_sequence(rhat, c);

    let top_left = &blocks.b0 + r * &blocks.a_minus1;
    let top_right = &r_pows[c - 1] * (r * &blocks.c0 + &blocks.a1);
    let bottom_left = &rh_pows[c - 1] * (rhat * &blocks.b0 + &blocks.a_minus1);
    let bottom_right = &blocks.c0 + rhat * &blocks.a1;
    // Eliminate the small boundary coefficient (the side the drift points
    // away from) through its own balance equation. Full system as fallback.
    let scale = [&top_left, &top_right, &bottom_left, &bottom_right]
        .iter()
        .fold(0.0_f64, |a, m| a.max(m.amax()));
    let transient = blocks.classify_drift()?.tag == DriftTag::Transient;
    let reduced = if transient {
        linalg::solve(&top_left.transpose(), &bottom_left.transpose(), "level-0 balance")
            .map(|t| (t.transpose(), &bottom_right - t.transpose() * &top_right))
    } else {
        linalg::solve(&bottom_right.transpose(), &top_right.transpose(), "level-C balance")
            .map(|t| (t.transpose(), &top_left - t.transpose() * &bottom_left))
    };
    let mut x = match reduced {
        Ok((map, schur)) => {
            let (kept, kernel) = linalg::left_null_vector_abs(&schur, RANK_TOL * scale);
            if kernel != 1 {
                return Err(QbdError::NumericalRank {
                    context: "stationary boundary system".into(),
                    expected: 1,
                    found: kernel,
                });
            }
            let other = -(kept.transpose() * map).transpose();
            if transient {
                Vector::from_iterator(2 * n, other.iter().chain(kept.iter()).copied())
            } else {
                Vector::from_iterator(2 * n, kept.iter().chain(other.iter()).copied())
            }
        }
        Err(_) => {
            let boundary = linalg::from_blocks(&[vec![top_left, top_right], vec![bottom_left, bottom_right]]);
            let (x, kernel) = linalg::left_null_vector(&boundary, RANK_TOL);
            if kernel != 1 {
                return Err(QbdError::NumericalRank {
                    context: "stationary boundary system".into(),
                    expected: 1,
                    found: kernel,
                });
            }
            x
        }
    };

    let one = linalg::ones(n);
    let sum_r: Mat = r_pows.iter().sum();
    let sum_rh: Mat = rh_pows.iter().sum();
    let v0 = x.rows(0, n).into_owned();
    let vc = x.rows(n, n).into_owned();
    let total = v0.dot(&(&sum_r * &one)) + vc.dot(&(&sum_rh * &one));
    if total == 0.0 || !total.is_finite() {
        return Err(QbdError::Singular("stationary normalization".into()));
    }
    x /= total;
    let v0 = x.rows(0, n).into_owned();
    let vc = x.rows(n, n).into_owned();

    let mut pi: Vec<Vector> = (0..=c)
        .map(|k| (v0.transpose() * &r_pows[k] + vc.transpose() * &rh_pows[c - k]).transpose())
        .collect();
    let mut sum = 0.0;
    for v in pi.iter_mut() {
        for e in v.iter_mut() {
            if *e < 0.0 && *e >= -CLAMP {
                *e = 0.0;
            }
        }
        sum += v.sum();
    }
    for v in pi.iter_mut() {
        *v /= sum;
    }
    if pi.iter().flat_map(|v| v.iter()).any(|&e| e < 0.0) {
        return Err(QbdError::Conditioning {
            context: "stationary distribution has negative entries".into(),
            residual: pi.iter().flat_map(|v| v.iter()).fold(0.0_f64, |a, &e| a.min(e)),
        });
    }
    Ok(StationaryDistribution { pi, v0, v_c: vc })
}

/// Stationary distribution from the null vector of the assembled generator;
/// works for every irreducible model, including null-recurrent drift.
pub fn stationary_dense(blocks: &QbdBlocks) -> Result<StationaryDistribution> {
    let q = blocks.assemble_generator()?;
    let (v, kernel) = linalg::left_null_vector(&q, RANK_TOL);
    if kernel != 1 {
        return Err(QbdError::NumericalRank {
            context: "generator kernel".into(),
            expected: 1,
            found: kernel,
        });
    }
    let mut v = &v / v.sum();
    for e in v.iter_mut() {
        if *e < 0.0 && *e >= -CLAMP {
            *e = 0.0;
        }
    }
    let v = &v / v.sum();
    Ok(StationaryDistribution::from_stacked(&v, blocks.n))
}

/// [`stationary_rmatrix`], falling back to [`stationary_dense`] when the
/// drift is null and the rate matrices do not exist.
pub fn stationary_auto(blocks: &QbdBlocks) -> Result<StationaryDistribution> {
    match stationary_rmatrix(blocks) {
        Err(QbdError::AsymptoticsUndefined(_)) | Err(QbdError::IterationLimit { .. }) => stationary_dense(blocks),
        other => other,
    }
}
