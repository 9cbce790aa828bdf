//! Numerical Laplace inversion by Euler summation of the Fourier series on
//! the Bromwich contour (Abate–Whitt).
//!
//! ```text
//! f(t) ≈ e^{a/2}/t · [ Re f̃(a/2t)/2 + Σ_{k≥1} (-1)^k Re f̃((a + 2kπi)/2t) ]
//! ```
//!
//! The alternating tail is accelerated by binomially averaging the partial
//! sums `s_{N}, ..., s_{N+m}` where `N + m = series_terms` and
//! `m = euler_terms`. The discretization error is about `e^{-a} f(3t)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{QbdError, Result};
use crate::linalg::{CMat, Mat};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub a_param: f64,
    pub series_terms: usize,
    pub euler_terms: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            a_param: 18.4,
            series_terms: 40,
            euler_terms: 12,
        }
    }
}

impl InversionConfig {
    pub fn check(&self) -> Result<()> {
        if self.euler_terms == 0 || self.series_terms <= self.euler_terms {
            return Err(QbdError::Parameter(
                "inversion needs series_terms > euler_terms >= 1".into(),
            ));
        }
        if !(self.a_param > 0.0) {
            return Err(QbdError::Parameter("contour parameter must be positive".into()));
        }
        Ok(())
    }

    /// Contour points at which a transform is evaluated for time `t`, in
    /// summation order.
    pub fn nodes(&self, t: f64) -> Vec<Complex64> {
        (0..=self.series_terms)
            .map(|k| Complex64::new(self.a_param, 2.0 * PI * k as f64) / (2.0 * t))
            .collect()
    }
}

/// Invert a matrix-valued transform at `t > 0`. The evaluator is called once
/// per contour node, in a fixed order.
pub fn invert_laplace<F>(mut transform: F, t: f64, config: &InversionConfig) -> Result<Mat>
where
    F: FnMut(Complex64) -> Result<CMat>,
{
    if !(t > 0.0) || !t.is_finite() {
        return Err(QbdError::Parameter(format!(
            "inversion time must be positive (got {t})"
        )));
    }
    config.check()?;
    let values = config
        .nodes(t)
        .into_iter()
        .map(&mut transform)
        .collect::<Result<Vec<_>>>()?;
    Ok(euler_sum(&values, t, config))
}

/// Combine precomputed transform values at [`InversionConfig::nodes`].
pub fn euler_sum(values: &[CMat], t: f64, config: &InversionConfig) -> Mat {
    let shape = values[0].shape();
    let total = config.series_terms;
    let m = config.euler_terms;
    let first = total - m;

    // partial sums s_j for j = first..=total
    let mut partial = Vec::with_capacity(m + 1);
    let mut s = values[0].map(|z| z.re) * 0.5;
    for (k, v) in values.iter().enumerate().skip(1) {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s += v.map(|z| z.re) * sign;
        if k >= first {
            partial.push(s.clone());
        }
    }

    let mut acc = Mat::zeros(shape.0, shape.1);
    let mut binom = 1.0;
    for (j, p) in partial.iter().enumerate() {
        acc += p * binom;
        binom *= (m - j) as f64 / (j + 1) as f64;
    }
    let scale = (config.a_param / 2.0).exp() / t * 0.5f64.powi(m as i32);
    acc * scale
}

/// Scalar convenience wrapper.
pub fn invert_scalar<F>(mut transform: F, t: f64, config: &InversionConfig) -> Result<f64>
where
    F: FnMut(Complex64) -> Complex64,
{
    let m = invert_laplace(|s| Ok(CMat::from_element(1, 1, transform(s))), t, config)?;
    Ok(m[(0, 0)])
}
