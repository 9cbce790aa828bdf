//! Brute-force reference computations on the assembled generator.
//!
//! Nothing in this module touches the structured (G-matrix, passage or
//! perturbation) code paths; every routine works on a dense generator with
//! plain factorizations, quadrature or time stepping. They exist to check
//! the structured algorithms and are limited to small problems.

use crate::error::{QbdError, Result};
use crate::linalg::{self, Mat, Vector};

/// Dense `O(N^3)` budget.
pub const MAX_ORDER: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Base quadrature step, divided by `max(1, |Q|_max)`.
    pub quadrature_step: f64,
    /// Base RK4 step, divided by `max(1, |Q|_max)`.
    pub ode_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            quadrature_step: 1e-3,
            ode_step: 1e-3,
        }
    }
}

fn check_size(q: &Mat) -> Result<()> {
    if q.nrows() != q.ncols() {
        return Err(QbdError::Structure("generator must be square".into()));
    }
    if q.nrows() > MAX_ORDER {
        return Err(QbdError::TooLarge {
            order: q.nrows(),
            limit: MAX_ORDER,
        });
    }
    Ok(())
}

fn scaled_step(base: f64, q: &Mat) -> f64 {
    base / q.amax().max(1.0)
}

/// Stationary vector by replacing one balance equation with `pi 1 = 1`.
pub fn oracle_stationary(q: &Mat) -> Result<Vector> {
    check_size(q)?;
    let n = q.nrows();
    let mut m = q.transpose();
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = Mat::zeros(n, 1);
    rhs[(n - 1, 0)] = 1.0;
    let pi = linalg::solve(&m, &rhs, "oracle stationary").map_err(|_| QbdError::NumericalRank {
        context: "oracle stationary".into(),
        expected: 1,
        found: 2,
    })?;
    let pi = pi.column(0).into_owned();
    let residual = (pi.transpose() * q).amax();
    if residual > 1e-12 * q.amax().max(1.0) {
        return Err(QbdError::Conditioning {
            context: "oracle stationary residual".into(),
            residual,
        });
    }
    Ok(pi)
}

fn one_pi(pi: &Vector) -> Mat {
    linalg::ones(pi.len()) * pi.transpose()
}

/// `D = (1 pi - Q)^{-1} - 1 pi`, verified against its defining identities.
pub fn oracle_deviation(q: &Mat, pi: &Vector) -> Result<Mat> {
    check_size(q)?;
    let w = one_pi(pi);
    let inv = linalg::inverse(&(&w - q), "oracle deviation")?;
    let d = inv - &w;
    let eye = Mat::identity(q.nrows(), q.ncols());
    let scale = d.amax().max(1.0) * q.amax().max(1.0);
    let r1 = (q * &d - (&w - &eye)).amax();
    let r2 = (pi.transpose() * &d).amax();
    let r3 = (&d * linalg::ones(q.nrows())).amax();
    let residual = r1.max(r2).max(r3);
    if residual > 1e-10 * scale {
        return Err(QbdError::Conditioning {
            context: "oracle deviation identities".into(),
            residual,
        });
    }
    Ok(d)
}

/// `D(t) = ∫_0^t (e^{Qu} - 1 pi) du` by composite Simpson on a uniform grid.
/// `e^{Qh}` comes from scaling and squaring with a Padé approximant; the
/// grid values are powers of it. Error is `O(h^4)`.
pub fn oracle_transient_deviation(q: &Mat, pi: &Vector, t: f64, cfg: &OracleConfig) -> Result<Mat> {
    check_size(q)?;
    if !(t >= 0.0) {
        return Err(QbdError::Parameter("t must be nonnegative".into()));
    }
    let nt = q.nrows();
    if t == 0.0 {
        return Ok(Mat::zeros(nt, nt));
    }
    let h0 = scaled_step(cfg.quadrature_step, q);
    let mut steps = (t / h0).ceil() as usize;
    steps += steps % 2;
    steps = steps.max(2);
    let h = t / steps as f64;
    let step = (q * h).exp();
    let mut e = Mat::identity(nt, nt);
    let mut acc = e.clone();
    for i in 1..=steps {
        e = &e * &step;
        let w = if i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += &e * w;
    }
    Ok(acc * (h / 3.0) - one_pi(pi) * t)
}

/// `R(t)` from `R' = QR + g`, `R(0) = 0` with classical RK4.
pub fn oracle_reward(q: &Mat, g: &Vector, t: f64, cfg: &OracleConfig) -> Result<Vector> {
    check_size(q)?;
    if !(t >= 0.0) {
        return Err(QbdError::Parameter("t must be nonnegative".into()));
    }
    let mut r = Vector::zeros(q.nrows());
    if t == 0.0 {
        return Ok(r);
    }
    let h0 = scaled_step(cfg.ode_step, q);
    let steps = ((t / h0).ceil() as usize).max(1);
    let h = t / steps as f64;
    let f = |x: &Vector| q * x + g;
    for _ in 0..steps {
        let k1 = f(&r);
        let k2 = f(&(&r + &k1 * (h / 2.0)));
        let k3 = f(&(&r + &k2 * (h / 2.0)));
        let k4 = f(&(&r + &k3 * h));
        r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(r)
}

/// `R(t) = (pi g) 1 t + D(t) g`, the closed form of the same ODE.
pub fn oracle_reward_via_deviation(q: &Mat, pi: &Vector, g: &Vector, t: f64, cfg: &OracleConfig) -> Result<Vector> {
    let dt = oracle_transient_deviation(q, pi, t, cfg)?;
    Ok(linalg::ones(q.nrows()) * (pi.dot(g) * t) + dt * g)
}

/// Mean first passage times to `target` from every state (0 at the target).
pub fn oracle_passage(q: &Mat, target: usize) -> Result<Vector> {
    check_size(q)?;
    let nt = q.nrows();
    if target >= nt {
        return Err(QbdError::Parameter(format!("target state {target} out of range")));
    }
    let keep: Vec<usize> = (0..nt).filter(|&i| i != target).collect();
    let taboo = Mat::from_fn(nt - 1, nt - 1, |i, j| q[(keep[i], keep[j])]);
    let rhs = Mat::from_element(nt - 1, 1, -1.0);
    let m = linalg::solve(&taboo, &rhs, "oracle passage")?;
    let mut out = Vector::zeros(nt);
    for (i, &s) in keep.iter().enumerate() {
        out[s] = m[(i, 0)];
    }
    Ok(out)
}

/// Full mean first passage matrix, column by column.
pub fn oracle_passage_matrix(q: &Mat) -> Result<Mat> {
    let nt = q.nrows();
    let mut m = Mat::zeros(nt, nt);
    for j in 0..nt {
        m.set_column(j, &oracle_passage(q, j)?);
    }
    Ok(m)
}

/// `(sI - Q)^{-1}` by a dense solve.
pub fn oracle_resolvent(q: &Mat, s: f64) -> Result<Mat> {
    check_size(q)?;
    let nt = q.nrows();
    linalg::inverse(&(Mat::identity(nt, nt) * s - q), "oracle resolvent")
}

/// `D̃(s) = (1/s)(sI - Q)^{-1} - (1/s^2) 1 pi`.
pub fn oracle_deviation_transform(q: &Mat, pi: &Vector, s: f64) -> Result<Mat> {
    Ok(oracle_resolvent(q, s)? / s - one_pi(pi) / (s * s))
}

/// `R̃(s) = (sI - Q)^{-1} g / s`.
pub fn oracle_reward_transform(q: &Mat, g: &Vector, s: f64) -> Result<Vector> {
    Ok(oracle_resolvent(q, s)? * g / s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Mat {
        Mat::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0])
    }

    fn scalar3() -> Mat {
        Mat::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 2.0, -3.0, 1.0, 0.0, 2.0, -2.0])
    }

    #[test]
    fn stationary_closed_forms() {
        let pi = oracle_stationary(&two_state()).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let pi = oracle_stationary(&scalar3()).unwrap();
        for (k, e) in [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0].iter().enumerate() {
            assert!((pi[k] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn two_state_deviation() {
        let q = two_state();
        let pi = oracle_stationary(&q).unwrap();
        let d = oracle_deviation(&q, &pi).unwrap();
        let expected = Mat::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!((d - expected).amax() < 1e-15);
    }

    #[test]
    fn transient_deviation_converges() {
        let q = scalar3();
        let pi = oracle_stationary(&q).unwrap();
        let d = oracle_deviation(&q, &pi).unwrap();
        let dt0 = oracle_transient_deviation(&q, &pi, 0.0, &OracleConfig::default()).unwrap();
        assert_eq!(dt0.amax(), 0.0);
        let dt = oracle_transient_deviation(&q, &pi, 50.0, &OracleConfig::default()).unwrap();
        assert!((dt - &d).amax() < 1e-6);
        let dt = oracle_transient_deviation(&q, &pi, 2.0, &OracleConfig::default()).unwrap();
        assert!((dt * linalg::ones(3)).amax() < 1e-12);
    }

    #[test]
    fn uniform_reward_is_linear() {
        let q = scalar3();
        let g = Vector::from_element(3, 2.5);
        let r = oracle_reward(&q, &g, 1.7, &OracleConfig::default()).unwrap();
        for v in r.iter() {
            assert!((v - 2.5 * 1.7).abs() < 1e-12);
        }
        assert_eq!(
            oracle_reward(&q, &g, 0.0, &OracleConfig::default()).unwrap().amax(),
            0.0
        );
    }

    #[test]
    fn ode_and_deviation_forms_agree() {
        let q = scalar3();
        let pi = oracle_stationary(&q).unwrap();
        let g = Vector::from_vec(vec![0.0, 1.0, 3.0]);
        let cfg = OracleConfig::default();
        let a = oracle_reward(&q, &g, 1.3, &cfg).unwrap();
        let b = oracle_reward_via_deviation(&q, &pi, &g, 1.3, &cfg).unwrap();
        assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn passage_two_state() {
        let m = oracle_passage(&two_state(), 1).unwrap();
        assert_eq!(m[1], 0.0);
        assert!((m[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oversized_problems_fail_loudly() {
        let q = Mat::zeros(MAX_ORDER + 1, MAX_ORDER + 1);
        assert!(matches!(oracle_stationary(&q), Err(QbdError::TooLarge { .. })));
    }
}
