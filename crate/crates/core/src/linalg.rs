//! Dense linear-algebra helpers shared by every computational module.
//!
//! Everything here works on `nalgebra` dynamic matrices. Routines that must
//! also run on complex transform arguments are generic over [`Scalar`].

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QbdError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Field the transform-domain formulas are evaluated over: `f64` for real
/// `s`, `Complex64` on the Bromwich contour.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}

impl Scalar for f64 {}
impl Scalar for Complex64 {}

pub fn lift<T: Scalar>(m: &Mat) -> DMatrix<T> {
    m.map(T::from_real)
}

/// `v` as a `1 x n` row.
pub fn lift_row<T: Scalar>(v: &Vector) -> DMatrix<T> {
    DMatrix::from_iterator(1, v.len(), v.iter().map(|&x| T::from_real(x)))
}

pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.modulus()))
}

pub fn ones(n: usize) -> Vector {
    DVector::from_element(n, 1.0)
}

pub fn ones_col<T: Scalar>(n: usize) -> DMatrix<T> {
    DMatrix::from_element(n, 1, T::one())
}

pub fn solve<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, context: &str) -> Result<DMatrix<T>> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| QbdError::Singular(context.to_string()))?;
    if x.iter().all(|v| v.modulus().is_finite()) {
        Ok(x)
    } else {
        Err(QbdError::Singular(context.to_string()))
    }
}

pub fn inverse<T: Scalar>(a: &DMatrix<T>, context: &str) -> Result<DMatrix<T>> {
    solve(a, &DMatrix::identity(a.nrows(), a.ncols()), context)
}

/// `base^k` by repeated squaring.
pub fn mat_pow<T: Scalar>(base: &DMatrix<T>, mut k: usize) -> DMatrix<T> {
    let n = base.nrows();
    let mut result = DMatrix::<T>::identity(n, n);
    let mut sq = base.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &sq;
        }
        k >>= 1;
        if k > 0 {
            sq = &sq * &sq;
        }
    }
    result
}

/// `[I, base, base^2, ..., base^max]`.
pub fn power_sequence<T: Scalar>(base: &DMatrix<T>, max: usize) -> Vec<DMatrix<T>> {
    let n = base.nrows();
    let mut out = Vec::with_capacity(max + 1);
    out.push(DMatrix::identity(n, n));
    for k in 1..=max {
        let next = &out[k - 1] * base;
        out.push(next);
    }
    out
}

pub fn block<T: Scalar>(m: &DMatrix<T>, row: usize, col: usize, n: usize) -> DMatrix<T> {
    m.view((row * n, col * n), (n, n)).into_owned()
}

pub fn set_block<T: Scalar>(m: &mut DMatrix<T>, row: usize, col: usize, b: &DMatrix<T>) {
    m.view_mut((row * b.nrows(), col * b.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
}

/// Assemble a matrix from an `r x c` grid of equally sized blocks.
pub fn from_blocks<T: Scalar>(grid: &[Vec<DMatrix<T>>]) -> DMatrix<T> {
    let br = grid[0][0].nrows();
    let bc = grid[0][0].ncols();
    let mut out = DMatrix::zeros(grid.len() * br, grid[0].len() * bc);
    for (i, row) in grid.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(b);
        }
    }
    out
}

/// Stack equally sized blocks vertically.
pub fn vstack<T: Scalar>(parts: &[&DMatrix<T>]) -> DMatrix<T> {
    let cols = parts[0].ncols();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(*p);
        r += p.nrows();
    }
    out
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Kronecker sum `a ⊕ b = a ⊗ I + I ⊗ b`.
pub fn kron_sum(a: &Mat, b: &Mat) -> Mat {
    let ia = Mat::identity(a.nrows(), a.nrows());
    let ib = Mat::identity(b.nrows(), b.nrows());
    a.kronecker(&ib) + ia.kronecker(b)
}

/// Relative Frobenius distance `|a - b|_F / max(|b|_F, tiny)`.
pub fn relative_frobenius(a: &Mat, b: &Mat) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

/// Magnitudes of the diagonal of `R` in a column-pivoted QR, nonincreasing.
fn pivoted_diagonal(m: &Mat) -> (Vec<f64>, nalgebra::linalg::ColPivQR<f64, nalgebra::Dyn, nalgebra::Dyn>) {
    let qr = m.clone().col_piv_qr();
    let d = qr.r().diagonal().iter().map(|x| x.abs()).collect();
    (d, qr)
}

/// Numerical rank: pivots of a column-pivoted QR above `rel_tol` times the
/// largest.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    let (d, _) = pivoted_diagonal(m);
    let top = d.first().copied().unwrap_or(0.0);
    d.iter().filter(|&&x| x > rel_tol * top).count()
}

/// Left null vector of a square matrix, together with the numerical kernel
/// dimension. With `M P = Q R` the last column of `Q` is annihilated up to the
/// smallest pivot of `R`.
pub fn left_null_vector(m: &Mat, rel_tol: f64) -> (Vector, usize) {
    left_null_vector_abs(m, rel_tol * m.amax())
}

/// As [`left_null_vector`], counting pivots up to the absolute `tol`.
pub fn left_null_vector_abs(m: &Mat, tol: f64) -> (Vector, usize) {
    let (d, qr) = pivoted_diagonal(m);
    let kernel = d.iter().filter(|&&x| x <= tol).count();
    let q = qr.q();
    (q.column(q.ncols() - 1).into_owned(), kernel)
}

/// Censor a (sub)generator onto the index set `keep`:
/// `M_KK + M_KU (-M_UU)^{-1} M_UK`.
pub fn censor<T: Scalar>(m: &DMatrix<T>, keep: &[usize]) -> Result<DMatrix<T>> {
    let nt = m.nrows();
    let mut is_kept = vec![false; nt];
    for &k in keep {
        is_kept[k] = true;
    }
    let drop: Vec<usize> = (0..nt).filter(|&i| !is_kept[i]).collect();
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]);
    let kk = pick(keep, keep);
    if drop.is_empty() {
        return Ok(kk);
    }
    let ku = pick(keep, &drop);
    let uu = pick(&drop, &drop);
    let uk = pick(&drop, keep);
    let x = solve(&(-uu), &uk, "censoring")?;
    Ok(kk + ku * x)
}

/// Indices of the phases of the given levels in a level-major layout.
pub fn level_indices(levels: &[usize], n: usize) -> Vec<usize> {
    levels.iter().flat_map(|&l| (l * n)..(l * n + n)).collect()
}
