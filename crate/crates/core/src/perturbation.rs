//! Capacity ladder: the deviation matrix, stationary vector and resolvent of
//! the capacity-`C` process from those of capacity `C - 1`.
//!
//! `Q(C) = T(C) + E_{C-1} Δ(C)` where `T(C)` keeps `Q(C-1)` in its leading
//! block, appends the row `[0 .. A-1 | C0]`, and `Δ(C) = [0 .. A0-C0 | A1]`
//! moves the old top level back to an interior level.

use crate::error::{QbdError, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::QbdBlocks;

/// Roundoff below this magnitude is clamped to zero in stationary vectors.
const CLAMP: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityLadderState {
    pub capacity: usize,
    pub pi: Vector,
    pub dev: Mat,
}

/// A perturbation `E_K P` confined to block row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockUpdate {
    pub k: usize,
    pub p: Mat,
}

impl BlockUpdate {
    /// `Δ(C)`, applied to block row `C - 1`.
    pub fn capacity_step(blocks: &QbdBlocks, capacity: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(QbdError::Parameter("capacity steps start at C = 2".into()));
        }
        let n = blocks.n;
        let mut p = Mat::zeros(n, n * (capacity + 1));
        linalg::set_block(&mut p, 0, capacity - 1, &(&blocks.a0 - &blocks.c0));
        linalg::set_block(&mut p, 0, capacity, &blocks.a1);
        Ok(BlockUpdate { k: capacity - 1, p })
    }

    fn n(&self) -> usize {
        self.p.nrows()
    }

    /// `E_K` of the right order.
    pub fn selector(&self) -> Mat {
        let n = self.n();
        let mut e = Mat::zeros(self.p.ncols(), n);
        e.view_mut((self.k * n, 0), (n, n)).fill_with_identity();
        e
    }

    /// `X E_K`: block column `K` of `x`.
    fn right_select(&self, x: &Mat) -> Mat {
        let n = self.n();
        x.columns(self.k * n, n).into_owned()
    }
}

/// `T(C)` assembled from `Q(C-1)`.
pub fn t_matrix(blocks: &QbdBlocks, q_prev: &Mat) -> Mat {
    let n = blocks.n;
    let np = q_prev.nrows();
    let mut t = Mat::zeros(np + n, np + n);
    t.view_mut((0, 0), (np, np)).copy_from(q_prev);
    t.view_mut((np, np - n), (n, n)).copy_from(&blocks.a_minus1);
    t.view_mut((np, np), (n, n)).copy_from(&blocks.c0);
    t
}

/// Group inverse of `T(C)` from `D(C-1)` and `pi(C-1)`.
pub fn t_group_inverse(dev_prev: &Mat, pi_prev: &Vector, blocks: &QbdBlocks) -> Result<Mat> {
    let n = blocks.n;
    let np = dev_prev.nrows();
    if dev_prev.ncols() != np || pi_prev.len() != np || !np.is_multiple_of(n) {
        return Err(QbdError::Structure("previous rung has inconsistent dimensions".into()));
    }
    let c0_inv = linalg::inverse(&blocks.c0, "C0")
        .map_err(|_| QbdError::Structure("C0 is singular; not a proper sub-generator".into()))?;
    // M D(C-1) only involves the last block row of D(C-1)
    let md = &blocks.a_minus1 * dev_prev.rows(np - n, n);
    let lower = &c0_inv * (md - Mat::from_element(n, 1, 1.0) * pi_prev.transpose());
    let mut x = Mat::zeros(np + n, np + n);
    x.view_mut((0, 0), (np, np)).copy_from(&(-dev_prev));
    x.view_mut((np, 0), (n, np)).copy_from(&lower);
    x.view_mut((np, np), (n, n)).copy_from(&c0_inv);
    Ok(x)
}

/// Residuals of `TXT = T`, `XTX = X`, `TX = XT`.
pub fn group_inverse_residuals(t: &Mat, x: &Mat) -> [f64; 3] {
    let tx = t * x;
    let xt = x * t;
    [(&tx * t - t).amax(), (&xt * x - x).amax(), (tx - xt).amax()]
}

fn clamp_and_normalize(mut pi: Vector) -> Result<Vector> {
    for e in pi.iter_mut() {
        if *e < 0.0 && *e >= -CLAMP {
            *e = 0.0;
        }
    }
    let total = pi.sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(QbdError::Singular("stationary normalization".into()));
    }
    pi /= total;
    if let Some(&worst) = pi.iter().find(|&&e| e < 0.0) {
        return Err(QbdError::Conditioning {
            context: "stationary vector has negative entries".into(),
            residual: worst,
        });
    }
    Ok(pi)
}

/// `pi(C) = [pi(C-1), 0] (I + E_K Δ T^#)^{-1}`, with the inverse applied
/// through an `n x n` solve.
pub fn pi_step(pi_prev: &Vector, t_sharp: &Mat, update: &BlockUpdate) -> Result<Vector> {
    let nt = t_sharp.nrows();
    let n = update.n();
    let mut phi = Vector::zeros(nt);
    phi.rows_mut(0, pi_prev.len()).copy_from(pi_prev);
    let dt = &update.p * t_sharp;
    let inner = Mat::identity(n, n) + update.right_select(&dt);
    let phi_e = Mat::from_column_slice(n, 1, phi.rows(update.k * n, n).as_slice());
    let coef = linalg::solve(&inner.transpose(), &phi_e, "stationary update")?.transpose();
    let pi = phi.transpose() - coef * dt;
    clamp_and_normalize(pi.transpose())
}

fn one_pi(pi: &Vector) -> Mat {
    linalg::ones(pi.len()) * pi.transpose()
}

/// Deviation matrix of `Q + E_K P` from the deviation matrix `dev` of `Q`,
/// with an `n x n` inner solve.
pub fn deviation_update(dev: &Mat, pi_new: &Vector, update: &BlockUpdate) -> Result<Mat> {
    let n = update.n();
    let pd = &update.p * dev;
    let inner = Mat::identity(n, n) - update.right_select(&pd);
    let x = linalg::solve(&inner, &pd, "one-block deviation update")?;
    let mut out = dev + update.right_select(dev) * x;
    let row = pi_new.transpose() * &out;
    out -= linalg::ones(pi_new.len()) * row;
    Ok(out)
}

/// Same update with the full-order inverse `(I - E_K P D)^{-1}`.
pub fn deviation_update_dense(dev: &Mat, pi_new: &Vector, update: &BlockUpdate) -> Result<Mat> {
    let nt = dev.nrows();
    let eye = Mat::identity(nt, nt);
    let inv = linalg::inverse(&(&eye - update.selector() * &update.p * dev), "dense deviation update")?;
    Ok((eye - one_pi(pi_new)) * dev * inv)
}

/// Stationary vector and deviation matrix of `Q(1)` by dense factorization.
pub fn base_state(blocks: &QbdBlocks) -> Result<CapacityLadderState> {
    let q = blocks.with_capacity(1).assemble_generator()?;
    let (v, kernel) = linalg::left_null_vector(&q, 1e-12);
    if kernel != 1 {
        return Err(QbdError::NumericalRank {
            context: "capacity-1 generator".into(),
            expected: 1,
            found: kernel,
        });
    }
    let pi = clamp_and_normalize(&v / v.sum())?;
    let w = one_pi(&pi);
    let dev = linalg::inverse(&(&w - q), "capacity-1 deviation")? - w;
    Ok(CapacityLadderState { capacity: 1, pi, dev })
}

/// One rung: capacity `prev.capacity + 1`.
pub fn ladder_step(blocks: &QbdBlocks, prev: &CapacityLadderState) -> Result<CapacityLadderState> {
    let c = prev.capacity + 1;
    let wrap = |e: QbdError| QbdError::Rung {
        rung: c,
        source: Box::new(e),
    };
    let t_sharp = t_group_inverse(&prev.dev, &prev.pi, blocks).map_err(wrap)?;
    let update = BlockUpdate::capacity_step(blocks, c).map_err(wrap)?;
    let pi = pi_step(&prev.pi, &t_sharp, &update).map_err(wrap)?;
    let dev = deviation_update(&(-t_sharp), &pi, &update).map_err(wrap)?;
    Ok(CapacityLadderState { capacity: c, pi, dev })
}

/// Iterator over the rungs `C = 1, 2, ..., blocks.capacity`.
#[derive(Debug, Clone)]
pub struct CapacityLadder<'a> {
    blocks: &'a QbdBlocks,
    state: Option<CapacityLadderState>,
    done: bool,
}

pub fn capacity_ladder(blocks: &QbdBlocks) -> CapacityLadder<'_> {
    CapacityLadder {
        blocks,
        state: None,
        done: false,
    }
}

impl Iterator for CapacityLadder<'_> {
    type Item = Result<CapacityLadderState>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let next = match &self.state {
            None => base_state(self.blocks).map_err(|e| QbdError::Rung {
                rung: 1,
                source: Box::new(e),
            }),
            Some(prev) if prev.capacity < self.blocks.capacity => ladder_step(self.blocks, prev),
            Some(_) => {
                self.done = true;
                return None;
            }
        };
        match next {
            Ok(s) => {
                self.state = Some(s.clone());
                Some(Ok(s))
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// `D(C)` and `pi(C)` for the model's capacity.
pub fn deviation_recursive(blocks: &QbdBlocks) -> Result<CapacityLadderState> {
    let mut last = None;
    for rung in capacity_ladder(blocks) {
        last = Some(rung?);
    }
    last.ok_or_else(|| QbdError::Parameter("capacity must be at least 1".into()))
}

/// `(sI - Q(C))^{-1}` and `D̃(C)(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventState {
    pub capacity: usize,
    pub resolvent: Mat,
    pub dev_transform: Mat,
}

fn shifted_inverse(m: &Mat, s: f64, what: &str) -> Result<Mat> {
    let n = m.nrows();
    linalg::inverse(&(Mat::identity(n, n) * s - m), what)
}

/// Resolvent of capacity `C` from that of capacity `C - 1`.
pub fn resolvent_step(blocks: &QbdBlocks, prev: &Mat, s: f64, capacity: usize) -> Result<Mat> {
    let n = blocks.n;
    let np = prev.nrows();
    let corner = shifted_inverse(&blocks.c0, s, "sI - C0")?;
    let mut rt = Mat::zeros(np + n, np + n);
    rt.view_mut((0, 0), (np, np)).copy_from(prev);
    let lower = &corner * &blocks.a_minus1 * prev.rows(np - n, n);
    rt.view_mut((np, 0), (n, np)).copy_from(&lower);
    rt.view_mut((np, np), (n, n)).copy_from(&corner);
    let update = BlockUpdate::capacity_step(blocks, capacity)?;
    let dr = &update.p * &rt;
    let inner = Mat::identity(n, n) - update.right_select(&dr);
    let x = linalg::solve(&inner, &dr, "resolvent update")?;
    Ok(&rt + update.right_select(&rt) * x)
}

/// Resolvent and transform of the transient deviation matrix through the
/// capacity ladder, seeded at `C = 1` by a dense solve.
pub fn resolvent_recursive(blocks: &QbdBlocks, s: f64) -> Result<ResolventState> {
    if !(s > 0.0) {
        return Err(QbdError::Parameter(format!("s must be positive (got {s})")));
    }
    let mut resolvent = shifted_inverse(
        &blocks.with_capacity(1).assemble_generator()?,
        s,
        "capacity-1 resolvent",
    )?;
    let mut pi = None;
    for rung in capacity_ladder(blocks) {
        let rung = rung?;
        if rung.capacity > 1 {
            resolvent = resolvent_step(blocks, &resolvent, s, rung.capacity).map_err(|e| QbdError::Rung {
                rung: rung.capacity,
                source: Box::new(e),
            })?;
        }
        pi = Some(rung.pi);
    }
    let pi = pi.ok_or_else(|| QbdError::Parameter("capacity must be at least 1".into()))?;
    let dev_transform = &resolvent / s - one_pi(&pi) / (s * s);
    Ok(ResolventState {
        capacity: blocks.capacity,
        resolvent,
        dev_transform,
    })
}
