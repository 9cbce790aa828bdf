//! MAP/PH/1/C queue as a QBD, plus the revenue reward vectors used with it.
//!
//! Phases are `(arrival phase, service phase)` with the arrival phase as the
//! outer Kronecker factor. An empty queue keeps its service phase frozen.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QbdError, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{self, QbdBlocks, RewardSpec};

const TOL: f64 = 1e-12;

/// Markovian arrival process.
#[derive(Debug, Clone, PartialEq)]
pub struct MapParams {
    pub d0: Mat,
    pub d1: Mat,
}

/// Phase-type service distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PhParams {
    pub tau: Vector,
    pub t: Mat,
}

fn bad(msg: String) -> QbdError {
    QbdError::Parameter(msg)
}

impl MapParams {
    pub fn new(d0: Mat, d1: Mat) -> Result<Self> {
        let m = MapParams { d0, d1 };
        m.check()?;
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.d0.nrows()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.d0.nrows();
        if !self.d0.is_square() || self.d1.shape() != (n, n) || n == 0 {
            return Err(bad("MAP matrices D0, D1 must be square and of equal order".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && self.d0[(i, j)] < 0.0 {
                    return Err(bad(format!("D0[{i}][{j}] is negative")));
                }
                if self.d1[(i, j)] < 0.0 {
                    return Err(bad(format!("D1[{i}][{j}] is negative")));
                }
            }
            let row = self.d0.row(i).sum() + self.d1.row(i).sum();
            if row.abs() > TOL * self.d0[(i, i)].abs().max(1.0) {
                return Err(bad(format!("row {i} of D0 + D1 sums to {row:e}, not 0")));
            }
        }
        Ok(())
    }
}

impl PhParams {
    pub fn new(tau: Vector, t: Mat) -> Result<Self> {
        let p = PhParams { tau, t };
        p.check()?;
        Ok(p)
    }

    pub fn order(&self) -> usize {
        self.t.nrows()
    }

    /// Exit rates `-T 1`.
    pub fn exit_rates(&self) -> Vector {
        -(&self.t * linalg::ones(self.order()))
    }

    pub fn check(&self) -> Result<()> {
        let n = self.t.nrows();
        if !self.t.is_square() || self.tau.len() != n || n == 0 {
            return Err(bad("PH parameters need tau of length n and square T of order n".into()));
        }
        if self.tau.iter().any(|&x| x < 0.0) || (self.tau.sum() - 1.0).abs() > TOL {
            return Err(bad("tau must be a probability vector".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && self.t[(i, j)] < 0.0 {
                    return Err(bad(format!("T[{i}][{j}] is negative")));
                }
            }
        }
        if self.exit_rates().iter().any(|&x| x < -TOL) {
            return Err(bad("T has a positive row sum".into()));
        }
        Ok(())
    }
}

/// Blocks of the MAP/PH/1/C queue.
pub fn build_blocks(map: &MapParams, ph: &PhParams, capacity: usize) -> Result<QbdBlocks> {
    map.check()?;
    ph.check()?;
    let i1 = Mat::identity(map.order(), map.order());
    let i2 = Mat::identity(ph.order(), ph.order());
    let service_restart = Mat::from_column_slice(ph.order(), 1, ph.exit_rates().as_slice()) * ph.tau.transpose();
    QbdBlocks::new(
        capacity,
        linalg::kron(&i1, &service_restart),
        linalg::kron_sum(&map.d0, &ph.t),
        linalg::kron(&map.d1, &i2),
        linalg::kron(&map.d0, &i2),
        linalg::kron_sum(&(&map.d0 + &map.d1), &ph.t),
    )
}

/// Revenue lost on arrivals rejected at a full buffer: `g_C = θ A1 1`.
pub fn lost_revenue_rewards(blocks: &QbdBlocks, theta: f64) -> Result<RewardSpec> {
    check_rate("theta", theta)?;
    let mut g = RewardSpec::zeros(blocks);
    g.g[blocks.capacity] = &blocks.a1 * linalg::ones(blocks.n) * theta;
    Ok(g)
}

/// Revenue `θ` per accepted customer plus `γ` per customer per unit time.
pub fn gained_revenue_rewards(blocks: &QbdBlocks, theta: f64, gamma: f64) -> Result<RewardSpec> {
    check_rate("theta", theta)?;
    check_rate("gamma", gamma)?;
    let ones = linalg::ones(blocks.n);
    let entry = &blocks.a1 * &ones * theta;
    let c = blocks.capacity;
    let g = (0..=c)
        .map(|k| {
            let holding = &ones * (gamma * k as f64);
            if k < c {
                &entry + holding
            } else {
                holding
            }
        })
        .collect();
    RewardSpec::new(g, blocks)
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(bad(format!("{name} must be a nonnegative number (got {v})")));
    }
    Ok(())
}

/// Two-phase MAP with mean arrival rate above the service rate of the
/// two-phase PH; the queue is mostly full.
pub fn example_high_blocking() -> (MapParams, PhParams) {
    let d0 = Mat::from_row_slice(2, 2, &[-10.0, 2.0, 1.0, -6.0]);
    let d1 = Mat::from_row_slice(2, 1, &[8.0, 5.0]) * Mat::from_row_slice(1, 2, &[0.8, 0.2]);
    let tau = Vector::from_vec(vec![0.4, 0.6]);
    let t = Mat::from_row_slice(2, 2, &[-3.0, 2.0, 1.0, -4.0]);
    (MapParams { d0, d1 }, PhParams { tau, t })
}

/// The same two distributions with the roles of arrivals and services
/// exchanged; the queue is mostly empty.
pub fn example_low_blocking() -> (MapParams, PhParams) {
    let (map, ph) = example_high_blocking();
    let exit = Mat::from_column_slice(2, 1, ph.exit_rates().as_slice());
    let arrivals = MapParams {
        d0: ph.t.clone(),
        d1: exit * ph.tau.transpose(),
    };
    let service = PhParams {
        tau: Vector::from_vec(vec![0.8, 0.2]),
        t: map.d0,
    };
    (arrivals, service)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MapFile {
    #[serde(rename = "D0")]
    pub d0: Vec<Vec<f64>>,
    #[serde(rename = "D1")]
    pub d1: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PhFile {
    pub tau: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
}

/// MAP/PH parameter file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MapPhFile {
    pub map: MapFile,
    pub ph: PhFile,
    #[serde(rename = "C")]
    pub capacity: usize,
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    let n = rows.len();
    model::matrix_from_rows(what, rows, n)
}

impl MapPhFile {
    pub fn params(&self) -> Result<(MapParams, PhParams)> {
        let map = MapParams::new(square(&self.map.d0, "D0")?, square(&self.map.d1, "D1")?)?;
        let ph = PhParams::new(Vector::from_vec(self.ph.tau.clone()), square(&self.ph.t, "T")?)?;
        Ok((map, ph))
    }

    pub fn build(&self) -> Result<QbdBlocks> {
        let (map, ph) = self.params()?;
        build_blocks(&map, &ph, self.capacity)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_params(map: &MapParams, ph: &PhParams, capacity: usize) -> Self {
        MapPhFile {
            map: MapFile {
                d0: model::rows_of(&map.d0),
                d1: model::rows_of(&map.d1),
            },
            ph: PhFile {
                tau: ph.tau.iter().copied().collect(),
                t: model::rows_of(&ph.t),
            },
            capacity,
        }
    }
}
