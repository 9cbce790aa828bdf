//! Level-independent finite QBD processes: block data, validation, generator
//! assembly and drift classification.
//!
//! Phases are 0-based throughout the crate. A phase numbered `j` in the
//! usual `1..=n` convention is index `j - 1` here; the CLI and the C ABI
//! take 0-based phase indices as well.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{QbdError, Result};
use crate::linalg::{self, Mat, Vector};

/// Absolute tolerance on generator row sums.
pub const CONSERVATION_TOL: f64 = 1e-12;

/// Band around zero mean drift treated as null recurrence.
pub const DEFAULT_DRIFT_TOL: f64 = 1e-10;

/// The five `n x n` blocks of a finite QBD generator together with the
/// maximal level `C`.
///
/// ```text
///        0    1    2   ...  C-1   C
///   0 [ B0   A1                      ]
///   1 [ Am1  A0   A1                 ]
///  ...          ...                  ]
///   C [                  Am1   C0    ]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct QbdBlocks {
    pub n: usize,
    pub capacity: usize,
    pub a_minus1: Mat,
    pub a0: Mat,
    pub a1: Mat,
    pub b0: Mat,
    pub c0: Mat,
}

/// Which of the five blocks a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockName {
    AMinus1,
    A0,
    A1,
    B0,
    C0,
}

impl fmt::Display for BlockName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockName::AMinus1 => "A_minus1",
            BlockName::A0 => "A0",
            BlockName::A1 => "A1",
            BlockName::B0 => "B0",
            BlockName::C0 => "C0",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Block has the wrong shape.
    Dimension {
        block: BlockName,
        rows: usize,
        cols: usize,
    },
    /// A rate that must be nonnegative is negative.
    Negative {
        block: BlockName,
        row: usize,
        col: usize,
        value: f64,
    },
    /// A row of `[B0|A1]`, `[Am1|A0|A1]` or `[Am1|C0]` does not sum to 0.
    RowSum {
        boundary: &'static str,
        row: usize,
        magnitude: f64,
    },
    NonFinite {
        block: BlockName,
        row: usize,
        col: usize,
    },
    BadSize(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { block, rows, cols } => {
                write!(f, "{block}: shape {rows}x{cols} does not match n")
            }
            Violation::Negative { block, row, col, value } => {
                write!(f, "{block}: negative rate {value:e} at ({row},{col})")
            }
            Violation::RowSum {
                boundary,
                row,
                magnitude,
            } => {
                write!(f, "{boundary}: row {row} sums to {magnitude:e} (conservativity)")
            }
            Violation::NonFinite { block, row, col } => {
                write!(f, "{block}: non-finite entry at ({row},{col})")
            }
            Violation::BadSize(msg) => f.write_str(msg),
        }
    }
}

/// Outcome of [`QbdBlocks::validate`]. Errors make the model unusable;
/// warnings (currently only reducibility) do not.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "error: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftTag {
    PositiveRecurrent,
    Transient,
    NullRecurrent,
}

/// Drift of the unrestricted process, `alpha A1 1 - alpha Am1 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftClass {
    pub tag: DriftTag,
    pub mean_drift: f64,
}

impl QbdBlocks {
    /// Builds and validates. Returns the violation list as a model error.
    pub fn new(capacity: usize, a_minus1: Mat, a0: Mat, a1: Mat, b0: Mat, c0: Mat) -> Result<Self> {
        let blocks = Self::new_unchecked(capacity, a_minus1, a0, a1, b0, c0);
        let report = blocks.validate();
        if report.is_empty() {
            Ok(blocks)
        } else {
            Err(QbdError::Model(report.to_string().trim_end().to_string()))
        }
    }

    pub fn new_unchecked(capacity: usize, a_minus1: Mat, a0: Mat, a1: Mat, b0: Mat, c0: Mat) -> Self {
        QbdBlocks {
            n: a0.nrows(),
            capacity,
            a_minus1,
            a0,
            a1,
            b0,
            c0,
        }
    }

    /// Scalar birth-death chain on `0..=capacity` with birth rate `lambda`
    /// and death rate `mu`.
    pub fn birth_death(lambda: f64, mu: f64, capacity: usize) -> Result<Self> {
        let s = |x: f64| Mat::from_element(1, 1, x);
        Self::new(capacity, s(mu), s(-lambda - mu), s(lambda), s(-lambda), s(-mu))
    }

    /// Order `n (C + 1)` of the assembled generator.
    pub fn order(&self) -> usize {
        self.n * (self.capacity + 1)
    }

    /// The same process with every rate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        QbdBlocks {
            n: self.n,
            capacity: self.capacity,
            a_minus1: &self.a_minus1 * c,
            a0: &self.a0 * c,
            a1: &self.a1 * c,
            b0: &self.b0 * c,
            c0: &self.c0 * c,
        }
    }

    /// The same blocks with a different maximal level.
    pub fn with_capacity(&self, capacity: usize) -> Self {
        QbdBlocks {
            capacity,
            ..self.clone()
        }
    }

    pub fn named(&self) -> [(BlockName, &Mat); 5] {
        [
            (BlockName::AMinus1, &self.a_minus1),
            (BlockName::A0, &self.a0),
            (BlockName::A1, &self.a1),
            (BlockName::B0, &self.b0),
            (BlockName::C0, &self.c0),
        ]
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.n;
        if n == 0 {
            report
                .violations
                .push(Violation::BadSize("n must be at least 1".into()));
        }
        if self.capacity == 0 {
            report
                .violations
                .push(Violation::BadSize("C must be at least 1".into()));
        }
        let mut shapes_ok = true;
        for (name, m) in self.named() {
            if m.nrows() != n || m.ncols() != n {
                shapes_ok = false;
                report.violations.push(Violation::Dimension {
                    block: name,
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
        }
        if !shapes_ok || n == 0 {
            return report;
        }

        for (name, m) in self.named() {
            let diagonal_free = matches!(name, BlockName::A0 | BlockName::B0 | BlockName::C0);
            for i in 0..n {
                for j in 0..n {
                    let v = m[(i, j)];
                    if !v.is_finite() {
                        report.violations.push(Violation::NonFinite {
                            block: name,
                            row: i,
                            col: j,
                        });
                    } else if v < 0.0 && !(diagonal_free && i == j) {
                        report.violations.push(Violation::Negative {
                            block: name,
                            row: i,
                            col: j,
                            value: v,
                        });
                    }
                }
            }
        }

        let rows = |parts: &[&Mat], i: usize| parts.iter().map(|m| m.row(i).sum()).sum::<f64>();
        let checks: [(&'static str, Vec<&Mat>); 3] = [
            ("[B0|A1]", vec![&self.b0, &self.a1]),
            ("[A_minus1|A0|A1]", vec![&self.a_minus1, &self.a0, &self.a1]),
            ("[A_minus1|C0]", vec![&self.a_minus1, &self.c0]),
        ];
        for (boundary, parts) in checks.iter() {
            for i in 0..n {
                let s = rows(parts, i);
                if !(s.abs() <= CONSERVATION_TOL) {
                    report.violations.push(Violation::RowSum {
                        boundary,
                        row: i,
                        magnitude: s,
                    });
                }
            }
        }

        if report.violations.is_empty() && !self.is_irreducible() {
            report.warnings.push(
                "assembled generator is reducible (stationary and deviation quantities need irreducibility)".into(),
            );
        }
        report
    }

    /// Block-tridiagonal generator of order `n (C + 1)`.
    pub fn assemble_generator(&self) -> Result<Mat> {
        let n = self.n;
        for (name, m) in self.named() {
            if m.nrows() != n || m.ncols() != n {
                return Err(QbdError::Structure(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if self.capacity == 0 {
            return Err(QbdError::Structure("C must be at least 1".into()));
        }
        let c = self.capacity;
        let mut q = Mat::zeros(self.order(), self.order());
        for k in 0..=c {
            let diag = if k == 0 {
                &self.b0
            } else if k == c {
                &self.c0
            } else {
                &self.a0
            };
            linalg::set_block(&mut q, k, k, diag);
            if k < c {
                linalg::set_block(&mut q, k, k + 1, &self.a1);
            }
            if k > 0 {
                linalg::set_block(&mut q, k, k - 1, &self.a_minus1);
            }
        }
        Ok(q)
    }

    /// Strong connectivity of the nonzero pattern of the generator.
    pub fn is_irreducible(&self) -> bool {
        match self.assemble_generator() {
            Ok(q) => pattern_is_strongly_connected(&q),
            Err(_) => false,
        }
    }

    /// `A = Am1 + A0 + A1`, the phase generator of the unrestricted process.
    pub fn phase_generator(&self) -> Mat {
        &self.a_minus1 + &self.a0 + &self.a1
    }

    /// Stationary vector `alpha` of the phase generator.
    pub fn phase_stationary(&self) -> Result<Vector> {
        let a = self.phase_generator();
        if !pattern_is_strongly_connected(&a) {
            return Err(QbdError::Model("phase generator A = Am1 + A0 + A1 is reducible".into()));
        }
        let n = self.n;
        let mut m = a.transpose();
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut rhs = Mat::zeros(n, 1);
        rhs[(n - 1, 0)] = 1.0;
        let alpha = linalg::solve(&m, &rhs, "phase stationary vector")
            .map_err(|_| QbdError::Model("phase stationary vector solve is singular".into()))?;
        Ok(alpha.column(0).into_owned())
    }

    pub fn classify_drift(&self) -> Result<DriftClass> {
        self.classify_drift_with(DEFAULT_DRIFT_TOL)
    }

    pub fn classify_drift_with(&self, tol: f64) -> Result<DriftClass> {
        let alpha = self.phase_stationary()?;
        let one = linalg::ones(self.n);
        let up = alpha.dot(&(&self.a1 * &one));
        let down = alpha.dot(&(&self.a_minus1 * &one));
        let mean_drift = up - down;
        let tag = if mean_drift.abs() <= tol {
            DriftTag::NullRecurrent
        } else if mean_drift > 0.0 {
            DriftTag::Transient
        } else {
            DriftTag::PositiveRecurrent
        };
        Ok(DriftClass { tag, mean_drift })
    }

    pub fn from_json_str(text: &str) -> Result<(Self, Option<RewardSpec>)> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model()
    }

    pub fn from_json_file(path: &Path) -> Result<(Self, Option<RewardSpec>)> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_model_file(&self, rewards: Option<&RewardSpec>) -> ModelFile {
        ModelFile {
            n: self.n,
            capacity: self.capacity,
            blocks: FileBlocks {
                a_minus1: rows_of(&self.a_minus1),
                a0: rows_of(&self.a0),
                a1: rows_of(&self.a1),
                b0: rows_of(&self.b0),
                c0: rows_of(&self.c0),
            },
            reward: rewards.map(|r| FileReward {
                g: r.g.iter().map(|v| v.iter().copied().collect()).collect(),
            }),
        }
    }

    pub fn to_json(&self, rewards: Option<&RewardSpec>) -> String {
        serde_json::to_string_pretty(&self.to_model_file(rewards)).expect("model serializes")
    }
}

fn pattern_is_strongly_connected(q: &Mat) -> bool {
    let n = q.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * 4);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && q[(i, j)] != 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    kosaraju_scc(&g).len() == 1
}

/// Reward (or loss) rates per level: `g[k]` has one entry per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    pub g: Vec<Vector>,
}

impl RewardSpec {
    pub fn new(g: Vec<Vector>, blocks: &QbdBlocks) -> Result<Self> {
        let spec = RewardSpec { g };
        spec.check(blocks)?;
        Ok(spec)
    }

    pub fn zeros(blocks: &QbdBlocks) -> Self {
        RewardSpec {
            g: vec![Vector::zeros(blocks.n); blocks.capacity + 1],
        }
    }

    pub fn check(&self, blocks: &QbdBlocks) -> Result<()> {
        if self.g.len() != blocks.capacity + 1 {
            return Err(QbdError::Parameter(format!(
                "reward has {} levels, expected {}",
                self.g.len(),
                blocks.capacity + 1
            )));
        }
        for (k, v) in self.g.iter().enumerate() {
            if v.len() != blocks.n {
                return Err(QbdError::Parameter(format!(
                    "reward vector at level {k} has length {}, expected {}",
                    v.len(),
                    blocks.n
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(QbdError::Parameter(format!("reward at level {k} is not finite")));
            }
        }
        Ok(())
    }

    /// Level-major stacking into one vector of length `n (C + 1)`.
    pub fn stacked(&self) -> Vector {
        let n = self.g.first().map_or(0, |v| v.len());
        Vector::from_iterator(n * self.g.len(), self.g.iter().flat_map(|v| v.iter().copied()))
    }
}

/// On-disk model layout (row-major nested arrays).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    #[serde(rename = "C")]
    pub capacity: usize,
    pub blocks: FileBlocks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<FileReward>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileBlocks {
    #[serde(rename = "A_minus1")]
    pub a_minus1: Vec<Vec<f64>>,
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<f64>>,
    #[serde(rename = "A1")]
    pub a1: Vec<Vec<f64>>,
    #[serde(rename = "B0")]
    pub b0: Vec<Vec<f64>>,
    #[serde(rename = "C0")]
    pub c0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileReward {
    pub g: Vec<Vec<f64>>,
}

impl ModelFile {
    /// Blocks without the validation step, for reporting every violation.
    pub fn blocks_unchecked(&self) -> Result<QbdBlocks> {
        let n = self.n;
        let m = |name: &str, rows: &[Vec<f64>]| matrix_from_rows(name, rows, n);
        Ok(QbdBlocks::new_unchecked(
            self.capacity,
            m("A_minus1", &self.blocks.a_minus1)?,
            m("A0", &self.blocks.a0)?,
            m("A1", &self.blocks.a1)?,
            m("B0", &self.blocks.b0)?,
            m("C0", &self.blocks.c0)?,
        ))
    }

    pub fn into_model(self) -> Result<(QbdBlocks, Option<RewardSpec>)> {
        let raw = self.blocks_unchecked()?;
        let report = raw.validate();
        if !report.is_empty() {
            return Err(QbdError::Model(report.to_string().trim_end().to_string()));
        }
        let blocks = raw;
        let reward = match self.reward {
            Some(r) => Some(RewardSpec::new(
                r.g.into_iter().map(Vector::from_vec).collect(),
                &blocks,
            )?),
            None => None,
        };
        Ok((blocks, reward))
    }
}

pub(crate) fn matrix_from_rows(name: &str, rows: &[Vec<f64>], n: usize) -> Result<Mat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(QbdError::Structure(format!("{name} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub(crate) fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
