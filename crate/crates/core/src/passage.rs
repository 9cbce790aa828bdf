//! Mean first passage times to a single state `(l, j)` and the asymptotic
//! deviation matrix built from them.
//!
//! Column `j` of `M_{k,l}` solves a second-order difference system whose
//! homogeneous part is spanned by `G^k` and `Ĝ^k`; splitting the levels at
//! the target gives a boundary system of order `2n`, `3n` or `4n`. Phases are
//! 0-based throughout the library.

use log::warn;

use crate::error::{QbdError, Result};
use crate::linalg::{self, Mat, Vector};
use crate::matrix_eq::{GMatrices, SolverConfig};
use crate::model::{DriftTag, QbdBlocks};
use crate::oracle;
use crate::stationary::{self, StationaryDistribution};

/// Mean first passage times to `(target_level, target_phase)` from every
/// state, one vector per level.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageColumn {
    pub target_level: usize,
    pub target_phase: usize,
    pub m: Vec<Vector>,
}

/// Blocks with the target phase row made absorbing.
#[derive(Debug, Clone, PartialEq)]
pub struct BarredBlocks {
    pub phase: usize,
    pub a_minus1: Mat,
    pub a0: Mat,
    pub a1: Mat,
    pub b0: Mat,
    pub c0: Mat,
}

impl BarredBlocks {
    pub fn new(blocks: &QbdBlocks, phase: usize) -> Result<Self> {
        check_phase(blocks, phase)?;
        let zero_row = |m: &Mat| {
            let mut out = m.clone();
            out.row_mut(phase).fill(0.0);
            out
        };
        let absorbing_row = |m: &Mat| {
            let mut out = zero_row(m);
            out[(phase, phase)] = -1.0;
            out
        };
        Ok(BarredBlocks {
            phase,
            a_minus1: zero_row(&blocks.a_minus1),
            a0: absorbing_row(&blocks.a0),
            a1: zero_row(&blocks.a1),
            b0: absorbing_row(&blocks.b0),
            c0: absorbing_row(&blocks.c0),
        })
    }
}

fn check_phase(blocks: &QbdBlocks, phase: usize) -> Result<()> {
    if phase >= blocks.n {
        return Err(QbdError::Parameter(format!(
            "phase {phase} out of range (0-based, n = {})",
            blocks.n
        )));
    }
    Ok(())
}

fn check_level(blocks: &QbdBlocks, level: usize) -> Result<()> {
    if level > blocks.capacity {
        return Err(QbdError::LevelOutOfRange {
            level,
            max: blocks.capacity,
        });
    }
    Ok(())
}

fn unit(n: usize, j: usize) -> Mat {
    let mut e = Mat::zeros(n, 1);
    e[(j, 0)] = 1.0;
    e
}

/// `μ_k(C)` for every `k = 0..=C`, as `n x 1` columns.
pub fn mu_all(gm: &GMatrices<f64>, capacity: usize) -> Vec<Mat> {
    let n = gm.g.nrows();
    let y = &gm.h0 * Mat::from_element(n, 1, 1.0);
    let mut fwd = vec![Mat::zeros(n, 1); capacity + 1];
    for k in 1..=capacity {
        fwd[k] = &y + &gm.g * &fwd[k - 1];
    }
    let mut bwd = vec![Mat::zeros(n, 1); capacity + 1];
    for k in (0..capacity).rev() {
        bwd[k] = &gm.ghat * (&y + &bwd[k + 1]);
    }
    fwd.into_iter().zip(bwd).map(|(a, b)| a + b).collect()
}

pub fn mu_k(gm: &GMatrices<f64>, capacity: usize, k: usize) -> Result<Vector> {
    if k > capacity {
        return Err(QbdError::LevelOutOfRange {
            level: k,
            max: capacity,
        });
    }
    Ok(mu_all(gm, capacity).swap_remove(k).column(0).into_owned())
}

/// `μ_k(∞)` of the unrestricted positive recurrent process.
pub fn mu_k_unbounded(gm: &GMatrices<f64>, k: usize) -> Result<Vector> {
    let n = gm.g.nrows();
    let y = &gm.h0 * Mat::from_element(n, 1, 1.0);
    let eye = Mat::identity(n, n);
    let mut acc = linalg::solve(&(&eye - &gm.ghat), &y, "I - Ĝ")? - &y;
    let mut p = y;
    for _ in 0..k {
        acc += &p;
        p = &gm.g * p;
    }
    Ok(acc.column(0).into_owned())
}

/// How the homogeneous part is split into pieces for one target level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Case {
    Bottom,
    Interior,
    BelowTop,
    Top,
}

fn case_of(l: usize, c: usize) -> Case {
    if l == 0 {
        Case::Bottom
    } else if l == c {
        Case::Top
    } else if l == c - 1 {
        Case::BelowTop
    } else {
        Case::Interior
    }
}

/// The boundary system of one passage column: `(-Z) x = rhs`, the levels
/// that `Z` lives on and the `G`/`Ĝ` factor `Z = Q̊ F`.
struct BoundarySystem {
    case: Case,
    z: Mat,
    rhs: Mat,
    levels: Vec<usize>,
    factor: Mat,
}

/// Which power sequence multiplies an unknown block of the boundary system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Carrier {
    G,
    Ghat,
    Direct,
}

fn carriers(case: Case) -> &'static [Carrier] {
    match case {
        Case::Bottom | Case::Top => &[Carrier::G, Carrier::Ghat],
        Case::BelowTop => &[Carrier::G, Carrier::Ghat, Carrier::Direct],
        Case::Interior => &[Carrier::G, Carrier::Ghat, Carrier::G, Carrier::Ghat],
    }
}

fn boundary_system(blocks: &QbdBlocks, g: &Mat, gh: &Mat, mu: &[Mat], l: usize, j: usize) -> Result<BoundarySystem> {
    let c = blocks.capacity;
    let n = blocks.n;
    let bar = BarredBlocks::new(blocks, j)?;
    let (am1, a0, a1, b0, c0) = (&blocks.a_minus1, &blocks.a0, &blocks.a1, &blocks.b0, &blocks.c0);
    let pg = linalg::power_sequence(g, c);
    let ph = linalg::power_sequence(gh, c);
    let one = Mat::from_element(n, 1, 1.0);
    let e = unit(n, j);
    let eye = Mat::identity(n, n);
    let zero = Mat::zeros(n, n);
    let pair = |a: &Mat, b: &Mat| linalg::from_blocks(&[vec![eye.clone(), a.clone()], vec![b.clone(), eye.clone()]]);

    let case = case_of(l, c);
    let sys = match case {
        Case::Bottom => BoundarySystem {
            case,
            z: linalg::from_blocks(&[
                vec![&bar.b0 + &bar.a1 * g, (&bar.b0 * gh + &bar.a1) * &ph[c - 1]],
                vec![(am1 + c0 * g) * &pg[c - 1], am1 * gh + c0],
            ]),
            rhs: linalg::vstack(&[
                &(&one - &e + &bar.b0 * &mu[0] + &bar.a1 * &mu[1]),
                &(&one + am1 * &mu[c - 1] + c0 * &mu[c]),
            ]),
            levels: vec![0, c],
            factor: pair(&ph[c], &pg[c]),
        },
        Case::Top => BoundarySystem {
            case,
            z: linalg::from_blocks(&[
                vec![b0 + a1 * g, (b0 * gh + a1) * &ph[c - 1]],
                vec![(&bar.a_minus1 + &bar.c0 * g) * &pg[c - 1], &bar.a_minus1 * gh + &bar.c0],
            ]),
            rhs: linalg::vstack(&[
                &(&one + b0 * &mu[0] + a1 * &mu[1]),
                &(&one - &e + &bar.a_minus1 * &mu[c - 1] + &bar.c0 * &mu[c]),
            ]),
            levels: vec![0, c],
            factor: pair(&ph[c], &pg[c]),
        },
        Case::BelowTop => BoundarySystem {
            case,
            z: linalg::from_blocks(&[
                vec![b0 + a1 * g, (b0 * gh + a1) * &ph[c - 2], zero.clone()],
                vec![
                    (&bar.a_minus1 + &bar.a0 * g) * &pg[c - 2],
                    &bar.a_minus1 * gh + &bar.a0,
                    bar.a1.clone(),
                ],
                vec![am1 * &pg[c - 1], am1.clone(), c0.clone()],
            ]),
            rhs: linalg::vstack(&[
                &(&one + b0 * &mu[0] + a1 * &mu[1]),
                &(&one - &e + &bar.a_minus1 * &mu[c - 2] + &bar.a0 * &mu[c - 1] + &bar.a1 * &mu[c]),
                &(&one + am1 * &mu[c - 1] + c0 * &mu[c]),
            ]),
            levels: vec![0, c - 1, c],
            factor: linalg::from_blocks(&[
                vec![eye.clone(), ph[c - 1].clone(), zero.clone()],
                vec![pg[c - 1].clone(), eye.clone(), zero.clone()],
                vec![zero.clone(), zero.clone(), eye.clone()],
            ]),
        },
        Case::Interior => {
            let r = c - l - 1;
            BoundarySystem {
                case,
                z: linalg::from_blocks(&[
                    vec![b0 + a1 * g, (b0 * gh + a1) * &ph[l - 1], zero.clone(), zero.clone()],
                    vec![
                        (&bar.a_minus1 + &bar.a0 * g) * &pg[l - 1],
                        &bar.a_minus1 * gh + &bar.a0,
                        bar.a1.clone(),
                        &bar.a1 * &ph[r],
                    ],
                    vec![am1 * &pg[l], am1.clone(), a0 + a1 * g, (a0 * gh + a1) * &ph[r - 1]],
                    vec![zero.clone(), zero.clone(), (c0 * g + am1) * &pg[r - 1], c0 + am1 * gh],
                ]),
                rhs: linalg::vstack(&[
                    &(&one + b0 * &mu[0] + a1 * &mu[1]),
                    &(&one - &e + &bar.a_minus1 * &mu[l - 1] + &bar.a0 * &mu[l] + &bar.a1 * &mu[l + 1]),
                    &(&one + am1 * &mu[l] + a0 * &mu[l + 1] + a1 * &mu[l + 2]),
                    &(&one + am1 * &mu[c - 1] + c0 * &mu[c]),
                ]),
                levels: vec![0, l, l + 1, c],
                factor: linalg::from_blocks(&[
                    vec![eye.clone(), ph[l].clone(), zero.clone(), zero.clone()],
                    vec![pg[l].clone(), eye.clone(), zero.clone(), zero.clone()],
                    vec![zero.clone(), zero.clone(), eye.clone(), ph[r].clone()],
                    vec![zero.clone(), zero.clone(), pg[r].clone(), eye.clone()],
                ]),
            }
        }
    };
    Ok(sys)
}

fn solve_boundary(z: &Mat, rhs: &Mat) -> Result<Mat> {
    linalg::solve(&(-z), rhs, "passage boundary system").map_err(|_| QbdError::NumericalRank {
        context: "passage boundary system".into(),
        expected: z.nrows(),
        found: linalg::numerical_rank(z, 1e-12 * z.nrows() as f64),
    })
}

fn check_passage_pre(blocks: &QbdBlocks, l: usize, j: usize) -> Result<()> {
    check_level(blocks, l)?;
    check_phase(blocks, j)?;
    if blocks.classify_drift()?.tag == DriftTag::NullRecurrent {
        return Err(QbdError::AsymptoticsUndefined(
            "mean first passage formulas need a non null-recurrent model".into(),
        ));
    }
    Ok(())
}

/// Passage column from the `G`/`Ĝ` boundary systems, valid for every
/// `C >= 1`.
pub fn passage_column_structured(blocks: &QbdBlocks, l: usize, j: usize, gm: &GMatrices<f64>) -> Result<PassageColumn> {
    check_passage_pre(blocks, l, j)?;
    let c = blocks.capacity;
    let n = blocks.n;
    let mu = mu_all(gm, c);
    let sys = boundary_system(blocks, &gm.g, &gm.ghat, &mu, l, j)?;
    // One of G, Ĝ is stochastic. Unknowns it carries can be huge along 1
    // while its products with 1 are exact, so those blocks are split into a
    // multiple of 1 plus a remainder, with the 1-column built from `I`.
    let stochastic = match blocks.classify_drift()?.tag {
        DriftTag::Transient => Carrier::Ghat,
        _ => Carrier::G,
    };
    let eye = Mat::identity(n, n);
    let exact = match stochastic {
        Carrier::Ghat => boundary_system(blocks, &gm.g, &eye, &mu, l, j)?.z,
        _ => boundary_system(blocks, &eye, &gm.ghat, &mu, l, j)?.z,
    };
    let kinds = carriers(sys.case);
    let ones = Mat::from_element(n, 1, 1.0);
    let mut z = sys.z.clone();
    for (b, _) in kinds.iter().enumerate().filter(|(_, &k)| k == stochastic) {
        let col = exact.columns(b * n, n) * &ones;
        z.set_column(b * n, &col.column(0));
    }
    let u = solve_boundary(&z, &sys.rhs)?;
    // Each block as (multiple of 1, remainder).
    let part = |b: usize| -> (f64, Mat) {
        let mut r = u.rows(b * n, n).into_owned();
        if kinds[b] == stochastic {
            let a = r[(0, 0)];
            r[(0, 0)] = 0.0;
            (a, r)
        } else {
            (0.0, r)
        }
    };
    let pg = linalg::power_sequence(&gm.g, c);
    let ph = linalg::power_sequence(&gm.ghat, c);
    let apply = |pow: &Mat, (a, r): &(f64, Mat)| &ones * *a + pow * r;
    let mut m: Vec<Mat> = match sys.case {
        Case::Bottom | Case::Top => {
            let (v, w) = (part(0), part(1));
            (0..=c)
                .map(|k| apply(&pg[k], &v) + apply(&ph[c - k], &w) + &mu[k])
                .collect()
        }
        Case::BelowTop => {
            let (v, w, xc) = (part(0), part(1), part(2));
            (0..=c)
                .map(|k| {
                    if k < c {
                        apply(&pg[k], &v) + apply(&ph[c - 1 - k], &w) + &mu[k]
                    } else {
                        &xc.1 + &mu[c]
                    }
                })
                .collect()
        }
        Case::Interior => {
            let (vm, wm, vp, wp) = (part(0), part(1), part(2), part(3));
            (0..=c)
                .map(|k| {
                    if k <= l {
                        apply(&pg[k], &vm) + apply(&ph[l - k], &wm) + &mu[k]
                    } else {
                        apply(&pg[k - l - 1], &vp) + apply(&ph[c - k], &wp) + &mu[k]
                    }
                })
                .collect()
        }
    };
    m[l][(j, 0)] = 0.0;
    Ok(PassageColumn {
        target_level: l,
        target_phase: j,
        m: m.into_iter().map(|v| v.column(0).into_owned()).collect(),
    })
}

/// Passage column to `(l, j)`. Capacities 1 and 2 use a direct solve on the
/// generator with the target removed; larger ones use the boundary systems.
pub fn passage_column(blocks: &QbdBlocks, l: usize, j: usize, gm: &GMatrices<f64>) -> Result<PassageColumn> {
    if blocks.capacity > 2 {
        return passage_column_structured(blocks, l, j, gm);
    }
    check_passage_pre(blocks, l, j)?;
    let n = blocks.n;
    let q = blocks.assemble_generator()?;
    let v = oracle::oracle_passage(&q, l * n + j)?;
    Ok(PassageColumn {
        target_level: l,
        target_phase: j,
        m: (0..=blocks.capacity).map(|k| v.rows(k * n, n).into_owned()).collect(),
    })
}

/// `max |Q̄ m + 1 - e_(l,j)|` where `Q̄` is the generator with the target
/// row made absorbing.
pub fn passage_residual(blocks: &QbdBlocks, col: &PassageColumn) -> Result<f64> {
    let c = blocks.capacity;
    if col.m.len() != c + 1 {
        return Err(QbdError::Parameter(
            "passage column has the wrong number of levels".into(),
        ));
    }
    let bar = BarredBlocks::new(blocks, col.target_phase)?;
    let mut worst: f64 = 0.0;
    for k in 0..=c {
        let hit = k == col.target_level;
        let pick = |plain: &Mat, barred: &Mat| if hit { barred.clone() } else { plain.clone() };
        let local = if k == 0 {
            pick(&blocks.b0, &bar.b0)
        } else if k == c {
            pick(&blocks.c0, &bar.c0)
        } else {
            pick(&blocks.a0, &bar.a0)
        };
        let mut row = &local * &col.m[k] + Vector::from_element(blocks.n, 1.0);
        if k > 0 {
            row += pick(&blocks.a_minus1, &bar.a_minus1) * &col.m[k - 1];
        }
        if k < c {
            row += pick(&blocks.a1, &bar.a1) * &col.m[k + 1];
        }
        if hit {
            row[col.target_phase] -= 1.0;
        }
        worst = worst.max(row.amax());
    }
    Ok(worst)
}

/// Generator with rate-1 absorption from `(l, j)` replacing every other
/// transition out of that state.
pub fn absorbing_generator(blocks: &QbdBlocks, l: usize, j: usize) -> Result<Mat> {
    check_level(blocks, l)?;
    check_phase(blocks, j)?;
    let mut q = blocks.assemble_generator()?;
    let row = l * blocks.n + j;
    q.row_mut(row).fill(0.0);
    q[(row, row)] = -1.0;
    Ok(q)
}

/// `max |Z - Q̊ F|` for the boundary system of target `(l, j)`, with `Q̊`
/// obtained by censoring [`absorbing_generator`] on the levels `Z` spans.
pub fn z_factorization_residual(blocks: &QbdBlocks, l: usize, j: usize, gm: &GMatrices<f64>) -> Result<f64> {
    check_passage_pre(blocks, l, j)?;
    let mu = mu_all(gm, blocks.capacity);
    let sys = boundary_system(blocks, &gm.g, &gm.ghat, &mu, l, j)?;
    let q = absorbing_generator(blocks, l, j)?;
    let censored = linalg::censor(&q, &linalg::level_indices(&sys.levels, blocks.n))?;
    Ok((censored * &sys.factor - &sys.z).amax())
}

/// Passage column of the unrestricted positive recurrent process, reported
/// for levels `0..=max_level`.
pub fn passage_column_unbounded(
    blocks: &QbdBlocks,
    l: usize,
    j: usize,
    gm: &GMatrices<f64>,
    max_level: usize,
) -> Result<PassageColumn> {
    check_phase(blocks, j)?;
    let drift = blocks.classify_drift()?;
    if drift.tag != DriftTag::PositiveRecurrent {
        return Err(QbdError::Precondition(format!(
            "unbounded passage times need a positive recurrent model (drift is {:?})",
            drift.tag
        )));
    }
    let n = blocks.n;
    let top = max_level.max(l + 2);
    let mu: Vec<Mat> = (0..=top)
        .map(|k| mu_k_unbounded(gm, k).map(|v| Mat::from_column_slice(n, 1, v.as_slice())))
        .collect::<Result<_>>()?;
    let bar = BarredBlocks::new(blocks, j)?;
    let (am1, a0, a1, b0) = (&blocks.a_minus1, &blocks.a0, &blocks.a1, &blocks.b0);
    let (g, gh) = (&gm.g, &gm.ghat);
    let one = Mat::from_element(n, 1, 1.0);
    let e = unit(n, j);
    let mut m: Vec<Mat> = if l == 0 {
        let lhs = &bar.b0 + &bar.a1 * g;
        let rhs = &one - &e + &bar.b0 * &mu[0] + &bar.a1 * &mu[1];
        let v = -linalg::solve(&lhs, &rhs, "unbounded passage boundary")?;
        let mut p = v;
        (0..=top)
            .map(|k| {
                let out = &p + &mu[k];
                p = g * &p;
                out
            })
            .collect()
    } else {
        let zero = Mat::zeros(n, n);
        let w = linalg::from_blocks(&[
            vec![b0 + a1 * g, (b0 * gh + a1) * linalg::mat_pow(gh, l - 1), zero.clone()],
            vec![
                (&bar.a_minus1 + &bar.a0 * g) * linalg::mat_pow(g, l - 1),
                &bar.a_minus1 * gh + &bar.a0,
                bar.a1.clone(),
            ],
            vec![am1 * linalg::mat_pow(g, l), am1.clone(), a0 + a1 * g],
        ]);
        let rhs = linalg::vstack(&[
            &(&one + b0 * &mu[0] + a1 * &mu[1]),
            &(&one - &e + &bar.a_minus1 * &mu[l - 1] + &bar.a0 * &mu[l] + &bar.a1 * &mu[l + 1]),
            &(&one + am1 * &mu[l] + a0 * &mu[l + 1] + a1 * &mu[l + 2]),
        ]);
        let x = solve_boundary(&w, &rhs)?;
        let (vm, wm, vp) = (
            x.rows(0, n).into_owned(),
            x.rows(n, n).into_owned(),
            x.rows(2 * n, n).into_owned(),
        );
        (0..=top)
            .map(|k| {
                if k <= l {
                    linalg::mat_pow(g, k) * &vm + linalg::mat_pow(gh, l - k) * &wm + &mu[k]
                } else {
                    linalg::mat_pow(g, k - l - 1) * &vp + &mu[k]
                }
            })
            .collect()
    };
    m.truncate(max_level + 1);
    if l <= max_level {
        m[l][(j, 0)] = 0.0;
    }
    Ok(PassageColumn {
        target_level: l,
        target_phase: j,
        m: m.into_iter().map(|v| v.column(0).into_owned()).collect(),
    })
}

/// All `n` passage columns into level `l`.
pub fn passage_columns_for_level(blocks: &QbdBlocks, l: usize, gm: &GMatrices<f64>) -> Result<Vec<PassageColumn>> {
    (0..blocks.n).map(|j| passage_column(blocks, l, j, gm)).collect()
}

/// `M_{k,l}` from the `n` columns of target level `l`.
pub fn passage_block(columns: &[PassageColumn], k: usize) -> Result<Mat> {
    let n = columns.first().map(|c| c.m[0].len()).unwrap_or(0);
    check_columns(columns, n)?;
    let mut out = Mat::zeros(n, n);
    for col in columns {
        let v = col.m.get(k).ok_or(QbdError::LevelOutOfRange {
            level: k,
            max: col.m.len() - 1,
        })?;
        out.set_column(col.target_phase, v);
    }
    Ok(out)
}

fn check_columns(columns: &[PassageColumn], n: usize) -> Result<()> {
    if columns.len() != n || n == 0 {
        return Err(QbdError::Precondition(format!(
            "need one passage column per phase ({n}), got {}",
            columns.len()
        )));
    }
    let l = columns[0].target_level;
    let mut seen = vec![false; n];
    for c in columns {
        if c.target_level != l || c.target_phase >= n || seen[c.target_phase] {
            return Err(QbdError::Precondition(
                "passage columns must cover every phase of one target level exactly once".into(),
            ));
        }
        seen[c.target_phase] = true;
    }
    Ok(())
}

/// `D_{k,l} = [1 (Σ_x pi_x M_{x,l}) - M_{k,l}] diag(pi_l)`.
pub fn deviation_block_asymptotic(pi: &StationaryDistribution, columns: &[PassageColumn], k: usize) -> Result<Mat> {
    Ok(deviation_level_blocks(pi, columns)?.swap_remove(k))
}

/// Every block `D_{k,l}`, `k = 0..=C`, of one target level.
pub fn deviation_level_blocks(pi: &StationaryDistribution, columns: &[PassageColumn]) -> Result<Vec<Mat>> {
    let n = pi.pi[0].len();
    check_columns(columns, n)?;
    let l = columns[0].target_level;
    let levels = pi.pi.len();
    if columns.iter().any(|c| c.m.len() != levels) || l >= levels {
        return Err(QbdError::Precondition(
            "passage columns do not match the stationary vector".into(),
        ));
    }
    let pil = &pi.pi[l];
    if pil.iter().any(|&p| p < 1e-300) {
        warn!("stationary mass of level {l} underflows; deviation blocks of that level lose accuracy");
    }
    let mut blocks_m = Vec::with_capacity(levels);
    for k in 0..levels {
        blocks_m.push(passage_block(columns, k)?);
    }
    let mut r = Vector::zeros(n).transpose();
    for (x, mx) in blocks_m.iter().enumerate() {
        r += pi.pi[x].transpose() * mx;
    }
    let ones = Vector::from_element(n, 1.0);
    let diag = Mat::from_diagonal(pil);
    Ok(blocks_m.iter().map(|mk| (&ones * &r - mk) * &diag).collect())
}

/// Full mean first passage matrix, assembled column by column.
pub fn passage_matrix(blocks: &QbdBlocks, gm: &GMatrices<f64>) -> Result<Mat> {
    let n = blocks.n;
    let mut out = Mat::zeros(blocks.order(), blocks.order());
    for l in 0..=blocks.capacity {
        for col in passage_columns_for_level(blocks, l, gm)? {
            for (k, v) in col.m.iter().enumerate() {
                out.view_mut((k * n, l * n + col.target_phase), (n, 1)).copy_from(v);
            }
        }
    }
    Ok(out)
}

/// Full deviation matrix from passage times.
pub fn deviation_matrix(blocks: &QbdBlocks, config: &SolverConfig) -> Result<Mat> {
    let gm = GMatrices::at_zero(blocks, config)?;
    let pi = stationary::stationary_from_g(blocks, &gm.g, &gm.ghat)?;
    deviation_matrix_with(blocks, &pi, &gm)
}

pub fn deviation_matrix_with(blocks: &QbdBlocks, pi: &StationaryDistribution, gm: &GMatrices<f64>) -> Result<Mat> {
    let mut out = Mat::zeros(blocks.order(), blocks.order());
    for l in 0..=blocks.capacity {
        let cols = passage_columns_for_level(blocks, l, gm)?;
        for (k, b) in deviation_level_blocks(pi, &cols)?.iter().enumerate() {
            linalg::set_block(&mut out, k, l, b);
        }
    }
    Ok(out)
}
