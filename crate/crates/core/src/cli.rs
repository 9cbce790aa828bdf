//! `qbdr` command-line front end. Every command writes CSV with a header row
//! to `--output` or stdout. Levels are 0-based, phases 1-based.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::bench::{self, TimingOptions};
use crate::error::{QbdError, Result};
use crate::laplace;
use crate::linalg::{self, Mat, Vector};
use crate::mapph::{self, MapPhFile};
use crate::matrix_eq::{Algorithm, GMatrices, SolverConfig};
use crate::model::{ModelFile, QbdBlocks, RewardSpec};
use crate::oracle::{self, OracleConfig};
use crate::passage;
use crate::perturbation;
use crate::stationary::{self, StationaryDistribution};
use crate::transform::{self, TimeDomainConfig, TransformContext};

#[derive(Debug, Parser)]
#[command(
    name = "qbdr",
    version,
    about = "Rewards, deviation matrices and passage times of finite QBD processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StationaryMethod {
    Rmatrix,
    Perturb,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeviationMethod {
    Diffeq,
    Perturb,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RewardMethod {
    Diffeq,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PassageMethod {
    Structured,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GAlgorithm {
    Lr,
    Fi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RewardKind {
    /// The `reward` section of the model file.
    File,
    /// `theta A1 1` at the top level only.
    Lost,
    /// `theta A1 1 + gamma k 1` below the top level, `gamma C 1` at it.
    Gained,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file and list every violation.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Stationary distribution.
    Stationary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "rmatrix")]
        method: StationaryMethod,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// G(s), Ĝ(s) and H0(s).
    Gmatrix {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, value_enum, default_value = "lr")]
        algorithm: GAlgorithm,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Expected cumulative reward R_k(t), weighted by the initial phase law,
    /// or its transform at --s.
    Reward {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with_all = ["t_grid", "s"])]
        t: Option<f64>,
        /// Inclusive grid `start:stop:step`.
        #[arg(long, value_parser = parse_grid, conflicts_with = "s")]
        t_grid: Option<TimeGrid>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, value_enum, default_value = "file")]
        reward: RewardKind,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Initial phase distribution, comma separated; defaults to the
        /// stationary law of A_minus1 + A0 + A1.
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "diffeq")]
        method: RewardMethod,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Deviation matrix D, D(t) with --t, or its transform with --s.
    Deviation {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "diffeq")]
        method: DeviationMethod,
        #[arg(long, conflicts_with = "s")]
        t: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
        /// Single block `K,L`.
        #[arg(long, value_parser = parse_block)]
        block: Option<(usize, usize)>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Mean first passage times to (level, phase) from every state.
    Passage {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        level: usize,
        /// 1-based phase.
        #[arg(long)]
        phase: usize,
        #[arg(long, value_enum, default_value = "structured")]
        method: PassageMethod,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// CPU time of the last deviation block column, both methods, on random
    /// models.
    Bench {
        /// Phase counts: `a:b[:step]` or a comma list.
        #[arg(long, default_value = "2:5")]
        n: String,
        /// Capacities: `a:b[:step]` or a comma list.
        #[arg(long = "capacity", default_value = "5:100:5")]
        capacity: String,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Keep repeating until this much CPU time has accumulated.
        #[arg(long, default_value_t = 0.0)]
        min_seconds: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a MAP/PH/1/C model file from a parameter file.
    MapphBuild {
        #[arg(long)]
        params: PathBuf,
        /// Attach lost-revenue rewards with this per-customer value.
        #[arg(long, conflicts_with = "gamma")]
        theta: Option<f64>,
        /// Attach gained-revenue rewards (entry value --theta-gain).
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0.0, requires = "gamma")]
        theta_gain: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Parsed `--t-grid` points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(pub Vec<f64>);

fn parse_grid(text: &str) -> std::result::Result<TimeGrid, String> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [a, b, step] = parts[..] else {
        return Err("expected start:stop:step".into());
    };
    if !(a >= 0.0) || !(b >= a) || !(step > 0.0) || !b.is_finite() {
        return Err("need 0 <= start <= stop and step > 0".into());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok(TimeGrid((0..=count).map(|i| a + i as f64 * step).collect()))
}

fn parse_block(text: &str) -> std::result::Result<(usize, usize), String> {
    let (k, l) = text.split_once(',').ok_or("expected K,L")?;
    Ok((
        k.trim().parse().map_err(|e| format!("{k:?}: {e}"))?,
        l.trim().parse().map_err(|e| format!("{l:?}: {e}"))?,
    ))
}

/// `a:b`, `a:b:step` or `x,y,z`.
pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    let bad = || QbdError::Parse(format!("bad integer list {text:?}"));
    if text.contains(':') {
        let parts: Vec<usize> = text
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (a, b, step) = match parts[..] {
            [a, b] => (a, b, 1),
            [a, b, s] => (a, b, s),
            _ => return Err(bad()),
        };
        if step == 0 || b < a {
            return Err(bad());
        }
        Ok((a..=b).step_by(step).collect())
    } else {
        text.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
    }
}

fn sink(output: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Csv(csv::Writer<Box<dyn Write>>);

impl Csv {
    fn new(output: &Option<PathBuf>, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(sink(output)?);
        w.write_record(header).map_err(csv_err)?;
        Ok(Csv(w))
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        self.0
            .write_record(fields.into_iter().collect::<Vec<_>>())
            .map_err(csv_err)
    }

    fn finish(mut self) -> Result<()> {
        self.0.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> QbdError {
    QbdError::Io(io::Error::other(e.to_string()))
}

fn load(path: &Path) -> Result<(QbdBlocks, Option<RewardSpec>)> {
    QbdBlocks::from_json_file(path)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(QbdError::Parameter(format!("{name} must be positive (got {v})")));
    }
    Ok(v)
}

fn phase_arg(blocks: &QbdBlocks, phase: usize) -> Result<usize> {
    if phase == 0 || phase > blocks.n {
        return Err(QbdError::Parameter(format!(
            "phase must be in 1..={} (got {phase})",
            blocks.n
        )));
    }
    Ok(phase - 1)
}

fn level_arg(blocks: &QbdBlocks, level: usize) -> Result<usize> {
    if level > blocks.capacity {
        return Err(QbdError::LevelOutOfRange {
            level,
            max: blocks.capacity,
        });
    }
    Ok(level)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { model, output } => cmd_validate(&model, &output),
        Command::Stationary { model, method, output } => cmd_stationary(&model, method, &output),
        Command::Gmatrix {
            model,
            s,
            algorithm,
            output,
        } => cmd_gmatrix(&model, s, algorithm, &output),
        Command::Reward {
            model,
            t,
            t_grid,
            s,
            level,
            reward,
            theta,
            gamma,
            alpha,
            method,
            output,
        } => {
            let (blocks, file_reward) = load(&model)?;
            let g = match reward {
                RewardKind::File => file_reward.ok_or_else(|| {
                    QbdError::Precondition("model file has no reward section; pass --reward lost|gained".into())
                })?,
                RewardKind::Lost => mapph::lost_revenue_rewards(&blocks, theta)?,
                RewardKind::Gained => mapph::gained_revenue_rewards(&blocks, theta, gamma)?,
            };
            let alpha = match alpha {
                Some(a) => check_alpha(&blocks, a)?,
                None => blocks.phase_stationary()?,
            };
            let levels: Vec<usize> = match level {
                Some(k) => vec![level_arg(&blocks, k)?],
                None => (0..=blocks.capacity).collect(),
            };
            let times = match (t, t_grid, s) {
                (Some(t), None, None) => Some(vec![t]),
                (None, Some(grid), None) => Some(grid.0),
                (None, None, Some(_)) => None,
                _ => return Err(QbdError::Parameter("give exactly one of --t, --t-grid, --s".into())),
            };
            match times {
                Some(ts) => cmd_reward(&blocks, &g, &alpha, &ts, &levels, method, &output),
                None => cmd_reward_transform(&blocks, &g, &alpha, s.unwrap_or_default(), &levels, method, &output),
            }
        }
        Command::Deviation {
            model,
            method,
            t,
            s,
            block,
            output,
        } => cmd_deviation(&model, method, t, s, block, &output),
        Command::Passage {
            model,
            level,
            phase,
            method,
            output,
        } => cmd_passage(&model, level, phase, method, &output),
        Command::Bench {
            n,
            capacity,
            reps,
            min_seconds,
            seed,
            output,
        } => {
            let ns = parse_usize_list(&n)?;
            let cs = parse_usize_list(&capacity)?;
            let opts = TimingOptions { reps, min_seconds };
            let records = bench::run_bench(&ns, &cs, &opts, seed)?;
            bench::write_csv(&records, sink(&output)?)
        }
        Command::MapphBuild {
            params,
            theta,
            gamma,
            theta_gain,
            output,
        } => cmd_mapph_build(&params, theta, gamma.map(|g| (theta_gain, g)), &output),
    }
}

fn check_alpha(blocks: &QbdBlocks, a: Vec<f64>) -> Result<Vector> {
    if a.len() != blocks.n || a.iter().any(|&x| !(x >= 0.0)) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(QbdError::Parameter(format!(
            "--alpha must be a probability vector of length {}",
            blocks.n
        )));
    }
    Ok(Vector::from_vec(a))
}

pub fn cmd_validate(model: &Path, output: &Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(model)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    let blocks = file.blocks_unchecked()?;
    let report = blocks.validate();
    let mut out = Csv::new(output, &["severity", "message"])?;
    for v in &report.violations {
        out.row(["error".to_string(), v.to_string()])?;
    }
    for w in &report.warnings {
        out.row(["warning".to_string(), w.clone()])?;
    }
    out.finish()?;
    if !report.is_empty() {
        return Err(QbdError::Model(format!("{} violation(s)", report.violations.len())));
    }
    Ok(())
}

pub fn stationary_by(blocks: &QbdBlocks, method: StationaryMethod) -> Result<StationaryDistribution> {
    match method {
        StationaryMethod::Rmatrix => stationary::stationary_rmatrix(blocks),
        StationaryMethod::Perturb => Ok(StationaryDistribution::from_stacked(
            &perturbation::deviation_recursive(blocks)?.pi,
            blocks.n,
        )),
        StationaryMethod::Oracle => Ok(StationaryDistribution::from_stacked(
            &oracle::oracle_stationary(&blocks.assemble_generator()?)?,
            blocks.n,
        )),
    }
}

pub fn cmd_stationary(model: &Path, method: StationaryMethod, output: &Option<PathBuf>) -> Result<()> {
    let (blocks, _) = load(model)?;
    let st = stationary_by(&blocks, method)?;
    let mut out = Csv::new(output, &["level", "phase", "probability"])?;
    for (k, v) in st.pi.iter().enumerate() {
        for (i, p) in v.iter().enumerate() {
            out.row([k.to_string(), (i + 1).to_string(), p.to_string()])?;
        }
    }
    out.finish()
}

fn cmd_gmatrix(model: &Path, s: f64, algorithm: GAlgorithm, output: &Option<PathBuf>) -> Result<()> {
    let (blocks, _) = load(model)?;
    let cfg = SolverConfig {
        algorithm: match algorithm {
            GAlgorithm::Lr => Algorithm::LogarithmicReduction,
            GAlgorithm::Fi => Algorithm::FunctionalIteration,
        },
        ..SolverConfig::default()
    };
    let gm = GMatrices::compute(&blocks, s, &cfg)?;
    let mut out = Csv::new(output, &["matrix", "row", "col", "value"])?;
    for (name, m) in [("G", &gm.g), ("Ghat", &gm.ghat), ("H0", &gm.h0)] {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.row([
                    name.to_string(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    m[(i, j)].to_string(),
                ])?;
            }
        }
    }
    out.finish()
}

/// `alpha R_k(t)` for each requested `t` and level.
pub fn reward_values(
    blocks: &QbdBlocks,
    g: &RewardSpec,
    alpha: &Vector,
    times: &[f64],
    levels: &[usize],
    method: RewardMethod,
) -> Result<Vec<(f64, usize, f64)>> {
    let n = blocks.n;
    let mut rows = Vec::new();
    let q = match method {
        RewardMethod::Oracle => Some(blocks.assemble_generator()?),
        RewardMethod::Diffeq => None,
    };
    for &t in times {
        if !(t >= 0.0) {
            return Err(QbdError::Parameter(format!("t must be nonnegative (got {t})")));
        }
        let per_level: Vec<Vector> = match &q {
            None => transform::reward_time_levels(blocks, g, t, &TimeDomainConfig::default())?,
            Some(q) => {
                let r = oracle::oracle_reward(q, &g.stacked(), t, &OracleConfig::default())?;
                (0..=blocks.capacity).map(|k| r.rows(k * n, n).into_owned()).collect()
            }
        };
        for &k in levels {
            rows.push((t, k, alpha.dot(&per_level[k])));
        }
    }
    Ok(rows)
}

fn cmd_reward(
    blocks: &QbdBlocks,
    g: &RewardSpec,
    alpha: &Vector,
    times: &[f64],
    levels: &[usize],
    method: RewardMethod,
    output: &Option<PathBuf>,
) -> Result<()> {
    let rows = reward_values(blocks, g, alpha, times, levels, method)?;
    let mut out = Csv::new(output, &["t", "level", "value"])?;
    for (t, k, v) in rows {
        out.row([t.to_string(), k.to_string(), v.to_string()])?;
    }
    out.finish()
}

fn cmd_reward_transform(
    blocks: &QbdBlocks,
    g: &RewardSpec,
    alpha: &Vector,
    s: f64,
    levels: &[usize],
    method: RewardMethod,
    output: &Option<PathBuf>,
) -> Result<()> {
    let s = positive("s", s)?;
    let n = blocks.n;
    let per_level: Vec<Vector> = match method {
        RewardMethod::Diffeq => {
            let ctx = TransformContext::<f64>::new(blocks, s, &SolverConfig::default())?;
            transform::reward_transform(&ctx, g)?
        }
        RewardMethod::Oracle => {
            let r = oracle::oracle_reward_transform(&blocks.assemble_generator()?, &g.stacked(), s)?;
            (0..=blocks.capacity).map(|k| r.rows(k * n, n).into_owned()).collect()
        }
    };
    let mut out = Csv::new(output, &["s", "level", "value"])?;
    for &k in levels {
        out.row([s.to_string(), k.to_string(), alpha.dot(&per_level[k]).to_string()])?;
    }
    out.finish()
}

/// The requested deviation quantity as a full matrix, or as the single
/// block `(k, l)` when `block` is given.
pub fn deviation_values(
    blocks: &QbdBlocks,
    method: DeviationMethod,
    t: Option<f64>,
    s: Option<f64>,
    block: Option<(usize, usize)>,
) -> Result<Mat> {
    if let Some((k, l)) = block {
        level_arg(blocks, k)?;
        level_arg(blocks, l)?;
    }
    let n = blocks.n;
    let pick = |m: Mat| match block {
        Some((k, l)) => linalg::block(&m, k, l, n),
        None => m,
    };
    match (t, s) {
        (None, None) => match method {
            DeviationMethod::Diffeq => {
                let gm = GMatrices::at_zero(blocks, &SolverConfig::default())?;
                let pi = stationary::stationary_from_g(blocks, &gm.g, &gm.ghat)?;
                match block {
                    Some((k, l)) => {
                        let cols = passage::passage_columns_for_level(blocks, l, &gm)?;
                        passage::deviation_block_asymptotic(&pi, &cols, k)
                    }
                    None => passage::deviation_matrix_with(blocks, &pi, &gm),
                }
            }
            DeviationMethod::Perturb => Ok(pick(perturbation::deviation_recursive(blocks)?.dev)),
            DeviationMethod::Oracle => {
                let q = blocks.assemble_generator()?;
                let pi = oracle::oracle_stationary(&q)?;
                Ok(pick(oracle::oracle_deviation(&q, &pi)?))
            }
        },
        (Some(t), None) => {
            if !(t >= 0.0) {
                return Err(QbdError::Parameter(format!("t must be nonnegative (got {t})")));
            }
            match method {
                DeviationMethod::Diffeq => {
                    let pi = stationary::stationary_auto(blocks)?;
                    let cfg = TimeDomainConfig::default();
                    match block {
                        Some((k, l)) if t > 0.0 => laplace::invert_laplace(
                            |z: Complex64| {
                                TransformContext::<Complex64>::new(blocks, z, &cfg.solver)?
                                    .deviation_transform_column(&pi, l)
                                    .map(|mut c| c.swap_remove(k))
                            },
                            t,
                            &cfg.inversion,
                        ),
                        _ => Ok(pick(transform::transient_deviation(blocks, &pi, t, &cfg)?)),
                    }
                }
                DeviationMethod::Perturb => Err(QbdError::Parameter(
                    "the capacity ladder gives D(t) only in the transform domain; use --s".into(),
                )),
                DeviationMethod::Oracle => {
                    let q = blocks.assemble_generator()?;
                    let pi = oracle::oracle_stationary(&q)?;
                    Ok(pick(oracle::oracle_transient_deviation(
                        &q,
                        &pi,
                        t,
                        &OracleConfig::default(),
                    )?))
                }
            }
        }
        (None, Some(s)) => {
            let s = positive("s", s)?;
            match method {
                DeviationMethod::Diffeq => {
                    let pi = stationary::stationary_auto(blocks)?;
                    let ctx = TransformContext::<f64>::new(blocks, s, &SolverConfig::default())?;
                    match block {
                        Some((k, l)) => transform::deviation_transform_block(&ctx, &pi, k, l),
                        None => ctx.deviation_transform_full(&pi),
                    }
                }
                DeviationMethod::Perturb => Ok(pick(perturbation::resolvent_recursive(blocks, s)?.dev_transform)),
                DeviationMethod::Oracle => {
                    let q = blocks.assemble_generator()?;
                    let pi = oracle::oracle_stationary(&q)?;
                    Ok(pick(oracle::oracle_deviation_transform(&q, &pi, s)?))
                }
            }
        }
        (Some(_), Some(_)) => Err(QbdError::Parameter("give at most one of --t and --s".into())),
    }
}

fn cmd_deviation(
    model: &Path,
    method: DeviationMethod,
    t: Option<f64>,
    s: Option<f64>,
    block: Option<(usize, usize)>,
    output: &Option<PathBuf>,
) -> Result<()> {
    let (blocks, _) = load(model)?;
    let m = deviation_values(&blocks, method, t, s, block)?;
    let n = blocks.n;
    let (row0, col0) = block.map(|(k, l)| (k * n, l * n)).unwrap_or((0, 0));
    let mut out = Csv::new(output, &["row_level", "row_phase", "col_level", "col_phase", "value"])?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let (gi, gj) = (row0 + i, col0 + j);
            out.row([
                (gi / n).to_string(),
                (gi % n + 1).to_string(),
                (gj / n).to_string(),
                (gj % n + 1).to_string(),
                m[(i, j)].to_string(),
            ])?;
        }
    }
    out.finish()
}

pub fn passage_values(blocks: &QbdBlocks, level: usize, phase: usize, method: PassageMethod) -> Result<Vec<Vector>> {
    let l = level_arg(blocks, level)?;
    let j = phase_arg(blocks, phase)?;
    match method {
        PassageMethod::Structured => {
            let gm = GMatrices::at_zero(blocks, &SolverConfig::default())?;
            Ok(passage::passage_column(blocks, l, j, &gm)?.m)
        }
        PassageMethod::Oracle => {
            let n = blocks.n;
            let v = oracle::oracle_passage(&blocks.assemble_generator()?, l * n + j)?;
            Ok((0..=blocks.capacity).map(|k| v.rows(k * n, n).into_owned()).collect())
        }
    }
}

fn cmd_passage(
    model: &Path,
    level: usize,
    phase: usize,
    method: PassageMethod,
    output: &Option<PathBuf>,
) -> Result<()> {
    let (blocks, _) = load(model)?;
    let m = passage_values(&blocks, level, phase, method)?;
    let mut out = Csv::new(output, &["level", "phase", "mean_time"])?;
    for (k, v) in m.iter().enumerate() {
        for (i, x) in v.iter().enumerate() {
            out.row([k.to_string(), (i + 1).to_string(), x.to_string()])?;
        }
    }
    out.finish()
}

fn cmd_mapph_build(
    params: &Path,
    theta: Option<f64>,
    gained: Option<(f64, f64)>,
    output: &Option<PathBuf>,
) -> Result<()> {
    let file = MapPhFile::from_json_file(params)?;
    let blocks = file.build()?;
    let rewards = match (theta, gained) {
        (Some(th), _) => Some(mapph::lost_revenue_rewards(&blocks, th)?),
        (None, Some((th, gamma))) => Some(mapph::gained_revenue_rewards(&blocks, th, gamma)?),
        (None, None) => None,
    };
    let mut w = sink(output)?;
    writeln!(w, "{}", blocks.to_json(rewards.as_ref()))?;
    w.flush()?;
    Ok(())
}

/// Parse arguments, run, report failures on stderr; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{}]: {e}", cat.as_str());
            cat.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:0.5").unwrap().0, vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("2:2:1").unwrap().0, vec![2.0]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert_eq!(parse_block("0, 5").unwrap(), (0, 5));
        assert_eq!(parse_usize_list("5:20:5").unwrap(), vec![5, 10, 15, 20]);
        assert_eq!(parse_usize_list("2,4").unwrap(), vec![2, 4]);
        assert!(parse_usize_list("x").is_err());
    }

    #[test]
    fn zero_time_reward_is_zero() {
        let b = QbdBlocks::birth_death(1.0, 2.0, 3).unwrap();
        let g = mapph::lost_revenue_rewards(&b, 1.0).unwrap();
        let rows = reward_values(
            &b,
            &g,
            &Vector::from_element(1, 1.0),
            &[0.0],
            &[0, 1, 2, 3],
            RewardMethod::Diffeq,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.2 == 0.0));
    }

    #[test]
    fn parse_failures_exit_two() {
        assert_eq!(main_with_args(["qbdr", "frobnicate"]), 2);
        assert_eq!(
            main_with_args(["qbdr", "stationary", "--model", "/nonexistent.json"]),
            2
        );
    }
}
