//! Regularization paths and the choice of λ against a control limit.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::SampleBatch;
use crate::error::{Error, Result};
use crate::monitor::{quadratic_form, ControlLimits, StatisticMatrix};
use crate::solver::{prox_penalty, reconstruct_from, AdmmConfig, IsolationResult};
use crate::structure::{validate, PenaltySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    Interval,
    TransitionScan,
    User,
}

/// Strictly descending positive candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    candidates: Vec<f64>,
    source: GridSource,
}

impl LambdaGrid {
    /// Sorts the values descending; rejects empty, non-positive or repeated values.
    pub fn user(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("lambda grid is empty".into()));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(
                "lambda grid values must be positive and finite".into(),
            ));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("lambda grid has repeated values".into()));
        }
        Ok(Self {
            candidates: values,
            source: GridSource::User,
        })
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn source(&self) -> GridSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// `[√(ln m / n), π √(ln m / (2n))]`.
pub fn lambda_interval(m: usize, n_train: usize) -> (f64, f64) {
    let l = (m as f64).ln();
    let n = n_train as f64;
    ((l / n).sqrt(), std::f64::consts::PI * (l / (2.0 * n)).sqrt())
}

fn geometric(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    let mut out: Vec<f64> = (0..points)
        .map(|k| (hi.ln() - ratio * k as f64).exp())
        .collect();
    out[0] = hi;
    out[points - 1] = lo;
    out
}

/// Geometric grid over the default interval, descending.
pub fn default_grid(m: usize, n_train: usize, points: usize) -> Result<LambdaGrid> {
    if points < 2 {
        return Err(Error::InvalidParameter("a grid needs at least two points".into()));
    }
    if m < 2 || n_train == 0 {
        return Err(Error::InvalidParameter(
            "the default interval needs m ≥ 2 variables and n ≥ 1 samples".into(),
        ));
    }
    let (lo, hi) = lambda_interval(m, n_train);
    Ok(LambdaGrid {
        candidates: geometric(lo, hi, points),
        source: GridSource::Interval,
    })
}

/// Headroom of the top candidate over λ_max. At λ_max itself zero is only
/// weakly optimal and the composite splittings converge sublinearly.
pub const LAMBDA_MAX_MARGIN: f64 = 1.01;

/// The default grid, continued upward at the same log spacing until it
/// passes `lambda_max`; the top candidate is `LAMBDA_MAX_MARGIN · lambda_max`.
pub fn extended_grid(m: usize, n_train: usize, points: usize, lambda_max: f64) -> Result<LambdaGrid> {
    let base = default_grid(m, n_train, points)?;
    let hi = base.candidates[0];
    if !(lambda_max > hi) || !lambda_max.is_finite() {
        return Ok(base);
    }
    let lambda_max = LAMBDA_MAX_MARGIN * lambda_max;
    let ratio = base.candidates[0] / base.candidates[1];
    let mut above = Vec::new();
    let mut v = hi * ratio;
    while v < lambda_max * (1.0 - 1e-9) {
        above.push(v);
        v *= ratio;
    }
    above.push(lambda_max);
    above.reverse();
    above.extend(base.candidates);
    Ok(LambdaGrid {
        candidates: above,
        source: GridSource::TransitionScan,
    })
}

/// Smallest λ for which `f = 0` minimizes the objective.
///
/// Zero is optimal exactly when `2 M x̄` lies in `λ ∂Ω(0)`, i.e. when the
/// proximal map of `λΩ` sends `2 M x̄` to zero. Closed forms are used where
/// available and bisection on that test otherwise.
pub fn lambda_max(batch: &SampleBatch, m_mat: &StatisticMatrix, spec: &PenaltySpec) -> Result<f64> {
    let m = m_mat.dim();
    if batch.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: batch.dim(),
        });
    }
    validate(spec, m).map_err(Error::InvalidStructure)?;
    let g: DVector<f64> = m_mat.matrix() * batch.mean() * 2.0;
    let block_norm = |b: &[usize]| b.iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt();
    match spec {
        PenaltySpec::Lasso { .. } => Ok(g.amax()),
        PenaltySpec::PartialSupport { support, .. } => Ok(support
            .free(m)
            .into_iter()
            .map(|i| g[i].abs())
            .fold(0.0, f64::max)),
        PenaltySpec::GroupLasso { partition, .. } => Ok(partition
            .blocks()
            .iter()
            .zip(partition.weights())
            .map(|(b, w)| block_norm(b) / w)
            .fold(0.0, f64::max)),
        _ => bisect_lambda_max(spec, &g),
    }
}

fn bisect_lambda_max(spec: &PenaltySpec, g: &DVector<f64>) -> Result<f64> {
    let is_zero = |lam: f64| prox_penalty(&spec.with_lambda(lam), g, 1.0).iter().all(|v| *v == 0.0);
    if is_zero(0.0) {
        return Ok(0.0);
    }
    let cap = 1e12 * (1.0 + g.norm());
    let mut hi = g.amax().max(f64::MIN_POSITIVE);
    while !is_zero(hi) {
        hi *= 2.0;
        if hi > cap {
            return Err(Error::InvalidParameter(
                "penalty leaves some variable unpenalized; no finite lambda_max".into(),
            ));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if is_zero(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry {
    pub lambda: f64,
    pub result: IsolationResult,
    /// `(x̄ − f̃)ᵀ M (x̄ − f̃)`.
    pub reconstructed_statistic: f64,
    pub within_limit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// One entry per grid candidate, λ descending.
    pub path: Vec<PathEntry>,
    pub chosen: usize,
    /// True when no candidate brought the statistic under the limit.
    pub limit_not_reached: bool,
}

impl Selection {
    pub fn chosen_entry(&self) -> &PathEntry {
        &self.path[self.chosen]
    }
}

/// Solves along the grid (descending, warm-started) and picks the largest λ
/// whose reconstructed statistic is within the control limit of the matching
/// statistic. Falls back to the smallest reconstructed statistic, flagged.
pub fn select_lambda(
    batch: &SampleBatch,
    m_mat: &StatisticMatrix,
    limits: &ControlLimits,
    spec: &PenaltySpec,
    grid: &LambdaGrid,
    cfg: &AdmmConfig,
) -> Result<Selection> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    let limit = limits.limit(m_mat.kind());
    let xbar = batch.mean();
    let mut start = xbar.clone();
    let mut path = Vec::with_capacity(grid.len());
    for &lambda in grid.candidates() {
        let result = reconstruct_from(batch, m_mat, &spec.with_lambda(lambda), cfg, &start)?;
        let reconstructed_statistic = quadratic_form(m_mat.matrix(), &(&xbar - &result.f)).max(0.0);
        start = result.f.clone();
        path.push(PathEntry {
            lambda,
            reconstructed_statistic,
            within_limit: reconstructed_statistic <= limit,
            result,
        });
    }
    let (chosen, limit_not_reached) = match path.iter().position(|e| e.within_limit) {
        Some(i) => (i, false),
        None => {
            let i = (0..path.len())
                .min_by(|&a, &b| {
                    path[a]
                        .reconstructed_statistic
                        .total_cmp(&path[b].reconstructed_statistic)
                })
                .unwrap_or(0);
            (i, true)
        }
    };
    Ok(Selection {
        path,
        chosen,
        limit_not_reached,
    })
}

/// One row of the path dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub lambda: f64,
    pub objective: f64,
    pub active_size: usize,
    /// 1-based indices joined by `;`.
    pub active_set: String,
    pub reconstructed_statistic: f64,
    pub within_limit: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl From<&PathEntry> for PathRecord {
    fn from(e: &PathEntry) -> Self {
        Self {
            lambda: e.lambda,
            objective: e.result.objective,
            active_size: e.result.active_set.len(),
            active_set: format_indices(&e.result.active_set),
            reconstructed_statistic: e.reconstructed_statistic,
            within_limit: e.within_limit,
            converged: e.result.converged,
            iterations: e.result.iterations,
        }
    }
}

/// `[0, 6, 9]` → `"0;6;9"` (0-based).
pub fn format_indices(idx: &[usize]) -> String {
    idx.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Inverse of [`format_indices`].
pub fn parse_indices(text: &str) -> Result<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(i) => Ok(i),
            Err(_) => Err(Error::Format(format!("bad index '{s}'"))),
        })
        .collect()
}

pub fn write_path<W: Write>(path: &[PathEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in path {
        w.serialize(PathRecord::from(e))
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path<R: Read>(reader: R) -> Result<Vec<PathRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| {
            rec.map_err(|e| Error::Parse {
                row: i + 2,
                column: 0,
                message: e.to_string(),
            })
        })
        .collect()
}

/// How λ is chosen for an isolation run.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// Default interval grid with this many points, extended to λ_max.
    Default { points: usize, n_train: usize },
    User(LambdaGrid),
}

/// Outcome of isolating one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchIsolation {
    pub lambda: f64,
    pub result: IsolationResult,
    pub reconstructed_statistic: f64,
    pub within_limit: bool,
    /// Present when λ came from a grid.
    pub selection: Option<Selection>,
}

/// Reconstructs one batch, selecting λ when a grid is requested.
pub fn isolate_batch(
    batch: &SampleBatch,
    m_mat: &StatisticMatrix,
    limits: &ControlLimits,
    spec: &PenaltySpec,
    choice: &LambdaChoice,
    cfg: &AdmmConfig,
) -> Result<BatchIsolation> {
    let grid = match choice {
        LambdaChoice::Fixed(lambda) => {
            let result = reconstruct_from(batch, m_mat, &spec.with_lambda(*lambda), cfg, &batch.mean())?;
            let stat = quadratic_form(m_mat.matrix(), &(batch.mean() - &result.f)).max(0.0);
            return Ok(BatchIsolation {
                lambda: *lambda,
                reconstructed_statistic: stat,
                within_limit: stat <= limits.limit(m_mat.kind()),
                result,
                selection: None,
            });
        }
        LambdaChoice::Default { points, n_train } => {
            let lm = lambda_max(batch, m_mat, spec)?;
            extended_grid(m_mat.dim(), *n_train, *points, lm)?
        }
        LambdaChoice::User(g) => g.clone(),
    };
    let selection = select_lambda(batch, m_mat, limits, spec, &grid, cfg)?;
    let e = selection.chosen_entry().clone();
    Ok(BatchIsolation {
        lambda: e.lambda,
        result: e.result,
        reconstructed_statistic: e.reconstructed_statistic,
        within_limit: e.within_limit,
        selection: Some(selection),
    })
}

/// Isolates every sample of `batch` on its own.
pub fn isolate_per_sample(
    batch: &SampleBatch,
    m_mat: &StatisticMatrix,
    limits: &ControlLimits,
    spec: &PenaltySpec,
    choice: &LambdaChoice,
    cfg: &AdmmConfig,
) -> Result<Vec<BatchIsolation>> {
    (0..batch.len())
        .map(|i| {
            let one = SampleBatch::single(&batch.sample(i))?;
            isolate_batch(&one, m_mat, limits, spec, choice, cfg)
        })
        .collect()
}

/// Per-variable activity frequency and the variables active in at least
/// `quorum` of the runs.
pub fn vote(runs: &[BatchIsolation], m: usize, quorum: f64) -> (Vec<f64>, Vec<usize>) {
    let mut count = vec![0usize; m];
    for r in runs {
        for &i in &r.result.active_set {
            count[i] += 1;
        }
    }
    let k = runs.len().max(1) as f64;
    let freq: Vec<f64> = count.iter().map(|&c| c as f64 / k).collect();
    let chosen = (0..m).filter(|&i| !runs.is_empty() && freq[i] >= quorum).collect();
    (freq, chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::StatisticKind;
    use crate::solver::reconstruct;
    use crate::structure::BlockPartition;
    use nalgebra::DMatrix;

    fn identity(m: usize) -> StatisticMatrix {
        StatisticMatrix::new(DMatrix::identity(m, m), StatisticKind::Spe).unwrap()
    }

    #[test]
    fn interval_for_simulation_size() {
        let (lo, hi) = lambda_interval(15, 200);
        assert!((lo - 0.1164).abs() < 1e-4);
        assert!((hi - 0.2585).abs() < 1e-4);
    }

    #[test]
    fn two_point_grid_is_endpoints() {
        let g = default_grid(15, 200, 2).unwrap();
        let (lo, hi) = lambda_interval(15, 200);
        assert_eq!(g.candidates(), &[hi, lo]);
        assert!(default_grid(15, 200, 1).is_err());
    }

    #[test]
    fn extension_reaches_lambda_max() {
        let g = extended_grid(15, 200, 5, 3.0).unwrap();
        assert_eq!(g.candidates()[0], 3.0 * LAMBDA_MAX_MARGIN);
        assert!(g.candidates().windows(2).all(|w| w[0] > w[1]));
        assert_eq!(g.source(), GridSource::TransitionScan);
        let same = extended_grid(15, 200, 5, 0.2).unwrap();
        assert_eq!(same, default_grid(15, 200, 5).unwrap());
    }

    #[test]
    fn user_grid_sorted() {
        let g = LambdaGrid::user(vec![0.5, 2.0, 1.0]).unwrap();
        assert_eq!(g.candidates(), &[2.0, 1.0, 0.5]);
        assert!(LambdaGrid::user(vec![1.0, -1.0]).is_err());
        assert!(LambdaGrid::user(vec![]).is_err());
    }

    #[test]
    fn lambda_max_zero_mean() {
        let batch = SampleBatch::single(&DVector::zeros(3)).unwrap();
        assert_eq!(lambda_max(&batch, &identity(3), &PenaltySpec::Lasso { lambda: 1.0 }).unwrap(), 0.0);
    }

    #[test]
    fn lambda_max_identity_lasso() {
        let x = DVector::from_vec(vec![0.5, -2.0, 1.0]);
        let batch = SampleBatch::single(&x).unwrap();
        assert_eq!(lambda_max(&batch, &identity(3), &PenaltySpec::Lasso { lambda: 1.0 }).unwrap(), 4.0);
    }

    #[test]
    fn bisection_agrees_with_closed_form() {
        // sparse group with alpha = 0 is the group lasso
        let x = DVector::from_vec(vec![0.5, -2.0, 1.0, 0.3]);
        let batch = SampleBatch::single(&x).unwrap();
        let partition = BlockPartition::new(vec![vec![0, 1], vec![2, 3]], 4);
        let group = PenaltySpec::GroupLasso {
            lambda: 1.0,
            partition: partition.clone(),
        };
        let sgl = PenaltySpec::SparseGroupLasso {
            lambda: 1.0,
            alpha: 0.0,
            partition,
        };
        let a = lambda_max(&batch, &identity(4), &group).unwrap();
        let b = lambda_max(&batch, &identity(4), &sgl).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn bracketing_on_small_instance() {
        let mat = StatisticMatrix::new(
            DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 1.5]),
            StatisticKind::T2,
        )
        .unwrap();
        let batch = SampleBatch::single(&DVector::from_vec(vec![1.0, -0.4, 0.7])).unwrap();
        let spec = PenaltySpec::SparseGroupLasso {
            lambda: 1.0,
            alpha: 0.4,
            partition: BlockPartition::new(vec![vec![0, 2], vec![1]], 3),
        };
        let lm = lambda_max(&batch, &mat, &spec).unwrap();
        let cfg = AdmmConfig::default();
        let above = reconstruct(&batch, &mat, &spec.with_lambda(1.01 * lm), &cfg).unwrap();
        let below = reconstruct(&batch, &mat, &spec.with_lambda(0.99 * lm), &cfg).unwrap();
        assert!(above.active_set.is_empty(), "{:?}", above.f.as_slice());
        assert!(!below.active_set.is_empty());
    }

    #[test]
    fn fault_free_batch_picks_top() {
        let batch = SampleBatch::single(&DVector::from_vec(vec![0.1, -0.1])).unwrap();
        let limits = ControlLimits {
            t2_limit: 1.0,
            spe_limit: 1.0,
            significance: 0.01,
        };
        let grid = LambdaGrid::user(vec![1.0, 0.5, 0.1]).unwrap();
        let sel = select_lambda(
            &batch,
            &identity(2),
            &limits,
            &PenaltySpec::Lasso { lambda: 1.0 },
            &grid,
            &AdmmConfig::default(),
        )
        .unwrap();
        assert_eq!(sel.chosen, 0);
        assert!(!sel.limit_not_reached);
        assert!(sel.chosen_entry().result.active_set.is_empty());
    }

    #[test]
    fn unreachable_limit_is_flagged() {
        let batch = SampleBatch::single(&DVector::from_vec(vec![5.0, -4.0])).unwrap();
        let limits = ControlLimits {
            t2_limit: 1e-9,
            spe_limit: 1e-9,
            significance: 0.01,
        };
        let grid = LambdaGrid::user(vec![4.0, 2.0, 1.0]).unwrap();
        let sel = select_lambda(
            &batch,
            &identity(2),
            &limits,
            &PenaltySpec::Lasso { lambda: 1.0 },
            &grid,
            &AdmmConfig::default(),
        )
        .unwrap();
        assert!(sel.limit_not_reached);
        assert_eq!(sel.chosen, 2);
        let stats: Vec<f64> = sel.path.iter().map(|e| e.reconstructed_statistic).collect();
        assert!(stats.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn path_dump_round_trip() {
        let batch = SampleBatch::single(&DVector::from_vec(vec![3.0, -0.5])).unwrap();
        let limits = ControlLimits {
            t2_limit: 0.5,
            spe_limit: 0.5,
            significance: 0.01,
        };
        let grid = LambdaGrid::user(vec![8.0, 1.0]).unwrap();
        let sel = select_lambda(
            &batch,
            &identity(2),
            &limits,
            &PenaltySpec::Lasso { lambda: 1.0 },
            &grid,
            &AdmmConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_path(&sel.path, &mut buf).unwrap();
        let back = read_path(buf.as_slice()).unwrap();
        let expect: Vec<PathRecord> = sel.path.iter().map(PathRecord::from).collect();
        assert_eq!(back, expect);
        assert_eq!(parse_indices(&back[1].active_set).unwrap(), sel.path[1].result.active_set);
    }

    #[test]
    fn per_sample_vote() {
        let batch = SampleBatch::new(DMatrix::from_row_slice(
            3,
            2,
            &[3.0, 0.0, 4.0, 0.1, 0.0, 5.0],
        ))
        .unwrap();
        let limits = ControlLimits {
            t2_limit: 1.0,
            spe_limit: 1.0,
            significance: 0.01,
        };
        let runs = isolate_per_sample(
            &batch,
            &identity(2),
            &limits,
            &PenaltySpec::Lasso { lambda: 1.0 },
            &LambdaChoice::Fixed(1.0),
            &AdmmConfig::default(),
        )
        .unwrap();
        assert_eq!(runs.len(), 3);
        let (freq, chosen) = vote(&runs, 2, 0.5);
        assert!((freq[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((freq[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(chosen, vec![0]);
    }

    #[test]
    fn index_formatting() {
        assert_eq!(format_indices(&[0, 6, 9]), "0;6;9");
        assert_eq!(parse_indices("0;6;9").unwrap(), vec![0, 6, 9]);
        assert_eq!(parse_indices("").unwrap(), Vec::<usize>::new());
        assert!(parse_indices("-1").is_err());
    }
}
