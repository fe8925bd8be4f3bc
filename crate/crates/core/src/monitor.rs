//! PCA monitoring: T² and SPE statistics, empirical control limits and
//! fault flagging.
//!
//! A sample `x` (standardized) is decomposed as `x = A s + e` with whitened
//! scores `s = wᵀx`. Both statistics are quadratic forms `xᵀ M x`:
//!
//! * T²  uses `M = w wᵀ`
//! * SPE uses `M = (I − A wᵀ)ᵀ (I − A wᵀ)`
//!
//! With `w = P Λ^{-1/2}` and `A = P Λ^{1/2}` the product `A wᵀ = P Pᵀ` is the
//! orthogonal projector onto the retained principal subspace.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, SampleBatch, Standardizer};
use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_TARGET: f64 = 0.85;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    w: DMatrix<f64>,
    a: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    explained_variance_ratio: DVector<f64>,
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Retention {
    /// Smallest count whose cumulative explained variance reaches the target.
    VarianceTarget(f64),
    /// Fixed count.
    Components(usize),
}

impl PcaModel {
    /// Projection matrix `w` (m × l); scores `s = wᵀx` have unit training variance.
    pub fn projection(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Loading matrix `A` (m × l).
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn components(&self) -> usize {
        self.w.ncols()
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Variances of the retained components.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn explained_variance_ratio(&self) -> &DVector<f64> {
        &self.explained_variance_ratio
    }

    /// Fraction of total variance captured by the retained components.
    pub fn retained_variance(&self) -> f64 {
        self.explained_variance_ratio
            .iter()
            .take(self.components())
            .sum()
    }

    pub fn scores(&self, x: &DVector<f64>) -> DVector<f64> {
        self.w.transpose() * x
    }

    pub fn from_parts(
        w: DMatrix<f64>,
        a: DMatrix<f64>,
        eigenvalues: DVector<f64>,
        explained_variance_ratio: DVector<f64>,
    ) -> Result<Self> {
        let l = w.ncols();
        if l == 0 || l > w.nrows() {
            return Err(Error::InvalidParameter(format!(
                "component count {l} outside 1..={}",
                w.nrows()
            )));
        }
        if a.shape() != w.shape() {
            return Err(Error::DimensionMismatch {
                expected: w.ncols(),
                got: a.ncols(),
            });
        }
        if eigenvalues.len() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: eigenvalues.len(),
            });
        }
        Ok(Self {
            w,
            a,
            eigenvalues,
            explained_variance_ratio,
        })
    }
}

/// Fits PCA on standardized training data, keeping the smallest number of
/// components whose cumulative explained variance reaches `variance_target`.
pub fn fit_pca(train: &DataMatrix, variance_target: f64) -> Result<PcaModel> {
    fit_pca_with(train, Retention::VarianceTarget(variance_target))
}

pub fn fit_pca_with(train: &DataMatrix, retention: Retention) -> Result<PcaModel> {
    let x = train.values();
    let (n, m) = x.shape();
    if n < 2 {
        return Err(Error::Empty("PCA needs at least two samples".into()));
    }
    match retention {
        Retention::VarianceTarget(t) if !(t > 0.0 && t <= 1.0) => {
            return Err(Error::InvalidParameter(format!(
                "variance target {t} outside (0, 1]"
            )))
        }
        Retention::Components(l) if l == 0 || l > m => {
            return Err(Error::InvalidParameter(format!(
                "component count {l} outside 1..={m}"
            )))
        }
        _ => {}
    }

    let cov = covariance(x);
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateCovariance(
            "covariance has non-finite entries".into(),
        ));
    }
    let (values, vectors) = sorted_eigen(cov);
    let largest = values[0];
    if !(largest > 0.0) {
        return Err(Error::DegenerateCovariance(
            "covariance has no positive eigenvalue".into(),
        ));
    }
    let rank = values.iter().filter(|v| **v > RANK_TOL * largest).count();

    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let kept = m.min(n - 1);
    let ratio = DVector::from_iterator(kept, clipped.iter().take(kept).map(|v| v / total));

    let l = match retention {
        Retention::VarianceTarget(target) => {
            let mut cum = 0.0;
            let mut l = m;
            for (i, v) in clipped.iter().enumerate() {
                cum += v / total;
                if cum >= target - 1e-10 {
                    l = i + 1;
                    break;
                }
            }
            l.min(rank)
        }
        Retention::Components(l) => {
            if l > rank {
                return Err(Error::DegenerateCovariance(format!(
                    "{l} components requested but covariance rank is {rank}"
                )));
            }
            l
        }
    };

    let p = vectors.columns(0, l).into_owned();
    let mut w = p.clone();
    let mut a = p;
    for j in 0..l {
        let sd = values[j].sqrt();
        w.column_mut(j).scale_mut(1.0 / sd);
        a.column_mut(j).scale_mut(sd);
    }
    if n <= m {
        log_warning(&format!(
            "PCA fitted with n = {n} samples for m = {m} variables; estimates are unreliable"
        ));
    }
    Ok(PcaModel {
        w,
        a,
        eigenvalues: DVector::from_iterator(l, values.iter().take(l).copied()),
        explained_variance_ratio: ratio,
    })
}

fn log_warning(msg: &str) {
    #[cfg(not(target_arch = "wasm32"))]
    eprintln!("warning: {msg}");
    #[cfg(target_arch = "wasm32")]
    let _ = msg;
}

fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    // symmetrize against rounding
    (&cov + cov.transpose()) * 0.5
}

/// Eigenpairs sorted by descending eigenvalue. Ties are broken by the lowest
/// index of each vector's largest-magnitude entry; every vector is signed so
/// that entry is positive.
pub(crate) fn sorted_eigen(sym: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let m = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut pairs: Vec<(f64, usize, DVector<f64>)> = (0..m)
        .map(|j| {
            let mut v = eig.eigenvectors.column(j).into_owned();
            let pivot = v.iamax();
            if v[pivot] < 0.0 {
                v.neg_mut();
            }
            (eig.eigenvalues[j], pivot, v)
        })
        .collect();
    pairs.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= 1e-12 * scale {
            a.1.cmp(&b.1)
        } else {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal)
        }
    });
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = DMatrix::from_columns(&pairs.iter().map(|p| p.2.clone()).collect::<Vec<_>>());
    (values, vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    T2,
    Spe,
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StatisticKind::T2 => f.write_str("T2"),
            StatisticKind::Spe => f.write_str("SPE"),
        }
    }
}

/// Symmetric PSD matrix `M` of a quadratic monitoring statistic `xᵀ M x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticMatrix {
    matrix: DMatrix<f64>,
    kind: StatisticKind,
}

impl StatisticMatrix {
    /// Wraps an arbitrary matrix; it is symmetrized and checked for PSD.
    pub fn new(matrix: DMatrix<f64>, kind: StatisticKind) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let asym = (&matrix - matrix.transpose()).amax();
        let scale = matrix.amax().max(1.0);
        if asym > 1e-8 * scale {
            return Err(Error::InvalidParameter(format!(
                "statistic matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if min < -1e-8 * max.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidParameter(format!(
                "statistic matrix is not positive semi-definite (eigenvalue {min:e})"
            )));
        }
        Ok(Self { matrix: sym, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `M = w wᵀ`.
pub fn t2_matrix(model: &PcaModel) -> StatisticMatrix {
    let w = model.projection();
    let m = w * w.transpose();
    StatisticMatrix {
        matrix: (&m + m.transpose()) * 0.5,
        kind: StatisticKind::T2,
    }
}

/// `M = (I − A wᵀ)ᵀ (I − A wᵀ)`.
pub fn spe_matrix(model: &PcaModel) -> StatisticMatrix {
    let dim = model.dim();
    let r = DMatrix::identity(dim, dim) - model.loadings() * model.projection().transpose();
    let m = r.transpose() * r;
    StatisticMatrix {
        matrix: (&m + m.transpose()) * 0.5,
        kind: StatisticKind::Spe,
    }
}

pub fn statistic_matrix(model: &PcaModel, kind: StatisticKind) -> StatisticMatrix {
    match kind {
        StatisticKind::T2 => t2_matrix(model),
        StatisticKind::Spe => spe_matrix(model),
    }
}

/// `xᵀ M x`.
pub fn statistic(mat: &StatisticMatrix, x: &DVector<f64>) -> Result<f64> {
    if x.len() != mat.dim() {
        return Err(Error::DimensionMismatch {
            expected: mat.dim(),
            got: x.len(),
        });
    }
    Ok(quadratic_form(&mat.matrix, x))
}

pub(crate) fn quadratic_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlLimits {
    pub t2_limit: f64,
    pub spe_limit: f64,
    pub significance: f64,
}

impl ControlLimits {
    pub fn limit(&self, kind: StatisticKind) -> f64 {
        match kind {
            StatisticKind::T2 => self.t2_limit,
            StatisticKind::Spe => self.spe_limit,
        }
    }
}

/// Empirical `(1 − significance)` quantile: the smallest order statistic with
/// at least that fraction of values at or below it.
pub fn empirical_quantile(values: &[f64], level: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = sorted.len();
    let rank = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Control limits as empirical quantiles of the training statistics.
pub fn fit_limits(model: &PcaModel, train: &DataMatrix, significance: f64) -> Result<ControlLimits> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "significance {significance} outside (0, 1)"
        )));
    }
    if train.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: train.ncols(),
        });
    }
    let t2 = t2_matrix(model);
    let spe = spe_matrix(model);
    let (t2_vals, spe_vals): (Vec<f64>, Vec<f64>) = (0..train.nrows())
        .map(|i| {
            let x = train.row(i);
            (quadratic_form(&t2.matrix, &x), quadratic_form(&spe.matrix, &x))
        })
        .unzip();
    let level = 1.0 - significance;
    Ok(ControlLimits {
        t2_limit: empirical_quantile(&t2_vals, level).max(f64::EPSILON),
        spe_limit: empirical_quantile(&spe_vals, level).max(f64::EPSILON),
        significance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub t2: f64,
    pub spe: f64,
    pub t2_violation: bool,
    pub spe_violation: bool,
}

impl Detection {
    pub fn flagged(&self) -> bool {
        self.t2_violation || self.spe_violation
    }
}

/// Flags every sample whose T² or SPE exceeds its limit.
pub fn detect(model: &PcaModel, limits: &ControlLimits, batch: &SampleBatch) -> Result<Vec<Detection>> {
    if batch.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: batch.dim(),
        });
    }
    let t2m = t2_matrix(model);
    let spem = spe_matrix(model);
    Ok((0..batch.len())
        .map(|i| {
            let x = batch.sample(i);
            let t2 = quadratic_form(&t2m.matrix, &x);
            let spe = quadratic_form(&spem.matrix, &x);
            Detection {
                t2,
                spe,
                t2_violation: t2 > limits.t2_limit,
                spe_violation: spe > limits.spe_limit,
            }
        })
        .collect())
}

/// Everything needed to monitor raw process data: scaling, PCA subspace and limits.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringModel {
    pub variable_names: Vec<String>,
    pub standardizer: Standardizer,
    pub pca: PcaModel,
    pub limits: ControlLimits,
    /// Training sample count, which sets the default λ interval.
    pub n_train: usize,
}

impl MonitoringModel {
    /// Standardizes raw training data, fits PCA and empirical limits.
    pub fn fit(raw_train: &DataMatrix, retention: Retention, significance: f64) -> Result<Self> {
        let standardizer = Standardizer::fit(raw_train)?;
        let train = standardizer.standardize(raw_train)?;
        let pca = fit_pca_with(&train, retention)?;
        let limits = fit_limits(&pca, &train, significance)?;
        Ok(Self {
            variable_names: raw_train.names().to_vec(),
            standardizer,
            pca,
            limits,
            n_train: raw_train.nrows(),
        })
    }

    pub fn dim(&self) -> usize {
        self.pca.dim()
    }

    pub fn statistic_matrix(&self, kind: StatisticKind) -> StatisticMatrix {
        statistic_matrix(&self.pca, kind)
    }

    /// Standardizes raw samples with the training parameters and runs detection.
    pub fn detect_raw(&self, raw: &DataMatrix) -> Result<(DataMatrix, Vec<Detection>)> {
        let z = self.standardizer.standardize(raw)?;
        let batch = SampleBatch::new(z.values().clone())?;
        let flags = detect(&self.pca, &self.limits, &batch)?;
        Ok((z, flags))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format: MODEL_FORMAT.into(),
            variable_names: self.variable_names.clone(),
            means: self.standardizer.means().iter().copied().collect(),
            stds: self.standardizer.stds().iter().copied().collect(),
            components: self.pca.components(),
            eigenvalues: self.pca.eigenvalues().iter().copied().collect(),
            explained_variance_ratio: self.pca.explained_variance_ratio().iter().copied().collect(),
            w: rows_of(self.pca.projection()),
            a: rows_of(self.pca.loadings()),
            t2_limit: self.limits.t2_limit,
            spe_limit: self.limits.spe_limit,
            significance: self.limits.significance,
            n_train: self.n_train,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "unsupported model format '{}'",
                doc.format
            )));
        }
        let m = doc.means.len();
        if doc.variable_names.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: doc.variable_names.len(),
            });
        }
        let standardizer = Standardizer::from_parts(
            DVector::from_vec(doc.means),
            DVector::from_vec(doc.stds),
        )?;
        let w = matrix_of(&doc.w, m, doc.components)?;
        let a = matrix_of(&doc.a, m, doc.components)?;
        let pca = PcaModel::from_parts(
            w,
            a,
            DVector::from_vec(doc.eigenvalues),
            DVector::from_vec(doc.explained_variance_ratio),
        )?;
        if !(doc.t2_limit > 0.0 && doc.spe_limit > 0.0) {
            return Err(Error::Format("control limits must be positive".into()));
        }
        Ok(Self {
            variable_names: doc.variable_names,
            standardizer,
            pca,
            limits: ControlLimits {
                t2_limit: doc.t2_limit,
                spe_limit: doc.spe_limit,
                significance: doc.significance,
            },
            n_train: doc.n_train,
        })
    }
}

const MODEL_FORMAT: &str = "pca-monitoring-model/1";

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    variable_names: Vec<String>,
    means: Vec<f64>,
    stds: Vec<f64>,
    components: usize,
    eigenvalues: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
    w: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    t2_limit: f64,
    spe_limit: f64,
    significance: f64,
    n_train: usize,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format(format!(
            "matrix in model file is not {nrows} × {ncols}"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
