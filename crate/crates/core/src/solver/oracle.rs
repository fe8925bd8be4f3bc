//! Accelerated proximal-gradient reference solver. Slow but independent of
//! the ADMM splitting; used to cross-check it.

use nalgebra::{DMatrix, DVector};

use super::prox::{prox_group, soft_threshold};
use crate::data::SampleBatch;
use crate::error::{Error, Result};
use crate::monitor::StatisticMatrix;
use crate::structure::{validate, PenaltySpec};

const MAX_ITER: usize = 200_000;

/// Exact proximal map of `t · penalty`.
pub(crate) fn prox_penalty(spec: &PenaltySpec, y: &DVector<f64>, t: f64) -> DVector<f64> {
    let mut x = y.clone();
    let shrink_block = |x: &mut DVector<f64>, idx: &[usize], thr: f64| {
        let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i]));
        let p = prox_group(&b, thr);
        for (k, &i) in idx.iter().enumerate() {
            x[i] = p[k];
        }
    };
    match spec {
        PenaltySpec::Lasso { lambda } => x.apply(|v| *v = soft_threshold(*v, t * lambda)),
        PenaltySpec::PartialSupport { lambda, support } => {
            x.apply(|v| *v = soft_threshold(*v, t * lambda));
            for &i in support.known_zero() {
                x[i] = 0.0;
            }
        }
        PenaltySpec::GroupLasso { lambda, partition } => {
            for (b, w) in partition.blocks().iter().zip(partition.weights()) {
                shrink_block(&mut x, b, t * lambda * w);
            }
        }
        PenaltySpec::SparseGroupLasso {
            lambda,
            alpha,
            partition,
        } => {
            // soft-threshold then block shrink is exact for this composite
            x.apply(|v| *v = soft_threshold(*v, t * alpha * lambda));
            for (b, w) in partition.blocks().iter().zip(partition.weights()) {
                shrink_block(&mut x, b, t * (1.0 - alpha) * lambda * w);
            }
        }
        PenaltySpec::Clustered {
            lambda1,
            lambda2,
            clusters,
        } => {
            for b in clusters.blocks() {
                shrink_block(&mut x, b, t * lambda1);
            }
            for i in clusters.uncovered() {
                x[i] = soft_threshold(x[i], t * lambda2);
            }
        }
        PenaltySpec::Tree {
            lambda,
            tree,
            weights,
        } => {
            // nested groups: one pass from leaves to root is the exact prox
            for v in tree.postorder() {
                let node = tree.node(v);
                let thr = t * lambda * weights.omega[v];
                if thr > 0.0 {
                    shrink_block(&mut x, &node.group, thr);
                }
            }
        }
    }
    x
}

/// Minimizes the reconstruction objective by FISTA with backtracking and
/// adaptive restart; stops when the gradient mapping norm drops below
/// `tol · max(1, ‖x‖)`.
pub fn oracle_solve(
    batch: &SampleBatch,
    m_mat: &StatisticMatrix,
    spec: &PenaltySpec,
    tol: f64,
) -> Result<DVector<f64>> {
    oracle_solve_with(batch, m_mat, spec, tol, MAX_ITER)
}

pub fn oracle_solve_with(
    batch: &SampleBatch,
    m_mat: &StatisticMatrix,
    spec: &PenaltySpec,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let m = m_mat.dim();
    if batch.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: batch.dim(),
        });
    }
    validate(spec, m).map_err(Error::InvalidStructure)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("oracle tolerance must be positive".into()));
    }
    let mat: &DMatrix<f64> = m_mat.matrix();
    let q = mat * batch.mean();
    let smooth = |f: &DVector<f64>| f.dot(&(mat * f)) - 2.0 * q.dot(f);
    let grad = |f: &DVector<f64>| (mat * f - &q) * 2.0;
    let full = |f: &DVector<f64>| smooth(f) + spec.penalty_value(f).unwrap_or(f64::INFINITY);

    let mut x = prox_penalty(spec, &batch.mean(), 0.0);
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut step = 1.0f64;
    let mut obj = full(&x);
    for _ in 0..max_iter {
        let gy = grad(&y);
        let sy = smooth(&y);
        let next = loop {
            let cand = prox_penalty(spec, &(&y - &gy * step), step);
            let d = &cand - &y;
            if smooth(&cand) <= sy + gy.dot(&d) + d.norm_squared() / (2.0 * step) + 1e-15 * sy.abs() {
                break cand;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::NotConverged { iterations: 0 });
            }
        };
        let next_obj = full(&next);
        if next_obj > obj && theta > 1.0 {
            // restart momentum from the last accepted iterate
            theta = 1.0;
            y = x.clone();
            continue;
        }
        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        y = &next + (&next - &x) * ((theta - 1.0) / theta_next);
        theta = theta_next;
        x = next;
        obj = next_obj;

        let gx = grad(&x);
        let mapped = prox_penalty(spec, &(&x - &gx * step), step);
        if (&x - mapped).norm() / step <= tol * x.norm().max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
    })
}
