use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::prox::{prox_elementwise, prox_group};
use super::Problem;

/// Scaled-dual ADMM iterates for one [`Problem`].
///
/// Splits `f` into a copy `V_G` per l2 group and a copy `Z` for the l1 part,
/// with constraints `f_G = V_G` and `f = Z`.
pub struct AdmmState<'a> {
    problem: &'a Problem,
    rho: f64,
    factor: Cholesky<f64, Dyn>,
    f: DVector<f64>,
    v: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    z: Option<DVector<f64>>,
    r: Option<DVector<f64>>,
    split_change: f64,
}

impl<'a> AdmmState<'a> {
    /// Starts with every split copy equal to `f0` and zero duals.
    pub fn new(problem: &'a Problem, rho: f64, f0: &DVector<f64>) -> Self {
        let n = problem.free().len();
        assert_eq!(f0.len(), n);
        let mut system = problem.matrix() * 2.0;
        let mut diag = vec![0.0; n];
        if problem.l1_weights().is_some() {
            diag.iter_mut().for_each(|d| *d += 1.0);
        }
        for g in problem.groups() {
            for &i in &g.members {
                diag[i] += 1.0;
            }
        }
        for (i, d) in diag.iter().enumerate() {
            // every coordinate is covered by Z or a group
            assert!(*d >= 1.0);
            system[(i, i)] += rho * d;
        }
        let factor = Cholesky::new(system).expect("2M + ρD is positive definite for PSD M and ρ > 0");
        let v: Vec<DVector<f64>> = problem
            .groups()
            .iter()
            .map(|g| gather(f0, &g.members))
            .collect();
        let u = v.iter().map(|x| DVector::zeros(x.len())).collect();
        let (z, r) = match problem.l1_weights() {
            Some(_) => (Some(f0.clone()), Some(DVector::zeros(n))),
            None => (None, None),
        };
        Self {
            problem,
            rho,
            factor,
            f: f0.clone(),
            v,
            u,
            z,
            r,
            split_change: 0.0,
        }
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn v(&self) -> &[DVector<f64>] {
        &self.v
    }

    pub fn u(&self) -> &[DVector<f64>] {
        &self.u
    }

    pub fn z(&self) -> Option<&DVector<f64>> {
        self.z.as_ref()
    }

    pub fn r(&self) -> Option<&DVector<f64>> {
        self.r.as_ref()
    }

    /// The linear system solved by the f-update.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        self.factor.l() * self.factor.l().transpose()
    }

    /// Right-hand side `2q + ρ(Σ I_Gᵀ(V_G − U_G) + Z − R)`.
    pub fn rhs(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.f.len());
        for ((g, v), u) in self.problem.groups().iter().zip(&self.v).zip(&self.u) {
            for (k, &i) in g.members.iter().enumerate() {
                d[i] += v[k] - u[k];
            }
        }
        if let (Some(z), Some(r)) = (&self.z, &self.r) {
            d += z - r;
        }
        self.problem.linear() * 2.0 + d * self.rho
    }

    pub fn update_f(&mut self) {
        self.f = self.factor.solve(&self.rhs());
    }

    pub fn update_v(&mut self) {
        self.split_change = 0.0;
        for (k, g) in self.problem.groups().iter().enumerate() {
            let b = gather(&self.f, &g.members) + &self.u[k];
            let next = prox_group(&b, g.weight / self.rho);
            self.split_change += (&next - &self.v[k]).norm_squared();
            self.v[k] = next;
        }
    }

    /// Must follow [`AdmmState::update_v`] within an iteration.
    pub fn update_z(&mut self) {
        if let (Some(w), Some(r)) = (self.problem.l1_weights(), &self.r) {
            let c = &self.f + r;
            let next = prox_elementwise(&c, &(w / self.rho));
            if let Some(z) = &self.z {
                self.split_change += (&next - z).norm_squared();
            }
            self.z = Some(next);
        }
    }

    pub fn update_duals(&mut self) {
        for (k, g) in self.problem.groups().iter().enumerate() {
            self.u[k] += gather(&self.f, &g.members) - &self.v[k];
        }
        if let (Some(z), Some(r)) = (&self.z, &mut self.r) {
            *r += &self.f - z;
        }
    }

    /// `√(Σ ‖f_G − V_G‖² + ‖f − Z‖²)`.
    pub fn primal_residual(&self) -> f64 {
        let mut s: f64 = self
            .problem
            .groups()
            .iter()
            .zip(&self.v)
            .map(|(g, v)| (gather(&self.f, &g.members) - v).norm_squared())
            .sum();
        if let Some(z) = &self.z {
            s += (&self.f - z).norm_squared();
        }
        s.sqrt()
    }

    /// `ρ · √(Σ ‖ΔV_G‖² + ‖ΔZ‖²)` over the latest V and Z updates.
    pub fn dual_residual(&self) -> f64 {
        self.rho * self.split_change.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        let fin = |x: &DVector<f64>| x.iter().all(|v| v.is_finite());
        fin(&self.f)
            && self.v.iter().all(fin)
            && self.u.iter().all(fin)
            && self.z.as_ref().is_none_or(fin)
            && self.r.as_ref().is_none_or(fin)
    }

    /// Exactly sparse estimate: `Z` when an l1 part exists, otherwise the
    /// group copies; coordinates of any group whose copy is exactly zero are
    /// zeroed.
    pub fn sparse_estimate(&self) -> DVector<f64> {
        let groups = self.problem.groups();
        let mut out = match &self.z {
            Some(z) => z.clone(),
            None => {
                let mut acc = DVector::zeros(self.f.len());
                let mut count = vec![0usize; self.f.len()];
                for (g, v) in groups.iter().zip(&self.v) {
                    for (k, &i) in g.members.iter().enumerate() {
                        acc[i] += v[k];
                        count[i] += 1;
                    }
                }
                for (i, c) in count.iter().enumerate() {
                    if *c > 1 {
                        acc[i] /= *c as f64;
                    }
                }
                acc
            }
        };
        for (g, v) in groups.iter().zip(&self.v) {
            if v.iter().all(|x| *x == 0.0) {
                for &i in &g.members {
                    out[i] = 0.0;
                }
            }
        }
        out
    }
}

fn gather(x: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleBatch;
    use crate::monitor::{StatisticKind, StatisticMatrix};
    use crate::structure::{BlockPartition, PenaltySpec};

    fn problem(mat: DMatrix<f64>, x: &[f64], spec: PenaltySpec) -> Problem {
        let m = StatisticMatrix::new(mat, StatisticKind::T2).unwrap();
        let batch = SampleBatch::single(&DVector::from_row_slice(x)).unwrap();
        Problem::new(&batch, &m, &spec).unwrap()
    }

    #[test]
    fn f_update_scalar_case() {
        let p = problem(DMatrix::identity(2, 2), &[3.0, -1.5], PenaltySpec::Lasso { lambda: 1.0 });
        let mut s = AdmmState::new(&p, 1.0, &DVector::zeros(2));
        s.update_f();
        assert!((s.f()[0] - 2.0).abs() < 1e-15);
        assert!((s.f()[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn f_update_solves_system() {
        let mat = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let spec = PenaltySpec::SparseGroupLasso {
            lambda: 0.7,
            alpha: 0.5,
            partition: BlockPartition::new(vec![vec![0, 2], vec![1]], 3),
        };
        let p = problem(mat, &[1.0, -2.0, 0.5], spec);
        let mut s = AdmmState::new(&p, 1.3, &DVector::from_vec(vec![0.2, 0.1, -0.4]));
        s.update_f();
        s.update_v();
        s.update_z();
        s.update_duals();
        s.update_f();
        let rhs = s.rhs();
        let resid = s.system_matrix() * s.f() - &rhs;
        assert!(resid.norm() <= 1e-10 * rhs.norm());
    }

    #[test]
    fn duals_fixed_at_consensus() {
        let spec = PenaltySpec::SparseGroupLasso {
            lambda: 0.0,
            alpha: 0.5,
            partition: BlockPartition::new(vec![vec![0, 1]], 2),
        };
        let p = problem(DMatrix::identity(2, 2), &[1.0, 2.0], spec);
        let mut s = AdmmState::new(&p, 1.0, &DVector::from_vec(vec![1.0, 2.0]));
        let (u0, r0) = (s.u().to_vec(), s.r().cloned());
        s.update_duals();
        assert_eq!(s.u(), &u0[..]);
        assert_eq!(s.r().cloned(), r0);
    }

    #[test]
    fn dual_increment_equals_primal_gap() {
        let spec = PenaltySpec::GroupLasso {
            lambda: 0.5,
            partition: BlockPartition::new(vec![vec![0, 1]], 2),
        };
        let p = problem(DMatrix::identity(2, 2), &[2.0, 1.0], spec);
        let mut s = AdmmState::new(&p, 1.0, &DVector::zeros(2));
        s.update_f();
        s.update_v();
        let before = s.u()[0].clone();
        let gap = s.f() - &s.v()[0];
        s.update_duals();
        assert!(((&s.u()[0] - before) - gap).norm() < 1e-15);
        assert!((s.primal_residual() - (s.f() - &s.v()[0]).norm()).abs() < 1e-15);
    }
}
