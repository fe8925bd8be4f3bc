use nalgebra::DVector;

/// Block soft-threshold: `0` if `‖b‖₂ ≤ t`, else `(1 − t/‖b‖₂)·b`.
pub fn prox_group(b: &DVector<f64>, t: f64) -> DVector<f64> {
    debug_assert!(t >= 0.0);
    let norm = b.norm();
    if norm <= t {
        DVector::zeros(b.len())
    } else {
        b * (1.0 - t / norm)
    }
}

/// Elementwise soft-threshold with per-element thresholds `r`.
pub fn prox_elementwise(c: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    assert_eq!(c.len(), r.len());
    c.zip_map(r, soft_threshold)
}

pub fn soft_threshold(c: f64, r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    if c.abs() <= r {
        0.0
    } else {
        c.signum() * (c.abs() - r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_boundary_is_zero() {
        let b = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(prox_group(&b, 5.0), DVector::zeros(2));
    }

    #[test]
    fn group_shrinks_norm() {
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let p = prox_group(&b, 1.0);
        assert!((p[0] - 2.4).abs() < 1e-15 && (p[1] - 3.2).abs() < 1e-15);
        assert_eq!(prox_group(&b, 0.0), b);
    }

    #[test]
    fn elementwise_cases() {
        let c = DVector::from_vec(vec![-2.0, 0.5, 1.0]);
        let r = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert_eq!(prox_elementwise(&c, &r), DVector::from_vec(vec![-1.0, 0.0, 0.0]));
    }

    #[test]
    fn elementwise_is_singleton_group() {
        let c = DVector::from_vec(vec![-2.5, 0.3, 1.7, -0.1]);
        let r = DVector::from_vec(vec![0.5, 0.4, 2.0, 0.0]);
        let e = prox_elementwise(&c, &r);
        for i in 0..4 {
            let g = prox_group(&DVector::from_vec(vec![c[i]]), r[i]);
            assert_eq!(e[i], g[0]);
        }
    }
}
