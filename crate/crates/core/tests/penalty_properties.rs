mod common;

use common::{random_spec, random_vector, rng, FAMILIES};
use fault_isolation::descriptor::tree_spec_with_split;
use fault_isolation::structure::{BlockPartition, PenaltySpec, SparsityTree, SupportSpec, TreeNode};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn relabel(spec: &PenaltySpec, perm: &[usize], m: usize) -> PenaltySpec {
    let map = |idx: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = idx.iter().map(|&i| perm[i]).collect();
        v.sort_unstable();
        v
    };
    let part = |p: &BlockPartition| BlockPartition::new(p.blocks().iter().map(|b| map(b)).collect(), m);
    match spec {
        PenaltySpec::Lasso { lambda } => PenaltySpec::Lasso { lambda: *lambda },
        PenaltySpec::PartialSupport { lambda, support } => PenaltySpec::PartialSupport {
            lambda: *lambda,
            support: SupportSpec::new(map(support.known_zero())),
        },
        PenaltySpec::GroupLasso { lambda, partition } => PenaltySpec::GroupLasso {
            lambda: *lambda,
            partition: part(partition),
        },
        PenaltySpec::SparseGroupLasso {
            lambda,
            alpha,
            partition,
        } => PenaltySpec::SparseGroupLasso {
            lambda: *lambda,
            alpha: *alpha,
            partition: part(partition),
        },
        PenaltySpec::Clustered {
            lambda1,
            lambda2,
            clusters,
        } => PenaltySpec::Clustered {
            lambda1: *lambda1,
            lambda2: *lambda2,
            clusters: part(clusters),
        },
        PenaltySpec::Tree { lambda, tree, .. } => {
            let nodes: Vec<TreeNode> = tree
                .nodes()
                .iter()
                .map(|n| TreeNode {
                    group: map(&n.group),
                    children: n.children.clone(),
                    height: n.height,
                })
                .collect();
            PenaltySpec::tree(*lambda, SparsityTree::new(nodes, tree.root(), m).unwrap()).unwrap()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn absolutely_homogeneous(seed in any::<u64>(), family in 0..FAMILIES, c in -4.0f64..4.0) {
        let mut r = rng(seed);
        let m = 3 + (seed % 8) as usize;
        let spec = random_spec(&mut r, m, family, 0.7);
        let f = random_vector(&mut r, m, 2.0);
        let base = spec.penalty_value(&f).unwrap();
        let scaled = spec.penalty_value(&(&f * c)).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * (1.0 + base));
    }

    #[test]
    fn convex_on_midpoints(seed in any::<u64>(), family in 0..FAMILIES) {
        let mut r = rng(seed);
        let m = 3 + (seed % 8) as usize;
        let spec = random_spec(&mut r, m, family, 1.3);
        let f = random_vector(&mut r, m, 2.0);
        let g = random_vector(&mut r, m, 2.0);
        let mid = spec.penalty_value(&((&f + &g) * 0.5)).unwrap();
        let avg = 0.5 * (spec.penalty_value(&f).unwrap() + spec.penalty_value(&g).unwrap());
        prop_assert!(mid <= avg + 1e-12);
    }

    #[test]
    fn tree_with_unit_split_is_l1(seed in any::<u64>(), lambda in 0.01f64..3.0) {
        let mut r = rng(seed);
        let m = 2 + (seed % 9) as usize;
        let PenaltySpec::Tree { tree, .. } = random_spec(&mut r, m, 5, lambda) else { unreachable!() };
        let s = vec![1.0; tree.len()];
        let spec = tree_spec_with_split(lambda, tree, s).unwrap();
        let f = random_vector(&mut r, m, 2.0);
        let l1 = lambda * f.iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!((spec.penalty_value(&f).unwrap() - l1).abs() <= 1e-12 * (1.0 + l1));
    }

    #[test]
    fn relabeling_leaves_penalty_unchanged(seed in any::<u64>(), family in 0..FAMILIES) {
        let mut r = rng(seed);
        let m = 3 + (seed % 8) as usize;
        let spec = random_spec(&mut r, m, family, 0.9);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut r);
        let moved = relabel(&spec, &perm, m);
        let f = random_vector(&mut r, m, 2.0);
        let mut g = DVector::zeros(m);
        for i in 0..m {
            g[perm[i]] = f[i];
        }
        let a = spec.penalty_value(&f).unwrap();
        let b = moved.penalty_value(&g).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a), "{} vs {}", a, b);
    }
}
