#![allow(dead_code)]

use fault_isolation::data::{DataMatrix, SampleBatch};
use fault_isolation::monitor::{StatisticKind, StatisticMatrix};
use fault_isolation::structure::{build_tree_from_correlation, BlockPartition, PenaltySpec, SupportSpec};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FAMILIES: usize = 6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_vector(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(m, |_, _| scale * normal(rng))
}

/// Random PSD `M` (full rank unless `rank < m`) and a batch whose mean is
/// away from zero.
pub fn random_instance(rng: &mut ChaCha8Rng, m: usize, rank: usize) -> (SampleBatch, StatisticMatrix) {
    let k = rng.random_range(1..=5);
    let b = DMatrix::from_fn(m, rank, |_, _| normal(rng));
    let mat = &b * b.transpose() / rank as f64;
    let mat = (&mat + mat.transpose()) * 0.5;
    let shift = rng.random_range(0.5..2.5);
    let samples = DMatrix::from_fn(k, m, |_, _| normal(rng) + shift);
    (
        SampleBatch::new(samples).unwrap(),
        StatisticMatrix::new(mat, StatisticKind::Spe).unwrap(),
    )
}

pub fn random_partition(rng: &mut ChaCha8Rng, m: usize) -> BlockPartition {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    let parts = rng.random_range(1..=m.min(4));
    let mut cuts: Vec<usize> = (1..m).collect();
    cuts.shuffle(rng);
    cuts.truncate(parts - 1);
    cuts.sort_unstable();
    cuts.push(m);
    let mut blocks = Vec::new();
    let mut start = 0;
    for c in cuts {
        let mut b = idx[start..c].to_vec();
        b.sort_unstable();
        blocks.push(b);
        start = c;
    }
    BlockPartition::new(blocks, m)
}

/// A spec of family `family` (index into `Family::ALL`) with random structure.
pub fn random_spec(rng: &mut ChaCha8Rng, m: usize, family: usize, lambda: f64) -> PenaltySpec {
    match family {
        0 => PenaltySpec::Lasso { lambda },
        1 => {
            let mut known: Vec<usize> = (0..m).collect();
            known.shuffle(rng);
            known.truncate(rng.random_range(1..m));
            PenaltySpec::PartialSupport {
                lambda,
                support: SupportSpec::new(known),
            }
        }
        2 => PenaltySpec::GroupLasso {
            lambda,
            partition: random_partition(rng, m),
        },
        3 => PenaltySpec::SparseGroupLasso {
            lambda,
            alpha: rng.random_range(0.05..0.95),
            partition: random_partition(rng, m),
        },
        4 => {
            let p = random_partition(rng, m);
            let clusters = p.blocks().iter().filter(|b| b.len() >= 2).take(2).cloned().collect();
            PenaltySpec::Clustered {
                lambda1: lambda,
                lambda2: lambda * rng.random_range(0.5..2.0),
                clusters: BlockPartition::new(clusters, m),
            }
        }
        _ => {
            let data = DataMatrix::unnamed(DMatrix::from_fn(25, m, |_, _| normal(rng))).unwrap();
            let partition = rng.random_bool(0.5).then(|| random_partition(rng, m));
            let tree = build_tree_from_correlation(&data, partition.as_ref()).unwrap();
            PenaltySpec::tree(lambda, tree).unwrap()
        }
    }
}
