//! Fifteen-variable benchmark process in four correlated blocks, with sensor
//! bias and multiplicative fault scenarios.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{default_names, DataMatrix};
use crate::error::{Error, Result};
use crate::structure::{flat_tree, BlockPartition, SparsityTree};

pub const NUM_VARIABLES: usize = 15;

/// Fault injected on test rows. Variable indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    None,
    SensorBias { variable: usize, delta: f64 },
    Multiplicative { factors: Vec<(usize, f64)> },
}

impl Fault {
    /// `x₇ ← x₇ − 1.5`.
    pub fn sensor_bias() -> Self {
        Fault::SensorBias {
            variable: 6,
            delta: -1.5,
        }
    }

    /// `x₂ ← 0.5 x₂`, `x₃ ← 0.8 x₃`, `x₁₅ ← 0.6 x₁₅`.
    pub fn multiplicative() -> Self {
        Fault::Multiplicative {
            factors: vec![(1, 0.5), (2, 0.8), (14, 0.6)],
        }
    }

    /// Faulty variables, ascending.
    pub fn variables(&self) -> Vec<usize> {
        let mut v = match self {
            Fault::None => Vec::new(),
            Fault::SensorBias { variable, .. } => vec![*variable],
            Fault::Multiplicative { factors } => factors.iter().map(|(i, _)| *i).collect(),
        };
        v.sort_unstable();
        v
    }

    fn apply(&self, row: &mut [f64]) {
        match self {
            Fault::None => {}
            Fault::SensorBias { variable, delta } => row[*variable] += delta,
            Fault::Multiplicative { factors } => {
                for &(i, a) in factors {
                    row[i] *= a;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// First faulty test row (0-based).
    pub fault_start: usize,
    pub seed: u64,
    pub fault: Fault,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_train: 700,
            n_test: 300,
            fault_start: 100,
            seed: 0,
            fault: Fault::None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 2 || self.n_test == 0 {
            return Err(Error::InvalidParameter(
                "need at least two training rows and one test row".into(),
            ));
        }
        if self.fault_start >= self.n_test {
            return Err(Error::InvalidParameter(format!(
                "fault start {} not below test size {}",
                self.fault_start, self.n_test
            )));
        }
        match &self.fault {
            Fault::None => {}
            Fault::SensorBias { variable, delta } => {
                if *variable >= NUM_VARIABLES || !delta.is_finite() {
                    return Err(Error::InvalidParameter("bad sensor bias".into()));
                }
            }
            Fault::Multiplicative { factors } => {
                for &(i, a) in factors {
                    if i >= NUM_VARIABLES || !(a > 0.0 && a <= 1.0) {
                        return Err(Error::InvalidParameter(format!(
                            "bad multiplicative factor ({}, {a})",
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub faulty_variables: Vec<usize>,
    pub blocks: BlockPartition,
    pub tree: SparsityTree,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub train: DataMatrix,
    pub test: DataMatrix,
    pub truth: GroundTruth,
}

/// One fault-free sample. Draw order is fixed so a seed determines every value.
pub fn sample<R: Rng>(rng: &mut R) -> [f64; NUM_VARIABLES] {
    let mut e = || -> f64 { rng.sample(StandardNormal) };
    let mut x = [0.0; NUM_VARIABLES];
    // 1-based names in comments
    x[0] = e(); // x1
    x[1] = e(); // x2
    x[5] = 0.6 * x[0] + 0.4 * x[1] + 0.03 * e(); // x6
    x[6] = 0.4 * x[0] + 0.3 * x[1] + 0.3 * x[5] + 0.02 * e(); // x7
    x[9] = 0.2 * x[0] + 0.5 * x[1] + 0.1 * x[5] + 0.2 * x[6] + 0.01 * e(); // x10
    x[2] = e(); // x3
    x[10] = 0.8 * x[2] + 0.03 * e(); // x11
    x[14] = 0.3 * x[2] + 0.7 * x[10] + 0.01 * e(); // x15
    x[3] = e(); // x4
    x[8] = 0.7 * x[3] + 0.02 * e(); // x9
    x[12] = 0.6 * x[3] + 0.4 * x[8] + 0.02 * e(); // x13
    x[4] = e(); // x5
    x[7] = 0.8 * x[4] + 0.02 * e(); // x8
    x[11] = 0.5 * x[4] + 0.5 * x[7] + 0.03 * e(); // x12
    x[13] = 0.2 * x[4] + 0.4 * x[7] + 0.4 * x[11] + 0.01 * e(); // x14
    x
}

/// Raw training and test data; test rows from `fault_start` on carry the fault.
pub fn generate(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |n: usize, fault: Option<(&Fault, usize)>| {
        let mut values = Vec::with_capacity(n * NUM_VARIABLES);
        for i in 0..n {
            let mut row = sample(&mut rng);
            if let Some((f, start)) = fault {
                if i >= start {
                    f.apply(&mut row);
                }
            }
            values.extend_from_slice(&row);
        }
        DMatrix::from_row_slice(n, NUM_VARIABLES, &values)
    };
    let train = draw(cfg.n_train, None);
    let test = draw(cfg.n_test, Some((&cfg.fault, cfg.fault_start)));
    Ok(Simulation {
        train: DataMatrix::new(train, default_names(NUM_VARIABLES))?,
        test: DataMatrix::new(test, default_names(NUM_VARIABLES))?,
        truth: GroundTruth {
            faulty_variables: cfg.fault.variables(),
            blocks: example_blocks(),
            tree: example_tree(),
        },
    })
}

/// Blocks {1,2,6,7,10}, {3,11,15}, {4,9,13}, {5,8,12,14} (1-based).
pub fn example_blocks() -> BlockPartition {
    let one_based: [&[usize]; 4] = [&[1, 2, 6, 7, 10], &[3, 11, 15], &[4, 9, 13], &[5, 8, 12, 14]];
    BlockPartition::new(
        one_based
            .iter()
            .map(|b| b.iter().map(|i| i - 1).collect())
            .collect(),
        NUM_VARIABLES,
    )
}

/// Leaves (nodes 0..15, node i = variable i) under four block nodes
/// (15..19, height 0.5) under a root (19, height 1).
pub fn example_tree() -> SparsityTree {
    flat_tree(&example_blocks()).expect("fixed partition is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{tree_weights, validate, PenaltySpec};

    fn cfg(fault: Fault, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            fault,
            ..SimConfig::default()
        }
    }

    #[test]
    fn partition_matches_blocks() {
        let p = example_blocks();
        let sizes: Vec<usize> = p.blocks().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 3, 3, 4]);
        assert!(p.covers() && p.errors().is_empty());
        let spec = PenaltySpec::GroupLasso { lambda: 1.0, partition: p };
        assert!(validate(&spec, 15).is_ok());
    }

    #[test]
    fn tree_shape() {
        let t = example_tree();
        assert_eq!(t.len(), 20);
        assert_eq!(t.leaves().len(), 15);
        for (k, b) in example_blocks().blocks().iter().enumerate() {
            let mut g = b.clone();
            g.sort_unstable();
            assert_eq!(t.node(15 + k).group, g);
        }
        let w = tree_weights(&t).unwrap();
        assert_eq!(w.omega[0], 0.5);
        assert_eq!(w.omega[15], 0.5);
        assert_eq!(w.omega[19], 0.0);
    }

    #[test]
    fn block_two_relation_is_exact_up_to_noise() {
        let sim = generate(&cfg(Fault::None, 3)).unwrap();
        let x = sim.train.values();
        let resid: Vec<f64> = (0..x.nrows())
            .map(|i| (x[(i, 14)] - 0.3 * x[(i, 2)] - 0.7 * x[(i, 10)]) / 0.01)
            .collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((sd - 1.0).abs() < 0.15, "noise sd {sd}");
    }

    #[test]
    fn x11_tracks_x3() {
        let sim = generate(&cfg(Fault::None, 4)).unwrap();
        let x = sim.train.values();
        let (a, b) = (x.column(2), x.column(10));
        let (ma, mb) = (a.mean(), b.mean());
        let cov: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - ma) * (q - mb)).sum();
        let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
        assert!(cov / (va * vb).sqrt() >= 0.99);
    }

    #[test]
    fn deterministic_and_fault_local() {
        let a = generate(&cfg(Fault::None, 11)).unwrap();
        let b = generate(&cfg(Fault::None, 11)).unwrap();
        assert_eq!(a.test.values(), b.test.values());
        let f = generate(&cfg(Fault::sensor_bias(), 11)).unwrap();
        for j in 0..15 {
            if j != 6 {
                assert_eq!(a.test.values().column(j), f.test.values().column(j));
            }
        }
        for i in 0..300 {
            let d = f.test.values()[(i, 6)] - a.test.values()[(i, 6)];
            if i < 100 {
                assert_eq!(d, 0.0);
            } else {
                assert!((d + 1.5).abs() < 1e-12);
            }
        }
        assert_eq!(f.truth.faulty_variables, vec![6]);
    }

    #[test]
    fn fault_free_test_matches_train_law() {
        let sim = generate(&cfg(Fault::None, 5)).unwrap();
        for j in 0..15 {
            let tr = sim.train.values().column(j);
            let te = sim.test.values().column(j);
            let sd = tr.iter().map(|v| (v - tr.mean()).powi(2)).sum::<f64>() / (tr.len() - 1) as f64;
            let bound = 4.0 * sd.sqrt() * (1.0 / 700.0 + 1.0 / 300.0f64).sqrt();
            assert!((tr.mean() - te.mean()).abs() <= bound);
        }
    }

    #[test]
    fn bad_config_rejected() {
        let mut c = SimConfig::default();
        c.fault_start = 300;
        assert!(generate(&c).is_err());
        let c = cfg(Fault::Multiplicative { factors: vec![(1, 1.5)] }, 0);
        assert!(generate(&c).is_err());
    }
}
