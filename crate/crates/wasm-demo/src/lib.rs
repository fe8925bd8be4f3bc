//! Browser demo: simulate the fifteen-variable process, chart its monitoring
//! statistics, and isolate the fault with a chosen penalty family.
//!
//! [`Session`] holds the logic and runs natively; [`Demo`] is the thin
//! JavaScript binding. Results cross the boundary as JSON strings.

use fault_isolation::data::{DataMatrix, SampleBatch};
use fault_isolation::monitor::{Detection, MonitoringModel, Retention, StatisticKind};
use fault_isolation::selection::{isolate_batch, isolate_per_sample, lambda_max, vote, LambdaChoice};
use fault_isolation::simgen::{generate, example_tree, example_blocks, Fault, SimConfig};
use fault_isolation::solver::AdmmConfig;
use fault_isolation::structure::{PenaltySpec, SupportSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const GRID_POINTS: usize = 10;

pub struct Session {
    model: MonitoringModel,
    standardized: DataMatrix,
    detections: Vec<Detection>,
    fault_start: usize,
    truth: Vec<usize>,
}

#[derive(Serialize)]
struct MonitorView<'a> {
    t2: Vec<f64>,
    spe: Vec<f64>,
    t2_limit: f64,
    spe_limit: f64,
    fault_start: usize,
    flagged: usize,
    components: usize,
    faulty_variables: &'a [usize],
}

#[derive(Serialize)]
struct IsolationView {
    family: String,
    lambda: Option<f64>,
    /// Per-variable `|f|` (pooled) or activity frequency (per sample).
    contribution: Vec<f64>,
    active_set: Vec<usize>,
    samples: usize,
    converged: bool,
}

#[derive(Serialize)]
struct PathPoint {
    lambda: f64,
    active_size: usize,
    reconstructed_statistic: f64,
    within_limit: bool,
}

#[derive(Serialize)]
struct PathView {
    limit: f64,
    lambda_max: f64,
    chosen: usize,
    points: Vec<PathPoint>,
}

fn penalty(family: &str) -> Result<PenaltySpec, String> {
    let partition = example_blocks();
    Ok(match family {
        "lasso" => PenaltySpec::Lasso { lambda: 1.0 },
        // x10 known healthy
        "support" => PenaltySpec::PartialSupport {
            lambda: 1.0,
            support: SupportSpec::new(vec![9]),
        },
        "group" => PenaltySpec::GroupLasso { lambda: 1.0, partition },
        "sparse-group" => PenaltySpec::SparseGroupLasso {
            lambda: 1.0,
            alpha: 0.8,
            partition,
        },
        "cluster" => PenaltySpec::Clustered {
            lambda1: 1.0,
            lambda2: 1.0,
            clusters: partition,
        },
        "tree" => PenaltySpec::tree(1.0, example_tree()).map_err(|e| e.to_string())?,
        other => return Err(format!("unknown family '{other}'")),
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

impl Session {
    pub fn new(seed: u64, fault: &str) -> Result<Self, String> {
        let fault = match fault {
            "none" => Fault::None,
            "sensor-bias" => Fault::sensor_bias(),
            "multiplicative" => Fault::multiplicative(),
            other => return Err(format!("unknown fault '{other}'")),
        };
        let cfg = SimConfig {
            seed,
            fault,
            ..SimConfig::default()
        };
        let sim = generate(&cfg).map_err(|e| e.to_string())?;
        let model = MonitoringModel::fit(&sim.train, Retention::Components(5), 0.01).map_err(|e| e.to_string())?;
        let (standardized, detections) = model.detect_raw(&sim.test).map_err(|e| e.to_string())?;
        Ok(Self {
            model,
            standardized,
            detections,
            fault_start: cfg.fault_start,
            truth: sim.truth.faulty_variables,
        })
    }

    fn flagged(&self) -> Vec<usize> {
        (0..self.detections.len()).filter(|&i| self.detections[i].flagged()).collect()
    }

    fn kind(&self) -> StatisticKind {
        if self.detections.iter().any(|d| d.spe_violation) {
            StatisticKind::Spe
        } else {
            StatisticKind::T2
        }
    }

    fn batch(&self) -> Result<SampleBatch, String> {
        let rows = self.flagged();
        if rows.is_empty() {
            return Err("no sample exceeds a control limit".into());
        }
        SampleBatch::from_rows(&self.standardized, &rows).map_err(|e| e.to_string())
    }

    pub fn monitor_json(&self) -> Result<String, String> {
        to_json(&MonitorView {
            t2: self.detections.iter().map(|d| d.t2).collect(),
            spe: self.detections.iter().map(|d| d.spe).collect(),
            t2_limit: self.model.limits.t2_limit,
            spe_limit: self.model.limits.spe_limit,
            fault_start: self.fault_start,
            flagged: self.flagged().len(),
            components: self.model.pca.components(),
            faulty_variables: &self.truth,
        })
    }

    /// `lambda` of `None` selects λ on the default grid.
    pub fn isolate_json(&self, family: &str, lambda: Option<f64>, per_sample: bool) -> Result<String, String> {
        let spec = penalty(family)?;
        let batch = self.batch()?;
        let mm = self.model.statistic_matrix(self.kind());
        let choice = match lambda {
            Some(l) => LambdaChoice::Fixed(l),
            None => LambdaChoice::Default {
                points: GRID_POINTS,
                n_train: self.model.n_train,
            },
        };
        let cfg = AdmmConfig::default();
        let limits = &self.model.limits;
        let view = if per_sample {
            let runs = isolate_per_sample(&batch, &mm, limits, &spec, &choice, &cfg).map_err(|e| e.to_string())?;
            let (freq, chosen) = vote(&runs, mm.dim(), 0.5);
            IsolationView {
                family: family.into(),
                lambda,
                contribution: freq,
                active_set: chosen,
                samples: runs.len(),
                converged: runs.iter().all(|r| r.result.converged),
            }
        } else {
            let iso = isolate_batch(&batch, &mm, limits, &spec, &choice, &cfg).map_err(|e| e.to_string())?;
            IsolationView {
                family: family.into(),
                lambda: Some(iso.lambda),
                contribution: iso.result.f.iter().map(|v| v.abs()).collect(),
                active_set: iso.result.active_set,
                samples: batch.len(),
                converged: iso.result.converged,
            }
        };
        to_json(&view)
    }

    /// The pooled selection path on the default grid.
    pub fn path_json(&self, family: &str) -> Result<String, String> {
        let spec = penalty(family)?;
        let batch = self.batch()?;
        let kind = self.kind();
        let mm = self.model.statistic_matrix(kind);
        let lm = lambda_max(&batch, &mm, &spec).map_err(|e| e.to_string())?;
        let choice = LambdaChoice::Default {
            points: GRID_POINTS,
            n_train: self.model.n_train,
        };
        let iso = isolate_batch(&batch, &mm, &self.model.limits, &spec, &choice, &AdmmConfig::default())
            .map_err(|e| e.to_string())?;
        let sel = iso.selection.expect("grid choice always records a path");
        to_json(&PathView {
            limit: self.model.limits.limit(kind),
            lambda_max: lm,
            chosen: sel.chosen,
            points: sel
                .path
                .iter()
                .map(|e| PathPoint {
                    lambda: e.lambda,
                    active_size: e.result.active_set.len(),
                    reconstructed_statistic: e.reconstructed_statistic,
                    within_limit: e.within_limit,
                })
                .collect(),
        })
    }
}

/// JavaScript handle on a simulated run.
#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    /// `fault` is `none`, `sensor-bias` or `multiplicative`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, fault: &str) -> Result<Demo, JsError> {
        Session::new(u64::from(seed), fault)
            .map(|inner| Demo { inner })
            .map_err(|e| JsError::new(&e))
    }

    pub fn monitor(&self) -> Result<String, JsError> {
        self.inner.monitor_json().map_err(|e| JsError::new(&e))
    }

    /// A non-positive `lambda` means "select on the default grid".
    pub fn isolate(&self, family: &str, lambda: f64, per_sample: bool) -> Result<String, JsError> {
        let lambda = (lambda > 0.0).then_some(lambda);
        self.inner
            .isolate_json(family, lambda, per_sample)
            .map_err(|e| JsError::new(&e))
    }

    pub fn path(&self, family: &str) -> Result<String, JsError> {
        self.inner.path_json(family).map_err(|e| JsError::new(&e))
    }
}
