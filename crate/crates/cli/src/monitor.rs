use fault_isolation::monitor::MonitoringModel;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{read_data, read_model, write_records};
use crate::manifest::{now_ms, sidecar, RunManifest};
use crate::MonitorArgs;

#[derive(Debug, Serialize)]
struct StatisticRow {
    sample_index: usize,
    t2: f64,
    spe: f64,
    t2_limit: f64,
    spe_limit: f64,
    flagged: bool,
}

pub fn run(args: &MonitorArgs) -> CliResult<()> {
    let started = now_ms();
    let model = read_model(&args.model)?;
    let data = read_data(&args.input)?;
    let rows = statistic_rows(&model, &data).map_err(CliError::input(&args.input))?;
    write_records(&args.out, &rows)?;

    let flagged = rows.iter().filter(|r| r.flagged).count();
    println!("{flagged} of {} samples flagged", rows.len());

    let mut manifest = RunManifest::new("monitor", started);
    manifest.inputs = vec![args.model.clone(), args.input.clone()];
    manifest.outputs.push(args.out.clone());
    manifest.significance = Some(model.limits.significance);
    manifest.write(&sidecar(&args.out, "manifest.json"))
}

fn statistic_rows(
    model: &MonitoringModel,
    data: &fault_isolation::data::DataMatrix,
) -> fault_isolation::Result<Vec<StatisticRow>> {
    let (_, detections) = model.detect_raw(data)?;
    Ok(detections
        .iter()
        .enumerate()
        .map(|(i, d)| StatisticRow {
            sample_index: i,
            t2: d.t2,
            spe: d.spe,
            t2_limit: model.limits.t2_limit,
            spe_limit: model.limits.spe_limit,
            flagged: d.flagged(),
        })
        .collect())
}
