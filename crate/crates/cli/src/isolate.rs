use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use fault_isolation::data::SampleBatch;
use fault_isolation::descriptor::{build_spec, PenaltyParams, StructureDescriptor};
use fault_isolation::monitor::{Detection, MonitoringModel, StatisticKind};
use fault_isolation::selection::{
    isolate_batch, isolate_per_sample, vote, write_path, BatchIsolation, GridSource, LambdaChoice, LambdaGrid,
};
use fault_isolation::solver::AdmmConfig;
use fault_isolation::structure::Family;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{read_data, read_model, read_text, write_json, write_records, write_table};
use crate::manifest::{now_ms, sidecar, LambdaRecord, RunManifest};
use crate::IsolateArgs;

/// One row of the pooled contribution report.
#[derive(Debug, Serialize)]
struct ContributionRow<'a> {
    variable_index: usize,
    variable: &'a str,
    estimate: f64,
    contribution: f64,
    active: bool,
}

/// One row of the per-sample vote report.
#[derive(Debug, Serialize)]
struct VoteRow<'a> {
    variable_index: usize,
    variable: &'a str,
    frequency: f64,
    mean_contribution: f64,
    chosen: bool,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    lambda: f64,
    active_set: Vec<usize>,
    active_variables: Vec<String>,
    objective: f64,
    reconstructed_statistic: f64,
    control_limit: f64,
    within_limit: bool,
    limit_not_reached: bool,
    iterations: usize,
    converged: bool,
    primal_residual: f64,
    dual_residual: f64,
    relative_change: f64,
}

#[derive(Debug, Serialize)]
struct VoteSummary {
    runs: usize,
    quorum: f64,
    chosen: Vec<usize>,
    chosen_variables: Vec<String>,
    not_converged: usize,
    max_primal_residual: f64,
    max_relative_change: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    family: String,
    statistic: StatisticKind,
    mode: &'static str,
    lambda_source: &'static str,
    /// 0-based rows of the input that were flagged.
    flagged_samples: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pooled: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_sample: Option<VoteSummary>,
}

pub fn run(args: &IsolateArgs) -> CliResult<()> {
    let started = now_ms();
    let model = read_model(&args.model)?;
    let data = read_data(&args.input)?;
    let (z, detections) = model.detect_raw(&data).map_err(CliError::input(&args.input))?;
    let flagged: Vec<usize> = (0..detections.len()).filter(|&i| detections[i].flagged()).collect();
    if flagged.is_empty() {
        return Err(CliError::NoFaultySamples);
    }
    let m = model.dim();
    let kind = args
        .statistic
        .map(StatisticKind::from)
        .unwrap_or_else(|| default_statistic(&detections, &flagged));
    let m_mat = model.statistic_matrix(kind);

    let descriptor = match &args.structure {
        Some(p) => Some(StructureDescriptor::from_json(&read_text(p)?, m).map_err(CliError::input(p))?),
        None => None,
    };
    let family = Family::from(args.family);
    let params = PenaltyParams {
        lambda: args.lambda.unwrap_or(1.0),
        alpha: args.alpha,
        lambda2: args.lambda2,
    };
    let spec = build_spec(family, descriptor.as_ref(), params, m)?;
    let cfg = AdmmConfig {
        rho: args.rho,
        epsilon: args.epsilon,
        max_iter: args.max_iter,
    };
    cfg.validate()?;
    let (choice, lambda_record) = lambda_choice(args, &model)?;

    let batch = SampleBatch::from_rows(&z, &flagged)?;
    let limit = model.limits.limit(kind);
    let mut summary = Summary {
        family: family.to_string(),
        statistic: kind,
        mode: if args.per_sample { "per-sample" } else { "pooled" },
        lambda_source: source_name(&choice),
        flagged_samples: flagged.clone(),
        pooled: None,
        per_sample: None,
    };
    let names = &model.variable_names;
    let (failed, runs) = if args.per_sample {
        let results = isolate_per_sample(&batch, &m_mat, &model.limits, &spec, &choice, &cfg)?;
        let (freq, chosen) = vote(&results, m, args.quorum);
        let mean: Vec<f64> = (0..m)
            .map(|j| results.iter().map(|r| r.result.f[j].abs()).sum::<f64>() / results.len() as f64)
            .collect();
        let rows: Vec<VoteRow> = (0..m)
            .map(|j| VoteRow {
                variable_index: j,
                variable: &names[j],
                frequency: freq[j],
                mean_contribution: mean[j],
                chosen: chosen.contains(&j),
            })
            .collect();
        write_records(&args.out, &rows)?;
        write_sample_table(&sidecar(&args.out, "samples.csv"), &flagged, &results, names)?;
        if args.bars {
            print_bars("activity frequency", names, &freq, &chosen);
        }
        println!(
            "{} flagged samples isolated one by one ({kind}); voted set: {}",
            flagged.len(),
            describe(&chosen, names)
        );
        let failed = results.iter().filter(|r| !r.result.converged).count();
        summary.per_sample = Some(VoteSummary {
            runs: results.len(),
            quorum: args.quorum,
            chosen_variables: chosen.iter().map(|&j| names[j].clone()).collect(),
            chosen,
            not_converged: failed,
            max_primal_residual: results.iter().map(|r| r.result.primal_residual).fold(0.0, f64::max),
            max_relative_change: results.iter().map(|r| r.result.relative_change).fold(0.0, f64::max),
        });
        (failed, results.len())
    } else {
        let iso = isolate_batch(&batch, &m_mat, &model.limits, &spec, &choice, &cfg)?;
        let r = &iso.result;
        let contribution: Vec<f64> = r.f.iter().map(|v| v.abs()).collect();
        let rows: Vec<ContributionRow> = (0..m)
            .map(|j| ContributionRow {
                variable_index: j,
                variable: &names[j],
                estimate: r.f[j],
                contribution: contribution[j],
                active: r.active_set.contains(&j),
            })
            .collect();
        write_records(&args.out, &rows)?;
        if let (Some(p), Some(sel)) = (&args.path_out, &iso.selection) {
            let file = File::create(p).map_err(CliError::io(p))?;
            write_path(&sel.path, BufWriter::new(file)).map_err(CliError::input(p))?;
        }
        if args.bars {
            print_bars("|f|", names, &contribution, &r.active_set);
        }
        println!(
            "{} flagged samples pooled ({kind}); λ = {:.4}; active set: {}",
            flagged.len(),
            iso.lambda,
            describe(&r.active_set, names)
        );
        summary.pooled = Some(run_summary(&iso, names, limit));
        (usize::from(!r.converged), 1)
    };
    write_json(&sidecar(&args.out, "summary.json"), &summary)?;

    let mut manifest = RunManifest::new("isolate", started);
    manifest.inputs = vec![args.model.clone(), args.input.clone()];
    manifest.inputs.extend(args.structure.clone());
    manifest.outputs = vec![args.out.clone(), sidecar(&args.out, "summary.json")];
    if args.per_sample {
        manifest.outputs.push(sidecar(&args.out, "samples.csv"));
    }
    manifest.outputs.extend(args.path_out.clone());
    manifest.family = Some(family.to_string());
    manifest.lambda = Some(lambda_record);
    manifest.rho = Some(cfg.rho);
    manifest.epsilon = Some(cfg.epsilon);
    manifest.significance = Some(model.limits.significance);
    manifest.write(&sidecar(&args.out, "manifest.json"))?;

    if failed > 0 {
        return Err(CliError::NotConverged {
            failed,
            runs,
            report: args.out.clone(),
        });
    }
    Ok(())
}

/// SPE when any flagged sample violates it (residual faults), else T².
fn default_statistic(detections: &[Detection], flagged: &[usize]) -> StatisticKind {
    if flagged.iter().any(|&i| detections[i].spe_violation) {
        StatisticKind::Spe
    } else {
        StatisticKind::T2
    }
}

fn lambda_choice(args: &IsolateArgs, model: &MonitoringModel) -> CliResult<(LambdaChoice, LambdaRecord)> {
    if let Some(l) = args.lambda {
        if !(l.is_finite() && l >= 0.0) {
            return Err(CliError::Usage(format!("--lambda must be finite and non-negative, got {l}")));
        }
        return Ok((LambdaChoice::Fixed(l), LambdaRecord::Fixed { value: l }));
    }
    if let Some(values) = &args.lambda_grid {
        let grid = LambdaGrid::user(values.clone())?;
        let record = LambdaRecord::Grid {
            values: grid.candidates().to_vec(),
        };
        return Ok((LambdaChoice::User(grid), record));
    }
    if args.grid_points < 2 {
        return Err(CliError::Usage("--grid-points must be at least 2".into()));
    }
    let choice = LambdaChoice::Default {
        points: args.grid_points,
        n_train: model.n_train,
    };
    let record = LambdaRecord::Default {
        points: args.grid_points,
        n_train: model.n_train,
    };
    Ok((choice, record))
}

fn source_name(choice: &LambdaChoice) -> &'static str {
    match choice {
        LambdaChoice::Fixed(_) => "fixed",
        LambdaChoice::Default { .. } => "interval-extended",
        LambdaChoice::User(g) => match g.source() {
            GridSource::User => "user",
            GridSource::Interval => "interval",
            GridSource::TransitionScan => "interval-extended",
        },
    }
}

fn run_summary(iso: &BatchIsolation, names: &[String], limit: f64) -> RunSummary {
    let r = &iso.result;
    RunSummary {
        lambda: iso.lambda,
        active_set: r.active_set.clone(),
        active_variables: r.active_set.iter().map(|&j| names[j].clone()).collect(),
        objective: r.objective,
        reconstructed_statistic: iso.reconstructed_statistic,
        control_limit: limit,
        within_limit: iso.within_limit,
        limit_not_reached: iso.selection.as_ref().is_some_and(|s| s.limit_not_reached),
        iterations: r.iterations,
        converged: r.converged,
        primal_residual: r.primal_residual,
        dual_residual: r.dual_residual,
        relative_change: r.relative_change,
    }
}

/// One row per flagged sample: its λ, diagnostics and fault estimate.
fn write_sample_table(path: &Path, flagged: &[usize], runs: &[BatchIsolation], names: &[String]) -> CliResult<()> {
    let mut header: Vec<String> = [
        "sample_index",
        "lambda",
        "reconstructed_statistic",
        "within_limit",
        "converged",
        "iterations",
        "active_set",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(names.iter().cloned());
    let rows: Vec<Vec<String>> = flagged
        .iter()
        .zip(runs)
        .map(|(i, r)| {
            let mut row = vec![
                i.to_string(),
                r.lambda.to_string(),
                r.reconstructed_statistic.to_string(),
                r.within_limit.to_string(),
                r.result.converged.to_string(),
                r.result.iterations.to_string(),
                fault_isolation::selection::format_indices(&r.result.active_set),
            ];
            row.extend(r.result.f.iter().map(|v| v.to_string()));
            row
        })
        .collect();
    write_table(path, &header, &rows)
}

fn describe(set: &[usize], names: &[String]) -> String {
    if set.is_empty() {
        return "(none)".into();
    }
    set.iter().map(|&j| names[j].as_str()).collect::<Vec<_>>().join(", ")
}

fn print_bars(label: &str, names: &[String], values: &[f64], marked: &[usize]) {
    const WIDTH: f64 = 40.0;
    let top = values.iter().copied().fold(0.0, f64::max);
    let pad = names.iter().map(String::len).max().unwrap_or(0);
    println!("{label}:");
    for (j, (name, v)) in names.iter().zip(values).enumerate() {
        let len = if top > 0.0 { (v / top * WIDTH).round() as usize } else { 0 };
        let mark = if marked.contains(&j) { '*' } else { ' ' };
        println!("{mark} {name:>pad$} | {:<w$} {v:.4}", "#".repeat(len), w = WIDTH as usize);
    }
}
