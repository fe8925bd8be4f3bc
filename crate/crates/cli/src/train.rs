use fault_isolation::monitor::{MonitoringModel, Retention};

use crate::error::{CliError, CliResult};
use crate::io::{read_data, write_text};
use crate::manifest::{now_ms, sidecar, RunManifest};
use crate::TrainArgs;

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let started = now_ms();
    let data = read_data(&args.input)?;
    let retention = match args.components {
        Some(l) => Retention::Components(l),
        None => Retention::VarianceTarget(args.variance_target),
    };
    let model = MonitoringModel::fit(&data, retention, args.significance).map_err(CliError::input(&args.input))?;
    write_text(&args.out, &(model.to_json()? + "\n"))?;

    println!(
        "{} samples, {} variables: kept {} components ({:.2}% variance); T² limit {:.4}, SPE limit {:.4}",
        data.nrows(),
        data.ncols(),
        model.pca.components(),
        100.0 * model.pca.retained_variance(),
        model.limits.t2_limit,
        model.limits.spe_limit
    );

    let mut manifest = RunManifest::new("train", started);
    manifest.inputs.push(args.input.clone());
    manifest.outputs.push(args.out.clone());
    manifest.significance = Some(args.significance);
    manifest.write(&sidecar(&args.out, "manifest.json"))
}

#[cfg(test)]
mod tests {
    use std::fs;

    use fault_isolation::monitor::MonitoringModel;
    use tempfile::TempDir;

    use crate::test_support::{faultiso, s, Fixture};

    #[test]
    fn keeps_requested_components() {
        let f = Fixture::new("none", 1);
        let model = MonitoringModel::from_json(&fs::read_to_string(f.p("model.json")).unwrap()).unwrap();
        assert_eq!(model.pca.components(), 5);
        assert!(model.pca.retained_variance() > 0.85);
        assert_eq!(model.n_train, 700);
        assert!(f.p("model.json.manifest.json").exists());
    }

    #[test]
    fn rerun_writes_identical_model() {
        let f = Fixture::new("none", 2);
        let again = f.p("again.json");
        faultiso(&["train", "--input", s(&f.p("sim/train.csv")), "--out", s(&again), "--components", "5"]).unwrap();
        assert_eq!(fs::read(f.p("model.json")).unwrap(), fs::read(again).unwrap());
    }

    #[test]
    fn empty_input_exits_2_naming_the_file() {
        let dir = TempDir::new().unwrap();
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "").unwrap();
        let err = faultiso(&["train", "--input", s(&empty), "--out", s(&dir.path().join("m.json"))]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("empty.csv"));
    }
}
