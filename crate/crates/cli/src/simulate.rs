use std::fs;

use fault_isolation::descriptor::StructureDescriptor;
use fault_isolation::simgen::{generate, Fault, SimConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{write_data, write_json, write_text};
use crate::manifest::{now_ms, RunManifest};
use crate::{FaultArg, SimulateArgs};

#[derive(Debug, Serialize)]
struct Truth<'a> {
    config: &'a SimConfig,
    /// 0-based.
    faulty_variables: &'a [usize],
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let started = now_ms();
    let cfg = SimConfig {
        n_train: args.n_train,
        n_test: args.n_test,
        fault_start: args.fault_start,
        seed: args.seed,
        fault: match args.fault {
            FaultArg::None => Fault::None,
            FaultArg::SensorBias => Fault::sensor_bias(),
            FaultArg::Multiplicative => Fault::multiplicative(),
        },
    };
    let sim = generate(&cfg).map_err(CliError::Core)?;
    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;

    let path = |name: &str| args.out.join(name);
    write_data(&path("train.csv"), &sim.train)?;
    write_data(&path("test.csv"), &sim.test)?;
    write_text(
        &path("blocks.json"),
        &(StructureDescriptor::Blocks(sim.truth.blocks.clone()).to_json() + "\n"),
    )?;
    write_text(
        &path("tree.json"),
        &(StructureDescriptor::Tree(sim.truth.tree.clone()).to_json() + "\n"),
    )?;
    write_json(
        &path("truth.json"),
        &Truth {
            config: &cfg,
            faulty_variables: &sim.truth.faulty_variables,
        },
    )?;
    println!(
        "wrote {} training and {} test samples to {}",
        cfg.n_train,
        cfg.n_test,
        args.out.display()
    );

    let mut manifest = RunManifest::new("simulate", started);
    manifest.outputs = ["train.csv", "test.csv", "blocks.json", "tree.json", "truth.json"]
        .iter()
        .map(|n| path(n))
        .collect();
    manifest.seed = Some(args.seed);
    manifest.write(&path("manifest.json"))
}

#[cfg(test)]
mod tests {
    use std::fs;

    use fault_isolation::descriptor::StructureDescriptor;
    use serde_json::Value;

    use crate::test_support::Fixture;

    #[test]
    fn writes_valid_descriptors_and_truth() {
        let f = Fixture::new("none", 0);
        for name in ["blocks.json", "tree.json"] {
            let text = fs::read_to_string(f.p(&format!("sim/{name}"))).unwrap();
            StructureDescriptor::from_json(&text, 15).unwrap();
        }
        let truth: Value = serde_json::from_str(&fs::read_to_string(f.p("sim/truth.json")).unwrap()).unwrap();
        assert_eq!(truth["faulty_variables"], serde_json::json!([]));
        assert!(f.p("sim/manifest.json").exists());
    }
}
