use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tempfile::TempDir;

use crate::{run_from, CliResult};

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Exit code a command would end with.
pub fn code(r: CliResult<()>) -> u8 {
    match r {
        Ok(()) => 0,
        Err(e) => e.exit_code(),
    }
}

pub fn faultiso(args: &[&str]) -> CliResult<()> {
    run_from(std::iter::once("faultiso").chain(args.iter().copied()))
}

pub fn indices(v: &Value) -> Vec<usize> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap() as usize)
        .collect()
}

/// Simulated data plus a five-component model in a scratch directory.
pub struct Fixture {
    pub dir: TempDir,
}

impl Fixture {
    pub fn new(fault: &str, seed: u64) -> Self {
        let f = Fixture {
            dir: TempDir::new().unwrap(),
        };
        let seed = seed.to_string();
        faultiso(&["simulate", "--out", s(&f.p("sim")), "--seed", &seed, "--fault", fault]).unwrap();
        faultiso(&[
            "train",
            "--input",
            s(&f.p("sim/train.csv")),
            "--out",
            s(&f.p("model.json")),
            "--components",
            "5",
        ])
        .unwrap();
        f
    }

    pub fn p(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn isolate(&self, extra: &[&str], out: &str) -> CliResult<()> {
        let (model, input, out) = (self.p("model.json"), self.p("sim/test.csv"), self.p(out));
        let mut args = vec!["isolate", "--model", s(&model), "--input", s(&input), "--out", s(&out)];
        args.extend_from_slice(extra);
        faultiso(&args)
    }

    pub fn summary(&self, out: &str) -> Value {
        let text = fs::read_to_string(self.p(&format!("{out}.summary.json"))).unwrap();
        serde_json::from_str(&text).unwrap()
    }
}
