use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use fault_isolation::data::DataMatrix;
use fault_isolation::monitor::MonitoringModel;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_data(path: &Path) -> CliResult<DataMatrix> {
    let file = File::open(path).map_err(CliError::io(path))?;
    DataMatrix::read_csv(file).map_err(CliError::input(path))
}

pub fn write_data(path: &Path, data: &DataMatrix) -> CliResult<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    data.write_csv(BufWriter::new(file)).map_err(CliError::input(path))
}

pub fn read_model(path: &Path) -> CliResult<MonitoringModel> {
    MonitoringModel::from_json(&read_text(path)?).map_err(CliError::input(path))
}

/// One CSV record per item, header from the field names.
pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let fail = |e: csv::Error| CliError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Records with a header that is only known at run time.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let fail = |e: csv::Error| CliError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_text(path, &(text + "\n"))
}
