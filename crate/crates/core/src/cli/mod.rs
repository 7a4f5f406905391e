//! Experiment front end: CSV ingestion, synthetic streams, experiment runs,
//! sweeps, mean-method comparisons and the flat `key=value` config files
//! read by the `ouda` binary.

mod data;
mod experiment;
mod generate;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

pub use data::{load_csv_stream, source_rows, write_csv, Dataset, DatasetSpec};
pub use experiment::{
    compare_means, run_experiment, sweep, Abort, DatasetInfo, ExperimentReport, MeanComparison, MeanComparisonRow,
    Summary, SweepCell, SweepReport,
};
pub use generate::{generate_drift_stream, DriftKind, DriftParams, GroundTruth};

use crate::error::{Error, Result};

/// Parses `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", i + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!("line {}: empty key", i + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

/// Splices the options of any `--config FILE` into the argument list right
/// after the subcommand, so that options given on the command line (which
/// come later) override them.
pub fn expand_config_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config_path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        match arg.to_str() {
            Some("--config") => {
                let path = iter
                    .next()
                    .ok_or_else(|| Error::InvalidConfig("--config needs a file".into()))?;
                config_path = Some(path);
            }
            Some(s) if s.starts_with("--config=") => {
                config_path = Some(OsString::from(&s["--config=".len()..]));
            }
            _ => rest.push(arg),
        }
    }
    let Some(path) = config_path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(Path::new(&path))?;
    let spliced: Vec<OsString> = parse_config(&text)?
        .into_iter()
        .flat_map(|(k, v)| [OsString::from(format!("--{k}")), OsString::from(v)])
        .collect();
    // The subcommand is the first bare word after the program name.
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(rest.len(), |p| p + 2);
    rest.splice(at..at, spliced);
    Ok(rest)
}
