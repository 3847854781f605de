//! CSV and manifest writers. Output bytes depend only on the config.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use bvlab_core::RateRecord;

use crate::config::ExperimentConfig;
use crate::experiments::RunOutput;
use crate::LabError;

/// Fixed 17-significant-digit rendering.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header plus one row per record, sorted by `param`.
pub fn render_csv(records: &[RateRecord]) -> String {
    let mut rows = records.to_vec();
    rows.sort_by(|a, b| a.param.total_cmp(&b.param));
    let mut s = String::from(RateRecord::HEADER);
    s.push('\n');
    for r in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            num(r.param),
            num(r.cost_gap),
            num(r.sup_dev),
            num(r.l1_dev),
            num(r.tv),
            num(r.wall_ms)
        );
    }
    s
}

pub fn csv_path(config: &ExperimentConfig) -> PathBuf {
    config.out.join(format!("{}.csv", config.experiment.id()))
}

pub fn manifest_path(config: &ExperimentConfig) -> PathBuf {
    config
        .out
        .join(format!("{}.manifest.json", config.experiment.id()))
}

pub fn write_artifacts(config: &ExperimentConfig, out: &RunOutput) -> Result<(), LabError> {
    fs::create_dir_all(&config.out)?;
    fs::write(csv_path(config), render_csv(&out.records))?;
    let manifest = serde_json::to_string_pretty(&out.manifest)
        .map_err(|e| LabError::Io(std::io::Error::other(e)))?;
    fs::write(manifest_path(config), manifest + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_sorted_and_fixed_width() {
        let rec = |p: f64| RateRecord {
            param: p,
            cost_gap: 0.1,
            sup_dev: 0.0,
            l1_dev: 0.0,
            tv: 2.0,
            wall_ms: 0.0,
        };
        let csv = render_csv(&[rec(2.0), rec(1.0)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "param,cost_gap,sup_dev,l1_dev,tv,wall_ms");
        assert!(lines[1].starts_with("1.0000000000000000e0,1.0000000000000001e-1,"));
        assert!(lines[2].starts_with("2.0000000000000000e0,"));
    }
}
