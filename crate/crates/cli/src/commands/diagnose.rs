use std::path::Path;

use anyhow::{Context, Result};
use guae_core::diagnostics::write_scatter_csv;
use guae_core::records::parse_diagnostics_line;
use guae_core::{estimate, DiagnosticsAccumulator, Histogram, RolloutGroup};
use rayon::prelude::*;
use serde_json::json;

use super::{create_file, create_out_dir, read_lines};
use crate::config::Settings;
use crate::manifest::RunManifest;

pub fn run(input: &Path, out: Option<&Path>, deltas: &[f64], settings: &Settings) -> Result<()> {
    let lines = read_lines(input)?;
    let dir = create_out_dir(out, "diagnose")?;
    let est = settings.train.estimator;

    let parsed: Vec<Option<(RolloutGroup, Vec<f64>)>> = lines
        .par_iter()
        .map(|(_, line)| {
            parse_diagnostics_line(line).map(|d| {
                let adv = d
                    .advantages
                    .unwrap_or_else(|| estimate(&d.group.rewards, &est).advantages);
                (d.group, adv)
            })
        })
        .collect();

    let mut acc = DiagnosticsAccumulator::new(
        settings.low_std_threshold,
        deltas,
        Histogram::default_edges(),
    )?;
    let mut scatter = Vec::new();
    for item in &parsed {
        match item {
            Some((group, adv)) => scatter.push(acc.add_group(group, adv)),
            None => acc.skip_line(),
        }
    }
    let report = acc.report();

    let report_path = dir.join("report.csv");
    let scatter_path = dir.join("scatter.csv");
    let hist_path = dir.join("hist.csv");
    report
        .write_csv(create_file(&report_path)?)
        .with_context(|| format!("cannot write {}", report_path.display()))?;
    write_scatter_csv(create_file(&scatter_path)?, &scatter)
        .with_context(|| format!("cannot write {}", scatter_path.display()))?;
    report
        .histogram
        .write_csv(create_file(&hist_path)?)
        .with_context(|| format!("cannot write {}", hist_path.display()))?;

    let mut manifest = RunManifest::new("diagnose", settings);
    manifest.options = json!({ "deltas": deltas });
    manifest.inputs.push(input.to_path_buf());
    manifest.outputs = vec![report_path, scatter_path, hist_path];
    manifest.write(&dir.join("manifest.json"))
}
