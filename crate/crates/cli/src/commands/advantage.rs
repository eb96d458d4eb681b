use std::path::Path;

use anyhow::Result;
use guae_core::records::AdvantageRecord;
use guae_core::RolloutGroup;
use rayon::prelude::*;
use serde_json::json;

use super::{read_lines, write_jsonl};
use crate::config::Settings;
use crate::manifest::{sidecar_path, RunManifest};

fn advantage_line(no: usize, line: &str, settings: &Settings) -> serde_json::Result<String> {
    let flagged = |error: String| json!({"line": no, "flagged": true, "error": error}).to_string();
    let group: RolloutGroup = match serde_json::from_str(line) {
        Ok(g) => g,
        Err(e) => return Ok(flagged(format!("malformed record: {e}"))),
    };
    if let Err(e) = group.validate() {
        return Ok(flagged(format!("invalid group: {e}")));
    }
    serde_json::to_string(&AdvantageRecord::compute(group, &settings.train.estimator))
}

pub fn run(input: &Path, out: Option<&Path>, settings: &Settings) -> Result<()> {
    let lines = read_lines(input)?;
    let rows: Vec<String> = lines
        .par_iter()
        .map(|(no, line)| advantage_line(*no, line, settings))
        .collect::<Result<_, _>>()?;
    write_jsonl(out, &rows)?;
    if let Some(out) = out {
        let mut m = RunManifest::new("advantage", settings);
        m.inputs.push(input.to_path_buf());
        m.outputs.push(out.to_path_buf());
        m.write(&sidecar_path(out))?;
    }
    Ok(())
}
