use std::path::Path;

use anyhow::Result;
use guae_core::records::score_line;
use rayon::prelude::*;

use super::{read_lines, write_jsonl};
use crate::config::Settings;
use crate::manifest::{sidecar_path, RunManifest};

pub fn run(input: &Path, out: Option<&Path>, settings: &Settings) -> Result<()> {
    let lines = read_lines(input)?;
    let scored: Vec<String> = lines
        .par_iter()
        .map(|(no, line)| serde_json::to_string(&score_line(*no, line, &settings.reward)))
        .collect::<Result<_, _>>()?;
    write_jsonl(out, &scored)?;
    if let Some(out) = out {
        let mut m = RunManifest::new("score", settings);
        m.inputs.push(input.to_path_buf());
        m.outputs.push(out.to_path_buf());
        m.write(&sidecar_path(out))?;
    }
    Ok(())
}
