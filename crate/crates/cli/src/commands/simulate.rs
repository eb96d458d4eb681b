use std::path::Path;

use anyhow::{Context, Result};
use guae_core::sim::write_schedule_csv;
use guae_core::{collapse_schedule_sim, train, BanditEnv, PolicyState, TrainTrace, Variant};
use rayon::prelude::*;
use serde_json::json;

use super::{create_file, create_out_dir};
use crate::config::Settings;
use crate::manifest::RunManifest;

pub fn trace_file_name(variant: Variant) -> String {
    format!("trace-{}.csv", variant.as_str())
}

/// Every variant starts from the same policy and seed, so rollouts share
/// their random streams step by step.
fn run_variant(settings: &Settings, variant: Variant) -> Result<(Settings, TrainTrace)> {
    let mut s = *settings;
    s.train.estimator.variant = variant;
    let sim = &s.sim;
    let env = BanditEnv::new(sim.n_actions, vec![0; sim.n_states])?;
    let policy =
        PolicyState::concentrated(sim.n_actions, &vec![1; sim.n_states], sim.init_mass, s.seed)?;
    let trace = train(&env, &s.train, policy)?;
    Ok((s, trace))
}

pub fn run(
    out: Option<&Path>,
    compare: &[Variant],
    schedule: &[f64],
    settings: &Settings,
) -> Result<()> {
    let dir = create_out_dir(out, "simulate")?;
    let mut variants = if compare.is_empty() {
        vec![settings.train.estimator.variant]
    } else {
        compare.to_vec()
    };
    variants.dedup();

    let mut manifest = RunManifest::new("simulate", settings);
    manifest.options = json!({
        "variants": variants.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
        "schedule": schedule,
    });

    let runs: Vec<(Settings, TrainTrace)> = variants
        .par_iter()
        .map(|&v| run_variant(settings, v))
        .collect::<Result<_>>()?;
    for ((s, trace), v) in runs.iter().zip(&variants) {
        let path = dir.join(trace_file_name(*v));
        let echo = serde_json::to_string(s)?;
        trace
            .write_csv(create_file(&path)?, &echo)
            .with_context(|| format!("cannot write {}", path.display()))?;
        manifest.outputs.push(path);
    }

    if !schedule.is_empty() {
        let points = collapse_schedule_sim(
            &settings.train,
            schedule,
            settings.sim.n_groups,
            settings.sim.bernoulli_p,
            settings.seed,
        )?;
        let path = dir.join("schedule.csv");
        write_schedule_csv(create_file(&path)?, &points)
            .with_context(|| format!("cannot write {}", path.display()))?;
        manifest.outputs.push(path);
    }

    manifest.write(&dir.join("manifest.json"))
}
