//! JSONL record types for batch scoring, advantage reports and diagnostics
//! ingestion.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::{parse_action, parse_value, Action, ParseOptions};
use crate::advantage::{estimate, AdvantageResult, EstimatorConfig, RolloutGroup};
use crate::reward::{
    combined_reward, evaluate_step, ConsistencyLabel, RewardBreakdown, RewardConfig, StepVerdict,
};

/// One batch-scoring input line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreInput {
    pub thought: String,
    pub prediction: String,
    pub reference: Value,
}

/// One batch-scoring output line. Records that could not be scored keep
/// their position in the output with `error` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub line: usize,
    #[serde(flatten)]
    pub breakdown: Option<RewardBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<ConsistencyLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<StepVerdict>,
    /// Set when the record was malformed or the prediction unparsable.
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Scores one raw JSONL line. Never fails; problems are reported in-band.
pub fn score_line(line_no: usize, line: &str, cfg: &RewardConfig) -> ScoreOutput {
    let flagged = |error: String| ScoreOutput {
        line: line_no,
        breakdown: None,
        label: None,
        verdict: None,
        flagged: true,
        error: Some(error),
    };
    let input: ScoreInput = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return flagged(format!("malformed record: {e}")),
    };
    let reference: Action = match parse_value(&input.reference, ParseOptions::default()) {
        Ok(a) => a,
        Err(e) => return flagged(format!("invalid reference: {e}")),
    };
    let breakdown = combined_reward(&input.thought, &input.prediction, &reference, cfg);
    let verdict = match parse_action(&input.prediction) {
        Ok(predicted) => evaluate_step(&predicted, &reference, cfg),
        Err(_) => StepVerdict::failed(),
    };
    let error = breakdown
        .parse_error
        .as_ref()
        .map(|e| format!("invalid prediction: {e}"));
    ScoreOutput {
        line: line_no,
        label: Some(breakdown.consistency.label),
        verdict: Some(verdict),
        flagged: !breakdown.valid,
        error,
        breakdown: Some(breakdown),
    }
}

/// Advantage-report line: the group-log echo plus the estimator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRecord {
    #[serde(flatten)]
    pub group: RolloutGroup,
    #[serde(flatten)]
    pub result: AdvantageResult,
}

impl AdvantageRecord {
    pub fn compute(group: RolloutGroup, cfg: &EstimatorConfig) -> Self {
        let result = estimate(&group.rewards, cfg);
        AdvantageRecord { group, result }
    }
}

/// A diagnostics input line: either an advantage report (advantages already
/// present) or a bare group log.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsInput {
    pub group: RolloutGroup,
    pub advantages: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct LooseGroup {
    #[serde(flatten)]
    group: RolloutGroup,
    #[serde(default)]
    advantages: Option<Vec<f64>>,
}

/// Parses one diagnostics line. Returns `None` for anything that is not a
/// valid group (bad JSON, empty or out-of-range rewards, or an advantages
/// array whose length disagrees with the rewards).
pub fn parse_diagnostics_line(line: &str) -> Option<DiagnosticsInput> {
    let loose: LooseGroup = serde_json::from_str(line).ok()?;
    loose.group.validate().ok()?;
    if let Some(adv) = &loose.advantages {
        if adv.len() != loose.group.rewards.len() || adv.iter().any(|a| !a.is_finite()) {
            return None;
        }
    }
    Some(DiagnosticsInput {
        group: loose.group,
        advantages: loose.advantages,
    })
}
