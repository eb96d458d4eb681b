//! Action-match plus thought-action consistency reward.
//!
//! The per-response reward is the convex combination
//! `r = lambda * r_am + (1 - lambda) * r_cons`, where `r_am` scores the
//! predicted action against the reference (gated on matching action type)
//! and `r_cons` rescales a rule-based thought-action consistency score.

mod consistency;
pub mod swipe;
pub mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{parse_action, Action};

pub use consistency::{
    consistency_reward, score_consistency, ConsistencyLabel, ConsistencyVerdict,
    ARGUMENT_CONFLICT_SCORE, CONSISTENT_SCORE, TYPE_CONFLICT_SCORE,
};
use swipe::{magnitude_similarity, quantize_direction};
use text::text_similarity;

/// Minimum normalized text similarity for a typed string to count as grounded.
pub const TEXT_GROUNDING_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum RewardConfigError {
    #[error("lambda must lie in [0, 1], got {0}")]
    Lambda(f64),
    #[error("tau_click must be positive, got {0}")]
    TauClick(f64),
    #[error("click_threshold must be positive, got {0}")]
    ClickThreshold(f64),
    #[error("rho must lie in (0, 1), got {0}")]
    Rho(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Weight on action match; consistency gets `1 - lambda`.
    pub lambda: f64,
    /// Click decay scale, normalized screen units.
    pub tau_click: f64,
    /// Clicks farther than this from the reference score zero.
    pub click_threshold: f64,
    /// Partial credit for an enumerated action of the right type but wrong argument.
    pub rho: f64,
    /// Disable the `rho` branch: wrong enumerated arguments score 0.
    pub strict_enumerated: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lambda: 0.85,
            tau_click: 60.0,
            click_threshold: 140.0,
            rho: 0.5,
            strict_enumerated: false,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardConfigError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(RewardConfigError::Lambda(self.lambda));
        }
        if !(self.tau_click > 0.0) {
            return Err(RewardConfigError::TauClick(self.tau_click));
        }
        if !(self.click_threshold > 0.0) {
            return Err(RewardConfigError::ClickThreshold(self.click_threshold));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(RewardConfigError::Rho(self.rho));
        }
        Ok(())
    }
}

/// Result of comparing a predicted action with its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionMatch {
    /// Argument similarity in `[0, 1]`.
    pub phi: f64,
    pub r_am: f64,
    pub type_match: bool,
}

pub fn action_match(predicted: &Action, reference: &Action, cfg: &RewardConfig) -> ActionMatch {
    let phi = match (predicted, reference) {
        (Action::Click { at: p }, Action::Click { at: r }) => {
            let d = p.distance(r);
            if d <= cfg.click_threshold {
                (-d / cfg.tau_click).exp()
            } else {
                0.0
            }
        }
        (Action::Type { text: p }, Action::Type { text: r }) => text_similarity(p, r),
        (Action::Swipe { from: pf, to: pt }, Action::Swipe { from: rf, to: rt }) => {
            if quantize_direction(*pf, *pt) != quantize_direction(*rf, *rt) {
                0.0
            } else {
                0.5 + 0.5 * magnitude_similarity(pf.distance(pt), rf.distance(rt))
            }
        }
        (Action::SystemButton { button: p }, Action::SystemButton { button: r }) => {
            f64::from(u8::from(p == r))
        }
        (Action::Terminate { status: p }, Action::Terminate { status: r }) => {
            f64::from(u8::from(p == r))
        }
        _ => {
            return ActionMatch {
                phi: 0.0,
                r_am: 0.0,
                type_match: false,
            }
        }
    };
    let enumerated_miss = phi == 0.0
        && matches!(
            predicted,
            Action::SystemButton { .. } | Action::Terminate { .. }
        );
    let r_am = if enumerated_miss && !cfg.strict_enumerated {
        cfg.rho
    } else {
        phi
    };
    ActionMatch {
        phi,
        r_am,
        type_match: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_am: f64,
    pub r_cons: f64,
    pub r_combined: f64,
    pub phi: f64,
    pub type_match: bool,
    /// False when the prediction could not be parsed into an action.
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parse_error: Option<String>,
    pub consistency: ConsistencyVerdict,
}

/// Combined reward for one raw completion.
///
/// An unparsable prediction is scored as an invalid action: `r_am = 0` and a
/// neutral consistency verdict.
pub fn combined_reward(
    thought: &str,
    predicted_raw: &str,
    reference: &Action,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let (am, consistency, parse_error) = match parse_action(predicted_raw) {
        Ok(predicted) => (
            action_match(&predicted, reference, cfg),
            score_consistency(thought, &predicted),
            None,
        ),
        Err(e) => (
            ActionMatch {
                phi: 0.0,
                r_am: 0.0,
                type_match: false,
            },
            ConsistencyVerdict::neutral(),
            Some(e.to_string()),
        ),
    };
    let r_cons = consistency_reward(&consistency);
    RewardBreakdown {
        r_am: am.r_am,
        r_cons,
        r_combined: cfg.lambda * am.r_am + (1.0 - cfg.lambda) * r_cons,
        phi: am.phi,
        type_match: am.type_match,
        valid: parse_error.is_none(),
        parse_error,
        consistency,
    }
}

/// Step-level Type / Grounding / SR verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub type_ok: bool,
    pub grounding_ok: bool,
    pub success: bool,
}

impl StepVerdict {
    pub fn failed() -> Self {
        StepVerdict {
            type_ok: false,
            grounding_ok: false,
            success: false,
        }
    }
}

pub fn evaluate_step(predicted: &Action, reference: &Action, cfg: &RewardConfig) -> StepVerdict {
    let type_ok = predicted.kind() == reference.kind();
    let grounding_ok = match (predicted, reference) {
        (Action::Click { at: p }, Action::Click { at: r }) => p.distance(r) <= cfg.click_threshold,
        (Action::Type { text: p }, Action::Type { text: r }) => {
            text_similarity(p, r) >= TEXT_GROUNDING_THRESHOLD
        }
        (Action::Swipe { from: pf, to: pt }, Action::Swipe { from: rf, to: rt }) => {
            quantize_direction(*pf, *pt) == quantize_direction(*rf, *rt)
        }
        (Action::SystemButton { button: p }, Action::SystemButton { button: r }) => p == r,
        (Action::Terminate { status: p }, Action::Terminate { status: r }) => p == r,
        _ => false,
    };
    StepVerdict {
        type_ok,
        grounding_ok,
        success: type_ok && grounding_ok,
    }
}
