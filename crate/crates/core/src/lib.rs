//! Consistency-aware reward scoring and guided advantage estimation for
//! group-relative policy optimization on GUI agents.
//!
//! The crate is split by concern:
//!
//! * [`action`] parses and canonicalizes tool-call actions.
//! * [`reward`] scores predictions against references (action match,
//!   thought-action consistency, step metrics).
//! * [`advantage`] computes group advantages under base GRPO, anchor-only,
//!   VAT-only and the full guided estimator.
//! * [`sim`] is a tabular softmax-policy trainer used to reproduce advantage
//!   collapse and the escape from it.
//! * [`diagnostics`] aggregates collapse statistics over rollout-group logs.
//! * [`records`] holds the JSONL record types shared with the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod advantage;
pub mod diagnostics;
pub mod records;
pub mod reward;
pub mod sim;
mod sum;

pub use action::{
    category_of, parse_action, parse_action_with, rescale_to_pixels, Action, ActionCategory,
    ActionError, ActionKind, Button, ParseOptions, PixelAction, PixelPoint, Point, ScreenSize,
    Status,
};
pub use advantage::{
    anchor_stats, base_grpo, estimate, sigma0_uniform, vat_exponent, AdvantageError,
    AdvantageResult, EstimatorConfig, RolloutGroup, StdKind, Variant,
};
pub use diagnostics::{
    advantage_histogram, group_scatter, near_zero_mass, DiagnosticsAccumulator, DiagnosticsError,
    DiagnosticsReport, GroupStats, Histogram,
};
pub use reward::{
    action_match, combined_reward, consistency_reward, evaluate_step, score_consistency,
    ConsistencyLabel, ConsistencyVerdict, RewardBreakdown, RewardConfig, RewardConfigError,
    StepVerdict,
};
pub use sim::{
    collapse_schedule_sim, objective_and_gradient, rollout, train, BanditEnv, PolicyState,
    RewardLevels, SchedulePoint, SimError, TraceRow, TrainConfig, TrainTrace,
};
