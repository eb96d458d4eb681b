//! Group-relative advantage estimators.
//!
//! All four estimators share the shape `A_i = (r_i - mu) / (scale + eps)`:
//!
//! | variant       | `mu`, `sigma`              | `scale`       |
//! |---------------|----------------------------|---------------|
//! | `BaseGrpo`    | empirical                  | `sigma`       |
//! | `AnchorOnly`  | group extended with {0, 1} | `sigma_ext`   |
//! | `VatOnly`     | empirical                  | `sigma^p`     |
//! | `Guae`        | group extended with {0, 1} | `sigma_ext^p` |
//!
//! where the tempering exponent `p` interpolates between `p_low` (sharpen
//! low-dispersion groups) and `p_high` (damp high-dispersion groups) through a
//! logistic gate on the deviation of `sigma` from the reference volatility
//! `sigma0 = 1/sqrt(12)`, the standard deviation of U(0, 1).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AdvantageError {
    #[error("invalid range: hi ({hi}) must exceed lo ({lo})")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("rollout group `{0}` is empty")]
    EmptyGroup(String),
    #[error("rollout group `{group}` has reward {reward} outside [0, 1]")]
    RewardOutOfRange { group: String, reward: f64 },
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("unknown estimator variant `{0}`")]
    UnknownVariant(String),
}

/// K scalar rewards for one step input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub group_id: String,
    pub rewards: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<i64>,
}

impl RolloutGroup {
    pub fn new(group_id: impl Into<String>, rewards: Vec<f64>) -> Result<Self, AdvantageError> {
        let group = RolloutGroup {
            group_id: group_id.into(),
            rewards,
            step: None,
        };
        group.validate()?;
        Ok(group)
    }

    pub fn validate(&self) -> Result<(), AdvantageError> {
        if self.rewards.is_empty() {
            return Err(AdvantageError::EmptyGroup(self.group_id.clone()));
        }
        if let Some(&bad) = self.rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(AdvantageError::RewardOutOfRange {
                group: self.group_id.clone(),
                reward: bad,
            });
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.rewards.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "base")]
    BaseGrpo,
    #[serde(rename = "anchor-only")]
    AnchorOnly,
    #[serde(rename = "vat-only")]
    VatOnly,
    #[default]
    #[serde(rename = "guae")]
    Guae,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::BaseGrpo,
        Variant::AnchorOnly,
        Variant::VatOnly,
        Variant::Guae,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::BaseGrpo => "base",
            Variant::AnchorOnly => "anchor-only",
            Variant::VatOnly => "vat-only",
            Variant::Guae => "guae",
        }
    }

    pub fn uses_anchors(&self) -> bool {
        matches!(self, Variant::AnchorOnly | Variant::Guae)
    }

    pub fn uses_tempering(&self) -> bool {
        matches!(self, Variant::VatOnly | Variant::Guae)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = AdvantageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "base" | "basegrpo" | "grpo" => Ok(Variant::BaseGrpo),
            "anchoronly" | "anchor" => Ok(Variant::AnchorOnly),
            "vatonly" | "vat" => Ok(Variant::VatOnly),
            "guae" => Ok(Variant::Guae),
            _ => Err(AdvantageError::UnknownVariant(s.to_owned())),
        }
    }
}

/// Divisor used for the empirical (non-anchored) group variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    /// Divide by K.
    #[default]
    Population,
    /// Divide by K - 1 (0 when K = 1).
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub variant: Variant,
    /// Shared stabilizer for the gate deviation and the advantage denominator.
    pub epsilon: f64,
    /// Reference volatility for the tempering gate.
    pub sigma0: f64,
    /// Gate temperature.
    pub tau_gate: f64,
    /// Exponent applied to low-dispersion groups (> 1 sharpens).
    pub p_low: f64,
    /// Exponent applied to high-dispersion groups (< 1 damps).
    pub p_high: f64,
    pub std_kind: StdKind,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            variant: Variant::Guae,
            epsilon: 1e-6,
            sigma0: 1.0 / 12f64.sqrt(),
            tau_gate: 5.0,
            p_low: 1.5,
            p_high: 0.8,
            std_kind: StdKind::Population,
        }
    }
}

impl EstimatorConfig {
    pub fn with_variant(variant: Variant) -> Self {
        EstimatorConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AdvantageError> {
        let bad = |msg: String| Err(AdvantageError::InvalidConfig(msg));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.sigma0 > 0.0) {
            return bad(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        if !(self.tau_gate > 0.0) {
            return bad(format!("tau_gate must be positive, got {}", self.tau_gate));
        }
        if !(self.p_low > 1.0 && 1.0 > self.p_high && self.p_high > 0.0) {
            return bad(format!(
                "need p_low > 1 > p_high > 0, got p_low={} p_high={}",
                self.p_low, self.p_high
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageResult {
    pub advantages: Vec<f64>,
    /// Mean used for centering (anchored for anchor variants).
    pub mu: f64,
    /// Dispersion fed to the denominator (anchored for anchor variants).
    pub sigma: f64,
    pub gate: Option<f64>,
    #[serde(rename = "p")]
    pub exponent: Option<f64>,
    pub variant: Variant,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_std(xs: &[f64], kind: StdKind) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    if xs.windows(2).all(|w| w[0] == w[1]) {
        return (xs[0], 0.0);
    }
    let mu = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
    let denom = match kind {
        StdKind::Population => xs.len() as f64,
        StdKind::Sample if xs.len() > 1 => (xs.len() - 1) as f64,
        StdKind::Sample => return (mu, 0.0),
    };
    (mu, (ss / denom).sqrt())
}

/// Empirical group mean and standard deviation.
pub fn group_stats(rewards: &[f64], kind: StdKind) -> (f64, f64) {
    mean_std(rewards, kind)
}

/// Mean and population standard deviation of the rewards extended with the
/// anchors 0 and 1. The result is bounded below by `1/sqrt(2(K+2))`.
pub fn anchor_stats(rewards: &[f64]) -> (f64, f64) {
    let n = (rewards.len() + 2) as f64;
    let mu = (rewards.iter().sum::<f64>() + 1.0) / n;
    let ss = rewards.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>()
        + mu * mu
        + (1.0 - mu) * (1.0 - mu);
    (mu, (ss / n).sqrt())
}

/// Logistic gate on the normalized deviation of `sigma` from `sigma0`, and the
/// tempering exponent it selects.
pub fn vat_exponent(sigma: f64, cfg: &EstimatorConfig) -> (f64, f64) {
    let deviation = (sigma - cfg.sigma0) / (cfg.sigma0 + cfg.epsilon);
    let gate = 1.0 / (1.0 + (-cfg.tau_gate * deviation).exp());
    let p = cfg.p_low + gate * (cfg.p_high - cfg.p_low);
    (gate, p)
}

/// Standard GRPO: `(r_i - mu) / (sigma + eps)`.
pub fn base_grpo(rewards: &[f64], cfg: &EstimatorConfig) -> AdvantageResult {
    let (mu, sigma) = mean_std(rewards, cfg.std_kind);
    AdvantageResult {
        advantages: rewards
            .iter()
            .map(|r| (r - mu) / (sigma + cfg.epsilon))
            .collect(),
        mu,
        sigma,
        gate: None,
        exponent: None,
        variant: Variant::BaseGrpo,
    }
}

/// Dispatches on `cfg.variant`.
pub fn estimate(rewards: &[f64], cfg: &EstimatorConfig) -> AdvantageResult {
    let centered = |mu: f64, scale: f64| -> Vec<f64> {
        rewards
            .iter()
            .map(|r| (r - mu) / (scale + cfg.epsilon))
            .collect()
    };
    match cfg.variant {
        Variant::BaseGrpo => base_grpo(rewards, cfg),
        Variant::AnchorOnly => {
            let (mu, sigma) = anchor_stats(rewards);
            AdvantageResult {
                advantages: centered(mu, sigma),
                mu,
                sigma,
                gate: None,
                exponent: None,
                variant: cfg.variant,
            }
        }
        Variant::VatOnly => {
            let (mu, sigma) = mean_std(rewards, cfg.std_kind);
            let (gate, p) = vat_exponent(sigma, cfg);
            let base = if sigma > 0.0 { sigma } else { cfg.epsilon };
            AdvantageResult {
                advantages: centered(mu, base.powf(p)),
                mu,
                sigma,
                gate: Some(gate),
                exponent: Some(p),
                variant: cfg.variant,
            }
        }
        Variant::Guae => {
            let (mu, sigma) = anchor_stats(rewards);
            let (gate, p) = vat_exponent(sigma, cfg);
            AdvantageResult {
                advantages: centered(mu, sigma.powf(p)),
                mu,
                sigma,
                gate: Some(gate),
                exponent: Some(p),
                variant: cfg.variant,
            }
        }
    }
}

impl RolloutGroup {
    pub fn estimate(&self, cfg: &EstimatorConfig) -> AdvantageResult {
        estimate(&self.rewards, cfg)
    }
}

/// Standard deviation of U(lo, hi): `(hi - lo) / sqrt(12)`.
pub fn sigma0_uniform(lo: f64, hi: f64) -> Result<f64, AdvantageError> {
    if !(hi > lo) {
        return Err(AdvantageError::InvalidRange { lo, hi });
    }
    Ok((hi - lo) / 12f64.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // High-precision (40-digit) reference values computed offline with an
    // arbitrary-precision evaluation of the estimator formulas.
    const GATE_AT_0_3: f64 = 0.548_881_308_457_383_5;
    const P_AT_0_3: f64 = 1.115_783_084_079_831_6;
    const GATE_AT_0_5: f64 = 0.974_918_940_218_616_8;
    const P_AT_0_5: f64 = 0.817_556_741_846_968_2;
    const GUAE_ALL_ONES_K8: f64 = 0.383_193_024_563_846_4;
    const GUAE_ONE_OF_EIGHT: [f64; 2] = [1.806_358_902_651_553_5, -0.451_589_725_662_888_4];
    const VAT_ONE_OF_EIGHT: [f64; 2] = [2.728_724_512_212_132_2, -0.389_817_787_458_876];

    fn cfg(variant: Variant) -> EstimatorConfig {
        EstimatorConfig::with_variant(variant)
    }

    /// Brute-force population statistics of an explicit multiset.
    fn brute_stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mu = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
        (mu, var.sqrt())
    }

    #[test]
    fn base_all_equal_is_zero() {
        let r = base_grpo(&[1.0; 8], &cfg(Variant::BaseGrpo));
        assert!(r.advantages.iter().all(|&a| a == 0.0));
        assert!(r.gate.is_none() && r.exponent.is_none());
        assert_eq!(
            base_grpo(&[0.5], &cfg(Variant::BaseGrpo)).advantages,
            vec![0.0]
        );
    }

    #[test]
    fn base_two_point_group() {
        let r = base_grpo(&[1.0, 0.0], &cfg(Variant::BaseGrpo));
        assert_abs_diff_eq!(r.advantages[0], 0.999_998_000_004, epsilon = 1e-12);
        assert_abs_diff_eq!(r.advantages[1], -0.999_998_000_004, epsilon = 1e-12);
    }

    #[test]
    fn anchor_examples() {
        let (mu, sigma) = anchor_stats(&[1.0; 8]);
        assert_abs_diff_eq!(mu, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma, 0.3, epsilon = 1e-15);
        let mut ext = vec![1.0; 8];
        ext.extend([0.0, 1.0]);
        let (bmu, bsigma) = brute_stats(&ext);
        assert_abs_diff_eq!(mu, bmu, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma, bsigma, epsilon = 1e-15);
        // Closed form sqrt(K+1)/(K+2).
        assert_abs_diff_eq!(sigma, 9f64.sqrt() / 10.0, epsilon = 1e-15);

        let (mu, sigma) = anchor_stats(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(mu, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma, 0.5, epsilon = 1e-15);

        let (mu, _) = anchor_stats(&[0.0; 8]);
        assert_abs_diff_eq!(mu, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(0.0 - mu, -1.0 / 10.0, epsilon = 1e-15);
    }

    #[test]
    fn gate_examples() {
        let c = EstimatorConfig::default();
        let (g, p) = vat_exponent(c.sigma0, &c);
        assert_abs_diff_eq!(g, 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(p, (c.p_low + c.p_high) / 2.0, epsilon = 1e-5);
        let (g, p) = vat_exponent(0.3, &c);
        assert_abs_diff_eq!(g, GATE_AT_0_3, epsilon = 1e-12);
        assert_abs_diff_eq!(p, P_AT_0_3, epsilon = 1e-12);
        let (g, p) = vat_exponent(0.5, &c);
        assert_abs_diff_eq!(g, GATE_AT_0_5, epsilon = 1e-12);
        assert_abs_diff_eq!(p, P_AT_0_5, epsilon = 1e-12);
    }

    #[test]
    fn guae_collapsed_groups() {
        let c = cfg(Variant::Guae);
        let ones = estimate(&[1.0; 8], &c);
        let zeros = estimate(&[0.0; 8], &c);
        for (a, b) in ones.advantages.iter().zip(&zeros.advantages) {
            assert_abs_diff_eq!(*a, GUAE_ALL_ONES_K8, epsilon = 1e-9);
            assert_abs_diff_eq!(*b, -GUAE_ALL_ONES_K8, epsilon = 1e-9);
        }
        assert!(estimate(&[1.0; 8], &cfg(Variant::BaseGrpo))
            .advantages
            .iter()
            .all(|&a| a == 0.0));
    }

    #[test]
    fn mixed_group_variants_differ() {
        let mut r = vec![0.0; 8];
        r[0] = 1.0;
        let guae = estimate(&r, &cfg(Variant::Guae));
        assert_abs_diff_eq!(guae.advantages[0], GUAE_ONE_OF_EIGHT[0], epsilon = 1e-9);
        assert_abs_diff_eq!(guae.advantages[1], GUAE_ONE_OF_EIGHT[1], epsilon = 1e-9);
        let vat = estimate(&r, &cfg(Variant::VatOnly));
        assert_abs_diff_eq!(vat.advantages[0], VAT_ONE_OF_EIGHT[0], epsilon = 1e-9);
        assert_abs_diff_eq!(vat.advantages[1], VAT_ONE_OF_EIGHT[1], epsilon = 1e-9);
        let anchor = estimate(&r, &cfg(Variant::AnchorOnly));
        assert_abs_diff_eq!(anchor.advantages[0], 0.8 / (0.4 + 1e-6), epsilon = 1e-12);
        assert!((vat.advantages[0] - anchor.advantages[0]).abs() > 0.1);
    }

    #[test]
    fn vat_only_guards_zero_sigma() {
        let r = estimate(&[0.7; 4], &cfg(Variant::VatOnly));
        assert!(r.advantages.iter().all(|a| a.is_finite() && *a == 0.0));
    }

    #[test]
    fn sample_std_toggle() {
        let c = EstimatorConfig {
            std_kind: StdKind::Sample,
            ..cfg(Variant::BaseGrpo)
        };
        let r = estimate(&[1.0, 0.0], &c);
        assert_abs_diff_eq!(r.sigma, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(estimate(&[0.3], &c).sigma, 0.0);
    }

    #[test]
    fn sigma0_examples() {
        assert_abs_diff_eq!(
            sigma0_uniform(0.0, 1.0).unwrap(),
            0.288_675_134_594_812_9,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            sigma0_uniform(0.0, 2.0).unwrap(),
            0.577_350_269_189_625_8,
            epsilon = 1e-15
        );
        assert!(sigma0_uniform(0.3, 0.3).is_err());
        assert!(sigma0_uniform(1.0, 0.0).is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("guae".parse::<Variant>().unwrap(), Variant::Guae);
        assert_eq!("vat-only".parse::<Variant>().unwrap(), Variant::VatOnly);
        assert_eq!(
            "Anchor_Only".parse::<Variant>().unwrap(),
            Variant::AnchorOnly
        );
        assert_eq!("base".parse::<Variant>().unwrap(), Variant::BaseGrpo);
        assert!("dapo".parse::<Variant>().is_err());
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let flat = EstimatorConfig {
            p_low: 1.0,
            p_high: 1.0,
            ..Default::default()
        };
        assert!(flat.validate().is_err());
    }

    #[test]
    fn group_validation() {
        assert!(RolloutGroup::new("g", vec![]).is_err());
        assert!(RolloutGroup::new("g", vec![0.5, 1.2]).is_err());
        assert_eq!(RolloutGroup::new("g", vec![0.5]).unwrap().k(), 1);
    }

    fn arb_group() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..=1.0, 1..=64)
    }

    proptest! {
        #[test]
        fn anchor_lower_bound(r in arb_group()) {
            let (_, sigma) = anchor_stats(&r);
            let bound = 1.0 / (2.0 * (r.len() + 2) as f64).sqrt();
            prop_assert!(sigma >= bound - 1e-12);
        }

        #[test]
        fn popoviciu(r in arb_group()) {
            let (_, s) = group_stats(&r, StdKind::Population);
            let (_, s_ext) = anchor_stats(&r);
            prop_assert!(s <= 0.5 + 1e-12 && s_ext <= 0.5 + 1e-12);
        }

        #[test]
        fn base_is_shift_invariant_anchors_are_not(r in proptest::collection::vec(0.0f64..=0.5, 2..=16), shift in 0.1f64..0.5) {
            prop_assume!(r.iter().any(|x| (x - r[0]).abs() > 1e-3));
            let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
            let a = estimate(&r, &cfg(Variant::BaseGrpo));
            let b = estimate(&shifted, &cfg(Variant::BaseGrpo));
            for (x, y) in a.advantages.iter().zip(&b.advantages) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let a = estimate(&r, &cfg(Variant::AnchorOnly));
            let b = estimate(&shifted, &cfg(Variant::AnchorOnly));
            let diff: f64 = a.advantages.iter().zip(&b.advantages).map(|(x, y)| (x - y).abs()).sum();
            prop_assert!(diff > 1e-6);
        }

        #[test]
        fn gate_monotone(s1 in 0.0f64..=0.5, s2 in 0.0f64..=0.5) {
            prop_assume!((s1 - s2).abs() > 1e-6);
            let c = EstimatorConfig::default();
            let (lo, hi) = (s1.min(s2), s1.max(s2));
            let (g_lo, p_lo) = vat_exponent(lo, &c);
            let (g_hi, p_hi) = vat_exponent(hi, &c);
            prop_assert!(g_hi > g_lo);
            prop_assert!(p_hi < p_lo);
            prop_assert!(g_lo > 0.0 && g_hi < 1.0);
        }

        #[test]
        fn degenerate_configurations(r in arb_group()) {
            let flat = EstimatorConfig { p_low: 1.0, p_high: 1.0, ..Default::default() };
            let guae = estimate(&r, &EstimatorConfig { variant: Variant::Guae, ..flat });
            let anchor = estimate(&r, &EstimatorConfig { variant: Variant::AnchorOnly, ..flat });
            let vat = estimate(&r, &EstimatorConfig { variant: Variant::VatOnly, ..flat });
            let base = estimate(&r, &EstimatorConfig { variant: Variant::BaseGrpo, ..flat });
            for i in 0..r.len() {
                prop_assert!((guae.advantages[i] - anchor.advantages[i]).abs() <= 1e-12 * (1.0 + anchor.advantages[i].abs()));
                // With sigma = 0 the VAT guard substitutes eps inside the power,
                // but the numerator is then zero as well.
                prop_assert!((vat.advantages[i] - base.advantages[i]).abs() <= 1e-9 * (1.0 + base.advantages[i].abs()));
            }
        }

        #[test]
        fn advantage_sign_follows_centering(r in arb_group()) {
            for v in Variant::ALL {
                let res = estimate(&r, &cfg(v));
                prop_assert_eq!(res.advantages.len(), r.len());
                for (ri, a) in r.iter().zip(&res.advantages) {
                    let centered = ri - res.mu;
                    if centered.abs() > 0.0 {
                        prop_assert_eq!(a.signum(), centered.signum());
                    }
                }
                if v.uses_anchors() {
                    prop_assert!(res.sigma >= 1.0 / (2.0 * (r.len() + 2) as f64).sqrt() - 1e-12);
                }
            }
        }
    }
}
