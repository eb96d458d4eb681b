//! Advantage-collapse diagnostics over rollout-group logs.
//!
//! Every statistic here is mergeable: counts add, sums go through an exact
//! accumulator, and histograms merge bin-wise. Aggregates are therefore
//! bit-identical however the input is ordered or sharded.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advantage::{group_stats, RolloutGroup, StdKind};
use crate::sum::ExactSum;

pub const DEFAULT_DELTAS: [f64; 2] = [0.01, 0.1];
pub const DEFAULT_LOW_STD_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("no advantages to summarize")]
    EmptyInput,
    #[error("delta must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("histogram edges must be finite, strictly increasing and at least two")]
    InvalidEdges,
    #[error("low-std threshold must be positive, got {0}")]
    InvalidThreshold(f64),
}

/// Fraction of advantages with `|A| < delta`.
pub fn near_zero_mass(advantages: &[f64], delta: f64) -> Result<f64, DiagnosticsError> {
    if !(delta > 0.0) {
        return Err(DiagnosticsError::InvalidDelta(delta));
    }
    if advantages.is_empty() {
        return Err(DiagnosticsError::EmptyInput);
    }
    let small = advantages.iter().filter(|a| a.abs() < delta).count();
    Ok(small as f64 / advantages.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group_id: String,
    pub mean: f64,
    pub sigma: f64,
    pub all_equal: bool,
    pub low_std: bool,
}

impl GroupStats {
    pub fn of(group: &RolloutGroup, low_std_threshold: f64) -> Self {
        let (mean, sigma) = group_stats(&group.rewards, StdKind::Population);
        let all_equal = group.rewards.windows(2).all(|w| w[0] == w[1]);
        GroupStats {
            group_id: group.group_id.clone(),
            mean,
            sigma,
            all_equal,
            low_std: sigma < low_std_threshold,
        }
    }
}

/// Counts over fixed bin edges, left-closed and right-open: a value `x` lands
/// in bin `i` when `edges[i] <= x < edges[i + 1]`. Values below the first
/// edge go to `underflow`; values at or above the last edge (and NaN) go to
/// `overflow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Result<Self, DiagnosticsError> {
        let ok = edges.len() >= 2
            && edges.iter().all(|e| e.is_finite())
            && edges.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(DiagnosticsError::InvalidEdges);
        }
        Ok(Histogram {
            counts: vec![0; edges.len() - 1],
            edges,
            underflow: 0,
            overflow: 0,
        })
    }

    /// `-3.0, -2.9, ..., 3.0`.
    pub fn default_edges() -> Vec<f64> {
        (0..=60).map(|i| (i as f64 - 30.0) / 10.0).collect()
    }

    pub fn add(&mut self, x: f64) {
        if x < self.edges[0] {
            self.underflow += 1;
        } else if !(x < self.edges[self.edges.len() - 1]) {
            self.overflow += 1;
        } else {
            // First edge strictly greater than x, minus one.
            let idx = self.edges.partition_point(|&e| e <= x) - 1;
            self.counts[idx] += 1;
        }
    }

    pub fn merge(&mut self, other: &Histogram) {
        assert_eq!(self.edges, other.edges, "histograms must share bin edges");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Count of the bin containing `x`, if `x` is inside the edges.
    pub fn count_at(&self, x: f64) -> Option<u64> {
        if x < self.edges[0] || !(x < self.edges[self.edges.len() - 1]) {
            return None;
        }
        Some(self.counts[self.edges.partition_point(|&e| e <= x) - 1])
    }

    /// Writes `bin_left,bin_right,count`, with underflow and overflow as the
    /// first and last rows using `-inf` / `inf` bounds.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_left", "bin_right", "count"])?;
        w.write_record([
            "-inf".to_string(),
            self.edges[0].to_string(),
            self.underflow.to_string(),
        ])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        w.write_record([
            self.edges[self.edges.len() - 1].to_string(),
            "inf".to_string(),
            self.overflow.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

pub fn advantage_histogram(
    advantages: &[f64],
    edges: &[f64],
) -> Result<Histogram, DiagnosticsError> {
    let mut h = Histogram::new(edges.to_vec())?;
    advantages.iter().for_each(|&a| h.add(a));
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_groups: u64,
    pub skipped_lines: u64,
    pub n_advantages: u64,
    pub low_std_ratio: f64,
    pub all_equal_ratio: f64,
    /// `(delta, P(|A| < delta))`, ascending in delta.
    pub near_zero_mass: Vec<(f64, f64)>,
    pub mean_abs_advantage: f64,
    pub histogram: Histogram,
}

impl DiagnosticsReport {
    /// Writes aggregates as `metric,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        let mut row = |k: String, v: String| w.write_record([k, v]);
        row("n_groups".into(), self.n_groups.to_string())?;
        row("skipped_lines".into(), self.skipped_lines.to_string())?;
        row("n_advantages".into(), self.n_advantages.to_string())?;
        row("low_std_ratio".into(), self.low_std_ratio.to_string())?;
        row("all_equal_ratio".into(), self.all_equal_ratio.to_string())?;
        for (delta, mass) in &self.near_zero_mass {
            row(format!("near_zero_mass@{delta}"), mass.to_string())?;
        }
        row(
            "mean_abs_advantage".into(),
            self.mean_abs_advantage.to_string(),
        )?;
        w.flush()?;
        Ok(())
    }
}

/// Streaming, mergeable diagnostics aggregation.
#[derive(Debug, Clone)]
pub struct DiagnosticsAccumulator {
    low_std_threshold: f64,
    deltas: Vec<f64>,
    n_groups: u64,
    n_low_std: u64,
    n_all_equal: u64,
    skipped_lines: u64,
    n_advantages: u64,
    near_zero_counts: Vec<u64>,
    abs_sum: ExactSum,
    histogram: Histogram,
}

impl DiagnosticsAccumulator {
    pub fn new(
        low_std_threshold: f64,
        deltas: &[f64],
        edges: Vec<f64>,
    ) -> Result<Self, DiagnosticsError> {
        if !(low_std_threshold > 0.0) {
            return Err(DiagnosticsError::InvalidThreshold(low_std_threshold));
        }
        if let Some(&d) = deltas.iter().find(|d| !(**d > 0.0)) {
            return Err(DiagnosticsError::InvalidDelta(d));
        }
        let mut deltas = deltas.to_vec();
        deltas.sort_by(f64::total_cmp);
        deltas.dedup();
        Ok(DiagnosticsAccumulator {
            low_std_threshold,
            near_zero_counts: vec![0; deltas.len()],
            deltas,
            n_groups: 0,
            n_low_std: 0,
            n_all_equal: 0,
            skipped_lines: 0,
            n_advantages: 0,
            abs_sum: ExactSum::new(),
            histogram: Histogram::new(edges)?,
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(
            DEFAULT_LOW_STD_THRESHOLD,
            &DEFAULT_DELTAS,
            Histogram::default_edges(),
        )
        .expect("default diagnostics settings are valid")
    }

    pub fn low_std_threshold(&self) -> f64 {
        self.low_std_threshold
    }

    /// Adds one group and the advantages computed for it.
    pub fn add_group(&mut self, group: &RolloutGroup, advantages: &[f64]) -> GroupStats {
        let stats = GroupStats::of(group, self.low_std_threshold);
        self.n_groups += 1;
        self.n_low_std += u64::from(stats.low_std);
        self.n_all_equal += u64::from(stats.all_equal);
        self.add_advantages(advantages);
        stats
    }

    pub fn add_advantages(&mut self, advantages: &[f64]) {
        for &a in advantages {
            self.n_advantages += 1;
            for (count, delta) in self.near_zero_counts.iter_mut().zip(&self.deltas) {
                *count += u64::from(a.abs() < *delta);
            }
            self.abs_sum.add(a.abs());
            self.histogram.add(a);
        }
    }

    pub fn skip_line(&mut self) {
        self.skipped_lines += 1;
    }

    pub fn merge(&mut self, other: &DiagnosticsAccumulator) {
        assert_eq!(self.deltas, other.deltas, "accumulators must share deltas");
        self.n_groups += other.n_groups;
        self.n_low_std += other.n_low_std;
        self.n_all_equal += other.n_all_equal;
        self.skipped_lines += other.skipped_lines;
        self.n_advantages += other.n_advantages;
        for (a, b) in self
            .near_zero_counts
            .iter_mut()
            .zip(&other.near_zero_counts)
        {
            *a += b;
        }
        self.abs_sum.merge(&other.abs_sum);
        self.histogram.merge(&other.histogram);
    }

    pub fn report(&self) -> DiagnosticsReport {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        DiagnosticsReport {
            n_groups: self.n_groups,
            skipped_lines: self.skipped_lines,
            n_advantages: self.n_advantages,
            low_std_ratio: ratio(self.n_low_std, self.n_groups),
            all_equal_ratio: ratio(self.n_all_equal, self.n_groups),
            near_zero_mass: self
                .deltas
                .iter()
                .zip(&self.near_zero_counts)
                .map(|(&d, &c)| (d, ratio(c, self.n_advantages)))
                .collect(),
            mean_abs_advantage: if self.n_advantages == 0 {
                0.0
            } else {
                self.abs_sum.value() / self.n_advantages as f64
            },
            histogram: self.histogram.clone(),
        }
    }
}

/// Per-group statistics and the aggregate report for a batch of groups,
/// without advantages.
pub fn group_scatter(
    groups: &[RolloutGroup],
    low_std_threshold: f64,
) -> Result<(Vec<GroupStats>, DiagnosticsReport), DiagnosticsError> {
    let mut acc = DiagnosticsAccumulator::new(
        low_std_threshold,
        &DEFAULT_DELTAS,
        Histogram::default_edges(),
    )?;
    let stats = groups.iter().map(|g| acc.add_group(g, &[])).collect();
    Ok((stats, acc.report()))
}

/// Writes `group_id,mean,sigma,all_equal,low_std` rows.
pub fn write_scatter_csv<W: Write>(out: W, stats: &[GroupStats]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        w.serialize(s)?;
    }
    if stats.is_empty() {
        w.write_record(["group_id", "mean", "sigma", "all_equal", "low_std"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advantage::{estimate, EstimatorConfig, Variant};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn group(id: usize, rewards: Vec<f64>) -> RolloutGroup {
        RolloutGroup {
            group_id: format!("g{id}"),
            rewards,
            step: None,
        }
    }

    #[test]
    fn near_zero_examples() {
        assert_eq!(near_zero_mass(&[0.0; 5], 0.1).unwrap(), 1.0);
        assert_eq!(near_zero_mass(&[-0.5, 0.005, 0.5, 0.0], 0.01).unwrap(), 0.5);
        assert_eq!(near_zero_mass(&[], 0.1), Err(DiagnosticsError::EmptyInput));
        assert!(near_zero_mass(&[1.0], 0.0).is_err());
        // Strict inequality at the threshold.
        assert_eq!(near_zero_mass(&[0.01], 0.01).unwrap(), 0.0);
    }

    #[test]
    fn collapsed_epoch_base_vs_guae() {
        let groups: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { 0.0 }; 8])
            .collect();
        let adv = |v: Variant| -> Vec<f64> {
            groups
                .iter()
                .flat_map(|g| estimate(g, &EstimatorConfig::with_variant(v)).advantages)
                .collect()
        };
        assert_eq!(near_zero_mass(&adv(Variant::BaseGrpo), 0.01).unwrap(), 1.0);
        assert_eq!(near_zero_mass(&adv(Variant::Guae), 0.01).unwrap(), 0.0);
    }

    #[test]
    fn all_equal_groups() {
        let groups: Vec<RolloutGroup> = (0..100).map(|i| group(i, vec![0.1; 8])).collect();
        let (stats, report) = group_scatter(&groups, 0.01).unwrap();
        assert!(stats
            .iter()
            .all(|s| s.all_equal && s.sigma == 0.0 && s.low_std));
        assert_eq!(report.all_equal_ratio, 1.0);
        assert_eq!(report.low_std_ratio, 1.0);
    }

    #[test]
    fn bernoulli_all_equal_ratio_within_binomial_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let groups: Vec<RolloutGroup> = (0..10_000)
            .map(|i| {
                group(
                    i,
                    (0..8)
                        .map(|_| f64::from(u8::from(rng.random::<bool>())))
                        .collect(),
                )
            })
            .collect();
        let (_, report) = group_scatter(&groups, 0.01).unwrap();
        let p = 2.0 * 0.5f64.powi(8);
        let sd = (p * (1.0 - p) / 10_000.0).sqrt();
        assert!((report.all_equal_ratio - p).abs() <= 3.0 * sd);
        assert!(report.low_std_ratio >= report.all_equal_ratio);
    }

    #[test]
    fn histogram_conventions() {
        let empty = advantage_histogram(&[], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(empty.counts, vec![0, 0]);
        assert_eq!(empty.total(), 0);

        let h = advantage_histogram(&[1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts, vec![0, 1]);
        let h = advantage_histogram(&[2.0, -0.1, 0.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(
            (h.underflow, h.counts.clone(), h.overflow),
            (1, vec![1, 0], 1)
        );
        assert!(advantage_histogram(&[], &[1.0, 1.0]).is_err());
        assert!(advantage_histogram(&[], &[1.0]).is_err());
    }

    #[test]
    fn histogram_csv_layout() {
        let h = advantage_histogram(&[0.5, 3.0], &[0.0, 1.0]).unwrap();
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "bin_left,bin_right,count\n-inf,0,0\n0,1,1\n1,inf,1\n"
        );
    }

    #[test]
    fn late_stage_zero_bin_mass() {
        // Mostly all-ones groups with a few mixed ones, as in a late run.
        let groups: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let mut g = vec![1.0; 8];
                if i % 10 == 0 {
                    g[0] = 0.0;
                }
                g
            })
            .collect();
        let edges = Histogram::default_edges();
        let hist = |v: Variant| {
            let adv: Vec<f64> = groups
                .iter()
                .flat_map(|g| estimate(g, &EstimatorConfig::with_variant(v)).advantages)
                .collect();
            advantage_histogram(&adv, &edges).unwrap()
        };
        let base = hist(Variant::BaseGrpo).count_at(0.0).unwrap();
        let guae = hist(Variant::Guae).count_at(0.0).unwrap();
        assert!(base > guae, "base {base} vs guae {guae}");
    }

    #[test]
    fn collapsed_groups_clear_delta_for_all_k() {
        let cfg = EstimatorConfig::default();
        for k in 1..=64 {
            for c in [0.0, 1.0] {
                let a = estimate(&vec![c; k], &cfg);
                assert!(a.advantages.iter().all(|x| x.abs() > 0.01), "K={k} c={c}");
            }
        }
    }

    proptest! {
        #[test]
        fn mass_monotone_and_permutation_invariant(
            mut adv in proptest::collection::vec(-2.0f64..2.0, 1..100),
            d1 in 0.001f64..1.0, d2 in 0.001f64..1.0,
        ) {
            let (lo, hi) = (d1.min(d2), d1.max(d2));
            prop_assert!(near_zero_mass(&adv, lo).unwrap() <= near_zero_mass(&adv, hi).unwrap());
            let before = near_zero_mass(&adv, lo).unwrap();
            adv.reverse();
            prop_assert_eq!(before, near_zero_mass(&adv, lo).unwrap());
        }

        #[test]
        fn histogram_total_matches(adv in proptest::collection::vec(proptest::num::f64::ANY, 0..200)) {
            let h = advantage_histogram(&adv, &Histogram::default_edges()).unwrap();
            prop_assert_eq!(h.total(), adv.len() as u64);
        }

        #[test]
        fn sharded_accumulation_matches(
            groups in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 1..10), 0..40),
            split in 0usize..40,
        ) {
            let cfg = EstimatorConfig::default();
            let groups: Vec<RolloutGroup> = groups.into_iter().enumerate().map(|(i, r)| group(i, r)).collect();
            let mut whole = DiagnosticsAccumulator::with_defaults();
            for g in &groups {
                whole.add_group(g, &estimate(&g.rewards, &cfg).advantages);
            }
            let split = split.min(groups.len());
            let mut left = DiagnosticsAccumulator::with_defaults();
            let mut right = DiagnosticsAccumulator::with_defaults();
            for g in groups[..split].iter().rev() {
                left.add_group(g, &estimate(&g.rewards, &cfg).advantages);
            }
            for g in &groups[split..] {
                right.add_group(g, &estimate(&g.rewards, &cfg).advantages);
            }
            right.merge(&left);
            let (a, b) = (whole.report(), right.report());
            prop_assert_eq!(a.mean_abs_advantage.to_bits(), b.mean_abs_advantage.to_bits());
            prop_assert_eq!(a, b);
        }
    }
}
