//! Fixtures shared by the criterion benches.

use guae_core::{Action, BanditEnv, Point, PolicyState};

/// Deterministic reward groups mixing collapsed and Bernoulli-like rows.
pub fn reward_groups(n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| match i % 4 {
            0 => vec![1.0; k],
            1 => vec![0.0; k],
            _ => (0..k).map(|j| ((i * 7 + j * 3) % 5) as f64 / 4.0).collect(),
        })
        .collect()
}

pub fn click_pairs(n: usize) -> Vec<(Action, Action)> {
    (0..n as u32)
        .map(|i| {
            let p = Action::Click {
                at: Point {
                    x: (i * 37) % 1000,
                    y: (i * 91) % 1000,
                },
            };
            let r = Action::Click {
                at: Point { x: 500, y: 500 },
            };
            (p, r)
        })
        .collect()
}

/// Five-arm single-state bandit with the policy stuck on a wrong arm.
pub fn stuck_bandit() -> (BanditEnv, PolicyState) {
    let env = BanditEnv::new(5, vec![0]).expect("valid env");
    let policy = PolicyState::concentrated(5, &[1], 0.99, 7).expect("valid policy");
    (env, policy)
}
