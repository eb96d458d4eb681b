//! Order-independent floating-point summation.
//!
//! Keeps a list of non-overlapping partials (Shewchuk's algorithm) so the
//! final, correctly rounded total does not depend on the order in which values
//! or shards were added.

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// Correctly rounded sum of everything added so far.
    pub fn value(&self) -> f64 {
        let mut n = self.partials.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = self.partials[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = self.partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: nudge using the sign of the next partial.
        if n > 0
            && ((lo < 0.0 && self.partials[n - 1] < 0.0)
                || (lo > 0.0 && self.partials[n - 1] > 0.0))
        {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancellation() {
        let mut s = ExactSum::new();
        for x in [1e100, 1.0, -1e100, 1e-3] {
            s.add(x);
        }
        assert_eq!(s.value(), 1.001);
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut xs in proptest::collection::vec(-1e6f64..1e6, 0..60), seed in any::<u64>()) {
            let mut a = ExactSum::new();
            xs.iter().for_each(|&x| a.add(x));
            // Deterministic shuffle driven by the seed.
            let mut state = seed;
            for i in (1..xs.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (state >> 33) as usize % (i + 1));
            }
            let mid = xs.len() / 2;
            let mut left = ExactSum::new();
            let mut right = ExactSum::new();
            xs[..mid].iter().for_each(|&x| left.add(x));
            xs[mid..].iter().for_each(|&x| right.add(x));
            right.merge(&left);
            prop_assert_eq!(a.value().to_bits(), right.value().to_bits());
        }
    }
}
