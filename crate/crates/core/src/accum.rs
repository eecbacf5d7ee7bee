//! Order-independent summation.
//!
//! Floating-point addition is not associative, so a plain `f64` sum over
//! data points changes in its last bits when the samples are permuted or
//! when work is split across threads differently. [`ExactSum`] rounds every
//! term onto a fixed grid of `2^-90` and adds integers, which is exact and
//! therefore independent of order.
//!
//! The representable magnitude of a running total is about `1.3e11`, far
//! above what probability masses, log-terms or counts reach here.

const SCALE_EXP: i32 = 90;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactSum(i128);

impl ExactSum {
    pub const ZERO: ExactSum = ExactSum(0);

    #[inline]
    pub fn add(&mut self, x: f64) {
        debug_assert!(x.is_finite());
        self.0 += to_fixed(x);
    }

    #[inline]
    pub fn merge(&mut self, other: ExactSum) {
        self.0 += other.0;
    }

    pub fn value(self) -> f64 {
        (self.0 as f64) * 2f64.powi(-SCALE_EXP)
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = ExactSum::ZERO;
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[inline]
fn to_fixed(x: f64) -> i128 {
    // Multiplying by a power of two is exact; the cast truncates toward zero.
    (x * 2f64.powi(SCALE_EXP)) as i128
}

/// Order-independent sum of a sequence of finite values.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<ExactSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_integers_are_exact() {
        assert_eq!(exact_sum([1.0, 2.0, 3.5, -0.5]), 6.0);
        assert_eq!(exact_sum(std::iter::repeat_n(1.0, 1000)), 1000.0);
    }

    #[test]
    fn merge_matches_single_pass() {
        let xs = [0.1, 0.2, 0.3, 1e-9, 7.25];
        let mut a: ExactSum = xs[..2].iter().copied().collect();
        let b: ExactSum = xs[2..].iter().copied().collect();
        a.merge(b);
        assert_eq!(a, xs.iter().copied().collect::<ExactSum>());
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut xs in prop::collection::vec(-1e3f64..1e3, 1..200), seed in any::<u64>()) {
            let before = exact_sum(xs.iter().copied());
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..xs.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                xs.swap(i, (state % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(before.to_bits(), exact_sum(xs.iter().copied()).to_bits());
        }

        #[test]
        fn close_to_naive_sum(xs in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((naive - exact_sum(xs.iter().copied())).abs() < 1e-9);
        }
    }
}
