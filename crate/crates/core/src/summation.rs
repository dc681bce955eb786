//! Compensated (Neumaier) summation. The estimator sums mix signs when
//! higher-order kernels are in play and run to 10^6 terms, so plain
//! accumulation loses digits exactly where the tests demand ulp-level
//! agreement.

/// Running Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sums an iterator with Neumaier compensation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// Mean with compensated accumulation; 0 for an empty slice.
pub fn compensated_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    compensated_sum(values.iter().copied()) / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancellation() {
        // 1 + 1e100 - 1e100 collapses to 0 in plain f64 order; Neumaier keeps the 1.
        assert_eq!(compensated_sum([1.0, 1e100, -1e100]), 1.0);
    }

    #[test]
    fn matches_plain_sum_on_benign_input() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.25).collect();
        let plain: f64 = xs.iter().sum();
        assert_eq!(compensated_sum(xs.iter().copied()), plain);
    }

    #[test]
    fn mean_of_empty_is_zero() {
        assert_eq!(compensated_mean(&[]), 0.0);
    }
}
