//! The adaptive-bandwidth estimators and their tuning schedules. The
//! bandwidth at a query x is the k-th nearest-neighbor distance R(x); every
//! estimator sums the kernel over ALL n sample points (the kernel handles
//! locality, and non-compact kernels receive contributions from every
//! point), with compensated summation since higher-order kernels mix signs.

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::neighbor_index::NeighborIndex;
use crate::summation::CompensatedSum;

/// What a run estimates at each query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Density,
    G,
    Regression,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Density => "density",
            Target::G => "g",
            Target::Regression => "regression",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "density" => Ok(Target::Density),
            "g" => Ok(Target::G),
            "regression" => Ok(Target::Regression),
            other => Err(Error::InvalidTarget(format!(
                "unknown target '{other}' (expected density, g, or regression)"
            ))),
        }
    }
}

/// Handling of a zero k-th neighbor distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePolicy {
    /// Surface the degenerate radius as an error (default).
    Error,
    /// Substitute epsilon = 1e-12 times the data diameter for the radius.
    EpsilonRadius,
}

impl DegeneratePolicy {
    pub fn name(self) -> &'static str {
        match self {
            DegeneratePolicy::Error => "error",
            DegeneratePolicy::EpsilonRadius => "epsilon_radius",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "error" => Ok(DegeneratePolicy::Error),
            "epsilon_radius" => Ok(DegeneratePolicy::EpsilonRadius),
            other => Err(Error::InvalidConfig(format!(
                "unknown degenerate policy '{other}' (expected error or epsilon_radius)"
            ))),
        }
    }
}

/// Number of neighbors at sample size n: max(1, floor(n^c1)), clamped to n.
/// Requires c1 strictly between 0.5 and 1.
pub fn schedule_k(n: usize, c1: f64) -> Result<usize> {
    if n < 1 {
        return Err(Error::InvalidSchedule("n must be at least 1".into()));
    }
    if !(c1 > 0.5 && c1 < 1.0) {
        return Err(Error::InvalidSchedule(format!(
            "c1 must lie in (0.5, 1), got {c1}"
        )));
    }
    let k = (n as f64).powf(c1).floor() as usize;
    Ok(k.clamp(1, n))
}

/// Density floor at sample size n: n^(-c2). Requires c2 strictly between 0
/// and 0.1.
pub fn schedule_b(n: usize, c2: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidSchedule("n must be at least 1".into()));
    }
    if !(c2 > 0.0 && c2 < 0.1) {
        return Err(Error::InvalidSchedule(format!(
            "c2 must lie in (0, 0.1), got {c2}"
        )));
    }
    Ok((n as f64).powf(-c2))
}

/// Response envelope at sample size n: C_M * sqrt(ln n). Requires n >= 2 and
/// a positive multiplier.
pub fn schedule_m(n: usize, c_m: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSchedule(format!(
            "n must be at least 2 for the response envelope, got {n}"
        )));
    }
    if !(c_m > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "C_M must be positive, got {c_m}"
        )));
    }
    Ok(c_m * (n as f64).ln().sqrt())
}

/// Estimator tuning: schedule exponents, response envelope multiplier, the
/// kernel, and the degenerate-radius policy.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    c1: f64,
    c2: f64,
    c_m: f64,
    kernel: Kernel,
    degenerate_policy: DegeneratePolicy,
}

impl EstimatorConfig {
    pub fn new(
        c1: f64,
        c2: f64,
        c_m: f64,
        kernel: Kernel,
        degenerate_policy: DegeneratePolicy,
    ) -> Result<Self> {
        if !(c1 > 0.5 && c1 < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "c1 must lie in (0.5, 1), got {c1}"
            )));
        }
        if !(c2 > 0.0 && c2 < 0.1) {
            return Err(Error::InvalidSchedule(format!(
                "c2 must lie in (0, 0.1), got {c2}"
            )));
        }
        if !(c_m > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "C_M must be positive, got {c_m}"
            )));
        }
        Ok(EstimatorConfig {
            c1,
            c2,
            c_m,
            kernel,
            degenerate_policy,
        })
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn c_m(&self) -> f64 {
        self.c_m
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn degenerate_policy(&self) -> DegeneratePolicy {
        self.degenerate_policy
    }
}

/// A single point estimate plus the bandwidth bookkeeping behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateAtPoint {
    pub value: f64,
    /// The neighbor radius actually used (epsilon under the epsilon_radius
    /// policy at a degenerate query).
    pub radius_used: f64,
    pub k_used: usize,
    /// Regression only: whether max(density, b_n) resolved to b_n.
    pub floored: bool,
}

fn check_dims(index: &NeighborIndex, config: &EstimatorConfig, x: &[f64]) -> Result<()> {
    let p = index.sample_set().dimension();
    if config.kernel.dimension() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: config.kernel.dimension(),
        });
    }
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x.len(),
        });
    }
    Ok(())
}

/// Neighbor radius under the configured degenerate policy.
fn resolve_radius(index: &NeighborIndex, config: &EstimatorConfig, x: &[f64], k: usize) -> Result<f64> {
    match index.knn_radius(x, k) {
        Ok(result) => Ok(result.radius),
        Err(Error::DegenerateRadius { radius }) => match config.degenerate_policy {
            DegeneratePolicy::Error => Err(Error::DegenerateRadius { radius }),
            DegeneratePolicy::EpsilonRadius => {
                // Data diameter measured as the bounding-box diagonal.
                let eps = 1e-12 * index.bounding_diameter();
                if eps > 0.0 {
                    Ok(eps)
                } else {
                    Err(Error::DegenerateRadius { radius })
                }
            }
        },
        Err(other) => Err(other),
    }
}

/// Kernel sums over all n points at bandwidth r: plain sum of K terms and,
/// when `with_responses`, the response-weighted sum and its positive/negative
/// split. One data pass serves every estimator.
struct KernelSums {
    sum_k: f64,
    sum_yk: f64,
    sum_pos: f64,
    sum_neg: f64,
}

fn kernel_sums(
    index: &NeighborIndex,
    kernel: &Kernel,
    x: &[f64],
    r: f64,
    with_responses: bool,
) -> Result<KernelSums> {
    let data = index.sample_set();
    let n = data.len();
    let p = data.dimension();
    let ys = if with_responses {
        Some(data.responses().ok_or(Error::MissingResponses)?)
    } else {
        None
    };
    let mut sum_k = CompensatedSum::new();
    let mut sum_yk = CompensatedSum::new();
    let mut sum_pos = CompensatedSum::new();
    let mut sum_neg = CompensatedSum::new();
    let inv_r = 1.0 / r;
    let radial = kernel.is_radial_in_sq_norm();
    let inv_r_sq = inv_r * inv_r;
    let mut scratch = vec![0.0; p];
    for i in 0..n {
        let row = data.row(i);
        let k_val = if radial {
            let mut d2 = 0.0;
            for j in 0..p {
                let d = row[j] - x[j];
                d2 += d * d;
            }
            kernel.eval_sq_norm(d2 * inv_r_sq)
        } else {
            for j in 0..p {
                scratch[j] = (row[j] - x[j]) * inv_r;
            }
            kernel.eval_raw(&scratch)
        };
        sum_k.add(k_val);
        if let Some(ys) = ys {
            let y = ys[i];
            let yk = y * k_val;
            sum_yk.add(yk);
            if y >= 0.0 {
                sum_pos.add(yk);
            } else {
                sum_neg.add(-yk);
            }
        }
    }
    Ok(KernelSums {
        sum_k: sum_k.total(),
        sum_yk: sum_yk.total(),
        sum_pos: sum_pos.total(),
        sum_neg: sum_neg.total(),
    })
}

#[inline]
fn normalizer(n: usize, r: f64, p: usize) -> f64 {
    n as f64 * r.powi(p as i32)
}

/// Density estimate with an explicit neighbor count.
pub fn density_at_with_k(
    index: &NeighborIndex,
    config: &EstimatorConfig,
    x: &[f64],
    k: usize,
) -> Result<EstimateAtPoint> {
    check_dims(index, config, x)?;
    let data = index.sample_set();
    let r = resolve_radius(index, config, x, k)?;
    let sums = kernel_sums(index, &config.kernel, x, r, false)?;
    Ok(EstimateAtPoint {
        value: sums.sum_k / normalizer(data.len(), r, data.dimension()),
        radius_used: r,
        k_used: k,
        floored: false,
    })
}

/// Density estimate at x: (1 / (n R^p)) * sum_i K((X_i - x) / R) with R the
/// k-th neighbor distance and k = schedule_k(n, c1).
pub fn density_at(
    index: &NeighborIndex,
    config: &EstimatorConfig,
    x: &[f64],
) -> Result<EstimateAtPoint> {
    let k = schedule_k(index.sample_set().len(), config.c1)?;
    density_at_with_k(index, config, x, k)
}

/// Numerator estimate with an explicit neighbor count.
pub fn g_at_with_k(
    index: &NeighborIndex,
    config: &EstimatorConfig,
    x: &[f64],
    k: usize,
) -> Result<EstimateAtPoint> {
    check_dims(index, config, x)?;
    let data = index.sample_set();
    let r = resolve_radius(index, config, x, k)?;
    let sums = kernel_sums(index, &config.kernel, x, r, true)?;
    Ok(EstimateAtPoint {
        value: sums.sum_yk / normalizer(data.len(), r, data.dimension()),
        radius_used: r,
        k_used: k,
        floored: false,
    })
}

/// Regression-numerator estimate at x: (1 / (n R^p)) * sum_i Y_i K((X_i - x) / R).
pub fn g_at(index: &NeighborIndex, config: &EstimatorConfig, x: &[f64]) -> Result<EstimateAtPoint> {
    let k = schedule_k(index.sample_set().len(), config.c1)?;
    g_at_with_k(index, config, x, k)
}

/// Positive/negative response split with a shared radius: the first
/// component weights by Y_i 1{Y_i >= 0}, the second by -Y_i 1{Y_i < 0}, so
/// their difference equals the numerator estimate up to summation rounding.
pub fn g_split_at_with_k(
    index: &NeighborIndex,
    config: &EstimatorConfig,
    x: &[f64],
    k: usize,
) -> Result<(f64, f64)> {
    check_dims(index, config, x)?;
    let data = index.sample_set();
    let r = resolve_radius(index, config, x, k)?;
    let sums = kernel_sums(index, &config.kernel, x, r, true)?;
    let denom = normalizer(data.len(), r, data.dimension());
    Ok((sums.sum_pos / denom, sums.sum_neg / denom))
}

pub fn g_split_at(
    index: &NeighborIndex,
    config: &EstimatorConfig,
    x: &[f64],
) -> Result<(f64, f64)> {
    let k = schedule_k(index.sample_set().len(), config.c1)?;
    g_split_at_with_k(index, config, x, k)
}

/// Regression estimate with explicit neighbor count and density floor.
pub fn regression_at_with_k(
    index: &NeighborIndex,
    config: &EstimatorConfig,
    x: &[f64],
    k: usize,
    b_n: f64,
) -> Result<EstimateAtPoint> {
    check_dims(index, config, x)?;
    let data = index.sample_set();
    let r = resolve_radius(index, config, x, k)?;
    let sums = kernel_sums(index, &config.kernel, x, r, true)?;
    let denom = normalizer(data.len(), r, data.dimension());
    let f_hat = sums.sum_k / denom;
    let g_hat = sums.sum_yk / denom;
    let floored = b_n >= f_hat;
    let value = g_hat / f_hat.max(b_n);
    Ok(EstimateAtPoint {
        value,
        radius_used: r,
        k_used: k,
        floored,
    })
}

/// Regression estimate at x: the numerator estimate divided by
/// max(density estimate, b_n), where b_n = schedule_b(n, c2) and `n` is the
/// sample size the floor schedule refers to.
pub fn regression_at(
    index: &NeighborIndex,
    config: &EstimatorConfig,
    x: &[f64],
    n: usize,
) -> Result<EstimateAtPoint> {
    let k = schedule_k(index.sample_set().len(), config.c1)?;
    let b_n = schedule_b(n, config.c2)?;
    regression_at_with_k(index, config, x, k, b_n)
}

/// Fixed-bandwidth density with decoupled bandwidths: the kernel argument is
/// scaled by `arg_bandwidth` while the normalizer uses `norm_bandwidth`.
/// Equal bandwidths give the classical fixed-bandwidth estimate; the
/// decoupled form builds the bracketing pair of the sandwich diagnostic,
/// which pairs the two deterministic radii in opposite roles.
pub fn density_fixed_bandwidth(
    index: &NeighborIndex,
    kernel: &Kernel,
    x: &[f64],
    arg_bandwidth: f64,
    norm_bandwidth: f64,
) -> Result<f64> {
    let data = index.sample_set();
    let p = data.dimension();
    if kernel.dimension() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: kernel.dimension(),
        });
    }
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x.len(),
        });
    }
    if !(arg_bandwidth > 0.0 && arg_bandwidth.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "argument bandwidth must be positive and finite, got {arg_bandwidth}"
        )));
    }
    if !(norm_bandwidth > 0.0 && norm_bandwidth.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "normalizer bandwidth must be positive and finite, got {norm_bandwidth}"
        )));
    }
    let sums = kernel_sums(index, kernel, x, arg_bandwidth, false)?;
    Ok(sums.sum_k / normalizer(data.len(), norm_bandwidth, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_kernel, KernelFamily};
    use crate::neighbor_index::{build_index, SampleSet};
    use std::sync::Arc;

    const PHI_1: f64 = 0.24197072451914337;

    fn config(kernel: Kernel) -> EstimatorConfig {
        EstimatorConfig::new(0.7, 0.05, 1.0, kernel, DegeneratePolicy::Error).unwrap()
    }

    fn gaussian_config() -> EstimatorConfig {
        config(make_kernel(KernelFamily::GaussianProduct, 1, 1, &[]).unwrap())
    }

    fn line_index(xs: &[f64], ys: Option<Vec<f64>>) -> crate::neighbor_index::NeighborIndex {
        let data = Arc::new(SampleSet::from_flat(xs.to_vec(), 1, ys).unwrap());
        build_index(data, 16).unwrap()
    }

    #[test]
    fn schedule_k_examples() {
        assert_eq!(schedule_k(100, 0.6).unwrap(), 15);
        assert_eq!(schedule_k(1, 0.7).unwrap(), 1);
        assert_eq!(schedule_k(65536, 0.7).unwrap(), 2352);
        assert!(matches!(schedule_k(100, 0.5), Err(Error::InvalidSchedule(_))));
        assert!(matches!(schedule_k(100, 1.0), Err(Error::InvalidSchedule(_))));
        assert!(matches!(schedule_k(0, 0.7), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn schedule_b_examples() {
        assert!((schedule_b(1024, 0.05).unwrap() - 0.7071067811865476).abs() < 1e-15);
        assert_eq!(schedule_b(1, 0.05).unwrap(), 1.0);
        assert!((schedule_b(1_000_000, 0.09).unwrap() - 0.2884031503126606).abs() < 1e-15);
        assert!(matches!(schedule_b(10, 0.1), Err(Error::InvalidSchedule(_))));
        assert!(matches!(schedule_b(10, 0.0), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn schedule_m_examples() {
        assert!((schedule_m(55, 1.0).unwrap() - 2.0018324568336060).abs() < 1e-15);
        assert!((schedule_m(2, 3.0).unwrap() - 2.4976638334730933).abs() < 1e-15);
        assert!(matches!(schedule_m(1, 1.0), Err(Error::InvalidSchedule(_))));
        assert!(matches!(schedule_m(10, 0.0), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn density_two_point_example() {
        let index = line_index(&[-1.0, 1.0], None);
        let est = density_at_with_k(&index, &gaussian_config(), &[0.0], 2).unwrap();
        assert_eq!(est.radius_used, 1.0);
        assert!((est.value - PHI_1).abs() < 1e-16);
        assert_eq!(est.k_used, 2);
        assert!(!est.floored);
    }

    #[test]
    fn density_single_point_example() {
        let index = line_index(&[2.0], None);
        let est = density_at_with_k(&index, &gaussian_config(), &[0.0], 1).unwrap();
        assert_eq!(est.radius_used, 2.0);
        assert!((est.value - PHI_1 / 2.0).abs() < 1e-16);
    }

    #[test]
    fn g_two_point_example() {
        let index = line_index(&[-1.0, 1.0], Some(vec![2.0, 4.0]));
        let est = g_at_with_k(&index, &gaussian_config(), &[0.0], 2).unwrap();
        assert!((est.value - 3.0 * PHI_1).abs() < 1e-15);
    }

    #[test]
    fn g_zero_and_unit_responses() {
        let index0 = line_index(&[-1.0, 0.5, 1.0], Some(vec![0.0, 0.0, 0.0]));
        let cfg = gaussian_config();
        assert_eq!(g_at_with_k(&index0, &cfg, &[0.2], 2).unwrap().value, 0.0);

        let index1 = line_index(&[-1.0, 0.5, 1.0], Some(vec![1.0, 1.0, 1.0]));
        let g = g_at_with_k(&index1, &cfg, &[0.2], 2).unwrap();
        let f = density_at_with_k(&index1, &cfg, &[0.2], 2).unwrap();
        assert_eq!(g.value, f.value);
    }

    #[test]
    fn g_requires_responses() {
        let index = line_index(&[-1.0, 1.0], None);
        assert!(matches!(
            g_at_with_k(&index, &gaussian_config(), &[0.0], 2),
            Err(Error::MissingResponses)
        ));
    }

    #[test]
    fn split_example_and_degenerate_sides() {
        let cfg = gaussian_config();
        let index = line_index(&[-1.0, 1.0], Some(vec![2.0, -4.0]));
        let (g1, g2) = g_split_at_with_k(&index, &cfg, &[0.0], 2).unwrap();
        assert!((g1 - PHI_1).abs() < 1e-15);
        assert!((g2 - 2.0 * PHI_1).abs() < 1e-15);
        let g = g_at_with_k(&index, &cfg, &[0.0], 2).unwrap().value;
        assert!((g1 - g2 - g).abs() < 1e-15);

        let pos = line_index(&[-1.0, 1.0], Some(vec![2.0, 4.0]));
        assert_eq!(g_split_at_with_k(&pos, &cfg, &[0.0], 2).unwrap().1, 0.0);
        let neg = line_index(&[-1.0, 1.0], Some(vec![-2.0, -4.0]));
        assert_eq!(g_split_at_with_k(&neg, &cfg, &[0.0], 2).unwrap().0, 0.0);
    }

    #[test]
    fn regression_symmetric_example_is_exact() {
        let index = line_index(&[-1.0, 1.0], Some(vec![2.0, 4.0]));
        let est = regression_at_with_k(&index, &gaussian_config(), &[0.0], 2, 1e-9).unwrap();
        assert_eq!(est.value, 3.0);
        assert!(!est.floored);
    }

    #[test]
    fn regression_floor_engages_far_from_data() {
        let kernel = make_kernel(KernelFamily::EpanechnikovRadial, 1, 1, &[]).unwrap();
        let cfg = config(kernel);
        let index = line_index(&[0.0, 1.0], Some(vec![5.0, 7.0]));
        let est = regression_at_with_k(&index, &cfg, &[10.0], 1, 0.5).unwrap();
        assert!(est.floored);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn regression_constant_responses() {
        let index = line_index(&[-1.2, -0.3, 0.4, 1.1], Some(vec![2.5; 4]));
        let est = regression_at_with_k(&index, &gaussian_config(), &[0.1], 3, 1e-9).unwrap();
        assert!(((est.value - 2.5) / 2.5).abs() < 1e-12);
    }

    #[test]
    fn schedule_driven_wrappers_use_configured_k() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let index = line_index(&xs, None);
        let est = density_at(&index, &gaussian_config(), &[0.5]).unwrap();
        assert_eq!(est.k_used, schedule_k(100, 0.7).unwrap());
    }

    #[test]
    fn degenerate_policy_paths() {
        let cfg_err = gaussian_config();
        let index = line_index(&[1.0, 1.0, 2.0], None);
        assert!(matches!(
            density_at_with_k(&index, &cfg_err, &[1.0], 2),
            Err(Error::DegenerateRadius { .. })
        ));

        let kernel = make_kernel(KernelFamily::GaussianProduct, 1, 1, &[]).unwrap();
        let cfg_eps =
            EstimatorConfig::new(0.7, 0.05, 1.0, kernel, DegeneratePolicy::EpsilonRadius).unwrap();
        let est = density_at_with_k(&index, &cfg_eps, &[1.0], 2).unwrap();
        assert_eq!(est.radius_used, 1e-12 * 1.0);
        assert!(est.value.is_finite());
    }

    #[test]
    fn config_validation() {
        let kernel = make_kernel(KernelFamily::GaussianProduct, 1, 1, &[]).unwrap();
        assert!(EstimatorConfig::new(0.4, 0.05, 1.0, kernel.clone(), DegeneratePolicy::Error)
            .is_err());
        assert!(EstimatorConfig::new(0.7, 0.2, 1.0, kernel.clone(), DegeneratePolicy::Error)
            .is_err());
        assert!(
            EstimatorConfig::new(0.7, 0.05, -1.0, kernel, DegeneratePolicy::Error).is_err()
        );
    }

    #[test]
    fn kernel_dimension_must_match_data() {
        let kernel = make_kernel(KernelFamily::GaussianProduct, 2, 1, &[]).unwrap();
        let cfg = config(kernel);
        let index = line_index(&[0.0, 1.0], None);
        assert!(matches!(
            density_at_with_k(&index, &cfg, &[0.0], 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
