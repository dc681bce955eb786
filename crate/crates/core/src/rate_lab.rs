//! Seeded Monte Carlo scaling studies and the two proof-construct
//! diagnostics: the sandwich bracketing of the adaptive estimate between two
//! fixed-bandwidth estimates, and a quadrature oracle for the smoothing bias.
//!
//! Determinism contract: every trial derives its RNG stream from (study
//! seed, size index, trial index, attempt), trials are collected in index
//! order, and aggregation uses compensated fixed-order reductions, so
//! results are bit-identical across thread counts and repeat runs.

use crate::error::{Error, Result};
use crate::estimators::{
    density_at_with_k, density_fixed_bandwidth, g_at_with_k, regression_at_with_k, schedule_b,
    schedule_k, schedule_m, EstimatorConfig, Target,
};
use crate::kernels::{check_radial_monotone, unit_ball_volume, Kernel};
use crate::neighbor_index::{build_index, NeighborIndex, SampleSet, DEFAULT_LEAF_SIZE};
use crate::quadrature::for_each_tensor_node;
use crate::summation::{compensated_mean, CompensatedSum};
use crate::synthetic_models::{SyntheticModel, TruthKind};
use rayon::prelude::*;
use std::sync::Arc;

/// Number of quasi-random evaluation points used when p >= 3.
pub const QUASI_GRID_POINTS: usize = 10_000;
/// The embedded direction-number table covers this many axes.
pub const MAX_QUASI_DIM: usize = 8;
/// Resample cap per trial before the study gives up.
const MAX_TRIAL_ATTEMPTS: usize = 32;
/// Share of degenerate trials that aborts a study.
const DEGENERATE_ABORT_SHARE: f64 = 0.10;

/// Largest absolute deviation between two grids of values.
pub fn sup_error(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::InvalidData(
            "sup error needs at least one grid value".into(),
        ));
    }
    let mut worst = 0.0f64;
    for (&e, &t) in estimates.iter().zip(truths) {
        let d = (e - t).abs();
        if !d.is_finite() {
            return Err(Error::InvalidData(format!(
                "non-finite deviation between estimate {e} and truth {t}"
            )));
        }
        worst = worst.max(d);
    }
    Ok(worst)
}

/// The predicted sup-norm error scale at sample size n with k neighbors:
/// a bias term (k/n)^((r+1)/p) plus a stochastic term sqrt(n ln n / k^2),
/// the latter scaled by the response envelope M_n for the g and regression
/// targets; the regression target additionally pays the density floor b_n.
/// `m_n` is ignored for the density target and `b_n` for density and g.
pub fn theory_rate(
    n: usize,
    k: usize,
    p: usize,
    r: usize,
    m_n: f64,
    b_n: f64,
    target: Target,
) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSchedule(format!(
            "n must be at least 2, got {n}"
        )));
    }
    if k < 1 || k > n {
        return Err(Error::InvalidSchedule(format!(
            "k must lie in [1, n], got k={k} with n={n}"
        )));
    }
    if p < 1 || r < 1 {
        return Err(Error::InvalidSchedule(format!(
            "p and r must be at least 1, got p={p}, r={r}"
        )));
    }
    let nf = n as f64;
    let kf = k as f64;
    let bias = (kf / nf).powf((r + 1) as f64 / p as f64);
    let base_sq = nf * nf.ln() / (kf * kf);
    let rate = match target {
        Target::Density => bias + base_sq.sqrt(),
        Target::G | Target::Regression => {
            if !(m_n > 0.0 && m_n.is_finite()) {
                return Err(Error::InvalidSchedule(format!(
                    "M_n must be positive and finite for the {} target, got {m_n}",
                    target.name()
                )));
            }
            let stochastic = (base_sq * m_n * m_n).sqrt();
            if target == Target::Regression {
                if !(b_n > 0.0 && b_n.is_finite()) {
                    return Err(Error::InvalidSchedule(format!(
                        "b_n must be positive and finite for the regression target, got {b_n}"
                    )));
                }
                bias + stochastic + b_n
            } else {
                bias + stochastic
            }
        }
    };
    Ok(rate)
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial RNG seed, decorrelated across (size index, trial, attempt).
fn trial_seed(study_seed: u64, n_index: usize, trial: usize, attempt: usize) -> u64 {
    let mut z = study_seed;
    for salt in [n_index as u64, trial as u64, attempt as u64] {
        z = mix64(z.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)));
    }
    z
}

/// Interpolated quantile of an ascending-sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Least-squares fit of ln(observed) = slope * ln(predicted) + intercept.
pub fn fit_power_law(predicted: &[f64], observed: &[f64]) -> Result<(f64, f64)> {
    if predicted.len() != observed.len() {
        return Err(Error::DimensionMismatch {
            expected: predicted.len(),
            got: observed.len(),
        });
    }
    if predicted.len() < 2 {
        return Err(Error::InvalidData(
            "power-law fit needs at least two sizes".into(),
        ));
    }
    let mut xs = Vec::with_capacity(predicted.len());
    let mut ys = Vec::with_capacity(observed.len());
    for (&pv, &ov) in predicted.iter().zip(observed) {
        if !(pv > 0.0 && pv.is_finite() && ov > 0.0 && ov.is_finite()) {
            return Err(Error::InvalidData(format!(
                "power-law fit needs positive finite values, got predicted={pv}, observed={ov}"
            )));
        }
        xs.push(pv.ln());
        ys.push(ov.ln());
    }
    let x_bar = compensated_mean(&xs);
    let y_bar = compensated_mean(&ys);
    let mut sxx = CompensatedSum::new();
    let mut sxy = CompensatedSum::new();
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx.add((x - x_bar) * (x - x_bar));
        sxy.add((x - x_bar) * (y - y_bar));
    }
    let sxx = sxx.total();
    if sxx == 0.0 {
        return Err(Error::InvalidData(
            "power-law fit is undefined when all predicted rates coincide".into(),
        ));
    }
    let slope = sxy.total() / sxx;
    Ok((slope, y_bar - slope * x_bar))
}

/// Configuration of one scaling study.
#[derive(Debug, Clone)]
pub struct RateStudyConfig {
    pub model: SyntheticModel,
    pub estimator: EstimatorConfig,
    pub target: Target,
    /// Strictly increasing sample sizes.
    pub n_grid: Vec<usize>,
    /// Monte Carlo repetitions per sample size.
    pub trials: usize,
    /// Points of the evaluation box where the sup error is approximated.
    pub eval_grid: Vec<Vec<f64>>,
    pub seed: u64,
}

impl RateStudyConfig {
    /// Library-level floors; the command-line front end applies the stricter
    /// shipped-study floors (at least 4 sizes and 10 trials) so that
    /// single-trial diagnostics remain expressible here.
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_grid needs at least 2 sizes for a slope fit, got {}",
                self.n_grid.len()
            )));
        }
        for w in self.n_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(format!(
                    "n_grid must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if self.n_grid[0] < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_grid sizes must be at least 2, got {}",
                self.n_grid[0]
            )));
        }
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.eval_grid.is_empty() {
            return Err(Error::InvalidConfig(
                "eval_grid must contain at least one point".into(),
            ));
        }
        let p = self.model.dimension();
        let kernel = self.estimator.kernel();
        if kernel.dimension() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: kernel.dimension(),
            });
        }
        if kernel.order() > self.model.smoothness() {
            return Err(Error::PreconditionFailed(format!(
                "kernel order {} exceeds the certified smoothness {} of model {}",
                kernel.order(),
                self.model.smoothness(),
                self.model.name()
            )));
        }
        let (lo, hi) = self.model.eval_box();
        for point in &self.eval_grid {
            if point.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: point.len(),
                });
            }
            for (j, &v) in point.iter().enumerate() {
                if !(v >= lo[j] && v <= hi[j]) {
                    return Err(Error::OutsideEvaluationBox {
                        axis: j + 1,
                        value: v,
                        lo: lo[j],
                        hi: hi[j],
                    });
                }
            }
        }
        Ok(())
    }
}

/// Aggregates for one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct PerNRow {
    pub n: usize,
    pub k_n: usize,
    pub b_n: f64,
    pub m_n: f64,
    pub mean_sup_error: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    /// Mean share of responses clipped to the envelope.
    pub clip_rate: f64,
    pub theory_rate: f64,
    /// Trials that had to be resampled after a degenerate radius.
    pub degenerate_retries: usize,
}

/// Outcome of a scaling study.
#[derive(Debug, Clone, PartialEq)]
pub struct RateStudyResult {
    pub per_n: Vec<PerNRow>,
    /// Slope of ln(mean sup error) against ln(theory rate).
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
    /// Exponent of n in the bias term (log factors dropped): -(1-c1)(r+1)/p.
    pub theory_exponent_bias: f64,
    /// Exponent of n in the stochastic term (log factors dropped): (1-2c1)/2.
    pub theory_exponent_variance: f64,
    pub degenerate_trials: usize,
    pub total_trials: usize,
}

struct TrialOutcome {
    sup_error: f64,
    clip_rate: f64,
    retries: usize,
}

fn evaluate_target(
    index: &NeighborIndex,
    estimator: &EstimatorConfig,
    target: Target,
    x: &[f64],
    k: usize,
    b_n: f64,
) -> Result<f64> {
    match target {
        Target::Density => Ok(density_at_with_k(index, estimator, x, k)?.value),
        Target::G => Ok(g_at_with_k(index, estimator, x, k)?.value),
        Target::Regression => Ok(regression_at_with_k(index, estimator, x, k, b_n)?.value),
    }
}

fn run_trial(
    config: &RateStudyConfig,
    truths: &[f64],
    n: usize,
    k: usize,
    b_n: f64,
    n_index: usize,
    trial: usize,
) -> Result<TrialOutcome> {
    let mut estimates = vec![0.0; config.eval_grid.len()];
    'attempt: for attempt in 0..MAX_TRIAL_ATTEMPTS {
        let seed = trial_seed(config.seed, n_index, trial, attempt);
        let drawn = config.model.sample(n, seed, config.estimator.c_m())?;
        let clip_rate = drawn.clip_count as f64 / n as f64;
        let index = build_index(Arc::new(drawn.sample), DEFAULT_LEAF_SIZE)?;
        for (slot, x) in estimates.iter_mut().zip(&config.eval_grid) {
            match evaluate_target(&index, &config.estimator, config.target, x, k, b_n) {
                Ok(v) => *slot = v,
                Err(Error::DegenerateRadius { .. }) => continue 'attempt,
                Err(e) => return Err(e),
            }
        }
        return Ok(TrialOutcome {
            sup_error: sup_error(&estimates, truths)?,
            clip_rate,
            retries: attempt,
        });
    }
    Err(Error::StudyAborted {
        degenerate: MAX_TRIAL_ATTEMPTS,
        total: MAX_TRIAL_ATTEMPTS,
    })
}

/// Runs the full scaling study: for every size draw `trials` seeded samples,
/// estimate the target on the evaluation grid, record sup errors, aggregate,
/// and fit ln(mean sup error) against ln(theory rate). Degenerate-radius
/// trials are resampled on a fresh stream and counted; a degenerate share
/// above 10% aborts.
pub fn run_rate_study(config: &RateStudyConfig) -> Result<RateStudyResult> {
    config.validate()?;
    let kind = TruthKind::from_target(config.target);
    let truths: Vec<f64> = config
        .eval_grid
        .iter()
        .map(|x| config.model.truth(kind, x))
        .collect::<Result<_>>()?;
    let p = config.model.dimension();
    let r = config.estimator.kernel().order();
    let mut per_n = Vec::with_capacity(config.n_grid.len());
    let mut degenerate_trials = 0usize;
    let mut total_trials = 0usize;
    for (n_index, &n) in config.n_grid.iter().enumerate() {
        let k = schedule_k(n, config.estimator.c1())?;
        let b_n = schedule_b(n, config.estimator.c2())?;
        let m_n = schedule_m(n, config.estimator.c_m())?;
        let outcomes: Vec<TrialOutcome> = (0..config.trials)
            .into_par_iter()
            .map(|trial| run_trial(config, &truths, n, k, b_n, n_index, trial))
            .collect::<Result<_>>()?;
        let errors: Vec<f64> = outcomes.iter().map(|o| o.sup_error).collect();
        let clip_rates: Vec<f64> = outcomes.iter().map(|o| o.clip_rate).collect();
        let retries: usize = outcomes.iter().map(|o| o.retries).sum();
        degenerate_trials += retries;
        total_trials += config.trials;
        if degenerate_trials as f64 > DEGENERATE_ABORT_SHARE * total_trials as f64 {
            return Err(Error::StudyAborted {
                degenerate: degenerate_trials,
                total: total_trials,
            });
        }
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        per_n.push(PerNRow {
            n,
            k_n: k,
            b_n,
            m_n,
            mean_sup_error: compensated_mean(&errors),
            median: quantile_sorted(&sorted, 0.5),
            q10: quantile_sorted(&sorted, 0.1),
            q90: quantile_sorted(&sorted, 0.9),
            clip_rate: compensated_mean(&clip_rates),
            theory_rate: theory_rate(n, k, p, r, m_n, b_n, config.target)?,
            degenerate_retries: retries,
        });
    }
    let predicted: Vec<f64> = per_n.iter().map(|row| row.theory_rate).collect();
    let observed: Vec<f64> = per_n
        .iter()
        .map(|row| row.mean_sup_error.max(f64::MIN_POSITIVE))
        .collect();
    let (fitted_slope, fitted_intercept) = fit_power_law(&predicted, &observed)?;
    let c1 = config.estimator.c1();
    Ok(RateStudyResult {
        per_n,
        fitted_slope,
        fitted_intercept,
        theory_exponent_bias: -(1.0 - c1) * (r + 1) as f64 / p as f64,
        theory_exponent_variance: (1.0 - 2.0 * c1) / 2.0,
        degenerate_trials,
        total_trials,
    })
}

/// How the bracketing parameter beta is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRule {
    /// beta = 1 - n^{-(r+1)/p}, the canonical schedule; at desk-scale n it
    /// pins the bracket far tighter than the neighbor radius concentrates,
    /// so containment is near zero. Kept as the reference rule.
    Canonical,
    /// Explicit beta in (0, 1].
    Fixed(f64),
    /// Calibrated so the bracket absorbs both the unit-ball-volume offset of
    /// the deterministic radii and about 3.3 standard deviations of the
    /// neighbor-radius fluctuation:
    /// beta = [min(V_p^{-1/p}, V_p^{1/p}) * (1 - 3.3/sqrt(k))]^{2p},
    /// clamped to [1e-6, 1 - 1e-6].
    Coverage,
}

impl BetaRule {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "canonical" => Ok(BetaRule::Canonical),
            "coverage" => Ok(BetaRule::Coverage),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v <= 1.0 => Ok(BetaRule::Fixed(v)),
                Ok(v) => Err(Error::InvalidConfig(format!(
                    "fixed beta must lie in (0, 1], got {v}"
                ))),
                Err(_) => Err(Error::InvalidConfig(format!(
                    "unknown beta rule '{other}' (expected canonical, coverage, or a number in (0, 1])"
                ))),
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            BetaRule::Canonical => "canonical".into(),
            BetaRule::Coverage => "coverage".into(),
            BetaRule::Fixed(v) => format!("{v}"),
        }
    }

    /// Resolves the rule to a concrete beta for sample size n, k neighbors.
    pub fn resolve(&self, n: usize, k: usize, p: usize, r: usize) -> f64 {
        match *self {
            BetaRule::Canonical => 1.0 - (n as f64).powf(-((r + 1) as f64) / p as f64),
            BetaRule::Fixed(v) => v,
            BetaRule::Coverage => {
                let v = unit_ball_volume(p);
                let inv_p = 1.0 / p as f64;
                let anchor = v.powf(-inv_p).min(v.powf(inv_p));
                let slack = 1.0 - 3.3 / (k as f64).sqrt();
                (anchor * slack.max(0.0))
                    .powf(2.0 * p as f64)
                    .clamp(1e-6, 1.0 - 1e-6)
            }
        }
    }
}

/// The two deterministic radii that bracket the k-th neighbor distance:
/// base = (k / (n f))^{1/p}, lower = base * beta^{1/(2p)}, upper = base *
/// beta^{-1/(2p)}.
pub fn deterministic_radii(
    f_true: f64,
    k: usize,
    n: usize,
    p: usize,
    beta: f64,
) -> Result<(f64, f64)> {
    if !(f_true > 0.0 && f_true.is_finite()) {
        return Err(Error::InvalidData(format!(
            "deterministic radii need a positive finite density value, got {f_true}"
        )));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    if k < 1 || k > n {
        return Err(Error::InvalidSchedule(format!(
            "k must lie in [1, n], got k={k} with n={n}"
        )));
    }
    let base = (k as f64 / (n as f64 * f_true)).powf(1.0 / p as f64);
    let spread = beta.powf(1.0 / (2.0 * p as f64));
    Ok((base * spread, base / spread))
}

/// One evaluation point of the sandwich diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichPoint {
    pub x: Vec<f64>,
    pub d_minus: f64,
    pub d_plus: f64,
    pub r_n: f64,
    /// Whether d_minus <= r_n <= d_plus.
    pub contained: bool,
    /// Lower bracket: normalizer bandwidth d_plus, argument bandwidth d_minus.
    pub f1: f64,
    pub f_hat: f64,
    /// Upper bracket: the bandwidth swap of f1.
    pub f2: f64,
    /// f1 <= f_hat <= f2, evaluated only at contained points.
    pub ordered_given_containment: Option<bool>,
}

/// Sandwich diagnostic across a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub per_point: Vec<SandwichPoint>,
    pub containment_rate: f64,
    /// Share of contained points with the bracket ordering intact
    /// (vacuously 1 when nothing is contained).
    pub conditional_order_rate: f64,
    pub n: usize,
    pub k: usize,
    pub beta: f64,
}

fn leq_to_summation_slack(a: f64, b: f64) -> bool {
    a <= b + 4.0 * f64::EPSILON * a.abs().max(b.abs())
}

/// For each grid point, compares the adaptive estimate f_hat (bandwidth =
/// k-th neighbor distance) against the bracketing pair built from the
/// deterministic radii at the true density: f1 uses the lower radius inside
/// the kernel and the upper in the normalizer, f2 swaps them. For a
/// radially monotone kernel, whenever the neighbor radius lands between the
/// deterministic radii the ordering f1 <= f_hat <= f2 is forced.
pub fn sandwich_diagnostic(
    model: &SyntheticModel,
    sample: &SampleSet,
    estimator: &EstimatorConfig,
    eval_grid: &[Vec<f64>],
    beta_rule: BetaRule,
) -> Result<SandwichReport> {
    let kernel = estimator.kernel();
    let report = check_radial_monotone(kernel, 64, 64);
    if !report.holds {
        return Err(Error::PreconditionFailed(format!(
            "kernel {} is not radially monotone, so the bracket ordering is not guaranteed",
            kernel.spec_string()
        )));
    }
    if eval_grid.is_empty() {
        return Err(Error::InvalidConfig(
            "sandwich diagnostic needs at least one evaluation point".into(),
        ));
    }
    let n = sample.len();
    let p = model.dimension();
    let k = schedule_k(n, estimator.c1())?;
    let beta = beta_rule.resolve(n, k, p, kernel.order());
    let index = build_index(Arc::new(sample.clone()), DEFAULT_LEAF_SIZE)?;
    let mut per_point = Vec::with_capacity(eval_grid.len());
    let mut contained_count = 0usize;
    let mut ordered_count = 0usize;
    for x in eval_grid {
        let f_true = model.true_density(x)?;
        let (d_minus, d_plus) = deterministic_radii(f_true, k, n, p, beta)?;
        let estimate = density_at_with_k(&index, estimator, x, k)?;
        let r_n = estimate.radius_used;
        let f_hat = estimate.value;
        let f1 = density_fixed_bandwidth(&index, kernel, x, d_minus, d_plus)?;
        let f2 = density_fixed_bandwidth(&index, kernel, x, d_plus, d_minus)?;
        let contained = d_minus <= r_n && r_n <= d_plus;
        let ordered = if contained {
            let ok = leq_to_summation_slack(f1, f_hat) && leq_to_summation_slack(f_hat, f2);
            contained_count += 1;
            if ok {
                ordered_count += 1;
            }
            Some(ok)
        } else {
            None
        };
        per_point.push(SandwichPoint {
            x: x.clone(),
            d_minus,
            d_plus,
            r_n,
            contained,
            f1,
            f_hat,
            f2,
            ordered_given_containment: ordered,
        });
    }
    Ok(SandwichReport {
        containment_rate: contained_count as f64 / eval_grid.len() as f64,
        conditional_order_rate: if contained_count == 0 {
            1.0
        } else {
            ordered_count as f64 / contained_count as f64
        },
        per_point,
        n,
        k,
        beta,
    })
}

/// Result of the smoothing-bias oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    /// gamma times the quadrature of K(u) * truth(x + D2 u).
    pub expected_value: f64,
    pub bias_abs: f64,
    pub truth_at_x: f64,
    /// (D2/D1)^p.
    pub gamma: f64,
    /// Set when x is closer to the edge of the evaluation box than 6 * D2 *
    /// (kernel profile width); the result is still returned.
    pub boundary_flagged: bool,
    pub nodes_per_axis: usize,
}

/// Quadrature oracle for the smoothed mean of a linear-functional target:
/// expected = (D2/D1)^p * integral of K(u) * truth(x + D2 u) du, and the
/// absolute gap to the truth at x. Valid targets are density, g, g1, g2;
/// the regression ratio has no such linear identity.
pub fn bias_oracle(
    model: &SyntheticModel,
    kernel: &Kernel,
    kind: TruthKind,
    d1: f64,
    d2: f64,
    x: &[f64],
    budget: usize,
) -> Result<BiasReport> {
    if kind == TruthKind::Regression {
        return Err(Error::InvalidTarget(
            "bias oracle applies to density, g, g1, or g2, not the regression ratio".into(),
        ));
    }
    let p = model.dimension();
    if p > 2 {
        return Err(Error::PreconditionFailed(format!(
            "quadrature bias oracle supports p <= 2, got {p}"
        )));
    }
    if kernel.dimension() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: kernel.dimension(),
        });
    }
    if !(d1 > 0.0 && d1.is_finite() && d2 > 0.0 && d2.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bandwidths must be positive and finite, got D1={d1}, D2={d2}"
        )));
    }
    if budget < 1000 {
        return Err(Error::InvalidConfig(format!(
            "integration budget must be at least 1000, got {budget}"
        )));
    }
    let truth_at_x = model.truth(kind, x)?;
    let profile_width = kernel.support_radius().unwrap_or(1.0);
    let margin_needed = 6.0 * d2 * profile_width;
    let (lo, hi) = model.eval_box();
    let boundary_flagged = x
        .iter()
        .enumerate()
        .any(|(j, &v)| (v - lo[j]).min(hi[j] - v) < margin_needed);
    let nodes_per_axis = ((budget as f64).powf(1.0 / p as f64).floor() as usize).clamp(16, 128);
    let w = kernel.integration_half_width();
    let lo_box = vec![-w; p];
    let hi_box = vec![w; p];
    let mut acc = CompensatedSum::new();
    let mut shifted = vec![0.0; p];
    for_each_tensor_node(&lo_box, &hi_box, nodes_per_axis, |u, weight| {
        for j in 0..p {
            shifted[j] = x[j] + d2 * u[j];
        }
        acc.add(weight * kernel.eval_raw(u) * model.truth_extended(kind, &shifted));
    });
    let gamma = (d2 / d1).powi(p as i32);
    let expected_value = gamma * acc.total();
    Ok(BiasReport {
        expected_value,
        bias_abs: (expected_value - truth_at_x).abs(),
        truth_at_x,
        gamma,
        boundary_flagged,
        nodes_per_axis,
    })
}

/// Direction numbers for the base-2 digital sequence, first 8 axes
/// (degree s, polynomial code a, initial odd values m).
const QUASI_DIRECTIONS: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

const QUASI_BITS: usize = 32;

fn direction_vectors(axis: usize) -> [u32; QUASI_BITS] {
    let mut v = [0u32; QUASI_BITS];
    if axis == 0 {
        for (kv, slot) in v.iter_mut().enumerate() {
            *slot = 1u32 << (31 - kv);
        }
        return v;
    }
    let (s, a, m) = QUASI_DIRECTIONS[axis - 1];
    let s = s as usize;
    for k in 0..s.min(QUASI_BITS) {
        v[k] = m[k] << (31 - k);
    }
    for k in s..QUASI_BITS {
        let mut value = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                value ^= v[k - j];
            }
        }
        v[k] = value;
    }
    v
}

/// First `count` points of the base-2 low-discrepancy sequence in [0,1)^dim,
/// Gray-code order starting at the zero point, so every prefix of length 2^m
/// stratifies each axis exactly.
pub fn quasi_random_points(count: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim < 1 || dim > MAX_QUASI_DIM {
        return Err(Error::PreconditionFailed(format!(
            "quasi-random grids support 1 <= p <= {MAX_QUASI_DIM}, got {dim}"
        )));
    }
    if count >= (1usize << QUASI_BITS) {
        return Err(Error::InvalidConfig(format!(
            "quasi-random sequence supports fewer than 2^32 points, got {count}"
        )));
    }
    let vectors: Vec<[u32; QUASI_BITS]> = (0..dim).map(direction_vectors).collect();
    let mut state = vec![0u32; dim];
    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            let c = i.trailing_zeros() as usize;
            for (j, s) in state.iter_mut().enumerate() {
                *s ^= vectors[j][c];
            }
        }
        points.push(
            state
                .iter()
                .map(|&s| s as f64 / (1u64 << QUASI_BITS) as f64)
                .collect(),
        );
    }
    Ok(points)
}

/// Default inset of the evaluation grid from the edge of B:
/// 3 * (k / (n c0))^{1/p} at the smallest study size, capped at 45% of the
/// narrowest half-width so the grid never collapses.
pub fn default_grid_inset(model: &SyntheticModel, n_min: usize, c1: f64) -> Result<f64> {
    let k = schedule_k(n_min, c1)?;
    let p = model.dimension();
    let raw = 3.0
        * (k as f64 / (n_min as f64 * model.density_floor())).powf(1.0 / p as f64);
    let (lo, hi) = model.eval_box();
    let min_width = lo
        .iter()
        .zip(hi)
        .map(|(&a, &b)| b - a)
        .fold(f64::INFINITY, f64::min);
    Ok(raw.min(0.45 * 0.5 * min_width))
}

/// Evaluation lattice inside the model's box B, inset from the edge on every
/// axis: a tensor grid with `per_axis` points per axis for p <= 2, and
/// 10^4 low-discrepancy points for p >= 3.
pub fn make_eval_grid(
    model: &SyntheticModel,
    per_axis: usize,
    inset: f64,
) -> Result<Vec<Vec<f64>>> {
    let p = model.dimension();
    let (lo, hi) = model.eval_box();
    if !(inset >= 0.0 && inset.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "grid inset must be nonnegative and finite, got {inset}"
        )));
    }
    for j in 0..p {
        if 2.0 * inset >= hi[j] - lo[j] {
            return Err(Error::InvalidConfig(format!(
                "grid inset {inset} leaves no room on axis {} of width {}",
                j + 1,
                hi[j] - lo[j]
            )));
        }
    }
    if p <= 2 {
        if per_axis < 1 {
            return Err(Error::InvalidConfig(
                "grid needs at least 1 point per axis".into(),
            ));
        }
        let axis_points: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let a = lo[j] + inset;
                let b = hi[j] - inset;
                if per_axis == 1 {
                    vec![0.5 * (a + b)]
                } else {
                    (0..per_axis)
                        .map(|i| a + (b - a) * i as f64 / (per_axis - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let mut grid = Vec::with_capacity(per_axis.pow(p as u32));
        if p == 1 {
            for &v in &axis_points[0] {
                grid.push(vec![v]);
            }
        } else {
            for &v0 in &axis_points[0] {
                for &v1 in &axis_points[1] {
                    grid.push(vec![v0, v1]);
                }
            }
        }
        Ok(grid)
    } else {
        let unit = quasi_random_points(QUASI_GRID_POINTS, p)?;
        Ok(unit
            .into_iter()
            .map(|u| {
                (0..p)
                    .map(|j| lo[j] + inset + (hi[j] - lo[j] - 2.0 * inset) * u[j])
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::DegeneratePolicy;
    use crate::kernels::{make_kernel, KernelFamily};
    use crate::synthetic_models::{make_model, ModelOverrides};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_estimator(p: usize) -> EstimatorConfig {
        let kernel = make_kernel(KernelFamily::GaussianProduct, p, 1, &[]).unwrap();
        EstimatorConfig::new(0.7, 0.05, 1.0, kernel, DegeneratePolicy::Error).unwrap()
    }

    #[test]
    fn sup_error_examples() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(sup_error(&t, &t).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.3).collect();
        assert!((sup_error(&shifted, &t).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(
            sup_error(&[0.1, -0.4, 0.2], &[0.0, 0.0, 0.0]).unwrap(),
            0.4
        );
        assert!(matches!(
            sup_error(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            sup_error(&[f64::NAN], &[0.0]),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn theory_rate_frozen_values() {
        let rate = theory_rate(65536, 2352, 1, 1, 1.0, 1.0, Target::Density).unwrap();
        let bias = 0.001287996768951416;
        let stochastic = 0.362472755878181336;
        assert!((rate - (bias + stochastic)).abs() < 1e-14, "{rate}");
        // Headline magnitude check.
        assert!((rate - 0.3638).abs() < 2e-4);
    }

    #[test]
    fn theory_rate_reductions() {
        let n = 4096;
        let full = theory_rate(n, n, 1, 1, 1.0, 1.0, Target::Density).unwrap();
        let expected = 1.0 + ((n as f64).ln() / n as f64).sqrt();
        assert_eq!(full, expected);
        let g = theory_rate(n, 128, 2, 3, 1.0, 1.0, Target::G).unwrap();
        let d = theory_rate(n, 128, 2, 3, 1.0, 1.0, Target::Density).unwrap();
        assert_eq!(g, d);
        let m_n = 2.5;
        let b_n = 0.7;
        let reg = theory_rate(n, 128, 2, 3, m_n, b_n, Target::Regression).unwrap();
        let g2 = theory_rate(n, 128, 2, 3, m_n, b_n, Target::G).unwrap();
        assert_eq!(reg, g2 + b_n);
        assert!(theory_rate(1, 1, 1, 1, 1.0, 1.0, Target::Density).is_err());
        assert!(theory_rate(100, 0, 1, 1, 1.0, 1.0, Target::Density).is_err());
        assert!(theory_rate(100, 101, 1, 1, 1.0, 1.0, Target::Density).is_err());
        assert!(theory_rate(100, 10, 1, 1, 0.0, 1.0, Target::G).is_err());
        assert!(theory_rate(100, 10, 1, 1, 1.0, 0.0, Target::Regression).is_err());
    }

    #[test]
    fn power_law_fit_recovers_exact_relation() {
        let rates = [0.5, 0.3, 0.2, 0.1];
        let c = 2.7;
        let errors: Vec<f64> = rates.iter().map(|r| c * r).collect();
        let (slope, intercept) = fit_power_law(&rates, &errors).unwrap();
        assert!((slope - 1.0).abs() < 1e-12);
        assert!((intercept - c.ln()).abs() < 1e-12);
        let flat = [c; 4];
        let (slope0, _) = fit_power_law(&rates, &flat).unwrap();
        assert_eq!(slope0, 0.0);
    }

    #[test]
    fn power_law_fit_absorbs_small_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rates: Vec<f64> = (0..7).map(|i| 0.5 / (1.3f64).powi(i)).collect();
        let errors: Vec<f64> = rates
            .iter()
            .map(|r| 3.1 * r * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0)))
            .collect();
        let (slope, _) = fit_power_law(&rates, &errors).unwrap();
        assert!((0.98..=1.02).contains(&slope), "{slope}");
    }

    #[test]
    fn power_law_fit_rejects_degenerate_inputs() {
        assert!(fit_power_law(&[0.5], &[0.2]).is_err());
        assert!(fit_power_law(&[0.5, 0.5], &[0.2, 0.3]).is_err());
        assert!(fit_power_law(&[0.5, -0.1], &[0.2, 0.3]).is_err());
    }

    #[test]
    fn trial_seeds_are_decorrelated() {
        let mut seen = std::collections::HashSet::new();
        for n_index in 0..8 {
            for trial in 0..64 {
                for attempt in 0..2 {
                    assert!(seen.insert(trial_seed(42, n_index, trial, attempt)));
                }
            }
        }
    }

    fn small_study() -> RateStudyConfig {
        let model = make_model("M3", &ModelOverrides::default()).unwrap();
        let inset = default_grid_inset(&model, 64, 0.7).unwrap();
        let eval_grid = make_eval_grid(&model, 25, inset).unwrap();
        RateStudyConfig {
            estimator: gaussian_estimator(model.dimension()),
            model,
            target: Target::Density,
            n_grid: vec![64, 128, 256, 512],
            trials: 3,
            eval_grid,
            seed: 2026,
        }
    }

    #[test]
    fn rate_study_is_deterministic_and_positive() {
        let config = small_study();
        let a = run_rate_study(&config).unwrap();
        let b = run_rate_study(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_n.len(), 4);
        for row in &a.per_n {
            assert!(row.mean_sup_error > 0.0);
            assert!(row.q10 <= row.median && row.median <= row.q90);
            assert!(row.theory_rate > 0.0);
            assert_eq!(row.degenerate_retries, 0);
            assert_eq!(row.clip_rate, 0.0);
        }
        assert!(a.fitted_slope.is_finite());
        assert!((a.theory_exponent_bias - (-(0.3) * 2.0)).abs() < 1e-12);
        assert!((a.theory_exponent_variance - (-0.2)).abs() < 1e-12);
    }

    #[test]
    fn rate_study_validates_config() {
        let mut config = small_study();
        config.n_grid = vec![64];
        assert!(matches!(
            run_rate_study(&config),
            Err(Error::InvalidConfig(_))
        ));
        let mut config = small_study();
        config.n_grid = vec![128, 64, 256, 512];
        assert!(run_rate_study(&config).is_err());
        let mut config = small_study();
        config.trials = 0;
        assert!(run_rate_study(&config).is_err());
        let mut config = small_study();
        config.eval_grid[0][0] = 5.0;
        assert!(matches!(
            run_rate_study(&config),
            Err(Error::OutsideEvaluationBox { .. })
        ));
        let mut config = small_study();
        let poly5 = make_kernel(KernelFamily::PolyGaussianOrderR, 1, 3, &[]).unwrap();
        config.estimator =
            EstimatorConfig::new(0.7, 0.05, 1.0, poly5, DegeneratePolicy::Error).unwrap();
        // Order 3 kernel is allowed (model smoothness 3); order above must fail.
        assert!(run_rate_study(&config).is_ok());
    }

    #[test]
    fn beta_rules_resolve_sanely() {
        assert_eq!(BetaRule::Fixed(0.5).resolve(100, 10, 1, 1), 0.5);
        let canonical = BetaRule::Canonical.resolve(10_000, 630, 1, 1);
        assert!((canonical - (1.0 - 1e-8)).abs() < 1e-12);
        let coverage = BetaRule::Coverage.resolve(10_000, 630, 1, 1);
        assert!((0.1..0.3).contains(&coverage), "{coverage}");
        // Tiny k exhausts the slack; the clamp keeps beta valid.
        assert_eq!(BetaRule::Coverage.resolve(100, 4, 1, 1), 1e-6);
        assert!(matches!(BetaRule::parse("canonical"), Ok(BetaRule::Canonical)));
        assert!(matches!(BetaRule::parse("coverage"), Ok(BetaRule::Coverage)));
        assert!(matches!(BetaRule::parse("0.25"), Ok(BetaRule::Fixed(_))));
        assert!(BetaRule::parse("1.5").is_err());
        assert!(BetaRule::parse("nope").is_err());
    }

    #[test]
    fn deterministic_radii_frozen_example() {
        // 0.01 * sqrt(0.99) and 0.01 / sqrt(0.99) as doubles.
        let (d_minus, d_plus) = deterministic_radii(1.0, 100, 10_000, 1, 0.99).unwrap();
        assert!((d_minus - 0.0099498743710662).abs() < 1e-18);
        assert!((d_plus - 0.010050378152592122).abs() < 1e-18);
        let (a, b) = deterministic_radii(1.0, 100, 10_000, 1, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 0.01);
        assert!(deterministic_radii(0.0, 100, 10_000, 1, 0.99).is_err());
        assert!(deterministic_radii(1.0, 100, 10_000, 1, 0.0).is_err());
    }

    #[test]
    fn sandwich_orders_contained_points() {
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let trial = model.sample(2000, 77, 1.0).unwrap();
        let estimator = gaussian_estimator(1);
        let inset = default_grid_inset(&model, 2000, 0.7).unwrap();
        let grid = make_eval_grid(&model, 50, inset).unwrap();
        let report =
            sandwich_diagnostic(&model, &trial.sample, &estimator, &grid, BetaRule::Coverage)
                .unwrap();
        assert_eq!(report.per_point.len(), 50);
        assert_eq!(report.conditional_order_rate, 1.0);
        assert!(report.containment_rate > 0.9, "{}", report.containment_rate);
        for point in &report.per_point {
            assert!(point.d_minus < point.d_plus);
            if point.contained {
                assert_eq!(point.ordered_given_containment, Some(true));
                assert!(point.f1 <= point.f2);
            } else {
                assert!(point.ordered_given_containment.is_none());
            }
        }
    }

    #[test]
    fn sandwich_rejects_non_monotone_kernel() {
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let trial = model.sample(200, 3, 1.0).unwrap();
        let kernel = make_kernel(KernelFamily::PolyGaussianOrderR, 1, 3, &[]).unwrap();
        let estimator =
            EstimatorConfig::new(0.7, 0.05, 1.0, kernel, DegeneratePolicy::Error).unwrap();
        let grid = vec![vec![0.5]];
        assert!(matches!(
            sandwich_diagnostic(&model, &trial.sample, &estimator, &grid, BetaRule::Canonical),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn bias_oracle_concentrates_as_bandwidth_vanishes() {
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let kernel = make_kernel(KernelFamily::GaussianProduct, 1, 1, &[]).unwrap();
        let report = bias_oracle(
            &model,
            &kernel,
            TruthKind::G,
            1e-4,
            1e-4,
            &[0.5],
            20_000,
        )
        .unwrap();
        assert!(report.bias_abs < 1e-5, "{}", report.bias_abs);
        assert!(!report.boundary_flagged);
        assert_eq!(report.gamma, 1.0);
    }

    #[test]
    fn bias_oracle_is_exact_for_constant_truth() {
        // Compact kernel, constant density inside the support window.
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let kernel = make_kernel(KernelFamily::EpanechnikovRadial, 1, 1, &[]).unwrap();
        let report = bias_oracle(
            &model,
            &kernel,
            TruthKind::Density,
            0.05,
            0.05,
            &[0.5],
            20_000,
        )
        .unwrap();
        assert!((report.expected_value - 1.0).abs() < 1e-12);
        assert!(report.bias_abs < 1e-12);
    }

    #[test]
    fn bias_oracle_gamma_scales_expected_value() {
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let kernel = make_kernel(KernelFamily::GaussianProduct, 1, 1, &[]).unwrap();
        let base = bias_oracle(&model, &kernel, TruthKind::G, 0.02, 0.02, &[0.5], 20_000).unwrap();
        let scaled =
            bias_oracle(&model, &kernel, TruthKind::G, 0.01, 0.02, &[0.5], 20_000).unwrap();
        assert_eq!(scaled.gamma, 2.0);
        assert!((scaled.expected_value - 2.0 * base.expected_value).abs() < 1e-12);
    }

    #[test]
    fn bias_oracle_flags_boundary_and_rejects_bad_inputs() {
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let kernel = make_kernel(KernelFamily::GaussianProduct, 1, 1, &[]).unwrap();
        let near_edge =
            bias_oracle(&model, &kernel, TruthKind::G, 0.04, 0.04, &[0.11], 20_000).unwrap();
        assert!(near_edge.boundary_flagged);
        assert!(matches!(
            bias_oracle(&model, &kernel, TruthKind::Regression, 0.1, 0.1, &[0.5], 2000),
            Err(Error::InvalidTarget(_))
        ));
        assert!(bias_oracle(&model, &kernel, TruthKind::G, 0.1, 0.1, &[0.5], 10).is_err());
        assert!(bias_oracle(&model, &kernel, TruthKind::G, 0.0, 0.1, &[0.5], 2000).is_err());
        let model3 = make_model(
            "M1",
            &ModelOverrides {
                p: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let kernel3 = make_kernel(KernelFamily::GaussianProduct, 3, 1, &[]).unwrap();
        assert!(matches!(
            bias_oracle(&model3, &kernel3, TruthKind::G, 0.1, 0.1, &[0.5, 0.5, 0.5], 2000),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn bias_halving_shrinks_by_kernel_order() {
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let kernel = make_kernel(KernelFamily::GaussianProduct, 1, 1, &[]).unwrap();
        let x = [0.35];
        let wide = bias_oracle(&model, &kernel, TruthKind::G, 0.04, 0.04, &x, 20_000).unwrap();
        let narrow = bias_oracle(&model, &kernel, TruthKind::G, 0.02, 0.02, &x, 20_000).unwrap();
        let ratio = wide.bias_abs / narrow.bias_abs;
        assert!((8.0 / 3.0..=6.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn quasi_sequence_matches_frozen_prefix() {
        let pts = quasi_random_points(6, 3).unwrap();
        let expected = [
            [0.0, 0.0, 0.0],
            [0.5, 0.5, 0.5],
            [0.75, 0.25, 0.25],
            [0.25, 0.75, 0.75],
            [0.375, 0.375, 0.625],
            [0.875, 0.875, 0.125],
        ];
        for (row, want) in pts.iter().zip(&expected) {
            for (a, b) in row.iter().zip(want) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn quasi_sequence_stratifies_every_axis() {
        let count = 4096;
        let bins = 16;
        let pts = quasi_random_points(count, MAX_QUASI_DIM).unwrap();
        for j in 0..MAX_QUASI_DIM {
            let mut histogram = vec![0usize; bins];
            for point in &pts {
                histogram[(point[j] * bins as f64) as usize] += 1;
            }
            for (b, &c) in histogram.iter().enumerate() {
                assert_eq!(c, count / bins, "axis {j} bin {b}");
            }
        }
        assert!(quasi_random_points(10, 9).is_err());
    }

    #[test]
    fn eval_grid_shapes_and_inset() {
        let model = make_model("M3", &ModelOverrides::default()).unwrap();
        let inset = default_grid_inset(&model, 1024, 0.7).unwrap();
        assert!((inset - 0.18).abs() < 1e-12, "{inset}");
        let grid = make_eval_grid(&model, 5, inset).unwrap();
        assert_eq!(grid.len(), 5);
        assert!((grid[0][0] - 0.28).abs() < 1e-12);
        assert!((grid[4][0] - 0.72).abs() < 1e-12);

        let model2 = make_model(
            "M1",
            &ModelOverrides {
                p: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        let grid2 = make_eval_grid(&model2, 3, 0.05).unwrap();
        assert_eq!(grid2.len(), 9);

        let model3 = make_model(
            "M1",
            &ModelOverrides {
                p: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let grid3 = make_eval_grid(&model3, 200, 0.05).unwrap();
        assert_eq!(grid3.len(), QUASI_GRID_POINTS);
        let (lo, hi) = model3.eval_box();
        for point in &grid3 {
            for j in 0..3 {
                assert!(point[j] > lo[j] && point[j] < hi[j]);
            }
        }
        assert!(make_eval_grid(&model, 5, 0.4).is_err());
    }

    #[test]
    fn default_inset_uses_floor_and_cap() {
        let m2 = make_model("M2", &ModelOverrides::default()).unwrap();
        let inset = default_grid_inset(&m2, 10_000, 0.7).unwrap();
        // Raw value far exceeds the cap of 0.45 * half-width = 0.9.
        assert!((inset - 0.9).abs() < 1e-12, "{inset}");
    }
}
