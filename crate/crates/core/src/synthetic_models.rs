//! Ground-truth models for the simulation laboratory. Each model ships a
//! closed-form density with a known positive floor on the evaluation box, a
//! closed-form regression function, the derived quantities g = r*f and its
//! positive/negative split, and a seeded sampler whose responses are clipped
//! to the schedule envelope at sampling time.
//!
//! The density floor is a compact-box reading: the density is supported on
//! an enclosing box strictly larger than the evaluation box B, and the floor
//! c0 holds on B. Truth functions validate x in B; the `*_extended` variants
//! evaluate the same closed forms on all of R^p (density zero outside the
//! enclosing box) for quadrature oracles that integrate past the edge of B.

use crate::error::{Error, Result};
use crate::estimators::{schedule_m, Target};
use crate::neighbor_index::SampleSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use libm::erf;

const INV_SQRT_2PI: f64 = 0.39894228040143267794;

/// Mixture component scale for the bimodal model.
const MIX_SD: f64 = 0.6;
/// Mixture component means are at +/- this value on every axis.
const MIX_MEAN: f64 = 1.0;
/// Weight of the uniform background in the bimodal model.
const UNIFORM_WEIGHT: f64 = 0.1;
/// Attempt cap for per-coordinate rejection sampling.
const MAX_REJECTION_ATTEMPTS: usize = 10_000;

#[inline]
fn normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

#[inline]
fn normal_cdf(u: f64) -> f64 {
    0.5 * (1.0 + erf(u / std::f64::consts::SQRT_2))
}

/// Quantity a truth evaluation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthKind {
    Density,
    Regression,
    G,
    G1,
    G2,
}

impl TruthKind {
    pub fn name(self) -> &'static str {
        match self {
            TruthKind::Density => "density",
            TruthKind::Regression => "regression",
            TruthKind::G => "g",
            TruthKind::G1 => "g1",
            TruthKind::G2 => "g2",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "density" => Ok(TruthKind::Density),
            "regression" => Ok(TruthKind::Regression),
            "g" => Ok(TruthKind::G),
            "g1" => Ok(TruthKind::G1),
            "g2" => Ok(TruthKind::G2),
            other => Err(Error::InvalidTarget(format!(
                "unknown truth kind '{other}' (expected density, regression, g, g1, or g2)"
            ))),
        }
    }

    pub fn from_target(target: Target) -> Self {
        match target {
            Target::Density => TruthKind::Density,
            Target::G => TruthKind::G,
            Target::Regression => TruthKind::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DensityKind {
    /// Uniform on the enclosing box.
    Uniform,
    /// 0.9 * (two-component truncated-Gaussian product mixture) + 0.1 * uniform.
    BimodalPlusUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RegressionKind {
    /// Sum over axes of sin(2 pi x_j / scale).
    Sinusoid,
    /// 1 + 0.5 * sum(x_j) - 0.25 * sum(x_j^2).
    Polynomial,
}

/// Optional overrides for the model constructor.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelOverrides {
    pub p: Option<usize>,
    pub sigma: Option<f64>,
    /// Enclosing-box scale: edge length for M1/M3, half-width for M2.
    pub box_scale: Option<f64>,
}

/// A ground-truth model: density, regression function, derived g-functions,
/// and a seeded sampler.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    name: String,
    p: usize,
    density: DensityKind,
    regression: RegressionKind,
    sigma: f64,
    /// M1/M3: enclosing box is [0, scale]^p; M2: [-scale, scale]^p.
    scale: f64,
    enclosing_lo: Vec<f64>,
    enclosing_hi: Vec<f64>,
    eval_lo: Vec<f64>,
    eval_hi: Vec<f64>,
    c0: f64,
    smoothness: usize,
}

/// Constructs a shipped model by name (`M1`, `M2`, or `M3`) with optional
/// overrides.
///
/// * M1: uniform density on [0, s]^p (s = 1 by default), regression
///   sum_j sin(2 pi x_j / s), Gaussian noise sigma = 0.5.
/// * M2: 0.9 * two-component truncated-Gaussian mixture (means on the
///   diagonal at +/-1, sd 0.6 per coordinate) + 0.1 * uniform on [-s, s]^p
///   (s = 3 by default), polynomial regression, Gaussian noise sigma = 0.5.
/// * M3: M1 with zero noise, for bias-only studies.
pub fn make_model(name: &str, overrides: &ModelOverrides) -> Result<SyntheticModel> {
    let p = overrides.p.unwrap_or(1);
    if p < 1 {
        return Err(Error::ModelMisconfigured(
            "dimension p must be at least 1".into(),
        ));
    }
    match name {
        "M1" | "M3" => {
            let scale = overrides.box_scale.unwrap_or(1.0);
            if !(scale > 0.0) {
                return Err(Error::ModelMisconfigured(format!(
                    "box scale must be positive, got {scale}"
                )));
            }
            let default_sigma = if name == "M3" { 0.0 } else { 0.5 };
            let sigma = overrides.sigma.unwrap_or(default_sigma);
            if sigma < 0.0 {
                return Err(Error::ModelMisconfigured(format!(
                    "sigma must be nonnegative, got {sigma}"
                )));
            }
            Ok(SyntheticModel {
                name: name.to_string(),
                p,
                density: DensityKind::Uniform,
                regression: RegressionKind::Sinusoid,
                sigma,
                scale,
                enclosing_lo: vec![0.0; p],
                enclosing_hi: vec![scale; p],
                eval_lo: vec![0.1 * scale; p],
                eval_hi: vec![0.9 * scale; p],
                c0: scale.powi(-(p as i32)),
                smoothness: 3,
            })
        }
        "M2" => {
            let scale = overrides.box_scale.unwrap_or(3.0);
            if !(scale > MIX_MEAN) {
                return Err(Error::ModelMisconfigured(format!(
                    "box half-width must exceed the component mean {MIX_MEAN}, got {scale}"
                )));
            }
            let sigma = overrides.sigma.unwrap_or(0.5);
            if sigma < 0.0 {
                return Err(Error::ModelMisconfigured(format!(
                    "sigma must be nonnegative, got {sigma}"
                )));
            }
            Ok(SyntheticModel {
                name: name.to_string(),
                p,
                density: DensityKind::BimodalPlusUniform,
                regression: RegressionKind::Polynomial,
                sigma,
                scale,
                enclosing_lo: vec![-scale; p],
                enclosing_hi: vec![scale; p],
                eval_lo: vec![-2.0 * scale / 3.0; p],
                eval_hi: vec![2.0 * scale / 3.0; p],
                c0: UNIFORM_WEIGHT * (2.0 * scale).powi(-(p as i32)),
                smoothness: 3,
            })
        }
        other => Err(Error::ModelMisconfigured(format!(
            "unknown model '{other}' (expected M1, M2, or M3)"
        ))),
    }
}

impl SyntheticModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Positive lower bound of the density on the evaluation box.
    pub fn density_floor(&self) -> f64 {
        self.c0
    }

    /// Order of continuous differentiability (with Lipschitz top derivatives
    /// on the evaluation box) certified for the density and regression truth.
    pub fn smoothness(&self) -> usize {
        self.smoothness
    }

    /// Evaluation box B, `(lo, hi)`.
    pub fn eval_box(&self) -> (&[f64], &[f64]) {
        (&self.eval_lo, &self.eval_hi)
    }

    /// Support box of the density, strictly containing B.
    pub fn enclosing_box(&self) -> (&[f64], &[f64]) {
        (&self.enclosing_lo, &self.enclosing_hi)
    }

    fn check_in_eval_box(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: x.len(),
            });
        }
        for (j, &v) in x.iter().enumerate() {
            if !(v >= self.eval_lo[j] && v <= self.eval_hi[j]) {
                return Err(Error::OutsideEvaluationBox {
                    axis: j + 1,
                    value: v,
                    lo: self.eval_lo[j],
                    hi: self.eval_hi[j],
                });
            }
        }
        Ok(())
    }

    fn inside_enclosing(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(j, &v)| v >= self.enclosing_lo[j] && v <= self.enclosing_hi[j])
    }

    /// Per-coordinate truncated-normal density with mean `mu`, before the
    /// product over axes.
    fn tn_pdf(&self, t: f64, mu: f64) -> f64 {
        let z = self.tn_normalizer(mu);
        normal_pdf((t - mu) / MIX_SD) / (MIX_SD * z)
    }

    fn tn_normalizer(&self, mu: f64) -> f64 {
        normal_cdf((self.scale - mu) / MIX_SD) - normal_cdf((-self.scale - mu) / MIX_SD)
    }

    /// Density closed form on all of R^p (zero outside the enclosing box).
    pub fn density_extended(&self, x: &[f64]) -> f64 {
        if !self.inside_enclosing(x) {
            return 0.0;
        }
        match self.density {
            DensityKind::Uniform => self.scale.powi(-(self.p as i32)),
            DensityKind::BimodalPlusUniform => {
                let mut prod_neg = 1.0;
                let mut prod_pos = 1.0;
                for &v in x {
                    prod_neg *= self.tn_pdf(v, -MIX_MEAN);
                    prod_pos *= self.tn_pdf(v, MIX_MEAN);
                }
                let mixture = 0.5 * (prod_neg + prod_pos);
                (1.0 - UNIFORM_WEIGHT) * mixture
                    + UNIFORM_WEIGHT * (2.0 * self.scale).powi(-(self.p as i32))
            }
        }
    }

    /// Regression closed form on all of R^p.
    pub fn regression_extended(&self, x: &[f64]) -> f64 {
        match self.regression {
            RegressionKind::Sinusoid => x
                .iter()
                .map(|&v| (2.0 * std::f64::consts::PI * v / self.scale).sin())
                .sum(),
            RegressionKind::Polynomial => {
                let s: f64 = x.iter().sum();
                let sq: f64 = x.iter().map(|&v| v * v).sum();
                1.0 + 0.5 * s - 0.25 * sq
            }
        }
    }

    /// Truth closed form on all of R^p; the g-family quantities vanish with
    /// the density outside the enclosing box.
    pub fn truth_extended(&self, kind: TruthKind, x: &[f64]) -> f64 {
        match kind {
            TruthKind::Density => self.density_extended(x),
            TruthKind::Regression => self.regression_extended(x),
            TruthKind::G => self.regression_extended(x) * self.density_extended(x),
            TruthKind::G1 | TruthKind::G2 => {
                let f = self.density_extended(x);
                if f == 0.0 {
                    return 0.0;
                }
                let m = self.regression_extended(x);
                let (pos, neg) = if self.sigma > 0.0 {
                    let t = m / self.sigma;
                    let tail = self.sigma * normal_pdf(t);
                    (m * normal_cdf(t) + tail, -m * normal_cdf(-t) + tail)
                } else {
                    (m.max(0.0), (-m).max(0.0))
                };
                match kind {
                    TruthKind::G1 => f * pos,
                    _ => f * neg,
                }
            }
        }
    }

    /// Truth at a point of the evaluation box.
    pub fn truth(&self, kind: TruthKind, x: &[f64]) -> Result<f64> {
        self.check_in_eval_box(x)?;
        Ok(self.truth_extended(kind, x))
    }

    pub fn true_density(&self, x: &[f64]) -> Result<f64> {
        self.truth(TruthKind::Density, x)
    }

    pub fn true_regression(&self, x: &[f64]) -> Result<f64> {
        self.truth(TruthKind::Regression, x)
    }

    pub fn true_g(&self, x: &[f64]) -> Result<f64> {
        self.truth(TruthKind::G, x)
    }

    pub fn true_g1(&self, x: &[f64]) -> Result<f64> {
        self.truth(TruthKind::G1, x)
    }

    pub fn true_g2(&self, x: &[f64]) -> Result<f64> {
        self.truth(TruthKind::G2, x)
    }

    /// Marginal density of one coordinate (identical across axes), used by
    /// sampler-fidelity checks.
    pub fn marginal_density(&self, t: f64) -> f64 {
        match self.density {
            DensityKind::Uniform => {
                if (0.0..=self.scale).contains(&t) {
                    1.0 / self.scale
                } else {
                    0.0
                }
            }
            DensityKind::BimodalPlusUniform => {
                if t < -self.scale || t > self.scale {
                    return 0.0;
                }
                let mixture = 0.5 * (self.tn_pdf(t, -MIX_MEAN) + self.tn_pdf(t, MIX_MEAN));
                (1.0 - UNIFORM_WEIGHT) * mixture + UNIFORM_WEIGHT / (2.0 * self.scale)
            }
        }
    }

    /// Probability mass of one coordinate falling in [a, c], in closed form.
    pub fn marginal_mass(&self, a: f64, c: f64) -> f64 {
        match self.density {
            DensityKind::Uniform => {
                let lo = a.max(0.0);
                let hi = c.min(self.scale);
                ((hi - lo) / self.scale).max(0.0)
            }
            DensityKind::BimodalPlusUniform => {
                let lo = a.max(-self.scale);
                let hi = c.min(self.scale);
                if hi <= lo {
                    return 0.0;
                }
                let comp = |mu: f64| {
                    (normal_cdf((hi - mu) / MIX_SD) - normal_cdf((lo - mu) / MIX_SD))
                        / self.tn_normalizer(mu)
                };
                (1.0 - UNIFORM_WEIGHT) * 0.5 * (comp(-MIX_MEAN) + comp(MIX_MEAN))
                    + UNIFORM_WEIGHT * (hi - lo) / (2.0 * self.scale)
            }
        }
    }

    /// Draws n observations. X follows the model density; Y = r(X) + noise,
    /// clipped to the envelope [-M_n, M_n] with M_n = schedule_m(n, c_m).
    /// Identical (model, n, seed, c_m) yield bit-identical samples.
    pub fn sample(&self, n: usize, seed: u64, c_m: f64) -> Result<TrialSample> {
        if n < 2 {
            return Err(Error::ModelMisconfigured(format!(
                "sample size must be at least 2, got {n}"
            )));
        }
        let m_n = schedule_m(n, c_m)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n * self.p);
        let mut ys = Vec::with_capacity(n);
        let mut clip_count = 0usize;
        let mut point = vec![0.0; self.p];
        for _ in 0..n {
            self.draw_point(&mut rng, &mut point)?;
            xs.extend_from_slice(&point);
            let mut y = self.regression_extended(&point);
            if self.sigma > 0.0 {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                y += self.sigma * z;
            }
            if y > m_n {
                y = m_n;
                clip_count += 1;
            } else if y < -m_n {
                y = -m_n;
                clip_count += 1;
            }
            ys.push(y);
        }
        Ok(TrialSample {
            sample: SampleSet::from_flat(xs, self.p, Some(ys))?,
            seed,
            clip_count,
        })
    }

    fn draw_point(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        match self.density {
            DensityKind::Uniform => {
                for slot in out.iter_mut() {
                    *slot = self.scale * rng.random::<f64>();
                }
                Ok(())
            }
            DensityKind::BimodalPlusUniform => {
                let w: f64 = rng.random();
                if w < UNIFORM_WEIGHT {
                    for slot in out.iter_mut() {
                        *slot = rng.random_range(-self.scale..self.scale);
                    }
                    return Ok(());
                }
                let mu = if w < UNIFORM_WEIGHT + 0.5 * (1.0 - UNIFORM_WEIGHT) {
                    -MIX_MEAN
                } else {
                    MIX_MEAN
                };
                for slot in out.iter_mut() {
                    let mut accepted = false;
                    for _ in 0..MAX_REJECTION_ATTEMPTS {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        let v = mu + MIX_SD * z;
                        if v.abs() <= self.scale {
                            *slot = v;
                            accepted = true;
                            break;
                        }
                    }
                    if !accepted {
                        return Err(Error::ModelMisconfigured(format!(
                            "rejection sampling acceptance below 1e-3 for mean {mu} in box [-{0}, {0}]",
                            self.scale
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// One seeded draw from a model.
#[derive(Debug, Clone)]
pub struct TrialSample {
    pub sample: SampleSet,
    pub seed: u64,
    /// Responses clipped to the envelope.
    pub clip_count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::tensor_integrate;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn model_construction_and_overrides() {
        let m1 = make_model("M1", &ModelOverrides::default()).unwrap();
        assert_eq!(m1.dimension(), 1);
        assert_eq!(m1.sigma(), 0.5);
        let m3 = make_model("M3", &ModelOverrides::default()).unwrap();
        assert_eq!(m3.sigma(), 0.0);
        let m2 = make_model(
            "M2",
            &ModelOverrides {
                p: Some(2),
                sigma: Some(0.3),
                box_scale: None,
            },
        )
        .unwrap();
        assert_eq!(m2.dimension(), 2);
        assert_eq!(m2.sigma(), 0.3);
        assert!(make_model("M9", &ModelOverrides::default()).is_err());
    }

    #[test]
    fn uniform_density_and_floor() {
        let m1 = make_model("M1", &ModelOverrides::default()).unwrap();
        assert_eq!(m1.true_density(&[0.5]).unwrap(), 1.0);
        assert_eq!(m1.density_extended(&[2.0]), 0.0);
        assert!(matches!(
            m1.true_density(&[0.95]),
            Err(Error::OutsideEvaluationBox { .. })
        ));
        // Floor over a dense grid of the evaluation box.
        let (lo, hi) = m1.eval_box();
        for i in 0..10_000 {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / 9_999.0;
            assert!(m1.true_density(&[x]).unwrap() >= m1.density_floor());
        }
    }

    #[test]
    fn bimodal_density_normalizes_and_clears_floor() {
        for p in 1..=2 {
            let m2 = make_model(
                "M2",
                &ModelOverrides {
                    p: Some(p),
                    ..Default::default()
                },
            )
            .unwrap();
            let (lo, hi) = m2.enclosing_box();
            let integral = tensor_integrate(lo, hi, 96, |x| m2.density_extended(x));
            assert!((integral - 1.0).abs() < 1e-4, "p={p}: {integral}");
            let (elo, ehi) = m2.eval_box();
            let steps = if p == 1 { 10_000 } else { 100 };
            let mut grid_min = f64::INFINITY;
            let mut idx = vec![0usize; p];
            loop {
                let x: Vec<f64> = (0..p)
                    .map(|j| elo[j] + (ehi[j] - elo[j]) * idx[j] as f64 / (steps - 1) as f64)
                    .collect();
                grid_min = grid_min.min(m2.true_density(&x).unwrap());
                let mut axis = p;
                let mut done = false;
                loop {
                    if axis == 0 {
                        done = true;
                        break;
                    }
                    axis -= 1;
                    idx[axis] += 1;
                    if idx[axis] < steps {
                        break;
                    }
                    idx[axis] = 0;
                }
                if done {
                    break;
                }
            }
            assert!(grid_min >= m2.density_floor(), "p={p}: {grid_min}");
        }
    }

    #[test]
    fn g_identity_on_grid() {
        for name in ["M1", "M2", "M3"] {
            let model = make_model(name, &ModelOverrides::default()).unwrap();
            let (lo, hi) = model.eval_box();
            for i in 0..1000 {
                let x = [lo[0] + (hi[0] - lo[0]) * i as f64 / 999.0];
                let g = model.true_g(&x).unwrap();
                let g1 = model.true_g1(&x).unwrap();
                let g2 = model.true_g2(&x).unwrap();
                assert!((g - (g1 - g2)).abs() <= 1e-12, "{name}: x={x:?}");
            }
        }
    }

    #[test]
    fn g1_closed_form_matches_monte_carlo() {
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let x = [0.3];
        let m = model.true_regression(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let y = m + model.sigma() * z;
            if y >= 0.0 {
                acc += y;
            }
        }
        let mc = acc / draws as f64;
        let closed = model.true_g1(&x).unwrap() / model.true_density(&x).unwrap();
        // Independent high-precision evaluation of the same closed form.
        assert!((closed - 0.9565534254880818).abs() < 1e-12);
        assert!((mc - closed).abs() < 3e-3, "mc={mc} closed={closed}");
    }

    #[test]
    fn noise_free_responses_equal_regression() {
        let model = make_model("M3", &ModelOverrides::default()).unwrap();
        let trial = model.sample(64, 7, 1.0).unwrap();
        assert_eq!(trial.clip_count, 0);
        let ys = trial.sample.responses().unwrap();
        for i in 0..trial.sample.len() {
            assert_eq!(ys[i], model.regression_extended(trial.sample.row(i)));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = make_model("M2", &ModelOverrides { p: Some(2), ..Default::default() }).unwrap();
        let a = model.sample(500, 1234, 1.0).unwrap();
        let b = model.sample(500, 1234, 1.0).unwrap();
        assert_eq!(a.sample, b.sample);
        assert_eq!(a.clip_count, b.clip_count);
        let c = model.sample(500, 1235, 1.0).unwrap();
        assert_ne!(a.sample, c.sample);
    }

    #[test]
    fn tiny_envelope_clips_everything() {
        let model = make_model("M1", &ModelOverrides::default()).unwrap();
        let trial = model.sample(200, 5, 1e-6).unwrap();
        let m_n = schedule_m(200, 1e-6).unwrap();
        let ys = trial.sample.responses().unwrap();
        assert!(ys.iter().all(|y| y.abs() <= m_n));
        assert!(trial.clip_count > 150);
    }

    #[test]
    fn samples_stay_in_enclosing_box() {
        let model = make_model("M2", &ModelOverrides::default()).unwrap();
        let trial = model.sample(5000, 42, 1.0).unwrap();
        let (lo, hi) = model.enclosing_box();
        for i in 0..trial.sample.len() {
            let v = trial.sample.row(i)[0];
            assert!(v >= lo[0] && v <= hi[0]);
        }
    }

    fn chi_square_p_value(observed: &[usize], expected: &[f64]) -> f64 {
        let stat: f64 = observed
            .iter()
            .zip(expected)
            .map(|(&o, &e)| (o as f64 - e) * (o as f64 - e) / e)
            .sum();
        let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
        1.0 - dist.cdf(stat)
    }

    #[test]
    fn sampler_matches_marginals_per_coordinate() {
        let draws = 1_000_000usize;
        let bins = 50;
        for (name, p) in [("M1", 1usize), ("M2", 2usize)] {
            let model = make_model(
                name,
                &ModelOverrides {
                    p: Some(p),
                    ..Default::default()
                },
            )
            .unwrap();
            let n_points = draws / 1000;
            let mut counts = vec![vec![0usize; bins]; p];
            let (lo, hi) = model.enclosing_box();
            for rep in 0..1000 {
                let trial = model.sample(n_points, 7_000 + rep, 1.0).unwrap();
                for i in 0..trial.sample.len() {
                    for (j, &v) in trial.sample.row(i).iter().enumerate() {
                        let b = (((v - lo[j]) / (hi[j] - lo[j]) * bins as f64) as usize)
                            .min(bins - 1);
                        counts[j][b] += 1;
                    }
                }
            }
            for j in 0..p {
                let expected: Vec<f64> = (0..bins)
                    .map(|b| {
                        let a = lo[j] + (hi[j] - lo[j]) * b as f64 / bins as f64;
                        let c = lo[j] + (hi[j] - lo[j]) * (b + 1) as f64 / bins as f64;
                        draws as f64 * model.marginal_mass(a, c)
                    })
                    .collect();
                let pv = chi_square_p_value(&counts[j], &expected);
                assert!(pv > 1e-4, "{name} axis {j}: p-value {pv}");
            }
        }
    }
}
