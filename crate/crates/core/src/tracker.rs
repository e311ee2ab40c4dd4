//! Bootstrap particle filter over the lumped SE(3) error.
//!
//! Motion model: each particle receives independent zero-mean Gaussian noise
//! with covariance `motion_scale · diag(sigma0)`.
//!
//! Observation model: `P(h, ρ | ω, b) ∝ Σ_i ρ_i · exp(−γ ‖h_i − m_i(ω, b)‖²)`.
//! The per-feature terms are summed, not multiplied, and the constant of
//! proportionality is left to the weight renormalization. Misdetections are
//! handled only through their confidence `ρ`; there is no outlier gating.
//!
//! Confidences are taken from the same frame as the detections they weight.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    feature_in_base, CameraIntrinsics, JointState, KinematicChain, LumpedErrorState,
    EPSILON_DEPTH,
};

/// Weight-sum tolerance for a normalized particle set.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A 2D keypoint detection with its confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDetection {
    pub feature_id: String,
    pub h: Vector2<f64>,
    pub rho: f64,
}

impl FeatureDetection {
    pub fn new(feature_id: impl Into<String>, h: Vector2<f64>, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(format!("confidence {rho} outside [0, 1]")));
        }
        if !h.x.is_finite() || !h.y.is_finite() {
            return Err(Error::invalid("detection coordinates must be finite"));
        }
        Ok(Self {
            feature_id: feature_id.into(),
            h,
            rho,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Diagonal of the initial covariance, `[ω_x, ω_y, ω_z, b_x, b_y, b_z]`.
    pub sigma0: [f64; 6],
    /// Motion covariance is `motion_scale · diag(sigma0)`.
    pub motion_scale: f64,
    pub gamma: f64,
    /// Resample when the effective particle count drops below this.
    pub resample_threshold: f64,
    pub rng_seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            sigma0: [0.005, 0.005, 0.005, 0.025, 0.025, 0.025],
            motion_scale: 0.1,
            gamma: 0.1,
            resample_threshold: 500.0,
            rng_seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::config("n_particles", "must be at least 1"));
        }
        if self.sigma0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("sigma0", "entries must be finite and >= 0"));
        }
        if !self.motion_scale.is_finite() || self.motion_scale < 0.0 {
            return Err(Error::config("motion_scale", "must be finite and >= 0"));
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::config("gamma", "must be finite and > 0"));
        }
        if !(self.resample_threshold > 0.0) || self.resample_threshold > self.n_particles as f64
        {
            return Err(Error::config(
                "resample_threshold",
                "must be in (0, n_particles]",
            ));
        }
        Ok(())
    }

    /// Seeded generator for a filter session.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    states: Vec<LumpedErrorState>,
    weights: Vec<f64>,
}

impl ParticleSet {
    /// Builds a set from states and weights; weights are checked, not renormalized.
    pub fn new(states: Vec<LumpedErrorState>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("particle set must not be empty"));
        }
        if states.len() != weights.len() {
            return Err(Error::invalid("states and weights differ in length"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { states, weights })
    }

    pub fn uniform(states: Vec<LumpedErrorState>) -> Result<Self> {
        let n = states.len();
        Self::new(states, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[LumpedErrorState] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn sample_state<R: Rng + ?Sized>(
    mean: &LumpedErrorState,
    std: &[f64; 6],
    rng: &mut R,
) -> LumpedErrorState {
    let mut v = mean.to_array();
    for (x, s) in v.iter_mut().zip(std) {
        let n: f64 = rng.sample(StandardNormal);
        *x += s * n;
    }
    LumpedErrorState::from_array(v).expect("finite perturbation")
}

/// `N` particles drawn from `N(0, diag(sigma0))` with uniform weights.
pub fn init_particles<R: Rng + ?Sized>(config: &FilterConfig, rng: &mut R) -> ParticleSet {
    let std = config.sigma0.map(f64::sqrt);
    let zero = LumpedErrorState::zero();
    let states = (0..config.n_particles.max(1))
        .map(|_| sample_state(&zero, &std, rng))
        .collect();
    ParticleSet::uniform(states).expect("nonempty")
}

/// Motion model: independent Gaussian perturbation of every particle. Weights are untouched.
pub fn predict<R: Rng + ?Sized>(
    particles: &ParticleSet,
    config: &FilterConfig,
    rng: &mut R,
) -> ParticleSet {
    let std = config.sigma0.map(|s| (config.motion_scale * s).sqrt());
    let states = particles
        .states
        .iter()
        .map(|s| sample_state(s, &std, rng))
        .collect();
    ParticleSet {
        states,
        weights: particles.weights.clone(),
    }
}

/// Per-frame observation model: detections with their features already
/// carried through the kinematic chain into the base frame, so that each
/// particle only applies its lumped error, the hand-eye prior and the camera.
pub struct ObservationModel<'a> {
    k: &'a CameraIntrinsics,
    chain: &'a KinematicChain,
    gamma: f64,
    terms: Vec<(Vector3<f64>, Vector2<f64>, f64)>,
}

impl<'a> ObservationModel<'a> {
    pub fn new(
        detections: &[FeatureDetection],
        joints: &JointState,
        chain: &'a KinematicChain,
        k: &'a CameraIntrinsics,
        gamma: f64,
    ) -> Result<Self> {
        if detections.is_empty() {
            return Err(Error::invalid("likelihood needs at least one detection"));
        }
        let terms = detections
            .iter()
            .map(|d| Ok((feature_in_base(chain, joints, &d.feature_id)?, d.h, d.rho)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k,
            chain,
            gamma,
            terms,
        })
    }

    /// Per-feature exponents `ln ρ_i − γ‖h_i − m_i‖²`; `None` for features that
    /// project behind the camera or carry zero confidence.
    fn log_terms<'s>(
        &'s self,
        state: &LumpedErrorState,
    ) -> impl Iterator<Item = Option<f64>> + 's {
        let correction = state.to_transform();
        let hand_eye = *self.chain.hand_eye_prior();
        self.terms.iter().map(move |(p_base, h, rho)| {
            let p = hand_eye.transform_point(&correction.transform_point(p_base));
            if !(p.z > EPSILON_DEPTH) || *rho <= 0.0 {
                return None;
            }
            let m = Vector2::new(
                self.k.fx * p.x / p.z + self.k.cx,
                self.k.fy * p.y / p.z + self.k.cy,
            );
            Some(rho.ln() - self.gamma * (h - m).norm_squared())
        })
    }

    /// The unnormalized sum as written; may underflow to zero for poor hypotheses.
    pub fn likelihood(&self, state: &LumpedErrorState) -> f64 {
        let correction = state.to_transform();
        let hand_eye = *self.chain.hand_eye_prior();
        self.terms
            .iter()
            .map(|(p_base, h, rho)| {
                let p = hand_eye.transform_point(&correction.transform_point(p_base));
                if !(p.z > EPSILON_DEPTH) {
                    return 0.0;
                }
                let m = Vector2::new(
                    self.k.fx * p.x / p.z + self.k.cx,
                    self.k.fy * p.y / p.z + self.k.cy,
                );
                rho * (-self.gamma * (h - m).norm_squared()).exp()
            })
            .sum()
    }

    /// Natural log of [`Self::likelihood`], evaluated without underflow.
    /// Returns `-inf` when every term vanishes.
    pub fn log_likelihood(&self, state: &LumpedErrorState) -> f64 {
        let logs: Vec<f64> = self.log_terms(state).flatten().collect();
        log_sum_exp(&logs)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Observation likelihood of one state given a frame's detections.
pub fn likelihood(
    state: &LumpedErrorState,
    detections: &[FeatureDetection],
    joints: &JointState,
    chain: &KinematicChain,
    k: &CameraIntrinsics,
    config: &FilterConfig,
) -> Result<f64> {
    Ok(ObservationModel::new(detections, joints, chain, k, config.gamma)?.likelihood(state))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateReport {
    /// Every particle had zero likelihood; weights were reset to uniform.
    pub degenerate: bool,
}

/// Reweights by the observation likelihood and renormalizes.
///
/// Products are formed in the log domain, so hypotheses whose raw
/// likelihood underflows still rank correctly. Per-particle evaluation runs
/// in parallel; the reduction is sequential in particle order.
pub fn update_with_model(
    particles: &ParticleSet,
    model: &ObservationModel<'_>,
) -> (ParticleSet, UpdateReport) {
    let log_lik: Vec<f64> = particles
        .states
        .par_iter()
        .map(|s| model.log_likelihood(s))
        .collect();
    let log_post: Vec<f64> = particles
        .weights
        .iter()
        .zip(&log_lik)
        .map(|(w, l)| if *w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = particles.len();
    if max == f64::NEG_INFINITY {
        return (
            ParticleSet {
                states: particles.states.clone(),
                weights: vec![1.0 / n as f64; n],
            },
            UpdateReport { degenerate: true },
        );
    }
    let unnorm: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    let weights = unnorm.iter().map(|w| w / total).collect();
    (
        ParticleSet {
            states: particles.states.clone(),
            weights,
        },
        UpdateReport { degenerate: false },
    )
}

pub fn update(
    particles: &ParticleSet,
    detections: &[FeatureDetection],
    joints: &JointState,
    chain: &KinematicChain,
    k: &CameraIntrinsics,
    config: &FilterConfig,
) -> Result<(ParticleSet, UpdateReport)> {
    let model = ObservationModel::new(detections, joints, chain, k, config.gamma)?;
    Ok(update_with_model(particles, &model))
}

/// `1 / Σ w²`.
pub fn effective_count(particles: &ParticleSet) -> f64 {
    1.0 / particles.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Stratified resampling: one uniform draw in each stratum `[k/N, (k+1)/N)`,
/// inverted through the cumulative weights. Output weights are uniform.
pub fn stratified_resample<R: Rng + ?Sized>(particles: &ParticleSet, rng: &mut R) -> ParticleSet {
    let n = particles.len();
    let nf = n as f64;
    // Cumulative weights scaled by N so stratum k is [k, k+1).
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in &particles.weights {
        acc += w * nf;
        cumulative.push(acc);
    }
    if let Some(last) = cumulative.last_mut() {
        *last = nf;
    }
    let mut states = Vec::with_capacity(n);
    let mut i = 0;
    for k in 0..n {
        let u = k as f64 + rng.random::<f64>();
        while i + 1 < n && cumulative[i] <= u {
            i += 1;
        }
        states.push(particles.states[i]);
    }
    ParticleSet {
        states,
        weights: vec![1.0 / nf; n],
    }
}

/// Weighted mean of `b` and of `ω` in the rotation-vector chart, re-wrapped.
/// The chart average is adequate while the particle cloud keeps `‖ω‖` well below π.
pub fn estimate(particles: &ParticleSet) -> LumpedErrorState {
    let mut acc = [0.0; 6];
    for (s, w) in particles.states.iter().zip(&particles.weights) {
        for (a, v) in acc.iter_mut().zip(s.to_array()) {
            *a += w * v;
        }
    }
    LumpedErrorState::from_array(acc).expect("weighted mean of finite states")
}

/// Inputs for one tracking step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFrame {
    pub frame_id: u64,
    pub detections: Vec<FeatureDetection>,
    pub joints: JointState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub estimate: LumpedErrorState,
    pub effective_count: f64,
    pub resampled: bool,
    pub degenerate: bool,
    /// The frame carried no detections and only the prediction was applied.
    pub no_detections: bool,
}

/// One predict / update / resample / estimate cycle.
pub fn track_step<R: Rng + ?Sized>(
    particles: &ParticleSet,
    frame: &TrackFrame,
    chain: &KinematicChain,
    k: &CameraIntrinsics,
    config: &FilterConfig,
    rng: &mut R,
) -> Result<(ParticleSet, StepReport)> {
    let predicted = predict(particles, config, rng);
    let (updated, degenerate, no_detections) = if frame.detections.is_empty() {
        (predicted, false, true)
    } else {
        let model = ObservationModel::new(&frame.detections, &frame.joints, chain, k, config.gamma)?;
        let (set, report) = update_with_model(&predicted, &model);
        (set, report.degenerate, false)
    };
    let n_eff = effective_count(&updated);
    let resampled = n_eff < config.resample_threshold;
    let out = if resampled {
        stratified_resample(&updated, rng)
    } else {
        updated
    };
    let report = StepReport {
        estimate: estimate(&out),
        effective_count: n_eff,
        resampled,
        degenerate,
        no_detections,
    };
    Ok((out, report))
}

/// A tracking session: owns the particle set and the seeded generator.
pub struct ToolTracker {
    config: FilterConfig,
    particles: ParticleSet,
    rng: ChaCha8Rng,
}

impl ToolTracker {
    pub fn new(config: FilterConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = config.rng();
        let particles = init_particles(&config, &mut rng);
        Ok(Self {
            config,
            particles,
            rng,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn step(
        &mut self,
        frame: &TrackFrame,
        chain: &KinematicChain,
        k: &CameraIntrinsics,
    ) -> Result<StepReport> {
        let (next, report) =
            track_step(&self.particles, frame, chain, k, &self.config, &mut self.rng)?;
        self.particles = next;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project_feature, FeaturePoint, Transform3D};

    fn setup() -> (KinematicChain, CameraIntrinsics) {
        let chain = KinematicChain::new(
            vec![],
            Transform3D::identity(),
            vec![
                FeaturePoint {
                    id: "a".into(),
                    link: 0,
                    point: [0.0, 0.0, 1.0],
                },
                FeaturePoint {
                    id: "b".into(),
                    link: 0,
                    point: [0.05, 0.02, 1.0],
                },
                FeaturePoint {
                    id: "c".into(),
                    link: 0,
                    point: [-0.03, 0.04, 1.2],
                },
            ],
        )
        .unwrap();
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 0.01, 640, 480).unwrap();
        (chain, k)
    }

    fn det(id: &str, u: f64, v: f64, rho: f64) -> FeatureDetection {
        FeatureDetection::new(id, Vector2::new(u, v), rho).unwrap()
    }

    #[test]
    fn likelihood_exact_hit_equals_rho() {
        let (chain, k) = setup();
        let cfg = FilterConfig::default();
        let js = JointState::zeros(0);
        let l = likelihood(
            &LumpedErrorState::zero(),
            &[det("a", 320.0, 240.0, 0.8)],
            &js,
            &chain,
            &k,
            &cfg,
        )
        .unwrap();
        assert_eq!(l, 0.8);
    }

    #[test]
    fn likelihood_ten_pixel_offset() {
        let (chain, k) = setup();
        let cfg = FilterConfig::default();
        let js = JointState::zeros(0);
        let l = likelihood(
            &LumpedErrorState::zero(),
            &[det("a", 330.0, 240.0, 0.8)],
            &js,
            &chain,
            &k,
            &cfg,
        )
        .unwrap();
        assert!((l - 0.8 * (-10.0f64).exp()).abs() < 1e-15);
        assert!((l - 3.632e-5).abs() < 1e-8);
    }

    #[test]
    fn likelihood_sums_terms() {
        let (chain, k) = setup();
        let cfg = FilterConfig::default();
        let js = JointState::zeros(0);
        let state = LumpedErrorState::new(
            Vector3::new(0.01, -0.02, 0.005),
            Vector3::new(0.002, -0.001, 0.01),
        )
        .unwrap();
        let dets = [
            det("a", 321.0, 238.5, 0.9),
            det("b", 345.0, 251.0, 0.4),
            det("c", 305.0, 255.0, 0.7),
        ];
        let got = likelihood(&state, &dets, &js, &chain, &k, &cfg).unwrap();
        let mut expected = 0.0;
        for d in &dets {
            let m = project_feature(&k, &chain, &js, &state, &d.feature_id).unwrap();
            let dx = d.h.x - m.x;
            let dy = d.h.y - m.y;
            expected += d.rho * (-cfg.gamma * (dx * dx + dy * dy)).exp();
        }
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn likelihood_errors_and_behind_camera() {
        let (chain, k) = setup();
        let cfg = FilterConfig::default();
        let js = JointState::zeros(0);
        let s = LumpedErrorState::zero();
        assert!(likelihood(&s, &[], &js, &chain, &k, &cfg).is_err());
        assert!(matches!(
            likelihood(&s, &[det("zz", 0.0, 0.0, 1.0)], &js, &chain, &k, &cfg),
            Err(Error::UnknownFeature(_))
        ));
        let behind = LumpedErrorState::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -5.0)).unwrap();
        let l = likelihood(&behind, &[det("a", 320.0, 240.0, 1.0)], &js, &chain, &k, &cfg).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn update_two_particles() {
        // Likelihoods 3:1 through a single detection with ρ=1 at 0 and ln(3)/γ px².
        let (chain, k) = setup();
        let cfg = FilterConfig::default();
        let js = JointState::zeros(0);
        let s0 = LumpedErrorState::zero();
        let s1 = LumpedErrorState::new(Vector3::zeros(), Vector3::new(0.002, 0.0, 0.0)).unwrap();
        let dets = [det("a", 320.0, 240.0, 1.0)];
        let l0 = likelihood(&s0, &dets, &js, &chain, &k, &cfg).unwrap();
        let l1 = likelihood(&s1, &dets, &js, &chain, &k, &cfg).unwrap();
        let set = ParticleSet::uniform(vec![s0, s1]).unwrap();
        let (out, rep) = update(&set, &dets, &js, &chain, &k, &cfg).unwrap();
        assert!(!rep.degenerate);
        assert!((out.weights()[0] - l0 / (l0 + l1)).abs() < 1e-15);

        let three = LumpedErrorState::new(
            Vector3::zeros(),
            Vector3::new((3.0f64.ln() / cfg.gamma).sqrt() / 500.0, 0.0, 0.0),
        )
        .unwrap();
        let set = ParticleSet::uniform(vec![s0, three]).unwrap();
        let (out, _) = update(&set, &dets, &js, &chain, &k, &cfg).unwrap();
        assert!((out.weights()[0] - 0.75).abs() < 1e-12);
        assert!((out.weights()[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn update_identical_particles_stays_uniform() {
        let (chain, k) = setup();
        let cfg = FilterConfig::default();
        let s = LumpedErrorState::new(Vector3::new(0.01, 0.0, 0.0), Vector3::zeros()).unwrap();
        let set = ParticleSet::uniform(vec![s; 8]).unwrap();
        let (out, _) = update(
            &set,
            &[det("a", 330.0, 250.0, 0.5)],
            &JointState::zeros(0),
            &chain,
            &k,
            &cfg,
        )
        .unwrap();
        for w in out.weights() {
            assert_eq!(*w, 1.0 / 8.0);
        }
    }

    #[test]
    fn update_degenerate_resets_uniform() {
        let (chain, k) = setup();
        let cfg = FilterConfig::default();
        let behind = LumpedErrorState::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -5.0)).unwrap();
        let set = ParticleSet::new(vec![behind; 4], vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        let (out, rep) = update(
            &set,
            &[det("a", 320.0, 240.0, 1.0)],
            &JointState::zeros(0),
            &chain,
            &k,
            &cfg,
        )
        .unwrap();
        assert!(rep.degenerate);
        assert_eq!(out.weights(), &[0.25; 4]);
    }

    #[test]
    fn effective_count_examples() {
        let z = LumpedErrorState::zero();
        assert!((effective_count(&ParticleSet::uniform(vec![z; 1000]).unwrap()) - 1000.0).abs() < 1e-9);
        let mut w = vec![0.0; 10];
        w[3] = 1.0;
        assert_eq!(effective_count(&ParticleSet::new(vec![z; 10], w).unwrap()), 1.0);
        assert_eq!(effective_count(&ParticleSet::uniform(vec![z; 2]).unwrap()), 2.0);
    }

    fn tagged(n: usize) -> Vec<LumpedErrorState> {
        (0..n)
            .map(|i| LumpedErrorState::new(Vector3::zeros(), Vector3::new(i as f64, 0.0, 0.0)).unwrap())
            .collect()
    }

    #[test]
    fn resample_single_mass() {
        let set = ParticleSet::new(tagged(4), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = stratified_resample(&set, &mut rng);
        assert!(out.states().iter().all(|s| s.b_trans().x == 0.0));
        assert_eq!(out.weights(), &[0.25; 4]);
    }

    #[test]
    fn resample_uniform_selects_each_once() {
        for seed in 0..20 {
            for n in [1usize, 2, 7, 100, 1000] {
                let set = ParticleSet::uniform(tagged(n)).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let out = stratified_resample(&set, &mut rng);
                for (i, s) in out.states().iter().enumerate() {
                    assert_eq!(s.b_trans().x, i as f64);
                }
            }
        }
    }

    #[test]
    fn resample_count_bounds() {
        for seed in 0..200 {
            // N=10 draws from weights (0.7, 0.3): pad the set to ten particles
            // with zero-weight copies so the output has ten entries.
            let mut states = tagged(2);
            states.extend(std::iter::repeat_n(states[1], 8));
            let mut weights = vec![0.7, 0.3];
            weights.extend(std::iter::repeat_n(0.0, 8));
            let padded = ParticleSet::new(states, weights).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = stratified_resample(&padded, &mut rng);
            let zeros = out.states().iter().filter(|s| s.b_trans().x == 0.0).count();
            assert!((6..=8).contains(&zeros), "seed {seed}: {zeros}");
        }
    }

    #[test]
    fn estimate_examples() {
        let s = LumpedErrorState::new(Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let set = ParticleSet::uniform(vec![s; 5]).unwrap();
        let e = estimate(&set);
        for (a, b) in e.to_array().iter().zip(s.to_array()) {
            assert!((a - b).abs() < 1e-15);
        }
        let a = LumpedErrorState::zero();
        let b = LumpedErrorState::new(Vector3::zeros(), Vector3::new(0.02, 0.0, 0.0)).unwrap();
        let e = estimate(&ParticleSet::uniform(vec![a, b]).unwrap());
        assert_eq!(e.b_trans().x, 0.01);
    }

    #[test]
    fn predict_zero_motion_and_weights() {
        let cfg = FilterConfig {
            motion_scale: 0.0,
            ..FilterConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = init_particles(&FilterConfig { n_particles: 50, ..cfg.clone() }, &mut rng);
        let out = predict(&set, &cfg, &mut rng);
        assert_eq!(out, set);

        let moving = FilterConfig::default();
        let set = ParticleSet::new(tagged(3), vec![0.5, 0.3, 0.2]).unwrap();
        let out = predict(&set, &moving, &mut rng);
        assert_eq!(out.weights(), set.weights());
    }

    #[test]
    fn init_degenerate_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let one = init_particles(
            &FilterConfig {
                n_particles: 1,
                resample_threshold: 1.0,
                ..FilterConfig::default()
            },
            &mut rng,
        );
        assert_eq!(one.len(), 1);
        assert_eq!(one.weights(), &[1.0]);
        let flat = init_particles(
            &FilterConfig {
                sigma0: [0.0; 6],
                ..FilterConfig::default()
            },
            &mut rng,
        );
        assert!(flat.states().iter().all(|s| *s == LumpedErrorState::zero()));
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::default().validate().is_ok());
        let bad = FilterConfig {
            resample_threshold: 2000.0,
            ..FilterConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FilterConfig {
            gamma: 0.0,
            ..FilterConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
