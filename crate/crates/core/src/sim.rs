//! Synthetic ground truth: an articulated tool seen through a pinhole stereo
//! camera above a deforming, textured tissue surface.
//!
//! Every output is a pure function of `(scenario, frame)`. Random streams are
//! ChaCha8 generators seeded from the scenario seed, with one stream per
//! frame and purpose.

use std::f64::consts::TAU;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::BinaryMask;
use crate::geometry::{
    feature_in_base, project_point, CameraIntrinsics, JointState, KinematicChain,
    LumpedErrorState,
};
use crate::metrics::{render_tool_mask, FrameFeatures, ToolGeometry};
use crate::stereo::{DepthMap, ImageGray};
use crate::tracker::FeatureDetection;

const DEFAULT_SCENARIO: &str = include_str!("../fixtures/default_scenario.json");

/// Lumped error `initial + frame · drift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LumpedTrajectory {
    pub initial: LumpedErrorState,
    #[serde(default)]
    pub drift_omega: [f64; 3],
    #[serde(default)]
    pub drift_b: [f64; 3],
}

/// `θ_j(t) = base_j + amplitude_j · sin(2π t / period_frames + j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointTrajectory {
    pub base: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub period_frames: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionModel {
    /// Isotropic Gaussian pixel noise, per coordinate.
    pub sigma_px: f64,
    /// Confidence range of correct detections.
    pub rho_range: [f64; 2],
    pub misdetection_prob: f64,
    /// Displacement of a misdetection across the shaft, in pixels.
    pub misdetection_offset_px: f64,
    /// Misdetection confidences are drawn from `[misdetection_rho_min, 0.3)`.
    pub misdetection_rho_min: f64,
    /// Two features whose image line defines the shaft direction.
    pub shaft_axis: Option<[String; 2]>,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            sigma_px: 1.0,
            rho_range: [0.8, 1.0],
            misdetection_prob: 0.0,
            misdetection_offset_px: 25.0,
            misdetection_rho_min: 0.02,
            shaft_axis: None,
        }
    }
}

/// Upper bound (exclusive) on misdetection confidence.
pub const MISDETECTION_RHO_MAX: f64 = 0.3;

/// Tissue depth over normalized image coordinates `(x, y)`:
///
/// ```text
/// z(x, y, t) = z0 / (1 − slope_x·x − slope_y·y)
///            + amplitude · sin(2π t / period_frames) · sin(2π x / wavelength) · cos(2π y / wavelength)
/// ```
///
/// The first term is the plane `Z = z0 + slope_x·X + slope_y·Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TissueSurface {
    pub z0: f64,
    pub slope_x: f64,
    pub slope_y: f64,
    pub amplitude: f64,
    pub wavelength: f64,
    pub period_frames: f64,
    /// Value-noise cell size on the surface (m).
    pub texture_scale: f64,
    /// Peak-to-peak texture contrast; 0 gives a textureless surface.
    pub texture_contrast: f64,
}

impl Default for TissueSurface {
    fn default() -> Self {
        Self {
            z0: 0.15,
            slope_x: 0.0,
            slope_y: 0.0,
            amplitude: 0.0,
            wavelength: 0.5,
            period_frames: 50.0,
            texture_scale: 0.001,
            texture_contrast: 0.8,
        }
    }
}

impl TissueSurface {
    pub fn depth_at(&self, x: f64, y: f64, frame: f64) -> f64 {
        let base = self.z0 / (1.0 - self.slope_x * x - self.slope_y * y);
        let phase = TAU * frame / self.period_frames;
        base + self.amplitude
            * phase.sin()
            * (TAU * x / self.wavelength).sin()
            * (TAU * y / self.wavelength).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub camera: CameraIntrinsics,
    pub chain: KinematicChain,
    pub geometry: ToolGeometry,
    pub true_lumped: LumpedTrajectory,
    pub joints: JointTrajectory,
    /// Standard deviation of encoder noise per joint.
    #[serde(default)]
    pub encoder_noise: f64,
    #[serde(default)]
    pub detection: DetectionModel,
    #[serde(default)]
    pub tissue: TissueSurface,
    pub frames: usize,
    /// Stereo pairs are rendered every `stereo_stride` frames.
    #[serde(default = "one")]
    pub stereo_stride: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

/// Random streams drawn per frame.
#[derive(Clone, Copy)]
enum Stream {
    Detections = 0,
    Encoders = 1,
}

impl SimScenario {
    /// The checked-in default scenario.
    pub fn default_scenario() -> Self {
        serde_json::from_str(DEFAULT_SCENARIO).expect("default scenario fixture is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.chain.joint_count();
        if self.frames == 0 {
            return Err(Error::config("frames", "must be at least 1"));
        }
        if self.joints.base.len() != n || self.joints.amplitude.len() != n {
            return Err(Error::config(
                "joints",
                format!("base and amplitude need {n} entries"),
            ));
        }
        if !(self.joints.period_frames > 0.0) {
            return Err(Error::config("joints.period_frames", "must be > 0"));
        }
        let d = &self.detection;
        if !(d.sigma_px >= 0.0) {
            return Err(Error::config("detection.sigma_px", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&d.misdetection_prob) {
            return Err(Error::config("detection.misdetection_prob", "must be in [0, 1]"));
        }
        if !(0.0 <= d.rho_range[0] && d.rho_range[0] <= d.rho_range[1] && d.rho_range[1] <= 1.0) {
            return Err(Error::config("detection.rho_range", "must satisfy 0 <= lo <= hi <= 1"));
        }
        if !(0.0..MISDETECTION_RHO_MAX).contains(&d.misdetection_rho_min) {
            return Err(Error::config(
                "detection.misdetection_rho_min",
                "must be in [0, 0.3)",
            ));
        }
        if let Some([a, b]) = &d.shaft_axis {
            self.chain.feature(a)?;
            self.chain.feature(b)?;
        }
        if !(self.encoder_noise >= 0.0) {
            return Err(Error::config("encoder_noise", "must be >= 0"));
        }
        let t = &self.tissue;
        if !(t.z0 > 0.0) || !(t.amplitude >= 0.0) || t.amplitude >= t.z0 {
            return Err(Error::config("tissue", "need z0 > amplitude >= 0"));
        }
        if !(t.wavelength > 0.0 && t.period_frames > 0.0 && t.texture_scale > 0.0) {
            return Err(Error::config(
                "tissue",
                "wavelength, period_frames and texture_scale must be > 0",
            ));
        }
        if !(0.0..=1.0).contains(&t.texture_contrast) {
            return Err(Error::config("tissue.texture_contrast", "must be in [0, 1]"));
        }
        if self.stereo_stride == 0 {
            return Err(Error::config("stereo_stride", "must be at least 1"));
        }
        // Plane must stay in front of the camera over the whole image.
        let k = &self.camera;
        for (c, r) in [(0, 0), (k.width - 1, 0), (0, k.height - 1), (k.width - 1, k.height - 1)] {
            let (x, y) = k.pixel_ray(c, r);
            let denom = 1.0 - t.slope_x * x - t.slope_y * y;
            if !(denom > 0.0) || t.z0 / denom <= t.amplitude {
                return Err(Error::config("tissue", "surface leaves the view frustum"));
            }
        }
        Ok(())
    }

    fn rng(&self, frame: usize, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((frame as u64) << 4 | stream as u64);
        rng
    }

    fn check_frame(&self, frame: usize) -> Result<()> {
        if frame >= self.frames {
            return Err(Error::invalid(format!(
                "frame {frame} out of range for {} frames",
                self.frames
            )));
        }
        Ok(())
    }

    pub fn true_lumped(&self, frame: usize) -> LumpedErrorState {
        let t = frame as f64;
        let i = &self.true_lumped.initial;
        let o = i.omega() + Vector3::from(self.true_lumped.drift_omega) * t;
        let b = i.b_trans() + Vector3::from(self.true_lumped.drift_b) * t;
        LumpedErrorState::new(o, b).expect("finite trajectory")
    }

    pub fn true_joints(&self, frame: usize) -> JointState {
        let t = frame as f64;
        let theta = self
            .joints
            .base
            .iter()
            .zip(&self.joints.amplitude)
            .enumerate()
            .map(|(j, (b, a))| b + a * (TAU * t / self.joints.period_frames + j as f64).sin())
            .collect();
        JointState::new(theta).expect("finite trajectory")
    }

    /// Encoder readings: true joints plus Gaussian noise.
    pub fn encoder_readings(&self, frame: usize) -> JointState {
        let truth = self.true_joints(frame);
        if self.encoder_noise == 0.0 {
            return truth;
        }
        let mut rng = self.rng(frame, Stream::Encoders);
        let theta = truth
            .theta()
            .iter()
            .map(|v| {
                let n: f64 = rng.sample(StandardNormal);
                v + self.encoder_noise * n
            })
            .collect();
        JointState::new(theta).expect("finite readings")
    }

    /// Exact image locations of every feature in front of the camera and inside the image.
    pub fn true_features(&self, frame: usize) -> FrameFeatures {
        let lumped = self.true_lumped(frame);
        let joints = self.true_joints(frame);
        let k = &self.camera;
        self.chain
            .features()
            .iter()
            .filter_map(|f| {
                let p = feature_in_base(&self.chain, &joints, &f.id).ok()?;
                let cam = crate::geometry::base_to_camera(&self.chain, &lumped, &p);
                let uv = project_point(k, &cam).ok()?;
                k.pixel_of(&uv).map(|_| (f.id.clone(), uv))
            })
            .collect()
    }

    /// Ground-truth tool silhouette.
    pub fn true_mask(&self, frame: usize) -> Result<BinaryMask> {
        render_tool_mask(
            &self.geometry,
            &self.chain,
            &self.true_joints(frame),
            &self.true_lumped(frame),
            &self.camera,
        )
    }
}

/// Noisy keypoint detections for one frame.
pub fn simulate_detections(scenario: &SimScenario, frame: usize) -> Result<Vec<FeatureDetection>> {
    scenario.check_frame(frame)?;
    let model = &scenario.detection;
    let truth = scenario.true_features(frame);
    let shaft_dir = model.shaft_axis.as_ref().and_then(|[a, b]| {
        let d = truth.get(b)? - truth.get(a)?;
        (d.norm() > 0.0).then(|| d.normalize())
    });
    let mut rng = scenario.rng(frame, Stream::Detections);
    let mut out = Vec::with_capacity(truth.len());
    // Chain order keeps the random draws independent of map iteration order.
    for f in scenario.chain.features() {
        let Some(uv) = truth.get(&f.id) else {
            continue;
        };
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let mis = rng.random::<f64>() < model.misdetection_prob;
        let side: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let angle = rng.random::<f64>() * TAU;
        let u_rho: f64 = rng.random();
        let mut h = uv + Vector2::new(nx, ny) * model.sigma_px;
        let rho = if mis {
            let normal = match shaft_dir {
                Some(d) => Vector2::new(-d.y, d.x),
                None => Vector2::new(angle.cos(), angle.sin()),
            };
            h += normal * side * model.misdetection_offset_px;
            let lo = model.misdetection_rho_min;
            lo + (MISDETECTION_RHO_MAX - lo) * u_rho
        } else {
            let [lo, hi] = model.rho_range;
            lo + (hi - lo) * u_rho
        };
        out.push(FeatureDetection::new(f.id.clone(), h, rho.min(1.0))?);
    }
    Ok(out)
}

/// Depth of the tissue surface at the frame's deformation phase.
pub fn simulate_depth(scenario: &SimScenario, frame: usize) -> Result<DepthMap> {
    scenario.check_frame(frame)?;
    let k = &scenario.camera;
    let t = frame as f64;
    DepthMap::from_fn(k.width, k.height, |c, r| {
        let (x, y) = k.pixel_ray(c, r);
        scenario.tissue.depth_at(x, y, t)
    })
}

fn hash2(seed: u64, i: i64, j: i64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [i as u64, j as u64] {
        h ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = h.rotate_left(31).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(fx), s(fy));
    let (i, j) = (x0 as i64, y0 as i64);
    let a = hash2(seed, i, j);
    let b = hash2(seed, i + 1, j);
    let c = hash2(seed, i, j + 1);
    let d = hash2(seed, i + 1, j + 1);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

/// Procedural surface albedo at lateral position `(X, Y)` in meters.
fn albedo(tissue: &TissueSurface, seed: u64, x: f64, y: f64) -> f64 {
    let u = x / tissue.texture_scale;
    let v = y / tissue.texture_scale;
    let n = 0.65 * value_noise(seed, u, v) + 0.35 * value_noise(seed ^ 0x5151, 2.1 * u, 2.1 * v);
    (0.5 + tissue.texture_contrast * (n - 0.5)).clamp(0.0, 1.0)
}

/// Renders the textured tissue from the left camera and from the right
/// camera, displaced by `+baseline` along x. Right-image rays are
/// intersected with the surface exactly, so the right view is the left view
/// warped by the true disparity `baseline · fx / z`.
pub fn render_stereo_pair(
    scenario: &SimScenario,
    frame: usize,
    k: &CameraIntrinsics,
) -> Result<(ImageGray, ImageGray)> {
    scenario.check_frame(frame)?;
    let tissue = &scenario.tissue;
    let t = frame as f64;
    let seed = scenario.seed;
    let left = ImageGray::from_fn(k.width, k.height, |c, r| {
        let (x, y) = k.pixel_ray(c, r);
        let z = tissue.depth_at(x, y, t);
        albedo(tissue, seed, x * z, y * z)
    })?;
    let right = ImageGray::from_fn(k.width, k.height, |c, r| {
        let (xr, yr) = k.pixel_ray(c, r);
        // Fixed point of z = S(xr + b/z, yr).
        let mut z = tissue.depth_at(xr, yr, t);
        for _ in 0..100 {
            let next = tissue.depth_at(xr + k.baseline / z, yr, t);
            let done = (next - z).abs() <= 1e-14 * z;
            z = next;
            if done {
                break;
            }
        }
        let x = xr * z + k.baseline;
        albedo(tissue, seed, x, yr * z)
    })?;
    Ok((left, right))
}
