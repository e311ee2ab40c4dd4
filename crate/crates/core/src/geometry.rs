//! Rigid-body transforms, axis-angle parameterization, kinematic chains and
//! the camera projection of link-attached feature points.
//!
//! A feature `p` attached to link `j` projects to the image as
//!
//! ```text
//! m = (1/s) · K · T_hand_eye · T_lumped(ω, b) · T_1(θ_1) ⋯ T_j(θ_j) · p
//! ```
//!
//! where `T_lumped` is the tracked correction that absorbs joint-encoder and
//! hand-eye calibration errors, and `1/s` is the homogeneous divide.

use std::collections::HashMap;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depth below which a camera-frame point is treated as behind the camera.
pub const EPSILON_DEPTH: f64 = 1e-6;

const ORTHO_TOL: f64 = 1e-9;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula. A zero vector yields the identity exactly.
pub fn rotation_from_axis_angle(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    if theta == 0.0 {
        return Matrix3::identity();
    }
    let k = skew(&(omega / theta));
    Matrix3::identity() + k * theta.sin() + (k * k) * (1.0 - theta.cos())
}

/// Rotation vector of a rotation matrix, with angle in `[0, π]`.
pub fn axis_angle_from_rotation(rotation: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*rotation).scaled_axis()
}

/// Re-wraps a rotation vector so that its norm lies in `[0, π]`.
pub fn wrap_axis_angle(omega: Vector3<f64>) -> Vector3<f64> {
    let theta = omega.norm();
    if theta <= std::f64::consts::PI {
        return omega;
    }
    let axis = omega / theta;
    let tau = std::f64::consts::TAU;
    let reduced = theta.rem_euclid(tau);
    if reduced > std::f64::consts::PI {
        -axis * (tau - reduced)
    } else {
        axis * reduced
    }
}

/// Rigid transform `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct Transform3D {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Transform3D {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("transform has non-finite entries"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if ortho >= ORTHO_TOL {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (‖RᵀR − I‖ = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::invalid(format!("rotation determinant is {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation vector of this transform's rotation.
    pub fn log_rotation(&self) -> Vector3<f64> {
        axis_angle_from_rotation(&self.rotation)
    }
}

impl Mul for Transform3D {
    type Output = Transform3D;

    fn mul(self, rhs: Transform3D) -> Transform3D {
        Transform3D {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl Mul<&Transform3D> for &Transform3D {
    type Output = Transform3D;

    fn mul(self, rhs: &Transform3D) -> Transform3D {
        *self * *rhs
    }
}

/// JSON form of a transform. Either a row-major `rotation` matrix or an
/// `axis_angle` vector may be given on input; output always uses the matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis_angle: Option<[f64; 3]>,
    #[serde(default)]
    translation: [f64; 3],
}

impl TryFrom<TransformRepr> for Transform3D {
    type Error = Error;

    fn try_from(repr: TransformRepr) -> Result<Self> {
        let translation = Vector3::from(repr.translation);
        match (repr.rotation, repr.axis_angle) {
            (Some(_), Some(_)) => Err(Error::invalid(
                "transform gives both `rotation` and `axis_angle`",
            )),
            (Some(r), None) => {
                let m = Matrix3::from_fn(|i, j| r[i][j]);
                Transform3D::new(m, translation)
            }
            (None, Some(w)) => axis_angle_to_transform(&Vector3::from(w), &translation),
            (None, None) => Transform3D::new(Matrix3::identity(), translation),
        }
    }
}

impl From<Transform3D> for TransformRepr {
    fn from(t: Transform3D) -> Self {
        let r = t.rotation;
        TransformRepr {
            rotation: Some([
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ]),
            axis_angle: None,
            translation: t.translation.into(),
        }
    }
}

/// `T(ω, b)`: rotation by the rotation vector `omega`, then translation by `b_trans`.
pub fn axis_angle_to_transform(
    omega: &Vector3<f64>,
    b_trans: &Vector3<f64>,
) -> Result<Transform3D> {
    if omega.iter().chain(b_trans.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("axis-angle input must be finite"));
    }
    Ok(Transform3D {
        rotation: rotation_from_axis_angle(omega),
        translation: *b_trans,
    })
}

/// The tracked SE(3) correction `(ω, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LumpedRepr", into = "LumpedRepr")]
pub struct LumpedErrorState {
    omega: Vector3<f64>,
    b_trans: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LumpedRepr {
    omega: [f64; 3],
    b: [f64; 3],
}

impl TryFrom<LumpedRepr> for LumpedErrorState {
    type Error = Error;

    fn try_from(r: LumpedRepr) -> Result<Self> {
        LumpedErrorState::new(Vector3::from(r.omega), Vector3::from(r.b))
    }
}

impl From<LumpedErrorState> for LumpedRepr {
    fn from(s: LumpedErrorState) -> Self {
        LumpedRepr {
            omega: s.omega.into(),
            b: s.b_trans.into(),
        }
    }
}

impl Default for LumpedErrorState {
    fn default() -> Self {
        Self::zero()
    }
}

impl LumpedErrorState {
    /// Builds a state; `omega` is re-wrapped so that `‖omega‖ ≤ π`.
    pub fn new(omega: Vector3<f64>, b_trans: Vector3<f64>) -> Result<Self> {
        if omega.iter().chain(b_trans.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("lumped error components must be finite"));
        }
        Ok(Self {
            omega: wrap_axis_angle(omega),
            b_trans,
        })
    }

    pub fn zero() -> Self {
        Self {
            omega: Vector3::zeros(),
            b_trans: Vector3::zeros(),
        }
    }

    pub fn omega(&self) -> &Vector3<f64> {
        &self.omega
    }

    pub fn b_trans(&self) -> &Vector3<f64> {
        &self.b_trans
    }

    /// `[ω, b]` as a flat 6-vector.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.b_trans.x,
            self.b_trans.y,
            self.b_trans.z,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Result<Self> {
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }

    pub fn to_transform(&self) -> Transform3D {
        Transform3D {
            rotation: rotation_from_axis_angle(&self.omega),
            translation: self.b_trans,
        }
    }
}

/// Pinhole intrinsics of the rectified left camera plus the stereo baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    baseline: f64,
    width: usize,
    height: usize,
}

impl TryFrom<IntrinsicsRepr> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: IntrinsicsRepr) -> Result<Self> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.baseline, r.width, r.height)
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        baseline: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let finite = [fx, fy, cx, cy, baseline].iter().all(|v| v.is_finite());
        if !finite || fx <= 0.0 || fy <= 0.0 || baseline <= 0.0 {
            return Err(Error::invalid(
                "intrinsics require finite fx, fy, baseline > 0",
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image size must be nonzero"));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::invalid(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            baseline,
            width,
            height,
        })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Normalized ray direction `(x/z, y/z)` through the center of pixel `(col, row)`.
    pub fn pixel_ray(&self, col: usize, row: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5 - self.cx) / self.fx,
            (row as f64 + 0.5 - self.cy) / self.fy,
        )
    }

    /// Camera-frame point seen at pixel `(col, row)` with depth `z`.
    pub fn back_project(&self, col: usize, row: usize, z: f64) -> Vector3<f64> {
        let (xn, yn) = self.pixel_ray(col, row);
        Vector3::new(xn * z, yn * z, z)
    }

    /// Pixel whose area contains image point `uv`, if inside the image.
    pub fn pixel_of(&self, uv: &Vector2<f64>) -> Option<(usize, usize)> {
        let (u, v) = (uv.x.floor(), uv.y.floor());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }

    /// Scales the intrinsics to a resized image of `width × height`.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self::new(
            self.fx * sx,
            self.fy * sy,
            self.cx * sx,
            self.cy * sy,
            self.baseline,
            width,
            height,
        )
    }
}

/// Pinhole projection of a camera-frame point to continuous pixel coordinates.
pub fn project_point(k: &CameraIntrinsics, p_cam: &Vector3<f64>) -> Result<Vector2<f64>> {
    project_point_with_epsilon(k, p_cam, EPSILON_DEPTH)
}

pub fn project_point_with_epsilon(
    k: &CameraIntrinsics,
    p_cam: &Vector3<f64>,
    epsilon_depth: f64,
) -> Result<Vector2<f64>> {
    if !(p_cam.z > epsilon_depth) {
        return Err(Error::PointBehindCamera { z: p_cam.z });
    }
    Ok(Vector2::new(
        k.fx * p_cam.x / p_cam.z + k.cx,
        k.fy * p_cam.y / p_cam.z + k.cy,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// A joint: a fixed pre-transform followed by motion along/about `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRepr", into = "JointRepr")]
pub struct Joint {
    pub name: String,
    kind: JointKind,
    pre: Transform3D,
    axis: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRepr {
    #[serde(default)]
    name: String,
    #[serde(rename = "type")]
    kind: JointKind,
    #[serde(default = "Transform3D::identity")]
    pre: Transform3D,
    axis: [f64; 3],
}

impl TryFrom<JointRepr> for Joint {
    type Error = Error;

    fn try_from(r: JointRepr) -> Result<Self> {
        Joint::new(r.name, r.kind, r.pre, Vector3::from(r.axis))
    }
}

impl From<Joint> for JointRepr {
    fn from(j: Joint) -> Self {
        JointRepr {
            name: j.name,
            kind: j.kind,
            pre: j.pre,
            axis: j.axis.into(),
        }
    }
}

impl Joint {
    pub fn new(
        name: impl Into<String>,
        kind: JointKind,
        pre: Transform3D,
        axis: Vector3<f64>,
    ) -> Result<Self> {
        if (axis.norm() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::invalid(format!(
                "joint axis {:?} is not a unit vector",
                axis.as_slice()
            )));
        }
        Ok(Self {
            name: name.into(),
            kind,
            pre,
            axis,
        })
    }

    pub fn revolute(pre: Transform3D, axis: Vector3<f64>) -> Result<Self> {
        Self::new("", JointKind::Revolute, pre, axis)
    }

    pub fn prismatic(pre: Transform3D, axis: Vector3<f64>) -> Result<Self> {
        Self::new("", JointKind::Prismatic, pre, axis)
    }

    pub fn kind(&self) -> JointKind {
        self.kind
    }

    pub fn pre(&self) -> &Transform3D {
        &self.pre
    }

    pub fn axis(&self) -> &Vector3<f64> {
        &self.axis
    }

    /// Transform from this joint's child link frame to its parent frame.
    pub fn transform(&self, value: f64) -> Transform3D {
        let motion = match self.kind {
            JointKind::Revolute => Transform3D {
                rotation: rotation_from_axis_angle(&(self.axis * value)),
                translation: Vector3::zeros(),
            },
            JointKind::Prismatic => Transform3D::from_translation(self.axis * value),
        };
        self.pre * motion
    }
}

/// A feature point rigidly attached to link `link` (0 = robot base).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturePoint {
    pub id: String,
    pub link: usize,
    pub point: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainRepr", into = "ChainRepr")]
pub struct KinematicChain {
    joints: Vec<Joint>,
    hand_eye_prior: Transform3D,
    features: Vec<FeaturePoint>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainRepr {
    joints: Vec<Joint>,
    hand_eye_prior: Transform3D,
    features: Vec<FeaturePoint>,
}

impl TryFrom<ChainRepr> for KinematicChain {
    type Error = Error;

    fn try_from(r: ChainRepr) -> Result<Self> {
        KinematicChain::new(r.joints, r.hand_eye_prior, r.features)
    }
}

impl From<KinematicChain> for ChainRepr {
    fn from(c: KinematicChain) -> Self {
        ChainRepr {
            joints: c.joints,
            hand_eye_prior: c.hand_eye_prior,
            features: c.features,
        }
    }
}

impl KinematicChain {
    pub fn new(
        joints: Vec<Joint>,
        hand_eye_prior: Transform3D,
        features: Vec<FeaturePoint>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if f.link > joints.len() {
                return Err(Error::invalid(format!(
                    "feature `{}` attached to link {} but chain has {} joints",
                    f.id,
                    f.link,
                    joints.len()
                )));
            }
            if f.point.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("feature `{}` is not finite", f.id)));
            }
            if index.insert(f.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate feature id `{}`", f.id)));
            }
        }
        Ok(Self {
            joints,
            hand_eye_prior,
            features,
            index,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn hand_eye_prior(&self) -> &Transform3D {
        &self.hand_eye_prior
    }

    pub fn features(&self) -> &[FeaturePoint] {
        &self.features
    }

    pub fn feature(&self, id: &str) -> Result<&FeaturePoint> {
        self.index
            .get(id)
            .map(|&i| &self.features[i])
            .ok_or_else(|| Error::UnknownFeature(id.to_string()))
    }

    /// Transforms of every link frame `0..=n` to the base frame.
    pub fn link_transforms(&self, joints: &JointState) -> Result<Vec<Transform3D>> {
        self.check_state(joints)?;
        let mut out = Vec::with_capacity(self.joints.len() + 1);
        let mut acc = Transform3D::identity();
        out.push(acc);
        for (joint, &value) in self.joints.iter().zip(joints.theta()) {
            acc = acc * joint.transform(value);
            out.push(acc);
        }
        Ok(out)
    }

    fn check_state(&self, joints: &JointState) -> Result<()> {
        if joints.theta().len() != self.joints.len() {
            return Err(Error::invalid(format!(
                "joint state has {} values, chain has {} joints",
                joints.theta().len(),
                self.joints.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct JointState {
    theta: Vec<f64>,
}

impl TryFrom<Vec<f64>> for JointState {
    type Error = Error;

    fn try_from(theta: Vec<f64>) -> Result<Self> {
        JointState::new(theta)
    }
}

impl From<JointState> for Vec<f64> {
    fn from(s: JointState) -> Self {
        s.theta
    }
}

impl JointState {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("joint values must be finite"));
        }
        Ok(Self { theta })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            theta: vec![0.0; n],
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

/// Composition of the first `link_index` joint transforms.
pub fn forward_kinematics(
    chain: &KinematicChain,
    joints: &JointState,
    link_index: usize,
) -> Result<Transform3D> {
    chain.check_state(joints)?;
    if link_index > chain.joint_count() {
        return Err(Error::invalid(format!(
            "link index {link_index} out of range for {} joints",
            chain.joint_count()
        )));
    }
    Ok(chain.joints[..link_index]
        .iter()
        .zip(joints.theta())
        .fold(Transform3D::identity(), |acc, (j, &v)| acc * j.transform(v)))
}

/// Base-frame position of a feature (before lumped error and hand-eye).
pub fn feature_in_base(
    chain: &KinematicChain,
    joints: &JointState,
    feature_id: &str,
) -> Result<Vector3<f64>> {
    let f = chain.feature(feature_id)?;
    let fk = forward_kinematics(chain, joints, f.link)?;
    Ok(fk.transform_point(&Vector3::from(f.point)))
}

/// Camera-frame position of a base-frame point under a lumped error.
pub fn base_to_camera(
    chain: &KinematicChain,
    lumped: &LumpedErrorState,
    p_base: &Vector3<f64>,
) -> Vector3<f64> {
    let corrected = lumped.to_transform().transform_point(p_base);
    chain.hand_eye_prior.transform_point(&corrected)
}

/// Image location of a chain feature under the given joint state and lumped error.
pub fn project_feature(
    k: &CameraIntrinsics,
    chain: &KinematicChain,
    joints: &JointState,
    lumped: &LumpedErrorState,
    feature_id: &str,
) -> Result<Vector2<f64>> {
    let p_base = feature_in_base(chain, joints, feature_id)?;
    project_point(k, &base_to_camera(chain, lumped, &p_base))
}
