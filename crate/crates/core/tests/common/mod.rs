//! Brute-force reference implementations shared by the integration tests.
//! Nothing here calls the closed-form code paths it is compared against.

#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use surgical_perception::fusion::BinaryMask;
use surgical_perception::geometry::{
    rotation_from_axis_angle, CameraIntrinsics, FeaturePoint, Joint, JointKind, JointState, KinematicChain,
    LumpedErrorState, Transform3D,
};
use surgical_perception::stereo::DepthMap;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Matrix exponential by truncated power series.
pub fn expm(a: &Matrix3<f64>) -> Matrix3<f64> {
    let mut sum = Matrix3::identity();
    let mut term = Matrix3::identity();
    for k in 1..60 {
        term = term * a / k as f64;
        sum += term;
    }
    sum
}

pub fn homog(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

pub fn joint_matrix(j: &Joint, value: f64) -> Matrix4<f64> {
    let motion = match j.kind() {
        JointKind::Revolute => homog(&expm(&skew(&(j.axis() * value))), &Vector3::zeros()),
        JointKind::Prismatic => homog(&Matrix3::identity(), &(j.axis() * value)),
    };
    j.pre().to_homogeneous() * motion
}

/// Pixel location through an explicit 4×4 chain and a dense 3×3 camera matrix.
pub fn oracle_project(
    k: &CameraIntrinsics,
    chain: &KinematicChain,
    joints: &JointState,
    lumped: &LumpedErrorState,
    feature: &FeaturePoint,
) -> Vector2<f64> {
    let mut t = Matrix4::identity();
    for (j, v) in chain.joints().iter().zip(joints.theta()).take(feature.link) {
        t *= joint_matrix(j, *v);
    }
    let lumped_m = homog(&expm(&skew(lumped.omega())), lumped.b_trans());
    let full = chain.hand_eye_prior().to_homogeneous() * lumped_m * t;
    let p = full * Vector4::new(feature.point[0], feature.point[1], feature.point[2], 1.0);
    let kmat = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
    let m = kmat * Vector3::new(p.x, p.y, p.z);
    Vector2::new(m.x / m.z, m.y / m.z)
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_transform(rng: &mut ChaCha8Rng, max_angle: f64, max_t: f64) -> Transform3D {
    let omega = random_unit(rng) * rng.random_range(0.0..max_angle);
    let t = Vector3::new(
        rng.random_range(-max_t..max_t),
        rng.random_range(-max_t..max_t),
        rng.random_range(-max_t..max_t),
    );
    Transform3D::new(rotation_from_axis_angle(&omega), t).unwrap()
}

/// A random serial chain viewed from about 3 units away, with one feature per link.
pub fn random_chain(rng: &mut ChaCha8Rng, n_joints: usize) -> KinematicChain {
    let joints = (0..n_joints)
        .map(|i| {
            let pre = random_transform(rng, 0.5, 0.15);
            let axis = random_unit(rng);
            let kind = if rng.random::<f64>() < 0.3 {
                JointKind::Prismatic
            } else {
                JointKind::Revolute
            };
            Joint::new(format!("j{i}"), kind, pre, axis).unwrap()
        })
        .collect();
    let tilt = random_unit(rng) * rng.random_range(0.0..0.3);
    let hand_eye = Transform3D::new(
        rotation_from_axis_angle(&tilt),
        Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), 3.0),
    )
    .unwrap();
    let features = (0..=n_joints)
        .map(|link| FeaturePoint {
            id: format!("f{link}"),
            link,
            point: [
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
            ],
        })
        .collect();
    KinematicChain::new(joints, hand_eye, features).unwrap()
}

pub fn random_joints(rng: &mut ChaCha8Rng, n: usize) -> JointState {
    JointState::new((0..n).map(|_| rng.random_range(-0.6..0.6)).collect()).unwrap()
}

pub fn random_lumped(rng: &mut ChaCha8Rng, max_angle: f64, max_b: f64) -> LumpedErrorState {
    let omega = random_unit(rng) * rng.random_range(0.0..max_angle);
    let b = Vector3::new(
        rng.random_range(-max_b..max_b),
        rng.random_range(-max_b..max_b),
        rng.random_range(-max_b..max_b),
    );
    LumpedErrorState::new(omega, b).unwrap()
}

pub fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 510.0, 320.0, 240.0, 0.01, 640, 480).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> BinaryMask {
    BinaryMask::new(w, h, (0..w * h).map(|_| rng.random::<f64>() < p).collect()).unwrap()
}

pub fn random_depth(rng: &mut ChaCha8Rng, w: usize, h: usize, p_valid: f64) -> DepthMap {
    DepthMap::new(
        w,
        h,
        (0..w * h)
            .map(|_| {
                if rng.random::<f64>() < p_valid {
                    rng.random_range(0.05..3.0)
                } else {
                    0.0
                }
            })
            .collect(),
    )
    .unwrap()
}

/// IoU by explicit pixel loops.
pub fn oracle_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0u64, 0u64);
    for r in 0..a.height() {
        for c in 0..a.width() {
            let (x, y) = (a.get(c, r), b.get(c, r));
            if x && y {
                inter += 1;
            }
            if x || y {
                union += 1;
            }
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn oracle_rmse(est: &DepthMap, gt: &DepthMap) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u64;
    for r in 0..est.height() {
        for c in 0..est.width() {
            let (e, g) = (est.get(c, r), gt.get(c, r));
            if e > 0.0 && g > 0.0 {
                sum += (e - g) * (e - g);
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
