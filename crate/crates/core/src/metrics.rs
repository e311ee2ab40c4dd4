//! Tool-mask rendering and the evaluation metrics: mask IoU, depth RMSE over
//! mutually valid pixels, valid-pixel fraction and mean feature pixel error.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::BinaryMask;
use crate::geometry::{
    CameraIntrinsics, JointState, KinematicChain, LumpedErrorState, Transform3D, EPSILON_DEPTH,
};
use crate::stereo::DepthMap;

/// Solid primitive in its link's frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Primitive {
    fn radius(&self) -> f64 {
        match self {
            Primitive::Capsule { radius, .. } | Primitive::Sphere { radius, .. } => *radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkGeometry {
    pub link: usize,
    pub primitives: Vec<Primitive>,
}

/// Capsule/sphere approximation of the tool's CAD model, per link.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ToolGeometryRepr")]
pub struct ToolGeometry {
    pub links: Vec<LinkGeometry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ToolGeometryRepr {
    links: Vec<LinkGeometry>,
}

impl TryFrom<ToolGeometryRepr> for ToolGeometry {
    type Error = Error;

    fn try_from(r: ToolGeometryRepr) -> Result<Self> {
        ToolGeometry::new(r.links)
    }
}

impl ToolGeometry {
    pub fn new(links: Vec<LinkGeometry>) -> Result<Self> {
        for l in &links {
            for p in &l.primitives {
                if !(p.radius() > 0.0) {
                    return Err(Error::invalid(format!(
                        "primitive on link {} has radius {}",
                        l.link,
                        p.radius()
                    )));
                }
            }
        }
        Ok(Self { links })
    }
}

/// A primitive expressed in the camera frame.
#[derive(Debug, Clone, Copy)]
enum CameraPrimitive {
    Capsule {
        a: Vector3<f64>,
        b: Vector3<f64>,
        radius: f64,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
}

impl CameraPrimitive {
    fn transformed(p: &Primitive, t: &Transform3D) -> Self {
        match p {
            Primitive::Capsule { a, b, radius } => CameraPrimitive::Capsule {
                a: t.transform_point(&Vector3::from(*a)),
                b: t.transform_point(&Vector3::from(*b)),
                radius: *radius,
            },
            Primitive::Sphere { center, radius } => CameraPrimitive::Sphere {
                center: t.transform_point(&Vector3::from(*center)),
                radius: *radius,
            },
        }
    }

    /// Axis-aligned 3D bounds.
    fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        match *self {
            CameraPrimitive::Capsule { a, b, radius } => {
                let r = Vector3::repeat(radius);
                (a.inf(&b) - r, a.sup(&b) + r)
            }
            CameraPrimitive::Sphere { center, radius } => {
                let r = Vector3::repeat(radius);
                (center - r, center + r)
            }
        }
    }

    /// Whether the ray `t · dir`, `t ≥ 0`, passes within the primitive.
    fn hit(&self, dir: &Vector3<f64>) -> bool {
        match *self {
            CameraPrimitive::Sphere { center, radius } => {
                let t = center.dot(dir).max(0.0);
                (center - dir * t).norm_squared() <= radius * radius
            }
            CameraPrimitive::Capsule { a, b, radius } => {
                segment_ray_distance_sq(&a, &b, dir) <= radius * radius
            }
        }
    }
}

/// Squared distance between segment `[a, b]` and the ray from the origin
/// along unit `dir`. Closest points of two segments, with the ray treated
/// as a segment long enough to pass every primitive.
fn segment_ray_distance_sq(a: &Vector3<f64>, b: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
    let reach = a.norm().max(b.norm()) * 2.0 + 1.0;
    let d1 = dir * reach;
    let d2 = b - a;
    let r = -a;
    let aa = d1.norm_squared();
    let ee = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if ee <= f64::EPSILON {
        s = (d1.dot(a) / aa).clamp(0.0, 1.0);
        return (d1 * s - a).norm_squared();
    }
    let c = d1.dot(&r);
    let bb = d1.dot(&d2);
    let denom = aa * ee - bb * bb;
    let mut s0 = if denom > 0.0 {
        ((bb * f - c * ee) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t0 = (bb * s0 + f) / ee;
    if t0 < 0.0 {
        t0 = 0.0;
        s0 = (-c / aa).clamp(0.0, 1.0);
    } else if t0 > 1.0 {
        t0 = 1.0;
        s0 = ((bb - c) / aa).clamp(0.0, 1.0);
    }
    s = s0;
    t = t0;
    let p1 = d1 * s;
    let p2 = a + d2 * t;
    (p1 - p2).norm_squared()
}

/// Pixel rectangle `[c0, c1] × [r0, r1]` that may contain the primitive's
/// silhouette, or `None` when it lies entirely behind the camera.
fn pixel_bounds(p: &CameraPrimitive, k: &CameraIntrinsics) -> Option<(usize, usize, usize, usize)> {
    let (lo, hi) = p.bounds();
    if hi.z <= EPSILON_DEPTH {
        return None;
    }
    let full = (0, k.width - 1, 0, k.height - 1);
    if lo.z <= EPSILON_DEPTH {
        return Some(full);
    }
    let mut umin = f64::INFINITY;
    let mut umax = f64::NEG_INFINITY;
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for i in 0..8 {
        let x = if i & 1 == 0 { lo.x } else { hi.x };
        let y = if i & 2 == 0 { lo.y } else { hi.y };
        let z = if i & 4 == 0 { lo.z } else { hi.z };
        let u = k.fx * x / z + k.cx;
        let v = k.fy * y / z + k.cy;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let (w, h) = (k.width as f64, k.height as f64);
    if umax < 0.0 || vmax < 0.0 || umin >= w || vmin >= h {
        return Some((1, 0, 1, 0));
    }
    let c0 = (umin.floor() - 1.0).max(0.0) as usize;
    let c1 = (umax.ceil() + 1.0).min(w - 1.0) as usize;
    let r0 = (vmin.floor() - 1.0).max(0.0) as usize;
    let r1 = (vmax.ceil() + 1.0).min(h - 1.0) as usize;
    Some((c0, c1, r0, r1))
}

/// Camera-frame transforms of every link under the full projection chain.
fn link_to_camera(
    chain: &KinematicChain,
    joints: &JointState,
    lumped: &LumpedErrorState,
) -> Result<Vec<Transform3D>> {
    let prefix = *chain.hand_eye_prior() * lumped.to_transform();
    Ok(chain
        .link_transforms(joints)?
        .into_iter()
        .map(|t| prefix * t)
        .collect())
}

/// Rasterizes the tool silhouette by casting a ray through every pixel
/// center `(col + 0.5, row + 0.5)` against each primitive.
pub fn render_tool_mask(
    geometry: &ToolGeometry,
    chain: &KinematicChain,
    joints: &JointState,
    lumped: &LumpedErrorState,
    k: &CameraIntrinsics,
) -> Result<BinaryMask> {
    let links = link_to_camera(chain, joints, lumped)?;
    let mut prims = Vec::new();
    for lg in &geometry.links {
        let t = links.get(lg.link).ok_or_else(|| {
            Error::invalid(format!(
                "geometry references link {} but chain has {} joints",
                lg.link,
                chain.joint_count()
            ))
        })?;
        for p in &lg.primitives {
            let cp = CameraPrimitive::transformed(p, t);
            if let Some(b) = pixel_bounds(&cp, k) {
                prims.push((cp, b));
            }
        }
    }
    let w = k.width;
    let mut bits = vec![false; k.pixel_count()];
    bits.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        let yn = (r as f64 + 0.5 - k.cy) / k.fy;
        for (p, (c0, c1, r0, r1)) in &prims {
            if r < *r0 || r > *r1 {
                continue;
            }
            for (c, bit) in row.iter_mut().enumerate().take(c1 + 1).skip(*c0) {
                if *bit {
                    continue;
                }
                let xn = (c as f64 + 0.5 - k.cx) / k.fx;
                let dir = Vector3::new(xn, yn, 1.0).normalize();
                if p.hit(&dir) {
                    *bit = true;
                }
            }
        }
    });
    BinaryMask::new(w, k.height, bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouScore {
    pub value: f64,
    /// Both masks were empty; the score is defined as 1.
    pub both_empty: bool,
}

/// Intersection over union of two masks.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<IouScore> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "masks are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits().iter().zip(b.bits()) {
        inter += usize::from(*x && *y);
        union += usize::from(*x || *y);
    }
    if union == 0 {
        log::warn!("IoU of two empty masks defined as 1");
        return Ok(IouScore {
            value: 1.0,
            both_empty: true,
        });
    }
    Ok(IouScore {
        value: inter as f64 / union as f64,
        both_empty: false,
    })
}

/// Root-mean-square depth difference over pixels valid in both maps.
pub fn depth_rmse(est: &DepthMap, gt: &DepthMap) -> Result<f64> {
    if est.width() != gt.width() || est.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "depth maps are {}x{} and {}x{}",
            est.width(),
            est.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, b) in est.values().iter().zip(gt.values()) {
        if *a > 0.0 && *b > 0.0 {
            let d = a - b;
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    Ok((sum / n as f64).sqrt())
}

pub fn valid_fraction(est: &DepthMap) -> f64 {
    est.valid_count() as f64 / est.values().len() as f64
}

/// Feature locations of one frame, keyed by feature id.
pub type FrameFeatures = BTreeMap<String, Vector2<f64>>;

/// Mean Euclidean pixel error of one feature over the frames where both
/// the prediction and the ground truth contain it.
pub fn feature_error(pred: &[FrameFeatures], gt: &[FrameFeatures], feature_id: &str) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted frames vs {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(gt) {
        if let (Some(h), Some(g)) = (p.get(feature_id), t.get(feature_id)) {
            sum += (h - g).norm();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid(format!(
            "feature `{feature_id}` has no frame with both prediction and ground truth"
        )));
    }
    Ok(sum / n as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Transform3D;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 0.01, 640, 480).unwrap()
    }

    fn fixed_chain() -> KinematicChain {
        KinematicChain::new(vec![], Transform3D::identity(), vec![]).unwrap()
    }

    fn block(w: usize, h: usize, c0: usize, r0: usize, side: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(w, h);
        for r in r0..r0 + side {
            for c in c0..c0 + side {
                m.set(c, r, true);
            }
        }
        m
    }

    fn sphere_at(z: f64) -> ToolGeometry {
        ToolGeometry::new(vec![LinkGeometry {
            link: 0,
            primitives: vec![Primitive::Sphere {
                center: [0.0, 0.0, z],
                radius: 0.01,
            }],
        }])
        .unwrap()
    }

    #[test]
    fn empty_geometry_empty_mask() {
        let m = render_tool_mask(
            &ToolGeometry::default(),
            &fixed_chain(),
            &JointState::zeros(0),
            &LumpedErrorState::zero(),
            &k(),
        )
        .unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn sphere_renders_disk() {
        let m = render_tool_mask(
            &sphere_at(1.0),
            &fixed_chain(),
            &JointState::zeros(0),
            &LumpedErrorState::zero(),
            &k(),
        )
        .unwrap();
        let area = m.count() as f64;
        let r_eff = (area / std::f64::consts::PI).sqrt();
        assert!((r_eff - 5.0).abs() <= 1.0, "effective radius {r_eff}");
        // Centroid at (320, 240) in continuous coordinates.
        let (mut sc, mut sr) = (0.0, 0.0);
        for r in 0..480 {
            for c in 0..640 {
                if m.get(c, r) {
                    sc += c as f64 + 0.5;
                    sr += r as f64 + 0.5;
                }
            }
        }
        assert!((sc / area - 320.0).abs() < 1e-9);
        assert!((sr / area - 240.0).abs() < 1e-9);
        // Extent along the row through the center.
        let row: Vec<usize> = (0..640).filter(|c| m.get(*c, 240)).collect();
        assert!(row.len() >= 8 && row.len() <= 12);
    }

    #[test]
    fn primitive_behind_camera_is_invisible() {
        let m = render_tool_mask(
            &sphere_at(-1.0),
            &fixed_chain(),
            &JointState::zeros(0),
            &LumpedErrorState::zero(),
            &k(),
        )
        .unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn capsule_matches_segment_distance_brute_force() {
        let a = Vector3::new(-0.05, 0.01, 0.4);
        let b = Vector3::new(0.08, -0.02, 0.7);
        for (u, v) in [(0.0, 0.0), (-0.1, 0.02), (0.1, -0.05), (0.3, 0.3)] {
            let dir = Vector3::new(u, v, 1.0).normalize();
            let fast = segment_ray_distance_sq(&a, &b, &dir);
            let mut best = f64::INFINITY;
            for i in 0..=4000 {
                let p = a + (b - a) * (i as f64 / 4000.0);
                let t = p.dot(&dir).max(0.0);
                best = best.min((p - dir * t).norm_squared());
            }
            assert!((fast - best).abs() < 1e-7, "{fast} vs {best}");
        }
    }

    #[test]
    fn iou_examples() {
        let a = block(40, 20, 5, 5, 10);
        assert_eq!(iou(&a, &a).unwrap().value, 1.0);
        let far = block(40, 20, 25, 5, 10);
        assert_eq!(iou(&a, &far).unwrap().value, 0.0);
        let shifted = block(40, 20, 10, 5, 10);
        assert_eq!(iou(&a, &shifted).unwrap().value, 50.0 / 150.0);
        let e = BinaryMask::empty(40, 20);
        let s = iou(&e, &e).unwrap();
        assert!(s.both_empty && s.value == 1.0);
        assert!(iou(&a, &BinaryMask::empty(4, 4)).is_err());
    }

    #[test]
    fn rmse_and_valid_fraction() {
        let gt = DepthMap::new(2, 2, vec![1.0, 2.0, 0.0, 3.0]).unwrap();
        assert_eq!(depth_rmse(&gt, &gt).unwrap(), 0.0);
        let est = DepthMap::new(2, 2, vec![3.0, 4.0, 7.0, 5.0]).unwrap();
        assert_eq!(depth_rmse(&est, &gt).unwrap(), 2.0);
        let none = DepthMap::invalid(2, 2).unwrap();
        assert!(matches!(depth_rmse(&none, &gt), Err(Error::NoOverlap)));
        assert_eq!(valid_fraction(&est), 1.0);
        assert_eq!(valid_fraction(&none), 0.0);
        assert_eq!(valid_fraction(&DepthMap::new(2, 1, vec![1.0, 0.0]).unwrap()), 0.5);
    }

    #[test]
    fn feature_error_examples() {
        let frames = |off: (f64, f64)| -> Vec<FrameFeatures> {
            (0..4)
                .map(|i| {
                    let mut m = FrameFeatures::new();
                    m.insert("tip".into(), Vector2::new(i as f64 + off.0, 2.0 + off.1));
                    m
                })
                .collect()
        };
        let gt = frames((0.0, 0.0));
        assert_eq!(feature_error(&gt, &gt, "tip").unwrap(), 0.0);
        assert_eq!(feature_error(&frames((3.0, 4.0)), &gt, "tip").unwrap(), 5.0);
        assert!(feature_error(&gt, &gt, "other").is_err());
    }
}
