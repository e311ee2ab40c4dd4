//! Tissue model fusion from tool-masked depth maps.
//!
//! This is a simplified projective surfel fusion: each valid depth pixel is
//! associated with the surfel that currently projects onto it (if the depths
//! agree within a tolerance) and averaged into it, or spawns a new surfel.
//! There is no non-rigid deformation graph; the camera is assumed static and
//! surfels live in the camera frame.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraIntrinsics};
use crate::stereo::DepthMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} mask bits for {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, expected {width}x{height}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Dilation by a square structuring element of half-width `radius`
    /// (side `2·radius + 1`). Applied separably: rows, then columns.
    pub fn dilate(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        let mut horiz = vec![false; w * h];
        for r in 0..h {
            let row = &self.bits[r * w..(r + 1) * w];
            for c in 0..w {
                let lo = c.saturating_sub(radius);
                let hi = (c + radius).min(w - 1);
                horiz[r * w + c] = row[lo..=hi].iter().any(|b| *b);
            }
        }
        let mut bits = vec![false; w * h];
        for c in 0..w {
            for r in 0..h {
                let lo = r.saturating_sub(radius);
                let hi = (r + radius).min(h - 1);
                bits[r * w + c] = (lo..=hi).any(|rr| horiz[rr * w + c]);
            }
        }
        BinaryMask {
            width: w,
            height: h,
            bits,
        }
    }
}

/// Invalidates every depth pixel inside the mask dilated by `dilation_radius`.
pub fn subtract_mask(depth: &DepthMap, mask: &BinaryMask, dilation_radius: usize) -> Result<DepthMap> {
    mask.check_dims(depth.width(), depth.height())?;
    let dilated = mask.dilate(dilation_radius);
    let mut out = depth.clone();
    for (z, m) in out.values_mut().iter_mut().zip(dilated.bits()) {
        if *m {
            *z = 0.0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surfel {
    pub position: Vector3<f64>,
    pub radius: f64,
    pub confidence: f64,
    pub last_seen: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfelModel {
    surfels: Vec<Surfel>,
    frame_count: u64,
}

impl SurfelModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_surfels(surfels: Vec<Surfel>, frame_count: u64) -> Result<Self> {
        for s in &surfels {
            if !(s.radius > 0.0) || !(s.confidence > 0.0) {
                return Err(Error::invalid("surfel radius and confidence must be > 0"));
            }
            if s.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("surfel position must be finite"));
            }
        }
        Ok(Self {
            surfels,
            frame_count,
        })
    }

    pub fn surfels(&self) -> &[Surfel] {
        &self.surfels
    }

    pub fn len(&self) -> usize {
        self.surfels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfels.is_empty()
    }

    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    pub fn total_confidence(&self) -> f64 {
        self.surfels.iter().map(|s| s.confidence).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// Depth agreement needed to merge a pixel into an existing surfel (m).
    pub tau_z: f64,
    pub dilation_radius: usize,
    pub c_min: f64,
    pub t_stale: u64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            tau_z: 0.005,
            dilation_radius: 5,
            c_min: 1.0,
            t_stale: 30,
        }
    }
}

/// What one fusion pass touched, in row-major pixel order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusionReport {
    pub created: usize,
    pub updated: usize,
    /// Linear pixel indices that created or updated a surfel.
    pub touched_pixels: Vec<usize>,
}

/// Index of the nearest surfel whose center projects into each pixel.
fn association_map(surfels: &[Surfel], k: &CameraIntrinsics) -> Vec<Option<usize>> {
    let mut index: Vec<Option<usize>> = vec![None; k.pixel_count()];
    for (i, s) in surfels.iter().enumerate() {
        let Ok(uv) = project_point(k, &s.position) else {
            continue;
        };
        let Some((c, r)) = k.pixel_of(&uv) else {
            continue;
        };
        let slot = &mut index[r * k.width + c];
        match slot {
            Some(j) if surfels[*j].position.z <= s.position.z => {}
            _ => *slot = Some(i),
        }
    }
    index
}

/// Fuses one masked depth map into the model.
pub fn fuse_depth(
    model: &SurfelModel,
    depth: &DepthMap,
    k: &CameraIntrinsics,
    params: &FusionParams,
) -> Result<(SurfelModel, FusionReport)> {
    if depth.width() != k.width || depth.height() != k.height {
        return Err(Error::DimensionMismatch(format!(
            "depth is {}x{}, calibration is {}x{}",
            depth.width(),
            depth.height(),
            k.width,
            k.height
        )));
    }
    let frame = model.frame_count;
    let assoc = association_map(&model.surfels, k);
    let mut surfels = model.surfels.clone();
    let mut report = FusionReport::default();
    for r in 0..k.height {
        for c in 0..k.width {
            let i = r * k.width + c;
            let z = depth.values()[i];
            if !(z > 0.0) {
                continue;
            }
            let p = k.back_project(c, r, z);
            let radius = z / k.fx;
            match assoc[i] {
                Some(j) if (surfels[j].position.z - z).abs() <= params.tau_z => {
                    let s = &mut surfels[j];
                    let total = s.confidence + 1.0;
                    s.position = (s.position * s.confidence + p) / total;
                    s.radius = (s.radius * s.confidence + radius) / total;
                    s.confidence = total;
                    s.last_seen = frame;
                    report.updated += 1;
                }
                _ => {
                    surfels.push(Surfel {
                        position: p,
                        radius,
                        confidence: 1.0,
                        last_seen: frame,
                    });
                    report.created += 1;
                }
            }
            report.touched_pixels.push(i);
        }
    }
    Ok((
        SurfelModel {
            surfels,
            frame_count: frame + 1,
        },
        report,
    ))
}

/// Z-buffered splat rendering of the model.
///
/// A surfel covers the pixel containing its projected center plus every
/// pixel whose center lies within `r_px − 0.5` of it, where
/// `r_px = max(1, fx · radius / z)`. A surfel fused at native resolution thus
/// covers exactly its own pixel.
pub fn reproject_model(model: &SurfelModel, k: &CameraIntrinsics) -> DepthMap {
    let (w, h) = (k.width, k.height);
    let mut z = vec![f64::INFINITY; w * h];
    for s in &model.surfels {
        let Ok(uv) = project_point(k, &s.position) else {
            continue;
        };
        let depth = s.position.z;
        let r_px = (k.fx * s.radius / depth).max(1.0);
        let reach = r_px - 0.5;
        let mut splat = |c: usize, r: usize| {
            let slot = &mut z[r * w + c];
            if depth < *slot {
                *slot = depth;
            }
        };
        if let Some((c, r)) = k.pixel_of(&uv) {
            splat(c, r);
        }
        let c_lo = (uv.x - 0.5 - reach).floor().max(0.0);
        let c_hi = (uv.x - 0.5 + reach).ceil().min(w as f64 - 1.0);
        let r_lo = (uv.y - 0.5 - reach).floor().max(0.0);
        let r_hi = (uv.y - 0.5 + reach).ceil().min(h as f64 - 1.0);
        if c_lo > c_hi || r_lo > r_hi {
            continue;
        }
        for r in r_lo as usize..=r_hi as usize {
            for c in c_lo as usize..=c_hi as usize {
                let dx = c as f64 + 0.5 - uv.x;
                let dy = r as f64 + 0.5 - uv.y;
                if dx * dx + dy * dy <= reach * reach {
                    splat(c, r);
                }
            }
        }
    }
    for v in &mut z {
        if v.is_infinite() {
            *v = 0.0;
        }
    }
    DepthMap::new(w, h, z).expect("finite splat depths")
}

/// Drops low-confidence surfels that have not been observed for `t_stale` frames.
pub fn prune(model: &SurfelModel, params: &FusionParams) -> SurfelModel {
    let now = model.frame_count;
    let surfels = model
        .surfels
        .iter()
        .filter(|s| {
            let stale = now.saturating_sub(s.last_seen) > params.t_stale;
            !(s.confidence < params.c_min && stale)
        })
        .copied()
        .collect();
    SurfelModel {
        surfels,
        frame_count: now,
    }
}
