//! Cost-volume stereo matching and disparity-to-depth conversion.
//!
//! The matching cost is a windowed sum of absolute differences (SAD) between
//! the left image and the right image shifted by each candidate disparity.
//! The soft-argmin readout takes the softmax of the negated costs across the
//! disparity axis and returns the expected disparity:
//!
//! ```text
//! d̂(i, j) = Σ_{d=0}^{D_max} softmax(−S(i, j, ·))_d · d
//! ```
//!
//! Depth follows from `z = baseline · fx / d̂`. Disparity maps produced by an
//! external matcher enter through [`disparity_to_depth`] on the same path.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be nonzero"));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} image",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image values must be finite"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(c, r))
            .collect();
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Bilinear resize, sampling at pixel centers.
    pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
        Self::from_fn(width, height, |c, r| {
            let x = clamp((c as f64 + 0.5) * sx - 0.5, self.width);
            let y = clamp((r as f64 + 0.5) * sy - 0.5, self.height);
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
            let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }
}

/// Matching costs per `(row, col, d)` for `d ∈ 0..=d_max`; lower is better.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    d_max: usize,
    cost: Vec<f64>,
}

impl CostVolume {
    /// Wraps externally computed costs laid out pixel-major: index
    /// `((row · width + col) · (d_max + 1)) + d`.
    pub fn new(width: usize, height: usize, d_max: usize, cost: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("cost volume dimensions must be nonzero"));
        }
        if d_max < 1 {
            return Err(Error::invalid("d_max must be at least 1"));
        }
        if cost.len() != width * height * (d_max + 1) {
            return Err(Error::DimensionMismatch(format!(
                "{} costs for {width}x{height}x{}",
                cost.len(),
                d_max + 1
            )));
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("costs must be finite"));
        }
        Ok(Self {
            width,
            height,
            d_max,
            cost,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn planes(&self) -> usize {
        self.d_max + 1
    }

    /// Costs of one pixel across all disparities.
    pub fn pixel(&self, col: usize, row: usize) -> &[f64] {
        let n = self.planes();
        let start = (row * self.width + col) * n;
        &self.cost[start..start + n]
    }

    pub fn get(&self, col: usize, row: usize, d: usize) -> f64 {
        self.pixel(col, row)[d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.cost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    disp: Vec<f64>,
    valid: Vec<bool>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, disp: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if disp.len() != width * height || valid.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "disparity buffers do not match {width}x{height}"
            )));
        }
        if disp
            .iter()
            .zip(&valid)
            .any(|(d, v)| *v && !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::invalid("valid disparities must be finite and >= 0"));
        }
        Ok(Self {
            width,
            height,
            disp,
            valid,
        })
    }

    /// Every finite, nonnegative entry is valid. Used for ingested maps.
    pub fn from_values(width: usize, height: usize, disp: Vec<f64>) -> Result<Self> {
        let valid = disp.iter().map(|d| d.is_finite() && *d >= 0.0).collect();
        let disp = disp
            .into_iter()
            .map(|d| if d.is_finite() && d >= 0.0 { d } else { 0.0 })
            .collect();
        Self::new(width, height, disp, valid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.disp
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then_some(self.disp[i])
    }
}

/// Per-pixel depth in meters; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    z: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, z: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("depth map dimensions must be nonzero"));
        }
        if z.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} depths for a {width}x{height} map",
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("depths must be finite and >= 0"));
        }
        Ok(Self { width, height, z })
    }

    pub fn invalid(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let z = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(c, r))
            .collect();
        Self::new(width, height, z)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.z
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.z[row * self.width + col]
    }

    #[inline]
    pub fn is_valid_index(&self, i: usize) -> bool {
        self.z[i] > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.z.iter().filter(|z| **z > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    SoftArgmin,
    WinnerTakeAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoParams {
    pub d_max: usize,
    /// Odd SAD window side length.
    pub window: usize,
    pub readout: Readout,
    /// Multiplier applied to SAD costs before the soft-argmin readout. SAD
    /// costs live in `[0, 1]`; this sets the sharpness of the softmax.
    pub cost_scale: f64,
    /// Winner-take-all pixels with minimum cost at or above this are invalid.
    pub ambiguity_threshold: f64,
    /// Disparities at or below this floor map to invalid depth.
    pub disp_min: f64,
}

impl Default for StereoParams {
    fn default() -> Self {
        Self {
            d_max: 192,
            window: 5,
            readout: Readout::SoftArgmin,
            cost_scale: 300.0,
            ambiguity_threshold: 0.25,
            disp_min: 0.5,
        }
    }
}

impl StereoParams {
    pub fn validate(&self) -> Result<()> {
        if self.d_max < 1 {
            return Err(Error::config("d_max", "must be at least 1"));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::config("window", "must be odd"));
        }
        if !(self.cost_scale > 0.0 && self.cost_scale.is_finite()) {
            return Err(Error::config("cost_scale", "must be finite and > 0"));
        }
        if !(self.disp_min >= 0.0) {
            return Err(Error::config("disp_min", "must be >= 0"));
        }
        Ok(())
    }
}

fn check_pair(left: &ImageGray, right: &ImageGray, d_max: usize, window: usize) -> Result<()> {
    if left.width != right.width || left.height != right.height {
        return Err(Error::DimensionMismatch(format!(
            "left is {}x{}, right is {}x{}",
            left.width, left.height, right.width, right.height
        )));
    }
    if window.is_multiple_of(2) {
        return Err(Error::invalid(format!("window {window} must be odd")));
    }
    if d_max < 1 || d_max >= left.width {
        return Err(Error::invalid(format!(
            "d_max {d_max} must be in [1, width={})",
            left.width
        )));
    }
    Ok(())
}

/// Rows of SAD costs for `rows`, written pixel-major into `out`.
///
/// Each output entry is a direct sum in a fixed order, so the result does
/// not depend on how rows are grouped.
fn sad_rows(
    left: &ImageGray,
    right: &ImageGray,
    d_max: usize,
    window: usize,
    rows: Range<usize>,
    out: &mut [f64],
) {
    let w = left.width;
    let h = left.height as isize;
    let half = (window / 2) as isize;
    let planes = d_max + 1;
    let band = rows.len();
    let padded_rows = band + window - 1;
    let norm = (window * window) as f64;
    let mut hsum = vec![0.0; padded_rows * w];
    let mut diff = vec![0.0; w + window - 1];
    for d in 0..planes {
        for pr in 0..padded_rows {
            let rr = rows.start as isize + pr as isize - half;
            let dst = &mut hsum[pr * w..(pr + 1) * w];
            if rr < 0 || rr >= h {
                dst.fill(window as f64);
                continue;
            }
            let rr = rr as usize;
            let lrow = &left.values[rr * w..(rr + 1) * w];
            let rrow = &right.values[rr * w..(rr + 1) * w];
            for (k, slot) in diff.iter_mut().enumerate() {
                let x = k as isize - half;
                *slot = if x < 0 || x >= w as isize || (x as usize) < d {
                    1.0
                } else {
                    let x = x as usize;
                    (lrow[x] - rrow[x - d]).abs()
                };
            }
            for (c, s) in dst.iter_mut().enumerate() {
                let mut acc = 0.0;
                for v in &diff[c..c + window] {
                    acc += v;
                }
                *s = acc;
            }
        }
        for r in 0..band {
            for c in 0..w {
                let mut acc = 0.0;
                for dy in 0..window {
                    acc += hsum[(r + dy) * w + c];
                }
                out[(r * w + c) * planes + d] = acc / norm;
            }
        }
    }
}

const BAND_ROWS: usize = 16;

/// Windowed SAD cost volume, left-referenced: plane `d` compares
/// `left(r, c)` with `right(r, c − d)`. Window samples falling outside either
/// image cost 1, the maximum.
pub fn build_cost_volume(
    left: &ImageGray,
    right: &ImageGray,
    d_max: usize,
    window: usize,
) -> Result<CostVolume> {
    check_pair(left, right, d_max, window)?;
    let (w, h) = (left.width, left.height);
    let planes = d_max + 1;
    let mut cost = vec![0.0; w * h * planes];
    cost.par_chunks_mut(BAND_ROWS * w * planes)
        .enumerate()
        .for_each(|(b, chunk)| {
            let r0 = b * BAND_ROWS;
            let r1 = (r0 + BAND_ROWS).min(h);
            sad_rows(left, right, d_max, window, r0..r1, chunk);
        });
    Ok(CostVolume {
        width: w,
        height: h,
        d_max,
        cost,
    })
}

/// Softmax expectation of `d` under weights `exp(−scale · cost_d)`.
#[inline]
fn soft_argmin_pixel(costs: &[f64], scale: f64) -> f64 {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut num = 0.0;
    let mut den = 0.0;
    for (d, c) in costs.iter().enumerate() {
        let e = (-(scale * c - scale * min)).exp();
        num += d as f64 * e;
        den += e;
    }
    num / den
}

#[inline]
fn argmin_pixel(costs: &[f64]) -> (usize, f64) {
    let mut best = (0, costs[0]);
    for (d, &c) in costs.iter().enumerate().skip(1) {
        if c < best.1 {
            best = (d, c);
        }
    }
    best
}

/// Soft-argmin readout. Every pixel is valid and lies in `[0, d_max]`.
pub fn soft_argmin(volume: &CostVolume) -> DisparityMap {
    soft_argmin_scaled(volume, 1.0)
}

/// Soft-argmin over `scale · cost`.
pub fn soft_argmin_scaled(volume: &CostVolume, scale: f64) -> DisparityMap {
    let disp: Vec<f64> = volume
        .cost
        .par_chunks(volume.planes())
        .map(|px| soft_argmin_pixel(px, scale))
        .collect();
    let n = disp.len();
    DisparityMap {
        width: volume.width,
        height: volume.height,
        disp,
        valid: vec![true; n],
    }
}

/// Per-pixel argmin with ties going to the smaller disparity. A pixel is
/// valid when its minimum cost is below `ambiguity_threshold`.
pub fn winner_take_all(volume: &CostVolume, ambiguity_threshold: f64) -> DisparityMap {
    let (disp, valid): (Vec<f64>, Vec<bool>) = volume
        .cost
        .par_chunks(volume.planes())
        .map(|px| {
            let (d, c) = argmin_pixel(px);
            (d as f64, c < ambiguity_threshold)
        })
        .unzip();
    DisparityMap {
        width: volume.width,
        height: volume.height,
        disp,
        valid,
    }
}

/// Pixels whose cost range across disparities is below `min_contrast`:
/// the matcher has no preference there (e.g. textureless regions).
pub fn ambiguity_mask(volume: &CostVolume, min_contrast: f64) -> Vec<bool> {
    volume
        .cost
        .par_chunks(volume.planes())
        .map(|px| {
            let (lo, hi) = px
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    (lo.min(*c), hi.max(*c))
                });
            hi - lo < min_contrast
        })
        .collect()
}

/// `z = baseline · fx / d` where `d > disp_min`, else invalid.
pub fn disparity_to_depth(disp: &DisparityMap, k: &CameraIntrinsics, disp_min: f64) -> DepthMap {
    let bf = k.baseline * k.fx;
    let z = disp
        .disp
        .iter()
        .zip(&disp.valid)
        .map(|(&d, &v)| if v && d > disp_min { bf / d } else { 0.0 })
        .collect();
    DepthMap {
        width: disp.width,
        height: disp.height,
        z,
    }
}

/// Inverse of [`disparity_to_depth`] on valid pixels.
pub fn depth_to_disparity(depth: &DepthMap, k: &CameraIntrinsics) -> DisparityMap {
    let bf = k.baseline * k.fx;
    let (disp, valid) = depth
        .z
        .iter()
        .map(|&z| if z > 0.0 { (bf / z, true) } else { (0.0, false) })
        .unzip();
    DisparityMap {
        width: depth.width,
        height: depth.height,
        disp,
        valid,
    }
}

/// Disparity of a rectified pair without materializing the full volume.
/// Results are identical to [`build_cost_volume`] followed by the readout.
pub fn estimate_disparity(
    left: &ImageGray,
    right: &ImageGray,
    params: &StereoParams,
) -> Result<DisparityMap> {
    params.validate()?;
    check_pair(left, right, params.d_max, params.window)?;
    let (w, h) = (left.width, left.height);
    let planes = params.d_max + 1;
    let n_bands = h.div_ceil(BAND_ROWS);
    let bands: Vec<(Vec<f64>, Vec<bool>)> = (0..n_bands)
        .into_par_iter()
        .map(|b| {
            let r0 = b * BAND_ROWS;
            let r1 = (r0 + BAND_ROWS).min(h);
            let mut cost = vec![0.0; (r1 - r0) * w * planes];
            sad_rows(left, right, params.d_max, params.window, r0..r1, &mut cost);
            cost.chunks(planes)
                .map(|px| match params.readout {
                    Readout::SoftArgmin => (soft_argmin_pixel(px, params.cost_scale), true),
                    Readout::WinnerTakeAll => {
                        let (d, c) = argmin_pixel(px);
                        (d as f64, c < params.ambiguity_threshold)
                    }
                })
                .unzip()
        })
        .collect();
    let mut disp = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (d, v) in bands {
        disp.extend(d);
        valid.extend(v);
    }
    DisparityMap::new(w, h, disp, valid)
}

/// Cost volume, readout and triangulation, with no post-filtering.
pub fn estimate_depth(
    left: &ImageGray,
    right: &ImageGray,
    k: &CameraIntrinsics,
    params: &StereoParams,
) -> Result<DepthMap> {
    if left.width != k.width || left.height != k.height {
        return Err(Error::DimensionMismatch(format!(
            "images are {}x{}, calibration is {}x{}",
            left.width, left.height, k.width, k.height
        )));
    }
    let disp = estimate_disparity(left, right, params)?;
    Ok(disparity_to_depth(&disp, k, params.disp_min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(c: usize, r: usize) -> f64 {
        let x = (c as u64).wrapping_mul(2654435761) ^ (r as u64).wrapping_mul(40503);
        ((x.wrapping_mul(0x9E3779B97F4A7C15) >> 40) % 1000) as f64 / 999.0
    }

    fn one_hot(d_max: usize, at: &[usize], hi: f64) -> CostVolume {
        let mut cost = vec![hi; d_max + 1];
        for &d in at {
            cost[d] = 0.0;
        }
        CostVolume::new(1, 1, d_max, cost).unwrap()
    }

    #[test]
    fn identical_images_zero_cost_at_zero_disparity() {
        let img = ImageGray::from_fn(40, 20, texture).unwrap();
        let v = build_cost_volume(&img, &img, 8, 5).unwrap();
        for r in 2..18 {
            for c in 2..38 {
                assert_eq!(v.get(c, r, 0), 0.0);
            }
        }
    }

    #[test]
    fn shifted_pair_zero_cost_at_shift() {
        let left = ImageGray::from_fn(60, 20, texture).unwrap();
        let right = ImageGray::from_fn(60, 20, |c, r| texture(c + 5, r)).unwrap();
        let v = build_cost_volume(&left, &right, 12, 5).unwrap();
        for r in 2..18 {
            for c in 7..58 {
                assert_eq!(v.get(c, r, 5), 0.0);
                let (d, _) = argmin_pixel(v.pixel(c, r));
                assert_eq!(d, 5);
            }
        }
    }

    #[test]
    fn constant_images_interior_zero_cost() {
        let img = ImageGray::new(30, 9, vec![0.4; 270]).unwrap();
        let v = build_cost_volume(&img, &img, 10, 3).unwrap();
        for r in 1..8 {
            for c in 11..29 {
                assert!(v.pixel(c, r).iter().all(|x| *x == 0.0));
                assert_eq!(soft_argmin_pixel(v.pixel(c, r), 1.0), 5.0);
            }
        }
        let amb = ambiguity_mask(&v, 1e-9);
        assert!(amb[4 * 30 + 20]);
        assert!(!amb[4 * 30 + 2]);
    }

    #[test]
    fn out_of_bounds_costs_one() {
        let img = ImageGray::new(10, 1, vec![0.5; 10]).unwrap();
        let v = build_cost_volume(&img, &img, 3, 1).unwrap();
        assert_eq!(v.get(0, 0, 1), 1.0);
        assert_eq!(v.get(2, 0, 3), 1.0);
        assert_eq!(v.get(3, 0, 3), 0.0);
    }

    #[test]
    fn cost_volume_argument_errors() {
        let a = ImageGray::new(10, 2, vec![0.0; 20]).unwrap();
        let b = ImageGray::new(9, 2, vec![0.0; 18]).unwrap();
        assert!(matches!(
            build_cost_volume(&a, &b, 3, 3),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(build_cost_volume(&a, &a, 10, 3).is_err());
        assert!(build_cost_volume(&a, &a, 3, 4).is_err());
    }

    #[test]
    fn soft_argmin_one_hot() {
        let d = soft_argmin(&one_hot(192, &[7], 50.0));
        assert!((d.values()[0] - 7.0).abs() < 1e-3);
    }

    #[test]
    fn soft_argmin_uniform_is_midpoint() {
        let v = CostVolume::new(1, 1, 192, vec![0.3; 193]).unwrap();
        assert_eq!(soft_argmin(&v).values()[0], 96.0);
    }

    #[test]
    fn soft_argmin_two_minima() {
        let d = soft_argmin(&one_hot(192, &[5, 9], 50.0));
        assert!((d.values()[0] - 7.0).abs() < 1e-3);
    }

    #[test]
    fn wta_examples() {
        let d = winner_take_all(&one_hot(20, &[7], 1.0), 0.5);
        assert_eq!(d.get(0, 0), Some(7.0));
        let d = winner_take_all(&one_hot(20, &[5, 9], 1.0), 0.5);
        assert_eq!(d.get(0, 0), Some(5.0));
        let flat = CostVolume::new(1, 1, 4, vec![0.9; 5]).unwrap();
        assert_eq!(winner_take_all(&flat, 0.5).get(0, 0), None);
    }

    #[test]
    fn depth_examples() {
        let k = CameraIntrinsics::new(500.0, 500.0, 1.0, 0.5, 0.01, 3, 1).unwrap();
        let disp = DisparityMap::new(3, 1, vec![10.0, 0.0, 0.4], vec![true; 3]).unwrap();
        let z = disparity_to_depth(&disp, &k, 0.5);
        assert_eq!(z.values(), &[0.5, 0.0, 0.0]);
        let back = disparity_to_depth(&depth_to_disparity(&z, &k), &k, 0.5);
        assert_eq!(back.values()[0], 0.5);
    }

    #[test]
    fn banded_estimate_matches_full_volume() {
        let left = ImageGray::from_fn(48, 37, texture).unwrap();
        let right = ImageGray::from_fn(48, 37, |c, r| texture(c + 3, r)).unwrap();
        for readout in [Readout::SoftArgmin, Readout::WinnerTakeAll] {
            let params = StereoParams {
                d_max: 9,
                window: 3,
                readout,
                cost_scale: 7.0,
                ..StereoParams::default()
            };
            let vol = build_cost_volume(&left, &right, 9, 3).unwrap();
            let full = match readout {
                Readout::SoftArgmin => soft_argmin_scaled(&vol, 7.0),
                Readout::WinnerTakeAll => winner_take_all(&vol, params.ambiguity_threshold),
            };
            let banded = estimate_disparity(&left, &right, &params).unwrap();
            assert_eq!(full, banded);
        }
    }

    #[test]
    fn left_equals_right_gives_invalid_depth() {
        let img = ImageGray::from_fn(64, 16, texture).unwrap();
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 8.0, 0.1, 64, 16).unwrap();
        let params = StereoParams {
            d_max: 16,
            ..StereoParams::default()
        };
        let z = estimate_depth(&img, &img, &k, &params).unwrap();
        // Interior pixels: every disparity > 0 is a mismatch.
        for r in 2..14 {
            for c in 2..62 {
                assert_eq!(z.get(c, r), 0.0, "({c},{r})");
            }
        }
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ImageGray::from_fn(8, 6, texture).unwrap();
        assert_eq!(img.resize(8, 6).unwrap(), img);
        let flat = ImageGray::new(8, 6, vec![0.25; 48]).unwrap();
        let r = flat.resize(4, 3).unwrap();
        assert!(r.values().iter().all(|v| (*v - 0.25).abs() < 1e-15));
    }
}
