//! Batch commands behind the `surgperc` binary.
//!
//! Every command reads a [`PipelineConfig`] JSON file and writes into an
//! output directory: its products, a JSON report tagged with the config hash
//! and seed, and a `pipeline.json` that points at the inputs plus the new
//! products. Feeding that file to the next command chains the stages:
//!
//! ```text
//! simulate -> track -> depth -> fuse -> eval
//! ```
//!
//! Paths inside a config are relative to the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Component, Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::{fuse_depth, prune, reproject_model, subtract_mask, BinaryMask, FusionParams, SurfelModel};
use crate::geometry::{project_feature, CameraIntrinsics, JointState, KinematicChain, LumpedErrorState};
use crate::io::{
    frame_path, list_frames, read_depth, read_disparity, read_json, read_json_frames, read_mask, read_pgm,
    write_bytes, write_depth, write_disparity, write_json, write_mask, write_pgm16, write_ply, EncoderFrame,
    FrameDetections,
};
use crate::metrics::{depth_rmse, feature_error, iou, mean_std, render_tool_mask, valid_fraction, FrameFeatures, ToolGeometry};
use crate::sim::{render_stereo_pair, simulate_depth, simulate_detections, SimScenario};
use crate::stereo::{disparity_to_depth, estimate_disparity, DepthMap, DisparityMap, Readout, StereoParams};
use crate::tracker::{FilterConfig, ToolTracker, TrackFrame};

pub const CONFIG_FILE: &str = "pipeline.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthPaths {
    pub depth: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub poses: Option<PathBuf>,
}

/// Predictions scored by `eval` against [`GroundTruthPaths`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalPaths {
    pub masks: Option<PathBuf>,
    pub depth: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub calibration: Option<PathBuf>,
    pub chain: Option<PathBuf>,
    pub geometry: Option<PathBuf>,
    /// Detection JSON: one array file or a directory of `det_<id>.json`.
    pub detections: Option<PathBuf>,
    /// Encoder JSON: one array file or a directory of `enc_<id>.json`.
    pub encoders: Option<PathBuf>,
    /// Directory of `left_<id>.pgm` / `right_<id>.pgm` rectified pairs.
    pub stereo: Option<PathBuf>,
    /// Directory of `disp_<id>.pfm` maps from an external network. Takes
    /// precedence over `stereo`.
    pub disparity: Option<PathBuf>,
    /// Directory of `depth_<id>.pfm` maps to fuse.
    pub depth: Option<PathBuf>,
    /// Directory of `mask_<id>.pgm` tool masks used by `fuse`.
    pub masks: Option<PathBuf>,
    /// Tracker estimates; `fuse` renders masks from these when `masks` is unset.
    pub estimates: Option<PathBuf>,
    pub ground_truth: GroundTruthPaths,
    pub eval: EvalPaths,
    pub filter: FilterConfig,
    pub stereo_params: StereoParams,
    pub fusion: FusionParams,
    /// `fuse` writes a PLY snapshot every this many frames.
    pub snapshot_every: usize,
    /// Detection coordinates are divided by this on disk.
    pub downsample: f64,
    /// Working resolution for images, depth and masks. `null` keeps the
    /// calibration's resolution.
    pub resize: Option<[usize; 2]>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            calibration: None,
            chain: None,
            geometry: None,
            detections: None,
            encoders: None,
            stereo: None,
            disparity: None,
            depth: None,
            masks: None,
            estimates: None,
            ground_truth: GroundTruthPaths::default(),
            eval: EvalPaths::default(),
            filter: FilterConfig::default(),
            stereo_params: StereoParams::default(),
            fusion: FusionParams::default(),
            snapshot_every: 10,
            downsample: 2.0,
            resize: Some([640, 480]),
        }
    }
}

impl PipelineConfig {
    fn paths_mut(&mut self) -> Vec<(&'static str, &mut Option<PathBuf>)> {
        vec![
            ("calibration", &mut self.calibration),
            ("chain", &mut self.chain),
            ("geometry", &mut self.geometry),
            ("detections", &mut self.detections),
            ("encoders", &mut self.encoders),
            ("stereo", &mut self.stereo),
            ("disparity", &mut self.disparity),
            ("depth", &mut self.depth),
            ("masks", &mut self.masks),
            ("estimates", &mut self.estimates),
            ("ground_truth.depth", &mut self.ground_truth.depth),
            ("ground_truth.masks", &mut self.ground_truth.masks),
            ("ground_truth.features", &mut self.ground_truth.features),
            ("ground_truth.poses", &mut self.ground_truth.poses),
            ("eval.masks", &mut self.eval.masks),
            ("eval.depth", &mut self.eval.depth),
            ("eval.features", &mut self.eval.features),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.stereo_params.validate()?;
        let f = &self.fusion;
        if !(f.tau_z > 0.0 && f.tau_z.is_finite()) {
            return Err(Error::config("fusion.tau_z", "must be finite and > 0"));
        }
        if !f.c_min.is_finite() {
            return Err(Error::config("fusion.c_min", "must be finite"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::config("snapshot_every", "must be at least 1"));
        }
        if !(self.downsample > 0.0 && self.downsample.is_finite()) {
            return Err(Error::config("downsample", "must be finite and > 0"));
        }
        if let Some([w, h]) = self.resize {
            if w == 0 || h == 0 {
                return Err(Error::config("resize", "dimensions must be nonzero"));
            }
        }
        Ok(())
    }

    /// Parses, validates and resolves a config file. Every referenced path
    /// must exist.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = crate::io::read_bytes(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "config is not UTF-8"))?;
        let mut config: PipelineConfig = crate::io::parse_json(path, text)?;
        config.validate()?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let dir = dir.canonicalize().map_err(|e| Error::io(dir, e))?;
        for (field, slot) in config.paths_mut() {
            if let Some(p) = slot.as_mut() {
                let full = dir.join(&*p);
                *p = full.canonicalize().map_err(|_| {
                    Error::config(field, format!("path does not exist: {}", full.display()))
                })?;
            }
        }
        Ok(LoadedConfig {
            config,
            hash: sha256_hex(&bytes),
        })
    }

    /// Applies `resize` to the calibration.
    pub fn working_camera(&self, k: &CameraIntrinsics) -> Result<CameraIntrinsics> {
        match self.resize {
            Some([w, h]) if (w, h) != (k.width, k.height) => k.resized(w, h),
            _ => Ok(*k),
        }
    }

    /// Writes this config to `dir/pipeline.json` with paths relative to `dir`.
    fn write_relative(&self, dir: &Path) -> Result<()> {
        let mut rel = self.clone();
        for (_, slot) in rel.paths_mut() {
            if let Some(p) = slot.as_mut() {
                *p = relative_path(p, dir);
            }
        }
        write_json(&dir.join(CONFIG_FILE), &rel)
    }
}

/// A resolved config with absolute paths and the SHA-256 of its file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `target` relative to `base`; both absolute.
fn relative_path(target: &Path, base: &Path) -> PathBuf {
    let t: Vec<Component> = target.components().collect();
    let b: Vec<Component> = base.components().collect();
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return target.to_path_buf();
    }
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &t[common..] {
        out.push(c);
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    out
}

fn required<'a>(field: &str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::config(field, "required by this command"))
}

fn prepare_out(out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    out.canonicalize().map_err(|e| Error::io(out, e))
}

/// Provenance written into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame_id: u64,
    pub lumped: LumpedErrorState,
    pub theta: JointState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub frame_id: u64,
    pub features: FrameFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub frame_id: u64,
    pub lumped: LumpedErrorState,
    pub effective_count: f64,
    pub resampled: bool,
    pub degenerate: bool,
    pub no_detections: bool,
}

/// Mean and sample standard deviation, `None` when there are no samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(values);
        Some(Stat {
            mean,
            std,
            n: values.len(),
        })
    }
}

/// One row of a `metrics.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub frame_id: u64,
    pub metric: String,
    pub value: f64,
}

fn record(out: &mut Vec<MetricRecord>, frame_id: u64, metric: &str, value: Option<f64>) {
    if let Some(value) = value {
        out.push(MetricRecord {
            frame_id,
            metric: metric.into(),
            value,
        });
    }
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// simulate

/// Depth of the tool surface relative to the tissue behind it, used to
/// paint an occluder into the observed depth maps.
const TOOL_DEPTH_RATIO: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub run: RunInfo,
    pub frames: usize,
    pub stereo_frames: Vec<u64>,
}

/// Writes a synthetic sequence: detections, encoder readings, stereo pairs
/// and observed depth every `stereo_stride` frames, and ground truth
/// (tissue depth, tool masks, poses, feature locations).
pub fn run_sim(scenario: &SimScenario, out: &Path) -> Result<SimReport> {
    scenario.validate()?;
    if scenario.frames == 0 {
        return Err(Error::config("frames", "must be at least 1"));
    }
    let out = prepare_out(out)?;
    let scenario_json = serde_json::to_vec_pretty(scenario).map_err(|e| Error::format(&out, e.to_string()))?;
    let run = RunInfo {
        command: "simulate".into(),
        config_hash: sha256_hex(&scenario_json),
        seed: scenario.seed,
    };
    let mut scenario_file = scenario_json;
    scenario_file.push(b'\n');
    write_bytes(&out.join("scenario.json"), &scenario_file)?;
    write_json(&out.join("calibration.json"), &scenario.camera)?;
    write_json(&out.join("chain.json"), &scenario.chain)?;
    write_json(&out.join("geometry.json"), &scenario.geometry)?;

    let defaults = PipelineConfig::default();
    let downsample = defaults.downsample;
    let stride = scenario.stereo_stride;
    let k = &scenario.camera;

    (0..scenario.frames).into_par_iter().try_for_each(|f| -> Result<()> {
        let id = f as u64;
        let dets = simulate_detections(scenario, f)?;
        write_json(
            &frame_path(&out.join("detections"), "det", id, "json"),
            &FrameDetections::from_detections(id, &dets, downsample),
        )?;
        write_json(
            &frame_path(&out.join("encoders"), "enc", id, "json"),
            &EncoderFrame {
                frame_id: id,
                theta: scenario.encoder_readings(f).theta().to_vec(),
            },
        )?;
        let mask = scenario.true_mask(f)?;
        write_mask(&frame_path(&out.join("gt/masks"), "mask", id, "pgm"), &mask)?;
        if f % stride == 0 {
            let tissue = simulate_depth(scenario, f)?;
            write_depth(&frame_path(&out.join("gt/depth"), "depth", id, "pfm"), &tissue)?;
            let observed: Vec<f64> = tissue
                .values()
                .iter()
                .zip(mask.bits())
                .map(|(z, m)| if *m { z * TOOL_DEPTH_RATIO } else { *z })
                .collect();
            let observed = DepthMap::new(k.width, k.height, observed)?;
            write_depth(&frame_path(&out.join("depth"), "depth", id, "pfm"), &observed)?;
            let (l, r) = render_stereo_pair(scenario, f, k)?;
            write_pgm16(&frame_path(&out.join("stereo"), "left", id, "pgm"), &l)?;
            write_pgm16(&frame_path(&out.join("stereo"), "right", id, "pgm"), &r)?;
        }
        Ok(())
    })?;

    let poses: Vec<PoseRecord> = (0..scenario.frames)
        .map(|f| PoseRecord {
            frame_id: f as u64,
            lumped: scenario.true_lumped(f),
            theta: scenario.true_joints(f),
        })
        .collect();
    write_json(&out.join("gt/poses.json"), &poses)?;
    let features: Vec<FeatureFrame> = (0..scenario.frames)
        .map(|f| FeatureFrame {
            frame_id: f as u64,
            features: scenario.true_features(f),
        })
        .collect();
    write_json(&out.join("gt/features.json"), &features)?;

    let rel = |s: &str| Some(PathBuf::from(s));
    let mut config = PipelineConfig {
        calibration: rel("calibration.json"),
        chain: rel("chain.json"),
        geometry: rel("geometry.json"),
        detections: rel("detections"),
        encoders: rel("encoders"),
        stereo: rel("stereo"),
        depth: rel("depth"),
        ground_truth: GroundTruthPaths {
            depth: rel("gt/depth"),
            masks: rel("gt/masks"),
            features: rel("gt/features.json"),
            poses: rel("gt/poses.json"),
        },
        ..defaults
    };
    config.filter.rng_seed = scenario.seed;
    // The default association tolerance is for a tissue surface about
    // 0.16 m away; keep the same ratio for scaled scenes.
    config.fusion.tau_z = FusionParams::default().tau_z * scenario.tissue.z0 / 0.16;
    config.resize = Some([k.width, k.height]);
    write_json(&out.join(CONFIG_FILE), &config)?;

    let report = SimReport {
        run,
        frames: scenario.frames,
        stereo_frames: (0..scenario.frames).step_by(stride).map(|f| f as u64).collect(),
    };
    write_json(&out.join("sim_report.json"), &report)?;
    info!("simulated {} frames into {}", scenario.frames, out.display());
    Ok(report)
}

// ---------------------------------------------------------------------------
// track

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrameReport {
    pub frame_id: u64,
    pub effective_count: f64,
    pub resampled: bool,
    pub degenerate: bool,
    pub no_detections: bool,
    pub iou: Option<f64>,
    pub feature_error_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub run: RunInfo,
    pub frames: Vec<TrackFrameReport>,
    pub iou: Option<Stat>,
    pub feature_error_px: Option<Stat>,
    /// Mean error per feature id over the sequence.
    pub per_feature_error_px: BTreeMap<String, f64>,
}

fn load_feature_frames(path: &Path) -> Result<BTreeMap<u64, FrameFeatures>> {
    let frames: Vec<FeatureFrame> = read_json(path)?;
    Ok(frames.into_iter().map(|f| (f.frame_id, f.features)).collect())
}

fn frame_feature_error(pred: &FrameFeatures, gt: &FrameFeatures) -> Option<f64> {
    let errs: Vec<f64> = pred
        .iter()
        .filter_map(|(id, p)| gt.get(id).map(|g| (p - g).norm()))
        .collect();
    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Per-feature mean error over frames present in both sequences.
fn per_feature_errors(
    pred: &BTreeMap<u64, FrameFeatures>,
    gt: &BTreeMap<u64, FrameFeatures>,
) -> BTreeMap<String, f64> {
    let (p, g): (Vec<FrameFeatures>, Vec<FrameFeatures>) = pred
        .iter()
        .filter_map(|(id, f)| gt.get(id).map(|t| (f.clone(), t.clone())))
        .unzip();
    let ids: BTreeSet<&String> = g.iter().flat_map(|f| f.keys()).collect();
    ids.into_iter()
        .filter_map(|id| feature_error(&p, &g, id).ok().map(|e| (id.clone(), e)))
        .collect()
}

/// Runs the particle filter over the encoder sequence.
pub fn run_track(cfg: &LoadedConfig, out: &Path, seed: Option<u64>) -> Result<TrackReport> {
    let c = &cfg.config;
    let out = prepare_out(out)?;
    let mut filter = c.filter.clone();
    if let Some(s) = seed {
        filter.rng_seed = s;
    }
    let run = RunInfo {
        command: "track".into(),
        config_hash: cfg.hash.clone(),
        seed: filter.rng_seed,
    };
    let k: CameraIntrinsics = read_json(required("calibration", &c.calibration)?)?;
    let kw = c.working_camera(&k)?;
    let chain: KinematicChain = read_json(required("chain", &c.chain)?)?;
    let geometry: Option<ToolGeometry> = c.geometry.as_deref().map(read_json).transpose()?;
    let encoders: Vec<EncoderFrame> = read_json_frames(required("encoders", &c.encoders)?, "enc")?;
    let mut detections: BTreeMap<u64, FrameDetections> = match &c.detections {
        Some(p) => read_json_frames::<FrameDetections>(p, "det")?
            .into_iter()
            .map(|f| (f.frame_id, f))
            .collect(),
        None => {
            warn!("no detections configured; the filter will only diffuse");
            BTreeMap::new()
        }
    };
    let enc_ids: BTreeSet<u64> = encoders.iter().map(|e| e.frame_id).collect();
    if enc_ids.len() != encoders.len() {
        return Err(Error::invalid("duplicate encoder frame ids"));
    }
    if c.detections.is_some() && detections.len() != encoders.len() {
        return Err(Error::invalid(format!(
            "{} detection frames vs {} encoder frames",
            detections.len(),
            encoders.len()
        )));
    }
    if let Some(id) = detections.keys().find(|id| !enc_ids.contains(id)) {
        return Err(Error::invalid(format!("detections for frame {id} have no encoder reading")));
    }
    let gt_features = c.ground_truth.features.as_deref().map(load_feature_frames).transpose()?;
    let gt_masks = c.ground_truth.masks.as_deref();

    let mut encoders = encoders;
    encoders.sort_by_key(|e| e.frame_id);
    let mut tracker = ToolTracker::new(filter)?;
    let mut estimates = Vec::with_capacity(encoders.len());
    let mut features = Vec::with_capacity(encoders.len());
    let mut frames = Vec::with_capacity(encoders.len());
    let mut pred_features = BTreeMap::new();
    for enc in &encoders {
        let joints = JointState::new(enc.theta.clone())?;
        let dets = match detections.remove(&enc.frame_id) {
            Some(d) => d.to_detections(c.downsample)?,
            None => Vec::new(),
        };
        let frame = TrackFrame {
            frame_id: enc.frame_id,
            detections: dets,
            joints: joints.clone(),
        };
        let rep = tracker.step(&frame, &chain, &k)?;
        let est = rep.estimate;

        let projected: FrameFeatures = chain
            .features()
            .iter()
            .filter_map(|f| {
                let uv = project_feature(&k, &chain, &joints, &est, &f.id).ok()?;
                k.pixel_of(&uv).map(|_| (f.id.clone(), uv))
            })
            .collect();
        let fe = gt_features
            .as_ref()
            .and_then(|g| g.get(&enc.frame_id))
            .and_then(|g| frame_feature_error(&projected, g));

        let mut frame_iou = None;
        if let Some(geom) = &geometry {
            let mask = render_tool_mask(geom, &chain, &joints, &est, &kw)?;
            write_mask(&frame_path(&out.join("masks"), "mask", enc.frame_id, "pgm"), &mask)?;
            if let Some(dir) = gt_masks {
                let p = frame_path(dir, "mask", enc.frame_id, "pgm");
                if p.exists() {
                    frame_iou = Some(iou(&mask, &read_mask(&p)?)?.value);
                }
            }
        }
        frames.push(TrackFrameReport {
            frame_id: enc.frame_id,
            effective_count: rep.effective_count,
            resampled: rep.resampled,
            degenerate: rep.degenerate,
            no_detections: rep.no_detections,
            iou: frame_iou,
            feature_error_px: fe,
        });
        estimates.push(EstimateRecord {
            frame_id: enc.frame_id,
            lumped: est,
            effective_count: rep.effective_count,
            resampled: rep.resampled,
            degenerate: rep.degenerate,
            no_detections: rep.no_detections,
        });
        pred_features.insert(enc.frame_id, projected.clone());
        features.push(FeatureFrame {
            frame_id: enc.frame_id,
            features: projected,
        });
    }
    write_json(&out.join("estimates.json"), &estimates)?;
    write_json(&out.join("features.json"), &features)?;

    let ious: Vec<f64> = frames.iter().filter_map(|f| f.iou).collect();
    let fes: Vec<f64> = frames.iter().filter_map(|f| f.feature_error_px).collect();
    let report = TrackReport {
        run,
        iou: Stat::of(&ious),
        feature_error_px: Stat::of(&fes),
        per_feature_error_px: gt_features
            .as_ref()
            .map(|g| per_feature_errors(&pred_features, g))
            .unwrap_or_default(),
        frames,
    };
    write_json(&out.join("track_report.json"), &report)?;
    let mut records = Vec::new();
    for f in &report.frames {
        record(&mut records, f.frame_id, "iou", f.iou);
        record(&mut records, f.frame_id, "feature_error_px", f.feature_error_px);
    }
    write_json(&out.join("metrics.json"), &records)?;

    let mut next = c.clone();
    next.filter.rng_seed = report.run.seed;
    next.estimates = Some(out.join("estimates.json"));
    next.eval.features = Some(out.join("features.json"));
    if geometry.is_some() {
        next.masks = Some(out.join("masks"));
        next.eval.masks = Some(out.join("masks"));
    }
    next.write_relative(&out)?;
    info!("tracked {} frames", report.frames.len());
    Ok(report)
}

// ---------------------------------------------------------------------------
// depth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthFrameReport {
    pub frame_id: u64,
    pub rmse: Option<f64>,
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub run: RunInfo,
    pub source: String,
    pub frames: Vec<DepthFrameReport>,
    pub rmse: Option<Stat>,
    pub valid_fraction: Option<Stat>,
}

/// Rounds disparities to the `f32` values a PFM file would hold, so maps
/// computed here and maps read back from disk triangulate identically.
pub fn quantize_disparity(disp: &DisparityMap) -> Result<DisparityMap> {
    DisparityMap::new(
        disp.width(),
        disp.height(),
        disp.values().iter().map(|d| f64::from(*d as f32)).collect(),
        disp.validity().to_vec(),
    )
}

fn readout_name(r: Readout) -> &'static str {
    match r {
        Readout::SoftArgmin => "soft_argmin",
        Readout::WinnerTakeAll => "winner_take_all",
    }
}

fn depth_records(frames: &[DepthFrameReport]) -> Vec<MetricRecord> {
    let mut records = Vec::new();
    for f in frames {
        record(&mut records, f.frame_id, "rmse", f.rmse);
        record(&mut records, f.frame_id, "valid_fraction", Some(f.valid_fraction));
    }
    records
}

/// Stereo depth for every pair (or ingested disparity map) in the config.
pub fn run_depth(cfg: &LoadedConfig, out: &Path, seed: Option<u64>) -> Result<DepthReport> {
    let c = &cfg.config;
    let out = prepare_out(out)?;
    let run = RunInfo {
        command: "depth".into(),
        config_hash: cfg.hash.clone(),
        seed: seed.unwrap_or(c.filter.rng_seed),
    };
    let k: CameraIntrinsics = read_json(required("calibration", &c.calibration)?)?;
    let kw = c.working_camera(&k)?;
    let params = &c.stereo_params;
    let (source, ids) = match (&c.disparity, &c.stereo) {
        (Some(dir), _) => ("disparity", list_frames(dir, "disp", "pfm")?),
        (None, Some(dir)) => ("stereo", list_frames(dir, "left", "pgm")?),
        (None, None) => return Err(Error::config("stereo", "stereo or disparity is required by depth")),
    };
    if ids.is_empty() {
        warn!("no input frames found");
    }

    let mut frames = Vec::with_capacity(ids.len());
    for (id, path) in ids {
        let disp = if source == "disparity" {
            let d = read_disparity(&path)?;
            if (d.width(), d.height()) != (kw.width, kw.height) {
                return Err(Error::DimensionMismatch(format!(
                    "{}: disparity is {}x{}, working resolution is {}x{}",
                    path.display(),
                    d.width(),
                    d.height(),
                    kw.width,
                    kw.height
                )));
            }
            d
        } else {
            let right_path = frame_path(required("stereo", &c.stereo)?, "right", id, "pgm");
            let mut left = read_pgm(&path)?;
            let mut right = read_pgm(&right_path)?;
            if (left.width(), left.height()) != (kw.width, kw.height) {
                left = left.resize(kw.width, kw.height)?;
            }
            if (right.width(), right.height()) != (kw.width, kw.height) {
                right = right.resize(kw.width, kw.height)?;
            }
            let d = quantize_disparity(&estimate_disparity(&left, &right, params)?)?;
            write_disparity(&frame_path(&out.join("disparity"), "disp", id, "pfm"), &d)?;
            d
        };
        let depth = disparity_to_depth(&disp, &kw, params.disp_min);
        write_depth(&frame_path(&out.join("depth"), "depth", id, "pfm"), &depth)?;
        let rmse = match &c.ground_truth.depth {
            Some(dir) => {
                let p = frame_path(dir, "depth", id, "pfm");
                if p.exists() {
                    match depth_rmse(&depth, &read_depth(&p)?) {
                        Ok(v) => Some(v),
                        Err(Error::NoOverlap) => None,
                        Err(e) => return Err(e),
                    }
                } else {
                    None
                }
            }
            None => None,
        };
        frames.push(DepthFrameReport {
            frame_id: id,
            rmse,
            valid_fraction: valid_fraction(&depth),
        });
        info!("depth frame {id}");
    }

    let mut csv = String::from("frame_id,rmse,perc_valid\n");
    for f in &frames {
        csv.push_str(&format!("{},{},{}\n", f.frame_id, csv_opt(f.rmse), 100.0 * f.valid_fraction));
    }
    write_bytes(&out.join("depth_metrics.csv"), csv.as_bytes())?;

    let rmses: Vec<f64> = frames.iter().filter_map(|f| f.rmse).collect();
    let valids: Vec<f64> = frames.iter().map(|f| f.valid_fraction).collect();
    let report = DepthReport {
        run,
        source: source.into(),
        rmse: Stat::of(&rmses),
        valid_fraction: Stat::of(&valids),
        frames,
    };
    let method = if source == "disparity" {
        "external"
    } else {
        readout_name(params.readout)
    };
    let summary = format!(
        "method,rmse_mean,rmse_std,perc_valid_mean,perc_valid_std\n{method},{},{},{},{}\n",
        csv_opt(report.rmse.map(|s| s.mean)),
        csv_opt(report.rmse.map(|s| s.std)),
        csv_opt(report.valid_fraction.map(|s| 100.0 * s.mean)),
        csv_opt(report.valid_fraction.map(|s| 100.0 * s.std)),
    );
    write_bytes(&out.join("depth_summary.csv"), summary.as_bytes())?;
    write_json(&out.join("depth_report.json"), &report)?;
    write_json(&out.join("metrics.json"), &depth_records(&report.frames))?;

    let mut next = c.clone();
    next.depth = Some(out.join("depth"));
    next.eval.depth = Some(out.join("depth"));
    next.write_relative(&out)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// fuse

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseFrameReport {
    pub frame_id: u64,
    pub surfels: usize,
    pub created: usize,
    pub updated: usize,
    /// Pixels invalidated by the dilated tool mask.
    pub masked_pixels: usize,
    /// RMSE of the reprojected model against ground-truth depth.
    pub reprojection_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseReport {
    pub run: RunInfo,
    pub mask_source: String,
    pub frames: Vec<FuseFrameReport>,
    pub surfels: usize,
    pub snapshots: Vec<String>,
}

#[allow(clippy::large_enum_variant)]
enum MaskSource {
    Files(PathBuf),
    Render {
        chain: KinematicChain,
        geometry: ToolGeometry,
        poses: BTreeMap<u64, (LumpedErrorState, JointState)>,
    },
    None,
}

impl MaskSource {
    fn from_config(c: &PipelineConfig) -> Result<Self> {
        if let Some(dir) = &c.masks {
            return Ok(MaskSource::Files(dir.clone()));
        }
        if let (Some(est), Some(enc), Some(chain), Some(geom)) = (&c.estimates, &c.encoders, &c.chain, &c.geometry) {
            let estimates: Vec<EstimateRecord> = read_json(est)?;
            let encoders: BTreeMap<u64, Vec<f64>> = read_json_frames::<EncoderFrame>(enc, "enc")?
                .into_iter()
                .map(|e| (e.frame_id, e.theta))
                .collect();
            let mut poses = BTreeMap::new();
            for e in estimates {
                if let Some(theta) = encoders.get(&e.frame_id) {
                    poses.insert(e.frame_id, (e.lumped, JointState::new(theta.clone())?));
                }
            }
            return Ok(MaskSource::Render {
                chain: read_json(chain)?,
                geometry: read_json(geom)?,
                poses,
            });
        }
        warn!("no tool masks or estimates configured; fusing unmasked depth");
        Ok(MaskSource::None)
    }

    fn name(&self) -> &'static str {
        match self {
            MaskSource::Files(_) => "files",
            MaskSource::Render { .. } => "rendered",
            MaskSource::None => "none",
        }
    }

    fn mask(&self, id: u64, k: &CameraIntrinsics) -> Result<BinaryMask> {
        match self {
            MaskSource::Files(dir) => {
                let p = frame_path(dir, "mask", id, "pgm");
                if !p.exists() {
                    return Err(Error::invalid(format!("no tool mask for frame {id} ({})", p.display())));
                }
                read_mask(&p)
            }
            MaskSource::Render { chain, geometry, poses } => {
                let (lumped, joints) = poses
                    .get(&id)
                    .ok_or_else(|| Error::invalid(format!("no pose estimate for frame {id}")))?;
                render_tool_mask(geometry, chain, joints, lumped, k)
            }
            MaskSource::None => Ok(BinaryMask::empty(k.width, k.height)),
        }
    }
}

/// Fuses the configured depth sequence with tool regions removed.
pub fn run_fuse(cfg: &LoadedConfig, out: &Path, seed: Option<u64>) -> Result<FuseReport> {
    let c = &cfg.config;
    let out = prepare_out(out)?;
    let run = RunInfo {
        command: "fuse".into(),
        config_hash: cfg.hash.clone(),
        seed: seed.unwrap_or(c.filter.rng_seed),
    };
    let k: CameraIntrinsics = read_json(required("calibration", &c.calibration)?)?;
    let kw = c.working_camera(&k)?;
    let ids = list_frames(required("depth", &c.depth)?, "depth", "pfm")?;
    let masks = MaskSource::from_config(c)?;
    if ids.is_empty() {
        warn!("no depth frames; writing an empty model");
    }

    let mut model = SurfelModel::new();
    let mut frames = Vec::with_capacity(ids.len());
    let mut snapshots = Vec::new();
    for (i, (id, path)) in ids.iter().enumerate() {
        let depth = read_depth(path)?;
        if (depth.width(), depth.height()) != (kw.width, kw.height) {
            return Err(Error::DimensionMismatch(format!(
                "{}: depth is {}x{}, working resolution is {}x{}",
                path.display(),
                depth.width(),
                depth.height(),
                kw.width,
                kw.height
            )));
        }
        let mask = masks.mask(*id, &kw)?;
        let masked = subtract_mask(&depth, &mask, c.fusion.dilation_radius)?;
        let (fused, rep) = fuse_depth(&model, &masked, &kw, &c.fusion)?;
        model = prune(&fused, &c.fusion);

        let reprojection_rmse = match &c.ground_truth.depth {
            Some(dir) => {
                let p = frame_path(dir, "depth", *id, "pfm");
                if p.exists() {
                    depth_rmse(&reproject_model(&model, &kw), &read_depth(&p)?).ok()
                } else {
                    None
                }
            }
            None => None,
        };
        frames.push(FuseFrameReport {
            frame_id: *id,
            surfels: model.len(),
            created: rep.created,
            updated: rep.updated,
            masked_pixels: depth.valid_count() - masked.valid_count(),
            reprojection_rmse,
        });
        if (i + 1) % c.snapshot_every == 0 {
            let name = format!("model/model_{id:06}.ply");
            write_ply(&out.join(&name), &model)?;
            snapshots.push(name);
        }
    }
    write_ply(&out.join("model.ply"), &model)?;
    let report = FuseReport {
        run,
        mask_source: masks.name().into(),
        frames,
        surfels: model.len(),
        snapshots,
    };
    write_json(&out.join("fuse_report.json"), &report)?;
    c.write_relative(&out)?;
    info!("fused {} frames into {} surfels", report.frames.len(), report.surfels);
    Ok(report)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEval {
    pub frames: Vec<(u64, f64)>,
    pub iou: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthEval {
    pub frames: Vec<DepthFrameReport>,
    pub rmse: Option<Stat>,
    pub valid_fraction: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEval {
    pub per_feature_px: BTreeMap<String, f64>,
    pub per_frame_px: Vec<(u64, f64)>,
    pub per_frame: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run: RunInfo,
    pub masks: Option<MaskEval>,
    pub depth: Option<DepthEval>,
    pub features: Option<FeatureEval>,
}

/// Frame ids present in both directories.
fn paired_frames(pred: &Path, gt: &Path, prefix: &str, ext: &str) -> Result<Vec<(u64, PathBuf, PathBuf)>> {
    let gt: BTreeMap<u64, PathBuf> = list_frames(gt, prefix, ext)?.into_iter().collect();
    Ok(list_frames(pred, prefix, ext)?
        .into_iter()
        .filter_map(|(id, p)| gt.get(&id).map(|g| (id, p, g.clone())))
        .collect())
}

/// Scores `eval.*` predictions against `ground_truth.*`.
pub fn run_eval(cfg: &LoadedConfig, out: &Path, seed: Option<u64>) -> Result<EvalReport> {
    let c = &cfg.config;
    let out = prepare_out(out)?;
    let run = RunInfo {
        command: "eval".into(),
        config_hash: cfg.hash.clone(),
        seed: seed.unwrap_or(c.filter.rng_seed),
    };
    let gt = &c.ground_truth;
    let mut report = EvalReport {
        run,
        masks: None,
        depth: None,
        features: None,
    };

    if let (Some(pred), Some(truth)) = (&c.eval.masks, &gt.masks) {
        let pairs = paired_frames(pred, truth, "mask", "pgm")?;
        let frames = pairs
            .par_iter()
            .map(|(id, p, g)| Ok((*id, iou(&read_mask(p)?, &read_mask(g)?)?.value)))
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = frames.iter().map(|f| f.1).collect();
        report.masks = Some(MaskEval {
            iou: Stat::of(&values),
            frames,
        });
    }
    if let (Some(pred), Some(truth)) = (&c.eval.depth, &gt.depth) {
        let mut frames = Vec::new();
        for (id, p, g) in paired_frames(pred, truth, "depth", "pfm")? {
            let est = read_depth(&p)?;
            let rmse = match depth_rmse(&est, &read_depth(&g)?) {
                Ok(v) => Some(v),
                Err(Error::NoOverlap) => None,
                Err(e) => return Err(e),
            };
            frames.push(DepthFrameReport {
                frame_id: id,
                rmse,
                valid_fraction: valid_fraction(&est),
            });
        }
        let rmses: Vec<f64> = frames.iter().filter_map(|f| f.rmse).collect();
        let valids: Vec<f64> = frames.iter().map(|f| f.valid_fraction).collect();
        report.depth = Some(DepthEval {
            rmse: Stat::of(&rmses),
            valid_fraction: Stat::of(&valids),
            frames,
        });
    }
    if let (Some(pred), Some(truth)) = (&c.eval.features, &gt.features) {
        let p = load_feature_frames(pred)?;
        let g = load_feature_frames(truth)?;
        let per_frame_px: Vec<(u64, f64)> = p
            .iter()
            .filter_map(|(id, f)| g.get(id).and_then(|t| frame_feature_error(f, t)).map(|e| (*id, e)))
            .collect();
        let values: Vec<f64> = per_frame_px.iter().map(|f| f.1).collect();
        report.features = Some(FeatureEval {
            per_feature_px: per_feature_errors(&p, &g),
            per_frame: Stat::of(&values),
            per_frame_px,
        });
    }
    if report.masks.is_none() && report.depth.is_none() && report.features.is_none() {
        return Err(Error::config(
            "eval",
            "no prediction/ground-truth pair configured (eval.masks, eval.depth, eval.features)",
        ));
    }

    let mut csv = String::from("metric,mean,std,n\n");
    let mut row = |name: &str, s: Option<Stat>, scale: f64| {
        csv.push_str(&format!(
            "{name},{},{},{}\n",
            csv_opt(s.map(|s| scale * s.mean)),
            csv_opt(s.map(|s| scale * s.std)),
            s.map_or(0, |s| s.n)
        ));
    };
    if let Some(m) = &report.masks {
        row("iou", m.iou, 1.0);
    }
    if let Some(d) = &report.depth {
        row("rmse", d.rmse, 1.0);
        row("perc_valid", d.valid_fraction, 100.0);
    }
    if let Some(f) = &report.features {
        row("feature_error_px", f.per_frame, 1.0);
    }
    write_bytes(&out.join("eval_summary.csv"), csv.as_bytes())?;
    write_json(&out.join("eval_report.json"), &report)?;
    let mut records = Vec::new();
    if let Some(m) = &report.masks {
        for (id, v) in &m.frames {
            record(&mut records, *id, "iou", Some(*v));
        }
    }
    if let Some(d) = &report.depth {
        records.extend(depth_records(&d.frames));
    }
    if let Some(f) = &report.features {
        for (id, v) in &f.per_frame_px {
            record(&mut records, *id, "feature_error_px", Some(*v));
        }
    }
    write_json(&out.join("metrics.json"), &records)?;
    Ok(report)
}
