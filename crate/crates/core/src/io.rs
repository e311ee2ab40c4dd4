//! File formats: PFM depth/disparity, PGM/PBM images and masks, ASCII PLY
//! point clouds, and the JSON records for detections and encoder readings.
//!
//! Frame sequences are stored one file per frame as `<prefix>_<id:06>.<ext>`
//! inside a directory.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{BinaryMask, SurfelModel};
use crate::stereo::{DepthMap, DisparityMap, ImageGray};
use crate::tracker::FeatureDetection;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes`, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(path, &text)
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn frame_path(dir: &Path, prefix: &str, frame: u64, ext: &str) -> PathBuf {
    dir.join(format!("{prefix}_{frame:06}.{ext}"))
}

/// Files named `<prefix>_<digits>.<ext>` in `dir`, sorted by frame id.
pub fn list_frames(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<(u64, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(stem) = name
            .strip_prefix(prefix)
            .and_then(|s| s.strip_prefix('_'))
            .and_then(|s| s.strip_suffix(ext))
            .and_then(|s| s.strip_suffix('.'))
        else {
            continue;
        };
        if stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let id = stem
            .parse()
            .map_err(|_| Error::format(entry.path(), "frame id out of range"))?;
        out.push((id, entry.path()));
    }
    out.sort();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Netpbm-style headers

/// Cursor over a Netpbm/PFM header: whitespace-separated tokens with `#`
/// comments, followed by a single whitespace byte before the raster.
struct Header<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self { path, bytes, pos: 0 }
    }

    fn token(&mut self) -> Result<&'a str> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|b| *b != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::format(self.path, "truncated header")),
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(self.path, "non-ASCII header"))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::format(self.path, format!("bad {what} `{tok}`")))
    }

    /// Consumes the single whitespace byte that ends the header.
    fn raster(mut self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => self.pos += 1,
            _ => return Err(Error::format(self.path, "missing raster")),
        }
        Ok(&self.bytes[self.pos..])
    }

    fn ascii_values(mut self, n: usize, what: &str) -> Result<Vec<u32>> {
        (0..n).map(|_| self.number::<u32>(what)).collect()
    }
}

fn dims(path: &Path, h: &mut Header) -> Result<(usize, usize)> {
    let w: usize = h.number("width")?;
    let ht: usize = h.number("height")?;
    if w == 0 || ht == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    Ok((w, ht))
}

// ---------------------------------------------------------------------------
// PFM

/// Grayscale PFM. Rows are stored bottom to top; the header scale is `-1.0`
/// (little-endian).
pub fn write_pfm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {width}x{height} PFM",
            values.len()
        )));
    }
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for r in (0..height).rev() {
        for v in &values[r * width..(r + 1) * width] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

/// Reads a grayscale PFM in either byte order. Returns top-to-bottom rows.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = read_bytes(path)?;
    let mut h = Header::new(path, &bytes);
    match h.token()? {
        "Pf" => {}
        "PF" => return Err(Error::format(path, "color PFM is not supported")),
        other => return Err(Error::format(path, format!("bad PFM magic `{other}`"))),
    }
    let (w, ht) = dims(path, &mut h)?;
    let scale: f64 = h.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(path, "PFM scale must be nonzero"));
    }
    let little = scale < 0.0;
    let raster = h.raster()?;
    if raster.len() != w * ht * 4 {
        return Err(Error::format(
            path,
            format!("expected {} raster bytes, found {}", w * ht * 4, raster.len()),
        ));
    }
    let mut values = vec![0.0; w * ht];
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, c) = (i / w, i % w);
        values[(ht - 1 - file_row) * w + c] = f64::from(v);
    }
    Ok((w, ht, values))
}

/// Invalid pixels are written as `0`.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    write_pfm(path, depth.width(), depth.height(), depth.values())
}

/// Non-finite, negative and zero entries become invalid.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let (w, h, mut v) = read_pfm(path)?;
    for z in &mut v {
        if !(z.is_finite() && *z > 0.0) {
            *z = 0.0;
        }
    }
    DepthMap::new(w, h, v)
}

/// Invalid pixels are written as `+inf`.
pub fn write_disparity(path: &Path, disp: &DisparityMap) -> Result<()> {
    let v: Vec<f64> = disp
        .values()
        .iter()
        .zip(disp.validity())
        .map(|(d, ok)| if *ok { *d } else { f64::INFINITY })
        .collect();
    write_pfm(path, disp.width(), disp.height(), &v)
}

pub fn read_disparity(path: &Path) -> Result<DisparityMap> {
    let (w, h, v) = read_pfm(path)?;
    DisparityMap::from_values(w, h, v)
}

// ---------------------------------------------------------------------------
// PGM / PBM

/// Reads a P2/P5 graymap, scaled to `[0, 1]` by its maxval.
pub fn read_pgm(path: &Path) -> Result<ImageGray> {
    let bytes = read_bytes(path)?;
    let mut h = Header::new(path, &bytes);
    let magic = h.token()?;
    if magic != "P2" && magic != "P5" {
        return Err(Error::format(path, format!("bad PGM magic `{magic}`")));
    }
    let (w, ht) = dims(path, &mut h)?;
    let maxval: u32 = h.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("maxval {maxval} out of range")));
    }
    let raw = if magic == "P2" {
        h.ascii_values(w * ht, "sample")?
    } else {
        binary_samples(path, h.raster()?, w * ht, maxval)?
    };
    if raw.iter().any(|v| *v > maxval) {
        return Err(Error::format(path, "sample exceeds maxval"));
    }
    let m = f64::from(maxval);
    ImageGray::new(w, ht, raw.into_iter().map(|v| f64::from(v) / m).collect())
}

fn binary_samples(path: &Path, raster: &[u8], n: usize, maxval: u32) -> Result<Vec<u32>> {
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    if raster.len() != need {
        return Err(Error::format(
            path,
            format!("expected {need} raster bytes, found {}", raster.len()),
        ));
    }
    Ok(if wide {
        raster
            .chunks_exact(2)
            .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    } else {
        raster.iter().map(|b| u32::from(*b)).collect()
    })
}

/// Binary 16-bit PGM; values are clamped to `[0, 1]` and rounded.
pub fn write_pgm16(path: &Path, image: &ImageGray) -> Result<()> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for v in image.values() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    write_bytes(path, &out)
}

/// Binary 8-bit PGM with `0` / `255` samples.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|b| if *b { 255u8 } else { 0 }));
    write_bytes(path, &out)
}

/// Reads a mask from PGM (nonzero is set) or PBM (1 is set).
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let bytes = read_bytes(path)?;
    let mut h = Header::new(path, &bytes);
    let magic = h.token()?;
    let (w, ht) = match magic {
        "P1" | "P2" | "P4" | "P5" => dims(path, &mut h)?,
        other => return Err(Error::format(path, format!("bad mask magic `{other}`"))),
    };
    let bits: Vec<bool> = match magic {
        "P1" => h
            .ascii_values(w * ht, "bit")?
            .into_iter()
            .map(|v| v != 0)
            .collect(),
        "P4" => {
            let raster = h.raster()?;
            let stride = w.div_ceil(8);
            if raster.len() != stride * ht {
                return Err(Error::format(path, "PBM raster size mismatch"));
            }
            (0..ht)
                .flat_map(|r| (0..w).map(move |c| (r, c)))
                .map(|(r, c)| raster[r * stride + c / 8] & (0x80 >> (c % 8)) != 0)
                .collect()
        }
        _ => {
            let maxval: u32 = h.number("maxval")?;
            if maxval == 0 || maxval > 65535 {
                return Err(Error::format(path, format!("maxval {maxval} out of range")));
            }
            let raw = if magic == "P2" {
                h.ascii_values(w * ht, "sample")?
            } else {
                binary_samples(path, h.raster()?, w * ht, maxval)?
            };
            raw.into_iter().map(|v| v != 0).collect()
        }
    };
    BinaryMask::new(w, ht, bits)
}

// ---------------------------------------------------------------------------
// PLY

/// ASCII PLY with one `x y z confidence` vertex per surfel.
pub fn write_ply(path: &Path, model: &SurfelModel) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", model.len()));
    for p in ["x", "y", "z", "confidence"] {
        out.push_str(&format!("property double {p}\n"));
    }
    out.push_str("end_header\n");
    for s in model.surfels() {
        let p = s.position;
        out.push_str(&format!("{:?} {:?} {:?} {:?}\n", p.x, p.y, p.z, s.confidence));
    }
    write_bytes(path, out.as_bytes())
}

/// Reads vertices written by [`write_ply`] as `[x, y, z, confidence]`.
pub fn read_ply(path: &Path) -> Result<Vec<[f64; 4]>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut lines = text.lines().enumerate();
    let mut count = None;
    let mut props = Vec::new();
    let mut ended = false;
    for (i, line) in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["ply"] if i == 0 => {}
            _ if i == 0 => return Err(parse_err(1, 1, "missing `ply` magic".into())),
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(parse_err(i + 1, 8, "only ASCII PLY is supported".into())),
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| {
                    parse_err(i + 1, 16, format!("bad vertex count `{n}`"))
                })?);
            }
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => {
                ended = true;
                break;
            }
            _ => return Err(parse_err(i + 1, 1, format!("unexpected header line `{line}`"))),
        }
    }
    let count = count.ok_or_else(|| parse_err(1, 1, "no vertex element".into()))?;
    if !ended {
        return Err(parse_err(text.lines().count(), 1, "missing end_header".into()));
    }
    let want = ["x", "y", "z", "confidence"];
    if props != want {
        return Err(parse_err(1, 1, format!("expected properties {want:?}, found {props:?}")));
    }
    let mut out = Vec::with_capacity(count);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut v = [0.0; 4];
        let mut fields = line.split_whitespace();
        for (k, slot) in v.iter_mut().enumerate() {
            let tok = fields
                .next()
                .ok_or_else(|| parse_err(i + 1, line.len() + 1, "too few fields".into()))?;
            let col = tok.as_ptr() as usize - line.as_ptr() as usize + 1;
            *slot = tok
                .parse()
                .map_err(|_| parse_err(i + 1, col, format!("bad {} `{tok}`", want[k])))?;
        }
        if fields.next().is_some() {
            return Err(parse_err(i + 1, 1, "too many fields".into()));
        }
        out.push(v);
    }
    if out.len() != count {
        return Err(parse_err(
            text.lines().count(),
            1,
            format!("header declares {count} vertices, found {}", out.len()),
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// JSON records

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub feature_id: String,
    pub u: f64,
    pub v: f64,
    pub rho: f64,
}

/// One frame of detector output. Pixel coordinates may be in a downsampled
/// image; see [`FrameDetections::to_detections`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDetections {
    pub frame_id: u64,
    pub detections: Vec<DetectionRecord>,
}

impl FrameDetections {
    /// Detections in full-resolution pixels, multiplying by `downsample`.
    pub fn to_detections(&self, downsample: f64) -> Result<Vec<FeatureDetection>> {
        self.detections
            .iter()
            .map(|d| {
                FeatureDetection::new(
                    d.feature_id.clone(),
                    nalgebra::Vector2::new(d.u * downsample, d.v * downsample),
                    d.rho,
                )
            })
            .collect()
    }

    pub fn from_detections(frame_id: u64, dets: &[FeatureDetection], downsample: f64) -> Self {
        Self {
            frame_id,
            detections: dets
                .iter()
                .map(|d| DetectionRecord {
                    feature_id: d.feature_id.clone(),
                    u: d.h.x / downsample,
                    v: d.h.y / downsample,
                    rho: d.rho,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderFrame {
    pub frame_id: u64,
    pub theta: Vec<f64>,
}

/// Reads a frame sequence stored either as one JSON array file or as a
/// directory of `<prefix>_<id>.json` files.
pub fn read_json_frames<T: DeserializeOwned>(path: &Path, prefix: &str) -> Result<Vec<T>> {
    if path.is_dir() {
        list_frames(path, prefix, "json")?
            .into_iter()
            .map(|(_, p)| read_json(&p))
            .collect()
    } else {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use tempfile::tempdir;

    use crate::fusion::Surfel;

    #[test]
    fn pfm_round_trip_is_exact_for_f32_values() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.pfm");
        let v: Vec<f64> = (0..12).map(|i| f64::from(i as f32 * 0.37f32)).collect();
        write_pfm(&p, 4, 3, &v).unwrap();
        let (w, h, back) = read_pfm(&p).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, v);
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"Pf\n4 3\n-1.0\n"));
        // Bottom row first.
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(f64::from(first), v[8]);
    }

    #[test]
    fn pfm_big_endian_is_accepted() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("b.pfm");
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend(1.5f32.to_be_bytes());
        bytes.extend(2.5f32.to_be_bytes());
        fs::write(&p, bytes).unwrap();
        assert_eq!(read_pfm(&p).unwrap().2, vec![1.5, 2.5]);
    }

    #[test]
    fn pfm_rejects_truncation() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.pfm");
        fs::write(&p, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        let err = read_pfm(&p).unwrap_err().to_string();
        assert!(err.contains("c.pfm"), "{err}");
    }

    #[test]
    fn depth_and_disparity_validity_survive() {
        let dir = tempdir().unwrap();
        let d = DepthMap::new(3, 1, vec![0.0, 1.25, 2.5]).unwrap();
        write_depth(&dir.path().join("d.pfm"), &d).unwrap();
        assert_eq!(read_depth(&dir.path().join("d.pfm")).unwrap(), d);
        let disp = DisparityMap::new(3, 1, vec![0.0, 4.5, 0.0], vec![true, true, false]).unwrap();
        write_disparity(&dir.path().join("x.pfm"), &disp).unwrap();
        assert_eq!(read_disparity(&dir.path().join("x.pfm")).unwrap(), disp);
    }

    #[test]
    fn pgm_round_trips_and_handles_comments() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("i.pgm");
        let img = ImageGray::new(3, 2, (0..6).map(|i| f64::from(i * 1000) / 65535.0).collect()).unwrap();
        write_pgm16(&p, &img).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), img);

        fs::write(&p, b"P2\n# comment\n2 1\n# another\n4\n0 4\n").unwrap();
        assert_eq!(read_pgm(&p).unwrap().values(), &[0.0, 1.0]);
        fs::write(&p, b"P5 2 1 255\n\x00\xff").unwrap();
        assert_eq!(read_pgm(&p).unwrap().values(), &[0.0, 1.0]);
        fs::write(&p, b"P6 2 1 255\n\x00\xff").unwrap();
        assert!(read_pgm(&p).is_err());
    }

    #[test]
    fn masks_round_trip_through_pgm_and_pbm() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let mut m = BinaryMask::empty(10, 3);
        m.set(0, 0, true);
        m.set(9, 2, true);
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);

        let pbm = dir.path().join("m.pbm");
        let mut bytes = b"P4\n10 3\n".to_vec();
        bytes.extend([0x80, 0x00, 0x00, 0x00, 0x00, 0x40]);
        fs::write(&pbm, bytes).unwrap();
        assert_eq!(read_mask(&pbm).unwrap(), m);
        fs::write(&pbm, b"P1\n3 1\n1 0 1\n").unwrap();
        assert_eq!(read_mask(&pbm).unwrap().bits(), &[true, false, true]);
    }

    #[test]
    fn ply_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.ply");
        let s = Surfel {
            position: Vector3::new(0.1, -1.0 / 3.0, std::f64::consts::E),
            radius: 0.01,
            confidence: 3.0,
            last_seen: 0,
        };
        let model = SurfelModel::from_surfels(vec![s], 1).unwrap();
        write_ply(&p, &model).unwrap();
        let v = read_ply(&p).unwrap();
        assert_eq!(v, vec![[0.1, -1.0 / 3.0, std::f64::consts::E, 3.0]]);
        write_ply(&p, &SurfelModel::new()).unwrap();
        assert!(read_ply(&p).unwrap().is_empty());
    }

    #[test]
    fn ply_errors_carry_line_and_column() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.ply");
        fs::write(
            &p,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\n\
             property double z\nproperty double confidence\nend_header\n1 2 zz 4\n",
        )
        .unwrap();
        match read_ply(&p).unwrap_err() {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (9, 5)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn json_errors_carry_line_and_column() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("d.json");
        fs::write(&p, "{\n  \"frame_id\": 1,\n  \"detections\": [x]\n}").unwrap();
        let err = read_json::<FrameDetections>(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().starts_with(&p.display().to_string()));
    }

    #[test]
    fn detections_scale_on_ingest() {
        let f = FrameDetections {
            frame_id: 0,
            detections: vec![DetectionRecord {
                feature_id: "a".into(),
                u: 10.0,
                v: 20.5,
                rho: 0.5,
            }],
        };
        let d = f.to_detections(2.0).unwrap();
        assert_eq!(d[0].h, nalgebra::Vector2::new(20.0, 41.0));
        assert_eq!(FrameDetections::from_detections(0, &d, 2.0), f);
    }

    #[test]
    fn frames_list_in_id_order() {
        let dir = tempdir().unwrap();
        for id in [10u64, 2, 7] {
            write_json(&frame_path(dir.path(), "enc", id, "json"), &EncoderFrame {
                frame_id: id,
                theta: vec![id as f64],
            })
            .unwrap();
        }
        fs::write(dir.path().join("enc_x.json"), "{}").unwrap();
        let ids: Vec<u64> = list_frames(dir.path(), "enc", "json")
            .unwrap()
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ids, vec![2, 7, 10]);
        let frames: Vec<EncoderFrame> = read_json_frames(dir.path(), "enc").unwrap();
        assert_eq!(frames[2].theta, vec![10.0]);
    }
}
