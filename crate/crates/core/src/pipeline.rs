//! End-to-end orchestration: ingest frames and detection boxes, process each
//! view independently, then fold accepted views through a per-camera Kalman
//! filter in timestamp order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{
    focal_from_homography, image_center, octagon_homography, reprojection_error, ReferenceOctagon,
    TargetConfig,
};
use crate::edge::{chain_points, select_longest_chain, subpixel_edges};
use crate::error::{Error, Result};
use crate::filter::{run_sequence, Measurement, NoiseSchedule};
use crate::lines::{fit_all_edges, refine_line, RansacConfig, RefineConfig};
use crate::octagon::{
    affine_octagon_check, corner_candidates, order_corners, validate_count, CanonicalOctagon,
    OctagonCorners,
};
use crate::raster::{color_gradient, gaussian_gradient, load_png, red_chroma, red_mask, rgb_to_hsv, BinaryMask, Image, RedThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    /// Gaussian scale for both gradient fields, pixels.
    pub sigma: f64,
    pub red: RedThresholds,
    /// Trace edges on the red chroma image instead of the thresholded mask.
    pub soft_edges: bool,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            red: RedThresholds::default(),
            soft_edges: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    /// Fraction of the maximum gradient magnitude.
    pub mag_threshold: f64,
    pub d_chain: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            mag_threshold: 0.1,
            d_chain: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OctagonConfig {
    pub endpoint_radius: f64,
    /// Affine residual limit as a fraction of the mean side length.
    pub affine_tol: f64,
}

impl Default for OctagonConfig {
    fn default() -> Self {
        Self {
            endpoint_radius: 10.0,
            affine_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibConfig {
    pub cond_max: f64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self { cond_max: 1e4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// ROI padding around each box, fraction of its size per side.
    pub roi_padding: f64,
    /// Fallback detector: minimum component area, pixels.
    pub min_area: usize,
    /// Fallback detector: admissible `w / h` range.
    pub aspect: [f64; 2],
    /// Fallback detector: box dilation, fraction of its size per side.
    pub dilation: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            roi_padding: 0.1,
            min_area: 200,
            aspect: [0.5, 2.0],
            dilation: 0.1,
        }
    }
}

/// Every tunable of the pipeline. Parsed from TOML; omitted keys take their
/// defaults and unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Reference `[fx, fy]` for relative-error columns.
    pub ground_truth: Option<[f64; 2]>,
    pub raster: RasterConfig,
    pub edge: EdgeConfig,
    pub ransac: RansacConfig,
    pub refine: RefineConfig,
    pub octagon: OctagonConfig,
    pub target: TargetConfig,
    pub calib: CalibConfig,
    pub filter: NoiseSchedule,
    pub detection: DetectionConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid {what}")));
        if !(self.raster.sigma > 0.0) {
            return bad("raster.sigma");
        }
        if !(self.edge.mag_threshold > 0.0 && self.edge.mag_threshold < 1.0) {
            return bad("edge.mag_threshold");
        }
        if !(self.edge.d_chain > 0.0) {
            return bad("edge.d_chain");
        }
        let r = &self.ransac;
        if !(r.p > 0.0 && r.p < 1.0) || !(r.tol > 0.0) || r.min_support < 2 {
            return bad("ransac settings");
        }
        if self.refine.samples < 2 || !(0.0..=1.0).contains(&self.refine.boundary) {
            return bad("refine settings");
        }
        if !(self.octagon.endpoint_radius > 0.0) || !(self.octagon.affine_tol > 0.0) {
            return bad("octagon settings");
        }
        if !(self.calib.cond_max > 1.0) {
            return bad("calib.cond_max");
        }
        let d = &self.detection;
        if !(d.roi_padding >= 0.0) || !(d.dilation >= 0.0) || !(0.0 < d.aspect[0] && d.aspect[0] <= d.aspect[1]) {
            return bad("detection settings");
        }
        if let Some([fx, fy]) = self.ground_truth {
            if !(fx > 0.0 && fy > 0.0) {
                return bad("ground_truth");
            }
        }
        self.target.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.filter.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// One element of `detections.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEntry {
    pub frame: String,
    /// `[x, y, w, h]` in pixels.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub ts: f64,
    pub camera: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame: PathBuf,
    pub bbox: [f64; 4],
    pub ts: f64,
    pub camera: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ingested {
    pub records: Vec<DetectionRecord>,
    /// Frames named in the detections file but absent on disk.
    pub missing: Vec<String>,
}

/// Reads `dir/detections.json`, or runs [`fallback_detect`] on every PNG in
/// `dir` when that file is absent. Records come back in timestamp order.
pub fn ingest(dir: &Path, detection: &DetectionConfig, red: &RedThresholds) -> Result<Ingested> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", dir.display())));
    }
    let json = dir.join("detections.json");
    let mut out = Ingested::default();
    if json.exists() {
        let text = std::fs::read_to_string(&json)?;
        let entries: Vec<DetectionEntry> = serde_json::from_str(&text)
            .map_err(|e| Error::Dataset(format!("{}: {e}", json.display())))?;
        for e in entries {
            let [x, y, w, h] = e.bbox;
            if !(w > 0.0 && h > 0.0 && x >= 0.0 && y >= 0.0) || !e.ts.is_finite() {
                return Err(Error::Dataset(format!("bad box {:?} for {}", e.bbox, e.frame)));
            }
            let frame = dir.join(&e.frame);
            if !frame.is_file() {
                warn!("skipping missing frame {}", frame.display());
                out.missing.push(e.frame);
                continue;
            }
            out.records.push(DetectionRecord {
                frame,
                bbox: e.bbox,
                ts: e.ts,
                camera: e.camera,
            });
        }
    } else {
        let mut pngs: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        pngs.sort();
        for (k, frame) in pngs.into_iter().enumerate() {
            let img = match load_png(&frame) {
                Ok(img) => img,
                Err(e) => {
                    warn!("skipping unreadable frame {}: {e}", frame.display());
                    out.missing.push(frame.display().to_string());
                    continue;
                }
            };
            for bbox in fallback_detect(&img, detection, red)? {
                out.records.push(DetectionRecord {
                    frame: frame.clone(),
                    bbox,
                    ts: k as f64,
                    camera: "cam0".into(),
                });
            }
        }
    }
    if out.records.is_empty() {
        return Err(Error::Dataset(format!("no detections in {}", dir.display())));
    }
    out.records.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    Ok(out)
}

/// Boxes around red connected components (8-connected) whose area and
/// aspect ratio are plausible for a sign, dilated and clipped to the frame.
pub fn fallback_detect(img: &Image, cfg: &DetectionConfig, red: &RedThresholds) -> Result<Vec<[f64; 4]>> {
    let mask = red_mask(&rgb_to_hsv(img)?, red)?;
    Ok(components(&mask)
        .into_iter()
        .filter(|c| c.area >= cfg.min_area)
        .filter_map(|c| {
            let w = (c.x1 - c.x0 + 1) as f64;
            let h = (c.y1 - c.y0 + 1) as f64;
            let aspect = w / h;
            if aspect < cfg.aspect[0] || aspect > cfg.aspect[1] {
                return None;
            }
            // Pixel i covers [i - 0.5, i + 0.5].
            let (mx, my) = (cfg.dilation * w, cfg.dilation * h);
            let x0 = (c.x0 as f64 - 0.5 - mx).max(0.0);
            let y0 = (c.y0 as f64 - 0.5 - my).max(0.0);
            let x1 = (c.x1 as f64 + 0.5 + mx).min(img.width() as f64);
            let y1 = (c.y1 as f64 + 0.5 + my).min(img.height() as f64);
            Some([x0, y0, x1 - x0, y1 - y0])
        })
        .collect())
}

struct Component {
    area: usize,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

fn components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut seen = vec![false; bits.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut c = Component {
            area: 0,
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            c.area += 1;
            c.x0 = c.x0.min(x);
            c.y0 = c.y0.min(y);
            c.x1 = c.x1.max(x);
            c.y1 = c.y1.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(c);
    }
    out
}

/// Machine-readable reason a view was not used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rejection {
    UnreadableFrame,
    NoContour,
    EdgeFitFailure,
    CornerCount,
    AffineReject,
    DegenerateView,
    NegativeFocal,
}

impl Rejection {
    pub const ALL: [Rejection; 7] = [
        Rejection::UnreadableFrame,
        Rejection::NoContour,
        Rejection::EdgeFitFailure,
        Rejection::CornerCount,
        Rejection::AffineReject,
        Rejection::DegenerateView,
        Rejection::NegativeFocal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Rejection::UnreadableFrame => "unreadable-frame",
            Rejection::NoContour => "no-contour",
            Rejection::EdgeFitFailure => "edge-fit-failure",
            Rejection::CornerCount => "corner-count",
            Rejection::AffineReject => "affine-reject",
            Rejection::DegenerateView => "degenerate-view",
            Rejection::NegativeFocal => "negative-focal",
        }
    }

    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::ImageRead { .. } | Error::UnsupportedFormat(_) | Error::ChannelCount { .. } | Error::Io(_) => {
                Rejection::UnreadableFrame
            }
            Error::EdgeFit { .. } => Rejection::EdgeFitFailure,
            Error::CornerCount(_) | Error::DuplicateCorners => Rejection::CornerCount,
            Error::AffineReject { .. } => Rejection::AffineReject,
            Error::DegenerateView(_) | Error::PointAtInfinity => Rejection::DegenerateView,
            Error::NegativeFocal { .. } => Rejection::NegativeFocal,
            _ => Rejection::NoContour,
        }
    }
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An accepted view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewEstimate {
    pub fx: f64,
    pub fy: f64,
    /// Corner reprojection RMS under the fitted homography, pixels.
    pub rms: f64,
    pub condition: f64,
    pub corners: OctagonCorners,
    /// Number of edges moved by the refinement stage.
    pub refined: usize,
}

/// Runs the single-view chain on the box `bbox` of `img`.
pub fn process_view(img: &Image, bbox: [f64; 4], cfg: &PipelineConfig, rng: &mut ChaCha8Rng) -> Result<ViewEstimate> {
    let [bx, by, bw, bh] = bbox;
    let (pw, ph) = (bw * cfg.detection.roi_padding, bh * cfg.detection.roi_padding);
    let x0 = (bx - pw).floor().max(0.0) as usize;
    let y0 = (by - ph).floor().max(0.0) as usize;
    let x1 = ((bx + bw + pw).ceil() as usize).min(img.width());
    let y1 = ((by + bh + ph).ceil() as usize).min(img.height());
    if x1 <= x0 + 2 || y1 <= y0 + 2 {
        return Err(Error::NoContour);
    }
    let roi = img.crop(x0, y0, x1 - x0, y1 - y0)?;
    let offset = [x0 as f64, y0 as f64];

    let hsv = rgb_to_hsv(&roi)?;
    let source = if cfg.raster.soft_edges {
        red_chroma(&hsv, &cfg.raster.red)?
    } else {
        red_mask(&hsv, &cfg.raster.red)?.to_image()
    };
    let grad = gaussian_gradient(&source, cfg.raster.sigma)?;
    let edges = subpixel_edges(&grad, cfg.edge.mag_threshold)?;
    let chains = chain_points(&edges, cfg.edge.d_chain);
    let center = [(roi.width() as f64 - 1.0) / 2.0, (roi.height() as f64 - 1.0) / 2.0];
    let contour = select_longest_chain(chains, center)?;

    let fits = fit_all_edges(&contour.positions(), &cfg.ransac, rng)?;
    let mut lines: Vec<_> = fits.into_iter().map(|f| f.line).collect();
    let mut refined = 0;
    if cfg.refine.boundary > 0.0 {
        let color = color_gradient(&roi, cfg.raster.sigma)?;
        let ratio = cfg.target.border_ratio();
        for line in &mut lines {
            let out = refine_line(line, &color, &cfg.refine, ratio);
            refined += out.updated as usize;
            *line = out.line;
        }
    }

    let candidates = corner_candidates(&lines, cfg.octagon.endpoint_radius);
    let mut corners = validate_count(&candidates)?;
    for c in &mut corners {
        c[0] += offset[0];
        c[1] += offset[1];
    }
    let corners = order_corners(&corners)?;
    affine_octagon_check(&corners, &CanonicalOctagon::default(), cfg.octagon.affine_tol)?;

    let reference = ReferenceOctagon::new(&cfg.target);
    let h = octagon_homography(&reference, &corners)?;
    let (cx, cy) = image_center(img.width(), img.height());
    let focal = focal_from_homography(&h, cx, cy, cfg.calib.cond_max)?;
    let rms = reprojection_error(&h, &reference.vertices, &corners.corners)?;
    Ok(ViewEstimate {
        fx: focal.fx,
        fy: focal.fy,
        rms,
        condition: focal.condition,
        corners,
        refined,
    })
}

/// Per-record outcome. All failures become a [`Rejection`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViewOutcome {
    pub frame: String,
    pub camera: String,
    pub ts: f64,
    pub result: std::result::Result<ViewEstimate, Rejection>,
}

/// Loads the record's frame and runs [`process_view`].
pub fn process_detection(rec: &DetectionRecord, cfg: &PipelineConfig, rng: &mut ChaCha8Rng) -> ViewOutcome {
    let result = load_png(&rec.frame)
        .and_then(|img| process_view(&img, rec.bbox, cfg, rng))
        .map_err(|e| {
            debug!("{}: {e}", rec.frame.display());
            Rejection::from_error(&e)
        });
    ViewOutcome {
        frame: rec
            .frame
            .file_name()
            .map_or_else(|| rec.frame.display().to_string(), |s| s.to_string_lossy().into_owned()),
        camera: rec.camera.clone(),
        ts: rec.ts,
        result,
    }
}

/// `(f - f_gt) / f_gt`.
pub fn relative_error(f: f64, f_gt: f64) -> Result<f64> {
    if !(f_gt > 0.0) {
        return Err(Error::InvalidParameter(format!("ground-truth focal {f_gt} must be positive")));
    }
    Ok((f - f_gt) / f_gt)
}

/// Range of true depths consistent with a depth `z` computed from a focal
/// length whose relative error magnitude is at most `e`.
pub fn depth_bounds(z: f64, e: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&e) || !(z > 0.0) {
        return Err(Error::InvalidParameter(format!("need z > 0 and 0 <= e < 1, got {z}, {e}")));
    }
    Ok((z / (1.0 + e), z / (1.0 - e)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub frame: String,
    pub camera: String,
    pub ts: f64,
    /// `"accepted"` or a rejection reason.
    pub status: String,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub rms: Option<f64>,
    pub eps_fx: Option<f64>,
    pub eps_fy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub ts: f64,
    pub fx: f64,
    pub fy: f64,
    pub p11: f64,
    pub p22: f64,
    pub accepted_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraReport {
    pub camera: String,
    pub detections: usize,
    pub accepted: usize,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub p11: Option<f64>,
    pub p22: Option<f64>,
    pub eps_fx: Option<f64>,
    pub eps_fy: Option<f64>,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub seed: u64,
    pub detections: usize,
    pub accepted: usize,
    pub missing_frames: Vec<String>,
    pub refinement_skipped: bool,
    pub ground_truth: Option<[f64; 2]>,
    /// Count per reason; every reason is listed.
    pub rejections: BTreeMap<String, usize>,
    pub cameras: Vec<CameraReport>,
    pub views: Vec<ViewReport>,
}

impl CalibrationReport {
    pub fn camera(&self, id: &str) -> Option<&CameraReport> {
        self.cameras.iter().find(|c| c.camera == id)
    }
}

fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Processes every record concurrently, then filters each camera's accepted
/// views in timestamp order.
pub fn calibrate(ingested: &Ingested, cfg: &PipelineConfig) -> Result<CalibrationReport> {
    cfg.validate()?;
    let outcomes: Vec<ViewOutcome> = ingested
        .records
        .par_iter()
        .enumerate()
        .map(|(k, rec)| process_detection(rec, cfg, &mut record_rng(cfg.seed, k)))
        .collect();
    assemble(outcomes, ingested.missing.clone(), cfg)
}

/// Builds the report from per-view outcomes, which must be in timestamp
/// order.
pub fn assemble(outcomes: Vec<ViewOutcome>, missing: Vec<String>, cfg: &PipelineConfig) -> Result<CalibrationReport> {
    let gt = cfg.ground_truth;
    let eps = |f: f64, axis: usize| gt.map(|g| (f - g[axis]) / g[axis]);

    let mut rejections: BTreeMap<String, usize> =
        Rejection::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect();
    let mut views = Vec::with_capacity(outcomes.len());
    let mut per_camera: BTreeMap<String, (usize, Vec<(f64, Measurement)>)> = BTreeMap::new();
    for o in &outcomes {
        let entry = per_camera.entry(o.camera.clone()).or_default();
        entry.0 += 1;
        let view = match &o.result {
            Ok(v) => {
                entry.1.push((
                    o.ts,
                    Measurement {
                        fx: v.fx,
                        fy: v.fy,
                        quality: v.rms,
                    },
                ));
                ViewReport {
                    frame: o.frame.clone(),
                    camera: o.camera.clone(),
                    ts: o.ts,
                    status: "accepted".into(),
                    fx: Some(v.fx),
                    fy: Some(v.fy),
                    rms: Some(v.rms),
                    eps_fx: eps(v.fx, 0),
                    eps_fy: eps(v.fy, 1),
                }
            }
            Err(r) => {
                *rejections.get_mut(r.as_str()).expect("all reasons listed") += 1;
                ViewReport {
                    frame: o.frame.clone(),
                    camera: o.camera.clone(),
                    ts: o.ts,
                    status: r.as_str().into(),
                    fx: None,
                    fy: None,
                    rms: None,
                    eps_fx: None,
                    eps_fy: None,
                }
            }
        };
        views.push(view);
    }

    let mut cameras = Vec::new();
    let mut accepted = 0;
    for (camera, (detections, ms)) in per_camera {
        accepted += ms.len();
        let mut report = CameraReport {
            camera,
            detections,
            accepted: ms.len(),
            fx: None,
            fy: None,
            p11: None,
            p22: None,
            eps_fx: None,
            eps_fy: None,
            trajectory: Vec::new(),
        };
        if !ms.is_empty() {
            let measurements: Vec<Measurement> = ms.iter().map(|m| m.1).collect();
            let states = run_sequence(&measurements, &cfg.filter)?;
            report.trajectory = states
                .iter()
                .zip(&ms)
                .enumerate()
                .map(|(k, (s, (ts, _)))| TrajectoryPoint {
                    t: s.t,
                    ts: *ts,
                    fx: s.x[0],
                    fy: s.x[1],
                    p11: s.p[(0, 0)],
                    p22: s.p[(1, 1)],
                    accepted_count: k + 1,
                })
                .collect();
            let last = report.trajectory.last().expect("non-empty");
            report.fx = Some(last.fx);
            report.fy = Some(last.fy);
            report.p11 = Some(last.p11);
            report.p22 = Some(last.p22);
            report.eps_fx = eps(last.fx, 0);
            report.eps_fy = eps(last.fy, 1);
        }
        cameras.push(report);
    }

    Ok(CalibrationReport {
        seed: cfg.seed,
        detections: outcomes.len(),
        accepted,
        missing_frames: missing,
        refinement_skipped: cfg.refine.boundary <= 0.0,
        ground_truth: gt,
        rejections,
        cameras,
        views,
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `report.json`, `trajectory.csv`, `views.csv` and
/// `rejections.csv` into `out`.
pub fn write_outputs(report: &CalibrationReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(report)?)?;
    let gt = report.ground_truth;

    let mut w = csv::Writer::from_path(out.join("trajectory.csv"))?;
    let mut header = vec!["camera", "t", "ts", "fx", "fy", "P11", "P22", "accepted_count"];
    if gt.is_some() {
        header.extend(["eps_fx", "eps_fy"]);
    }
    w.write_record(&header)?;
    for cam in &report.cameras {
        for p in &cam.trajectory {
            let mut row = vec![
                cam.camera.clone(),
                p.t.to_string(),
                num(p.ts),
                num(p.fx),
                num(p.fy),
                num(p.p11),
                num(p.p22),
                p.accepted_count.to_string(),
            ];
            if let Some(g) = gt {
                row.push(num((p.fx - g[0]) / g[0]));
                row.push(num((p.fy - g[1]) / g[1]));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("views.csv"))?;
    let mut header = vec!["frame", "camera", "ts", "status", "fx", "fy", "rms"];
    if gt.is_some() {
        header.extend(["eps_fx", "eps_fy"]);
    }
    w.write_record(&header)?;
    for v in &report.views {
        let mut row = vec![v.frame.clone(), v.camera.clone(), num(v.ts), v.status.clone(), opt(v.fx), opt(v.fy), opt(v.rms)];
        if gt.is_some() {
            row.push(opt(v.eps_fx));
            row.push(opt(v.eps_fy));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("rejections.csv"))?;
    w.write_record(["reason", "count"])?;
    for (reason, count) in &report.rejections {
        w.write_record([reason.as_str(), &count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Ingests `dataset`, calibrates and writes all outputs to `out`.
pub fn run(dataset: &Path, cfg: &PipelineConfig, out: &Path) -> Result<CalibrationReport> {
    cfg.validate()?;
    let ingested = ingest(dataset, &cfg.detection, &cfg.raster.red)?;
    let report = calibrate(&ingested, cfg)?;
    write_outputs(&report, out)?;
    Ok(report)
}

pub fn load_report(out: &Path) -> Result<CalibrationReport> {
    let path = out.join("report.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Plain-text summary of a report.
pub fn summary_table(report: &CalibrationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "detections  {}", report.detections);
    let _ = writeln!(s, "accepted    {}", report.accepted);
    if !report.missing_frames.is_empty() {
        let _ = writeln!(s, "missing     {}", report.missing_frames.len());
    }
    let _ = writeln!(
        s,
        "refinement  {}",
        if report.refinement_skipped { "skipped" } else { "enabled" }
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<18} {:>6}", "rejection", "count");
    for (reason, count) in &report.rejections {
        let _ = writeln!(s, "{reason:<18} {count:>6}");
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<10} {:>8} {:>12} {:>12} {:>10} {:>10}",
        "camera", "accepted", "fx", "fy", "eps_fx", "eps_fy"
    );
    let fmt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |v| format!("{v:.prec$}"));
    for c in &report.cameras {
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>12} {:>12} {:>10} {:>10}",
            c.camera,
            c.accepted,
            fmt(c.fx, 2),
            fmt(c.fy, 2),
            fmt(c.eps_fx.map(|e| 100.0 * e), 3),
            fmt(c.eps_fy.map(|e| 100.0 * e), 3),
        );
    }
    if report.ground_truth.is_some() {
        let _ = writeln!(s, "(eps in percent)");
    }
    s
}
