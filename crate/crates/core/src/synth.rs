//! Synthetic octagonal-target scenes with exact ground truth.
//!
//! A world point `P` maps to the image by `s m = A (R P + t)`. The target
//! lies on the world plane `Z = 0`, so its image is the polygon through the
//! projected corners and the renderer only has to rasterize polygons. Pixels
//! near a polygon boundary are 4x4 supersampled.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calib::{Homography, Intrinsics, ReferenceOctagon, TargetConfig};
use crate::error::{Error, Result};
use crate::octagon::{order_corners, CanonicalOctagon, OctagonCorners};
use crate::pipeline::DetectionEntry;
use crate::raster::{gaussian_blur, Image};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if orth > 1e-12 || (rotation.determinant() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("rotation is not orthonormal".into()));
        }
        if translation.z <= 0.0 {
            return Err(Error::BehindCamera(translation.z));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Target plane tilted by `tilt_deg` about an in-plane axis at
    /// `azimuth_deg` from the image x axis, then rolled about the optical
    /// axis.
    pub fn from_angles(
        tilt_deg: f64,
        azimuth_deg: f64,
        roll_deg: f64,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let az = azimuth_deg.to_radians();
        let axis = Unit::new_normalize(Vector3::new(az.cos(), az.sin(), 0.0));
        let tilt = Rotation3::from_axis_angle(&axis, tilt_deg.to_radians());
        let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), roll_deg.to_radians());
        Self::new((roll * tilt).into_inner(), translation)
    }

    pub fn fronto_parallel(distance: f64) -> Result<Self> {
        Self::new(Matrix3::identity(), Vector3::new(0.0, 0.0, distance))
    }

    /// Angle between the target normal and the optical axis, degrees.
    pub fn tilt_deg(&self) -> f64 {
        self.rotation[(2, 2)].clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// `H = A [r1 r2 t]`.
    pub fn homography(&self, intr: &Intrinsics) -> Result<Homography> {
        let mut rt = Matrix3::zeros();
        rt.set_column(0, &self.rotation.column(0));
        rt.set_column(1, &self.rotation.column(1));
        rt.set_column(2, &self.translation);
        Homography::from_matrix(intr.matrix() * rt)
    }
}

/// Pinhole projection of a world point.
pub fn project_point(p: [f64; 3], intr: &Intrinsics, pose: &CameraPose) -> Result<[f64; 2]> {
    let c = pose.rotation * Vector3::new(p[0], p[1], p[2]) + pose.translation;
    if c.z <= 0.0 {
        return Err(Error::BehindCamera(c.z));
    }
    Ok([intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy])
}

/// Uniform pose distribution over an admissible band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseSampler {
    pub tilt_deg: [f64; 2],
    /// Tilt-axis azimuth band, applied in a random quadrant. Axes aligned
    /// with the image axes leave one focal length unobservable.
    pub azimuth_deg: [f64; 2],
    pub roll_deg: [f64; 2],
    pub distance_m: [f64; 2],
    /// Lateral offset of the target center as a fraction of its depth.
    pub lateral_frac: f64,
}

impl Default for PoseSampler {
    fn default() -> Self {
        Self {
            tilt_deg: [15.0, 60.0],
            azimuth_deg: [25.0, 65.0],
            roll_deg: [-8.0, 8.0],
            distance_m: [6.0, 11.0],
            lateral_frac: 0.08,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] <= r[1]) {
        return Err(Error::InvalidParameter(format!("empty {name} range {r:?}")));
    }
    Ok(())
}

fn draw<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

impl PoseSampler {
    pub fn validate(&self) -> Result<()> {
        check_range("tilt", self.tilt_deg)?;
        check_range("azimuth", self.azimuth_deg)?;
        check_range("roll", self.roll_deg)?;
        check_range("distance", self.distance_m)?;
        if self.tilt_deg[0] < 10.0 || self.tilt_deg[1] >= 90.0 {
            return Err(Error::InvalidParameter(format!(
                "tilt range {:?} must lie within [10, 90) degrees",
                self.tilt_deg
            )));
        }
        if self.distance_m[0] <= 0.0 {
            return Err(Error::InvalidParameter("distance must be positive".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CameraPose> {
        self.validate()?;
        let tilt = draw(rng, self.tilt_deg);
        let azimuth = draw(rng, self.azimuth_deg) + 90.0 * rng.gen_range(0..4) as f64;
        let roll = draw(rng, self.roll_deg);
        let d = draw(rng, self.distance_m);
        let l = self.lateral_frac.abs();
        let ox = if l > 0.0 { rng.gen_range(-l..l) } else { 0.0 };
        let oy = if l > 0.0 { rng.gen_range(-l..l) } else { 0.0 };
        CameraPose::from_angles(tilt, azimuth, roll, Vector3::new(ox * d, oy * d, d))
    }
}

/// Deliberate departures from a clean regular octagon.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetShape {
    #[default]
    Regular,
    /// Vertex removed, leaving a seven-sided red region (a straight
    /// occluder across one corner).
    DropVertex(usize),
    /// Vertex pushed radially outward by a fraction of the side length.
    DisplaceVertex { index: usize, fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub background: [f64; 3],
    pub border: [f64; 3],
    pub face: [f64; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            background: [0.30, 0.35, 0.32],
            border: [0.92, 0.92, 0.92],
            face: [0.80, 0.18, 0.20],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
    pub target: TargetConfig,
    pub width: usize,
    pub height: usize,
    /// Standard deviation of the perpendicular Gaussian displacement of
    /// each boundary sample of the red region (samples about 1 px apart),
    /// pixels.
    pub contour_noise_px: f64,
    /// Standard deviation of the Gaussian jitter applied to each red
    /// corner, pixels.
    pub corner_noise_px: f64,
    pub blur_sigma_px: f64,
    pub exposure_gain: f64,
    pub shape: TargetShape,
    pub palette: Palette,
}

impl SceneSpec {
    pub fn new(intrinsics: Intrinsics, pose: CameraPose, width: usize, height: usize) -> Self {
        Self {
            intrinsics,
            pose,
            target: TargetConfig::default(),
            width,
            height,
            contour_noise_px: 0.0,
            corner_noise_px: 0.0,
            blur_sigma_px: 1.0,
            exposure_gain: 1.0,
            shape: TargetShape::Regular,
            palette: Palette::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub image: Image,
    /// Exact projection of the reference octagon, in detector ordering.
    pub corners: OctagonCorners,
    /// Corners of the red polygon after shape edits and corner noise, in
    /// drawing order.
    pub drawn: Vec<[f64; 2]>,
    /// The rendered red boundary: samples about 1 px apart along `drawn`,
    /// with contour noise applied.
    pub contour: Vec<[f64; 2]>,
    /// Tight box around the whole sign: `[x, y, w, h]`.
    pub bbox: [f64; 4],
}

fn seg_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn boundary_distance(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    (0..poly.len())
        .map(|i| seg_distance(p, poly[i], poly[(i + 1) % poly.len()]))
        .fold(f64::INFINITY, f64::min)
}

/// Even-odd point-in-polygon test.
fn inside(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut c = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            c = !c;
        }
        j = i;
    }
    c
}

fn project_all(points: &[[f64; 2]], intr: &Intrinsics, pose: &CameraPose) -> Result<Vec<[f64; 2]>> {
    points
        .iter()
        .map(|p| project_point([p[0], p[1], 0.0], intr, pose))
        .collect()
}

/// Renders the scene and returns it with its ground truth.
pub fn render_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<RenderedScene> {
    spec.target.validate()?;
    let reference = ReferenceOctagon::new(&spec.target);
    let outer_ref = CanonicalOctagon::with_circumradius(spec.target.outer_circumradius()).vertices;
    let intr = &spec.intrinsics;
    let truth = project_all(&reference.vertices, intr, &spec.pose)?;
    let outer = project_all(&outer_ref, intr, &spec.pose)?;

    let mut face_world: Vec<[f64; 2]> = reference.vertices.to_vec();
    match spec.shape {
        TargetShape::Regular => {}
        TargetShape::DropVertex(k) => {
            face_world.remove(k % 8);
        }
        TargetShape::DisplaceVertex { index, fraction } => {
            let v = &mut face_world[index % 8];
            let r = v[0].hypot(v[1]);
            let push = fraction * spec.target.inner_side();
            *v = [v[0] * (r + push) / r, v[1] * (r + push) / r];
        }
    }
    let mut face = project_all(&face_world, intr, &spec.pose)?;
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::InvalidParameter(e.to_string()));
    if spec.corner_noise_px > 0.0 {
        let noise = normal(spec.corner_noise_px)?;
        for v in &mut face {
            v[0] += noise.sample(rng);
            v[1] += noise.sample(rng);
        }
    }
    let contour_noise = if spec.contour_noise_px > 0.0 {
        Some(normal(spec.contour_noise_px)?)
    } else {
        None
    };
    let mut contour = Vec::new();
    for i in 0..face.len() {
        let (a, b) = (face[i], face[(i + 1) % face.len()]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let n = (len.ceil() as usize).max(1);
        let nrm = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
        for k in 0..n {
            let t = k as f64 / n as f64;
            let off = contour_noise.map_or(0.0, |d| d.sample(rng));
            contour.push([
                a[0] + t * (b[0] - a[0]) + off * nrm[0],
                a[1] + t * (b[1] - a[1]) + off * nrm[1],
            ]);
        }
    }
    // The noisy boundary is drawn as a dense polygon.
    let region = if contour_noise.is_some() { contour.clone() } else { face.clone() };

    let (w, h) = (spec.width as f64, spec.height as f64);
    let all = outer.iter().chain(&region);
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    if x0 < 2.0 || y0 < 2.0 || x1 > w - 3.0 || y1 > h - 3.0 {
        return Err(Error::OutsideFrame);
    }

    let pal = &spec.palette;
    let gain = spec.exposure_gain;
    let shade = |c: [f64; 3]| c.map(|v| (v * gain).clamp(0.0, 1.0));
    let (bg, border, red) = (shade(pal.background), shade(pal.border), shade(pal.face));
    let color_with = |p: [f64; 2], red_region: &[[f64; 2]]| {
        if inside(p, red_region) {
            red
        } else if inside(p, &outer) {
            border
        } else {
            bg
        }
    };

    let slack = 6.0 * spec.contour_noise_px;

    // Only the neighbourhood of the sign differs from the background.
    let margin = (3.0 * spec.blur_sigma_px).ceil() + 4.0;
    let rx0 = (x0 - margin).floor().max(0.0) as usize;
    let ry0 = (y0 - margin).floor().max(0.0) as usize;
    let rx1 = ((x1 + margin).ceil() as usize).min(spec.width - 1);
    let ry1 = ((y1 + margin).ceil() as usize).min(spec.height - 1);
    let (rw, rh) = (rx1 - rx0 + 1, ry1 - ry0 + 1);
    let patch = Image::from_fn_rgb(rw, rh, |px, py| {
        let c = [(px + rx0) as f64, (py + ry0) as f64];
        // Contour noise stays within `slack` of the noiseless boundary, so
        // pixels clear of that band can be classified against `face`.
        let to_face = boundary_distance(c, &face) - slack;
        if to_face.min(boundary_distance(c, &outer)) > 0.75 {
            return color_with(c, &face);
        }
        let mut acc = [0.0; 3];
        for sy in 0..4 {
            for sx in 0..4 {
                let q = [c[0] - 0.5 + (sx as f64 + 0.5) / 4.0, c[1] - 0.5 + (sy as f64 + 0.5) / 4.0];
                let s = color_with(q, &region);
                for k in 0..3 {
                    acc[k] += s[k] / 16.0;
                }
            }
        }
        acc
    });
    let patch = if spec.blur_sigma_px > 0.0 {
        gaussian_blur(&patch, spec.blur_sigma_px)?
    } else {
        patch
    };
    let image = Image::from_fn_rgb(spec.width, spec.height, |x, y| {
        if (rx0..=rx1).contains(&x) && (ry0..=ry1).contains(&y) {
            patch.pixel_rgb(x - rx0, y - ry0)
        } else {
            bg
        }
    });

    let truth: [[f64; 2]; 8] = truth.try_into().expect("eight reference corners");
    Ok(RenderedScene {
        image,
        corners: order_corners(&truth)?,
        drawn: face,
        contour,
        bbox: [x0, y0, x1 - x0, y1 - y0],
    })
}

/// Settings for a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub contour_noise_px: f64,
    pub corner_noise_px: f64,
    pub blur_sigma_px: f64,
    pub exposure_gain: f64,
    pub poses: PoseSampler,
    pub target: TargetConfig,
    pub camera: String,
    /// Detection box dilation, fraction of the sign size.
    pub box_margin: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 800,
            fx: 1810.4,
            fy: 1840.1,
            contour_noise_px: 0.0,
            corner_noise_px: 0.0,
            blur_sigma_px: 1.0,
            exposure_gain: 1.0,
            poses: PoseSampler::default(),
            target: TargetConfig::default(),
            camera: "cam0".into(),
            box_margin: 0.1,
        }
    }
}

impl BatchConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.fx, self.fy, self.width, self.height)
    }

    pub fn scene(&self, pose: CameraPose) -> SceneSpec {
        SceneSpec {
            target: self.target,
            contour_noise_px: self.contour_noise_px,
            corner_noise_px: self.corner_noise_px,
            blur_sigma_px: self.blur_sigma_px,
            exposure_gain: self.exposure_gain,
            ..SceneSpec::new(self.intrinsics(), pose, self.width, self.height)
        }
    }
}

/// Detection box around a rendered sign, dilated by `margin` of its size
/// on each side and clipped to the frame.
pub fn detection_box(scene: &RenderedScene, margin: f64) -> [f64; 4] {
    let [x, y, w, h] = scene.bbox;
    let (mx, my) = (w * margin, h * margin);
    let fw = scene.image.width() as f64;
    let fh = scene.image.height() as f64;
    let bx = (x - mx).max(0.0);
    let by = (y - my).max(0.0);
    [bx, by, (x + w + mx).min(fw) - bx, (y + h + my).min(fh) - by]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: String,
    pub corners: Vec<[f64; 2]>,
    pub tilt_deg: f64,
}

/// Contents of `truth.json` written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTruth {
    pub intrinsics: Intrinsics,
    pub frames: Vec<FrameTruth>,
}

/// Renders `count` scenes into `dir` as `f_NNN.png` plus `detections.json`
/// and `truth.json`. Deterministic given the RNG state.
pub fn write_batch<R: Rng + ?Sized>(
    dir: &Path,
    count: usize,
    cfg: &BatchConfig,
    rng: &mut R,
) -> Result<BatchTruth> {
    std::fs::create_dir_all(dir)?;
    let mut detections = Vec::with_capacity(count);
    let mut frames = Vec::with_capacity(count);
    let mut k = 0;
    let mut attempts = 0;
    while k < count {
        attempts += 1;
        if attempts > 20 * count + 100 {
            return Err(Error::InvalidParameter("pose band keeps leaving the frame".into()));
        }
        let pose = cfg.poses.sample(rng)?;
        let scene = match render_scene(&cfg.scene(pose), rng) {
            Ok(s) => s,
            Err(Error::OutsideFrame) => continue,
            Err(e) => return Err(e),
        };
        let name = format!("f_{k:03}.png");
        scene.image.save_png(dir.join(&name))?;
        detections.push(DetectionEntry {
            frame: name.clone(),
            bbox: detection_box(&scene, cfg.box_margin),
            ts: k as f64,
            camera: cfg.camera.clone(),
        });
        frames.push(FrameTruth {
            frame: name,
            corners: scene.corners.corners.to_vec(),
            tilt_deg: pose.tilt_deg(),
        });
        k += 1;
    }
    let truth = BatchTruth {
        intrinsics: cfg.intrinsics(),
        frames,
    };
    std::fs::write(dir.join("detections.json"), serde_json::to_string_pretty(&detections)?)?;
    std::fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&truth)?)?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::{dlt_homography, focal_from_homography};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn intr() -> Intrinsics {
        Intrinsics::centered(1810.4, 1840.1, 1280, 800)
    }

    #[test]
    fn projection_examples() {
        // Points are given relative to the target origin one unit ahead.
        let unit = Intrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 };
        let pose = CameraPose::fronto_parallel(1.0).unwrap();
        assert_eq!(project_point([0.0, 0.0, 0.0], &unit, &pose).unwrap(), [0.0, 0.0]);
        let two = Intrinsics { fx: 2.0, ..unit };
        assert_eq!(project_point([1.0, 0.0, 0.0], &two, &pose).unwrap()[0], 2.0);
        assert!(matches!(
            project_point([0.0, 0.0, -2.0], &unit, &pose),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn plane_projection_equals_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let pose = PoseSampler::default().sample(&mut rng).unwrap();
            let h = pose.homography(&intr()).unwrap();
            for _ in 0..10 {
                let p = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
                let a = project_point([p[0], p[1], 0.0], &intr(), &pose).unwrap();
                let b = h.apply(p).unwrap();
                assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn depth_from_focal_identity() {
        let pose = CameraPose::fronto_parallel(2.0).unwrap();
        let k = Intrinsics { cx: 0.0, cy: 0.0, ..intr() };
        for (x, z) in [(1.0, 50.0), (-2.5, 12.0), (0.3, 7.0)] {
            let u = project_point([x, 0.7, z - 2.0], &k, &pose).unwrap()[0];
            assert!((u * z / x / k.fx - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sampler_is_deterministic_and_in_range() {
        let s = PoseSampler::default();
        let a = s.sample(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = s.sample(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let p = s.sample(&mut rng).unwrap();
            let t = p.tilt_deg();
            assert!((15.0 - 1e-9..=60.0 + 1e-9).contains(&t), "{t}");
        }
        let bad = PoseSampler { tilt_deg: [40.0, 20.0], ..s };
        assert!(bad.sample(&mut rng).is_err());
        let shallow = PoseSampler { tilt_deg: [0.0, 20.0], ..s };
        assert!(shallow.sample(&mut rng).is_err());
    }

    #[test]
    fn sampled_poses_are_well_conditioned() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = intr();
        for _ in 0..1000 {
            let pose = PoseSampler::default().sample(&mut rng).unwrap();
            let h = pose.homography(&k).unwrap();
            let f = focal_from_homography(&h, k.cx, k.cy, 1e4).unwrap();
            assert!((f.fx / k.fx - 1.0).abs() < 1e-8);
            assert!((f.fy / k.fy - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_corners_reproduce_pose_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reference = ReferenceOctagon::new(&TargetConfig::default());
        for _ in 0..100 {
            let pose = PoseSampler::default().sample(&mut rng).unwrap();
            let img = project_all(&reference.vertices, &intr(), &pose).unwrap();
            let h = dlt_homography(&reference.vertices, &img).unwrap();
            assert!(h.distance(&pose.homography(&intr()).unwrap()) < 1e-9);
            let f = focal_from_homography(&h, intr().cx, intr().cy, 1e4).unwrap();
            assert!((f.fx / intr().fx - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn fronto_parallel_render_is_symmetric() {
        let k = Intrinsics::centered(800.0, 800.0, 321, 241);
        let spec = SceneSpec::new(k, CameraPose::fronto_parallel(5.0).unwrap(), 321, 241);
        let scene = render_scene(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let c = scene.corners.corners;
        for i in 0..4 {
            let (a, b) = (c[i], c[i + 4]);
            assert!((a[0] + b[0] - 2.0 * k.cx).abs() < 1e-9);
            assert!((a[1] + b[1] - 2.0 * k.cy).abs() < 1e-9);
        }
        // Mirror symmetry of the image about the vertical center line.
        let img = &scene.image;
        for y in (0..241).step_by(7) {
            for x in 0..160 {
                let m = 320 - x;
                for ch in 0..3 {
                    assert!((img.get(x, y, ch) - img.get(m, y, ch)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn outside_frame_is_an_error() {
        let k = Intrinsics::centered(2000.0, 2000.0, 200, 200);
        let spec = SceneSpec::new(k, CameraPose::fronto_parallel(2.0).unwrap(), 200, 200);
        assert!(matches!(
            render_scene(&spec, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::OutsideFrame)
        ));
    }

    #[test]
    fn drop_vertex_draws_seven_sides() {
        let k = intr();
        let pose = CameraPose::from_angles(30.0, 45.0, 0.0, Vector3::new(0.0, 0.0, 10.0)).unwrap();
        let spec = SceneSpec {
            shape: TargetShape::DropVertex(3),
            ..SceneSpec::new(k, pose, 1280, 800)
        };
        let scene = render_scene(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(scene.drawn.len(), 7);
    }
}
