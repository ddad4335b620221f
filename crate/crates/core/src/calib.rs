//! Plane-to-image homography from the eight corners and closed-form focal
//! lengths with the principal point held fixed.
//!
//! With `H = [h1 h2 h3] ~ A [r1 r2 t]` and `B = A^-T A^-1`, orthonormality of
//! `r1, r2` gives
//!
//! ```text
//! h1' B h2 = 0
//! h1' B h1 = h2' B h2
//! ```
//!
//! For a skewless `A` with known `(cx, cy)`, write `a = (hx - cx hz, hy - cy hz)`.
//! Then `hi' B hj = alpha ai_x aj_x + beta ai_y aj_y + hi_z hj_z` with
//! `alpha = 1/fx^2`, `beta = 1/fy^2`, so each view gives a 2x2 linear system.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::octagon::{CanonicalOctagon, OctagonCorners};

/// Physical target dimensions.
///
/// Defaults describe a 30 in (0.762 m) sign with a 3/4 in white border; the
/// red octagon is the outer octagon shrunk by the border on every side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// Outer across-flats size of the sign, meters.
    pub across_flats_m: f64,
    /// White border width, meters.
    pub border_width_m: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            across_flats_m: 0.762,
            border_width_m: 0.019,
        }
    }
}

impl TargetConfig {
    pub fn inner_across_flats(&self) -> f64 {
        self.across_flats_m - 2.0 * self.border_width_m
    }

    pub fn inner_circumradius(&self) -> f64 {
        self.inner_across_flats() / 2.0 / 22.5f64.to_radians().cos()
    }

    pub fn outer_circumradius(&self) -> f64 {
        self.across_flats_m / 2.0 / 22.5f64.to_radians().cos()
    }

    /// Side length of the red octagon.
    pub fn inner_side(&self) -> f64 {
        self.inner_across_flats() * 22.5f64.to_radians().tan()
    }

    /// White border width divided by the red octagon's side length.
    pub fn border_ratio(&self) -> f64 {
        self.border_width_m / self.inner_side()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.across_flats_m > 0.0) || !(self.border_width_m >= 0.0) || self.inner_across_flats() <= 0.0 {
            return Err(Error::InvalidParameter(format!("bad target geometry {self:?}")));
        }
        Ok(())
    }
}

/// Red octagon corners on the target plane (meters, `Z = 0`, centered at the
/// origin, `Y` pointing down), in [`OctagonCorners`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOctagon {
    pub vertices: [[f64; 2]; 8],
    pub border_ratio: f64,
}

impl ReferenceOctagon {
    pub fn new(target: &TargetConfig) -> Self {
        Self {
            vertices: CanonicalOctagon::with_circumradius(target.inner_circumradius()).vertices,
            border_ratio: target.border_ratio(),
        }
    }
}

/// 3x3 plane-to-image map, Frobenius norm 1, bottom-right entry `>= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let norm = m.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateView("zero or non-finite homography".into()));
        }
        let mut h = m / norm;
        if h[(2, 2)] < 0.0 {
            h = -h;
        }
        Ok(Self(h))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let v = self.0 * Vector3::new(p[0], p[1], 1.0);
        let scale = self.0.abs().max().max(1.0) * (p[0].abs() + p[1].abs() + 1.0);
        if v.z.abs() <= 1e-14 * scale {
            return Err(Error::PointAtInfinity);
        }
        Ok([v.x / v.z, v.y / v.z])
    }

    /// Frobenius distance to `other`, minimized over the overall sign.
    pub fn distance(&self, other: &Homography) -> f64 {
        (self.0 - other.0).norm().min((self.0 + other.0).norm())
    }
}

/// Similarity taking `points` to centroid zero and mean distance `sqrt(2)`.
pub fn hartley_normalization(points: &[[f64; 2]]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    let (mx, my) = (sx / n, sy / n);
    let mean = points.iter().map(|p| (p[0] - mx).hypot(p[1] - my)).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let v = t * Vector3::new(p[0], p[1], 1.0);
    [v.x / v.z, v.y / v.z]
}

/// The `2N x 9` DLT design matrix.
pub fn design_matrix(world: &[[f64; 2]], image: &[[f64; 2]]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(2 * world.len(), 9);
    for (k, (w, m)) in world.iter().zip(image).enumerate() {
        let (x, y) = (w[0], w[1]);
        let (u, v) = (m[0], m[1]);
        let r = 2 * k;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    a
}

fn sorted_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|p, q| q.total_cmp(p));
    s
}

/// Ratio of the largest to the eighth singular value of the design matrix,
/// with or without Hartley normalization of both point sets.
pub fn design_condition(world: &[[f64; 2]], image: &[[f64; 2]], normalize: bool) -> f64 {
    let (w, m): (Vec<[f64; 2]>, Vec<[f64; 2]>) = if normalize {
        let tw = hartley_normalization(world);
        let tm = hartley_normalization(image);
        (
            world.iter().map(|p| transform(&tw, *p)).collect(),
            image.iter().map(|p| transform(&tm, *p)).collect(),
        )
    } else {
        (world.to_vec(), image.to_vec())
    };
    let s = sorted_singular_values(&design_matrix(&w, &m));
    s[0] / s[7]
}

/// Normalized DLT from `N >= 4` correspondences.
pub fn dlt_homography(world: &[[f64; 2]], image: &[[f64; 2]]) -> Result<Homography> {
    if world.len() != image.len() || world.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "need >= 4 matched points, got {} and {}",
            world.len(),
            image.len()
        )));
    }
    let tw = hartley_normalization(world);
    let tm = hartley_normalization(image);
    let wn: Vec<[f64; 2]> = world.iter().map(|p| transform(&tw, *p)).collect();
    let mn: Vec<[f64; 2]> = image.iter().map(|p| transform(&tm, *p)).collect();
    let a = design_matrix(&wn, &mn);
    // A'A is 9x9 regardless of N; its eigenvectors are A's right singular vectors.
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|i, j| svd.singular_values[*j].total_cmp(&svd.singular_values[*i]));
    if svd.singular_values.len() < 9 {
        return Err(Error::DegenerateView("too few correspondences".into()));
    }
    let s = |k: usize| svd.singular_values[order[k]];
    if s(7) <= 1e-10 * s(0) {
        return Err(Error::DegenerateView("rank-deficient DLT design matrix".into()));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tm_inv = tm
        .try_inverse()
        .ok_or_else(|| Error::DegenerateView("singular normalization".into()))?;
    Homography::from_matrix(tm_inv * hn * tw)
}

/// Pinhole intrinsics without skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Principal point at the image center, `((w - 1)/2, (h - 1)/2)` in the
    /// pixel-center convention.
    pub fn centered(fx: f64, fy: f64, width: usize, height: usize) -> Self {
        let (cx, cy) = image_center(width, height);
        Self { fx, fy, cx, cy }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

pub fn image_center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// The two linear constraints on `(alpha, beta)` for one homography.
pub fn focal_constraints(h: &Homography, cx: f64, cy: f64) -> (Matrix2<f64>, Vector2<f64>) {
    let m = h.matrix();
    let h1 = m.column(0);
    let h2 = m.column(1);
    let a1 = [h1[0] - cx * h1[2], h1[1] - cy * h1[2]];
    let a2 = [h2[0] - cx * h2[2], h2[1] - cy * h2[2]];
    let lhs = Matrix2::new(
        a1[0] * a2[0],
        a1[1] * a2[1],
        a1[0] * a1[0] - a2[0] * a2[0],
        a1[1] * a1[1] - a2[1] * a2[1],
    );
    let rhs = Vector2::new(-h1[2] * h2[2], h2[2] * h2[2] - h1[2] * h1[2]);
    (lhs, rhs)
}

/// Per-view focal estimate with its conditioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalEstimate {
    pub fx: f64,
    pub fy: f64,
    /// Condition number of the column-equilibrated 2x2 system.
    pub condition: f64,
}

/// Solves the two orthonormality constraints for `fx, fy`.
///
/// Views whose column-equilibrated system has condition number
/// `>= cond_max` are rejected as degenerate; fronto-parallel views land here
/// because both constraints vanish.
pub fn focal_from_homography(h: &Homography, cx: f64, cy: f64, cond_max: f64) -> Result<FocalEstimate> {
    let (m, rhs) = focal_constraints(h, cx, cy);
    let c0 = m.column(0).norm();
    let c1 = m.column(1).norm();
    if !(c0 > 0.0 && c1 > 0.0) {
        return Err(Error::DegenerateView("vanishing constraint column".into()));
    }
    let scaled = Matrix2::new(m[(0, 0)] / c0, m[(0, 1)] / c1, m[(1, 0)] / c0, m[(1, 1)] / c1);
    let sv = scaled.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < cond_max) {
        return Err(Error::DegenerateView(format!("condition number {condition:.3e}")));
    }
    let y = scaled
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateView("singular focal system".into()))?;
    let alpha = y[0] / c0;
    let beta = y[1] / c1;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::NegativeFocal { alpha, beta });
    }
    Ok(FocalEstimate {
        fx: 1.0 / alpha.sqrt(),
        fy: 1.0 / beta.sqrt(),
        condition,
    })
}

/// RMS image distance between `image` and the mapped `world` points.
pub fn reprojection_error(h: &Homography, world: &[[f64; 2]], image: &[[f64; 2]]) -> Result<f64> {
    if world.len() != image.len() || world.is_empty() {
        return Err(Error::InvalidParameter("mismatched correspondences".into()));
    }
    let mut ss = 0.0;
    for (w, m) in world.iter().zip(image) {
        let p = h.apply(*w)?;
        ss += (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2);
    }
    Ok((ss / world.len() as f64).sqrt())
}

/// Homography from the reference octagon to detected corners.
pub fn octagon_homography(reference: &ReferenceOctagon, corners: &OctagonCorners) -> Result<Homography> {
    dlt_homography(&reference.vertices, &corners.corners)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn world() -> Vec<[f64; 2]> {
        ReferenceOctagon::new(&TargetConfig::default()).vertices.to_vec()
    }

    fn map(h: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
        transform(h, p)
    }

    fn random_h(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        loop {
            let m = Matrix3::<f64>::from_fn(|r, c| {
                let base = if r == c { 1.0 } else { 0.0 };
                base + rng.gen_range(-0.3..0.3)
            });
            let m = Matrix3::new(900.0, 0.0, 500.0, 0.0, 900.0, 400.0, 0.0, 0.0, 1.0) * m;
            if m.determinant().abs() > 1.0 && world().iter().all(|p| (m * Vector3::new(p[0], p[1], 1.0)).z > 0.1) {
                return m;
            }
        }
    }

    #[test]
    fn exact_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let truth = Homography::from_matrix(random_h(&mut rng)).unwrap();
            let img: Vec<[f64; 2]> = world().iter().map(|p| map(truth.matrix(), *p)).collect();
            let est = dlt_homography(&world(), &img).unwrap();
            assert!(est.distance(&truth) < 1e-9, "{}", est.distance(&truth));
        }
    }

    #[test]
    fn identity_correspondence() {
        let est = dlt_homography(&world(), &world()).unwrap();
        let expect = Matrix3::identity() / 3f64.sqrt();
        assert!((est.matrix() - expect).norm() < 1e-12);
    }

    #[test]
    fn collinear_points_rejected() {
        let w: Vec<[f64; 2]> = (0..8).map(|k| [k as f64, 2.0 * k as f64]).collect();
        let m: Vec<[f64; 2]> = (0..8).map(|k| [3.0 * k as f64, k as f64 + 1.0]).collect();
        assert!(matches!(dlt_homography(&w, &m), Err(Error::DegenerateView(_))));
        assert!(dlt_homography(&w[..3], &m[..3]).is_err());
    }

    fn pose_h(intr: &Intrinsics, rot: &Matrix3<f64>, t: Vector3<f64>) -> Homography {
        let mut rt = Matrix3::zeros();
        rt.set_column(0, &rot.column(0));
        rt.set_column(1, &rot.column(1));
        rt.set_column(2, &t);
        Homography::from_matrix(intr.matrix() * rt).unwrap()
    }

    #[test]
    fn reference_focals_recovered() {
        let intr = Intrinsics::centered(1810.4, 1840.1, 1920, 1200);
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(nalgebra::Vector3::new(1.0, 1.0, 0.0)), 0.6).into_inner();
        let h = pose_h(&intr, &rot, Vector3::new(0.5, -0.2, 12.0));
        let f = focal_from_homography(&h, intr.cx, intr.cy, 1e4).unwrap();
        assert!((f.fx / 1810.4 - 1.0).abs() < 1e-6);
        assert!((f.fy / 1840.1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fronto_parallel_rejected() {
        let intr = Intrinsics::centered(1810.4, 1840.1, 1920, 1200);
        for roll in [0.0, 0.3, 1.2] {
            let rot = Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), roll).into_inner();
            let h = pose_h(&intr, &rot, Vector3::new(0.3, 0.1, 10.0));
            assert!(matches!(
                focal_from_homography(&h, intr.cx, intr.cy, 1e4),
                Err(Error::DegenerateView(_))
            ));
        }
    }

    #[test]
    fn identity_camera_is_degenerate() {
        let h = Homography::from_matrix(Matrix3::identity()).unwrap();
        // Identity is a fronto-parallel view: only alpha = beta is determined.
        let (m, rhs) = focal_constraints(&h, 0.0, 0.0);
        assert_eq!(m.row(0).norm(), 0.0);
        assert_eq!(rhs.norm(), 0.0);
        assert!((m[(1, 0)] + m[(1, 1)]).abs() < 1e-15);
        assert!(focal_from_homography(&h, 0.0, 0.0, 1e4).is_err());
    }

    #[test]
    fn scale_invariance() {
        let intr = Intrinsics::centered(1200.0, 1250.0, 1280, 800);
        let rot = Rotation3::from_euler_angles(0.5, 0.4, 0.1).into_inner();
        let h = pose_h(&intr, &rot, Vector3::new(0.0, 0.0, 8.0));
        let f0 = focal_from_homography(&h, intr.cx, intr.cy, 1e4).unwrap();
        for lambda in [-3.0, 1e-3, 250.0] {
            let scaled = Homography::from_matrix(h.matrix() * lambda).unwrap();
            let f = focal_from_homography(&scaled, intr.cx, intr.cy, 1e4).unwrap();
            assert!((f.fx - f0.fx).abs() < 1e-9 * f0.fx);
            assert!((f.fy - f0.fy).abs() < 1e-9 * f0.fy);
        }
        // Unnormalized scaling enters the constraint system homogeneously.
        let (m1, r1) = focal_constraints(&h, intr.cx, intr.cy);
        let raw = Homography(h.matrix() * 2.0);
        let (m2, r2) = focal_constraints(&raw, intr.cx, intr.cy);
        assert!((m2 - m1 * 4.0).norm() < 1e-12 * m2.norm());
        assert!((r2 - r1 * 4.0).norm() <= 1e-12 * r2.norm().max(1e-300));
    }

    #[test]
    fn reprojection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = Homography::from_matrix(random_h(&mut rng)).unwrap();
        let mut img: Vec<[f64; 2]> = world().iter().map(|p| truth.apply(*p).unwrap()).collect();
        assert!(reprojection_error(&truth, &world(), &img).unwrap() < 1e-9);
        img[3][0] += 1.0;
        let rms = reprojection_error(&truth, &world(), &img).unwrap();
        assert!((rms - 1.0 / 8f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn noisy_reprojection_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut total = 0.0;
        for _ in 0..100 {
            let truth = Homography::from_matrix(random_h(&mut rng)).unwrap();
            let img: Vec<[f64; 2]> = world()
                .iter()
                .map(|p| {
                    let q = truth.apply(*p).unwrap();
                    [q[0] + noise.sample(&mut rng), q[1] + noise.sample(&mut rng)]
                })
                .collect();
            let est = dlt_homography(&world(), &img).unwrap();
            total += reprojection_error(&est, &world(), &img).unwrap();
        }
        let mean = total / 100.0;
        assert!((0.15..=0.45).contains(&mean), "mean rms {mean}");
    }

    #[test]
    fn normalization_improves_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let h = random_h(&mut rng);
            let img: Vec<[f64; 2]> = world().iter().map(|p| map(&h, *p)).collect();
            assert!(design_condition(&world(), &img, true) <= design_condition(&world(), &img, false));
        }
    }

    #[test]
    fn target_geometry() {
        let t = TargetConfig::default();
        let r = ReferenceOctagon::new(&t);
        let side = (r.vertices[1][0] - r.vertices[0][0]).hypot(r.vertices[1][1] - r.vertices[0][1]);
        assert!((side - t.inner_side()).abs() < 1e-12);
        let c = r.vertices.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
        assert!((t.border_ratio() - 0.019 / t.inner_side()).abs() < 1e-15);
    }
}
