//! Corner extraction from the fitted edges, clockwise ordering, and the
//! affine octagon check.

use nalgebra::{DMatrix, Matrix2};

use crate::error::{Error, Result};
use crate::lines::EdgeLine;

/// Eight corners, clockwise on screen (image y axis points down), index 0 at
/// the left end of the top edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctagonCorners {
    pub corners: [[f64; 2]; 8],
}

impl OctagonCorners {
    pub fn centroid(&self) -> [f64; 2] {
        centroid(&self.corners)
    }

    pub fn mean_side(&self) -> f64 {
        (0..8)
            .map(|i| {
                let (a, b) = (self.corners[i], self.corners[(i + 1) % 8]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum::<f64>()
            / 8.0
    }

    /// All consecutive turns have the same (clockwise) sign.
    pub fn is_clockwise_convex(&self) -> bool {
        (0..8).all(|i| {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 8];
            let c = self.corners[(i + 2) % 8];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            cross > 0.0
        })
    }

    /// RMS distance to another corner set under index correspondence.
    pub fn rms_distance(&self, other: &OctagonCorners) -> f64 {
        let ss: f64 = self
            .corners
            .iter()
            .zip(&other.corners)
            .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
            .sum();
        (ss / 8.0).sqrt()
    }
}

fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (x, y) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [x / n, y / n]
}

/// Regular octagon with unit circumradius in the same ordering convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalOctagon {
    pub vertices: [[f64; 2]; 8],
}

impl Default for CanonicalOctagon {
    fn default() -> Self {
        Self::with_circumradius(1.0)
    }
}

impl CanonicalOctagon {
    pub fn with_circumradius(r: f64) -> Self {
        let mut vertices = [[0.0; 2]; 8];
        for (k, v) in vertices.iter_mut().enumerate() {
            let a = (-112.5 + 45.0 * k as f64).to_radians();
            *v = [r * a.cos(), r * a.sin()];
        }
        Self { vertices }
    }
}

/// Pairwise line intersections lying within `endpoint_radius` of an
/// endpoint of both parent segments. Near-parallel pairs are skipped.
pub fn corner_candidates(lines: &[EdgeLine], endpoint_radius: f64) -> Vec<[f64; 2]> {
    let near = |l: &EdgeLine, p: [f64; 2]| {
        [l.p0, l.p1]
            .iter()
            .any(|e| (e[0] - p[0]).hypot(e[1] - p[1]) <= endpoint_radius)
    };
    let mut out = Vec::new();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if let Some(p) = lines[i].intersect(&lines[j]) {
                if near(&lines[i], p) && near(&lines[j], p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Accepts exactly eight candidates.
pub fn validate_count(candidates: &[[f64; 2]]) -> Result<[[f64; 2]; 8]> {
    <[[f64; 2]; 8]>::try_from(candidates).map_err(|_| Error::CornerCount(candidates.len()))
}

/// Sorts eight corners clockwise about their centroid and rotates the
/// sequence so index 0 is the left one of the two uppermost corners.
pub fn order_corners(points: &[[f64; 2]; 8]) -> Result<OctagonCorners> {
    for i in 0..8 {
        for j in i + 1..8 {
            let (a, b) = (points[i], points[j]);
            if (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-9 {
                return Err(Error::DuplicateCorners);
            }
        }
    }
    let c = centroid(points);
    let mut sorted = *points;
    // With y pointing down, increasing atan2 runs clockwise on screen.
    sorted.sort_by(|a, b| {
        let ta = (a[1] - c[1]).atan2(a[0] - c[0]);
        let tb = (b[1] - c[1]).atan2(b[0] - c[0]);
        ta.total_cmp(&tb)
    });
    let mut by_height: Vec<usize> = (0..8).collect();
    by_height.sort_by(|i, j| sorted[*i][1].total_cmp(&sorted[*j][1]).then(i.cmp(j)));
    let (u, v) = (by_height[0], by_height[1]);
    let anchor = if sorted[u][0] <= sorted[v][0] { u } else { v };
    sorted.rotate_left(anchor);
    Ok(OctagonCorners { corners: sorted })
}

/// Outcome of a successful [`affine_octagon_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit {
    /// `[[a, b, tx], [c, d, ty]]` mapping canonical to observed vertices.
    pub transform: [[f64; 3]; 2],
    /// Cyclic shift used for the correspondence.
    pub shift: usize,
    /// Largest matched-vertex residual, in pixels.
    pub residual: f64,
    /// `residual / mean side length`.
    pub normalized: f64,
}

fn fit_affine(src: &[[f64; 2]; 8], dst: &[[f64; 2]; 8], shift: usize) -> Option<([[f64; 3]; 2], f64)> {
    let x = DMatrix::from_fn(8, 3, |r, c| if c < 2 { src[r][c] } else { 1.0 });
    let y = DMatrix::from_fn(8, 2, |r, c| dst[(r + shift) % 8][c]);
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(&y, 1e-12).ok()?;
    let t = [
        [beta[(0, 0)], beta[(1, 0)], beta[(2, 0)]],
        [beta[(0, 1)], beta[(1, 1)], beta[(2, 1)]],
    ];
    let residual = (0..8)
        .map(|r| {
            let p = src[r];
            let q = dst[(r + shift) % 8];
            let u = t[0][0] * p[0] + t[0][1] * p[1] + t[0][2];
            let v = t[1][0] * p[0] + t[1][1] * p[1] + t[1][2];
            (u - q[0]).hypot(v - q[1])
        })
        .fold(0.0, f64::max);
    Some((t, residual))
}

/// Checks that `oct` is an affine image of `canon`.
///
/// A least-squares affine map is fitted for each of the eight cyclic
/// correspondences; the best one must leave a maximum vertex residual of at
/// most `tol` times the mean side length of `oct`.
pub fn affine_octagon_check(
    oct: &OctagonCorners,
    canon: &CanonicalOctagon,
    tol: f64,
) -> Result<AffineFit> {
    let side = oct.mean_side();
    let mut best: Option<AffineFit> = None;
    for shift in 0..8 {
        let Some((t, residual)) = fit_affine(&canon.vertices, &oct.corners, shift) else {
            continue;
        };
        if best.is_none_or(|b| residual < b.residual) {
            best = Some(AffineFit {
                transform: t,
                shift,
                residual,
                normalized: residual / side,
            });
        }
    }
    let limit = tol * side;
    let Some(fit) = best else {
        return Err(Error::AffineReject {
            residual: f64::INFINITY,
            limit,
        });
    };
    let linear = Matrix2::new(
        fit.transform[0][0],
        fit.transform[0][1],
        fit.transform[1][0],
        fit.transform[1][1],
    );
    let scale = linear.norm_squared();
    if !(side > 0.0) || linear.determinant().abs() <= 1e-9 * scale {
        return Err(Error::AffineReject {
            residual: f64::INFINITY,
            limit,
        });
    }
    if fit.residual > limit {
        return Err(Error::AffineReject {
            residual: fit.residual,
            limit,
        });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lines::line_from_support;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn octagon(r: f64, c: [f64; 2]) -> [[f64; 2]; 8] {
        let mut v = CanonicalOctagon::with_circumradius(r).vertices;
        for p in &mut v {
            p[0] += c[0];
            p[1] += c[1];
        }
        v
    }

    fn edge_lines(v: &[[f64; 2]; 8]) -> Vec<EdgeLine> {
        (0..8)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % 8]);
                let pts: Vec<[f64; 2]> = (0..=20)
                    .map(|k| {
                        let t = k as f64 / 20.0;
                        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
                    })
                    .collect();
                line_from_support(&pts).unwrap()
            })
            .collect()
    }

    fn apply(t: [[f64; 3]; 2], p: [f64; 2]) -> [f64; 2] {
        [
            t[0][0] * p[0] + t[0][1] * p[1] + t[0][2],
            t[1][0] * p[0] + t[1][1] * p[1] + t[1][2],
        ]
    }

    #[test]
    fn exact_lines_give_exact_corners() {
        let v = octagon(80.0, [200.0, 150.0]);
        let lines = edge_lines(&v);
        // Brute force: all 28 pairs, count intersections close to any vertex.
        let mut all = 0;
        for i in 0..8 {
            for j in i + 1..8 {
                if let Some(p) = lines[i].intersect(&lines[j]) {
                    if v.iter().any(|q| (q[0] - p[0]).hypot(q[1] - p[1]) < 1e-6) {
                        all += 1;
                    }
                }
            }
        }
        assert_eq!(all, 8);
        let cands = corner_candidates(&lines, 10.0);
        assert_eq!(cands.len(), 8);
        for c in &cands {
            assert!(v.iter().any(|q| (q[0] - c[0]).hypot(q[1] - c[1]) < 1e-9));
        }
    }

    #[test]
    fn parallel_pair_contributes_nothing() {
        let v = octagon(80.0, [200.0, 150.0]);
        let lines = edge_lines(&v);
        // Edges 0 and 4 are opposite and parallel.
        assert!(lines[0].intersect(&lines[4]).is_none());
        assert!(corner_candidates(&[lines[0], lines[4]], 1e6).is_empty());
    }

    #[test]
    fn zero_radius_keeps_only_exact_hits() {
        let v = octagon(80.0, [200.0, 150.0]);
        let mut lines = edge_lines(&v);
        for l in &mut lines {
            l.p0[0] += 0.3;
            l.p1[0] += 0.3;
        }
        assert!(corner_candidates(&lines, 0.0).is_empty());
    }

    #[test]
    fn count_validation() {
        let v = octagon(1.0, [0.0, 0.0]);
        assert!(validate_count(&v).is_ok());
        assert!(matches!(validate_count(&v[..7]), Err(Error::CornerCount(7))));
        let mut nine = v.to_vec();
        nine.push([5.0, 5.0]);
        assert!(matches!(validate_count(&nine), Err(Error::CornerCount(9))));
    }

    #[test]
    fn canonical_anchor_is_upper_left() {
        let v = octagon(50.0, [100.0, 100.0]);
        // Vertex angles -112.5 and -67.5 deg are the top edge; -112.5 is left.
        let o = order_corners(&v).unwrap();
        assert_eq!(o.corners, v);
        assert!(o.corners[0][0] < o.corners[1][0]);
        assert!((o.corners[0][1] - o.corners[1][1]).abs() < 1e-9);
        assert!(o.is_clockwise_convex());
    }

    #[test]
    fn ordering_is_permutation_invariant() {
        let v = octagon(50.0, [100.0, 100.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut p = v;
            p.shuffle(&mut rng);
            assert_eq!(order_corners(&p).unwrap().corners, v);
        }
    }

    #[test]
    fn ordering_stable_under_small_roll() {
        let v = octagon(50.0, [0.0, 0.0]);
        for deg in [-19.0f64, -10.0, 0.0, 10.0, 19.0] {
            let (s, c) = deg.to_radians().sin_cos();
            let rolled: Vec<[f64; 2]> = v.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
            let o = order_corners(&rolled.clone().try_into().unwrap()).unwrap();
            for k in 0..8 {
                assert!((o.corners[k][0] - rolled[k][0]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn duplicates_rejected() {
        let mut v = octagon(50.0, [0.0, 0.0]);
        v[3] = v[2];
        assert!(matches!(order_corners(&v), Err(Error::DuplicateCorners)));
    }

    #[test]
    fn affine_images_pass() {
        let canon = CanonicalOctagon::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let t = [
                [rng.gen_range(20.0..80.0), rng.gen_range(-20.0..20.0), rng.gen_range(0.0..500.0)],
                [rng.gen_range(-20.0..20.0), rng.gen_range(20.0..80.0), rng.gen_range(0.0..500.0)],
            ];
            let pts: [[f64; 2]; 8] = canon.vertices.map(|p| apply(t, p));
            let o = order_corners(&pts).unwrap();
            let fit = affine_octagon_check(&o, &canon, 0.05).unwrap();
            assert!(fit.residual <= 1e-9, "{}", fit.residual);
        }
    }

    #[test]
    fn displaced_vertex_rejected() {
        let canon = CanonicalOctagon::default();
        let v = octagon(50.0, [100.0, 100.0]);
        let o = order_corners(&v).unwrap();
        let side = o.mean_side();
        let mut moved = v;
        // Push vertex 2 outward radially by 20% of a side.
        let d = [moved[2][0] - 100.0, moved[2][1] - 100.0];
        let n = d[0].hypot(d[1]);
        moved[2][0] += 0.2 * side * d[0] / n;
        moved[2][1] += 0.2 * side * d[1] / n;
        let om = order_corners(&moved).unwrap();
        // Residual of the best affine fit, computed independently over all shifts.
        let best = (0..8)
            .map(|s| fit_affine(&canon.vertices, &om.corners, s).unwrap().1)
            .fold(f64::INFINITY, f64::min);
        assert!(best / om.mean_side() > 0.05);
        assert!(matches!(
            affine_octagon_check(&om, &canon, 0.05),
            Err(Error::AffineReject { .. })
        ));
    }

    #[test]
    fn collapsed_shape_rejected() {
        let canon = CanonicalOctagon::default();
        let flat = OctagonCorners {
            corners: canon.vertices.map(|p| [p[0] * 10.0, 0.0]),
        };
        assert!(affine_octagon_check(&flat, &canon, 0.05).is_err());
    }

    #[test]
    fn pass_fail_is_affine_invariant() {
        let canon = CanonicalOctagon::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let base = octagon(50.0, [0.0, 0.0]);
        let mut bad = base;
        bad[5][0] += 15.0;
        for _ in 0..100 {
            let t = [
                [rng.gen_range(0.8..1.5), rng.gen_range(-0.3..0.3), rng.gen_range(-50.0..50.0)],
                [rng.gen_range(-0.3..0.3), rng.gen_range(0.8..1.5), rng.gen_range(-50.0..50.0)],
            ];
            for set in [base, bad] {
                let before = affine_octagon_check(&order_corners(&set).unwrap(), &canon, 0.05).is_ok();
                let mapped = set.map(|p| apply(t, p));
                let after = affine_octagon_check(&order_corners(&mapped).unwrap(), &canon, 0.05).is_ok();
                assert_eq!(before, after);
            }
            // Similarity maps preserve the normalized residual exactly.
            let (s, c) = rng.gen_range(-0.3f64..0.3).sin_cos();
            let k = rng.gen_range(0.5..3.0);
            let sim = [[k * c, -k * s, 7.0], [k * s, k * c, -3.0]];
            let r0 = affine_octagon_check(&order_corners(&bad).unwrap(), &canon, 10.0).unwrap().normalized;
            let mapped = bad.map(|p| apply(sim, p));
            let r1 = affine_octagon_check(&order_corners(&mapped).unwrap(), &canon, 10.0).unwrap().normalized;
            assert!((r0 - r1).abs() <= 1e-6 * r0);
        }
    }
}
