//! RANSAC estimation of the eight octagon edges and perpendicular-search
//! line refinement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::edge::parabola_offset;
use crate::error::{Error, Result};
use crate::raster::GradientField;

/// Line `n . x = d` with unit normal, plus the segment spanned by its support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeLine {
    pub normal: [f64; 2],
    pub d: f64,
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub support_count: usize,
}

impl EdgeLine {
    /// Unsigned perpendicular distance.
    #[inline]
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        (self.normal[0] * p[0] + self.normal[1] * p[1] - self.d).abs()
    }

    pub fn direction(&self) -> [f64; 2] {
        [-self.normal[1], self.normal[0]]
    }

    pub fn length(&self) -> f64 {
        (self.p1[0] - self.p0[0]).hypot(self.p1[1] - self.p0[1])
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [(self.p0[0] + self.p1[0]) / 2.0, (self.p0[1] + self.p1[1]) / 2.0]
    }

    pub fn project(&self, p: [f64; 2]) -> [f64; 2] {
        let s = self.normal[0] * p[0] + self.normal[1] * p[1] - self.d;
        [p[0] - s * self.normal[0], p[1] - s * self.normal[1]]
    }

    /// Intersection with another line, or `None` when the normals are
    /// parallel to within `1e-6`.
    pub fn intersect(&self, other: &EdgeLine) -> Option<[f64; 2]> {
        let [a1, b1] = self.normal;
        let [a2, b2] = other.normal;
        let det = a1 * b2 - a2 * b1;
        if det.abs() < 1e-6 {
            return None;
        }
        Some([
            (self.d * b2 - other.d * b1) / det,
            (a1 * other.d - a2 * self.d) / det,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    /// Probability that the most supported line is found.
    pub p: f64,
    /// Support distance threshold in pixels.
    pub tol: f64,
    pub min_support: usize,
    /// Lower bound on the iteration count.
    pub min_iterations: u64,
    /// Cap the iteration count at `C(N, 2)` and enumerate all pairs when
    /// the cap is reached.
    pub max_pairs_cap: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            p: 0.999,
            tol: 0.5,
            min_support: 5,
            min_iterations: 8,
            max_pairs_cap: true,
        }
    }
}

/// `K = ceil(log(1 - p) / log(1 - w^2))` with `w = 1 / (8 - i)^2`.
///
/// For the last edge (`i = 7`, `w = 1`) every pair is a support pair and
/// `K = 1`.
pub fn iteration_count(p: f64, i: usize) -> u64 {
    assert!((0.0..1.0).contains(&p), "p must be in [0,1)");
    assert!(i <= 7, "edge index must be 0..=7");
    if i == 7 || p == 0.0 {
        return 1;
    }
    let w = 1.0 / ((8 - i) as f64).powi(2);
    let k = ((1.0 - p).ln() / (1.0 - w * w).ln()).ceil();
    k.max(1.0) as u64
}

/// [`iteration_count`] bounded by the number of distinct pairs among
/// `n_points`.
pub fn iteration_count_capped(p: f64, i: usize, n_points: usize) -> u64 {
    let pairs = (n_points as u64) * (n_points.saturating_sub(1) as u64) / 2;
    iteration_count(p, i).min(pairs.max(1))
}

/// Total-least-squares line through `points`: the normal is the scatter
/// matrix eigenvector of smallest eigenvalue.
pub fn fit_tls(points: &[[f64; 2]]) -> Option<([f64; 2], f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy <= 0.0 {
        return None;
    }
    // Major-axis angle of the scatter ellipse; the normal is perpendicular.
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let normal = [-theta.sin(), theta.cos()];
    Some((normal, normal[0] * mx + normal[1] * my))
}

/// A fitted edge together with the indices of its support points.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFit {
    pub line: EdgeLine,
    pub support: Vec<usize>,
}

fn line_through(a: [f64; 2], b: [f64; 2]) -> Option<([f64; 2], f64)> {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return None;
    }
    let n = [-dy / len, dx / len];
    Some((n, n[0] * a[0] + n[1] * a[1]))
}

fn count_support(xs: &[f64], ys: &[f64], n: [f64; 2], d: f64, tol: f64) -> usize {
    xs.iter()
        .zip(ys)
        .filter(|(x, y)| (n[0] * **x + n[1] * **y - d).abs() <= tol)
        .count()
}

/// Builds an [`EdgeLine`] from a support set: TLS fit, endpoints at the
/// extreme projections of the support.
pub fn line_from_support(points: &[[f64; 2]]) -> Option<EdgeLine> {
    let (normal, d) = fit_tls(points)?;
    let dir = [-normal[1], normal[0]];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let t = dir[0] * p[0] + dir[1] * p[1];
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let at = |t: f64| [d * normal[0] + t * dir[0], d * normal[1] + t * dir[1]];
    Some(EdgeLine {
        normal,
        d,
        p0: at(lo),
        p1: at(hi),
        support_count: points.len(),
    })
}

/// Fits the most supported line for edge index `i` among `points`.
pub fn ransac_fit_edge<R: Rng + ?Sized>(
    points: &[[f64; 2]],
    cfg: &RansacConfig,
    i: usize,
    rng: &mut R,
) -> Result<EdgeFit> {
    let n = points.len();
    let fail = |support| Error::EdgeFit {
        edge: i,
        support,
        min_support: cfg.min_support,
    };
    if n < 2 {
        return Err(fail(n));
    }
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let pairs = (n as u64) * (n as u64 - 1) / 2;
    let k = iteration_count(cfg.p, i).max(cfg.min_iterations);

    let mut best: Option<(usize, [f64; 2], f64)> = None;
    let mut consider = |a: usize, b: usize| {
        if let Some((nrm, d)) = line_through(points[a], points[b]) {
            let c = count_support(&xs, &ys, nrm, d, cfg.tol);
            if best.is_none_or(|(bc, _, _)| c > bc) {
                best = Some((c, nrm, d));
            }
        }
    };
    if cfg.max_pairs_cap && k >= pairs {
        for a in 0..n {
            for b in a + 1..n {
                consider(a, b);
            }
        }
    } else {
        for _ in 0..k {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            consider(a, b);
        }
    }

    let (count, nrm, d) = best.ok_or_else(|| fail(0))?;
    if count < cfg.min_support.max(2) {
        return Err(fail(count));
    }
    let support: Vec<usize> = (0..n)
        .filter(|j| (nrm[0] * xs[*j] + nrm[1] * ys[*j] - d).abs() <= cfg.tol)
        .collect();
    let pts: Vec<[f64; 2]> = support.iter().map(|j| points[*j]).collect();
    let line = line_from_support(&pts).ok_or_else(|| fail(count))?;
    Ok(EdgeFit { line, support })
}

/// Fits eight edges in sequence, removing each support set before the next
/// fit. Support indices refer to `points`.
pub fn fit_all_edges<R: Rng + ?Sized>(
    points: &[[f64; 2]],
    cfg: &RansacConfig,
    rng: &mut R,
) -> Result<Vec<EdgeFit>> {
    if points.len() < 8 * cfg.min_support {
        return Err(Error::EdgeFit {
            edge: 0,
            support: points.len(),
            min_support: 8 * cfg.min_support,
        });
    }
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fits = Vec::with_capacity(8);
    for i in 0..8 {
        let subset: Vec<[f64; 2]> = remaining.iter().map(|j| points[*j]).collect();
        let fit = ransac_fit_edge(&subset, cfg, i, rng)?;
        let support: Vec<usize> = fit.support.iter().map(|k| remaining[*k]).collect();
        let mut drop = vec![false; subset.len()];
        for k in &fit.support {
            drop[*k] = true;
        }
        remaining = remaining
            .into_iter()
            .zip(drop)
            .filter_map(|(j, gone)| (!gone).then_some(j))
            .collect();
        fits.push(EdgeFit {
            line: fit.line,
            support,
        });
    }
    Ok(fits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Number of samples along the segment.
    pub samples: usize,
    /// Boundary as a fraction of the white border width; 0 disables.
    pub boundary: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            boundary: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOutcome {
    pub line: EdgeLine,
    pub updated: bool,
    /// Refined samples that stayed within the boundary.
    pub within: usize,
}

/// Nearest local maximum of `grad` along the normal through `c`, as a signed
/// subpixel offset. Searches offsets in `[-reach, reach]` at 1 px steps.
fn nearest_peak(grad: &GradientField, c: [f64; 2], n: [f64; 2], reach: i64) -> Option<f64> {
    let m = |s: f64| grad.magnitude_at(c[0] + s * n[0], c[1] + s * n[1]);
    let samples: Vec<f64> = (-reach - 1..=reach + 1).map(|s| m(s as f64)).collect();
    let mut best: Option<f64> = None;
    for k in 1..samples.len() - 1 {
        let (a, b, e) = (samples[k - 1], samples[k], samples[k + 1]);
        if b > a && b >= e {
            let s = (k as i64 - reach - 1) as f64;
            let off = s + parabola_offset(a, b, e).unwrap_or(0.0);
            if best.is_none_or(|o: f64| off.abs() < o.abs()) {
                best = Some(off);
            }
        }
    }
    best
}

/// Moves `line` onto the nearby gradient ridge.
///
/// `S` points are sampled evenly on the segment and each is moved to the
/// nearest magnitude peak along the normal. The line is replaced by the TLS
/// fit of the moved points only when more than `S / 2` of them moved no
/// further than `boundary * border_width`, where
/// `border_width = length * border_ratio`.
pub fn refine_line(
    line: &EdgeLine,
    grad: &GradientField,
    cfg: &RefineConfig,
    border_ratio: f64,
) -> RefineOutcome {
    let unchanged = |within| RefineOutcome {
        line: *line,
        updated: false,
        within,
    };
    if cfg.boundary <= 0.0 || cfg.samples < 2 {
        return unchanged(0);
    }
    let limit = cfg.boundary * line.length() * border_ratio;
    let reach = limit.ceil() as i64 + 2;
    let s = cfg.samples;
    let mut refined = Vec::with_capacity(s);
    for k in 0..s {
        let t = (k as f64 + 0.5) / s as f64;
        let c = [
            line.p0[0] + t * (line.p1[0] - line.p0[0]),
            line.p0[1] + t * (line.p1[1] - line.p0[1]),
        ];
        if let Some(off) = nearest_peak(grad, c, line.normal, reach) {
            if off.abs() <= limit {
                refined.push([c[0] + off * line.normal[0], c[1] + off * line.normal[1]]);
            }
        }
    }
    if 2 * refined.len() <= s {
        return unchanged(refined.len());
    }
    let Some((mut normal, mut d)) = fit_tls(&refined) else {
        return unchanged(refined.len());
    };
    // Keep the original orientation so downstream ordering is stable.
    if normal[0] * line.normal[0] + normal[1] * line.normal[1] < 0.0 {
        normal = [-normal[0], -normal[1]];
        d = -d;
    }
    let mut out = EdgeLine {
        normal,
        d,
        ..*line
    };
    out.p0 = out.project(line.p0);
    out.p1 = out.project(line.p1);
    RefineOutcome {
        line: out,
        updated: true,
        within: refined.len(),
    }
}
