//! Canny non-maximum suppression, Devernay subpixel correction and contour
//! chaining.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::raster::GradientField;

/// Edge point with its unit normal (gradient direction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubpixelPoint {
    pub x: f64,
    pub y: f64,
    pub nx: f64,
    pub ny: f64,
    /// Gradient magnitude at the source pixel.
    pub strength: f64,
}

impl SubpixelPoint {
    pub fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Tangent obtained by rotating the normal a quarter turn.
    fn tangent(&self) -> [f64; 2] {
        [-self.ny, self.nx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub points: Vec<SubpixelPoint>,
    pub closed: bool,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
        [sx / n, sy / n]
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(SubpixelPoint::pos).collect()
    }
}

/// Pixels that are local maxima of the gradient magnitude along the
/// gradient direction and exceed `mag_threshold * max_magnitude`.
///
/// The comparison is strict against the backward neighbor and non-strict
/// against the forward one, so a plateau of two equal pixels yields a
/// single survivor. The outermost pixel ring is skipped.
pub fn canny_nms(grad: &GradientField, mag_threshold: f64) -> Result<Vec<SubpixelPoint>> {
    if !(mag_threshold > 0.0 && mag_threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mag_threshold must be in (0,1), got {mag_threshold}"
        )));
    }
    let max = grad.max_magnitude();
    // Rounding leaves ~1e-17 gradients on constant images.
    if max <= 1e-12 {
        return Ok(Vec::new());
    }
    let floor = mag_threshold * max;
    let mut out = Vec::new();
    for y in 1..grad.height.saturating_sub(1) {
        for x in 1..grad.width.saturating_sub(1) {
            let i = grad.index(x, y);
            let m0 = grad.magnitude[i];
            if m0 < floor || m0 <= 0.0 {
                continue;
            }
            let nx = grad.gx[i] / m0;
            let ny = grad.gy[i] / m0;
            let (xf, yf) = (x as f64, y as f64);
            let m_minus = grad.magnitude_at(xf - nx, yf - ny);
            let m_plus = grad.magnitude_at(xf + nx, yf + ny);
            if m0 > m_minus && m0 >= m_plus {
                out.push(SubpixelPoint {
                    x: xf,
                    y: yf,
                    nx,
                    ny,
                    strength: m0,
                });
            }
        }
    }
    Ok(out)
}

/// Vertex offset of the parabola through `(-1, m_minus), (0, m0), (1, m_plus)`.
///
/// Returns `None` when the samples do not describe a maximum (curvature
/// `2 m0 - m_minus - m_plus` not positive).
pub fn parabola_offset(m_minus: f64, m0: f64, m_plus: f64) -> Option<f64> {
    let curvature = 2.0 * m0 - m_minus - m_plus;
    if !(curvature > 0.0) {
        return None;
    }
    Some(((m_minus - m_plus) / (2.0 * (m_minus - 2.0 * m0 + m_plus))).clamp(-0.5, 0.5))
}

/// Result of [`devernay_refine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refined {
    pub point: SubpixelPoint,
    pub offset: f64,
    /// Set when the three samples were not a strict maximum and the offset
    /// was forced to zero.
    pub degenerate: bool,
}

/// Moves a Canny survivor along its normal to the vertex of the quadratic
/// through the magnitudes at -1, 0, +1 px.
pub fn devernay_refine(p: &SubpixelPoint, grad: &GradientField) -> Refined {
    let m_minus = grad.magnitude_at(p.x - p.nx, p.y - p.ny);
    let m0 = grad.magnitude_at(p.x, p.y);
    let m_plus = grad.magnitude_at(p.x + p.nx, p.y + p.ny);
    let (offset, degenerate) = match parabola_offset(m_minus, m0, m_plus) {
        Some(d) => (d, false),
        None => (0.0, true),
    };
    Refined {
        point: SubpixelPoint {
            x: p.x + offset * p.nx,
            y: p.y + offset * p.ny,
            ..*p
        },
        offset,
        degenerate,
    }
}

/// NMS followed by Devernay refinement of every survivor.
pub fn subpixel_edges(grad: &GradientField, mag_threshold: f64) -> Result<Vec<SubpixelPoint>> {
    Ok(canny_nms(grad, mag_threshold)?
        .iter()
        .map(|p| devernay_refine(p, grad).point)
        .collect())
}

struct Grid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[SubpixelPoint], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets
                .entry(((p.x / cell).floor() as i64, (p.y / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        Self { cell, buckets }
    }

    fn around(&self, x: f64, y: f64) -> impl Iterator<Item = usize> + '_ {
        let cx = (x / self.cell).floor() as i64;
        let cy = (y / self.cell).floor() as i64;
        (-1..=1)
            .flat_map(move |dy| (-1..=1).map(move |dx| (cx + dx, cy + dy)))
            .filter_map(|k| self.buckets.get(&k))
            .flatten()
            .copied()
    }
}

/// True when `b` may follow `a` in a chain running along `a`'s tangent
/// (`forward`) or against it.
fn links(a: &SubpixelPoint, b: &SubpixelPoint, d_chain: f64, forward: bool) -> Option<f64> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let dist = dx.hypot(dy);
    if dist > d_chain || dist == 0.0 {
        return None;
    }
    if a.nx * b.nx + a.ny * b.ny <= 0.0 {
        return None;
    }
    let t = a.tangent();
    let along = dx * t[0] + dy * t[1];
    let ok = if forward { along > 0.0 } else { along < 0.0 };
    ok.then_some(dist)
}

/// Greedy nearest-neighbour chaining.
///
/// Starting from each unclaimed point, the chain grows along the tangent
/// and then against it, always taking the nearest unclaimed point within
/// `d_chain` whose normal is within 90 degrees. Isolated points are dropped.
/// Chains are returned longest first.
pub fn chain_points(points: &[SubpixelPoint], d_chain: f64) -> Vec<Chain> {
    if points.is_empty() || !(d_chain > 0.0) {
        return Vec::new();
    }
    let grid = Grid::new(points, d_chain);
    let mut claimed = vec![false; points.len()];

    let next = |from: usize, forward: bool, claimed: &[bool]| -> Option<usize> {
        let a = &points[from];
        grid.around(a.x, a.y)
            .filter(|j| !claimed[*j])
            .filter_map(|j| links(a, &points[j], d_chain, forward).map(|d| (d, j)))
            .min_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)))
            .map(|(_, j)| j)
    };

    let mut chains = Vec::new();
    for seed in 0..points.len() {
        if claimed[seed] {
            continue;
        }
        claimed[seed] = true;
        let mut fwd = vec![seed];
        while let Some(j) = next(*fwd.last().unwrap(), true, &claimed) {
            claimed[j] = true;
            fwd.push(j);
        }
        let mut back = Vec::new();
        let mut cur = seed;
        while let Some(j) = next(cur, false, &claimed) {
            claimed[j] = true;
            back.push(j);
            cur = j;
        }
        back.reverse();
        back.extend(fwd);
        if back.len() < 2 {
            continue;
        }
        let first = &points[back[0]];
        let last = &points[*back.last().unwrap()];
        let closed = back.len() >= 3 && links(last, first, d_chain, true).is_some();
        chains.push(Chain {
            points: back.into_iter().map(|i| points[i]).collect(),
            closed,
        });
    }
    chains.sort_by_key(|c| std::cmp::Reverse(c.len()));
    chains
}

/// The chain with the most points; ties go to the chain whose centroid is
/// closest to `roi_center`.
pub fn select_longest_chain(chains: Vec<Chain>, roi_center: [f64; 2]) -> Result<Chain> {
    let dist = |c: &Chain| {
        let m = c.centroid();
        (m[0] - roi_center[0]).hypot(m[1] - roi_center[1])
    };
    chains
        .into_iter()
        .min_by(|a, b| b.len().cmp(&a.len()).then(dist(a).total_cmp(&dist(b))))
        .ok_or(Error::NoContour)
}
