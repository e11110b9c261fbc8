use std::str::FromStr;

use super::{Point, PointCloud};
use crate::error::{Error, Result};

/// Nearest-neighbour correspondences in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// For each source point, the index of its nearest reconstruction point.
    pub forward_idx: Vec<usize>,
    /// For each reconstruction point, the index of its nearest source point.
    pub backward_idx: Vec<usize>,
    /// Mean source-to-reconstruction nearest distance.
    pub d_forward: f64,
    /// Mean reconstruction-to-source nearest distance.
    pub d_backward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Max of the two directional mean distances.
    #[default]
    Augmented,
    /// Sum of the two directional mean distances.
    Plain,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Augmented => "augcd",
            LossKind::Plain => "cd",
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "augcd" | "augmented" => Ok(LossKind::Augmented),
            "cd" | "plain" => Ok(LossKind::Plain),
            other => Err(Error::Usage(format!("unknown loss kind '{other}' (expected augcd|cd)"))),
        }
    }
}

#[inline]
fn dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Index and distance of the nearest point in `targets`; lowest index on ties.
fn nearest(p: &Point, targets: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in targets.iter().enumerate() {
        let d = dist(p, q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Exact O(NM) matching in both directions. Sums run in index order, so the
/// result is bitwise reproducible.
pub fn match_clouds(s: &PointCloud, r: &PointCloud) -> MatchResult {
    let (src, rec) = (s.points(), r.points());
    let mut forward_idx = Vec::with_capacity(src.len());
    let mut total = 0.0;
    for p in src {
        let (j, d) = nearest(p, rec);
        forward_idx.push(j);
        total += d;
    }
    let d_forward = total / src.len() as f64;

    let mut backward_idx = Vec::with_capacity(rec.len());
    let mut total = 0.0;
    for q in rec {
        let (i, d) = nearest(q, src);
        backward_idx.push(i);
        total += d;
    }
    let d_backward = total / rec.len() as f64;
    MatchResult { forward_idx, backward_idx, d_forward, d_backward }
}

fn check_non_empty(s: &PointCloud, r: &PointCloud) -> Result<()> {
    if s.is_empty() || r.is_empty() {
        return Err(Error::Domain("Chamfer distance of an empty cloud".into()));
    }
    Ok(())
}

/// `max(d_forward, d_backward)` together with the matching that produced it.
pub fn augmented_chamfer(s: &PointCloud, r: &PointCloud) -> Result<(f64, MatchResult)> {
    check_non_empty(s, r)?;
    let m = match_clouds(s, r);
    Ok((m.d_forward.max(m.d_backward), m))
}

/// `d_forward + d_backward`.
pub fn chamfer_plain(s: &PointCloud, r: &PointCloud) -> Result<f64> {
    check_non_empty(s, r)?;
    let m = match_clouds(s, r);
    Ok(m.d_forward + m.d_backward)
}

/// Unit direction `(a - b)/|a - b|`, zero when the points coincide.
fn unit(a: &Point, b: &Point) -> [f64; 3] {
    let d = dist(a, b);
    if d == 0.0 {
        return [0.0; 3];
    }
    [(a[0] - b[0]) / d, (a[1] - b[1]) / d, (a[2] - b[2]) / d]
}

fn forward_grad(s: &PointCloud, r: &PointCloud, m: &MatchResult, weight: f64, g: &mut [f64]) {
    let w = weight / s.len() as f64;
    for (p, &j) in s.points().iter().zip(&m.forward_idx) {
        let u = unit(&r.points()[j], p);
        for k in 0..3 {
            g[3 * j + k] += w * u[k];
        }
    }
}

fn backward_grad(s: &PointCloud, r: &PointCloud, m: &MatchResult, weight: f64, g: &mut [f64]) {
    let w = weight / r.len() as f64;
    for (j, (q, &i)) in r.points().iter().zip(&m.backward_idx).enumerate() {
        let u = unit(q, &s.points()[i]);
        for k in 0..3 {
            g[3 * j + k] += w * u[k];
        }
    }
}

/// Subgradient of the augmented distance with respect to the coordinates of
/// `r`, as a flat `M x 3` buffer. The matching is frozen; when both
/// directional terms tie, each contributes half.
pub fn augmented_chamfer_grad(s: &PointCloud, r: &PointCloud, m: &MatchResult) -> Vec<f64> {
    let mut g = vec![0.0; 3 * r.len()];
    if m.d_forward > m.d_backward {
        forward_grad(s, r, m, 1.0, &mut g);
    } else if m.d_backward > m.d_forward {
        backward_grad(s, r, m, 1.0, &mut g);
    } else {
        forward_grad(s, r, m, 0.5, &mut g);
        backward_grad(s, r, m, 0.5, &mut g);
    }
    g
}

pub fn chamfer_plain_grad(s: &PointCloud, r: &PointCloud, m: &MatchResult) -> Vec<f64> {
    let mut g = vec![0.0; 3 * r.len()];
    forward_grad(s, r, m, 1.0, &mut g);
    backward_grad(s, r, m, 1.0, &mut g);
    g
}

/// Loss value and its gradient with respect to `r`.
pub fn loss_and_grad(kind: LossKind, s: &PointCloud, r: &PointCloud) -> Result<(f64, Vec<f64>)> {
    check_non_empty(s, r)?;
    let m = match_clouds(s, r);
    Ok(match kind {
        LossKind::Augmented => (m.d_forward.max(m.d_backward), augmented_chamfer_grad(s, r, &m)),
        LossKind::Plain => (m.d_forward + m.d_backward, chamfer_plain_grad(s, r, &m)),
    })
}
