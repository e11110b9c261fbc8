//! Point clouds: container, normalization, Chamfer distances, text IO and
//! synthetic surface sampling.

mod chamfer;
mod io;
mod synthetic;

pub use chamfer::{
    augmented_chamfer, augmented_chamfer_grad, chamfer_plain, chamfer_plain_grad, loss_and_grad,
    match_clouds, LossKind, MatchResult,
};
pub use io::{read_cloud, read_ply_ascii, read_xyz, write_ply_ascii, write_xyz};
pub use synthetic::{sample_synthetic, Surface};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type Point = [f64; 3];

/// `N x 3` coordinates with an optional per-point scalar used for coloring.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    scalar: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("point cloud needs at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::Domain(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, scalar: None })
    }

    pub fn with_scalar(mut self, scalar: Vec<f64>) -> Result<Self> {
        if scalar.len() != self.points.len() {
            return Err(Error::Dimension(format!(
                "scalar channel of length {} for {} points",
                scalar.len(),
                self.points.len()
            )));
        }
        self.scalar = Some(scalar);
        Ok(self)
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.cols() != 3 {
            return Err(Error::Dimension(format!("point matrix must be Nx3, got {}x{}", m.rows(), m.cols())));
        }
        Self::new((0..m.rows()).map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]).collect())
    }

    /// Builds a cloud from a flat row-major `N x 3` buffer.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() % 3 != 0 {
            return Err(Error::Dimension(format!("{} values do not form 3-D points", values.len())));
        }
        Self::new(values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.len(), 3, self.flat()).expect("Nx3")
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn scalar(&self) -> Option<&[f64]> {
        self.scalar.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row permutation: output point `i` is input point `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::Dimension("permutation length differs from point count".into()));
        }
        let points = order.iter().map(|&i| self.points[i]).collect();
        let scalar = self.scalar.as_ref().map(|s| order.iter().map(|&i| s[i]).collect());
        Ok(Self { points, scalar })
    }

    /// Uniform scale plus translation sending the bounding box into the unit
    /// cube. The longest axis spans `[0, 1]`; shorter axes are centred, so a
    /// degenerate axis lands on 0.5.
    pub fn normalize_unit_cube(&self) -> PointCloud {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0_f64, f64::max);
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = [0.5; 3];
                if extent > 0.0 {
                    for a in 0..3 {
                        let pad = 0.5 * (1.0 - (hi[a] - lo[a]) / extent);
                        q[a] = ((p[a] - lo[a]) / extent + pad).clamp(0.0, 1.0);
                    }
                }
                q
            })
            .collect();
        PointCloud { points, scalar: self.scalar.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![[0.0, f64::NAN, 1.0]]).is_err());
    }

    #[test]
    fn normalize_spanning_cloud_is_unchanged() {
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.25, 0.5, 0.75]]).unwrap();
        let n = c.normalize_unit_cube();
        for (a, b) in c.points().iter().zip(n.points()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_single_point() {
        let c = PointCloud::new(vec![[-7.0, 3.0, 12.5]]).unwrap();
        assert_eq!(c.normalize_unit_cube().points(), &[[0.5, 0.5, 0.5]]);
    }

    #[test]
    fn normalize_cube_corners() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push([
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            ]);
        }
        let n = PointCloud::new(pts.clone()).unwrap().normalize_unit_cube();
        for (p, q) in pts.iter().zip(n.points()) {
            for k in 0..3 {
                assert_eq!(q[k], (p[k] + 1.0) / 2.0);
            }
        }
    }

    #[test]
    fn normalize_keeps_aspect_ratio() {
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [4.0, 2.0, 0.0]]).unwrap();
        let n = c.normalize_unit_cube();
        assert_eq!(n.points()[0], [0.0, 0.25, 0.5]);
        assert_eq!(n.points()[1], [1.0, 0.75, 0.5]);
    }
}
