//! Deterministic samplers for simple analytic surfaces.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Sphere of the given radius around the origin.
    Sphere { radius: f64 },
    /// Ring torus in the xy-plane: `(sqrt(x^2+y^2) - major)^2 + z^2 = minor^2`.
    Torus { major: f64, minor: f64 },
    /// Genus-2 surface: boundary of the union of two solid tori centred at
    /// `(-major, 0, 0)` and `(major, 0, 0)`.
    DoubleTorus { major: f64, minor: f64 },
    /// Surface of the cube `[-half, half]^3`.
    CubeSurface { half: f64 },
    /// Square `[-half, half]^2` in the plane `z = 0`.
    Plane { half: f64 },
    /// 'Z'-shaped polyline in the plane `z = 0`: top edge, diagonal, bottom edge.
    ZCurve { half: f64 },
}

impl Surface {
    pub fn name(&self) -> &'static str {
        match self {
            Surface::Sphere { .. } => "sphere",
            Surface::Torus { .. } => "torus",
            Surface::DoubleTorus { .. } => "double_torus",
            Surface::CubeSurface { .. } => "cube_surface",
            Surface::Plane { .. } => "plane",
            Surface::ZCurve { .. } => "z_curve",
        }
    }

    /// Parses a surface name plus `key=value` parameters. Torus radii are
    /// `R` (major) and `r` (minor); the other shapes take `radius` or `half`.
    pub fn parse(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let allowed: &[&str] = match name {
            "sphere" => &["radius"],
            "torus" | "double_torus" => &["R", "r"],
            "cube_surface" | "cube" | "plane" | "z_curve" => &["half"],
            other => return Err(Error::Domain(format!("unknown surface '{other}'"))),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Domain(format!("surface '{name}' has no parameter '{k}'")));
        }
        let s = match name {
            "sphere" => Surface::Sphere { radius: get("radius", 1.0) },
            "torus" => Surface::Torus { major: get("R", 1.0), minor: get("r", 0.3) },
            "double_torus" => Surface::DoubleTorus { major: get("R", 1.0), minor: get("r", 0.3) },
            "cube_surface" | "cube" => Surface::CubeSurface { half: get("half", 1.0) },
            "plane" => Surface::Plane { half: get("half", 1.0) },
            _ => Surface::ZCurve { half: get("half", 1.0) },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Surface::Sphere { radius } => radius > 0.0,
            Surface::Torus { major, minor } | Surface::DoubleTorus { major, minor } => {
                minor > 0.0 && minor < major
            }
            Surface::CubeSurface { half } | Surface::Plane { half } | Surface::ZCurve { half } => half > 0.0,
        };
        if ok && self.params().iter().all(|(_, v)| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid parameters for {self}")))
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Surface::Sphere { radius } => vec![("radius", radius)],
            Surface::Torus { major, minor } | Surface::DoubleTorus { major, minor } => {
                vec![("R", major), ("r", minor)]
            }
            Surface::CubeSurface { half } | Surface::Plane { half } | Surface::ZCurve { half } => {
                vec![("half", half)]
            }
        }
    }

    /// Signed residual of the surface's implicit equation (0 on the surface).
    pub fn residual(&self, p: &Point) -> f64 {
        match *self {
            Surface::Sphere { radius } => (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - radius,
            Surface::Torus { major, minor } => torus_residual(p, 0.0, major, minor),
            Surface::DoubleTorus { major, minor } => {
                let a = torus_residual(p, -major, major, minor);
                let b = torus_residual(p, major, major, minor);
                if a.abs() < b.abs() {
                    a
                } else {
                    b
                }
            }
            Surface::CubeSurface { half } => p.iter().fold(0.0_f64, |m, v| m.max(v.abs())) - half,
            Surface::Plane { .. } => p[2],
            Surface::ZCurve { half } => {
                let segs = z_segments(half);
                let d = segs
                    .iter()
                    .map(|(a, b)| segment_distance([p[0], p[1]], *a, *b))
                    .fold(f64::INFINITY, f64::min);
                d.hypot(p[2])
            }
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        let params = self.params();
        if !params.is_empty() {
            let parts: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", parts.join(","))?;
        }
        Ok(())
    }
}

/// `(sqrt((x-cx)^2+y^2) - major)^2 + z^2 - minor^2`, scaled back to a length.
fn torus_residual(p: &Point, cx: f64, major: f64, minor: f64) -> f64 {
    let rho = ((p[0] - cx).powi(2) + p[1] * p[1]).sqrt();
    ((rho - major).powi(2) + p[2] * p[2]).sqrt() - minor
}

fn inside_solid_torus(p: &Point, cx: f64, major: f64, minor: f64) -> bool {
    torus_residual(p, cx, major, minor) < 0.0
}

fn sample_torus_point(rng: &mut ChaCha8Rng, cx: f64, major: f64, minor: f64) -> Point {
    // area element is proportional to (major + minor cos v)
    loop {
        let u = rng.random_range(0.0..TAU);
        let v = rng.random_range(0.0..TAU);
        let accept = rng.random_range(0.0..1.0) * (major + minor) <= major + minor * v.cos();
        if accept {
            let ring = major + minor * v.cos();
            return [cx + ring * u.cos(), ring * u.sin(), minor * v.sin()];
        }
    }
}

type Seg = ([f64; 2], [f64; 2]);

fn z_segments(h: f64) -> [Seg; 3] {
    [([-h, h], [h, h]), ([h, h], [-h, -h]), ([-h, -h], [h, -h])]
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

/// Samples `n` points uniformly (by area, or by length for curves) from the
/// surface. The same seed always yields the same cloud.
pub fn sample_synthetic(surface: Surface, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Domain("need at least one point".into()));
    }
    surface.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    match surface {
        Surface::Sphere { radius } => {
            while points.len() < n {
                let v: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if norm > 1e-12 {
                    points.push([radius * v[0] / norm, radius * v[1] / norm, radius * v[2] / norm]);
                }
            }
        }
        Surface::Torus { major, minor } => {
            for _ in 0..n {
                points.push(sample_torus_point(&mut rng, 0.0, major, minor));
            }
        }
        Surface::DoubleTorus { major, minor } => {
            while points.len() < n {
                let left = rng.random_bool(0.5);
                let (own, other) = if left { (-major, major) } else { (major, -major) };
                let p = sample_torus_point(&mut rng, own, major, minor);
                if !inside_solid_torus(&p, other, major, minor) {
                    points.push(p);
                }
            }
        }
        Surface::CubeSurface { half } => {
            for _ in 0..n {
                let face = rng.random_range(0..6usize);
                let axis = face % 3;
                let sign = if face < 3 { -1.0 } else { 1.0 };
                let mut p = [0.0; 3];
                for (a, v) in p.iter_mut().enumerate() {
                    *v = if a == axis { sign * half } else { rng.random_range(-half..=half) };
                }
                points.push(p);
            }
        }
        Surface::Plane { half } => {
            for _ in 0..n {
                points.push([rng.random_range(-half..=half), rng.random_range(-half..=half), 0.0]);
            }
        }
        Surface::ZCurve { half } => {
            let segs = z_segments(half);
            let lengths: Vec<f64> = segs
                .iter()
                .map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]))
                .collect();
            let total: f64 = lengths.iter().sum();
            for _ in 0..n {
                let mut s = rng.random_range(0.0..total);
                let mut k = 0;
                while k < 2 && s > lengths[k] {
                    s -= lengths[k];
                    k += 1;
                }
                let t = (s / lengths[k]).clamp(0.0, 1.0);
                let (a, b) = segs[k];
                points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), 0.0]);
            }
        }
    }
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_points_on_unit_sphere() {
        let c = sample_synthetic(Surface::Sphere { radius: 1.0 }, 100, 7).unwrap();
        for p in c.points() {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn torus_points_satisfy_implicit_equation() {
        let (big, small) = (1.0, 0.3);
        let c = sample_synthetic(Surface::Torus { major: big, minor: small }, 500, 3).unwrap();
        for p in c.points() {
            let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let lhs = (rho - big).powi(2) + p[2] * p[2];
            assert!((lhs - small * small).abs() < 1e-9, "{lhs}");
        }
    }

    #[test]
    fn every_surface_is_on_its_implicit_equation() {
        let shapes = [
            Surface::Sphere { radius: 2.0 },
            Surface::Torus { major: 1.0, minor: 0.4 },
            Surface::DoubleTorus { major: 1.0, minor: 0.3 },
            Surface::CubeSurface { half: 1.0 },
            Surface::Plane { half: 1.0 },
            Surface::ZCurve { half: 1.0 },
        ];
        for s in shapes {
            let c = sample_synthetic(s, 300, 11).unwrap();
            for p in c.points() {
                assert!(s.residual(p).abs() < 1e-9, "{s} residual {}", s.residual(p));
            }
        }
    }

    #[test]
    fn double_torus_has_no_points_inside_either_solid() {
        let c = sample_synthetic(Surface::DoubleTorus { major: 1.0, minor: 0.3 }, 400, 5).unwrap();
        for p in c.points() {
            assert!(torus_residual(p, -1.0, 1.0, 0.3) >= -1e-12);
            assert!(torus_residual(p, 1.0, 1.0, 0.3) >= -1e-12);
        }
    }

    #[test]
    fn same_seed_same_cloud() {
        let s = Surface::Torus { major: 1.0, minor: 0.3 };
        assert_eq!(sample_synthetic(s, 64, 9).unwrap(), sample_synthetic(s, 64, 9).unwrap());
        assert_ne!(sample_synthetic(s, 64, 9).unwrap(), sample_synthetic(s, 64, 10).unwrap());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(sample_synthetic(Surface::Torus { major: 0.3, minor: 1.0 }, 10, 0).is_err());
        let mut p = BTreeMap::new();
        p.insert("R".to_string(), 0.2);
        p.insert("r".to_string(), 0.3);
        assert!(Surface::parse("torus", &p).is_err());
        assert!(Surface::parse("klein", &BTreeMap::new()).is_err());
        assert!(sample_synthetic(Surface::Sphere { radius: 1.0 }, 0, 0).is_err());
    }
}
