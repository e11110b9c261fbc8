//! Independent oracles shared by the integration tests: central finite
//! differences, a brute-force Chamfer distance written from the definition,
//! and small random generators.

#![allow(dead_code)]

pub mod grad;

use foldgraph::pointcloud::{Point, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let pts = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    PointCloud::new(pts).unwrap()
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|)` over the whole vector; 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn euclid(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Mean over `from` of the distance to the closest point of `to`, summed in
/// index order.
pub fn brute_directional(from: &PointCloud, to: &PointCloud) -> f64 {
    let mut total = 0.0;
    for p in from.points() {
        let mut best = f64::INFINITY;
        for q in to.points() {
            best = best.min(euclid(p, q));
        }
        total += best;
    }
    total / from.len() as f64
}

pub fn brute_augmented(s: &PointCloud, r: &PointCloud) -> f64 {
    brute_directional(s, r).max(brute_directional(r, s))
}

pub fn brute_plain(s: &PointCloud, r: &PointCloud) -> f64 {
    brute_directional(s, r) + brute_directional(r, s)
}

/// Euclidean norm of `A x - x`.
pub fn fixed_point_residual(a: &foldgraph::linalg::Matrix, x: &[f64]) -> f64 {
    let ax = a.matvec(x).unwrap();
    ax.iter().zip(x).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}
