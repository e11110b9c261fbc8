//! Constructive checks of the reconstruction bounds and graph-smoothness
//! results: voxel codecs with certified Chamfer bounds, a solver for graphs
//! on which two given signals have zero total variation, and randomized
//! checks that Haar and Laplacian filtering never increase variation.
//!
//! Voxel indices are zero-based: voxel `(i, j, k)` covers
//! `[i/K, (i+1)/K) x [j/K, (j+1)/K) x [k/K, (k+1)/K)`, with the last voxel on
//! each axis closed at 1.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{self, GraphAdjacency, LatticeSignal};
use crate::linalg::{self, Matrix};
use crate::pointcloud::{augmented_chamfer, Point, PointCloud};

/// Which voxels a code records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stride {
    EveryVoxel,
    /// Only voxels with `i + j + k` even.
    EveryOther,
}

/// Where a decoded voxel places its point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Proxy {
    #[default]
    Center,
    /// Far corner `((i+1)/K, (j+1)/K, (k+1)/K)`; exists to show the bound
    /// fails for corner proxies.
    Corner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelCode {
    pub k_res: usize,
    pub stride: Stride,
    /// Raster order over the recorded voxels (`k` fastest).
    pub occupancy: Vec<u8>,
}

fn raster(k_res: usize) -> impl Iterator<Item = [usize; 3]> {
    (0..k_res).flat_map(move |i| (0..k_res).flat_map(move |j| (0..k_res).map(move |k| [i, j, k])))
}

fn even(v: [usize; 3]) -> bool {
    (v[0] + v[1] + v[2]) % 2 == 0
}

fn flat(v: [usize; 3], k_res: usize) -> usize {
    (v[0] * k_res + v[1]) * k_res + v[2]
}

impl VoxelCode {
    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    /// Voxels this code records, in code order.
    pub fn voxels(&self) -> Vec<[usize; 3]> {
        match self.stride {
            Stride::EveryVoxel => raster(self.k_res).collect(),
            Stride::EveryOther => raster(self.k_res).filter(|&v| even(v)).collect(),
        }
    }

    pub fn occupied_voxels(&self) -> Vec<[usize; 3]> {
        self.voxels().into_iter().zip(&self.occupancy).filter(|(_, &o)| o == 1).map(|(v, _)| v).collect()
    }

    /// Full-resolution occupancy; voxels a strided code does not record read
    /// as empty.
    pub fn is_occupied(&self, v: [usize; 3]) -> bool {
        match self.stride {
            Stride::EveryVoxel => self.occupancy[flat(v, self.k_res)] == 1,
            Stride::EveryOther => even(v) && self.occupancy[flat(v, self.k_res) / 2] == 1,
        }
    }

    /// Keeps the even-parity voxels of a full code.
    pub fn every_other(&self) -> Result<VoxelCode> {
        if self.stride != Stride::EveryVoxel {
            return Err(Error::Domain("code is already strided".into()));
        }
        let occupancy = raster(self.k_res).filter(|&v| even(v)).map(|v| self.occupancy[flat(v, self.k_res)]).collect();
        Ok(VoxelCode { k_res: self.k_res, stride: Stride::EveryOther, occupancy })
    }
}

/// Voxel containing `p` at resolution `k_res`.
pub fn voxel_of(p: &Point, k_res: usize) -> [usize; 3] {
    p.map(|x| ((x * k_res as f64).floor() as usize).min(k_res - 1))
}

pub fn voxel_proxy(v: [usize; 3], k_res: usize, proxy: Proxy) -> Point {
    let off = match proxy {
        Proxy::Center => 0.5,
        Proxy::Corner => 1.0,
    };
    v.map(|i| (i as f64 + off) / k_res as f64)
}

/// Occupancy of every voxel of a cloud in the unit cube.
pub fn voxel_encode(s: &PointCloud, k_res: usize) -> Result<VoxelCode> {
    if k_res == 0 {
        return Err(Error::Domain("voxel resolution must be at least 1".into()));
    }
    let mut occupancy = vec![0u8; k_res * k_res * k_res];
    for (n, p) in s.points().iter().enumerate() {
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Domain(format!("point {n} {p:?} lies outside the unit cube")));
        }
        occupancy[flat(voxel_of(p, k_res), k_res)] = 1;
    }
    Ok(VoxelCode { k_res, stride: Stride::EveryVoxel, occupancy })
}

/// One point per recorded occupied voxel.
pub fn voxel_decode(code: &VoxelCode, proxy: Proxy) -> Result<PointCloud> {
    let pts: Vec<Point> = code.occupied_voxels().into_iter().map(|v| voxel_proxy(v, code.k_res, proxy)).collect();
    if pts.is_empty() {
        return Err(Error::Domain("voxel code has no occupied voxel".into()));
    }
    PointCloud::new(pts)
}

/// Adds every voxel `v` such that some `v + d`, `d` in `{0,1}^3`, was
/// decoded, and returns the centers of the result.
pub fn interpolate(code: &VoxelCode) -> Result<PointCloud> {
    let k_res = code.k_res;
    let mut pts = Vec::new();
    for v in raster(k_res) {
        let hit = (0..8).any(|d| {
            let w = [v[0] + (d & 1), v[1] + ((d >> 1) & 1), v[2] + ((d >> 2) & 1)];
            w.iter().all(|&x| x < k_res) && code.is_occupied(w)
        });
        if hit {
            pts.push(voxel_proxy(v, k_res, Proxy::Center));
        }
    }
    if pts.is_empty() {
        return Err(Error::Domain("voxel code has no occupied voxel".into()));
    }
    PointCloud::new(pts)
}

/// Face-neighbour sandwich: every voxel's occupancy lies between the min
/// and max occupancy of its in-range face neighbours. Voxels without
/// neighbours (K = 1) are unconstrained.
pub fn check_smoothness(code: &VoxelCode) -> Result<()> {
    if code.stride != Stride::EveryVoxel {
        return Err(Error::Domain("smoothness is defined on full codes".into()));
    }
    let k = code.k_res as isize;
    for v in raster(code.k_res) {
        let own = code.occupancy[flat(v, code.k_res)];
        let (mut lo, mut hi, mut any) = (1u8, 0u8, false);
        for axis in 0..3 {
            for step in [-1isize, 1] {
                let mut w = v.map(|x| x as isize);
                w[axis] += step;
                if w.iter().all(|&x| (0..k).contains(&x)) {
                    let o = code.occupancy[flat(w.map(|x| x as usize), code.k_res)];
                    lo = lo.min(o);
                    hi = hi.max(o);
                    any = true;
                }
            }
        }
        if any && !(lo <= own && own <= hi) {
            return Err(Error::Precondition(format!(
                "occupancy is not smooth at voxel ({}, {}, {}): value {own}, neighbours in [{lo}, {hi}]",
                v[0], v[1], v[2]
            )));
        }
    }
    Ok(())
}

/// Outcome of one bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub theorem: u32,
    /// Resolution per axis (voxel theorems) or signal length (graph ones).
    pub k: usize,
    /// Code length (voxel theorems) or number of trials (graph ones).
    pub c: usize,
    pub distance: f64,
    pub bound: f64,
    pub pass: bool,
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "theorem {} K {} C {} distance {} bound {} {}",
            self.theorem,
            self.k,
            self.c,
            self.distance,
            self.bound,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// `sqrt(3) / (2 C^(1/3))`.
pub fn thm1_bound(c: usize) -> f64 {
    3f64.sqrt() / (2.0 * (c as f64).cbrt())
}

/// `1 / (2C)^(1/3)`.
pub fn thm2_bound(c: usize) -> f64 {
    1.0 / (2.0 * c as f64).cbrt()
}

pub const BOUND_SLACK: f64 = 1e-12;

fn exact_cube_root(c: usize) -> Result<usize> {
    let k = (c as f64).cbrt().round() as usize;
    if k == 0 || k * k * k != c {
        return Err(Error::Domain(format!("code length {c} is not a positive perfect cube")));
    }
    Ok(k)
}

/// Full voxel code of length `C = K^3`, decoded at `proxy` points.
pub fn certify_thm1(s: &PointCloud, code_len: usize, proxy: Proxy) -> Result<Certificate> {
    let k = exact_cube_root(code_len)?;
    let code = voxel_encode(s, k)?;
    let rec = voxel_decode(&code, proxy)?;
    let (distance, _) = augmented_chamfer(s, &rec)?;
    let bound = 3f64.sqrt() / (2.0 * k as f64);
    Ok(Certificate { theorem: 1, k, c: code_len, distance, bound, pass: distance <= bound + BOUND_SLACK })
}

/// Every-other-voxel code plus interpolation, for clouds whose occupancy is
/// smooth.
pub fn certify_thm2(s: &PointCloud, k_res: usize) -> Result<Certificate> {
    let full = voxel_encode(s, k_res)?;
    check_smoothness(&full)?;
    let code = full.every_other()?;
    let rec = interpolate(&code)?;
    let (distance, _) = augmented_chamfer(s, &rec)?;
    let bound = 1.0 / k_res as f64;
    Ok(Certificate { theorem: 2, k: k_res, c: code.len(), distance, bound, pass: distance <= bound + BOUND_SLACK })
}

/// Graph on which both signals are fixed points, so each has zero graph
/// total variation. Rows are minimum-norm solutions of the two linear
/// constraints, which makes `A` the orthogonal projector onto
/// `span{x1, x2}`; with more than two nodes that is never the identity.
pub fn solve_zero_tv(x1: &[f64], x2: &[f64]) -> Result<Matrix> {
    let m = x1.len();
    if x2.len() != m {
        return Err(Error::Dimension(format!("signals of lengths {m} and {}", x2.len())));
    }
    if m <= 2 {
        return Err(Error::Domain(format!("zero-variation graphs need more than two nodes, got {m}")));
    }
    if x1.iter().chain(x2).any(|v| !v.is_finite()) {
        return Err(Error::Domain("signals must be finite".into()));
    }
    // orthonormal basis of span{x1, x2} by twice-applied Gram-Schmidt
    let scale = linalg::norm2(x1).max(linalg::norm2(x2));
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for x in [x1, x2] {
        let mut q = x.to_vec();
        for _ in 0..2 {
            for b in &basis {
                let d = linalg::dot(&q, b);
                q.iter_mut().zip(b).for_each(|(a, bi)| *a -= d * bi);
            }
        }
        let n = linalg::norm2(&q);
        if n > 1e-12 * scale && n > 0.0 {
            basis.push(q.into_iter().map(|v| v / n).collect());
        }
    }
    let mut a = Matrix::from_fn(m, m, |i, j| basis.iter().map(|b| b[i] * b[j]).sum());

    if a.sub(&Matrix::identity(m))?.frobenius_norm() <= 1e-8 {
        // a direction orthogonal to both signals exists since m > 2
        let mut n = vec![0.0; m];
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for b in &basis {
                let d = linalg::dot(&cand, b);
                cand.iter_mut().zip(b).for_each(|(c, bi)| *c -= d * bi);
            }
            if linalg::norm2(&cand) > 0.5 {
                n = cand;
                break;
            }
        }
        let nn = linalg::norm2(&n);
        for j in 0..m {
            a[(0, j)] += 1e-3 * n[j] / nn;
        }
    }

    for x in [x1, x2] {
        let tv = graph::graph_tv(&a, x)?;
        if tv > 1e-9 * linalg::dot(x, x).max(1.0) {
            return Err(Error::Verification(format!("zero-variation graph leaves variation {tv:e}")));
        }
    }
    Ok(a)
}

/// `TV(x) - TV(h x)` with `h = (I + A)/2`; non-negative when filtering
/// smooths `x`.
pub fn tv_decrease_margin(a: &Matrix, x: &[f64]) -> Result<f64> {
    let adj = GraphAdjacency::new(a.clone()).ok();
    let hx = match adj {
        Some(adj) => graph::haar_filter(&adj, &Matrix::column(x))?.into_vec(),
        None => {
            let ax = a.matvec(x)?;
            x.iter().zip(&ax).map(|(u, v)| 0.5 * (u + v)).collect()
        }
    };
    Ok(graph::graph_tv(a, x)? - graph::graph_tv(a, &hx)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    pub trials: usize,
    pub violations: usize,
    /// Smallest `before - after` seen (negative means an increase).
    pub worst_margin: f64,
    pub spectral_radius: f64,
}

pub const TV_TOLERANCE: f64 = 1e-10;

fn random_signal(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Randomized check that the Haar filter never raises graph total variation.
pub fn check_tv_decrease(a: &Matrix, trials: usize, seed: u64) -> Result<DecreaseReport> {
    let radius = graph::spectral_radius(a)?;
    if radius > 1.0 + 1e-9 {
        return Err(Error::Precondition(format!("spectral radius {radius} exceeds 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DecreaseReport { trials, violations: 0, worst_margin: f64::INFINITY, spectral_radius: radius };
    for _ in 0..trials {
        let x = random_signal(&mut rng, a.rows());
        let margin = tv_decrease_margin(a, &x)?;
        report.worst_margin = report.worst_margin.min(margin);
        if margin < -TV_TOLERANCE {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Randomized check that `(mu I + L)^-1` never raises `x^T L x`. This holds
/// for every graph only when `mu >= 1`; smaller `mu` amplifies the
/// eigencomponents with `lambda < 1 - mu`.
pub fn check_quadratic_decrease(a: &GraphAdjacency, mu: f64, trials: usize, seed: u64) -> Result<DecreaseReport> {
    let lap = graph::laplacian(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DecreaseReport { trials, violations: 0, worst_margin: f64::INFINITY, spectral_radius: f64::NAN };
    for _ in 0..trials {
        let x = random_signal(&mut rng, a.len());
        let hx = graph::laplacian_filter(a, &Matrix::column(&x), mu)?.into_vec();
        let margin = graph::quadratic_variation(&lap, &x)? - graph::quadratic_variation(&lap, &hx)?;
        report.worst_margin = report.worst_margin.min(margin);
        if margin < -TV_TOLERANCE {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Symmetric doubly stochastic matrix: a random convex combination of
/// `(P + P^T)/2` over random permutations `P`.
pub fn random_symmetric_stochastic(m: usize, terms: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut a = Matrix::zeros(m, m);
    let weights: Vec<f64> = (0..terms.max(1)).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut perm: Vec<usize> = (0..m).collect();
    for w in weights {
        perm.shuffle(rng);
        let w = 0.5 * w / total;
        for (i, &j) in perm.iter().enumerate() {
            a[(i, j)] += w;
            a[(j, i)] += w;
        }
    }
    a
}

/// The 4x4 binary "Z" shape.
pub fn z_shape_lattice() -> LatticeSignal {
    LatticeSignal::from_rows(&[&[0, 1, 1, 1], &[0, 0, 1, 0], &[0, 1, 0, 0], &[1, 1, 1, 0]]).expect("valid shape")
}

/// Row and column coordinates (one-based) of the "Z" shape's occupied
/// cells, ordered along the stroke.
pub fn z_shape_signals() -> (Vec<f64>, Vec<f64>) {
    (vec![1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 4.0, 4.0], vec![2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 2.0, 3.0])
}

/// Graph over the eight stroke nodes that fixes both coordinate signals.
pub fn z_shape_adjacency() -> Matrix {
    let mut a = Matrix::zeros(8, 8);
    for (i, row) in [
        vec![(0, 1.0)],
        vec![(0, 0.5), (2, 0.5)],
        vec![(2, 1.0)],
        vec![(2, 0.5), (4, 0.5)],
        vec![(3, 0.5), (5, 0.5)],
        vec![(5, 1.0)],
        vec![(5, 0.5), (7, 0.5)],
        vec![(7, 1.0)],
    ]
    .into_iter()
    .enumerate()
    {
        for (j, w) in row {
            a[(i, j)] = w;
        }
    }
    a
}

/// Sizes and counts for [`certify_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub thm1_k_max: usize,
    pub thm1_clouds: usize,
    pub thm1_points: usize,
    pub thm2_k: Vec<usize>,
    pub thm3_pairs: usize,
    pub thm4_graphs: usize,
    pub thm4_signals: usize,
    pub proxy: Proxy,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            thm1_k_max: 6,
            thm1_clouds: 50,
            thm1_points: 100,
            thm2_k: vec![2, 4, 6],
            thm3_pairs: 200,
            thm4_graphs: 1000,
            thm4_signals: 10,
            proxy: Proxy::Center,
            seed: 0,
        }
    }
}

pub fn random_unit_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let pts = (0..n).map(|_| [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)]).collect();
    PointCloud::new(pts).expect("non-empty")
}

/// Points filling the voxels `lo..hi` along `axis` (all voxels on the other
/// axes), `per_voxel` random points each.
pub fn slab_cloud(k_res: usize, axis: usize, lo: usize, hi: usize, per_voxel: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let mut pts = Vec::new();
    for v in raster(k_res).filter(|v| (lo..hi).contains(&v[axis])) {
        for _ in 0..per_voxel {
            pts.push(v.map(|i| (i as f64 + rng.random_range(0.0..1.0)) / k_res as f64));
        }
    }
    PointCloud::new(pts).expect("non-empty slab")
}

/// One certificate per theorem instance group: the worst case over the
/// group is reported.
pub fn certify_suite(cfg: &SuiteConfig) -> Result<Vec<Certificate>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();

    for k in 1..=cfg.thm1_k_max {
        let mut worst: Option<Certificate> = None;
        for _ in 0..cfg.thm1_clouds {
            let s = random_unit_cloud(cfg.thm1_points, &mut rng);
            let c = certify_thm1(&s, k * k * k, cfg.proxy)?;
            if worst.as_ref().is_none_or(|w| c.distance > w.distance) {
                worst = Some(c);
            }
        }
        out.extend(worst);
    }

    for &k in &cfg.thm2_k {
        let clouds = [slab_cloud(k, 0, 0, k, 4, &mut rng), slab_cloud(k, 2, k / 4, k / 4 + 2.max(k / 2), 4, &mut rng)];
        let mut worst: Option<Certificate> = None;
        for s in &clouds {
            let c = certify_thm2(s, k)?;
            if worst.as_ref().is_none_or(|w| c.distance > w.distance) {
                worst = Some(c);
            }
        }
        out.extend(worst);
    }

    let (z1, z2) = z_shape_signals();
    let mut worst = 0.0_f64;
    let mut distinct = true;
    let mut check = |x1: &[f64], x2: &[f64]| -> Result<()> {
        let a = solve_zero_tv(x1, x2)?;
        for x in [x1, x2] {
            let ax = a.matvec(x)?;
            worst = worst.max(x.iter().zip(&ax).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt());
        }
        distinct &= a.sub(&Matrix::identity(a.rows()))?.frobenius_norm() > 1e-8;
        Ok(())
    };
    check(&z1, &z2)?;
    for _ in 0..cfg.thm3_pairs {
        let m = rng.random_range(3..=32);
        let x1 = random_signal(&mut rng, m);
        let x2 = random_signal(&mut rng, m);
        check(&x1, &x2)?;
    }
    out.push(Certificate {
        theorem: 3,
        k: 32,
        c: cfg.thm3_pairs + 1,
        distance: worst,
        bound: TV_TOLERANCE,
        pass: worst < TV_TOLERANCE && distinct,
    });

    let mut worst_increase = f64::NEG_INFINITY;
    let mut violations = 0;
    for g in 0..cfg.thm4_graphs {
        let m = rng.random_range(3..=24);
        let a = random_symmetric_stochastic(m, 3, &mut rng);
        let r = check_tv_decrease(&a, cfg.thm4_signals, cfg.seed.wrapping_add(g as u64))?;
        violations += r.violations;
        worst_increase = worst_increase.max(-r.worst_margin);
    }
    out.push(Certificate {
        theorem: 4,
        k: 24,
        c: cfg.thm4_graphs * cfg.thm4_signals,
        distance: worst_increase.max(0.0),
        bound: TV_TOLERANCE,
        pass: violations == 0,
    });
    Ok(out)
}
