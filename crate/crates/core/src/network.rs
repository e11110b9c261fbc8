//! The autoencoder: a PointNet-style encoder, a two-stage folding decoder, a
//! topology-inference head producing a learned graph over the folded points,
//! and the graph-filtering output layer.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{self, GraphAdjacency, Lattice2D};
use crate::linalg::Matrix;
use crate::pointcloud::{self, LossKind, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterKind {
    /// Folding only: the refined cloud is the coarse cloud.
    None,
    /// Graph Haar filter `(I + A)/2`.
    #[default]
    Adjacency,
    /// `(mu I + L)^-1`.
    Laplacian,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Adjacency => "adjacency",
            FilterKind::Laplacian => "laplacian",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FilterKind::None),
            "adjacency" => Ok(FilterKind::Adjacency),
            "laplacian" => Ok(FilterKind::Laplacian),
            other => Err(Error::Usage(format!(
                "unknown filter '{other}' (expected none|adjacency|laplacian)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Dense layer `y = act(x W + b)`; `weight` is stored input-major
/// (`in x out`) so rows of `x` multiply it directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

/// Stack of dense layers. When `code_dim > 0` the last `code_dim` inputs of
/// the first layer are a latent code shared by every row, so `[x_i, c]` is
/// evaluated as `x_i W_x + c W_c` without materializing the concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpStack {
    pub name: String,
    pub code_dim: usize,
    pub layers: Vec<Layer>,
}

impl MlpStack {
    /// `dims = [in, h1, ..., out]`; ReLU between layers, `last` on the output.
    pub fn new(name: &str, dims: &[usize], code_dim: usize, last: Activation, rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Domain(format!("MLP '{name}' needs positive widths, got {dims:?}")));
        }
        if code_dim > dims[0] {
            return Err(Error::Domain(format!("MLP '{name}' code width exceeds its input")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound));
                let activation = if l + 2 == dims.len() { last } else { Activation::Relu };
                Layer { weight, bias: Matrix::zeros(1, fan_out), activation }
            })
            .collect();
        Ok(Self { name: name.to_string(), code_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").bias.cols()
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundStack {
        let put = |t: &mut Tape, m: &Matrix| if trainable { t.leaf_matrix(m) } else { t.constant_matrix(m) };
        BoundStack {
            code_dim: self.code_dim,
            layers: self
                .layers
                .iter()
                .map(|l| (put(tape, &l.weight), put(tape, &l.bias), l.activation))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct BoundStack {
    code_dim: usize,
    layers: Vec<(Var, Var, Activation)>,
}

impl BoundStack {
    fn forward(&self, tape: &mut Tape, x: Var, code: Option<Var>) -> Result<Var> {
        let mut h = x;
        for (l, &(w, b, act)) in self.layers.iter().enumerate() {
            let pre = match (l, code) {
                (0, Some(c)) if self.code_dim > 0 => {
                    let rows = tape.shape(w).rows;
                    let own = rows - self.code_dim;
                    let wx = tape.slice_rows(w, 0, own)?;
                    let wc = tape.slice_rows(w, own, self.code_dim)?;
                    let xw = tape.matmul(h, wx)?;
                    let cw = tape.matmul(c, wc)?;
                    let shift = tape.add(cw, b)?;
                    tape.add_row_vector(xw, shift)?
                }
                _ => {
                    let xw = tape.matmul(h, w)?;
                    tape.add_row_vector(xw, b)?
                }
            };
            h = match act {
                Activation::Relu => tape.relu(pre),
                Activation::Identity => pre,
            };
        }
        Ok(h)
    }
}

/// Architecture and graph hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub code_len: usize,
    pub lattice_side: usize,
    pub knn_k: usize,
    pub sigma: f64,
    pub mu: f64,
    pub filter: FilterKind,
    /// Hidden widths of the per-point encoder MLP.
    pub encoder_point: Vec<usize>,
    /// Hidden widths of the code MLP (its output width is `code_len`).
    pub encoder_code: Vec<usize>,
    /// Hidden width of both folding stages.
    pub fold_hidden: usize,
    /// Output width of the first folding stage.
    pub fold_mid: usize,
    pub topo_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            code_len: 512,
            lattice_side: 45,
            knn_k: 96,
            sigma: 0.08,
            mu: 0.5,
            filter: FilterKind::Adjacency,
            encoder_point: vec![64, 128, 1024],
            encoder_code: vec![512],
            fold_hidden: 512,
            fold_mid: 3,
            topo_hidden: 256,
        }
    }
}

impl ModelConfig {
    /// Small network for single-core experiments: 225 lattice nodes,
    /// 64-dimensional codes.
    pub fn desk() -> Self {
        Self {
            code_len: 64,
            lattice_side: 15,
            encoder_point: vec![32, 64, 128],
            encoder_code: vec![64],
            fold_hidden: 64,
            topo_hidden: 32,
            ..Self::default()
        }
    }

    /// A tiny network used in gradient checks and smoke tests.
    pub fn tiny() -> Self {
        Self {
            code_len: 4,
            lattice_side: 3,
            knn_k: 4,
            sigma: 0.5,
            encoder_point: vec![5, 6],
            encoder_code: vec![5],
            fold_hidden: 5,
            topo_hidden: 4,
            ..Self::default()
        }
    }

    pub fn lattice_size(&self) -> usize {
        self.lattice_side * self.lattice_side
    }

    fn folding_parameters(&self, h: usize) -> usize {
        let (c, mid) = (self.code_len, self.fold_mid);
        let stage = |input: usize, out: usize| (input + c) * h + h + h * h + h + h * out + out;
        stage(2, mid) + stage(mid, 3)
    }

    fn topology_parameters(&self) -> usize {
        let (c, m, t) = (self.code_len, self.lattice_size(), self.topo_hidden);
        (m + c) * t + t + (t + c) * m + m
    }

    /// Folding-only variant whose folding MLPs are widened until it uses at
    /// least as many parameters as this configuration with filtering on.
    pub fn matched_folding_only(&self) -> ModelConfig {
        let target = self.folding_parameters(self.fold_hidden) + self.topology_parameters();
        let mut h = self.fold_hidden;
        while self.folding_parameters(h) < target {
            h += 1;
        }
        ModelConfig { filter: FilterKind::None, fold_hidden: h, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [self.code_len, self.lattice_side, self.fold_hidden, self.fold_mid, self.topo_hidden];
        if widths.iter().chain(&self.encoder_point).chain(&self.encoder_code).any(|&w| w == 0) {
            return Err(Error::Domain("all network widths must be at least 1".into()));
        }
        if self.encoder_point.is_empty() {
            return Err(Error::Domain("encoder point MLP needs at least one layer".into()));
        }
        let m = self.lattice_size();
        if self.knn_k == 0 || self.knn_k >= m {
            return Err(Error::Domain(format!("knn_k = {} must satisfy 1 <= k < M = {m}", self.knn_k)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Domain(format!("mu must be positive, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Full model: parameters plus the fixed lattice and initial graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub encoder_point: MlpStack,
    pub encoder_code: MlpStack,
    pub fold1: MlpStack,
    pub fold2: MlpStack,
    pub topo1: MlpStack,
    pub topo2: MlpStack,
    pub lattice: Lattice2D,
    pub a0: GraphAdjacency,
}

/// Output of [`ModelState::reconstruct`].
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub code: Vec<f64>,
    pub coarse: PointCloud,
    pub refined: PointCloud,
    /// Learned symmetric graph, or the initial graph when filtering is off.
    pub adjacency: GraphAdjacency,
}

/// Model parameters bound into one tape, plus the lattice and initial graph
/// as constants.
#[derive(Debug, Clone)]
pub struct BoundModel {
    stacks: [BoundStack; 6],
    lattice: Var,
    a0: Var,
    params: Vec<Var>,
}

impl BoundModel {
    /// Parameter variables in [`ModelState::parameters`] order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }
}

/// Tape variables of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub code: Var,
    pub coarse: Var,
    pub refined: Var,
    /// Symmetrized learned graph; `None` when filtering is off.
    pub adjacency: Option<Var>,
    /// Row-softmax graph before symmetrization.
    pub directed: Option<Var>,
}

impl ModelState {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.code_len;
        let m = config.lattice_size();

        let mut dims = vec![3];
        dims.extend(&config.encoder_point);
        let encoder_point = MlpStack::new("encoder_point", &dims, 0, Activation::Relu, &mut rng)?;
        let mut dims = vec![*config.encoder_point.last().expect("validated")];
        dims.extend(&config.encoder_code);
        dims.push(c);
        let encoder_code = MlpStack::new("encoder_code", &dims, 0, Activation::Identity, &mut rng)?;
        let h = config.fold_hidden;
        let fold1 = MlpStack::new("fold1", &[2 + c, h, h, config.fold_mid], c, Activation::Identity, &mut rng)?;
        let fold2 = MlpStack::new("fold2", &[config.fold_mid + c, h, h, 3], c, Activation::Identity, &mut rng)?;
        let t = config.topo_hidden;
        let topo1 = MlpStack::new("topo1", &[m + c, t], c, Activation::Relu, &mut rng)?;
        let topo2 = MlpStack::new("topo2", &[t + c, m], c, Activation::Relu, &mut rng)?;

        let lattice = Lattice2D::new(config.lattice_side)?;
        let a0 = graph::build_initial_adjacency(&lattice, config.knn_k, config.sigma)?;
        Ok(Self { config, encoder_point, encoder_code, fold1, fold2, topo1, topo2, lattice, a0 })
    }

    fn stacks(&self) -> [&MlpStack; 6] {
        [&self.encoder_point, &self.encoder_code, &self.fold1, &self.fold2, &self.topo1, &self.topo2]
    }

    fn stacks_mut(&mut self) -> [&mut MlpStack; 6] {
        [
            &mut self.encoder_point,
            &mut self.encoder_code,
            &mut self.fold1,
            &mut self.fold2,
            &mut self.topo1,
            &mut self.topo2,
        ]
    }

    /// Named parameters in a fixed order: stacks in pipeline order, then for
    /// each layer its weight followed by its bias.
    pub fn parameters(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for s in self.stacks() {
            for (l, layer) in s.layers.iter().enumerate() {
                out.push((format!("{}.{l}.weight", s.name), &layer.weight));
                out.push((format!("{}.{l}.bias", s.name), &layer.bias));
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for s in self.stacks_mut() {
            for layer in &mut s.layers {
                out.push(&mut layer.weight);
                out.push(&mut layer.bias);
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, m)| m.rows() * m.cols()).sum()
    }

    /// Parameters the forward pass reads; the topology head idles when
    /// filtering is off.
    pub fn active_parameter_count(&self) -> usize {
        self.parameters()
            .iter()
            .filter(|(n, _)| self.config.filter != FilterKind::None || !Self::is_topology_parameter(n))
            .map(|(_, m)| m.rows() * m.cols())
            .sum()
    }

    /// Parameters belonging to the topology head.
    pub fn is_topology_parameter(name: &str) -> bool {
        name.starts_with("topo1.") || name.starts_with("topo2.")
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let stacks = self.stacks().map(|s| s.bind(tape, trainable));
        let params = stacks.iter().flat_map(|s| s.layers.iter().flat_map(|&(w, b, _)| [w, b])).collect();
        let lattice = tape.constant_matrix(self.lattice.nodes());
        let a0 = tape.constant_matrix(self.a0.weights());
        BoundModel { stacks, lattice, a0, params }
    }

    fn encode_on(&self, tape: &mut Tape, b: &BoundModel, s: &PointCloud) -> Result<Var> {
        let x = tape.constant_matrix(&s.to_matrix());
        let feats = b.stacks[0].forward(tape, x, None)?;
        let pooled = tape.maxpool_rows(feats)?;
        b.stacks[1].forward(tape, pooled, None)
    }

    fn fold_on(&self, tape: &mut Tape, b: &BoundModel, code: Var) -> Result<Var> {
        let u = b.stacks[2].forward(tape, b.lattice, Some(code))?;
        b.stacks[3].forward(tape, u, Some(code))
    }

    /// Returns `(symmetrized, directed)`.
    fn topology_on(&self, tape: &mut Tape, b: &BoundModel, code: Var) -> Result<(Var, Var)> {
        let h = b.stacks[4].forward(tape, b.a0, Some(code))?;
        let logits = b.stacks[5].forward(tape, h, Some(code))?;
        let directed = tape.softmax_rows(logits);
        let t = tape.transpose(directed);
        let sum = tape.add(directed, t)?;
        Ok((tape.scale(sum, 0.5), directed))
    }

    /// Full forward pass recorded on `tape`.
    pub fn forward(&self, tape: &mut Tape, b: &BoundModel, s: &PointCloud) -> Result<ForwardVars> {
        let code = self.encode_on(tape, b, s)?;
        let coarse = self.fold_on(tape, b, code)?;
        let (refined, adjacency, directed) = match self.config.filter {
            FilterKind::None => (coarse, None, None),
            FilterKind::Adjacency => {
                let (a, d) = self.topology_on(tape, b, code)?;
                let ax = tape.matmul(a, coarse)?;
                let sum = tape.add(coarse, ax)?;
                (tape.scale(sum, 0.5), Some(a), Some(d))
            }
            FilterKind::Laplacian => {
                let (a, d) = self.topology_on(tape, b, code)?;
                if tape.value(a).iter().any(|v| !v.is_finite()) {
                    // no solve is possible; a NaN reconstruction surfaces as a NaN loss
                    return Ok(ForwardVars { code, coarse, refined: tape.scale(coarse, f64::NAN), adjacency: Some(a), directed: Some(d) });
                }
                let lap = tape.laplacian(a)?;
                let shifted = tape.shift_diagonal(lap, self.config.mu)?;
                (tape.spd_solve(shifted, coarse)?, Some(a), Some(d))
            }
        };
        Ok(ForwardVars { code, coarse, refined, adjacency, directed })
    }

    /// Reconstruction loss of one cloud, as a scalar on the tape.
    pub fn loss_on(&self, tape: &mut Tape, b: &BoundModel, s: &PointCloud, kind: LossKind) -> Result<Var> {
        let f = self.forward(tape, b, s)?;
        let values = tape.value(f.refined);
        if values.iter().any(|v| !v.is_finite()) {
            // report as a NaN loss so the trainer names the batch
            let zeros = vec![0.0; values.len()];
            return tape.linearized_scalar(f.refined, f64::NAN, zeros);
        }
        let rec = PointCloud::from_flat(values)?;
        let (value, grad) = pointcloud::loss_and_grad(kind, s, &rec)?;
        tape.linearized_scalar(f.refined, value, grad)
    }

    /// Latent code of a cloud; invariant under point permutation.
    pub fn encode(&self, s: &PointCloud) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let code = self.encode_on(&mut tape, &b, s)?;
        Ok(tape.value(code).to_vec())
    }

    fn code_var(&self, tape: &mut Tape, code: &[f64]) -> Result<Var> {
        if code.len() != self.config.code_len {
            return Err(Error::Dimension(format!(
                "code of length {} for a model with C = {}",
                code.len(),
                self.config.code_len
            )));
        }
        tape.constant(1, code.len(), code.to_vec())
    }

    /// Coarse `M`-point reconstruction from a code.
    pub fn fold(&self, code: &[f64]) -> Result<PointCloud> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let c = self.code_var(&mut tape, code)?;
        let x = self.fold_on(&mut tape, &b, c)?;
        PointCloud::from_flat(tape.value(x))
    }

    /// Row-softmax graph before symmetrization.
    pub fn infer_topology_directed(&self, code: &[f64]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let c = self.code_var(&mut tape, code)?;
        let (_, d) = self.topology_on(&mut tape, &b, c)?;
        Ok(tape.to_matrix(d))
    }

    /// Learned symmetric graph over the folded points.
    pub fn infer_topology(&self, code: &[f64]) -> Result<GraphAdjacency> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let c = self.code_var(&mut tape, code)?;
        let (a, _) = self.topology_on(&mut tape, &b, c)?;
        GraphAdjacency::new(tape.to_matrix(a))
    }

    pub fn reconstruct(&self, s: &PointCloud) -> Result<Reconstruction> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let f = self.forward(&mut tape, &b, s)?;
        let adjacency = match f.adjacency {
            Some(a) => GraphAdjacency::new(tape.to_matrix(a))?,
            None => self.a0.clone(),
        };
        Ok(Reconstruction {
            code: tape.value(f.code).to_vec(),
            coarse: PointCloud::from_flat(tape.value(f.coarse))?,
            refined: PointCloud::from_flat(tape.value(f.refined))?,
            adjacency,
        })
    }

    /// Reconstruction loss of one cloud without recording gradients.
    pub fn loss(&self, s: &PointCloud, kind: LossKind) -> Result<f64> {
        let r = self.reconstruct(s)?;
        let (value, _) = pointcloud::loss_and_grad(kind, s, &r.refined)?;
        Ok(value)
    }
}
