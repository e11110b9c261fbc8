//! Adam training of the autoencoder, checkpoints, and a linear head for
//! classifying frozen codes.

mod checkpoint;
mod classifier;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use classifier::{accuracy, classify, fit_classifier, ClassifierConfig, LinearClassifier};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::ModelState;
use crate::pointcloud::{LossKind, PointCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Save a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 32,
            epochs: 300,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            loss: LossKind::Augmented,
            checkpoint_every: 0,
            clip_norm: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Domain(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Domain("Adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Domain(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        Ok(())
    }
}

/// First and second moments, one pair per parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamState {
    pub fn for_shapes<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (Matrix::zeros(p.rows(), p.cols()), Matrix::zeros(p.rows(), p.cols())))
            .unzip();
        Self { step: 0, m, v }
    }
}

/// One bias-corrected Adam update, parameters visited in slice order.
pub fn adam_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "{} parameters, {} gradients, {} moment pairs",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Dimension(format!("gradient {i} has the wrong shape")));
        }
        let (m, v) = (state.m[i].as_mut_slice(), state.v[i].as_mut_slice());
        for (k, (x, &gk)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            *x -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their joint norm is at most `max_norm`.
/// Returns the norm before clipping when clipping fired.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> Option<f64> {
    let norm = grads.iter().flat_map(|g| g.as_slice()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.as_mut_slice().iter_mut().for_each(|x| *x *= s);
        }
        Some(norm)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-cloud loss over the epoch, evaluated before each update.
    pub loss: f64,
    pub wallclock_s: f64,
    /// Batches whose gradient was clipped.
    pub clipped: usize,
}

impl EpochRecord {
    /// `epoch <n> loss <decimal> wallclock_s <decimal>`.
    pub fn log_line(&self) -> String {
        format!("epoch {} loss {} wallclock_s {:.3}", self.epoch, self.loss, self.wallclock_s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Model, optimizer state and epoch counter of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: ModelState,
    pub adam: AdamState,
    /// Number of completed epochs.
    pub epoch: usize,
    pub cfg: TrainConfig,
}

impl Trainer {
    pub fn new(model: ModelState, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::for_shapes(model.parameters().into_iter().map(|(_, m)| m));
        Ok(Self { model, adam, epoch: 0, cfg })
    }

    /// Visiting order of the dataset in `epoch`; depends only on the seed
    /// and the epoch number, so resumed runs shuffle identically.
    pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Loss and parameter gradients of one batch (mean over its clouds).
    pub fn batch_gradients(&self, batch: &[&PointCloud]) -> Result<(Vec<f64>, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape, true);
        let mut losses = Vec::with_capacity(batch.len());
        let mut total = None;
        for s in batch {
            let l = self.model.loss_on(&mut tape, &bound, s, self.cfg.loss)?;
            losses.push(tape.scalar(l)?);
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        let total = total.ok_or_else(|| Error::Domain("empty batch".into()))?;
        let mean = tape.scale(total, 1.0 / batch.len() as f64);
        tape.backward(mean)?;
        let grads = bound
            .params()
            .iter()
            .map(|&v| {
                let s = tape.shape(v);
                match tape.grad(v) {
                    Some(g) => Matrix::from_vec(s.rows, s.cols, g.to_vec()),
                    None => Ok(Matrix::zeros(s.rows, s.cols)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((losses, grads))
    }

    pub fn run_epoch(&mut self, data: &[PointCloud]) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::Domain("training needs at least one cloud".into()));
        }
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let order = Self::epoch_order(self.cfg.seed, epoch, data.len());
        let mut total = 0.0;
        let mut clipped = 0;
        for (b, idx) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<&PointCloud> = idx.iter().map(|&i| &data[i]).collect();
            let (losses, mut grads) = self.batch_gradients(&batch)?;
            if losses.iter().any(|l| !l.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += losses.iter().sum::<f64>();
            if let Some(norm) = clip_global_norm(&mut grads, self.cfg.clip_norm) {
                log::warn!("epoch {epoch} batch {b}: gradient norm {norm:.6e} clipped to {}", self.cfg.clip_norm);
                clipped += 1;
            }
            let mut params = self.model.parameters_mut();
            adam_step(&mut params, &grads, &mut self.adam, &self.cfg)?;
        }
        self.epoch = epoch;
        Ok(EpochRecord {
            epoch,
            loss: total / data.len() as f64,
            wallclock_s: start.elapsed().as_secs_f64(),
            clipped,
        })
    }

    /// Runs `epochs` more epochs, calling `on_epoch` after each.
    pub fn train(
        &mut self,
        data: &[PointCloud],
        epochs: usize,
        mut on_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<TrainLog> {
        let mut log = TrainLog::default();
        for _ in 0..epochs {
            let rec = self.run_epoch(data)?;
            on_epoch(self, &rec)?;
            log.records.push(rec);
        }
        Ok(log)
    }
}

/// Trains `model` for `cfg.epochs` epochs from a fresh optimizer state.
pub fn train(model: ModelState, data: &[PointCloud], cfg: &TrainConfig) -> Result<(ModelState, TrainLog)> {
    let mut t = Trainer::new(model, cfg.clone())?;
    let log = t.train(data, cfg.epochs, |_, _| Ok(()))?;
    Ok((t.model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{FilterKind, ModelConfig};
    use crate::pointcloud::{sample_synthetic, Surface};

    fn data(n: usize) -> Vec<PointCloud> {
        (0..n)
            .map(|i| sample_synthetic(Surface::Sphere { radius: 0.5 }, 16, i as u64).unwrap())
            .collect()
    }

    #[test]
    fn adam_zero_gradient_is_inert() {
        let mut p = Matrix::from_rows(&[&[1.0, -2.0]]);
        let before = p.clone();
        let mut st = AdamState::for_shapes([&p]);
        adam_step(&mut [&mut p], &[Matrix::zeros(1, 2)], &mut st, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let cfg = TrainConfig { lr: 0.01, ..TrainConfig::default() };
        let mut p = Matrix::from_rows(&[&[0.0, 0.0]]);
        let mut st = AdamState::for_shapes([&p]);
        adam_step(&mut [&mut p], &[Matrix::from_rows(&[&[3.0, -0.5]])], &mut st, &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        assert!((p[(0, 0)] + 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((p[(0, 1)] - 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![Matrix::from_rows(&[&[30.0, 40.0]])];
        assert_eq!(clip_global_norm(&mut g, 10.0), Some(50.0));
        assert!((g[0][(0, 0)] - 6.0).abs() < 1e-12);
        assert_eq!(clip_global_norm(&mut g, 10.0), None);
    }

    #[test]
    fn zero_lr_freezes_parameters() {
        let m = ModelState::new(ModelConfig::tiny(), 1).unwrap();
        let cfg = TrainConfig { lr: 0.0, batch_size: 2, epochs: 3, ..TrainConfig::default() };
        let (trained, log) = train(m.clone(), &data(3), &cfg).unwrap();
        assert_eq!(trained, m);
        assert_eq!(log.records.len(), 3);
    }

    #[test]
    fn short_final_batch_kept() {
        let m = ModelState::new(ModelConfig::tiny(), 1).unwrap();
        let mut t = Trainer::new(m, TrainConfig { batch_size: 2, ..TrainConfig::default() }).unwrap();
        t.run_epoch(&data(5)).unwrap();
        assert_eq!(t.adam.step, 3);
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = Trainer::epoch_order(4, 1, 10);
        assert_eq!(a, Trainer::epoch_order(4, 1, 10));
        assert_ne!(a, Trainer::epoch_order(4, 2, 10));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn none_filter_leaves_topology_untouched() {
        let mut cfg = ModelConfig::tiny();
        cfg.filter = FilterKind::None;
        let m = ModelState::new(cfg, 3).unwrap();
        let t = Trainer::new(m, TrainConfig::default()).unwrap();
        let d = data(2);
        let (_, grads) = t.batch_gradients(&[&d[0], &d[1]]).unwrap();
        for ((name, _), g) in t.model.parameters().iter().zip(&grads) {
            if ModelState::is_topology_parameter(name) {
                assert_eq!(g.max_abs(), 0.0, "{name}");
            }
        }
    }

    #[test]
    fn log_line_format() {
        let r = EpochRecord { epoch: 3, loss: 0.125, wallclock_s: 1.5, clipped: 0 };
        assert_eq!(r.log_line(), "epoch 3 loss 0.125 wallclock_s 1.500");
    }

    #[test]
    fn empty_dataset_rejected() {
        let m = ModelState::new(ModelConfig::tiny(), 1).unwrap();
        let mut t = Trainer::new(m, TrainConfig::default()).unwrap();
        assert!(t.run_epoch(&[]).is_err());
    }
}
