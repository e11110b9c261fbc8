//! Little-endian binary checkpoints: magic, version, then a count-prefixed
//! table of named `f64` arrays (name length, UTF-8 name, rank, extents,
//! payload). Configuration, counters and the seed are stored as small
//! arrays in the same table, so the shuffling stream of a resumed run is
//! recovered from `(seed, epoch)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{AdamState, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{FilterKind, ModelConfig, ModelState};
use crate::pointcloud::LossKind;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FGCHKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelState,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub train: TrainConfig,
}

struct Entry {
    extents: Vec<u64>,
    data: Vec<f64>,
}

fn put(out: &mut Vec<u8>, name: &str, extents: &[u64], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(extents.len() as u32).to_le_bytes());
    for e in extents {
        out.extend_from_slice(&e.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn loss_code(k: LossKind) -> f64 {
    match k {
        LossKind::Augmented => 0.0,
        LossKind::Plain => 1.0,
    }
}

fn filter_code(k: FilterKind) -> f64 {
    match k {
        FilterKind::None => 0.0,
        FilterKind::Adjacency => 1.0,
        FilterKind::Laplacian => 2.0,
    }
}

impl Checkpoint {
    fn entries(&self) -> Vec<(String, Vec<u64>, Vec<f64>)> {
        let scalar = |name: &str, v: f64| (name.to_string(), vec![1], vec![v]);
        let widths = |name: &str, w: &[usize]| {
            (name.to_string(), vec![w.len() as u64], w.iter().map(|&x| x as f64).collect())
        };
        let c = &self.model.config;
        let t = &self.train;
        let mut e = vec![
            scalar("meta/epoch", self.epoch as f64),
            scalar("meta/adam_step", self.adam.step as f64),
            ("meta/seed".into(), vec![2], vec![(t.seed >> 32) as f64, (t.seed & 0xffff_ffff) as f64]),
            scalar("config/code_len", c.code_len as f64),
            scalar("config/lattice_side", c.lattice_side as f64),
            scalar("config/knn_k", c.knn_k as f64),
            scalar("config/sigma", c.sigma),
            scalar("config/mu", c.mu),
            scalar("config/filter", filter_code(c.filter)),
            widths("config/encoder_point", &c.encoder_point),
            widths("config/encoder_code", &c.encoder_code),
            scalar("config/fold_hidden", c.fold_hidden as f64),
            scalar("config/fold_mid", c.fold_mid as f64),
            scalar("config/topo_hidden", c.topo_hidden as f64),
            scalar("train/lr", t.lr),
            scalar("train/batch_size", t.batch_size as f64),
            scalar("train/epochs", t.epochs as f64),
            scalar("train/beta1", t.beta1),
            scalar("train/beta2", t.beta2),
            scalar("train/eps", t.eps),
            scalar("train/loss", loss_code(t.loss)),
            scalar("train/checkpoint_every", t.checkpoint_every as f64),
            scalar("train/clip_norm", t.clip_norm),
        ];
        for (i, (name, p)) in self.model.parameters().into_iter().enumerate() {
            let ext = vec![p.rows() as u64, p.cols() as u64];
            e.push((format!("param/{name}"), ext.clone(), p.as_slice().to_vec()));
            e.push((format!("adam_m/{name}"), ext.clone(), self.adam.m[i].as_slice().to_vec()));
            e.push((format!("adam_v/{name}"), ext, self.adam.v[i].as_slice().to_vec()));
        }
        e
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let entries = self.entries();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        for (name, ext, data) in &entries {
            put(&mut out, name, ext, data);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let table = read_table(bytes)?;
        let end = bytes.len() as u64;
        let bad = |message: String| Error::Checkpoint { offset: end, message };
        let get = |name: &str| -> Result<&Entry> {
            table.get(name).ok_or_else(|| bad(format!("missing array '{name}'")))
        };
        let scalar = |name: &str| -> Result<f64> {
            let e = get(name)?;
            if e.data.len() != 1 {
                return Err(bad(format!("'{name}' should hold one value")));
            }
            Ok(e.data[0])
        };
        let count = |name: &str| -> Result<usize> {
            let v = scalar(name)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(bad(format!("'{name}' = {v} is not a count")));
            }
            Ok(v as usize)
        };
        let widths = |name: &str| -> Result<Vec<usize>> { Ok(get(name)?.data.iter().map(|&v| v as usize).collect()) };

        let filter = match scalar("config/filter")? as i64 {
            0 => FilterKind::None,
            1 => FilterKind::Adjacency,
            2 => FilterKind::Laplacian,
            other => return Err(bad(format!("unknown filter code {other}"))),
        };
        let config = ModelConfig {
            code_len: count("config/code_len")?,
            lattice_side: count("config/lattice_side")?,
            knn_k: count("config/knn_k")?,
            sigma: scalar("config/sigma")?,
            mu: scalar("config/mu")?,
            filter,
            encoder_point: widths("config/encoder_point")?,
            encoder_code: widths("config/encoder_code")?,
            fold_hidden: count("config/fold_hidden")?,
            fold_mid: count("config/fold_mid")?,
            topo_hidden: count("config/topo_hidden")?,
        };
        let seed = get("meta/seed")?;
        if seed.data.len() != 2 {
            return Err(bad("'meta/seed' should hold two halves".into()));
        }
        let train = TrainConfig {
            lr: scalar("train/lr")?,
            batch_size: count("train/batch_size")?,
            epochs: count("train/epochs")?,
            beta1: scalar("train/beta1")?,
            beta2: scalar("train/beta2")?,
            eps: scalar("train/eps")?,
            seed: ((seed.data[0] as u64) << 32) | seed.data[1] as u64,
            loss: if scalar("train/loss")? == 0.0 { LossKind::Augmented } else { LossKind::Plain },
            checkpoint_every: count("train/checkpoint_every")?,
            clip_norm: scalar("train/clip_norm")?,
        };

        let mut model = ModelState::new(config, 0)?;
        let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
        let mut m = Vec::with_capacity(names.len());
        let mut v = Vec::with_capacity(names.len());
        for (name, p) in names.iter().zip(model.parameters_mut()) {
            let (rows, cols) = p.shape();
            let load = |prefix: &str| -> Result<Matrix> {
                let key = format!("{prefix}/{name}");
                let e = get(&key)?;
                if e.extents != [rows as u64, cols as u64] {
                    return Err(bad(format!("'{key}' has extents {:?}, expected {rows}x{cols}", e.extents)));
                }
                Matrix::from_vec(rows, cols, e.data.clone())
            };
            *p = load("param")?;
            m.push(load("adam_m")?);
            v.push(load("adam_v")?);
        }
        let adam = AdamState { step: count("meta/adam_step")? as u64, m, v };
        Ok(Self { model, adam, epoch: count("meta/epoch")?, train })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

fn read_table(bytes: &[u8]) -> Result<BTreeMap<String, Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint { offset: 0, message: "bad magic bytes".into() });
    }
    let version = r.u32("format version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            offset: 8,
            message: format!("unsupported format version {version} (expected {CHECKPOINT_VERSION})"),
        });
    }
    let count = r.u64("array count")?;
    let mut table = BTreeMap::new();
    for _ in 0..count {
        let at = r.pos as u64;
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint { offset: at, message: "array name is not UTF-8".into() })?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut extents = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            extents.push(r.u64("extent")?);
        }
        let total = extents.iter().try_fold(1u64, |a, &e| a.checked_mul(e)).ok_or_else(|| Error::Checkpoint {
            offset: at,
            message: format!("extents of '{name}' overflow"),
        })?;
        let byte_len = usize::try_from(total)
            .ok()
            .and_then(|t| t.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint { offset: at, message: format!("'{name}' is too large") })?;
        let payload = r.take(byte_len, &format!("payload of '{name}'"))?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if table.insert(name.clone(), Entry { extents, data }).is_some() {
            return Err(Error::Checkpoint { offset: at, message: format!("duplicate array '{name}'") });
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint { offset: r.pos as u64, message: "trailing bytes after the last array".into() });
    }
    Ok(table)
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
