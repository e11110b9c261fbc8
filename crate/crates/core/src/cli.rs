//! Command-line front end. Every command resolves its settings from
//! built-in defaults, an optional `key = value` config file and flags (in
//! increasing priority), writes its outputs under `--out`, and records the
//! resolved settings with input and output checksums in `manifest.txt`.
//! `replay` re-runs a manifest and compares checksums.
//!
//! Exit codes: 0 success, 1 failed check or certificate, 2 usage or I/O
//! error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{self, GraphAdjacency, LaplacianSpectrum};
use crate::linalg::Matrix;
use crate::network::{FilterKind, ModelConfig, ModelState};
use crate::pointcloud::{self, augmented_chamfer, chamfer_plain, LossKind, PointCloud, Surface};
use crate::theory::{self, Proxy, SuiteConfig};
use crate::trainer::{self, ClassifierConfig, Checkpoint, TrainConfig, Trainer};

pub const MANIFEST: &str = "manifest.txt";

struct Key {
    name: &'static str,
    default: &'static str,
    help: &'static str,
    switch: bool,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help, switch: false }
}

const INPUT_KEYS: [Key; 4] = [
    key("data", "", "directory of .xyz/.ply clouds"),
    key("synthetic", "", "synthetic corpus, e.g. torus:8:2048:R=1,r=0.3"),
    key("input", "", "comma-separated cloud files"),
    key("data_seed", "0", "seed of the synthetic sampler"),
];

const TRAIN_KEYS: &[Key] = &[
    key("filter", "adjacency", "none|adjacency|laplacian"),
    key("loss", "augcd", "augcd|cd"),
    key("epochs", "300", "training epochs"),
    key("seed", "0", "initialization and shuffling seed"),
    key("lr", "0.0001", "Adam learning rate"),
    key("batch_size", "32", "clouds per batch"),
    key("clip_norm", "10", "global gradient-norm ceiling"),
    key("checkpoint_every", "0", "extra checkpoint every N epochs (0: off)"),
    key("preset", "desk", "desk|tiny|full network size"),
    key("code_len", "", "code length C"),
    key("lattice_side", "", "lattice side (M = side^2)"),
    key("knn_k", "", "neighbours in the initial graph"),
    key("sigma", "", "initial graph bandwidth"),
    key("mu", "", "Laplacian filter shift"),
    key("encoder_point", "", "per-point encoder widths, comma-separated"),
    key("encoder_code", "", "code MLP hidden widths, comma-separated"),
    key("fold_hidden", "", "folding hidden width"),
    key("fold_mid", "", "first folding stage output width"),
    key("topo_hidden", "", "topology MLP hidden width"),
];

const CHECKPOINT_KEY: Key = key("checkpoint", "", "trained checkpoint.bin");

const RECONSTRUCT_KEYS: &[Key] = &[
    key("trace_node", "", "lattice node whose neighbours are exported"),
    key("trace_k", "8", "neighbours to trace"),
];

const ALPHA_KEYS: &[Key] = &[
    key("family", "", "adjacency|laplacian (default: the model's filter)"),
    key("mu", "", "Laplacian shift (default: the model's)"),
];

const CERTIFY_KEYS: &[Key] = &[
    key("seed", "0", "seed of the random instances"),
    key("k_max", "6", "largest voxel resolution for the first bound"),
    key("clouds", "50", "random clouds per resolution"),
    key("points", "100", "points per random cloud"),
    key("thm2_k", "2,4,6", "resolutions for the strided codec"),
    key("pairs", "200", "random signal pairs for the zero-variation solver"),
    key("graphs", "1000", "random graphs for the filtering check"),
    key("signals", "10", "signals per random graph"),
    Key { name: "corner_proxy", default: "false", help: "decode at voxel corners (debug)", switch: true },
];

const CLASSIFY_KEYS: &[Key] = &[
    key("train_codes", "", "code file of the training split"),
    key("train_labels", "", "label file of the training split"),
    key("test_codes", "", "code file of the test split"),
    key("test_labels", "", "label file of the test split"),
    key("epochs", "500", "full-batch epochs"),
    key("lr", "0.01", "Adam learning rate"),
    key("l2", "0.0001", "weight penalty"),
];

const COMMANDS: [(&str, &str); 7] = [
    ("train", "train an autoencoder"),
    ("reconstruct", "reconstruct clouds with a trained model"),
    ("encode", "write one code per cloud"),
    ("spectra", "Laplacian spectrum of the learned graph"),
    ("alpha-sweep", "graph filtering at several strengths"),
    ("certify", "run the reconstruction and smoothness checks"),
    ("classify", "linear classifier on code files"),
];

fn keys_of(command: &str) -> Vec<&'static Key> {
    let mut keys: Vec<&'static Key> = Vec::new();
    match command {
        "train" => {
            keys.extend(INPUT_KEYS.iter());
            keys.extend(TRAIN_KEYS);
        }
        "reconstruct" => {
            keys.push(&CHECKPOINT_KEY);
            keys.extend(INPUT_KEYS.iter());
            keys.extend(RECONSTRUCT_KEYS);
        }
        "encode" | "spectra" => {
            keys.push(&CHECKPOINT_KEY);
            keys.extend(INPUT_KEYS.iter());
        }
        "alpha-sweep" => {
            keys.push(&CHECKPOINT_KEY);
            keys.extend(INPUT_KEYS.iter());
            keys.extend(ALPHA_KEYS);
        }
        "certify" => keys.extend(CERTIFY_KEYS),
        "classify" => keys.extend(CLASSIFY_KEYS),
        _ => {}
    }
    keys
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let mut app = Command::new("foldgraph")
        .about("Point cloud autoencoder with learned graph topology")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in COMMANDS {
        let mut sub = Command::new(name)
            .about(about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value settings file"))
            .arg(Arg::new("out").long("out").value_name("DIR").required(true).help("output directory"));
        for k in keys_of(name) {
            let arg = Arg::new(k.name).long(flag_name(k.name)).help(k.help);
            sub = sub.arg(if k.switch { arg.action(ArgAction::SetTrue) } else { arg.value_name("VALUE") });
        }
        app = app.subcommand(sub);
    }
    app.subcommand(
        Command::new("replay")
            .about("re-run a manifest and compare outputs bitwise")
            .arg(Arg::new("manifest").required(true).value_name("MANIFEST"))
            .arg(Arg::new("out").long("out").value_name("DIR").required(true).help("output directory")),
    )
}

/// Resolved settings of one run.
pub type Settings = BTreeMap<String, String>;

/// Parses a `key = value` file; `#` starts a comment line.
pub fn read_config(path: &Path) -> Result<Settings> {
    let text = fs::read_to_string(path)?;
    let mut out = Settings::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: "expected 'key = value'".into(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn resolve(command: &str, file: Option<(&Path, Settings)>, flags: Settings) -> Result<Settings> {
    let keys = keys_of(command);
    let mut s: Settings = keys.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
    if let Some((path, file)) = file {
        for (k, v) in file {
            if !s.contains_key(&k) {
                return Err(Error::Usage(format!("{}: unknown key '{k}' for {command}", path.display())));
            }
            s.insert(k, v);
        }
    }
    s.extend(flags);
    Ok(s)
}

fn flags_of(command: &str, m: &ArgMatches) -> Settings {
    let mut out = Settings::new();
    for k in keys_of(command) {
        if k.switch {
            if m.get_flag(k.name) {
                out.insert(k.name.to_string(), "true".into());
            }
        } else if let Some(v) = m.get_one::<String>(k.name) {
            out.insert(k.name.to_string(), v.clone());
        }
    }
    out
}

fn get<'a>(s: &'a Settings, key: &str) -> &'a str {
    s.get(key).map(String::as_str).unwrap_or("")
}

fn parse<T: std::str::FromStr>(s: &Settings, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    get(s, key).parse().map_err(|e| Error::Usage(format!("--{}: {e}", flag_name(key))))
}

fn parse_opt<T: std::str::FromStr>(s: &Settings, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if get(s, key).is_empty() {
        Ok(None)
    } else {
        parse(s, key).map(Some)
    }
}

fn parse_list(s: &Settings, key: &str) -> Result<Option<Vec<usize>>> {
    let v = get(s, key);
    if v.is_empty() {
        return Ok(None);
    }
    v.split(',')
        .map(|t| t.trim().parse().map_err(|e| Error::Usage(format!("--{}: {e}", flag_name(key)))))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// One synthetic family: `shape:count:n_points[:k=v,...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub surface: Surface,
    pub count: usize,
    pub n_points: usize,
}

/// Parses comma-separated family specs. Parameter lists also use commas, so
/// a token without `:` continues the previous family's parameters.
pub fn parse_synthetic(text: &str) -> Result<Vec<SyntheticSpec>> {
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if tok.contains(':') {
            let mut parts = tok.splitn(4, ':');
            let head: Vec<&str> = parts.by_ref().take(3).collect();
            let params = parts.next().map(|p| vec![p.to_string()]).unwrap_or_default();
            groups.push((head.join(":"), params));
        } else if let Some(last) = groups.last_mut() {
            last.1.push(tok.to_string());
        } else {
            return Err(Error::Usage(format!("synthetic spec '{text}' must start with shape:count:n_points")));
        }
    }
    if groups.is_empty() {
        return Err(Error::Usage("empty synthetic spec".into()));
    }
    groups
        .into_iter()
        .map(|(head, params)| {
            let parts: Vec<&str> = head.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Usage(format!("synthetic family '{head}' is not shape:count:n_points")));
            }
            let num = |t: &str| t.parse::<usize>().map_err(|e| Error::Usage(format!("synthetic family '{head}': {e}")));
            let mut map = BTreeMap::new();
            for p in params {
                let (k, v) = p
                    .split_once('=')
                    .ok_or_else(|| Error::Usage(format!("synthetic parameter '{p}' is not key=value")))?;
                let v: f64 = v.trim().parse().map_err(|e| Error::Usage(format!("synthetic parameter '{p}': {e}")))?;
                map.insert(k.trim().to_string(), v);
            }
            let surface = Surface::parse(parts[0], &map).map_err(|e| Error::Usage(e.to_string()))?;
            let (count, n_points) = (num(parts[1])?, num(parts[2])?);
            if count == 0 || n_points == 0 {
                return Err(Error::Usage(format!("synthetic family '{head}' must have positive sizes")));
            }
            Ok(SyntheticSpec { surface, count, n_points })
        })
        .collect()
}

/// Samples every family; cloud `j` of family `i` draws its seed from the
/// stream `i` of `seed`. Returns clouds with their family index.
pub fn sample_corpus(specs: &[SyntheticSpec], seed: u64) -> Result<Vec<(usize, PointCloud)>> {
    let mut out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for _ in 0..spec.count {
            out.push((i, pointcloud::sample_synthetic(spec.surface, spec.n_points, rng.next_u64())?));
        }
    }
    Ok(out)
}

struct Inputs {
    names: Vec<String>,
    clouds: Vec<PointCloud>,
    /// Family index of synthetic clouds.
    labels: Option<Vec<usize>>,
    files: Vec<PathBuf>,
}

fn load_inputs(s: &Settings) -> Result<Inputs> {
    let given: Vec<&str> = ["data", "synthetic", "input"].into_iter().filter(|k| !get(s, k).is_empty()).collect();
    if given.len() != 1 {
        return Err(Error::Usage("exactly one of --data, --synthetic or --input is required".into()));
    }
    let files: Vec<PathBuf> = match given[0] {
        "synthetic" => {
            let specs = parse_synthetic(get(s, "synthetic"))?;
            let corpus = sample_corpus(&specs, parse(s, "data_seed")?)?;
            let mut seen = vec![0usize; specs.len()];
            let names = corpus
                .iter()
                .map(|(i, _)| {
                    seen[*i] += 1;
                    format!("{}#{}", specs[*i].surface.name(), seen[*i] - 1)
                })
                .collect();
            let labels = Some(corpus.iter().map(|(i, _)| *i).collect());
            return Ok(Inputs { names, clouds: corpus.into_iter().map(|(_, c)| c).collect(), labels, files: vec![] });
        }
        "data" => {
            let dir = PathBuf::from(get(s, "data"));
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| Error::Usage(format!("cannot read data directory {}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("xyz" | "ply")))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Usage(format!("no .xyz or .ply files in {}", dir.display())));
            }
            files
        }
        _ => get(s, "input").split(',').map(|p| PathBuf::from(p.trim())).collect(),
    };
    let clouds = files.iter().map(pointcloud::read_cloud).collect::<Result<Vec<_>>>()?;
    let names = files.iter().map(|p| p.display().to_string()).collect();
    Ok(Inputs { names, clouds, labels: None, files })
}

fn model_config(s: &Settings) -> Result<ModelConfig> {
    let mut c = match get(s, "preset") {
        "desk" => ModelConfig::desk(),
        "tiny" => ModelConfig::tiny(),
        "full" => ModelConfig::default(),
        other => return Err(Error::Usage(format!("unknown preset '{other}' (expected desk|tiny|full)"))),
    };
    c.filter = parse(s, "filter")?;
    if let Some(v) = parse_opt(s, "code_len")? {
        c.code_len = v;
    }
    if let Some(v) = parse_opt(s, "lattice_side")? {
        c.lattice_side = v;
    }
    if let Some(v) = parse_opt(s, "knn_k")? {
        c.knn_k = v;
    }
    if let Some(v) = parse_opt(s, "sigma")? {
        c.sigma = v;
    }
    if let Some(v) = parse_opt(s, "mu")? {
        c.mu = v;
    }
    if let Some(v) = parse_list(s, "encoder_point")? {
        c.encoder_point = v;
    }
    if let Some(v) = parse_list(s, "encoder_code")? {
        c.encoder_code = v;
    }
    if let Some(v) = parse_opt(s, "fold_hidden")? {
        c.fold_hidden = v;
    }
    if let Some(v) = parse_opt(s, "fold_mid")? {
        c.fold_mid = v;
    }
    if let Some(v) = parse_opt(s, "topo_hidden")? {
        c.topo_hidden = v;
    }
    c.knn_k = c.knn_k.min(c.lattice_size().saturating_sub(1));
    c.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(c)
}

fn train_config(s: &Settings) -> Result<TrainConfig> {
    let c = TrainConfig {
        lr: parse(s, "lr")?,
        batch_size: parse(s, "batch_size")?,
        epochs: parse(s, "epochs")?,
        seed: parse(s, "seed")?,
        loss: parse::<LossKind>(s, "loss")?,
        checkpoint_every: parse(s, "checkpoint_every")?,
        clip_norm: parse(s, "clip_norm")?,
        ..TrainConfig::default()
    };
    c.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(c)
}

fn load_model(s: &Settings) -> Result<(PathBuf, ModelState)> {
    let p = get(s, "checkpoint");
    if p.is_empty() {
        return Err(Error::Usage("--checkpoint is required".into()));
    }
    let path = PathBuf::from(p);
    if !path.is_file() {
        return Err(Error::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    Ok((path.clone(), trainer::load_checkpoint(&path)?.model))
}

/// What a command produced.
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    /// False when a check or certificate failed.
    passed: bool,
}

fn cmd_train(s: &Settings, out: &Path) -> Result<Outcome> {
    let inputs = load_inputs(s)?;
    let mcfg = model_config(s)?;
    let tcfg = train_config(s)?;
    let model = ModelState::new(mcfg, tcfg.seed)?;
    log::info!("training {} parameters on {} clouds", model.parameter_count(), inputs.clouds.len());
    let mut t = Trainer::new(model, tcfg.clone())?;
    let mut outputs = vec!["checkpoint.bin".to_string(), "train.log".to_string()];
    let mut logf = fs::File::create(out.join("train.log"))?;
    let every = tcfg.checkpoint_every;
    let log = t.train(&inputs.clouds, tcfg.epochs, |t, rec| {
        writeln!(logf, "{}", rec.log_line())?;
        log::info!("{}", rec.log_line());
        if every > 0 && rec.epoch % every == 0 {
            let name = format!("checkpoint_{:05}.bin", rec.epoch);
            trainer::save_checkpoint(out.join(&name), &snapshot(t))?;
            outputs.push(name);
        }
        Ok(())
    })?;
    logf.flush()?;
    trainer::save_checkpoint(out.join("checkpoint.bin"), &snapshot(&t))?;
    match log.final_loss() {
        Some(l) => println!("final loss {l}"),
        None => println!("no epochs run; checkpoint holds the initialization"),
    }
    Ok(Outcome { inputs: inputs.files, outputs, passed: true })
}

fn snapshot(t: &Trainer) -> Checkpoint {
    Checkpoint { model: t.model.clone(), adam: t.adam.clone(), epoch: t.epoch, train: t.cfg.clone() }
}

fn write_cloud(out: &Path, name: &str, c: &PointCloud, outputs: &mut Vec<String>) -> Result<()> {
    pointcloud::write_ply_ascii(out.join(name), c)?;
    outputs.push(name.to_string());
    Ok(())
}

fn indexed(stem: &str, i: usize) -> String {
    if i == 0 {
        format!("{stem}.ply")
    } else {
        format!("{stem}_{i}.ply")
    }
}

fn cmd_reconstruct(s: &Settings, out: &Path) -> Result<Outcome> {
    let (ckpt, model) = load_model(s)?;
    let inputs = load_inputs(s)?;
    let trace: Option<usize> = parse_opt(s, "trace_node")?;
    let trace_k: usize = parse(s, "trace_k")?;
    let m = model.config.lattice_size();
    if let Some(i) = trace {
        if i >= m {
            return Err(Error::Usage(format!("--trace-node {i} is out of range for {m} lattice nodes")));
        }
    }
    let mut outputs = Vec::new();
    let mut report = String::new();
    for (i, (name, cloud)) in inputs.names.iter().zip(&inputs.clouds).enumerate() {
        let r = model.reconstruct(cloud)?;
        write_cloud(out, &indexed("coarse", i), &r.coarse, &mut outputs)?;
        write_cloud(out, &indexed("refined", i), &r.refined, &mut outputs)?;
        for (stage, rec) in [("coarse", &r.coarse), ("refined", &r.refined)] {
            let cd = chamfer_plain(cloud, rec)?;
            let (aug, _) = augmented_chamfer(cloud, rec)?;
            report.push_str(&format!("{name} {stage} cd {cd} augcd {aug}\n"));
        }
        if let (Some(node), 0) = (trace, i) {
            let nb = r.adjacency.top_neighbors(node, trace_k);
            let mut scalar = vec![0.0; m];
            nb.iter().for_each(|&j| scalar[j] = 1.0);
            scalar[node] = 2.0;
            let traced = r.refined.clone().with_scalar(scalar)?;
            write_cloud(out, "trace.ply", &traced, &mut outputs)?;
            let mut t = format!("node {node}\n");
            for j in nb {
                t.push_str(&format!("neighbour {j} weight {}\n", r.adjacency.weights()[(node, j)]));
            }
            fs::write(out.join("trace.txt"), t)?;
            outputs.push("trace.txt".into());
        }
    }
    fs::write(out.join("distances.txt"), &report)?;
    outputs.push("distances.txt".into());
    print!("{report}");
    let mut files = vec![ckpt];
    files.extend(inputs.files);
    Ok(Outcome { inputs: files, outputs, passed: true })
}

/// One code per line, shortest round-trip decimals separated by spaces.
pub fn format_codes(codes: &[Vec<f64>]) -> String {
    codes
        .iter()
        .map(|c| c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ") + "\n")
        .collect()
}

pub fn read_codes(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: n + 1, message: e.to_string() })?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::Parse { path: path.to_path_buf(), line: n + 1, message: "ragged code matrix".into() });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Usage(format!("{} holds no codes", path.display())));
    }
    let cols = rows[0].len();
    Matrix::from_vec(rows.len(), cols, rows.concat())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim().parse().map_err(|e: std::num::ParseIntError| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn cmd_encode(s: &Settings, out: &Path) -> Result<Outcome> {
    let (ckpt, model) = load_model(s)?;
    let inputs = load_inputs(s)?;
    let codes = inputs.clouds.iter().map(|c| model.encode(c)).collect::<Result<Vec<_>>>()?;
    fs::write(out.join("codes.txt"), format_codes(&codes))?;
    fs::write(out.join("names.txt"), inputs.names.join("\n") + "\n")?;
    let mut outputs = vec!["codes.txt".to_string(), "names.txt".to_string()];
    if let Some(labels) = &inputs.labels {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        fs::write(out.join("labels.txt"), text)?;
        outputs.push("labels.txt".into());
    }
    println!("{} codes of length {}", codes.len(), model.config.code_len);
    let mut files = vec![ckpt];
    files.extend(inputs.files);
    Ok(Outcome { inputs: files, outputs, passed: true })
}

pub const SPECTRAL_TOLERANCE: f64 = 1e-8;
pub const FIRST_VECTOR_TOLERANCE: f64 = 1e-6;

fn cmd_spectra(s: &Settings, out: &Path) -> Result<Outcome> {
    let (ckpt, model) = load_model(s)?;
    let inputs = load_inputs(s)?;
    let r = model.reconstruct(&inputs.clouds[0])?;
    let spec = LaplacianSpectrum::of(&r.adjacency)?;
    graph::write_spectrum(out.join("spectrum.txt"), spec.eigenvalues())?;
    let mut outputs = vec!["spectrum.txt".to_string()];
    for i in 0..4.min(spec.eigenvalues().len()) {
        let colored = r.refined.clone().with_scalar(spec.eigenvector(i))?;
        write_cloud(out, &format!("eigenvector_{}.ply", i + 1), &colored, &mut outputs)?;
    }
    let lambda1 = spec.eigenvalues()[0];
    let residual = spec.reconstruction_residual();
    let first = spec.first_vector_defect();
    let passed = lambda1.abs() <= SPECTRAL_TOLERANCE && residual < SPECTRAL_TOLERANCE && first <= FIRST_VECTOR_TOLERANCE;
    let report = format!(
        "lambda_1 {lambda1:e}\nresidual {residual:e}\northogonality {:e}\nfirst_vector_defect {first:e}\n{}\n",
        spec.orthogonality_defect(),
        if passed { "PASS" } else { "FAIL" }
    );
    fs::write(out.join("spectrum_report.txt"), &report)?;
    outputs.push("spectrum_report.txt".into());
    print!("{report}");
    let mut files = vec![ckpt];
    files.extend(inputs.files);
    Ok(Outcome { inputs: files, outputs, passed })
}

pub const ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn cmd_alpha_sweep(s: &Settings, out: &Path) -> Result<Outcome> {
    let (ckpt, model) = load_model(s)?;
    let inputs = load_inputs(s)?;
    let cloud = &inputs.clouds[0];
    let family = match get(s, "family") {
        "" if model.config.filter == FilterKind::Laplacian => FilterKind::Laplacian,
        "" => FilterKind::Adjacency,
        f => f.parse()?,
    };
    if family == FilterKind::None {
        return Err(Error::Usage("--family must be adjacency or laplacian".into()));
    }
    let mu = parse_opt(s, "mu")?.unwrap_or(model.config.mu);
    let r = model.reconstruct(cloud)?;
    let x = r.coarse.to_matrix();
    let same_filter = model.config.filter == family && mu == model.config.mu;
    let mut outputs = Vec::new();
    let mut table = String::from("alpha cd augcd\n");
    for alpha in ALPHAS {
        // the two ends the model itself computes are reused verbatim
        let filtered = if alpha == 0.0 {
            r.coarse.clone()
        } else if alpha == 0.5 && same_filter {
            r.refined.clone()
        } else {
            PointCloud::from_matrix(&filter_at(&r.adjacency, &x, family, mu, alpha)?)?
        };
        write_cloud(out, &format!("alpha_{alpha:.2}.ply"), &filtered, &mut outputs)?;
        let cd = chamfer_plain(cloud, &filtered)?;
        let (aug, _) = augmented_chamfer(cloud, &filtered)?;
        table.push_str(&format!("{alpha:.2} {cd} {aug}\n"));
    }
    fs::write(out.join("alpha_table.txt"), &table)?;
    outputs.push("alpha_table.txt".into());
    print!("{table}");
    let mut files = vec![ckpt];
    files.extend(inputs.files);
    Ok(Outcome { inputs: files, outputs, passed: true })
}

fn filter_at(a: &GraphAdjacency, x: &Matrix, family: FilterKind, mu: f64, alpha: f64) -> Result<Matrix> {
    match family {
        FilterKind::Laplacian => graph::alpha_filter_laplacian(a, x, mu, alpha),
        _ => graph::alpha_filter_adjacency(a, x, alpha),
    }
}

fn cmd_certify(s: &Settings, out: &Path) -> Result<Outcome> {
    let thm2_k = parse_list(s, "thm2_k")?.unwrap_or_default();
    let cfg = SuiteConfig {
        thm1_k_max: parse(s, "k_max")?,
        thm1_clouds: parse(s, "clouds")?,
        thm1_points: parse(s, "points")?,
        thm2_k,
        thm3_pairs: parse(s, "pairs")?,
        thm4_graphs: parse(s, "graphs")?,
        thm4_signals: parse(s, "signals")?,
        proxy: if parse::<bool>(s, "corner_proxy")? { Proxy::Corner } else { Proxy::Center },
        seed: parse(s, "seed")?,
    };
    if cfg.thm1_points == 0 || cfg.thm2_k.contains(&0) {
        return Err(Error::Usage("point counts and resolutions must be positive".into()));
    }
    let certs = theory::certify_suite(&cfg)?;
    let text: String = certs.iter().map(|c| format!("{c}\n")).collect();
    fs::write(out.join("certificates.txt"), &text)?;
    print!("{text}");
    Ok(Outcome { inputs: vec![], outputs: vec!["certificates.txt".into()], passed: certs.iter().all(|c| c.pass) })
}

fn cmd_classify(s: &Settings, out: &Path) -> Result<Outcome> {
    let mut files = Vec::new();
    let mut path = |key: &str| -> Result<PathBuf> {
        let p = get(s, key);
        if p.is_empty() {
            return Err(Error::Usage(format!("--{} is required", flag_name(key))));
        }
        files.push(PathBuf::from(p));
        Ok(PathBuf::from(p))
    };
    let (trc, trl, tec, tel) = (path("train_codes")?, path("train_labels")?, path("test_codes")?, path("test_labels")?);
    let (train_codes, train_labels) = (read_codes(&trc)?, read_labels(&trl)?);
    let (test_codes, test_labels) = (read_codes(&tec)?, read_labels(&tel)?);
    for (codes, labels, which) in [(&train_codes, &train_labels, "training"), (&test_codes, &test_labels, "test")] {
        if codes.rows() != labels.len() {
            return Err(Error::Usage(format!("{which} split has {} codes but {} labels", codes.rows(), labels.len())));
        }
    }
    let cfg = ClassifierConfig { epochs: parse(s, "epochs")?, lr: parse(s, "lr")?, l2: parse(s, "l2")? };
    let clf = trainer::fit_classifier(&train_codes, &train_labels, &cfg).map_err(|e| Error::Usage(e.to_string()))?;
    let train_acc = trainer::accuracy(&trainer::classify(&clf, &train_codes)?, &train_labels);
    let predicted = trainer::classify(&clf, &test_codes).map_err(|e| Error::Usage(e.to_string()))?;
    let test_acc = trainer::accuracy(&predicted, &test_labels);
    let report = format!("train_accuracy {train_acc}\ntest_accuracy {test_acc}\n");
    fs::write(out.join("accuracy.txt"), &report)?;
    let preds: String = predicted.iter().map(|p| format!("{p}\n")).collect();
    fs::write(out.join("predictions.txt"), preds)?;
    print!("{report}");
    Ok(Outcome { inputs: files, outputs: vec!["accuracy.txt".into(), "predictions.txt".into()], passed: true })
}

fn dispatch(command: &str, s: &Settings, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    match command {
        "train" => cmd_train(s, out),
        "reconstruct" => cmd_reconstruct(s, out),
        "encode" => cmd_encode(s, out),
        "spectra" => cmd_spectra(s, out),
        "alpha-sweep" => cmd_alpha_sweep(s, out),
        "certify" => cmd_certify(s, out),
        "classify" => cmd_classify(s, out),
        other => Err(Error::Usage(format!("unknown command '{other}'"))),
    }
}

/// SHA-256 of an artifact. Wallclock fields of training logs are dropped
/// first, since timing is the one thing a rerun cannot reproduce.
pub fn artifact_digest(name: &str, bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    if name == "train.log" || name.ends_with("/train.log") {
        for line in String::from_utf8_lossy(bytes).lines() {
            let kept = line.split(" wallclock_s ").next().unwrap_or(line);
            h.update(kept.as_bytes());
            h.update(b"\n");
        }
    } else {
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// Command, resolved settings and checksums of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    pub command: String,
    pub settings: Settings,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut t = format!("command = {}\n", self.command);
        for (k, v) in &self.settings {
            t.push_str(&format!("config.{k} = {v}\n"));
        }
        for (p, d) in &self.inputs {
            t.push_str(&format!("input.{p} = {d}\n"));
        }
        for (p, d) in &self.outputs {
            t.push_str(&format!("output.{p} = {d}\n"));
        }
        t
    }

    pub fn parse(path: &Path) -> Result<Self> {
        let mut m = RunManifest::default();
        for (n, (k, v)) in read_config_ordered(path)?.into_iter().enumerate() {
            if k == "command" {
                m.command = v;
            } else if let Some(k) = k.strip_prefix("config.") {
                m.settings.insert(k.to_string(), v);
            } else if let Some(p) = k.strip_prefix("input.") {
                m.inputs.push((p.to_string(), v));
            } else if let Some(p) = k.strip_prefix("output.") {
                m.outputs.push((p.to_string(), v));
            } else {
                return Err(Error::Parse { path: path.to_path_buf(), line: n + 1, message: format!("unknown entry '{k}'") });
            }
        }
        if m.command.is_empty() {
            return Err(Error::Parse { path: path.to_path_buf(), line: 0, message: "manifest names no command".into() });
        }
        Ok(m)
    }
}

fn read_config_ordered(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| {
            l.split_once(" = ")
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse { path: path.to_path_buf(), line: n + 1, message: "expected 'key = value'".into() })
        })
        .collect()
}

fn digest_file(path: &Path) -> Result<String> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    Ok(artifact_digest(name, &fs::read(path)?))
}

fn execute(command: &str, s: &Settings, out: &Path) -> Result<(RunManifest, bool)> {
    let outcome = dispatch(command, s, out)?;
    let mut m = RunManifest { command: command.to_string(), settings: s.clone(), ..Default::default() };
    for p in &outcome.inputs {
        m.inputs.push((p.display().to_string(), digest_file(p)?));
    }
    for name in &outcome.outputs {
        m.outputs.push((name.clone(), digest_file(&out.join(name))?));
    }
    fs::write(out.join(MANIFEST), m.to_text())?;
    Ok((m, outcome.passed))
}

fn replay(manifest: &Path, out: &Path) -> Result<bool> {
    let m = RunManifest::parse(manifest)?;
    for (p, d) in &m.inputs {
        let now = digest_file(Path::new(p)).map_err(|e| Error::Usage(format!("input {p}: {e}")))?;
        if &now != d {
            return Err(Error::Usage(format!("input {p} changed since the recorded run")));
        }
    }
    let expected = keys_of(&m.command);
    if expected.is_empty() || expected.iter().any(|k| !m.settings.contains_key(k.name)) {
        return Err(Error::Usage(format!("manifest settings do not match command '{}'", m.command)));
    }
    let (again, _) = execute(&m.command, &m.settings, out)?;
    let mut same = again.outputs.len() == m.outputs.len();
    for ((name, old), (name2, new)) in m.outputs.iter().zip(&again.outputs) {
        if name != name2 || old != new {
            println!("differs: {name}");
            same = false;
        }
    }
    println!("{}", if same { "replay identical" } else { "replay differs" });
    Ok(same)
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Verification(_) | Error::NonFiniteLoss { .. } => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (command, sub) = matches.subcommand().expect("subcommand is required");
    let out = PathBuf::from(sub.get_one::<String>("out").expect("--out is required"));
    let result = if command == "replay" {
        let manifest = PathBuf::from(sub.get_one::<String>("manifest").expect("manifest is required"));
        replay(&manifest, &out)
    } else {
        let file = match sub.get_one::<String>("config").map(PathBuf::from) {
            Some(p) => match read_config(&p) {
                Ok(s) => Some((p, s)),
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            },
            None => None,
        };
        resolve(command, file.as_ref().map(|(p, s)| (p.as_path(), s.clone())), flags_of(command, sub))
            .and_then(|s| execute(command, &s, &out))
            .map(|(_, passed)| passed)
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_grammar() {
        let specs = parse_synthetic("torus:8:2048:R=1,r=0.3,sphere:2:64").unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].surface, Surface::Torus { major: 1.0, minor: 0.3 });
        assert_eq!((specs[0].count, specs[0].n_points), (8, 2048));
        assert_eq!(specs[1].surface, Surface::Sphere { radius: 1.0 });
        for bad in ["", "torus:8", "R=1", "torus:x:10", "torus:1:10:q=2", "blob:1:10", "sphere:0:10"] {
            assert!(parse_synthetic(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let specs = parse_synthetic("sphere:3:16,torus:2:16").unwrap();
        let a = sample_corpus(&specs, 4).unwrap();
        assert_eq!(a, sample_corpus(&specs, 4).unwrap());
        assert_eq!(a.iter().map(|(l, _)| *l).collect::<Vec<_>>(), vec![0, 0, 0, 1, 1]);
        assert_ne!(a[0].1, a[1].1);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        fs::write(&p, "# comment\nepochs = 5\nseed=3\n").unwrap();
        let file = read_config(&p).unwrap();
        let mut flags = Settings::new();
        flags.insert("seed".into(), "9".into());
        let s = resolve("train", Some((&p, file)), flags).unwrap();
        assert_eq!(get(&s, "epochs"), "5");
        assert_eq!(get(&s, "seed"), "9");
        assert_eq!(get(&s, "filter"), "adjacency");
    }

    #[test]
    fn unknown_config_key() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        fs::write(&p, "bogus = 1\n").unwrap();
        let file = read_config(&p).unwrap();
        assert!(matches!(resolve("train", Some((&p, file)), Settings::new()), Err(Error::Usage(_))));
        fs::write(&p, "no equals sign\n").unwrap();
        assert!(matches!(read_config(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn digest_ignores_wallclock() {
        let a = artifact_digest("train.log", b"epoch 1 loss 0.5 wallclock_s 1.234\n");
        let b = artifact_digest("train.log", b"epoch 1 loss 0.5 wallclock_s 9.000\n");
        let c = artifact_digest("train.log", b"epoch 1 loss 0.6 wallclock_s 1.234\n");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(artifact_digest("x.txt", b"a"), artifact_digest("x.txt", b"b"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest { command: "certify".into(), ..Default::default() };
        m.settings.insert("seed".into(), "0".into());
        m.settings.insert("data".into(), String::new());
        m.outputs.push(("certificates.txt".into(), "ab".into()));
        let p = dir.path().join(MANIFEST);
        fs::write(&p, m.to_text()).unwrap();
        assert_eq!(RunManifest::parse(&p).unwrap(), m);
    }

    #[test]
    fn codes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let codes = vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-300, 7.0]];
        let p = dir.path().join("codes.txt");
        fs::write(&p, format_codes(&codes)).unwrap();
        let m = read_codes(&p).unwrap();
        assert_eq!(m.row(0), &codes[0][..]);
        assert_eq!(m.row(1), &codes[1][..]);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["foldgraph", "train", "--out", "/nonexistent/never", "--bogus"]), 2);
        assert_eq!(run(["foldgraph"]), 2);
    }
}
