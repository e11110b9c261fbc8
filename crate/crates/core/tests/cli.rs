use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use foldgraph::cli::{read_codes, run, RunManifest, MANIFEST};
use foldgraph::network::{ModelConfig, ModelState};
use foldgraph::pointcloud::{read_ply_ascii, sample_synthetic, write_xyz, Surface};
use foldgraph::trainer::load_checkpoint;

fn go(args: &[&str]) -> i32 {
    run(std::iter::once("foldgraph").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_tiny(dir: &Path, name: &str, filter: &str, epochs: &str) -> PathBuf {
    let out = dir.join(name);
    let code = go(&[
        "train", "--out", s(&out), "--synthetic", "sphere:3:40,torus:3:40", "--preset", "tiny", "--filter", filter,
        "--epochs", epochs, "--batch-size", "2", "--lr", "0.001",
    ]);
    assert_eq!(code, 0);
    out
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_foldgraph");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(status(&["--help"]), Some(0));
    assert_eq!(status(&[]), Some(2));
    assert_eq!(status(&["train", "--bogus", "1", "--out", s(dir.path())]), Some(2));
    assert_eq!(status(&["train", "--synthetic", "sphere:1:10"]), Some(2));
    assert_eq!(status(&["frobnicate", "--out", s(dir.path())]), Some(2));
    let ok = dir.path().join("c");
    let small = ["certify", "--out", s(&ok), "--k-max", "2", "--clouds", "2", "--pairs", "2", "--graphs", "2"];
    assert_eq!(status(&small), Some(0));
    let mut corner = small.to_vec();
    corner.push("--corner-proxy");
    assert_eq!(status(&corner), Some(1));
}

#[test]
fn bad_settings_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(go(&["train", "--out", out, "--synthetic", "sphere:1:10", "--filter", "median"]), 2);
    assert_eq!(go(&["train", "--out", out, "--synthetic", "sphere:1:10", "--lr", "-1"]), 2);
    assert_eq!(go(&["train", "--out", out, "--synthetic", "blob:1:10"]), 2);
    assert_eq!(go(&["train", "--out", out]), 2);
    assert_eq!(go(&["train", "--out", out, "--synthetic", "sphere:1:10", "--input", "x.xyz"]), 2);
    assert_eq!(go(&["reconstruct", "--out", out, "--synthetic", "sphere:1:10"]), 2);
    assert_eq!(go(&["encode", "--out", out, "--checkpoint", "/nonexistent.bin", "--synthetic", "sphere:1:10"]), 2);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs = 1\nwarp = 9\n").unwrap();
    assert_eq!(go(&["train", "--out", out, "--config", s(&cfg), "--synthetic", "sphere:1:10"]), 2);
}

#[test]
fn train_writes_log_checkpoint_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let code = go(&[
        "train", "--out", s(&out), "--synthetic", "sphere:2:30", "--preset", "tiny", "--epochs", "4",
        "--checkpoint-every", "2", "--lr", "0.001",
    ]);
    assert_eq!(code, 0);
    let log = fs::read_to_string(out.join("train.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 4);
    for (i, line) in lines.iter().enumerate() {
        let t: Vec<&str> = line.split(' ').collect();
        assert_eq!((t.len(), t[0], t[2], t[4]), (6, "epoch", "loss", "wallclock_s"));
        assert_eq!(t[1], (i + 1).to_string());
        assert!(t[3].parse::<f64>().unwrap().is_finite());
        assert!(t[5].parse::<f64>().unwrap() >= 0.0);
    }
    for f in ["checkpoint.bin", "checkpoint_00002.bin", "checkpoint_00004.bin", MANIFEST] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(load_checkpoint(out.join("checkpoint_00002.bin")).unwrap().epoch, 2);
    assert_eq!(
        fs::read(out.join("checkpoint.bin")).unwrap(),
        fs::read(out.join("checkpoint_00004.bin")).unwrap()
    );
    let m = RunManifest::parse(&out.join(MANIFEST)).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.settings["epochs"], "4");
    assert_eq!(m.outputs.len(), 4);
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_tiny(dir.path(), "z", "adjacency", "0");
    let ckpt = load_checkpoint(out.join("checkpoint.bin")).unwrap();
    assert_eq!(ckpt.epoch, 0);
    let init = ModelState::new(ModelConfig::tiny(), 0).unwrap();
    assert_eq!(ckpt.model, init);
    assert!(fs::read_to_string(out.join("train.log")).unwrap().is_empty());
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny run\nepochs = 3\npreset = tiny\nsynthetic = sphere:2:20\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(go(&["train", "--config", s(&cfg), "--out", s(&out), "--epochs", "1"]), 0);
    assert_eq!(fs::read_to_string(out.join("train.log")).unwrap().lines().count(), 1);
    let m = RunManifest::parse(&out.join(MANIFEST)).unwrap();
    assert_eq!((m.settings["epochs"].as_str(), m.settings["preset"].as_str()), ("1", "tiny"));
}

#[test]
fn every_command_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let trained = train_tiny(dir.path(), "train", "laplacian", "2");
    let ckpt = trained.join("checkpoint.bin");
    let cloud = dir.path().join("cloud.xyz");
    write_xyz(&cloud, &sample_synthetic(Surface::Torus { major: 1.0, minor: 0.3 }, 50, 3).unwrap()).unwrap();

    let runs: Vec<(&str, Vec<String>)> = vec![
        ("reconstruct", vec!["--checkpoint".into(), s(&ckpt).into(), "--input".into(), s(&cloud).into(), "--trace-node".into(), "4".into()]),
        ("encode", vec!["--checkpoint".into(), s(&ckpt).into(), "--synthetic".into(), "sphere:2:30,cube:2:30".into()]),
        ("spectra", vec!["--checkpoint".into(), s(&ckpt).into(), "--input".into(), s(&cloud).into()]),
        ("alpha-sweep", vec!["--checkpoint".into(), s(&ckpt).into(), "--input".into(), s(&cloud).into()]),
        ("certify", vec!["--k-max".into(), "2".into(), "--clouds".into(), "3".into(), "--graphs".into(), "5".into(), "--pairs".into(), "3".into()]),
    ];
    let mut dirs = vec![trained];
    for (cmd, extra) in &runs {
        let out = dir.path().join(cmd);
        let mut args = vec![*cmd, "--out", s(&out)];
        args.extend(extra.iter().map(String::as_str));
        assert_eq!(go(&args), 0, "{cmd}");
        dirs.push(out);
    }
    for (i, d) in dirs.iter().enumerate() {
        let again = dir.path().join(format!("replay{i}"));
        assert_eq!(go(&["replay", s(&d.join(MANIFEST)), "--out", s(&again)]), 0, "{}", d.display());
        let a = fs::read_to_string(d.join(MANIFEST)).unwrap();
        let b = fs::read_to_string(again.join(MANIFEST)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn replay_detects_changes() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("c.xyz");
    write_xyz(&cloud, &sample_synthetic(Surface::Sphere { radius: 1.0 }, 30, 0).unwrap()).unwrap();
    let out = dir.path().join("t");
    let args = ["train", "--out", s(&out), "--input", s(&cloud), "--preset", "tiny", "--epochs", "1"];
    assert_eq!(go(&args), 0);
    let manifest = out.join(MANIFEST);

    // a tampered output digest is a mismatch, exit 1
    let text = fs::read_to_string(&manifest).unwrap();
    let line = text.lines().find(|l| l.starts_with("output.checkpoint.bin")).unwrap();
    let digest = line.rsplit(' ').next().unwrap();
    let flipped = if digest.starts_with('0') { "1" } else { "0" }.to_string() + &digest[1..];
    let tampered = dir.path().join("tampered.txt");
    fs::write(&tampered, text.replace(digest, &flipped)).unwrap();
    assert_eq!(go(&["replay", s(&tampered), "--out", s(&dir.path().join("r1"))]), 1);

    // a changed input refuses to replay
    write_xyz(&cloud, &sample_synthetic(Surface::Sphere { radius: 1.0 }, 30, 1).unwrap()).unwrap();
    assert_eq!(go(&["replay", s(&manifest), "--out", s(&dir.path().join("r2"))]), 2);
}

#[test]
fn folding_only_refined_equals_coarse_and_traces_lattice_neighbours() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_tiny(dir.path(), "n", "none", "1").join("checkpoint.bin");
    let out = dir.path().join("r");
    let code = go(&[
        "reconstruct", "--out", s(&out), "--checkpoint", s(&ckpt), "--synthetic", "sphere:2:30", "--trace-node", "4",
        "--trace-k", "4",
    ]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(out.join("coarse.ply")).unwrap(), fs::read(out.join("refined.ply")).unwrap());
    assert_eq!(fs::read(out.join("coarse_1.ply")).unwrap(), fs::read(out.join("refined_1.ply")).unwrap());
    // node 4 is the centre of the 3x3 lattice; its nearest nodes are the
    // four face neighbours
    let trace = fs::read_to_string(out.join("trace.txt")).unwrap();
    let mut nb: Vec<usize> =
        trace.lines().filter_map(|l| l.strip_prefix("neighbour ")).map(|l| l.split(' ').next().unwrap().parse().unwrap()).collect();
    nb.sort_unstable();
    assert_eq!(nb, vec![1, 3, 5, 7]);
    let scalar = read_ply_ascii(out.join("trace.ply")).unwrap().scalar().unwrap().to_vec();
    assert_eq!(scalar, vec![0.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 0.0]);
    let distances = fs::read_to_string(out.join("distances.txt")).unwrap();
    assert_eq!(distances.lines().count(), 4);
}

#[test]
fn trace_node_out_of_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_tiny(dir.path(), "n", "adjacency", "0").join("checkpoint.bin");
    let out = dir.path().join("r");
    assert_eq!(go(&["reconstruct", "--out", s(&out), "--checkpoint", s(&ckpt), "--synthetic", "sphere:1:20", "--trace-node", "9"]), 2);
}

#[test]
fn permuted_cloud_encodes_to_the_same_code() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_tiny(dir.path(), "m", "adjacency", "1").join("checkpoint.bin");
    let cloud = sample_synthetic(Surface::CubeSurface { half: 0.5 }, 60, 2).unwrap();
    let order: Vec<usize> = (0..60).rev().collect();
    let (a, b) = (dir.path().join("a.xyz"), dir.path().join("b.xyz"));
    write_xyz(&a, &cloud).unwrap();
    write_xyz(&b, &cloud.permuted(&order).unwrap()).unwrap();
    let out = dir.path().join("e");
    let inputs = format!("{},{}", s(&a), s(&b));
    assert_eq!(go(&["encode", "--out", s(&out), "--checkpoint", s(&ckpt), "--input", &inputs]), 0);
    let codes = fs::read_to_string(out.join("codes.txt")).unwrap();
    let lines: Vec<&str> = codes.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], lines[1]);
    assert_eq!(read_codes(&out.join("codes.txt")).unwrap().cols(), ModelConfig::tiny().code_len);
    assert!(!out.join("labels.txt").exists());
}

#[test]
fn encode_then_classify() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_tiny(dir.path(), "m", "adjacency", "1").join("checkpoint.bin");
    let (tr, te) = (dir.path().join("tr"), dir.path().join("te"));
    let corpus = "sphere:6:40,torus:6:40";
    assert_eq!(go(&["encode", "--out", s(&tr), "--checkpoint", s(&ckpt), "--synthetic", corpus, "--data-seed", "1"]), 0);
    assert_eq!(go(&["encode", "--out", s(&te), "--checkpoint", s(&ckpt), "--synthetic", corpus, "--data-seed", "2"]), 0);
    let names = fs::read_to_string(tr.join("names.txt")).unwrap();
    assert!(names.starts_with("sphere#0\n") && names.contains("torus#5"));
    let out = dir.path().join("c");
    let code = go(&[
        "classify", "--out", s(&out), "--train-codes", s(&tr.join("codes.txt")), "--train-labels", s(&tr.join("labels.txt")),
        "--test-codes", s(&te.join("codes.txt")), "--test-labels", s(&te.join("labels.txt")),
    ]);
    assert_eq!(code, 0);
    let report = fs::read_to_string(out.join("accuracy.txt")).unwrap();
    assert!(report.starts_with("train_accuracy ") && report.contains("\ntest_accuracy "));
    assert_eq!(fs::read_to_string(out.join("predictions.txt")).unwrap().lines().count(), 12);

    // one label short
    let short = dir.path().join("short.txt");
    let labels = fs::read_to_string(te.join("labels.txt")).unwrap();
    fs::write(&short, labels.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    let code = go(&[
        "classify", "--out", s(&out), "--train-codes", s(&tr.join("codes.txt")), "--train-labels", s(&tr.join("labels.txt")),
        "--test-codes", s(&te.join("codes.txt")), "--test-labels", s(&short),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn spectra_and_alpha_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_tiny(dir.path(), "m", "adjacency", "2").join("checkpoint.bin");
    let cloud = dir.path().join("c.xyz");
    write_xyz(&cloud, &sample_synthetic(Surface::Sphere { radius: 1.0 }, 40, 5).unwrap()).unwrap();

    let sp = dir.path().join("sp");
    assert_eq!(go(&["spectra", "--out", s(&sp), "--checkpoint", s(&ckpt), "--input", s(&cloud)]), 0);
    let report = fs::read_to_string(sp.join("spectrum_report.txt")).unwrap();
    assert!(report.trim_end().ends_with("PASS"), "{report}");
    let spectrum: Vec<f64> = fs::read_to_string(sp.join("spectrum.txt"))
        .unwrap()
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    assert!(spectrum.len() >= 9);
    let first = read_ply_ascii(sp.join("eigenvector_1.ply")).unwrap().scalar().unwrap().to_vec();
    assert!(first.iter().all(|v| (v - first[0]).abs() < 1e-6));
    assert!((first[0].abs() - 1.0 / 3.0).abs() < 1e-6);

    let rec = dir.path().join("rec");
    assert_eq!(go(&["reconstruct", "--out", s(&rec), "--checkpoint", s(&ckpt), "--input", s(&cloud)]), 0);
    let sw = dir.path().join("sw");
    assert_eq!(go(&["alpha-sweep", "--out", s(&sw), "--checkpoint", s(&ckpt), "--input", s(&cloud)]), 0);
    assert_eq!(fs::read(sw.join("alpha_0.00.ply")).unwrap(), fs::read(rec.join("coarse.ply")).unwrap());
    assert_eq!(fs::read(sw.join("alpha_0.50.ply")).unwrap(), fs::read(rec.join("refined.ply")).unwrap());
    let table = fs::read_to_string(sw.join("alpha_table.txt")).unwrap();
    assert_eq!(table.lines().count(), 6);

    let lap = dir.path().join("lap");
    assert_eq!(go(&["alpha-sweep", "--out", s(&lap), "--checkpoint", s(&ckpt), "--input", s(&cloud), "--family", "laplacian"]), 0);
    assert_eq!(fs::read(lap.join("alpha_0.00.ply")).unwrap(), fs::read(rec.join("coarse.ply")).unwrap());
    assert_eq!(go(&["alpha-sweep", "--out", s(&lap), "--checkpoint", s(&ckpt), "--input", s(&cloud), "--family", "none"]), 2);
}

#[test]
fn certify_writes_one_line_per_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let code = go(&[
        "certify", "--out", s(&out), "--k-max", "3", "--clouds", "4", "--thm2-k", "2,4", "--pairs", "4", "--graphs", "10",
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(out.join("certificates.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3 + 2 + 2);
    assert!(lines.iter().all(|l| l.starts_with("theorem ") && l.ends_with(" PASS")));
}
