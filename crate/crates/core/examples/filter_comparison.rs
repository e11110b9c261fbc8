//! Trains folding-only, adjacency-filtered and Laplacian-filtered models on
//! a mixed synthetic corpus and compares their final reconstruction losses.
//! The folding-only model is widened to the filtered models' parameter
//! count.
//!
//! cargo run --release --example filter_comparison -- [epochs] [lr] [batch] [seeds]

use foldgraph::cli::{parse_synthetic, sample_corpus};
use foldgraph::network::{FilterKind, ModelConfig, ModelState};
use foldgraph::trainer::{train, TrainConfig};

fn main() -> foldgraph::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let epochs: usize = arg(0, "300").parse().unwrap();
    let lr: f64 = arg(1, "0.001").parse().unwrap();
    let batch: usize = arg(2, "8").parse().unwrap();
    let seeds: u64 = arg(3, "3").parse().unwrap();

    let specs = parse_synthetic("torus:8:512,sphere:8:512,cube:8:512")?;
    let base = ModelConfig::desk();
    let configs = [
        ("none", base.matched_folding_only()),
        ("adjacency", ModelConfig { filter: FilterKind::Adjacency, ..base.clone() }),
        ("laplacian", ModelConfig { filter: FilterKind::Laplacian, ..base.clone() }),
    ];
    for (name, cfg) in configs {
        let mut finals = Vec::new();
        for seed in 0..seeds {
            let data: Vec<_> = sample_corpus(&specs, seed)?.into_iter().map(|(_, c)| c).collect();
            let model = ModelState::new(cfg.clone(), seed)?;
            let params = model.active_parameter_count();
            let tcfg = TrainConfig { lr, batch_size: batch, epochs, seed, ..TrainConfig::default() };
            let (_, log) = train(model, &data, &tcfg)?;
            let last = log.final_loss().unwrap_or(f64::NAN);
            println!("{name:>9} seed {seed} params {params} final augcd {last:.5}");
            finals.push(last);
        }
        finals.sort_by(f64::total_cmp);
        println!("{name:>9} median {:.5}", finals[finals.len() / 2]);
    }
    Ok(())
}
