//! Trains a small filtered autoencoder on spheres and tori, then writes
//! the coarse and refined reconstructions of one input as PLY files.
//!
//! cargo run --release --example train_and_reconstruct -- [epochs] [output dir]

use foldgraph::network::{ModelConfig, ModelState};
use foldgraph::pointcloud::{augmented_chamfer, sample_synthetic, write_ply_ascii, PointCloud, Surface};
use foldgraph::trainer::{train, TrainConfig};

fn main() -> foldgraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(60, |a| a.parse().expect("epochs"));
    let dir = args.next().map(Into::into).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&dir)?;

    let data: Vec<PointCloud> = (0..8)
        .map(|i| {
            let s = if i % 2 == 0 { Surface::Sphere { radius: 1.0 } } else { Surface::Torus { major: 1.0, minor: 0.3 } };
            sample_synthetic(s, 512, i)
        })
        .collect::<foldgraph::Result<_>>()?;

    let model = ModelState::new(ModelConfig::desk(), 0)?;
    println!("{} parameters", model.parameter_count());
    let cfg = TrainConfig { lr: 1e-3, batch_size: 4, epochs, ..TrainConfig::default() };
    let (model, log) = train(model, &data, &cfg)?;
    for r in log.records.iter().step_by(10.max(epochs / 10)) {
        println!("epoch {:>4} loss {:.5}", r.epoch, r.loss);
    }

    let rec = model.reconstruct(&data[1])?;
    println!("coarse augcd {:.5}", augmented_chamfer(&data[1], &rec.coarse)?.0);
    println!("refined augcd {:.5}", augmented_chamfer(&data[1], &rec.refined)?.0);
    write_ply_ascii(dir.join("coarse.ply"), &rec.coarse)?;
    write_ply_ascii(dir.join("refined.ply"), &rec.refined)?;
    println!("written to {}", dir.display());
    Ok(())
}
