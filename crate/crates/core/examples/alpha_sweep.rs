//! Sweeps the filter strength on a reconstruction from an untrained model
//! and prints how far each filtered cloud moves from the folded points.

use foldgraph::graph::{alpha_filter_adjacency, alpha_filter_laplacian};
use foldgraph::network::{ModelConfig, ModelState};
use foldgraph::pointcloud::{augmented_chamfer, sample_synthetic, PointCloud, Surface};

fn main() -> foldgraph::Result<()> {
    let model = ModelState::new(ModelConfig::desk(), 1)?;
    let input = sample_synthetic(Surface::Torus { major: 1.0, minor: 0.3 }, 512, 0)?;
    let rec = model.reconstruct(&input)?;
    let x = rec.coarse.to_matrix();
    println!("alpha  adjacency  laplacian");
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let adj = PointCloud::from_matrix(&alpha_filter_adjacency(&rec.adjacency, &x, alpha)?)?;
        let lap = PointCloud::from_matrix(&alpha_filter_laplacian(&rec.adjacency, &x, 0.5, alpha)?)?;
        println!(
            "{alpha:.2}   {:.6}   {:.6}",
            augmented_chamfer(&rec.coarse, &adj)?.0,
            augmented_chamfer(&rec.coarse, &lap)?.0
        );
    }
    Ok(())
}
