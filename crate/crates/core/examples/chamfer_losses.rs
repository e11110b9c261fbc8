//! Compares the augmented Chamfer distance with the plain one on a few
//! shape pairs, including a reconstruction that covers only part of the
//! input.

use foldgraph::pointcloud::{augmented_chamfer, chamfer_plain, loss_and_grad, sample_synthetic, LossKind, PointCloud, Surface};

fn main() -> foldgraph::Result<()> {
    let sphere = sample_synthetic(Surface::Sphere { radius: 1.0 }, 512, 0)?;
    let torus = sample_synthetic(Surface::Torus { major: 1.0, minor: 0.3 }, 512, 1)?;
    let cube = sample_synthetic(Surface::CubeSurface { half: 0.8 }, 512, 2)?;
    // a reconstruction collapsed onto the upper cap of the sphere
    let cap = PointCloud::new(sphere.points().iter().copied().filter(|p| p[2] > 0.8).collect())?;

    for (name, s, r) in [("sphere/torus", &sphere, &torus), ("sphere/cube", &sphere, &cube), ("sphere/cap", &sphere, &cap)] {
        let (aug, m) = augmented_chamfer(s, r)?;
        let plain = chamfer_plain(s, r)?;
        println!(
            "{name:<13} forward {:.4} backward {:.4} augmented {aug:.4} plain {plain:.4}",
            m.d_forward, m.d_backward
        );
    }

    let (_, grad) = loss_and_grad(LossKind::Augmented, &sphere, &cap)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("augmented gradient norm on the cap reconstruction {norm:.4}");
    Ok(())
}
