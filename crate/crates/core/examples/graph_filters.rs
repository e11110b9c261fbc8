//! Smooths a noisy signal on the initial lattice graph with the Haar,
//! adjacency and Laplacian filters, and prints the low end of the graph
//! spectrum.

use foldgraph::graph::{
    alpha_filter_adjacency, build_initial_adjacency, graph_tv, haar_filter, laplacian, laplacian_filter,
    quadratic_variation, Lattice2D, LaplacianSpectrum,
};
use foldgraph::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> foldgraph::Result<()> {
    let lat = Lattice2D::new(15)?;
    let a = build_initial_adjacency(&lat, 8, 0.08)?;
    let lap = laplacian(&a);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Matrix::from_fn(lat.len(), 1, |i, _| {
        let [u, v] = lat.node(i);
        (3.0 * u).sin() + v + 0.3 * rng.random_range(-1.0..1.0)
    });
    let report = |name: &str, y: &Matrix| -> foldgraph::Result<()> {
        let col: Vec<f64> = (0..y.rows()).map(|i| y[(i, 0)]).collect();
        println!(
            "{name:<16} tv {:.4}  quadratic variation {:.4}",
            graph_tv(a.weights(), &col)?,
            quadratic_variation(&lap, &col)?
        );
        Ok(())
    };
    report("input", &x)?;
    report("haar", &haar_filter(&a, &x)?)?;
    report("adjacency a=0.9", &alpha_filter_adjacency(&a, &x, 0.9)?)?;
    report("laplacian mu=1", &laplacian_filter(&a, &x, 1.0)?)?;

    let sp = LaplacianSpectrum::of(&a)?;
    let low: Vec<String> = sp.eigenvalues()[..6].iter().map(|l| format!("{l:.4}")).collect();
    println!("lowest eigenvalues {}", low.join(" "));
    println!("first eigenvector defect {:.1e}", sp.first_vector_defect());
    Ok(())
}
