//! Trains an autoencoder on a shape mix, freezes it, and fits a linear
//! classifier on the latent codes of held-out clouds.
//!
//! cargo run --release --example transfer_classification -- [epochs]

use foldgraph::cli::{parse_synthetic, sample_corpus};
use foldgraph::linalg::Matrix;
use foldgraph::network::{ModelConfig, ModelState};
use foldgraph::pointcloud::PointCloud;
use foldgraph::trainer::{accuracy, classify, fit_classifier, train, ClassifierConfig, TrainConfig};

fn codes(model: &ModelState, clouds: &[PointCloud]) -> foldgraph::Result<Matrix> {
    let rows: Vec<Vec<f64>> = clouds.iter().map(|c| model.encode(c)).collect::<foldgraph::Result<_>>()?;
    Matrix::from_vec(rows.len(), rows[0].len(), rows.concat())
}

fn main() -> foldgraph::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(50, |a| a.parse().expect("epochs"));
    let mix = parse_synthetic("sphere:6:256,torus:6:256,cube:6:256")?;
    let unlabeled: Vec<PointCloud> = sample_corpus(&mix, 0)?.into_iter().map(|(_, c)| c).collect();
    let cfg = TrainConfig { lr: 1e-3, batch_size: 6, epochs, ..TrainConfig::default() };
    let (model, log) = train(ModelState::new(ModelConfig::desk(), 0)?, &unlabeled, &cfg)?;
    println!("autoencoder final loss {:.5}", log.final_loss().unwrap_or(f64::NAN));

    let split = |seed| -> foldgraph::Result<(Matrix, Vec<usize>)> {
        let set = sample_corpus(&parse_synthetic("sphere:10:256,torus:10:256,cube:10:256")?, seed)?;
        let clouds: Vec<PointCloud> = set.iter().map(|(_, c)| c.clone()).collect();
        Ok((codes(&model, &clouds)?, set.iter().map(|(l, _)| *l).collect()))
    };
    let (fit_x, fit_y) = split(1)?;
    let (test_x, test_y) = split(2)?;
    let clf = fit_classifier(&fit_x, &fit_y, &ClassifierConfig::default())?;
    println!("train accuracy {:.3}", accuracy(&classify(&clf, &fit_x)?, &fit_y));
    println!("test accuracy {:.3}", accuracy(&classify(&clf, &test_x)?, &test_y));
    Ok(())
}
