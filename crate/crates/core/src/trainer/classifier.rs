//! One-vs-rest linear classifier with hinge loss, trained by full-batch Adam
//! on standardized features. The standardization is folded back into the
//! weights, so the fitted model applies directly to raw codes.

use super::{adam_step, AdamState, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `classes x C`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    /// `codes W^T + b`.
    pub fn scores(&self, codes: &Matrix) -> Result<Matrix> {
        if codes.cols() != self.weights.cols() {
            return Err(Error::Dimension(format!(
                "codes of width {} for a classifier over {} features",
                codes.cols(),
                self.weights.cols()
            )));
        }
        let mut s = codes.matmul(&self.weights.transpose())?;
        for r in 0..s.rows() {
            s.row_mut(r).iter_mut().zip(&self.bias).for_each(|(x, b)| *x += b);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Squared-norm penalty on the weights.
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { epochs: 500, lr: 1e-2, l2: 1e-4 }
    }
}

/// Fits one hinge-loss scorer per class. Deterministic: zero initialization
/// and full-batch updates.
pub fn fit_classifier(codes: &Matrix, labels: &[usize], cfg: &ClassifierConfig) -> Result<LinearClassifier> {
    let (n, d) = codes.shape();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} codes", labels.len())));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut present = vec![false; classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Domain("classifier needs at least two classes".into()));
    }
    if n < classes {
        return Err(Error::Domain(format!("{n} samples for {classes} classes")));
    }
    if !codes.all_finite() {
        return Err(Error::Domain("codes contain non-finite values".into()));
    }

    let mean: Vec<f64> = (0..d).map(|j| codes.col(j).iter().sum::<f64>() / n as f64).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let var = codes.col(j).iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z = Matrix::from_fn(n, d, |i, j| (codes[(i, j)] - mean[j]) / std[j]);

    let mut w = Matrix::zeros(classes, d);
    let mut b = Matrix::zeros(1, classes);
    let adam_cfg = TrainConfig { lr: cfg.lr, ..TrainConfig::default() };
    let mut state = AdamState::for_shapes([&w, &b]);
    for _ in 0..cfg.epochs {
        let mut gw = w.scale(2.0 * cfg.l2);
        let mut gb = Matrix::zeros(1, classes);
        for i in 0..n {
            let x = z.row(i);
            for k in 0..classes {
                let y = if labels[i] == k { 1.0 } else { -1.0 };
                let score: f64 = w.row(k).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[(0, k)];
                if y * score < 1.0 {
                    gw.row_mut(k).iter_mut().zip(x).for_each(|(g, xj)| *g -= y * xj / n as f64);
                    gb[(0, k)] -= y / n as f64;
                }
            }
        }
        adam_step(&mut [&mut w, &mut b], &[gw, gb], &mut state, &adam_cfg)?;
    }

    let weights = Matrix::from_fn(classes, d, |k, j| w[(k, j)] / std[j]);
    let bias = (0..classes)
        .map(|k| b[(0, k)] - (0..d).map(|j| weights[(k, j)] * mean[j]).sum::<f64>())
        .collect();
    Ok(LinearClassifier { weights, bias })
}

/// Highest-scoring class per code; ties go to the lowest class index.
pub fn classify(clf: &LinearClassifier, codes: &Matrix) -> Result<Vec<usize>> {
    let s = clf.scores(codes)?;
    Ok((0..s.rows())
        .map(|r| {
            s.row(r).iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best }).0
        })
        .collect())
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_toy_set() {
        let codes = Matrix::from_rows(&[&[0.0, 0.1], &[0.2, 0.0], &[1.0, 1.1], &[1.2, 0.9]]);
        let labels = [0, 0, 1, 1];
        let clf = fit_classifier(&codes, &labels, &ClassifierConfig::default()).unwrap();
        assert_eq!(accuracy(&classify(&clf, &codes).unwrap(), &labels), 1.0);
    }

    #[test]
    fn identity_classifier_on_one_hot() {
        let clf = LinearClassifier { weights: Matrix::identity(3), bias: vec![0.0; 3] };
        let codes = Matrix::from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        assert_eq!(classify(&clf, &codes).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn zero_classifier_picks_first_class() {
        let clf = LinearClassifier { weights: Matrix::zeros(4, 2), bias: vec![0.0; 4] };
        let codes = Matrix::from_rows(&[&[3.0, -1.0], &[0.5, 0.5]]);
        assert_eq!(classify(&clf, &codes).unwrap(), vec![0, 0]);
    }

    #[test]
    fn errors() {
        let codes = Matrix::zeros(3, 2);
        assert!(fit_classifier(&codes, &[1, 1, 1], &ClassifierConfig::default()).is_err());
        assert!(fit_classifier(&codes, &[0, 1], &ClassifierConfig::default()).is_err());
        assert!(fit_classifier(&codes, &[0, 1, 5], &ClassifierConfig::default()).is_err());
        let clf = LinearClassifier { weights: Matrix::zeros(2, 3), bias: vec![0.0; 2] };
        assert!(classify(&clf, &codes).is_err());
    }
}
