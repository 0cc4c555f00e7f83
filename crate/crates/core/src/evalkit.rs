//! Quantitative evaluation: test accuracy, distilled-image quality metrics,
//! and the two-sample t-test.
//!
//! The trained teacher stands in for a large pretrained backbone: its softmax
//! gives the label distribution for the score metrics and its penultimate
//! activations give the feature space for the Fréchet distance. Values are
//! therefore comparable within this pipeline only.

use nalgebra::DMatrix;

use crate::dataio::ImageDataset;
use crate::error::{Error, Result};
use crate::numerics::{kernels, Tensor};
use crate::ttm::ClassifierNet;

/// Fraction of images whose argmax logit matches the label; logit ties
/// resolve to the lowest index.
pub fn accuracy(net: &ClassifierNet, dataset: &ImageDataset) -> Result<f64> {
    if net.num_classes() != dataset.num_categories() {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            lhs: vec![net.num_classes()],
            rhs: vec![dataset.num_categories()],
        });
    }
    let logits = net.logits(&dataset.to_unit_rows());
    let k = logits.width();
    let hits = logits
        .data
        .chunks_exact(k)
        .zip(&dataset.labels)
        .filter(|(row, &label)| kernels::argmax(row) == label as usize)
        .count();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Inception-score analog: `exp(mean_x KL(p(y|x) || p(y)))` with the
/// classifier's softmax as `p(y|x)` and its batch mean as `p(y)`.
/// With `splits > 1`, the score is averaged over contiguous splits.
pub fn inception_score(net: &ClassifierNet, images: &Tensor, splits: usize) -> Result<f64> {
    let n = images.rows();
    if n == 0 {
        return Err(Error::InvalidArgument { op: "inception_score", msg: "empty batch".into() });
    }
    if splits == 0 || splits > n {
        return Err(Error::InvalidArgument {
            op: "inception_score",
            msg: format!("splits {splits} outside 1..={n}"),
        });
    }
    let logits = net.logits(images);
    let k = logits.width();
    let probs = kernels::softmax_rows(&logits.data, k);

    let rows_per_split = n.div_ceil(splits);
    let mut scores = Vec::with_capacity(splits);
    for chunk in probs.chunks(rows_per_split * k) {
        let rows = chunk.len() / k;
        let mut marginal = vec![0.0; k];
        for row in chunk.chunks_exact(k) {
            for (m, p) in marginal.iter_mut().zip(row) {
                *m += p / rows as f64;
            }
        }
        let mean_kl: f64 = chunk
            .chunks_exact(k)
            .map(|row| row.iter().zip(&marginal).map(|(p, q)| if *p > 0.0 { p * (p / q).ln() } else { 0.0 }).sum::<f64>())
            .sum::<f64>()
            / rows as f64;
        scores.push(mean_kl.exp());
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Gaussian summary of a feature batch.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Row-major `[dim, dim]` unbiased covariance.
    pub cov: Vec<f64>,
    pub dim: usize,
}

/// Sample mean and unbiased covariance of the classifier's penultimate
/// activations over `images`.
pub fn feature_stats(net: &ClassifierNet, images: &Tensor) -> Result<FeatureStats> {
    let n = images.rows();
    if n < 2 {
        return Err(Error::InvalidArgument {
            op: "feature_stats",
            msg: format!("{n} image(s); need at least 2 for a covariance"),
        });
    }
    let features = net.features(images);
    let d = features.width();
    let mut mean = vec![0.0; d];
    for row in features.data.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    for row in features.data.chunks_exact(d) {
        for i in 0..d {
            let ci = row[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += ci * (row[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    Ok(FeatureStats { mean, cov, dim: d })
}

/// Symmetric PSD square root via eigendecomposition, negative eigenvalues
/// clamped to zero.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between two Gaussian feature summaries:
/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})`.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::ShapeMismatch { op: "frechet_distance", lhs: vec![a.dim], rhs: vec![b.dim] });
    }
    let d = a.dim;
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();

    let sa = DMatrix::from_row_slice(d, d, &a.cov);
    let sb = DMatrix::from_row_slice(d, d, &b.cov);
    let sqrt_a = sym_sqrt(&sa);
    let inner = &sqrt_a * &sb * &sqrt_a;
    // Symmetrize before the second root; products drift slightly off-symmetric.
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = sym_sqrt(&inner);

    let value = mean_term + sa.trace() + sb.trace() - 2.0 * cross.trace();
    Ok(value.max(0.0))
}

/// Welch's unequal-variance t-test. Returns `(t, two_sided_p)` with
/// Welch–Satterthwaite degrees of freedom; the p-value comes from the
/// regularized incomplete beta function.
pub fn welch_ttest(sample_a: &[f64], sample_b: &[f64]) -> Result<(f64, f64)> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::InvalidArgument {
            op: "welch_ttest",
            msg: format!("sample sizes {} and {}; need at least 2 each", sample_a.len(), sample_b.len()),
        });
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let ma = sample_a.iter().sum::<f64>() / na;
    let mb = sample_b.iter().sum::<f64>() / nb;
    let va = sample_a.iter().map(|v| (v - ma) * (v - ma)).sum::<f64>() / (na - 1.0);
    let vb = sample_b.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>() / (nb - 1.0);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::InvalidArgument {
            op: "welch_ttest",
            msg: "both samples have zero variance".into(),
        });
    }
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let x = df / (df + t * t);
    let p = statrs::function::beta::beta_reg(df / 2.0, 0.5, x);
    Ok((t, p))
}
