//! Label binarization, PCA and min-max scaling.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::load::RawDataset;
use crate::error::{Error, Result};
use crate::hypothesis::Label;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BinarizeRule {
    /// The most frequent raw label becomes `+1`, everything else `-1`.
    MajorityVsRest,
    /// Keeps only rows labelled `positive` or `negative`.
    ExplicitPair { positive: String, negative: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDataset {
    pub name: String,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub dim: usize,
}

impl BinaryDataset {
    pub fn minority_fraction(&self) -> f64 {
        let pos = self.labels.iter().filter(|&&y| y == Label::Pos).count();
        let n = self.labels.len();
        pos.min(n - pos) as f64 / n as f64
    }
}

pub fn binarize_labels(raw: RawDataset, rule: &BinarizeRule) -> Result<BinaryDataset> {
    let RawDataset { name, rows, labels, dim } = raw;
    let (rows, labels): (Vec<_>, Vec<_>) = match rule {
        BinarizeRule::MajorityVsRest => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for l in &labels {
                *counts.entry(l.as_str()).or_default() += 1;
            }
            // ties go to the lexicographically first label
            let majority = counts
                .iter()
                .fold(None::<(&str, usize)>, |best, (&l, &c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((l, c)),
                })
                .map(|(l, _)| l.to_string())
                .unwrap_or_default();
            let ys = labels
                .iter()
                .map(|l| if *l == majority { Label::Pos } else { Label::Neg })
                .collect();
            (rows, ys)
        }
        BinarizeRule::ExplicitPair { positive, negative } => rows
            .into_iter()
            .zip(labels)
            .filter_map(|(r, l)| {
                if l == *positive {
                    Some((r, Label::Pos))
                } else if l == *negative {
                    Some((r, Label::Neg))
                } else {
                    None
                }
            })
            .unzip(),
    };
    let pos = labels.iter().filter(|&&y| y == Label::Pos).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::invalid("binarize", format!("`{name}` has a single class after binarization")));
    }
    Ok(BinaryDataset { name, rows, labels, dim })
}

/// Centered projection onto the leading eigenvectors of the training
/// covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` rows of length `dim`, orthonormal.
    pub components: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

pub fn fit_pca(features: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    if features.is_empty() {
        return Err(Error::Empty("PCA input"));
    }
    let dim = features[0].len();
    if k == 0 || k > dim {
        return Err(Error::invalid("k", format!("must lie in 1..={dim}, got {k}")));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in features {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for x in features {
        for (c, (v, m)) in centered.iter_mut().zip(x.iter().zip(&mean)) {
            *c = v - m;
        }
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    let denom = (n - 1.0).max(1.0);
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for &j in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        // fix the sign so the largest-magnitude entry is positive
        let pivot = v
            .iter()
            .copied()
            .fold(0.0_f64, |acc, c| if c.abs() > acc.abs() { c } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        components.push(v);
        variances.push(eig.eigenvalues[j].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        variances,
    })
}

pub fn apply_pca(model: &PcaModel, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    features
        .iter()
        .map(|x| {
            model
                .components
                .iter()
                .map(|c| c.iter().zip(x.iter().zip(&model.mean)).map(|(w, (v, m))| w * (v - m)).sum())
                .collect()
        })
        .collect()
}

/// Per-coordinate `[lo, hi]` ranges fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl MinMax {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let first = features.first().ok_or(Error::Empty("normalization input"))?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for x in features {
            for (j, &v) in x.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        Ok(MinMax { lo, hi })
    }

    /// Maps into `[0, 1]`, clipping values outside the fitted range.
    /// Constant columns map to 0.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn minmax_normalize(features: &[Vec<f64>], ranges: &MinMax) -> Vec<Vec<f64>> {
    features.iter().map(|x| ranges.apply(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw(labels: &[&str]) -> RawDataset {
        let rows = (0..labels.len()).map(|i| vec![i as f64]).collect();
        RawDataset::new("t", rows, labels.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn majority_vs_rest() {
        let b = binarize_labels(raw(&["a", "b", "b", "c", "b"]), &BinarizeRule::MajorityVsRest).unwrap();
        assert_eq!(b.labels, vec![Label::Neg, Label::Pos, Label::Pos, Label::Neg, Label::Pos]);
        assert!((b.minority_fraction() - 0.4).abs() < 1e-15);

        let binary = binarize_labels(raw(&["0", "1", "1"]), &BinarizeRule::MajorityVsRest).unwrap();
        assert_eq!(binary.labels.len(), 3);
    }

    #[test]
    fn explicit_pair_filters() {
        let rule = BinarizeRule::ExplicitPair {
            positive: "3".into(),
            negative: "5".into(),
        };
        let b = binarize_labels(raw(&["1", "3", "5", "7", "3"]), &rule).unwrap();
        assert_eq!(b.labels, vec![Label::Pos, Label::Neg, Label::Pos]);
        assert_eq!(b.rows, vec![vec![1.0], vec![2.0], vec![4.0]]);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(binarize_labels(raw(&["a", "a"]), &BinarizeRule::MajorityVsRest).is_err());
    }

    #[test]
    fn minmax_examples() {
        let cols = vec![vec![2.0, 7.0], vec![4.0, 7.0], vec![6.0, 7.0]];
        let mm = MinMax::fit(&cols).unwrap();
        let out = minmax_normalize(&cols, &mm);
        assert_eq!(out, vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]]);
        assert_eq!(mm.apply(&[10.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(mm.apply(&[-1.0, 9.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn pca_recovers_axis_aligned_low_rank_data() {
        // a full grid, so the two live coordinates are exactly uncorrelated
        let data: Vec<Vec<f64>> = (0..15)
            .flat_map(|i| (0..10).map(move |j| vec![3.0 * i as f64, 0.0, j as f64, 0.0]))
            .collect();
        let model = fit_pca(&data, 2).unwrap();
        assert!((model.components[0][0].abs() - 1.0).abs() < 1e-8);
        assert!((model.components[1][2].abs() - 1.0).abs() < 1e-8);
        let proj = apply_pca(&model, &data);
        for (x, z) in data.iter().zip(&proj) {
            let mut recon = model.mean.clone();
            for (c, v) in model.components.iter().zip(z) {
                for (r, w) in recon.iter_mut().zip(c) {
                    *r += v * w;
                }
            }
            let err: f64 = recon.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err < 1e-8);
        }
    }

    #[test]
    fn pca_projection_is_decorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                let c: f64 = rng.random();
                vec![a + b, a - 0.5 * c, 2.0 * b + c, a, c - b]
            })
            .collect();
        let k = 4;
        let model = fit_pca(&data, k).unwrap();
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = model.components[i].iter().zip(&model.components[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8);
            }
        }
        assert!(model.variances.windows(2).all(|w| w[0] >= w[1]));
        let proj = apply_pca(&model, &data);
        let n = proj.len() as f64;
        for i in 0..k {
            for j in 0..k {
                let cov: f64 = proj.iter().map(|z| z[i] * z[j]).sum::<f64>() / (n - 1.0);
                if i == j {
                    assert!((cov - model.variances[i]).abs() < 1e-8);
                } else {
                    assert!(cov.abs() < 1e-8);
                }
            }
        }
        assert!(fit_pca(&data, 6).is_err());
    }
}
