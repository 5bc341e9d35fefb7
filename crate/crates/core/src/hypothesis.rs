//! Affine hypotheses, the normalized logistic loss and the disagreement
//! quantities built on top of it.
//!
//! Every loss in this crate is the logistic loss `log(1 + exp(-y h(x)))`
//! squashed into `[0, 1]` by `g(v) = 2 / (1 + exp(-v)) - 1`. Composing the two
//! gives the closed form `1 / (1 + 2 exp(m))` in the margin `m = y h(x)`, which
//! is what the hot loops evaluate. [`LossValue`] keeps the two-step route
//! around for reporting and as a cross-check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary label in `{-1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Pos, Label::Neg];

    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    /// Label predicted by the sign of a score; ties go to `Pos`.
    pub fn from_score(score: f64) -> Label {
        if score >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(format!("label must be -1 or +1, got {other}")),
        }
    }
}

/// A feature vector together with its binary label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: Label,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, y: Label) -> Self {
        LabeledSample { x, y }
    }
}

impl AsRef<[f64]> for LabeledSample {
    fn as_ref(&self) -> &[f64] {
        &self.x
    }
}

/// Affine predictor `h(x) = <w, x> + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Hypothesis {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Hypothesis { weights, bias }
    }

    pub fn zeros(dim: usize) -> Self {
        Hypothesis {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Euclidean norm of the stacked `(w, b)` vector.
    pub fn norm(&self) -> f64 {
        (self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias).sqrt()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(self.score(x))
    }

    /// `predict` without the dimension check, for inner loops whose inputs
    /// were validated up front.
    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights
            .iter()
            .zip(x)
            .fold(self.bias, |acc, (w, v)| acc + w * v)
    }

    /// `sum_j lambda_j h_j` over `(lambda_j, h_j)` pairs, taken coordinate-wise
    /// on `(w, b)`.
    pub fn combination<'a, I>(dim: usize, parts: I) -> Hypothesis
    where
        I: IntoIterator<Item = (f64, &'a Hypothesis)>,
    {
        let mut out = Hypothesis::zeros(dim);
        for (lambda, h) in parts {
            debug_assert_eq!(h.dim(), dim);
            for (o, w) in out.weights.iter_mut().zip(&h.weights) {
                *o += lambda * w;
            }
            out.bias += lambda * h.bias;
        }
        out
    }

    fn check_same_dim(&self, other: &Hypothesis) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }
}

/// Logistic loss and its `[0, 1]`-normalized image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub raw: f64,
    pub normalized: f64,
}

impl LossValue {
    pub fn from_margin(margin: f64) -> Self {
        let raw = softplus(-margin);
        LossValue {
            raw,
            normalized: squash(raw),
        }
    }
}

/// `log(1 + exp(v))` without overflow.
pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// `g(v) = 2 / (1 + exp(-v)) - 1`, written as `tanh(v / 2)`.
pub fn squash(v: f64) -> f64 {
    (0.5 * v).tanh()
}

/// Normalized logistic loss as a function of the margin `y h(x)`.
#[inline]
pub fn loss_at_margin(margin: f64) -> f64 {
    1.0 / (1.0 + 2.0 * margin.exp())
}

/// Derivative of [`loss_at_margin`] with respect to the margin.
#[inline]
pub fn loss_slope_at_margin(margin: f64) -> f64 {
    let q = loss_at_margin(margin);
    -q * (1.0 - q)
}

/// Normalized losses `[loss(+1), loss(-1)]` for a raw score.
#[inline]
pub fn losses_at_score(score: f64) -> [f64; 2] {
    [loss_at_margin(score), loss_at_margin(-score)]
}

#[inline]
pub fn loss_at_score(score: f64, y: Label) -> f64 {
    loss_at_margin(y.sign() * score)
}

/// `max_y |loss(a, y) - loss(b, y)|` for two raw scores at the same point.
#[inline]
pub fn score_disagreement(a: f64, b: f64) -> f64 {
    let pos = (loss_at_margin(a) - loss_at_margin(b)).abs();
    let neg = (loss_at_margin(-a) - loss_at_margin(-b)).abs();
    pos.max(neg)
}

pub fn normalized_loss(h: &Hypothesis, x: &[f64], y: Label) -> Result<f64> {
    Ok(loss_at_score(h.predict(x)?, y))
}

pub fn pointwise_disagreement(h: &Hypothesis, h2: &Hypothesis, x: &[f64]) -> Result<f64> {
    h.check_same_dim(h2)?;
    Ok(score_disagreement(h.predict(x)?, h2.score(x)))
}

/// Mean of [`pointwise_disagreement`] over an unlabeled sample. This is the
/// estimator of the error disagreement used throughout, including the
/// teacher's feedback.
pub fn empirical_disagreement<X: AsRef<[f64]>>(
    h: &Hypothesis,
    h2: &Hypothesis,
    s: &[X],
) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Empty("disagreement sample"));
    }
    h.check_same_dim(h2)?;
    let mut total = 0.0;
    for x in s {
        let x = x.as_ref();
        total += score_disagreement(h.predict(x)?, h2.score(x));
    }
    Ok(total / s.len() as f64)
}

/// Mean absolute loss difference under the true labels (no max over `y`).
pub fn rho_disagreement(h: &Hypothesis, h2: &Hypothesis, d: &[LabeledSample]) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::Empty("labeled sample"));
    }
    h.check_same_dim(h2)?;
    let mut total = 0.0;
    for s in d {
        let a = loss_at_score(h.predict(&s.x)?, s.y);
        let b = loss_at_score(h2.score(&s.x), s.y);
        total += (a - b).abs();
    }
    Ok(total / d.len() as f64)
}

/// Mean normalized loss, the empirical generalization error.
pub fn mean_loss(h: &Hypothesis, d: &[LabeledSample]) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::Empty("labeled sample"));
    }
    let mut total = 0.0;
    for s in d {
        total += loss_at_score(h.predict(&s.x)?, s.y);
    }
    Ok(total / d.len() as f64)
}

/// Fraction of samples whose label differs from `sign(h(x))`.
pub fn zero_one_error(h: &Hypothesis, d: &[LabeledSample]) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::Empty("labeled sample"));
    }
    let mut wrong = 0usize;
    for s in d {
        if Label::from_score(h.predict(&s.x)?) != s.y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / d.len() as f64)
}

/// Draws `count` random hyperplanes: each `(w, b)` coordinate uniform on
/// `[-1, 1]`, then rescaled so the stacked norm is uniform on `(0, norm_bound]`.
pub fn generate_hyperplane_class(
    dim: usize,
    count: usize,
    norm_bound: f64,
    seed: u64,
) -> Result<Vec<Hypothesis>> {
    if count == 0 {
        return Err(Error::invalid("count", "hypothesis class must not be empty"));
    }
    if !(norm_bound > 0.0 && norm_bound.is_finite()) {
        return Err(Error::invalid("norm_bound", format!("must be positive, got {norm_bound}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut class = Vec::with_capacity(count);
    let mut coords = vec![0.0; dim + 1];
    while class.len() < count {
        for c in coords.iter_mut() {
            *c = rng.random_range(-1.0..=1.0);
        }
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        // 1 - U[0,1) lands in (0, 1].
        let radius = (1.0 - rng.random::<f64>()) * norm_bound;
        let scale = radius / norm;
        let weights = coords[..dim].iter().map(|c| c * scale).collect();
        class.push(Hypothesis::new(weights, coords[dim] * scale));
    }
    Ok(class)
}
