use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruning::DEFAULT_P_MIN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Iwal,
    IwalD,
    Btal,
    BtalPlus,
    RandomQuery,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Iwal,
        Algorithm::IwalD,
        Algorithm::Btal,
        Algorithm::BtalPlus,
        Algorithm::RandomQuery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Iwal => "iwal",
            Algorithm::IwalD => "iwal-d",
            Algorithm::Btal => "btal",
            Algorithm::BtalPlus => "btal-plus",
            Algorithm::RandomQuery => "random-query",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("algorithm", format!("unknown algorithm `{s}`")))
    }
}

/// Everything that determines a batch of runs. Missing keys in a config
/// file take these defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub class_size: usize,
    pub norm_bound: f64,
    pub delta: f64,
    /// Hypotheses generated per querying round by self-improvement.
    pub n_new: usize,
    /// Largest convex-combination support for self-improvement.
    pub support: usize,
    /// Rounds per run; `None` streams the whole training split once.
    pub stream_length: Option<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub p_min: f64,
    /// Query probability of `random-query`; `None` matches the label budget
    /// of a `btal-plus` batch with the same seed.
    pub query_rate: Option<f64>,
    pub eta0: f64,
    /// Linear models in the black-box teacher's pre-trained pool.
    pub teacher_pool: usize,
    /// Draw a fresh hypothesis class for every repeat.
    pub redraw_class: bool,
    /// Replay every teaching-based pruning against the `2 Delta_t` rule.
    pub audit: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: String::new(),
            algorithm: Algorithm::Btal,
            class_size: 10_000,
            norm_bound: 1.0,
            delta: 0.1,
            n_new: 10,
            support: 5,
            stream_length: None,
            repeats: 20,
            seed: 0,
            train_fraction: 0.7,
            p_min: DEFAULT_P_MIN,
            query_rate: None,
            eta0: crate::blackbox::DEFAULT_ETA0,
            teacher_pool: 10,
            redraw_class: true,
            audit: false,
        }
    }
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<String>, algorithm: Algorithm) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            algorithm,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reports every problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dataset.trim().is_empty() {
            problems.push("dataset: must be set".to_string());
        }
        if self.class_size == 0 {
            problems.push("class_size: must be at least 1".to_string());
        }
        if !(self.norm_bound > 0.0 && self.norm_bound.is_finite()) {
            problems.push(format!("norm_bound: must be positive, got {}", self.norm_bound));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            problems.push(format!("delta: must lie in (0, 1), got {}", self.delta));
        }
        if self.support < 2 {
            problems.push(format!("support: must be at least 2, got {}", self.support));
        }
        if self.stream_length == Some(0) {
            problems.push("stream_length: must be at least 1".to_string());
        }
        if self.repeats == 0 {
            problems.push("repeats: must be at least 1".to_string());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            problems.push(format!("train_fraction: must lie in (0, 1), got {}", self.train_fraction));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            problems.push(format!("p_min: must lie in (0, 1], got {}", self.p_min));
        }
        if let Some(r) = self.query_rate {
            if !(r > 0.0 && r <= 1.0) {
                problems.push(format!("query_rate: must lie in (0, 1], got {r}"));
            }
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            problems.push(format!("eta0: must be positive, got {}", self.eta0));
        }
        if self.teacher_pool == 0 {
            problems.push("teacher_pool: must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}
