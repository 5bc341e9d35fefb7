//! Single runs of every algorithm over one seeded split.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use crate::blackbox::{btal_plus_round, incremental_update, BtalPlusConfig, BtalPlusState, IncrementalLearner};
use crate::data::{split, BinaryDataset, ProcessedDataset};
use crate::error::{Error, Result};
use crate::hypothesis::{
    generate_hyperplane_class, losses_at_score, mean_loss, softplus, zero_one_error, Hypothesis, LabeledSample,
};
use crate::pruning::{
    effective_probability, empirical_optimal, max_set_disagreement, prune_btal, prune_iwal, prune_iwal_d,
    sample_query, CandidateSet, LearnerTrace, QueryRecord, SlackSchedule,
};
use crate::teaching::{self_improve, FeedbackSubset, ImprovementConfig, Teacher};

/// Independent random streams of one run. Algorithms sharing a run seed see
/// the same split, class, stream order and query coin flips.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 0,
    Class = 1,
    Order = 2,
    Query = 3,
    Improve = 4,
    Pool = 5,
}

/// Seed of run `index` under `master`. Counter-based, so adding repeats
/// leaves earlier runs untouched.
pub fn run_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn purpose_rng(run_seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(purpose as u64 + 1);
    rng
}

pub fn purpose_seed(run_seed: u64, purpose: Purpose) -> u64 {
    purpose_rng(run_seed, purpose).next_u64()
}

/// State after a querying round, or after the last round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: usize,
    pub tau: usize,
    pub alive: usize,
    /// Mean normalized loss of the teaching hypothesis on the held-out split.
    pub teacher_error: Option<f64>,
    /// 0/1 error of the current hypothesis on the held-out split.
    pub test_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherUpdate {
    pub t: usize,
    pub tau: usize,
    pub alpha: f64,
    pub holdout_before: f64,
    pub holdout_after: f64,
}

/// Slack-domination audit of every teaching-based pruning event.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneAudit {
    pub events: usize,
    /// Events where `(1 + F) Delta_t > 2 Delta_t`.
    pub slack_violations: usize,
    /// Events where a survivor would have been removed by the `2 Delta_t` rule.
    pub subset_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds: usize,
    pub tau: usize,
    pub alive: usize,
    pub test_error: f64,
    pub teacher_initial_error: Option<f64>,
    pub teacher_final_error: Option<f64>,
    pub alpha_sum: f64,
    pub teacher_updates: Vec<TeacherUpdate>,
    /// Whether the initial teaching hypothesis ever left the candidate set.
    pub teacher_pruned: Option<bool>,
    pub audit: Option<PruneAudit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub dataset: String,
    pub run_index: usize,
    pub seed: u64,
    pub rows: Vec<RunRow>,
    pub summary: RunSummary,
}

/// Runs `cfg.repeats` seeded repeats. Configuration problems are reported
/// before any run starts.
pub fn run_experiment(cfg: &ExperimentConfig, data: &BinaryDataset) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    (0..cfg.repeats)
        .into_par_iter()
        .map(|i| run_single(cfg, data, i, cfg.audit))
        .collect()
}

pub fn run_single(cfg: &ExperimentConfig, data: &BinaryDataset, index: usize, audit: bool) -> Result<RunResult> {
    let seed = run_seed(cfg.seed, index as u64);
    let processed = split(data, cfg.train_fraction, purpose_seed(seed, Purpose::Split))?;
    let class_seed = if cfg.redraw_class {
        purpose_seed(seed, Purpose::Class)
    } else {
        purpose_seed(run_seed(cfg.seed, 0), Purpose::Class)
    };
    let stream = stream_order(&processed, cfg, seed)?;
    let (rows, summary) = match cfg.algorithm {
        Algorithm::BtalPlus => run_btal_plus(cfg, &processed, &stream, seed)?,
        Algorithm::RandomQuery => run_random(cfg, &processed, &stream, seed)?,
        _ => run_whitebox(cfg, &processed, &stream, seed, class_seed, audit)?,
    };
    Ok(RunResult {
        algorithm: cfg.algorithm,
        dataset: cfg.dataset.clone(),
        run_index: index,
        seed,
        rows,
        summary,
    })
}

fn stream_order<'a>(data: &'a ProcessedDataset, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<&'a LabeledSample>> {
    let n = data.train.len();
    let len = cfg.stream_length.unwrap_or(n);
    if len > n {
        return Err(Error::invalid(
            "stream_length",
            format!("{len} exceeds the {n} training rows of `{}`", data.name),
        ));
    }
    let mut order: Vec<&LabeledSample> = data.train.iter().collect();
    order.shuffle(&mut purpose_rng(seed, Purpose::Order));
    order.truncate(len);
    Ok(order)
}

/// Index of the hypothesis with the lowest mean normalized loss on `data`;
/// ties go to the lowest index.
pub fn best_in_class(class: &[Hypothesis], data: &[LabeledSample]) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for (i, h) in class.iter().enumerate() {
        let l = mean_loss(h, data)?;
        if l < best.1 {
            best = (i, l);
        }
    }
    Ok(best.0)
}

/// Normalized-loss pairs of each hypothesis on the feedback subset, filled
/// on first use.
struct SubsetLosses {
    subset: FeedbackSubset,
    cache: Vec<Option<Box<[[f64; 2]]>>>,
}

impl SubsetLosses {
    fn new(subset: FeedbackSubset) -> Self {
        SubsetLosses { subset, cache: Vec::new() }
    }

    fn fill(&mut self, set: &CandidateSet, i: usize) {
        if self.cache.len() < set.len() {
            self.cache.resize(set.len(), None);
        }
        if self.cache[i].is_none() {
            let h = set.get(i);
            self.cache[i] = Some(self.subset.iter().map(|x| losses_at_score(h.score(x))).collect());
        }
    }

    fn disagreement(&mut self, set: &CandidateSet, i: usize, j: usize) -> f64 {
        self.fill(set, i);
        self.fill(set, j);
        let (a, b) = (self.cache[i].as_deref().unwrap(), self.cache[j].as_deref().unwrap());
        let total: f64 = a
            .iter()
            .zip(b)
            .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
            .sum();
        total / a.len() as f64
    }
}

fn run_whitebox(
    cfg: &ExperimentConfig,
    data: &ProcessedDataset,
    stream: &[&LabeledSample],
    seed: u64,
    class_seed: u64,
    audit: bool,
) -> Result<(Vec<RunRow>, RunSummary)> {
    let algo = cfg.algorithm;
    let class = generate_hyperplane_class(data.dim, cfg.class_size, cfg.norm_bound, class_seed)?;
    let schedule = SlackSchedule::new(cfg.class_size, cfg.delta)?;
    let subset: FeedbackSubset = data.subset.clone().into();
    let teacher_index = if algo == Algorithm::Btal {
        Some(best_in_class(&class, &data.train)?)
    } else {
        None
    };
    let mut teacher = match teacher_index {
        Some(i) => Some(Teacher::new(class[i].clone(), Arc::clone(&subset))?),
        None => None,
    };
    let mut set = CandidateSet::new(class)?;
    let mut trace = LearnerTrace::new(set.len());
    let mut losses = SubsetLosses::new(subset);
    let improve = ImprovementConfig {
        n: cfg.n_new,
        m: cfg.support,
    };
    let mut query_rng = purpose_rng(seed, Purpose::Query);
    let mut improve_rng = purpose_rng(seed, Purpose::Improve);

    let mut test_errors: HashMap<usize, f64> = HashMap::new();
    let mut test_error_of = |set: &CandidateSet, i: usize| -> Result<f64> {
        if let Some(&e) = test_errors.get(&i) {
            return Ok(e);
        }
        let e = zero_one_error(set.get(i), &data.test)?;
        test_errors.insert(i, e);
        Ok(e)
    };
    let holdout = |h: &Hypothesis| mean_loss(h, &data.test);
    let mut teacher_error = match &teacher {
        Some(t) => Some(holdout(t.current())?),
        None => None,
    };
    let teacher_initial_error = teacher_error;
    let mut teacher_pruned = teacher_index.map(|_| false);
    let mut audit_state = (audit && algo == Algorithm::Btal).then(PruneAudit::default);
    let mut alpha_sum = 0.0;
    let mut updates = Vec::new();
    let mut rows = Vec::new();
    let mut best = 0;

    let total = stream.len();
    for (k, sample) in stream.iter().enumerate() {
        let t = k + 1;
        let x = sample.x.as_slice();
        let raw = match algo {
            Algorithm::RandomQuery => cfg.query_rate.unwrap_or(1.0),
            _ => max_set_disagreement(&set, x)?,
        };
        let p = effective_probability(raw, cfg.p_min);
        let queried = sample_query(raw, cfg.p_min, &mut query_rng)?;
        let record = if queried {
            QueryRecord::queried(t, p, sample.y)
        } else {
            QueryRecord::skipped(t, p)
        };
        trace.update_weighted_errors(&set, record, x)?;
        if queried {
            if let Some(teacher) = teacher.as_mut() {
                teacher.observe(x, sample.y, 1.0 / p);
            }
            let delta_t = schedule.delta_t(t)?;
            best = match algo {
                Algorithm::Iwal => prune_iwal(&trace, &mut set, delta_t)?.best,
                Algorithm::IwalD => {
                    prune_iwal_d(&trace, &mut set, delta_t, |s, i, j| Ok(losses.disagreement(s, i, j)))?.best
                }
                Algorithm::Btal => {
                    let teacher = teacher.as_mut().expect("btal has a teacher");
                    let b = empirical_optimal(&trace, &set)?;
                    let feedback = teacher.feedback(set.get(b))?;
                    let before: Option<Vec<bool>> = audit_state.map(|_| {
                        let floor = trace.error(b) + 2.0 * delta_t;
                        (0..set.len()).map(|i| set.is_alive(i) && trace.error(i) <= floor).collect()
                    });
                    let out = prune_btal(&trace, &mut set, delta_t, feedback)?;
                    if let (Some(a), Some(iwal)) = (audit_state.as_mut(), before) {
                        a.events += 1;
                        if (1.0 + feedback) * delta_t > 2.0 * delta_t {
                            a.slack_violations += 1;
                        }
                        if set.alive_indices().any(|i| !iwal[i]) {
                            a.subset_violations += 1;
                        }
                    }
                    if let (Some(ti), Some(pruned)) = (teacher_index, teacher_pruned.as_mut()) {
                        *pruned |= !set.is_alive(ti);
                    }
                    if improve.n > 0 {
                        let record = self_improve(teacher, &mut set, &mut trace, &improve, delta_t, &mut improve_rng)?;
                        if record.teacher_updated {
                            let before = teacher_error.unwrap_or(f64::NAN);
                            let after = holdout(teacher.current())?;
                            teacher_error = Some(after);
                            alpha_sum += record.alpha;
                            updates.push(TeacherUpdate {
                                t,
                                tau: trace.queries(),
                                alpha: record.alpha,
                                holdout_before: before,
                                holdout_after: after,
                            });
                        }
                    }
                    out.best
                }
                Algorithm::RandomQuery => empirical_optimal(&trace, &set)?,
                Algorithm::BtalPlus => unreachable!("black-box runs take another path"),
            };
        }
        if queried || t == total {
            rows.push(RunRow {
                t,
                tau: trace.queries(),
                alive: set.alive_count(),
                teacher_error,
                test_error: test_error_of(&set, best)?,
            });
        }
    }
    let last = rows.last().copied();
    let summary = RunSummary {
        rounds: total,
        tau: trace.queries(),
        alive: set.alive_count(),
        test_error: last.map_or(f64::NAN, |r| r.test_error),
        teacher_initial_error,
        teacher_final_error: teacher_error,
        alpha_sum,
        teacher_updates: updates,
        teacher_pruned,
        audit: audit_state,
    };
    Ok((rows, summary))
}

/// Logistic regression by full-batch gradient descent on raw logistic loss.
fn fit_logistic(data: &[&LabeledSample], dim: usize, epochs: usize, step: f64) -> Hypothesis {
    let mut h = Hypothesis::zeros(dim);
    let n = data.len().max(1) as f64;
    for _ in 0..epochs {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for s in data {
            let y = s.y.sign();
            // d/dm log(1 + e^-m) = -1 / (1 + e^m)
            let m = y * h.score(&s.x);
            let coef = -y * (-softplus(m)).exp();
            for (g, v) in gw.iter_mut().zip(&s.x) {
                *g += coef * v;
            }
            gb += coef;
        }
        for (w, g) in h.weights.iter_mut().zip(&gw) {
            *w -= step * g / n;
        }
        h.bias -= step * gb / n;
    }
    h
}

/// Pre-trained teacher for the black-box setting: each pool member is fit on
/// a random half of the training split, and the one with the lowest error on
/// its complementary half is kept.
pub fn pretrained_teacher(data: &ProcessedDataset, pool: usize, seed: u64) -> Result<Hypothesis> {
    let mut rng = purpose_rng(seed, Purpose::Pool);
    let n = data.train.len();
    if n < 2 {
        return Err(Error::invalid("train", "at least two rows are needed to pre-train a teacher"));
    }
    let mut best: Option<(f64, Hypothesis)> = None;
    for _ in 0..pool {
        let mut inside = vec![false; n];
        for i in sample(&mut rng, n, n / 2).iter() {
            inside[i] = true;
        }
        let (fit, check): (Vec<_>, Vec<_>) = data.train.iter().enumerate().partition(|(i, _)| inside[*i]);
        let fit: Vec<&LabeledSample> = fit.into_iter().map(|(_, s)| s).collect();
        let check: Vec<LabeledSample> = check.into_iter().map(|(_, s)| s.clone()).collect();
        let h = fit_logistic(&fit, data.dim, 200, 4.0);
        let err = zero_one_error(&h, &check)?;
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, h));
        }
    }
    Ok(best.expect("pool is non-empty").1)
}

fn run_btal_plus(
    cfg: &ExperimentConfig,
    data: &ProcessedDataset,
    stream: &[&LabeledSample],
    seed: u64,
) -> Result<(Vec<RunRow>, RunSummary)> {
    let teacher_h = pretrained_teacher(data, cfg.teacher_pool, seed)?;
    let teacher = Teacher::new(teacher_h, data.subset.clone().into())?;
    let schedule = SlackSchedule::new(cfg.class_size, cfg.delta)?;
    let bp = BtalPlusConfig {
        n: cfg.n_new,
        p_min: cfg.p_min,
        eta0: cfg.eta0,
    };
    let mut state = BtalPlusState::new(teacher, Hypothesis::zeros(data.dim), schedule, bp)?;
    let mut rng = purpose_rng(seed, Purpose::Query);
    let holdout = |h: &Hypothesis| mean_loss(h, &data.test);
    let mut teacher_error = holdout(state.teacher.current())?;
    let teacher_initial_error = teacher_error;
    let mut alpha_sum = 0.0;
    let mut updates = Vec::new();
    let mut rows = Vec::new();
    let total = stream.len();
    for sample in stream {
        let y = sample.y;
        let round = btal_plus_round(&mut state, &sample.x, || y, &mut rng)?;
        if let Some(imp) = &round.improvement {
            if imp.teacher_updated {
                let after = holdout(state.teacher.current())?;
                alpha_sum += imp.alpha;
                updates.push(TeacherUpdate {
                    t: round.t,
                    tau: state.trace.queries(),
                    alpha: imp.alpha,
                    holdout_before: teacher_error,
                    holdout_after: after,
                });
                teacher_error = after;
            }
        }
        if round.queried || round.t == total {
            rows.push(RunRow {
                t: round.t,
                tau: state.trace.queries(),
                alive: 1,
                teacher_error: Some(teacher_error),
                test_error: zero_one_error(state.learner.current(), &data.test)?,
            });
        }
    }
    let last = rows.last().copied();
    Ok((
        rows,
        RunSummary {
            rounds: total,
            tau: state.trace.queries(),
            alive: 1,
            test_error: last.map_or(f64::NAN, |r| r.test_error),
            teacher_initial_error: Some(teacher_initial_error),
            teacher_final_error: Some(teacher_error),
            alpha_sum,
            teacher_updates: updates,
            teacher_pruned: None,
            audit: None,
        },
    ))
}

/// Uniform querying with the same incremental learner and no teacher.
fn run_random(
    cfg: &ExperimentConfig,
    data: &ProcessedDataset,
    stream: &[&LabeledSample],
    seed: u64,
) -> Result<(Vec<RunRow>, RunSummary)> {
    let rate = match cfg.query_rate {
        Some(r) => r,
        None => {
            let (_, matched) = run_btal_plus(cfg, data, stream, seed)?;
            (matched.tau as f64 / stream.len() as f64).clamp(cfg.p_min, 1.0)
        }
    };
    let mut learner = IncrementalLearner::new(Hypothesis::zeros(data.dim), cfg.eta0)?;
    let mut rng = purpose_rng(seed, Purpose::Query);
    let mut rows = Vec::new();
    let mut tau = 0;
    let total = stream.len();
    for (k, sample) in stream.iter().enumerate() {
        let t = k + 1;
        let queried = sample_query(rate, cfg.p_min, &mut rng)?;
        if queried {
            tau += 1;
            incremental_update(&mut learner, &sample.x, sample.y, effective_probability(rate, cfg.p_min))?;
        }
        if queried || t == total {
            rows.push(RunRow {
                t,
                tau,
                alive: 1,
                teacher_error: None,
                test_error: zero_one_error(learner.current(), &data.test)?,
            });
        }
    }
    let last = rows.last().copied();
    Ok((
        rows,
        RunSummary {
            rounds: total,
            tau,
            alive: 1,
            test_error: last.map_or(f64::NAN, |r| r.test_error),
            teacher_initial_error: None,
            teacher_final_error: None,
            alpha_sum: 0.0,
            teacher_updates: Vec::new(),
            teacher_pruned: None,
            audit: None,
        },
    ))
}
