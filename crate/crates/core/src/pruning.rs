//! Candidate sets, importance-weighted errors and the three pruning rules.
//!
//! The trace keeps the literal importance-weighted sum
//! `S_t(h) = sum_k (Q_k / p_k) loss(h(x_k), y_k)`. Everything that is compared
//! against the slack `Delta_t` uses the per-round average `S_t(h) / t`, which
//! is the quantity that is unbiased for the generalization error and whose
//! deviations `Delta_t` is calibrated for.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{loss_at_margin, loss_at_score, Hypothesis, Label};

/// Lower clamp on query probabilities; bounds importance weights by `1 / P_MIN`.
pub const DEFAULT_P_MIN: f64 = 1e-4;

/// Hypotheses under consideration, with a shrink-only alive mask.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    hypotheses: Vec<Hypothesis>,
    alive: Vec<bool>,
    alive_count: usize,
    round: usize,
}

impl CandidateSet {
    pub fn new(hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let dim = hypotheses[0].dim();
        if let Some(bad) = hypotheses.iter().find(|h| h.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        let n = hypotheses.len();
        Ok(CandidateSet {
            hypotheses,
            alive: vec![true; n],
            alive_count: n,
            round: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.hypotheses[0].dim()
    }

    pub fn alive_count(&self) -> usize {
        self.alive_count
    }

    pub fn is_alive(&self, i: usize) -> bool {
        self.alive[i]
    }

    pub fn alive_mask(&self) -> &[bool] {
        &self.alive
    }

    pub fn alive_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alive
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
    }

    pub fn alive_hypotheses(&self) -> impl Iterator<Item = &Hypothesis> + '_ {
        self.alive_indices().map(move |i| &self.hypotheses[i])
    }

    pub fn get(&self, i: usize) -> &Hypothesis {
        &self.hypotheses[i]
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn set_round(&mut self, t: usize) {
        self.round = t;
    }

    /// Appends a live hypothesis and returns its index.
    pub fn push(&mut self, h: Hypothesis) -> Result<usize> {
        if h.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: h.dim(),
            });
        }
        self.hypotheses.push(h);
        self.alive.push(true);
        self.alive_count += 1;
        Ok(self.hypotheses.len() - 1)
    }

    fn kill(&mut self, i: usize) {
        if self.alive[i] {
            self.alive[i] = false;
            self.alive_count -= 1;
        }
    }
}

/// Outcome of one Bernoulli query decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub t: usize,
    /// Query probability after the `p_min` clamp.
    pub p: f64,
    pub queried: bool,
    pub label: Option<Label>,
}

impl QueryRecord {
    pub fn skipped(t: usize, p: f64) -> Self {
        QueryRecord {
            t,
            p,
            queried: false,
            label: None,
        }
    }

    pub fn queried(t: usize, p: f64, label: Label) -> Self {
        QueryRecord {
            t,
            p,
            queried: true,
            label: Some(label),
        }
    }
}

/// A labeled point kept for replaying importance-weighted errors of
/// hypotheses created after it was queried.
#[derive(Clone, Debug, PartialEq)]
pub struct LoggedQuery {
    pub t: usize,
    pub x: Vec<f64>,
    pub y: Label,
    pub weight: f64,
}

/// Importance-weighted error sums aligned with candidate-set indices, plus
/// the query history.
#[derive(Clone, Debug, Default)]
pub struct LearnerTrace {
    sums: Vec<f64>,
    round: usize,
    history: Vec<QueryRecord>,
    log: Vec<LoggedQuery>,
}

impl LearnerTrace {
    pub fn new(candidates: usize) -> Self {
        LearnerTrace {
            sums: vec![0.0; candidates],
            ..Default::default()
        }
    }

    /// Rounds observed so far (`t`).
    pub fn round(&self) -> usize {
        self.round
    }

    /// Labels queried so far (`tau`).
    pub fn queries(&self) -> usize {
        self.log.len()
    }

    pub fn history(&self) -> &[QueryRecord] {
        &self.history
    }

    pub fn log(&self) -> &[LoggedQuery] {
        &self.log
    }

    pub fn sum(&self, i: usize) -> f64 {
        self.sums[i]
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// `S_t(h) / t`; zero before the first round.
    pub fn error(&self, i: usize) -> f64 {
        average(self.sums[i], self.round)
    }

    /// Registers a hypothesis created mid-run with its replayed sum.
    pub fn push_candidate(&mut self, sum: f64) {
        self.sums.push(sum);
    }

    /// Importance-weighted sum of `h` over the whole query log, accumulated
    /// in the same order as the incremental updates.
    pub fn replay_sum(&self, h: &Hypothesis) -> f64 {
        self.replay_sum_through(h, self.round)
    }

    /// As [`replay_sum`](Self::replay_sum) but only over queries made at
    /// rounds `<= t`.
    pub fn replay_sum_through(&self, h: &Hypothesis, t: usize) -> f64 {
        self.log
            .iter()
            .take_while(|q| q.t <= t)
            .fold(0.0, |acc, q| acc + q.weight * loss_at_score(h.score(&q.x), q.y))
    }

    /// Applies one round. Alive hypotheses accumulate `(1/p) loss` when the
    /// label was queried; pruned ones stay frozen.
    pub fn update_weighted_errors(
        &mut self,
        set: &CandidateSet,
        record: QueryRecord,
        x: &[f64],
    ) -> Result<()> {
        if x.len() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                actual: x.len(),
            });
        }
        debug_assert_eq!(self.sums.len(), set.len());
        self.record(record, x)?;
        if let Some(y) = record.label {
            let weight = 1.0 / record.p;
            for i in set.alive_indices() {
                self.sums[i] += weight * loss_at_score(set.get(i).score(x), y);
            }
        }
        Ok(())
    }

    /// Advances the round and logs a queried point without touching any
    /// candidate sums. Used when the hypothesis class is not enumerated.
    pub fn record(&mut self, record: QueryRecord, x: &[f64]) -> Result<()> {
        if !(record.p > 0.0 && record.p <= 1.0) {
            return Err(Error::invalid("p_t", format!("must lie in (0, 1], got {}", record.p)));
        }
        if record.queried != record.label.is_some() {
            return Err(Error::invalid("record", "label must be present iff queried"));
        }
        if record.t != self.round + 1 {
            return Err(Error::invalid(
                "t",
                format!("expected round {}, got {}", self.round + 1, record.t),
            ));
        }
        self.round = record.t;
        self.history.push(record);
        if let Some(y) = record.label {
            self.log.push(LoggedQuery {
                t: record.t,
                x: x.to_vec(),
                y,
                weight: 1.0 / record.p,
            });
        }
        Ok(())
    }
}

pub fn average(sum: f64, t: usize) -> f64 {
    if t == 0 {
        0.0
    } else {
        sum / t as f64
    }
}

/// Confidence schedule `Delta_t = sqrt((2/t) ln(2 t (t+1) |H|^2 / delta))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackSchedule {
    pub class_size: usize,
    pub delta: f64,
}

impl SlackSchedule {
    pub fn new(class_size: usize, delta: f64) -> Result<Self> {
        if class_size == 0 {
            return Err(Error::invalid("class_size", "must be at least 1"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        Ok(SlackSchedule { class_size, delta })
    }

    pub fn delta_t(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::invalid("t", "Delta_t is defined for t >= 1"));
        }
        let t = t as f64;
        let h = self.class_size as f64;
        Ok(((2.0 / t) * (2.0 * t * (t + 1.0) * h * h / self.delta).ln()).sqrt())
    }
}

/// Largest pairwise disagreement among alive hypotheses at `x`.
///
/// The normalized loss is monotone in the score for each label, so the
/// maximum over pairs is reached by the extreme scores and the scan is linear.
pub fn max_set_disagreement(set: &CandidateSet, x: &[f64]) -> Result<f64> {
    if set.alive_count() == 0 {
        return Err(Error::NoAliveHypothesis);
    }
    if x.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: x.len(),
        });
    }
    let (lo, hi) = set
        .alive_hypotheses()
        .map(|h| h.score(x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s), hi.max(s))
        });
    Ok(score_range_disagreement(lo, hi))
}

/// Disagreement between the lowest and highest score at a point.
pub(crate) fn score_range_disagreement(lo: f64, hi: f64) -> f64 {
    let pos = loss_at_margin(lo) - loss_at_margin(hi);
    let neg = loss_at_margin(-hi) - loss_at_margin(-lo);
    pos.max(neg).max(0.0)
}

pub fn effective_probability(p: f64, p_min: f64) -> f64 {
    p.max(p_min)
}

/// Bernoulli draw with success probability `max(p, p_min)`.
pub fn sample_query<R: Rng + ?Sized>(p: f64, p_min: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p_t", format!("must lie in [0, 1], got {p}")));
    }
    let p = effective_probability(p, p_min);
    Ok(rng.random::<f64>() < p)
}

/// Index of the alive hypothesis with the smallest importance-weighted
/// error; ties go to the lowest index.
pub fn empirical_optimal(trace: &LearnerTrace, set: &CandidateSet) -> Result<usize> {
    let mut best: Option<usize> = None;
    for i in set.alive_indices() {
        match best {
            Some(b) if trace.sum(b) <= trace.sum(i) => {}
            _ => best = Some(i),
        }
    }
    best.ok_or(Error::NoAliveHypothesis)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneOutcome {
    pub best: usize,
    pub pruned: Vec<usize>,
}

/// Keeps `h` iff `keep(h, L(h) - L(best))`; the empirical optimum is always
/// kept.
fn prune_by<F>(trace: &LearnerTrace, set: &mut CandidateSet, mut keep: F) -> Result<PruneOutcome>
where
    F: FnMut(&CandidateSet, usize, f64) -> Result<bool>,
{
    let best = empirical_optimal(trace, set)?;
    let best_err = trace.error(best);
    let mut pruned = Vec::new();
    for i in set.alive_indices() {
        if i == best {
            continue;
        }
        if !keep(set, i, trace.error(i) - best_err)? {
            pruned.push(i);
        }
    }
    for &i in &pruned {
        set.kill(i);
    }
    set.set_round(trace.round());
    Ok(PruneOutcome { best, pruned })
}

/// IWAL: keep `h` iff `L_t(h) <= L_t(best) + 2 Delta_t`.
pub fn prune_iwal(trace: &LearnerTrace, set: &mut CandidateSet, delta_t: f64) -> Result<PruneOutcome> {
    prune_by(trace, set, |_, _, excess| Ok(excess <= 2.0 * delta_t))
}

/// IWAL-D: keep `h` iff `L_t(h) <= L_t(best) + (1 + D(h, best)) Delta_t`,
/// where `disagreement(set, i, best)` estimates the error disagreement. It
/// is only consulted when the outcome depends on it.
pub fn prune_iwal_d<F>(
    trace: &LearnerTrace,
    set: &mut CandidateSet,
    delta_t: f64,
    mut disagreement: F,
) -> Result<PruneOutcome>
where
    F: FnMut(&CandidateSet, usize, usize) -> Result<f64>,
{
    let best = empirical_optimal(trace, set)?;
    prune_by(trace, set, |set, i, excess| {
        if excess <= delta_t {
            Ok(true)
        } else if excess > 2.0 * delta_t {
            Ok(false)
        } else {
            Ok(excess <= (1.0 + disagreement(set, i, best)?) * delta_t)
        }
    })
}

/// Slack used by teaching-based pruning, `(1 + F(best)) Delta_t`.
pub fn btal_slack(feedback_of_best: f64, delta_t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&feedback_of_best) {
        return Err(Error::invalid(
            "feedback",
            format!("teacher feedback must lie in [0, 1], got {feedback_of_best}"),
        ));
    }
    Ok((1.0 + feedback_of_best) * delta_t)
}

/// Teaching-based pruning: keep `h` iff `L_t(h) <= L_t(best) + (1 + F(best)) Delta_t`.
/// The slack is the same for every `h`.
pub fn prune_btal(
    trace: &LearnerTrace,
    set: &mut CandidateSet,
    delta_t: f64,
    feedback_of_best: f64,
) -> Result<PruneOutcome> {
    let slack = btal_slack(feedback_of_best, delta_t)?;
    prune_by(trace, set, |_, _, excess| Ok(excess <= slack))
}

/// One row of the per-round pruning trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub p: f64,
    pub queried: bool,
    pub alive: usize,
    pub best_error: f64,
    pub tau: usize,
}
