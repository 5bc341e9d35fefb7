//! The teacher: disagreement feedback, convex-hull candidates and the
//! self-improvement gate.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{loss_at_score, score_disagreement, Hypothesis, Label};
use crate::pruning::{average, CandidateSet, LearnerTrace};

/// Unlabeled points the teacher evaluates its feedback on.
pub type FeedbackSubset = Arc<[Vec<f64>]>;

/// Teaching hypothesis plus everything needed to answer feedback queries.
///
/// The teacher keeps its own importance-weighted error sum so that it stays
/// well defined even after the hypothesis it started from was pruned from
/// the learner's candidate set.
#[derive(Clone, Debug)]
pub struct Teacher {
    current: Hypothesis,
    subset: FeedbackSubset,
    scores: Vec<f64>,
    sum: f64,
    history: Vec<(usize, f64)>,
}

impl Teacher {
    pub fn new(current: Hypothesis, subset: FeedbackSubset) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::Empty("feedback subset"));
        }
        if let Some(bad) = subset.iter().find(|x| x.len() != current.dim()) {
            return Err(Error::DimensionMismatch {
                expected: current.dim(),
                actual: bad.len(),
            });
        }
        let scores = subset.iter().map(|x| current.score(x)).collect();
        Ok(Teacher {
            current,
            subset,
            scores,
            sum: 0.0,
            history: Vec::new(),
        })
    }

    pub fn current(&self) -> &Hypothesis {
        &self.current
    }

    pub fn subset(&self) -> &FeedbackSubset {
        &self.subset
    }

    /// Importance-weighted error sum of the current teaching hypothesis.
    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// `(round, average importance-weighted error)` at every installation.
    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }

    /// Mean disagreement between the teaching hypothesis and `h` over the
    /// feedback subset.
    pub fn feedback(&self, h: &Hypothesis) -> Result<f64> {
        if h.dim() != self.current.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.current.dim(),
                actual: h.dim(),
            });
        }
        let total: f64 = self
            .subset
            .iter()
            .zip(&self.scores)
            .map(|(x, &t)| score_disagreement(t, h.score(x)))
            .sum();
        Ok(total / self.subset.len() as f64)
    }

    /// Accumulates `weight * loss` for a queried point.
    pub fn observe(&mut self, x: &[f64], y: Label, weight: f64) {
        self.sum += weight * loss_at_score(self.current.score(x), y);
    }

    fn install(&mut self, h: Hypothesis, sum: f64, t: usize) {
        self.scores = self.subset.iter().map(|x| h.score(x)).collect();
        self.current = h;
        self.sum = sum;
        self.history.push((t, average(sum, t)));
    }
}

pub fn teacher_feedback(teacher: &Teacher, h: &Hypothesis) -> Result<f64> {
    teacher.feedback(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementConfig {
    /// Hypotheses generated per querying round; 0 disables self-improvement.
    pub n: usize,
    /// Largest support of a convex combination.
    pub m: usize,
}

impl Default for ImprovementConfig {
    fn default() -> Self {
        ImprovementConfig { n: 10, m: 5 }
    }
}

impl ImprovementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid("m", "convex support must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRecord {
    pub t: usize,
    pub betas: Vec<f64>,
    pub alpha: f64,
    pub teacher_updated: bool,
}

/// Draws `cfg.n` points of the convex hull of `alive`. Each uses a support of
/// `min(|alive|, m)` distinct hypotheses chosen uniformly and flat Dirichlet
/// weights.
pub fn generate_convex<R: Rng + ?Sized>(
    alive: &[&Hypothesis],
    cfg: &ImprovementConfig,
    rng: &mut R,
) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    if alive.is_empty() {
        return Err(Error::NoAliveHypothesis);
    }
    let dim = alive[0].dim();
    let m = alive.len().min(cfg.m);
    let mut out = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let support = sample(rng, alive.len(), m);
        let mut lambdas: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = lambdas.iter().sum();
        lambdas.iter_mut().for_each(|l| *l /= total);
        out.push(Hypothesis::combination(
            dim,
            lambdas.iter().zip(support.iter()).map(|(&l, j)| (l, alive[j])),
        ));
    }
    Ok(out)
}

/// `beta = L(teacher) - L(candidate) - (1 + F(candidate)) Delta_t`, on
/// per-round averages.
pub fn beta(teacher_error: f64, candidate_error: f64, feedback: f64, delta_t: f64) -> f64 {
    teacher_error - candidate_error - (1.0 + feedback) * delta_t
}

/// A generated hypothesis with its replayed error sum and gate value.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub hypothesis: Hypothesis,
    pub sum: f64,
    pub feedback: f64,
    pub beta: f64,
}

/// Scores `candidate` against the teacher, replaying the query log for the
/// candidate's importance-weighted error.
pub fn improvement_score(
    trace: &LearnerTrace,
    delta_t: f64,
    teacher: &Teacher,
    candidate: Hypothesis,
) -> Result<ScoredCandidate> {
    let sum = trace.replay_sum(&candidate);
    let feedback = teacher.feedback(&candidate)?;
    let t = trace.round();
    let beta = beta(average(teacher.sum(), t), average(sum, t), feedback, delta_t);
    Ok(ScoredCandidate {
        hypothesis: candidate,
        sum,
        feedback,
        beta,
    })
}

/// Installs the candidate with the largest positive `beta` (lowest index on
/// ties). Returns the round's record.
pub fn maybe_update_teacher(
    teacher: &mut Teacher,
    t: usize,
    candidates: &[ScoredCandidate],
) -> ImprovementRecord {
    let betas: Vec<f64> = candidates.iter().map(|c| c.beta).collect();
    let mut best: Option<usize> = None;
    for (i, &b) in betas.iter().enumerate() {
        if b > 0.0 && best.is_none_or(|j| b > betas[j]) {
            best = Some(i);
        }
    }
    let alpha = best.map_or(0.0, |i| betas[i]);
    if let Some(i) = best {
        let c = &candidates[i];
        teacher.install(c.hypothesis.clone(), c.sum, t);
    }
    ImprovementRecord {
        t,
        betas,
        alpha,
        teacher_updated: best.is_some(),
    }
}

/// One self-improvement step: generate hull points of the alive set, add
/// them to the candidate set with replayed errors, and gate the teacher.
pub fn self_improve<R: Rng + ?Sized>(
    teacher: &mut Teacher,
    set: &mut CandidateSet,
    trace: &mut LearnerTrace,
    cfg: &ImprovementConfig,
    delta_t: f64,
    rng: &mut R,
) -> Result<ImprovementRecord> {
    let t = trace.round();
    if cfg.n == 0 {
        return Ok(maybe_update_teacher(teacher, t, &[]));
    }
    let alive: Vec<&Hypothesis> = set.alive_hypotheses().collect();
    let generated = generate_convex(&alive, cfg, rng)?;
    let scored = generated
        .into_iter()
        .map(|h| improvement_score(trace, delta_t, teacher, h))
        .collect::<Result<Vec<_>>>()?;
    let record = maybe_update_teacher(teacher, t, &scored);
    for c in scored {
        set.push(c.hypothesis)?;
        trace.push_candidate(c.sum);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{empirical_disagreement, generate_hyperplane_class, pointwise_disagreement};
    use crate::pruning::QueryRecord;
    use proptest::prelude::{any, prop, prop_assert, proptest, Strategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn subset(n: usize, dim: usize, seed: u64) -> FeedbackSubset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect::<Vec<_>>()
            .into()
    }

    #[test]
    fn feedback_matches_empirical_disagreement() {
        let hs = generate_hyperplane_class(3, 6, 4.0, 1).unwrap();
        let s = subset(40, 3, 2);
        let teacher = Teacher::new(hs[0].clone(), s.clone()).unwrap();
        assert_eq!(teacher.feedback(&hs[0]).unwrap(), 0.0);
        for h in &hs[1..] {
            let f = teacher_feedback(&teacher, h).unwrap();
            let oracle = empirical_disagreement(&hs[0], h, &s).unwrap();
            assert!((f - oracle).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn teacher_rejects_empty_subset() {
        let empty: FeedbackSubset = Vec::new().into();
        assert!(Teacher::new(Hypothesis::zeros(2), empty).is_err());
    }

    #[test]
    fn convex_midpoint_and_vertices() {
        let a = Hypothesis::new(vec![1.0, -2.0], 0.5);
        let b = Hypothesis::new(vec![3.0, 0.0], -0.5);
        let mid = Hypothesis::combination(2, [(0.5, &a), (0.5, &b)]);
        assert_eq!(mid, Hypothesis::new(vec![2.0, -1.0], 0.0));
        let vertex = Hypothesis::combination(2, [(1.0, &a), (0.0, &b)]);
        assert_eq!(vertex, a);

        // a single alive hypothesis only spans itself
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ImprovementConfig { n: 4, m: 5 };
        for h in generate_convex(&[&a], &cfg, &mut rng).unwrap() {
            assert_eq!(h, a);
        }
    }

    #[test]
    fn convex_generation_is_deterministic_and_sized() {
        let hs = generate_hyperplane_class(2, 8, 2.0, 4).unwrap();
        let refs: Vec<&Hypothesis> = hs.iter().collect();
        let cfg = ImprovementConfig::default();
        let a = generate_convex(&refs, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = generate_convex(&refs, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(generate_convex(&refs, &ImprovementConfig { n: 1, m: 1 }, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn beta_examples() {
        // the teacher against itself never qualifies
        assert_eq!(beta(0.3, 0.3, 0.0, 0.1), -0.1);
        let b = beta(0.5, 0.2, 0.5, 0.2);
        assert!(b.abs() < 1e-15);

        let s = subset(10, 1, 6);
        let mut teacher = Teacher::new(Hypothesis::zeros(1), s).unwrap();
        let record = maybe_update_teacher(&mut teacher, 3, &[]);
        assert_eq!(record.alpha, 0.0);
        assert!(!record.teacher_updated);
    }

    #[test]
    fn gate_installs_argmax_positive_beta() {
        let s = subset(10, 1, 7);
        let mut teacher = Teacher::new(Hypothesis::zeros(1), s).unwrap();
        let cand = |w: f64, beta: f64| ScoredCandidate {
            hypothesis: Hypothesis::new(vec![w], 0.0),
            sum: 1.0,
            feedback: 0.1,
            beta,
        };
        let all_nonpositive = [cand(1.0, -0.1), cand(2.0, 0.0)];
        let r = maybe_update_teacher(&mut teacher, 2, &all_nonpositive);
        assert!(!r.teacher_updated);
        assert_eq!(teacher.current(), &Hypothesis::zeros(1));

        let r = maybe_update_teacher(&mut teacher, 4, &[cand(1.0, -0.3), cand(2.0, 0.2), cand(3.0, 0.2)]);
        assert!(r.teacher_updated);
        assert_eq!(r.alpha, 0.2);
        assert_eq!(teacher.current().weights, vec![2.0]);
        assert_eq!(teacher.sum(), 1.0);
        assert_eq!(teacher.history(), &[(4, 0.25)]);
    }

    #[test]
    fn self_improvement_respects_gate_inequality() {
        let dim = 2;
        let hs = generate_hyperplane_class(dim, 30, 3.0, 8).unwrap();
        let mut set = CandidateSet::new(hs.clone()).unwrap();
        let mut trace = LearnerTrace::new(set.len());
        let mut teacher = Teacher::new(hs[0].clone(), subset(50, dim, 9)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = ImprovementConfig::default();
        for t in 1..=200 {
            let x = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            let y = if x[0] + 0.3 * x[1] > 0.0 { Label::Pos } else { Label::Neg };
            let rec = QueryRecord::queried(t, 1.0, y);
            trace.update_weighted_errors(&set, rec, &x).unwrap();
            teacher.observe(&x, y, 1.0);
            let delta_t = 0.02;
            let old_err = average(teacher.sum(), t);
            let r = self_improve(&mut teacher, &mut set, &mut trace, &cfg, delta_t, &mut rng).unwrap();
            assert!(r.alpha >= 0.0);
            if r.teacher_updated {
                assert!(r.alpha > 0.0);
                let f = teacher.feedback(teacher.current()).unwrap();
                assert_eq!(f, 0.0);
                let new_err = average(teacher.sum(), t);
                assert!(new_err < old_err - delta_t);
            }
            // the teacher's running sum matches a replay of the log
            let replay = trace.replay_sum(teacher.current());
            assert!((teacher.sum() - replay).abs() < 1e-9 * replay.max(1.0));
        }
        assert_eq!(set.len(), 30 + 200 * cfg.n);
    }

    fn hypothesis_strategy(dim: usize) -> impl Strategy<Value = Hypothesis> {
        (prop::collection::vec(-3.0f64..3.0, dim), -3.0f64..3.0)
            .prop_map(|(w, b)| Hypothesis::new(w, b))
    }

    proptest! {
        #[test]
        fn hull_points_are_linear_in_predictions(
            hs in prop::collection::vec(hypothesis_strategy(3), 1..6),
            x in prop::collection::vec(-2.0f64..2.0, 3),
            seed in any::<u64>(),
        ) {
            let refs: Vec<&Hypothesis> = hs.iter().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let generated = generate_convex(&refs, &ImprovementConfig { n: 5, m: 5 }, &mut rng).unwrap();
            let lo = hs.iter().map(|h| h.score(&x)).fold(f64::INFINITY, f64::min);
            let hi = hs.iter().map(|h| h.score(&x)).fold(f64::NEG_INFINITY, f64::max);
            for h in &generated {
                let s = h.score(&x);
                prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
            }
        }

        #[test]
        fn hull_does_not_raise_max_disagreement(
            hs in prop::collection::vec(hypothesis_strategy(2), 1..=6),
            x in prop::collection::vec(-2.0f64..2.0, 2),
            seed in any::<u64>(),
        ) {
            let refs: Vec<&Hypothesis> = hs.iter().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hull = generate_convex(&refs, &ImprovementConfig { n: 200, m: 6 }, &mut rng).unwrap();
            let max_over = |set: &[&Hypothesis]| {
                let mut m: f64 = 0.0;
                for a in set {
                    for b in set {
                        m = m.max(pointwise_disagreement(a, b, &x).unwrap());
                    }
                }
                m
            };
            let base = max_over(&refs);
            let mut all = refs.clone();
            all.extend(hull.iter());
            prop_assert!((max_over(&all) - base).abs() <= 1e-9);
        }
    }
}
