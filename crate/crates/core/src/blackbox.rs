//! Active learning against a learner whose hypothesis class is opaque: the
//! teacher-learner disagreement drives querying, the learner moves by
//! incremental steps guarded by a backtracking test, and the teacher improves
//! along the segment between itself and the learner.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{loss_slope_at_margin, score_disagreement, Hypothesis, Label};
use crate::pruning::{average, effective_probability, sample_query, LearnerTrace, QueryRecord, SlackSchedule};
use crate::teaching::{improvement_score, maybe_update_teacher, ImprovementRecord, Teacher};

pub const DEFAULT_ETA0: f64 = 0.5;

/// Linear learner trained by importance-weighted gradient steps on the
/// normalized logistic loss, with step size `eta0 / sqrt(steps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementalLearner {
    current: Hypothesis,
    snapshot: Hypothesis,
    eta0: f64,
    steps: usize,
}

impl IncrementalLearner {
    pub fn new(initial: Hypothesis, eta0: f64) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::invalid("eta0", format!("must be positive, got {eta0}")));
        }
        Ok(IncrementalLearner {
            snapshot: initial.clone(),
            current: initial,
            eta0,
            steps: 0,
        })
    }

    pub fn current(&self) -> &Hypothesis {
        &self.current
    }

    pub fn snapshot(&self) -> &Hypothesis {
        &self.snapshot
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Undoes the last step.
    pub fn revert(&mut self) {
        self.current = self.snapshot.clone();
    }
}

/// Gradient of the normalized loss at `(x, y)` with respect to `(w, b)`,
/// returned in hypothesis layout.
pub fn loss_gradient(h: &Hypothesis, x: &[f64], y: Label) -> Hypothesis {
    let scale = loss_slope_at_margin(y.sign() * h.score(x)) * y.sign();
    Hypothesis::new(x.iter().map(|v| scale * v).collect(), scale)
}

pub fn incremental_update(learner: &mut IncrementalLearner, x: &[f64], y: Label, p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("p_t", format!("must lie in (0, 1], got {p}")));
    }
    if x.len() != learner.current.dim() {
        return Err(Error::DimensionMismatch {
            expected: learner.current.dim(),
            actual: x.len(),
        });
    }
    learner.snapshot = learner.current.clone();
    learner.steps += 1;
    let step = learner.eta0 / (learner.steps as f64).sqrt() / p;
    let grad = loss_gradient(&learner.current, x, y);
    for (w, g) in learner.current.weights.iter_mut().zip(&grad.weights) {
        *w -= step * g;
    }
    learner.current.bias -= step * grad.bias;
    Ok(())
}

/// Query probability from the disagreement between the teacher and the
/// learner's hypothesis from the previous round.
pub fn tl_query_probability(teacher: &Teacher, learner: &IncrementalLearner, x: &[f64]) -> Result<f64> {
    let h = learner.current();
    if x.len() != h.dim() || teacher.current().dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            actual: x.len(),
        });
    }
    Ok(score_disagreement(teacher.current().score(x), h.score(x)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktrackState {
    pub phi: f64,
    /// `L_{t-1}` of the proposed hypothesis.
    pub proposed: f64,
    /// `L_{t-1}` of the previous hypothesis.
    pub previous: f64,
    pub accepted: bool,
}

impl BacktrackState {
    pub fn new(phi: f64, proposed: f64, previous: f64) -> Self {
        let mut s = BacktrackState {
            phi,
            proposed,
            previous,
            accepted: false,
        };
        s.accepted = backtrack_check(&s);
        s
    }
}

pub fn backtrack_check(state: &BacktrackState) -> bool {
    state.proposed <= state.previous + state.phi
}

/// `n` points `lambda h_T + (1 - lambda) h` with `lambda ~ U(0, 1)`.
pub fn generate_pair_hypotheses<R: Rng + ?Sized>(
    teacher: &Hypothesis,
    learner: &Hypothesis,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Hypothesis>> {
    if teacher.dim() != learner.dim() {
        return Err(Error::DimensionMismatch {
            expected: teacher.dim(),
            actual: learner.dim(),
        });
    }
    Ok((0..n)
        .map(|_| {
            let lambda: f64 = rng.random();
            Hypothesis::combination(teacher.dim(), [(lambda, teacher), (1.0 - lambda, learner)])
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BtalPlusConfig {
    /// Pair hypotheses generated per querying round.
    pub n: usize,
    pub p_min: f64,
    pub eta0: f64,
}

impl Default for BtalPlusConfig {
    fn default() -> Self {
        BtalPlusConfig {
            n: 10,
            p_min: crate::pruning::DEFAULT_P_MIN,
            eta0: DEFAULT_ETA0,
        }
    }
}

/// Everything a run carries from round to round.
#[derive(Clone, Debug)]
pub struct BtalPlusState {
    pub teacher: Teacher,
    pub learner: IncrementalLearner,
    pub trace: LearnerTrace,
    pub schedule: SlackSchedule,
    pub cfg: BtalPlusConfig,
}

impl BtalPlusState {
    pub fn new(teacher: Teacher, initial: Hypothesis, schedule: SlackSchedule, cfg: BtalPlusConfig) -> Result<Self> {
        if initial.dim() != teacher.current().dim() {
            return Err(Error::DimensionMismatch {
                expected: teacher.current().dim(),
                actual: initial.dim(),
            });
        }
        Ok(BtalPlusState {
            learner: IncrementalLearner::new(initial, cfg.eta0)?,
            teacher,
            trace: LearnerTrace::new(0),
            schedule,
            cfg,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BtalPlusRound {
    pub t: usize,
    pub p: f64,
    pub queried: bool,
    /// `None` on rounds without a step, or on the first round.
    pub backtrack: Option<BacktrackState>,
    pub improvement: Option<ImprovementRecord>,
}

/// One round: query decision, label, learner step, backtracking test, and
/// teacher self-improvement on the teacher-learner segment.
pub fn btal_plus_round<R, F>(state: &mut BtalPlusState, x: &[f64], label_oracle: F, rng: &mut R) -> Result<BtalPlusRound>
where
    R: Rng + ?Sized,
    F: FnOnce() -> Label,
{
    let t = state.trace.round() + 1;
    let raw = tl_query_probability(&state.teacher, &state.learner, x)?;
    let p = effective_probability(raw, state.cfg.p_min);
    if !sample_query(raw, state.cfg.p_min, rng)? {
        state.trace.record(QueryRecord::skipped(t, p), x)?;
        return Ok(BtalPlusRound {
            t,
            p,
            queried: false,
            backtrack: None,
            improvement: None,
        });
    }
    let y = label_oracle();
    // Phi uses the teacher as it stood at the end of the previous round.
    let phi = if t >= 2 {
        let f = state.teacher.feedback(state.learner.current())?;
        Some((1.0 + f) * state.schedule.delta_t(t - 1)?)
    } else {
        None
    };
    state.trace.record(QueryRecord::queried(t, p, y), x)?;
    state.teacher.observe(x, y, 1.0 / p);
    incremental_update(&mut state.learner, x, y, p)?;

    let backtrack = match phi {
        Some(phi) => {
            let proposed = average(state.trace.replay_sum_through(state.learner.current(), t - 1), t - 1);
            let previous = average(state.trace.replay_sum_through(state.learner.snapshot(), t - 1), t - 1);
            let s = BacktrackState::new(phi, proposed, previous);
            if !s.accepted {
                state.learner.revert();
            }
            Some(s)
        }
        None => None,
    };

    let delta_t = state.schedule.delta_t(t)?;
    let pairs = generate_pair_hypotheses(state.teacher.current(), state.learner.current(), state.cfg.n, rng)?;
    let scored = pairs
        .into_iter()
        .map(|h| improvement_score(&state.trace, delta_t, &state.teacher, h))
        .collect::<Result<Vec<_>>>()?;
    let improvement = maybe_update_teacher(&mut state.teacher, t, &scored);
    Ok(BtalPlusRound {
        t,
        p,
        queried: true,
        backtrack,
        improvement: Some(improvement),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{loss_at_score, pointwise_disagreement, zero_one_error, LabeledSample};
    use crate::teaching::FeedbackSubset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn subset_of(points: &[LabeledSample]) -> FeedbackSubset {
        points.iter().map(|s| s.x.clone()).collect::<Vec<_>>().into()
    }

    #[test]
    fn query_probability_is_pointwise_disagreement() {
        let t = Hypothesis::new(vec![1.0, -1.0], 0.2);
        let s: FeedbackSubset = vec![vec![0.0, 0.0]].into();
        let teacher = Teacher::new(t.clone(), s).unwrap();
        let same = IncrementalLearner::new(t.clone(), 0.5).unwrap();
        assert_eq!(tl_query_probability(&teacher, &same, &[0.3, 0.4]).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let h = Hypothesis::new(vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>()], rng.random());
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let learner = IncrementalLearner::new(h.clone(), 0.5).unwrap();
            let p = tl_query_probability(&teacher, &learner, &x).unwrap();
            let brute = Label::BOTH
                .iter()
                .map(|&y| (loss_at_score(t.score(&x), y) - loss_at_score(h.score(&x), y)).abs())
                .fold(0.0, f64::max);
            assert!((p - brute).abs() < 1e-15);
            assert!((p - pointwise_disagreement(&t, &h, &x).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps = 1e-5;
        for _ in 0..50 {
            let h = Hypothesis::new((0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(), rng.random::<f64>() - 0.5);
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let y = if rng.random::<bool>() { Label::Pos } else { Label::Neg };
            let g = loss_gradient(&h, &x, y);
            let analytic: Vec<f64> = g.weights.iter().copied().chain([g.bias]).collect();
            for (k, a) in analytic.iter().enumerate() {
                let mut plus = h.clone();
                let mut minus = h.clone();
                if k < 3 {
                    plus.weights[k] += eps;
                    minus.weights[k] -= eps;
                } else {
                    plus.bias += eps;
                    minus.bias -= eps;
                }
                let fd = (loss_at_score(plus.score(&x), y) - loss_at_score(minus.score(&x), y)) / (2.0 * eps);
                assert!((a - fd).abs() <= 1e-4 * fd.abs().max(1e-8), "{a} vs {fd}");
            }
        }
    }

    #[test]
    fn step_moves_toward_positive_example() {
        let mut learner = IncrementalLearner::new(Hypothesis::zeros(1), 0.5).unwrap();
        incremental_update(&mut learner, &[1.0], Label::Pos, 1.0).unwrap();
        assert!(learner.current().weights[0] > 0.0);
        assert!(learner.current().bias > 0.0);
        assert_eq!(learner.snapshot(), &Hypothesis::zeros(1));
        assert!(incremental_update(&mut learner, &[1.0], Label::Pos, 0.0).is_err());
    }

    #[test]
    fn saturated_margin_leaves_learner_in_place() {
        let h = Hypothesis::new(vec![50.0], 0.0);
        let mut learner = IncrementalLearner::new(h.clone(), 0.5).unwrap();
        incremental_update(&mut learner, &[1.0], Label::Pos, 1.0).unwrap();
        assert!((learner.current().weights[0] - 50.0).abs() < 1e-12);
        assert!(learner.current().bias.abs() < 1e-12);
    }

    #[test]
    fn backtrack_boundaries() {
        assert!(BacktrackState::new(0.1, 0.4, 0.4).accepted);
        assert!(BacktrackState::new(0.25, 0.75, 0.5).accepted);
        assert!(!BacktrackState::new(0.25, 0.75 + 1e-12, 0.5).accepted);
    }

    #[test]
    fn pair_hypotheses_lie_on_segment() {
        let a = Hypothesis::new(vec![2.0, 0.0], 1.0);
        let b = Hypothesis::new(vec![0.0, 4.0], -1.0);
        assert_eq!(
            Hypothesis::combination(2, [(0.5, &a), (0.5, &b)]),
            Hypothesis::new(vec![1.0, 2.0], 0.0)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = generate_pair_hypotheses(&a, &b, 20, &mut rng).unwrap();
        let x = [0.3, -0.7];
        for h in &pairs {
            // recover lambda from the bias and check the prediction
            let lambda = (h.bias + 1.0) / 2.0;
            let expected = lambda * a.score(&x) + (1.0 - lambda) * b.score(&x);
            assert!((h.score(&x) - expected).abs() < 1e-12);
        }
        let again = generate_pair_hypotheses(&a, &b, 20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(pairs, again);
    }

    fn separable(n: usize, seed: u64) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = vec![rng.random::<f64>(), rng.random::<f64>()];
                let y = if x[0] - x[1] + 0.1 > 0.0 { Label::Pos } else { Label::Neg };
                LabeledSample::new(x, y)
            })
            .collect()
    }

    fn run(seed: u64) -> (BtalPlusState, Vec<BtalPlusRound>) {
        let data = separable(200, seed);
        let teacher_h = Hypothesis::new(vec![1.0, -0.6], -0.1);
        let teacher = Teacher::new(teacher_h, subset_of(&data[..20])).unwrap();
        let schedule = SlackSchedule::new(1000, 0.1).unwrap();
        let mut state = BtalPlusState::new(teacher, Hypothesis::zeros(2), schedule, BtalPlusConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mut rounds = Vec::new();
        for s in &data {
            rounds.push(btal_plus_round(&mut state, &s.x, || s.y, &mut rng).unwrap());
        }
        (state, rounds)
    }

    #[test]
    fn run_is_deterministic_and_consistent() {
        let (a, ra) = run(4);
        let (b, rb) = run(4);
        assert_eq!(ra, rb);
        assert_eq!(a.learner, b.learner);
        for r in &ra {
            if let Some(bt) = r.backtrack {
                assert!(bt.phi > 0.0);
                assert!(bt.phi <= 2.0 * a.schedule.delta_t(r.t - 1).unwrap() + 1e-15);
            }
            if let Some(imp) = &r.improvement {
                assert!(imp.alpha >= 0.0);
            }
            if !r.queried {
                assert!(r.improvement.is_none() && r.backtrack.is_none());
            }
        }
    }

    #[test]
    fn learner_keeps_up_with_teacher_on_separable_data() {
        let (state, _) = run(5);
        let holdout = separable(500, 99);
        let teacher_err = zero_one_error(&Hypothesis::new(vec![1.0, -0.6], -0.1), &holdout).unwrap();
        let learner_err = zero_one_error(state.learner.current(), &holdout).unwrap();
        assert!(1.0 - learner_err >= 1.0 - teacher_err - 0.02, "{learner_err} vs {teacher_err}");
    }
}
