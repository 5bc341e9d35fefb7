//! Monte-Carlo checks of the concentration, retention, hull and
//! unbiasedness properties, plus an empirical disagreement coefficient.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::BinaryDataset;
use crate::error::{Error, Result};
use crate::data::split;
use crate::harness::{best_in_class, purpose_seed, run_seed, run_single, write_atomic, Algorithm, ExperimentConfig, Purpose};
use crate::hypothesis::{
    empirical_disagreement, generate_hyperplane_class, loss_at_score, pointwise_disagreement, rho_disagreement, score_disagreement, Hypothesis, Label, LabeledSample,
};
use crate::pruning::{average, max_set_disagreement, CandidateSet, LearnerTrace, QueryRecord, SlackSchedule};

/// Two-dimensional Gaussian mixture with labels from a logistic link, so
/// risks are plain integrals over the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDistribution {
    /// `(weight, mean, sigma)` of isotropic components.
    pub components: Vec<(f64, [f64; 2], f64)>,
    /// `P(y = +1 | x) = 1 / (1 + exp(-(u . x + c)))`.
    pub link: ([f64; 2], f64),
}

impl Default for SyntheticDistribution {
    fn default() -> Self {
        SyntheticDistribution {
            components: vec![(0.5, [0.35, 0.4], 0.15), (0.5, [0.65, 0.55], 0.12)],
            link: ([6.0, 4.0], -5.0),
        }
    }
}

/// Points per axis of the quadrature grid, spanning 8 sigma either side.
const QUAD_POINTS: usize = 321;
const QUAD_SPAN: f64 = 8.0;

impl SyntheticDistribution {
    pub fn p_pos(&self, x: &[f64]) -> f64 {
        let (u, c) = self.link;
        1.0 / (1.0 + (-(u[0] * x[0] + u[1] * x[1] + c)).exp())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LabeledSample {
        let mut pick: f64 = rng.random();
        let mut comp = self.components.last().expect("at least one component");
        for c in &self.components {
            if pick < c.0 {
                comp = c;
                break;
            }
            pick -= c.0;
        }
        let (_, mean, sigma) = *comp;
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let x = vec![mean[0] + sigma * z0, mean[1] + sigma * z1];
        let y = if rng.random::<f64>() < self.p_pos(&x) { Label::Pos } else { Label::Neg };
        LabeledSample::new(x, y)
    }

    /// `E[f(x, P(+1|x))]` by the trapezoid rule on each component.
    fn integrate<F: Fn(&[f64], f64) -> f64>(&self, f: F, points: usize) -> f64 {
        let mut total = 0.0;
        for &(w, mean, sigma) in &self.components {
            let h = 2.0 * QUAD_SPAN / (points - 1) as f64;
            let norm = 1.0 / (2.0 * std::f64::consts::PI);
            let mut acc = 0.0;
            for i in 0..points {
                let zi = -QUAD_SPAN + i as f64 * h;
                let wi = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
                for j in 0..points {
                    let zj = -QUAD_SPAN + j as f64 * h;
                    let wj = if j == 0 || j == points - 1 { 0.5 } else { 1.0 };
                    let density = norm * (-0.5 * (zi * zi + zj * zj)).exp();
                    let x = [mean[0] + sigma * zi, mean[1] + sigma * zj];
                    acc += wi * wj * density * f(&x, self.p_pos(&x));
                }
            }
            total += w * acc * h * h;
        }
        total
    }

    /// Expected normalized loss.
    pub fn risk(&self, h: &Hypothesis) -> f64 {
        self.risk_with(h, QUAD_POINTS)
    }

    pub fn risk_with(&self, h: &Hypothesis, points: usize) -> f64 {
        self.integrate(
            |x, p| {
                let s = h.score(x);
                p * loss_at_score(s, Label::Pos) + (1.0 - p) * loss_at_score(s, Label::Neg)
            },
            points,
        )
    }

    /// Expected error disagreement between two hypotheses.
    pub fn disagreement(&self, a: &Hypothesis, b: &Hypothesis) -> f64 {
        self.integrate(|x, _| score_disagreement(a.score(x), b.score(x)), QUAD_POINTS)
    }
}

/// One line of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub nominal: f64,
    pub measured: f64,
    pub sigma: f64,
    pub pass: bool,
    pub runs: usize,
    pub detail: String,
}

pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// IWAL-style weighted sums over a stream from `dist`, with query
/// probabilities from the (unpruned) class disagreement.
fn weighted_run<R: Rng>(
    set: &CandidateSet,
    dist: &SyntheticDistribution,
    rounds: usize,
    p_min: f64,
    rng: &mut R,
) -> Result<LearnerTrace> {
    let mut trace = LearnerTrace::new(set.len());
    for t in 1..=rounds {
        let s = dist.sample(rng);
        let p = max_set_disagreement(set, &s.x)?.max(p_min);
        let rec = if rng.random::<f64>() < p {
            QueryRecord::queried(t, p, s.y)
        } else {
            QueryRecord::skipped(t, p)
        };
        trace.update_weighted_errors(set, rec, &s.x)?;
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSetup {
    pub class_size: usize,
    pub norm_bound: f64,
    pub rounds: usize,
    pub runs: usize,
    pub delta: f64,
    pub p_min: f64,
    pub seed: u64,
}

impl Default for ConcentrationSetup {
    fn default() -> Self {
        ConcentrationSetup {
            class_size: 20,
            norm_bound: 4.0,
            rounds: 300,
            runs: 200,
            delta: 0.1,
            p_min: 0.05,
            seed: 7,
        }
    }
}

/// Frequency of runs in which some pair violates
/// `|L(h) - L(h') - (R(h) - R(h'))| <= (1 + D(h, h')) Delta_T`.
pub fn check_concentration(class: &[Hypothesis], dist: &SyntheticDistribution, setup: &ConcentrationSetup) -> Result<CheckRow> {
    let set = CandidateSet::new(class.to_vec())?;
    let risks: Vec<f64> = class.iter().map(|h| dist.risk(h)).collect();
    let n = class.len();
    let mut dis = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = dist.disagreement(&class[i], &class[j]);
            dis[i * n + j] = d;
            dis[j * n + i] = d;
        }
    }
    let delta_t = SlackSchedule::new(n, setup.delta)?.delta_t(setup.rounds)?;
    let per_run: Vec<(bool, f64)> = (0..setup.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
            rng.set_stream(run as u64);
            let trace = weighted_run(&set, dist, setup.rounds, setup.p_min, &mut rng)?;
            let mut violated = false;
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let gap = (trace.error(i) - trace.error(j) - (risks[i] - risks[j])).abs();
                    let slack = (1.0 + dis[i * n + j]) * delta_t;
                    worst = worst.max(gap / slack);
                    violated |= gap > slack;
                }
            }
            Ok((violated, worst))
        })
        .collect::<Result<_>>()?;
    let violations = per_run.iter().filter(|r| r.0).count();
    let worst = per_run.iter().map(|r| r.1).fold(0.0, f64::max);
    let measured = violations as f64 / setup.runs as f64;
    let sigma = binomial_sigma(setup.delta, setup.runs);
    Ok(CheckRow {
        name: "concentration".into(),
        nominal: setup.delta,
        measured,
        sigma,
        pass: measured <= setup.delta + 3.0 * sigma,
        runs: setup.runs,
        detail: format!("largest gap/slack ratio {worst:.4}"),
    })
}

/// Runs teaching-based pruning without self-improvement and counts runs in
/// which the initial teaching hypothesis is pruned. Passes when at most
/// `ceil(delta * runs) + 1` runs prune it.
pub fn check_retention(cfg: &ExperimentConfig, data: &BinaryDataset) -> Result<CheckRow> {
    let cfg = ExperimentConfig {
        algorithm: Algorithm::Btal,
        n_new: 0,
        ..cfg.clone()
    };
    cfg.validate()?;
    let mut pruned = 0;
    for i in 0..cfg.repeats {
        let r = run_single(&cfg, data, i, false)?;
        pruned += usize::from(r.summary.teacher_pruned == Some(true));
    }
    let runs = cfg.repeats;
    let allowed = (cfg.delta * runs as f64).ceil() as usize + 1;
    Ok(CheckRow {
        name: "retention".into(),
        nominal: cfg.delta,
        measured: pruned as f64 / runs as f64,
        sigma: binomial_sigma(cfg.delta, runs),
        pass: pruned <= allowed,
        runs,
        detail: format!("{pruned} of {runs} runs pruned the teacher on {} (allowed {allowed})", cfg.dataset),
    })
}

fn max_pairwise(hs: &[Hypothesis], x: &[f64]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for a in hs {
        for b in hs {
            m = m.max(pointwise_disagreement(a, b, x)?);
        }
    }
    Ok(m)
}

/// Largest increase of the pairwise maximum disagreement at a point when
/// hull points are added to a small set, over `trials` random instances.
pub fn check_hull_equality(trials: usize, hull_points: usize, seed: u64) -> Result<CheckRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..trials {
        let dim = rng.random_range(1..=4);
        let size = rng.random_range(2..=6);
        let set: Vec<Hypothesis> = (0..size)
            .map(|_| {
                let scale = 4.0 * rng.random::<f64>();
                Hypothesis::new(
                    (0..dim).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect(),
                    scale * (2.0 * rng.random::<f64>() - 1.0),
                )
            })
            .collect();
        let x: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let mut all = set.clone();
        for _ in 0..hull_points {
            let mut lambdas: Vec<f64> = (0..size).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = lambdas.iter().sum();
            lambdas.iter_mut().for_each(|l| *l /= total);
            all.push(Hypothesis::combination(dim, lambdas.iter().copied().zip(&set)));
        }
        let excess = max_pairwise(&all, &x)? - max_pairwise(&set, &x)?;
        worst = worst.max(excess);
        failures += usize::from(excess > 1e-9);
    }
    Ok(CheckRow {
        name: "hull-equality".into(),
        nominal: 0.0,
        measured: failures as f64 / trials.max(1) as f64,
        sigma: 0.0,
        pass: failures == 0,
        runs: trials,
        detail: format!("max excess {worst:e}"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessSetup {
    pub hypotheses: usize,
    pub norm_bound: f64,
    pub rounds: usize,
    pub runs: usize,
    /// Constant query probability.
    pub p: f64,
    pub seed: u64,
}

impl Default for UnbiasednessSetup {
    fn default() -> Self {
        UnbiasednessSetup {
            hypotheses: 5,
            norm_bound: 4.0,
            rounds: 200,
            runs: 500,
            p: 0.5,
            seed: 11,
        }
    }
}

/// Compares the mean of `L_T(h) / T` over runs with the quadrature risk.
/// The row's measured value is the largest deviation in standard errors.
pub fn check_unbiasedness(class: &[Hypothesis], dist: &SyntheticDistribution, setup: &UnbiasednessSetup) -> Result<CheckRow> {
    if !(setup.p > 0.0 && setup.p <= 1.0) {
        return Err(Error::invalid("p", "constant query probability must lie in (0, 1]"));
    }
    let set = CandidateSet::new(class.to_vec())?;
    let runs: Vec<Vec<f64>> = (0..setup.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
            rng.set_stream(run as u64);
            let mut trace = LearnerTrace::new(set.len());
            for t in 1..=setup.rounds {
                let s = dist.sample(&mut rng);
                let rec = if rng.random::<f64>() < setup.p {
                    QueryRecord::queried(t, setup.p, s.y)
                } else {
                    QueryRecord::skipped(t, setup.p)
                };
                trace.update_weighted_errors(&set, rec, &s.x)?;
            }
            Ok((0..set.len()).map(|i| average(trace.sum(i), setup.rounds)).collect())
        })
        .collect::<Result<_>>()?;
    let per_h: Vec<Vec<f64>> = (0..class.len()).map(|i| runs.iter().map(|r| r[i]).collect()).collect();
    let mut worst: f64 = 0.0;
    for (h, values) in class.iter().zip(&per_h) {
        let (mean, stderr) = crate::harness::mean_stderr(values);
        let z = (mean - dist.risk(h)).abs() / stderr.max(f64::MIN_POSITIVE);
        worst = worst.max(z);
    }
    Ok(CheckRow {
        name: "unbiasedness".into(),
        nominal: 3.0,
        measured: worst,
        sigma: 1.0,
        pass: worst <= 3.0,
        runs: setup.runs,
        detail: format!("largest |mean - R| in standard errors over {} hypotheses", class.len()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub radii: Vec<f64>,
    /// `None` where the ball was empty.
    pub values: Vec<Option<f64>>,
    pub theta: f64,
    pub reference: Hypothesis,
    pub notes: Vec<String>,
}

/// Log-spaced radii between the 5th percentile of the positive distances
/// and the largest distance.
pub fn radius_grid(distances: &[f64], points: usize) -> Vec<f64> {
    let mut pos: Vec<f64> = distances.iter().copied().filter(|d| *d > 0.0).collect();
    if pos.is_empty() || points == 0 {
        return Vec::new();
    }
    pos.sort_by(f64::total_cmp);
    let lo = pos[((pos.len() - 1) as f64 * 0.05).round() as usize];
    let hi = *pos.last().unwrap();
    if points == 1 || hi <= lo {
        return vec![hi];
    }
    let step = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|k| lo * (step * k as f64).exp()).collect()
}

/// Empirical disagreement coefficient of `class` around `reference`:
/// for each radius, the mean over `sample` of the largest disagreement with
/// any hypothesis in the rho-ball, divided by the radius.
pub fn estimate_theta(
    class: &[Hypothesis],
    reference: &Hypothesis,
    sample: &[LabeledSample],
    radii: Option<&[f64]>,
) -> Result<ThetaEstimate> {
    if sample.is_empty() {
        return Err(Error::Empty("theta sample"));
    }
    let rho: Vec<f64> = class
        .iter()
        .map(|h| rho_disagreement(reference, h, sample))
        .collect::<Result<_>>()?;
    let radii = match radii {
        Some(r) => r.to_vec(),
        None => radius_grid(&rho, 20),
    };
    let mut order: Vec<usize> = (0..class.len()).collect();
    order.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));
    let ref_scores: Vec<f64> = sample.iter().map(|s| reference.score(&s.x)).collect();
    // running max of disagreement with the reference, per sample point
    let mut best = vec![0.0_f64; sample.len()];
    let mut next = 0;
    let mut values = Vec::with_capacity(radii.len());
    let mut notes = vec!["radii start at the 5th percentile of observed rho".to_string()];
    let mut theta: f64 = 0.0;
    for &r in &radii {
        while next < order.len() && rho[order[next]] <= r {
            let h = &class[order[next]];
            for ((b, s), &t) in best.iter_mut().zip(sample).zip(&ref_scores) {
                *b = b.max(score_disagreement(t, h.score(&s.x)));
            }
            next += 1;
        }
        if next == 0 || r.is_nan() || r <= 0.0 {
            notes.push(format!("empty ball at r={r:e}, skipped"));
            values.push(None);
            continue;
        }
        let v = best.iter().sum::<f64>() / sample.len() as f64 / r;
        theta = theta.max(v);
        values.push(Some(v));
    }
    Ok(ThetaEstimate {
        radii,
        values,
        theta,
        reference: reference.clone(),
        notes,
    })
}

/// Theta around the best-in-class hypothesis of run 0 and the teacher's
/// disagreement with the best hypothesis on the held-out split, as rows.
pub fn dataset_diagnostics(cfg: &ExperimentConfig, data: &BinaryDataset) -> Result<(ThetaEstimate, Vec<CheckRow>)> {
    cfg.validate()?;
    let seed = run_seed(cfg.seed, 0);
    let processed = split(data, cfg.train_fraction, purpose_seed(seed, Purpose::Split))?;
    let class = generate_hyperplane_class(processed.dim, cfg.class_size, cfg.norm_bound, purpose_seed(seed, Purpose::Class))?;
    let teacher = &class[best_in_class(&class, &processed.train)?];
    let holdout_best = &class[best_in_class(&class, &processed.test)?];
    let sample: Vec<LabeledSample> = processed.train.iter().take(processed.subset.len().max(1)).cloned().collect();
    let theta = estimate_theta(&class, teacher, &sample, None)?;
    let eps = empirical_disagreement(teacher, holdout_best, &processed.subset)?;
    let rows = vec![
        CheckRow {
            name: "theta".into(),
            nominal: f64::NAN,
            measured: theta.theta,
            sigma: 0.0,
            pass: theta.theta.is_finite(),
            runs: 1,
            detail: format!("class of {}, {} radii, {}", cfg.class_size, theta.radii.len(), cfg.dataset),
        },
        CheckRow {
            name: "epsilon-proxy".into(),
            nominal: f64::NAN,
            measured: eps,
            sigma: 0.0,
            pass: eps.is_finite(),
            runs: 1,
            detail: "disagreement of the teacher with the held-out best".into(),
        },
    ];
    Ok((theta, rows))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub rows: Vec<CheckRow>,
}

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("check,nominal_rate,measured_rate,sigma,pass,runs,detail\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{},{},\"{}\"",
                r.name,
                r.nominal,
                r.measured,
                r.sigma,
                if r.pass { "pass" } else { "fail" },
                r.runs,
                r.detail.replace('"', "'")
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_atomic(path, self.render().as_bytes())
    }
}

/// A fixed class for the synthetic checks.
pub fn synthetic_class(size: usize, norm_bound: f64, seed: u64) -> Result<Vec<Hypothesis>> {
    crate::hypothesis::generate_hyperplane_class(2, size, norm_bound, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_converges_and_matches_monte_carlo() {
        let dist = SyntheticDistribution::default();
        let h = Hypothesis::new(vec![2.0, -1.0], 0.3);
        let coarse = dist.risk_with(&h, 161);
        let fine = dist.risk_with(&h, 641);
        assert!((coarse - fine).abs() < 1e-6, "{coarse} vs {fine}");
        assert!((dist.risk(&h) - fine).abs() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mc: f64 = (0..n)
            .map(|_| {
                let s = dist.sample(&mut rng);
                loss_at_score(h.score(&s.x), s.y)
            })
            .sum::<f64>()
            / n as f64;
        // loss is bounded by 1, so the MC standard error is below 1/sqrt(n)
        assert!((mc - fine).abs() < 3.0 / (n as f64).sqrt(), "{mc} vs {fine}");
    }

    #[test]
    fn identical_pairs_never_violate() {
        let h = Hypothesis::new(vec![1.0, 1.0], -1.0);
        let setup = ConcentrationSetup {
            runs: 5,
            rounds: 20,
            ..Default::default()
        };
        let row = check_concentration(&[h.clone(), h], &SyntheticDistribution::default(), &setup).unwrap();
        assert_eq!(row.measured, 0.0);
        assert!(row.pass);
    }

    #[test]
    fn single_round_slack_dominates() {
        let class = synthetic_class(10, 4.0, 3).unwrap();
        let setup = ConcentrationSetup {
            runs: 20,
            rounds: 1,
            ..Default::default()
        };
        let row = check_concentration(&class, &SyntheticDistribution::default(), &setup).unwrap();
        assert_eq!(row.measured, 0.0);
    }

    #[test]
    fn hull_check_small() {
        let row = check_hull_equality(50, 50, 2).unwrap();
        assert!(row.pass, "{}", row.detail);
    }

    #[test]
    fn full_query_rate_reproduces_mean_loss() {
        // p = 1: the weighted average is the plain average of the stream
        let dist = SyntheticDistribution::default();
        let h = Hypothesis::new(vec![1.0, -2.0], 0.5);
        let set = CandidateSet::new(vec![h.clone()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut trace = LearnerTrace::new(1);
        let mut plain = 0.0;
        for t in 1..=50 {
            let s = dist.sample(&mut rng);
            plain += loss_at_score(h.score(&s.x), s.y);
            trace
                .update_weighted_errors(&set, QueryRecord::queried(t, 1.0, s.y), &s.x)
                .unwrap();
        }
        assert!((trace.error(0) - plain / 50.0).abs() < 1e-12);
    }

    #[test]
    fn theta_examples() {
        let x = vec![LabeledSample::new(vec![1.0], Label::Pos)];
        let h = Hypothesis::new(vec![1.0], 0.0);
        let only_self = estimate_theta(std::slice::from_ref(&h), &h, &x, Some(&[0.1])).unwrap();
        assert_eq!(only_self.values, vec![Some(0.0)]);

        let g = Hypothesis::new(vec![-1.0], 0.0);
        let rho = rho_disagreement(&h, &g, &x).unwrap();
        let d = pointwise_disagreement(&h, &g, &x[0].x).unwrap();
        let est = estimate_theta(&[h.clone(), g], &h, &x, Some(&[rho])).unwrap();
        assert!((est.values[0].unwrap() - d / rho).abs() < 1e-12);

        // duplicating the class leaves the estimate unchanged
        let class = synthetic_class(30, 3.0, 4).unwrap();
        let dist = SyntheticDistribution::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sample: Vec<LabeledSample> = (0..100).map(|_| dist.sample(&mut rng)).collect();
        let once = estimate_theta(&class, &class[0], &sample, None).unwrap();
        let doubled: Vec<Hypothesis> = class.iter().chain(class.iter()).cloned().collect();
        let twice = estimate_theta(&doubled, &class[0], &sample, None).unwrap();
        assert_eq!(once.theta, twice.theta);
        assert!(once.theta.is_finite());
        assert_eq!(once.radii.len(), 20);
    }

    #[test]
    fn empty_ball_is_skipped() {
        let x = vec![LabeledSample::new(vec![1.0], Label::Pos)];
        let h = Hypothesis::new(vec![1.0], 0.0);
        let far = Hypothesis::new(vec![-3.0], 0.0);
        let est = estimate_theta(&[far], &h, &x, Some(&[1e-6])).unwrap();
        assert_eq!(est.values, vec![None]);
        assert_eq!(est.notes.len(), 2);
    }

    #[test]
    fn report_renders_rows() {
        let report = BoundsReport {
            rows: vec![check_hull_equality(3, 5, 1).unwrap()],
        };
        let text = report.render();
        assert!(text.starts_with("check,nominal_rate,measured_rate,sigma,pass"));
        assert!(text.contains("hull-equality,0.0,0.0,0.0,pass,3,"));
    }
}
