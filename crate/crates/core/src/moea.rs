//! Constrained NSGA-II with an external non-dominated archive.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::RobustProblem;
use crate::error::{Error, Result};

/// Total violation given to individuals whose objectives are not finite.
pub const QUARANTINE_VIOLATION: f64 = 1e6;

/// Objective and violation vectors of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    pub violations: Vec<f64>,
}

/// An optimization problem over genes in `[0, 1]`, all objectives minimized.
pub trait Problem: Sync {
    fn n_genes(&self) -> usize;
    fn evaluate(&self, genes: &[f64]) -> Evaluation;
}

impl Problem for RobustProblem {
    fn n_genes(&self) -> usize {
        RobustProblem::n_genes(self)
    }

    fn evaluate(&self, genes: &[f64]) -> Evaluation {
        let e = RobustProblem::evaluate(self, genes);
        Evaluation { objectives: e.objectives, violations: e.violations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub objectives: Vec<f64>,
    pub violations: Vec<f64>,
    /// Sum of violations, or `QUARANTINE_VIOLATION` for non-finite results.
    pub total_violation: f64,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn new(genes: Vec<f64>, eval: Evaluation) -> Self {
        let mut total: f64 = eval.violations.iter().sum();
        let finite = eval.objectives.iter().all(|v| v.is_finite());
        if !total.is_finite() || total < 0.0 || (!finite && total == 0.0) {
            total = QUARANTINE_VIOLATION;
        }
        Self {
            genes,
            objectives: eval.objectives,
            violations: eval.violations,
            total_violation: total,
            rank: 0,
            crowding: 0.0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.total_violation == 0.0
    }
}

/// Pareto dominance for minimization.
pub fn pareto_dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Feasible beats infeasible; among infeasible the smaller total violation
/// wins; among feasible, Pareto dominance decides.
pub fn constrained_dominates(a: &Individual, b: &Individual) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.total_violation < b.total_violation,
        (true, true) => pareto_dominates(&a.objectives, &b.objectives),
    }
}

/// Fronts of indices under constrained domination, best first.
pub fn non_dominated_sort(pop: &[Individual]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if constrained_dominates(&pop[i], &pop[j]) {
                dominates[i].push(j);
                dominated_by_count[j] += 1;
            } else if constrained_dominates(&pop[j], &pop[i]) {
                dominates[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of a front (given by objective vectors).
pub fn crowding_distance(objectives: &[&[f64]]) -> Vec<f64> {
    let n = objectives.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = objectives[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        order.sort_by(|&a, &b| objectives[a][k].total_cmp(&objectives[b][k]).then(a.cmp(&b)));
        let lo = objectives[order[0]][k];
        let hi = objectives[order[n - 1]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if !(range > 0.0) || !range.is_finite() {
            continue;
        }
        for w in 1..n - 1 {
            let gap = objectives[order[w + 1]][k] - objectives[order[w - 1]][k];
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// Area dominated by `points` (minimization) and bounded by `reference`,
/// together with the number of points skipped for not being strictly
/// better than the reference in both objectives.
pub fn hypervolume_2d(points: &[[f64; 2]], reference: [f64; 2]) -> (f64, usize) {
    let mut inside: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    let mut skipped = 0;
    for p in points {
        if p[0] < reference[0] && p[1] < reference[1] {
            inside.push(*p);
        } else {
            skipped += 1;
        }
    }
    inside.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut floor = reference[1];
    for p in inside {
        if p[1] < floor {
            area += (reference[0] - p[0]) * (floor - p[1]);
            floor = p[1];
        }
    }
    (area, skipped)
}

/// Simulated binary crossover of one variable pair for a given uniform draw
/// `u`; `u = 0.5` gives a spread factor of one and returns the parents.
pub fn sbx_pair(x1: f64, x2: f64, u: f64, eta: f64) -> (f64, f64) {
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    (
        0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2),
        0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2),
    )
}

/// SBX over whole chromosomes; each variable crosses with `per_variable`
/// probability once the pair is selected for crossover. Children are
/// clipped to `[0, 1]`.
pub fn sbx_crossover<R: Rng>(p1: &[f64], p2: &[f64], eta: f64, prob: f64, per_variable: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.gen::<f64>() < prob {
        for i in 0..p1.len() {
            if rng.gen::<f64>() < per_variable {
                let u = rng.gen::<f64>();
                let (a, b) = sbx_pair(p1[i], p2[i], u, eta);
                c1[i] = a.clamp(0.0, 1.0);
                c2[i] = b.clamp(0.0, 1.0);
            }
        }
    }
    (c1, c2)
}

/// Bounded polynomial mutation on `[0, 1]`.
pub fn polynomial_mutation<R: Rng>(x: &mut [f64], eta: f64, rate: f64, rng: &mut R) {
    let pow = 1.0 / (eta + 1.0);
    for y in x.iter_mut() {
        if rng.gen::<f64>() >= rate {
            continue;
        }
        let d1 = *y;
        let d2 = 1.0 - *y;
        let r = rng.gen::<f64>();
        let dq = if r < 0.5 {
            let v = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta + 1.0);
            v.powf(pow) - 1.0
        } else {
            let v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - v.powf(pow)
        };
        *y = (*y + dq).clamp(0.0, 1.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_c: f64,
    /// Per-variable crossover probability within a crossing pair.
    pub crossover_per_variable: f64,
    /// Per-gene mutation probability; `None` means `1 / n_genes`.
    pub mutation_prob: Option<f64>,
    pub eta_m: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            pop_size: 30,
            generations: 600,
            crossover_prob: 0.9,
            eta_c: 15.0,
            crossover_per_variable: 0.5,
            mutation_prob: None,
            eta_m: 20.0,
            seed: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 4 || self.pop_size % 2 != 0 {
            return Err(Error::GaConfig(format!("pop_size must be even and >= 4, got {}", self.pop_size)));
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.crossover_prob) || !prob_ok(self.crossover_per_variable) || !self.mutation_prob.map_or(true, prob_ok) {
            return Err(Error::GaConfig("probabilities must lie in [0, 1]".into()));
        }
        if !(self.eta_c >= 0.0 && self.eta_m >= 0.0) {
            return Err(Error::GaConfig("distribution indices must be non-negative".into()));
        }
        Ok(())
    }
}

/// Feasible non-dominated solutions seen so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub members: Vec<Individual>,
}

impl Archive {
    /// Adds `ind` unless it is infeasible or weakly dominated by a member;
    /// members it dominates are dropped. Returns whether it was added.
    pub fn offer(&mut self, ind: &Individual) -> bool {
        if !ind.is_feasible() {
            return false;
        }
        let covered = self
            .members
            .iter()
            .any(|m| m.objectives.iter().zip(&ind.objectives).all(|(a, b)| a <= b));
        if covered {
            return false;
        }
        self.members.retain(|m| !pareto_dominates(&ind.objectives, &m.objectives));
        self.members.push(ind.clone());
        true
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn hypervolume(&self, reference: [f64; 2]) -> f64 {
        let pts: Vec<[f64; 2]> = self.members.iter().map(|m| [m.objectives[0], m.objectives[1]]).collect();
        hypervolume_2d(&pts, reference).0
    }

    /// Members ordered by objectives, for stable output.
    pub fn sorted(&self) -> Vec<Individual> {
        let mut v = self.members.clone();
        v.sort_by(|a, b| {
            a.objectives
                .iter()
                .zip(&b.objectives)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub archive_size: usize,
    /// `NaN` when no reference point is configured.
    pub archive_hypervolume: f64,
    pub min_violation: f64,
    pub mean_violation: f64,
    pub feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveResult {
    pub archive: Archive,
    pub history: Vec<GenerationStats>,
    pub population: Vec<Individual>,
    pub evaluations: usize,
}

fn evaluate_all<P: Problem>(problem: &P, genes: Vec<Vec<f64>>) -> Vec<Individual> {
    genes
        .into_par_iter()
        .map(|g| {
            let e = problem.evaluate(&g);
            Individual::new(g, e)
        })
        .collect()
}

/// Assigns ranks and crowding distances in place; returns the fronts.
fn rank_and_crowd(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let fronts = non_dominated_sort(pop);
    for (r, front) in fronts.iter().enumerate() {
        let objs: Vec<&[f64]> = front.iter().map(|&i| pop[i].objectives.as_slice()).collect();
        let cd = crowding_distance(&objs);
        for (&i, d) in front.iter().zip(cd) {
            pop[i].rank = r;
            pop[i].crowding = d;
        }
    }
    fronts
}

fn tournament<R: Rng>(pop: &[Individual], rng: &mut R) -> usize {
    let a = rng.gen_range(0..pop.len());
    let b = rng.gen_range(0..pop.len());
    let better = |i: usize, j: usize| {
        let (x, y) = (&pop[i], &pop[j]);
        x.rank
            .cmp(&y.rank)
            .then(y.crowding.total_cmp(&x.crowding))
            .then(i.cmp(&j))
    };
    if better(a, b) == Ordering::Greater {
        b
    } else {
        a
    }
}

fn stats(generation: usize, pop: &[Individual], archive: &Archive, reference: Option<[f64; 2]>) -> GenerationStats {
    let v: Vec<f64> = pop.iter().map(|i| i.total_violation).collect();
    GenerationStats {
        generation,
        archive_size: archive.len(),
        archive_hypervolume: reference.map_or(f64::NAN, |r| archive.hypervolume(r)),
        min_violation: v.iter().copied().fold(f64::INFINITY, f64::min),
        mean_violation: v.iter().sum::<f64>() / v.len() as f64,
        feasible: pop.iter().filter(|i| i.is_feasible()).count(),
    }
}

/// Runs the generational loop. `reference` (in minimized objective space)
/// enables archive hypervolume tracking for two-objective problems.
pub fn evolve<P: Problem>(problem: &P, config: &GaConfig, reference: Option<[f64; 2]>) -> Result<EvolveResult> {
    evolve_with(problem, config, reference, |_| {})
}

/// As `evolve`, calling `on_generation` after each generation.
pub fn evolve_with<P, F>(problem: &P, config: &GaConfig, reference: Option<[f64; 2]>, mut on_generation: F) -> Result<EvolveResult>
where
    P: Problem,
    F: FnMut(&GenerationStats),
{
    config.validate()?;
    let n_genes = problem.n_genes();
    if n_genes == 0 {
        return Err(Error::GaConfig("problem has no genes".into()));
    }
    let rate = config.mutation_prob.unwrap_or(1.0 / n_genes as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let init: Vec<Vec<f64>> = (0..config.pop_size)
        .map(|_| (0..n_genes).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut pop = evaluate_all(problem, init);
    let mut evaluations = pop.len();
    let mut archive = Archive::default();
    for ind in &pop {
        archive.offer(ind);
    }
    rank_and_crowd(&mut pop);
    let mut history = vec![stats(0, &pop, &archive, reference)];
    on_generation(&history[0]);

    for generation in 1..=config.generations {
        let mut children = Vec::with_capacity(config.pop_size);
        while children.len() < config.pop_size {
            let a = tournament(&pop, &mut rng);
            let b = tournament(&pop, &mut rng);
            let (mut c1, mut c2) = sbx_crossover(
                &pop[a].genes,
                &pop[b].genes,
                config.eta_c,
                config.crossover_prob,
                config.crossover_per_variable,
                &mut rng,
            );
            polynomial_mutation(&mut c1, config.eta_m, rate, &mut rng);
            polynomial_mutation(&mut c2, config.eta_m, rate, &mut rng);
            children.push(c1);
            children.push(c2);
        }
        let offspring = evaluate_all(problem, children);
        evaluations += offspring.len();
        for ind in &offspring {
            archive.offer(ind);
        }

        let mut merged = pop;
        merged.extend(offspring);
        let fronts = rank_and_crowd(&mut merged);
        let mut keep = Vec::with_capacity(config.pop_size);
        for front in fronts {
            if keep.len() + front.len() <= config.pop_size {
                keep.extend(front);
            } else {
                let mut last = front;
                last.sort_by(|&i, &j| merged[j].crowding.total_cmp(&merged[i].crowding).then(i.cmp(&j)));
                keep.extend(last.into_iter().take(config.pop_size - keep.len()));
            }
            if keep.len() == config.pop_size {
                break;
            }
        }
        let mut slots: Vec<Option<Individual>> = merged.into_iter().map(Some).collect();
        pop = keep.into_iter().map(|i| slots[i].take().expect("selected once")).collect();
        rank_and_crowd(&mut pop);

        let s = stats(generation, &pop, &archive, reference);
        log::debug!(
            "gen {generation}: archive {} hv {:e} min viol {:e} feasible {}",
            s.archive_size,
            s.archive_hypervolume,
            s.min_violation,
            s.feasible
        );
        on_generation(&s);
        history.push(s);
    }

    Ok(EvolveResult { archive, history, population: pop, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(obj: &[f64], viol: f64) -> Individual {
        Individual::new(vec![], Evaluation { objectives: obj.to_vec(), violations: vec![viol] })
    }

    #[test]
    fn domination_rules() {
        assert!(constrained_dominates(&ind(&[5.0, 5.0], 0.0), &ind(&[1.0, 1.0], 0.2)));
        assert!(constrained_dominates(&ind(&[5.0, 5.0], 0.1), &ind(&[1.0, 1.0], 0.5)));
        let (a, b) = (ind(&[1.0, 2.0], 0.0), ind(&[2.0, 1.0], 0.0));
        assert!(!constrained_dominates(&a, &b) && !constrained_dominates(&b, &a));
        assert!(!constrained_dominates(&a, &a));
    }

    #[test]
    fn non_finite_objectives_are_quarantined() {
        let q = ind(&[f64::NAN, 1.0], 0.0);
        assert_eq!(q.total_violation, QUARANTINE_VIOLATION);
        assert!(!q.is_feasible());
    }

    #[test]
    fn sort_examples() {
        let pop = vec![ind(&[1.0, 1.0], 0.0), ind(&[2.0, 2.0], 0.0)];
        assert_eq!(non_dominated_sort(&pop), vec![vec![0], vec![1]]);
        let pop = vec![ind(&[1.0, 2.0], 0.0), ind(&[2.0, 1.0], 0.0)];
        assert_eq!(non_dominated_sort(&pop), vec![vec![0, 1]]);
    }

    #[test]
    fn crowding_examples() {
        let two: Vec<&[f64]> = vec![&[0.0, 1.0], &[1.0, 0.0]];
        assert!(crowding_distance(&two).iter().all(|d| d.is_infinite()));
        let line: Vec<&[f64]> = vec![&[0.0, 2.0], &[1.0, 1.0], &[2.0, 0.0]];
        let d = crowding_distance(&line);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!((d[1] - 2.0).abs() < 1e-15);
        let dup: Vec<&[f64]> = vec![&[0.0, 2.0], &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0], &[2.0, 0.0]];
        assert_eq!(crowding_distance(&dup)[2], 0.0);
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume_2d(&[[1.0, 1.0]], [2.0, 2.0]), (1.0, 0));
        assert_eq!(hypervolume_2d(&[[1.0, 2.0], [2.0, 1.0]], [3.0, 3.0]), (3.0, 0));
        assert_eq!(hypervolume_2d(&[], [3.0, 3.0]), (0.0, 0));
        assert_eq!(hypervolume_2d(&[[1.0, 1.0], [4.0, 0.0]], [2.0, 2.0]), (1.0, 1));
        // dominated points add nothing
        assert_eq!(hypervolume_2d(&[[1.0, 1.0], [1.5, 1.5]], [2.0, 2.0]), (1.0, 0));
    }

    #[test]
    fn sbx_unit_spread_returns_parents() {
        assert_eq!(sbx_pair(0.2, 0.7, 0.5, 15.0), (0.2, 0.7));
        let (a, b) = sbx_pair(0.2, 0.7, 0.9, 15.0);
        assert!(((a + b) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_mutation_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = vec![0.1, 0.5, 0.9];
        polynomial_mutation(&mut x, 20.0, 0.0, &mut rng);
        assert_eq!(x, vec![0.1, 0.5, 0.9]);
    }

    #[test]
    fn mutation_is_symmetric_about_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let mut x = [0.5];
            polynomial_mutation(&mut x, 20.0, 1.0, &mut rng);
            assert!((0.0..=1.0).contains(&x[0]));
            sum += x[0];
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn archive_admission() {
        let mut a = Archive::default();
        assert!(!a.offer(&ind(&[0.0, 0.0], 1.0)));
        assert!(a.offer(&ind(&[1.0, 2.0], 0.0)));
        assert!(!a.offer(&ind(&[1.0, 2.0], 0.0)));
        assert!(a.offer(&ind(&[2.0, 1.0], 0.0)));
        assert!(a.offer(&ind(&[0.5, 0.5], 0.0)));
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        assert!(GaConfig { pop_size: 5, ..Default::default() }.validate().is_err());
        assert!(GaConfig { pop_size: 2, ..Default::default() }.validate().is_err());
        assert!(GaConfig { crossover_prob: 1.5, ..Default::default() }.validate().is_err());
        assert!(GaConfig { mutation_prob: Some(-0.1), ..Default::default() }.validate().is_err());
    }

    struct Quadratic;
    impl Problem for Quadratic {
        fn n_genes(&self) -> usize {
            1
        }
        fn evaluate(&self, g: &[f64]) -> Evaluation {
            let x = g[0];
            Evaluation { objectives: vec![x * x, (x - 1.0) * (x - 1.0)], violations: vec![0.0] }
        }
    }

    struct Impossible;
    impl Problem for Impossible {
        fn n_genes(&self) -> usize {
            2
        }
        fn evaluate(&self, g: &[f64]) -> Evaluation {
            Evaluation { objectives: vec![g[0], g[1]], violations: vec![1.0 + g[0] + g[1]] }
        }
    }

    #[test]
    fn quadratic_front_is_covered() {
        let cfg = GaConfig { pop_size: 30, generations: 50, seed: 7, ..Default::default() };
        let r = evolve(&Quadratic, &cfg, Some([1.0, 1.0])).unwrap();
        let mut xs: Vec<f64> = r.archive.members.iter().map(|m| m.genes[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!(xs[0] < 0.05 && *xs.last().unwrap() > 0.95);
        assert!(xs.windows(2).all(|w| w[1] - w[0] < 0.1));
        assert!(r.history.windows(2).all(|w| w[1].archive_hypervolume >= w[0].archive_hypervolume));
    }

    #[test]
    fn infeasible_problem_keeps_archive_empty() {
        let cfg = GaConfig { pop_size: 20, generations: 30, seed: 2, ..Default::default() };
        let r = evolve(&Impossible, &cfg, Some([2.0, 2.0])).unwrap();
        assert!(r.archive.is_empty());
        assert!(r.history.windows(2).all(|w| w[1].min_violation <= w[0].min_violation));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = GaConfig { pop_size: 12, generations: 20, seed: 99, ..Default::default() };
        let a = evolve(&Quadratic, &cfg, None).unwrap();
        let b = evolve(&Quadratic, &cfg, None).unwrap();
        assert_eq!(a.archive, b.archive);
        assert_eq!(a.population, b.population);
    }
}
