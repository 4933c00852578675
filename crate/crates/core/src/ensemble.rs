//! Trajectory ensembles over the quadrature scenarios and the staged
//! constraint handling that turns them into objective and violation vectors.
//!
//! Stage 1 (variable bounds) is the model's own decoding/repair. Stage 2
//! covers per-trajectory guards and termination: every member that fails
//! to land contributes a penalty. Stage 3 covers statistical constraints on
//! the ensemble: standard-deviation bounds on path quantities and on
//! terminal quantities.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::odesim::{Status, Trajectory};
use crate::pce::{sample_moments, Moments, Scenario, ScenarioSet};

/// Violation assigned when a statistical constraint cannot be evaluated.
pub const INFEASIBLE: f64 = 1.0;

/// A simulated system driven by a decision vector.
pub trait TrajectoryModel: Send + Sync {
    fn n_genes(&self) -> usize;

    /// Decodes (and repairs) `genes` and propagates one member.
    fn simulate(&self, genes: &[f64], scenario: &Scenario) -> Trajectory;

    /// Names of the per-sample observables available to statistical path
    /// constraints.
    fn observable_names(&self) -> Vec<String>;

    /// One series per observable, aligned with `traj.times`.
    fn observables(&self, traj: &Trajectory, scenario: &Scenario) -> Vec<Vec<f64>>;

    /// Fraction of the task left when the member stopped (0 when complete).
    fn remaining_fraction(&self, traj: &Trajectory) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

pub type Extractor = Arc<dyn Fn(&Trajectory) -> Option<f64> + Send + Sync>;

/// A per-trajectory scalar whose ensemble mean is optimized.
#[derive(Clone)]
pub struct Objective {
    pub name: String,
    pub sense: Sense,
    pub extract: Extractor,
}

impl Objective {
    pub fn new(name: &str, sense: Sense, extract: impl Fn(&Trajectory) -> Option<f64> + Send + Sync + 'static) -> Self {
        Self { name: name.into(), sense, extract: Arc::new(extract) }
    }

    /// Internal (minimized) value of a natural-units mean.
    pub fn internal(&self, natural: f64) -> f64 {
        match self.sense {
            Sense::Minimize => natural,
            Sense::Maximize => -natural,
        }
    }

    pub fn natural(&self, internal: f64) -> f64 {
        self.internal(internal)
    }
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective").field("name", &self.name).field("sense", &self.sense).finish()
    }
}

/// Bounds on the ensemble mean and standard deviation of an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatPathConstraint {
    pub name: String,
    pub observable: usize,
    pub mean_bounds: Option<(f64, f64)>,
    pub std_max: Option<f64>,
}

/// Upper bound on the standard deviation of an objective's terminal scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalStdConstraint {
    pub name: String,
    pub objective: usize,
    pub bound: f64,
}

#[derive(Clone)]
pub struct RobustProblem {
    pub name: String,
    pub model: Arc<dyn TrajectoryModel>,
    pub scenarios: ScenarioSet,
    pub objectives: Vec<Objective>,
    pub stat_path: Vec<StatPathConstraint>,
    pub terminal_std: Vec<TerminalStdConstraint>,
}

/// Outcome of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub index: usize,
    pub values: Vec<f64>,
    pub weight: f64,
    pub status: Status,
    pub end_time: f64,
    /// Natural-units objective scalars (absent when the member did not land).
    pub objective_values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEvaluation {
    /// Minimized objective means; `NaN` when no member produced a value.
    pub objectives: Vec<f64>,
    /// Non-negative violations: stage 2 first, then stage-3 path and
    /// terminal constraints in declaration order.
    pub violations: Vec<f64>,
    /// Natural-units moments per objective, over landed members.
    pub terminal_moments: Vec<Option<Moments>>,
    pub members: Vec<MemberRecord>,
}

impl EnsembleEvaluation {
    pub fn total_violation(&self) -> f64 {
        self.violations.iter().sum()
    }

    pub fn is_feasible(&self) -> bool {
        self.total_violation() == 0.0
    }
}

/// Normalization scale of a bound: its magnitude, or 1 when it is zero.
pub fn bound_scale(bound: f64) -> f64 {
    if bound == 0.0 {
        1.0
    } else {
        bound.abs()
    }
}

fn excess_above(value: f64, bound: f64) -> f64 {
    ((value - bound) / bound_scale(bound)).max(0.0)
}

fn excess_below(value: f64, bound: f64) -> f64 {
    ((bound - value) / bound_scale(bound)).max(0.0)
}

/// Worst normalized excess over time of the ensemble mean/std of a path
/// quantity, evaluated up to the earliest member termination.
pub fn stat_path_violation(
    series: &[Vec<f64>],
    grid: &ScenarioSet,
    mean_bounds: Option<(f64, f64)>,
    std_max: Option<f64>,
) -> f64 {
    let steps = series.iter().map(Vec::len).min().unwrap_or(0);
    if steps == 0 || series.len() != grid.len() {
        return INFEASIBLE;
    }
    let mut samples = vec![0.0; series.len()];
    let mut worst = 0.0f64;
    for t in 0..steps {
        for (s, member) in samples.iter_mut().zip(series) {
            *s = member[t];
        }
        let m = sample_moments(&samples, grid).expect("length checked");
        let mut excess = 0.0;
        if let Some((lo, hi)) = mean_bounds {
            excess += excess_above(m.mean, hi) + excess_below(m.mean, lo);
        }
        if let Some(bound) = std_max {
            excess += excess_above(m.std, bound);
        }
        if excess.is_nan() {
            return INFEASIBLE;
        }
        worst = worst.max(excess);
    }
    worst
}

/// Normalized excess of the ensemble standard deviation of a terminal
/// scalar; infeasible if any member has no value.
pub fn terminal_std_violation(values: &[Option<f64>], grid: &ScenarioSet, bound: f64) -> f64 {
    let Some(v) = values.iter().copied().collect::<Option<Vec<f64>>>() else {
        return INFEASIBLE;
    };
    match sample_moments(&v, grid) {
        Ok(m) if m.std.is_finite() => excess_above(m.std, bound),
        _ => INFEASIBLE,
    }
}

/// Stage-2 penalty of one member: zero when it landed.
pub fn member_penalty(status: &Status, remaining: f64) -> f64 {
    match status {
        Status::Landed => 0.0,
        Status::PathViolation { excess, .. } => excess.max(0.0) + remaining.max(0.0),
        Status::TimeExpired => 1.0 + remaining.max(0.0),
    }
}

impl RobustProblem {
    pub fn n_genes(&self) -> usize {
        self.model.n_genes()
    }

    pub fn violation_names(&self) -> Vec<String> {
        let mut names = vec!["stage2".to_string()];
        names.extend(self.stat_path.iter().map(|c| c.name.clone()));
        names.extend(self.terminal_std.iter().map(|c| c.name.clone()));
        names
    }

    /// Propagates every member in scenario order.
    pub fn simulate_ensemble(&self, genes: &[f64]) -> Vec<Trajectory> {
        self.scenarios.scenarios.iter().map(|s| self.model.simulate(genes, s)).collect()
    }

    pub fn evaluate(&self, genes: &[f64]) -> EnsembleEvaluation {
        let trajectories = self.simulate_ensemble(genes);
        self.evaluate_trajectories(&trajectories)
    }

    pub fn evaluate_trajectories(&self, trajectories: &[Trajectory]) -> EnsembleEvaluation {
        let scenarios = &self.scenarios.scenarios;
        let mut stage2 = 0.0;
        let mut members = Vec::with_capacity(scenarios.len());
        for (s, traj) in scenarios.iter().zip(trajectories) {
            let landed = traj.status.is_landed();
            if !landed {
                stage2 += member_penalty(&traj.status, self.model.remaining_fraction(traj));
            }
            let objective_values = self
                .objectives
                .iter()
                .map(|o| if landed { (o.extract)(traj) } else { None })
                .collect();
            members.push(MemberRecord {
                index: s.index,
                values: s.values.clone(),
                weight: s.weight,
                status: traj.status.clone(),
                end_time: traj.end_time(),
                objective_values,
            });
        }

        let mut objectives = Vec::with_capacity(self.objectives.len());
        let mut terminal_moments = Vec::with_capacity(self.objectives.len());
        for (j, o) in self.objectives.iter().enumerate() {
            let column: Vec<Option<f64>> = members.iter().map(|m| m.objective_values[j]).collect();
            let mean = match column.iter().copied().collect::<Option<Vec<f64>>>() {
                Some(all) => {
                    let m = sample_moments(&all, &self.scenarios).expect("one value per scenario");
                    terminal_moments.push(Some(m));
                    m.mean
                }
                None => {
                    terminal_moments.push(None);
                    survivor_mean(&column, scenarios)
                }
            };
            objectives.push(o.internal(mean));
        }

        let mut violations = vec![stage2];
        if !self.stat_path.is_empty() {
            let observed: Vec<Vec<Vec<f64>>> = scenarios
                .iter()
                .zip(trajectories)
                .map(|(s, t)| self.model.observables(t, s))
                .collect();
            for c in &self.stat_path {
                let series: Vec<Vec<f64>> = observed.iter().map(|o| o[c.observable].clone()).collect();
                violations.push(stat_path_violation(&series, &self.scenarios, c.mean_bounds, c.std_max));
            }
        }
        for c in &self.terminal_std {
            let column: Vec<Option<f64>> = members.iter().map(|m| m.objective_values[c.objective]).collect();
            violations.push(terminal_std_violation(&column, &self.scenarios, c.bound));
        }

        EnsembleEvaluation { objectives, violations, terminal_moments, members }
    }
}

/// Weighted mean over members that produced a value, renormalized.
fn survivor_mean(column: &[Option<f64>], scenarios: &[Scenario]) -> f64 {
    let (sum, weight) = column
        .iter()
        .zip(scenarios)
        .filter_map(|(v, s)| v.map(|v| (v * s.weight, s.weight)))
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    if weight > 0.0 {
        sum / weight
    } else {
        f64::NAN
    }
}

/// JSON-friendly dump of one evaluated ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleDump {
    pub problem: String,
    pub objective_names: Vec<String>,
    pub violation_names: Vec<String>,
    pub evaluation: EnsembleEvaluation,
}

impl RobustProblem {
    pub fn dump(&self, evaluation: EnsembleEvaluation) -> EnsembleDump {
        EnsembleDump {
            problem: self.name.clone(),
            objective_names: self.objectives.iter().map(|o| o.name.clone()).collect(),
            violation_names: self.violation_names(),
            evaluation,
        }
    }
}
