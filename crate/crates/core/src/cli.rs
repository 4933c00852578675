//! Experiment runner: run configuration, study modes, artifact writing and
//! plot-data export.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aero::{AeroModelSet, DeltaWingModel};
use crate::ensemble::{EnsembleEvaluation, RobustProblem};
use crate::error::{Error, Result};
use crate::fmt::{csv_row, sig9};
use crate::mc::{run_mc, McReport};
use crate::moea::{evolve_with, GaConfig, GenerationStats, Individual};
use crate::pce::Moments;
use crate::sst::{deterministic_problem, robust_problem, wind_uncertainty, ElevatorSchedule, SstConfig, SstModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Deterministic,
    Robust,
    Mc,
    Sensitivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSection {
    pub pop_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_c: f64,
    pub crossover_per_variable: f64,
    pub mutation_prob: Option<f64>,
    pub eta_m: f64,
}

impl Default for GaSection {
    fn default() -> Self {
        let g = GaConfig::default();
        Self {
            pop_size: g.pop_size,
            generations: g.generations,
            crossover_prob: g.crossover_prob,
            eta_c: g.eta_c,
            crossover_per_variable: g.crossover_per_variable,
            mutation_prob: g.mutation_prob,
            eta_m: g.eta_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PceSection {
    pub quad_points: usize,
    pub order: usize,
}

impl Default for PceSection {
    fn default() -> Self {
        Self { quad_points: 6, order: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustSection {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for RobustSection {
    fn default() -> Self {
        Self { sigma1: 3.0, sigma2: 150.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    pub sigma1_levels: Vec<f64>,
    pub sigma2_levels: Vec<f64>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self { sigma1_levels: vec![1.0, 3.0, 5.0], sigma2_levels: vec![100.0, 150.0, 200.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypervolumeSection {
    /// Reference point in natural units: `[t_f seconds, x_f metres]`.
    pub reference: [f64; 2],
}

impl Default for HypervolumeSection {
    fn default() -> Self {
        Self { reference: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    /// Samples per representative; 0 disables validation after robust runs.
    pub samples: usize,
    pub seed: u64,
    /// Completed run directory validated in `mc` mode.
    pub run_dir: Option<PathBuf>,
}

impl Default for McSection {
    fn default() -> Self {
        Self { samples: 1000, seed: 2024, run_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroSection {
    /// Optional surrogate cache; refitted and rewritten when stale.
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub ga: GaSection,
    pub pce: PceSection,
    pub robust: RobustSection,
    pub sensitivity: SensitivitySection,
    pub hypervolume: HypervolumeSection,
    pub mc: McSection,
    pub aero: AeroSection,
    pub sst: SstConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sensitivity,
            seed: 1,
            output_dir: PathBuf::from("runs/study"),
            ga: GaSection::default(),
            pce: PceSection::default(),
            robust: RobustSection::default(),
            sensitivity: SensitivitySection::default(),
            hypervolume: HypervolumeSection::default(),
            mc: McSection::default(),
            aero: AeroSection::default(),
            sst: SstConfig::default(),
        }
    }
}

fn config_error(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.into(), reason: reason.into() }
}

impl RunConfig {
    /// Parses a TOML run configuration, or the `config` entry of a run's
    /// `metadata.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let meta: serde_json::Value = serde_json::from_str(&text)?;
            let cfg = meta
                .get("config")
                .ok_or_else(|| config_error("config", "metadata has no `config` entry"))?;
            return Ok(serde_json::from_value(cfg.clone())?);
        }
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let reason = e.message().to_string();
            let key = reason
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".to_string());
            config_error(&key, reason)
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            pop_size: self.ga.pop_size,
            generations: self.ga.generations,
            crossover_prob: self.ga.crossover_prob,
            eta_c: self.ga.eta_c,
            crossover_per_variable: self.ga.crossover_per_variable,
            mutation_prob: self.ga.mutation_prob,
            eta_m: self.ga.eta_m,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ga_config().validate().map_err(|e| config_error("ga", e.to_string()))?;
        self.sst.validate()?;
        wind_uncertainty(&self.sst, self.pce.quad_points, self.pce.order)
            .map_err(|e| config_error("pce", e.to_string()))?;
        let sigma_ok = |v: f64| v.is_finite() && v >= 0.0;
        if !sigma_ok(self.robust.sigma1) {
            return Err(config_error("robust.sigma1", "must be finite and non-negative"));
        }
        if !sigma_ok(self.robust.sigma2) {
            return Err(config_error("robust.sigma2", "must be finite and non-negative"));
        }
        if self.mode == Mode::Sensitivity {
            if self.sensitivity.sigma1_levels.is_empty() || !self.sensitivity.sigma1_levels.iter().all(|&v| sigma_ok(v)) {
                return Err(config_error("sensitivity.sigma1_levels", "need non-negative levels"));
            }
            if self.sensitivity.sigma2_levels.is_empty() || !self.sensitivity.sigma2_levels.iter().all(|&v| sigma_ok(v)) {
                return Err(config_error("sensitivity.sigma2_levels", "need non-negative levels"));
            }
        }
        if !self.hypervolume.reference.iter().all(|v| v.is_finite()) {
            return Err(config_error("hypervolume.reference", "must be finite"));
        }
        if self.mode == Mode::Mc {
            if self.mc.run_dir.is_none() {
                return Err(config_error("mc.run_dir", "required in mc mode"));
            }
            if self.mc.samples < 2 {
                return Err(config_error("mc.samples", "need at least 2 samples in mc mode"));
            }
        }
        if self.mc.samples == 1 {
            return Err(config_error("mc.samples", "use 0 to disable or at least 2"));
        }
        Ok(())
    }
}

/// One optimization case of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Case {
    Deterministic,
    Robust { sigma1: f64, sigma2: f64 },
}

impl Case {
    pub fn mode(&self) -> Mode {
        match self {
            Case::Deterministic => Mode::Deterministic,
            Case::Robust { .. } => Mode::Robust,
        }
    }
}

/// Summary of one representative solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub label: String,
    pub archive_index: usize,
    pub t_f_mean: f64,
    pub x_f_mean: f64,
    /// Ensemble (PCE) standard deviations; absent if a member failed.
    pub t_f_std: Option<f64>,
    pub x_f_std: Option<f64>,
    pub mc: Option<McSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub samples: usize,
    pub landed: usize,
    pub t_f: Option<Moments>,
    pub x_f: Option<Moments>,
    pub t_f_within_bound: Option<bool>,
    pub x_f_within_bound: Option<bool>,
    /// |σ_pce - σ_mc| / σ_mc for each objective.
    pub t_f_std_relative_difference: Option<f64>,
    pub x_f_std_relative_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub name: String,
    pub case: Case,
    pub archive_size: usize,
    pub hypervolume: f64,
    pub reference: [f64; 2],
    pub evaluations: usize,
    pub representatives: Vec<Representative>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub mode: Mode,
    pub reference: [f64; 2],
    pub aero_hash: String,
    pub cases: Vec<CaseSummary>,
}

/// Fails if `dir` exists and is not empty, unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !force {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Shared state of a study: the configuration, fitted surrogate and model.
pub struct Context {
    pub config: RunConfig,
    pub aero: Arc<AeroModelSet>,
    pub aero_hash: String,
    pub model: Arc<SstModel>,
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let truth = DeltaWingModel::default();
        let aero = match &config.aero.cache {
            Some(path) => AeroModelSet::load_or_fit(path, &truth)?,
            None => AeroModelSet::fit_default(&truth)?,
        };
        let aero_hash = aero.content_hash()?;
        let aero = Arc::new(aero);
        let model = Arc::new(SstModel::new(config.sst.clone(), aero.clone())?);
        Ok(Self { config, aero, aero_hash, model })
    }

    pub fn problem(&self, case: Case) -> Result<RobustProblem> {
        match case {
            Case::Deterministic => deterministic_problem(self.model.clone()),
            Case::Robust { sigma1, sigma2 } => {
                let u = wind_uncertainty(&self.config.sst, self.config.pce.quad_points, self.config.pce.order)?;
                robust_problem(self.model.clone(), sigma1, sigma2, &u)
            }
        }
    }

    /// Configuration that reruns exactly one case.
    pub fn case_config(&self, case: Case, dir: &Path) -> RunConfig {
        let mut c = self.config.clone();
        c.mode = case.mode();
        c.output_dir = dir.to_path_buf();
        if let Case::Robust { sigma1, sigma2 } = case {
            c.robust = RobustSection { sigma1, sigma2 };
        }
        c
    }

    fn reference_internal(&self, problem: &RobustProblem) -> [f64; 2] {
        let r = self.config.hypervolume.reference;
        [problem.objectives[0].internal(r[0]), problem.objectives[1].internal(r[1])]
    }

    /// Optimizes one case and writes its artifacts into `dir`.
    pub fn run_case(&self, name: &str, case: Case, dir: &Path) -> Result<CaseSummary> {
        fs::create_dir_all(dir)?;
        let problem = self.problem(case)?;
        let reference = self.reference_internal(&problem);
        let ga = self.config.ga_config();
        log::info!("{name}: {} generations of {} individuals, {} scenarios", ga.generations, ga.pop_size, problem.scenarios.len());
        let result = evolve_with(&problem, &ga, Some(reference), |s: &GenerationStats| {
            if s.generation % 50 == 0 {
                log::info!("{name}: generation {} archive {} hypervolume {}", s.generation, s.archive_size, sig9(s.archive_hypervolume));
            }
        })?;
        let archive = result.archive.sorted();
        write_archive_csv(&dir.join("archive.csv"), &problem, &self.model, &archive)?;
        write_history_csv(&dir.join("history.csv"), &result.history)?;

        let sigma = match case {
            Case::Robust { sigma1, sigma2 } => Some((sigma1, sigma2)),
            Case::Deterministic => None,
        };
        let mut representatives = Vec::new();
        for (label, objective) in [("max_t_f", 0usize), ("max_x_f", 1usize)] {
            let Some(index) = best_index(&archive, objective) else { continue };
            let genes = &archive[index].genes;
            let schedule = self.model.decode(genes);
            write_control_csv(&dir.join(format!("{label}_control.csv")), &schedule)?;
            let eval = problem.evaluate(genes);
            write_json(&dir.join(format!("{label}_ensemble.json")), &problem.dump(eval.clone()))?;
            let mc = match sigma {
                Some(bounds) if self.config.mc.samples >= 2 => {
                    let report = run_mc(&self.model, &schedule, self.config.mc.samples, self.config.mc.seed, self.config.sst.wind_bounds, Some(bounds))?;
                    write_mc(dir, label, &report)?;
                    Some(mc_summary(&report, &eval))
                }
                _ => None,
            };
            representatives.push(representative(label, index, &eval, mc));
        }

        let hypervolume = result.archive.hypervolume(reference);
        let summary = CaseSummary {
            name: name.to_string(),
            case,
            archive_size: archive.len(),
            hypervolume,
            reference: self.config.hypervolume.reference,
            evaluations: result.evaluations,
            representatives,
        };
        write_json(&dir.join("summary.json"), &summary)?;
        let case_config = self.case_config(case, dir);
        fs::write(dir.join("config.toml"), case_config.to_toml())?;
        write_json(&dir.join("metadata.json"), &self.metadata(&case_config, &problem, Some(case)))?;
        log::info!("{name}: archive {} hypervolume {}", summary.archive_size, sig9(hypervolume));
        Ok(summary)
    }

    fn metadata(&self, config: &RunConfig, problem: &RobustProblem, case: Option<Case>) -> serde_json::Value {
        serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "case": case,
            "problem": problem.name,
            "objectives": problem.objectives.iter().map(|o| serde_json::json!({"name": o.name, "sense": o.sense})).collect::<Vec<_>>(),
            "violations": problem.violation_names(),
            "scenarios": problem.scenarios.scenarios.iter().map(|s| serde_json::json!({"values": s.values, "weight": s.weight})).collect::<Vec<_>>(),
            "n_genes": problem.n_genes(),
            "hypervolume_reference": config.hypervolume.reference,
            "aero_hash": self.aero_hash,
            "config": config,
        })
    }
}

fn best_index(archive: &[Individual], objective: usize) -> Option<usize> {
    // objectives are maximized, so the best has the smallest internal value
    (0..archive.len()).min_by(|&a, &b| archive[a].objectives[objective].total_cmp(&archive[b].objectives[objective]).then(a.cmp(&b)))
}

fn representative(label: &str, index: usize, eval: &EnsembleEvaluation, mc: Option<McSummary>) -> Representative {
    Representative {
        label: label.to_string(),
        archive_index: index,
        t_f_mean: -eval.objectives[0],
        x_f_mean: -eval.objectives[1],
        t_f_std: eval.terminal_moments[0].map(|m| m.std),
        x_f_std: eval.terminal_moments[1].map(|m| m.std),
        mc,
    }
}

fn relative_difference(pce: Option<f64>, mc: Option<Moments>) -> Option<f64> {
    let (p, m) = (pce?, mc?.std);
    if m > 0.0 {
        Some((p - m).abs() / m)
    } else if p == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

fn mc_summary(report: &McReport, eval: &EnsembleEvaluation) -> McSummary {
    McSummary {
        samples: report.n_samples,
        landed: report.landed,
        t_f: report.t_f,
        x_f: report.x_f,
        t_f_within_bound: report.t_f_within_bound,
        x_f_within_bound: report.x_f_within_bound,
        t_f_std_relative_difference: relative_difference(eval.terminal_moments[0].map(|m| m.std), report.t_f),
        x_f_std_relative_difference: relative_difference(eval.terminal_moments[1].map(|m| m.std), report.x_f),
    }
}

fn write_mc(dir: &Path, label: &str, report: &McReport) -> Result<()> {
    let mut slim = report.clone();
    slim.samples.clear();
    write_json(&dir.join(format!("{label}_mc.json")), &slim)?;
    let mut buf = Vec::new();
    report.write_samples_csv(&mut buf)?;
    fs::write(dir.join(format!("{label}_mc_samples.csv")), buf)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_archive_csv(path: &Path, problem: &RobustProblem, model: &SstModel, archive: &[Individual]) -> Result<()> {
    let mut header = vec!["index".to_string()];
    header.extend(problem.objectives.iter().map(|o| o.name.clone()));
    header.extend(problem.violation_names());
    header.extend((0..problem.n_genes()).map(|k| format!("de_{k}")));
    let mut out = csv_row(&header);
    for (i, ind) in archive.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(problem.objectives.iter().zip(&ind.objectives).map(|(o, &v)| sig9(o.natural(v))));
        row.extend(ind.violations.iter().map(|&v| sig9(v)));
        row.extend(model.decode(&ind.genes).values.iter().map(|&v| sig9(v)));
        out.push_str(&csv_row(&row));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_history_csv(path: &Path, history: &[GenerationStats]) -> Result<()> {
    let mut out = csv_row(["generation", "archive_size", "archive_hypervolume", "min_violation", "mean_violation", "feasible"]);
    for h in history {
        out.push_str(&csv_row([
            h.generation.to_string(),
            h.archive_size.to_string(),
            sig9(h.archive_hypervolume),
            sig9(h.min_violation),
            sig9(h.mean_violation),
            h.feasible.to_string(),
        ]));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_control_csv(path: &Path, schedule: &ElevatorSchedule) -> Result<()> {
    let mut out = csv_row(["interval", "t", "de_deg"]);
    for (k, &v) in schedule.values.iter().enumerate() {
        out.push_str(&csv_row([k.to_string(), sig9(k as f64 * schedule.interval), sig9(v)]));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a control CSV written by a run.
pub fn read_control_csv(path: &Path, interval: f64) -> Result<ElevatorSchedule> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.to_path_buf()))?;
    let mut values = Vec::new();
    for line in text.lines().skip(1) {
        let v = line
            .split(',')
            .nth(2)
            .and_then(|f| f.parse::<f64>().ok())
            .ok_or_else(|| Error::Artifact { path: path.to_path_buf(), reason: format!("bad row `{line}`") })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Artifact { path: path.to_path_buf(), reason: "no control values".into() });
    }
    Ok(ElevatorSchedule { interval, values })
}

/// Directory name of a sensitivity case, e.g. `sigma1_3.0`.
pub fn level_dir(prefix: &str, value: f64) -> String {
    format!("{prefix}_{value:.1}")
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            fs::copy(entry.path(), to.join(entry.file_name()))?;
        }
    }
    Ok(())
}

/// Executes the configured study.
pub fn run(config: RunConfig, force: bool) -> Result<StudySummary> {
    let out = config.output_dir.clone();
    config.validate()?;
    prepare_output_dir(&out, force)?;
    let ctx = Context::new(config)?;
    if ctx.config.aero.cache.is_none() {
        ctx.aero.save(&out.join("aero_model.json"))?;
    }
    let cfg = &ctx.config;
    let mut cases = Vec::new();
    match cfg.mode {
        Mode::Deterministic => cases.push(ctx.run_case("deterministic", Case::Deterministic, &out)?),
        Mode::Robust => {
            let case = Case::Robust { sigma1: cfg.robust.sigma1, sigma2: cfg.robust.sigma2 };
            cases.push(ctx.run_case("robust", case, &out)?);
        }
        Mode::Mc => {
            let dir = cfg.mc.run_dir.clone().expect("validated");
            cases.extend(validate_run(&ctx, &dir, &out)?);
        }
        Mode::Sensitivity => {
            let (base1, base2) = (cfg.robust.sigma1, cfg.robust.sigma2);
            cases.push(ctx.run_case("deterministic", Case::Deterministic, &out.join("deterministic"))?);
            let mut done: Vec<((f64, f64), PathBuf, CaseSummary)> = Vec::new();
            let plan: Vec<(String, f64, f64)> = cfg
                .sensitivity
                .sigma1_levels
                .iter()
                .map(|&s1| (level_dir("sigma1", s1), s1, base2))
                .chain(cfg.sensitivity.sigma2_levels.iter().map(|&s2| (level_dir("sigma2", s2), base1, s2)))
                .collect();
            for (name, s1, s2) in plan {
                let dir = out.join(&name);
                let summary = match done.iter().find(|(k, _, _)| *k == (s1, s2)) {
                    Some((_, from, prev)) => {
                        log::info!("{name}: same bounds as {}, reusing its results", from.display());
                        copy_dir(from, &dir)?;
                        let mut s = prev.clone();
                        s.name = name.clone();
                        write_json(&dir.join("summary.json"), &s)?;
                        s
                    }
                    None => {
                        let s = ctx.run_case(&name, Case::Robust { sigma1: s1, sigma2: s2 }, &dir)?;
                        done.push(((s1, s2), dir.clone(), s.clone()));
                        s
                    }
                };
                cases.push(summary);
            }
        }
    }
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    let study = StudySummary { mode: cfg.mode, reference: cfg.hypervolume.reference, aero_hash: ctx.aero_hash.clone(), cases };
    if cfg.mode == Mode::Sensitivity || cfg.mode == Mode::Mc {
        write_json(&out.join("summary.json"), &study)?;
        let meta = serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "aero_hash": ctx.aero_hash,
            "config": cfg,
        });
        write_json(&out.join("metadata.json"), &meta)?;
    }
    Ok(study)
}

/// Case directories under `root` (itself, or its immediate subdirectories)
/// that contain an archive.
pub fn case_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join("archive.csv").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    if !root.is_dir() {
        return Err(Error::MissingArtifact(root.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("archive.csv").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingArtifact(root.join("archive.csv")));
    }
    Ok(dirs)
}

fn read_case_summary(dir: &Path) -> Result<CaseSummary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|_| Error::MissingArtifact(path.clone()))?;
    serde_json::from_str(&text).map_err(|e| Error::Artifact { path, reason: e.to_string() })
}

/// Monte Carlo validation of the representatives of every case in `run_dir`.
fn validate_run(ctx: &Context, run_dir: &Path, out: &Path) -> Result<Vec<CaseSummary>> {
    let mut summaries = Vec::new();
    for dir in case_dirs(run_dir)? {
        let mut summary = read_case_summary(&dir)?;
        let case_name = dir.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
        let target = out.join(&case_name);
        fs::create_dir_all(&target)?;
        let bounds = match summary.case {
            Case::Robust { sigma1, sigma2 } => Some((sigma1, sigma2)),
            Case::Deterministic => None,
        };
        let problem = ctx.problem(summary.case)?;
        for rep in &mut summary.representatives {
            let schedule = read_control_csv(&dir.join(format!("{}_control.csv", rep.label)), ctx.config.sst.control_interval)?;
            let report = run_mc(&ctx.model, &schedule, ctx.config.mc.samples, ctx.config.mc.seed, ctx.config.sst.wind_bounds, bounds)?;
            write_mc(&target, &rep.label, &report)?;
            let trajectories: Vec<_> = problem
                .scenarios
                .scenarios
                .iter()
                .map(|s| ctx.model.simulate_schedule(&schedule, s.values[0]))
                .collect();
            let eval = problem.evaluate_trajectories(&trajectories);
            rep.mc = Some(mc_summary(&report, &eval));
        }
        write_json(&target.join("summary.json"), &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Writes plot-ready CSVs for every case of a completed run into
/// `<case>/plots/`: the objective-space scatter of the archive and, for
/// each representative, altitude histories of the nominal trajectory, the
/// ensemble members and the extreme head- and tailwind cases.
pub fn export_plot_data(run_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for dir in case_dirs(run_dir)? {
        let config = RunConfig::load(&dir.join("config.toml")).map_err(|_| Error::MissingArtifact(dir.join("config.toml")))?;
        let summary = read_case_summary(&dir)?;
        let plots = dir.join("plots");
        prepare_output_dir(&plots, force)?;

        let archive = fs::read_to_string(dir.join("archive.csv"))?;
        let mut scatter = csv_row(["t_f", "x_f"]);
        for line in archive.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 3 {
                return Err(Error::Artifact { path: dir.join("archive.csv"), reason: format!("bad row `{line}`") });
            }
            scatter.push_str(&csv_row([f[1], f[2]]));
        }
        let path = plots.join("scatter.csv");
        fs::write(&path, scatter)?;
        written.push(path);

        if summary.representatives.is_empty() {
            continue;
        }
        let ctx = Context::new(config)?;
        let problem = ctx.problem(summary.case)?;
        let (head, tail) = ctx.config.sst.wind_bounds;
        for rep in &summary.representatives {
            let schedule = read_control_csv(&dir.join(format!("{}_control.csv", rep.label)), ctx.config.sst.control_interval)?;
            let mut curves: Vec<(String, f64)> = vec![("nominal".into(), 0.0)];
            curves.extend(problem.scenarios.scenarios.iter().map(|s| (format!("member_{}", s.index), s.values[0])));
            curves.push(("headwind".into(), head));
            curves.push(("tailwind".into(), tail));
            let mut out = csv_row(["curve", "xi", "t", "x", "z"]);
            for (name, wind) in curves {
                let traj = ctx.model.simulate_schedule(&schedule, wind);
                for i in 0..traj.len() {
                    let s = traj.state(i);
                    out.push_str(&csv_row([name.clone(), sig9(wind), sig9(traj.times[i]), sig9(s[0]), sig9(s[1])]));
                }
            }
            let path = plots.join(format!("altitude_{}.csv", rep.label));
            fs::write(&path, out)?;
            written.push(path);
        }
    }
    Ok(written)
}
