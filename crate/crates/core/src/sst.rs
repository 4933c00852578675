//! Landing of a supersonic transport in the longitudinal plane: equations
//! of motion, air data under a constant horizontal wind, the elevator
//! schedule encoding, and the deterministic and robust problem definitions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aero::{aero_forces, AeroSource, Geometry};
use crate::ensemble::{Objective, RobustProblem, Sense, StatPathConstraint, TerminalStdConstraint, TrajectoryModel};
use crate::error::{Error, Result};
use crate::odesim::{Guard, GuardViolation, Propagator, Touchdown, Trajectory};
use crate::pce::{tensor_grid, Scenario, UncertaintySpec};

pub const SPEED_OF_SOUND: f64 = 340.29;
pub const AIR_DENSITY: f64 = 1.2;
pub const STATE_NAMES: [&str; 6] = ["x", "z", "u", "w", "theta", "q"];

const X: usize = 0;
const Z: usize = 1;
const U: usize = 2;
const W: usize = 3;
const THETA: usize = 4;
const Q: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Vehicle {
    pub mass: f64,
    pub inertia: f64,
    pub gravity: f64,
    pub geometry: Geometry,
}

impl Default for Vehicle {
    fn default() -> Self {
        Self { mass: 150_000.0, inertia: 1.5e7, gravity: 9.81, geometry: Geometry::default() }
    }
}

/// Which longitudinal equations of motion to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EomMode {
    /// Body forces applied directly to the inertial velocity components, with
    /// the coupling terms `-q·w`, `-q·u` and a `-q` pitch damping term.
    #[default]
    Verbatim,
    /// Body forces rotated into the inertial frame, no extra damping.
    Textbook,
}

/// Case-study parameters. Angles are in degrees unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SstConfig {
    pub vehicle: Vehicle,
    pub eom: EomMode,
    pub dt: f64,
    pub t_max: f64,
    pub control_interval: f64,
    pub initial_state: [f64; 6],
    pub de0_range: (f64, f64),
    pub de_bounds: (f64, f64),
    /// Largest elevator change per control interval.
    pub de_step: f64,
    pub mach_bounds: (f64, f64),
    pub alpha_bounds: (f64, f64),
    pub wind_bounds: (f64, f64),
    pub std_mach_max: f64,
    pub std_alpha_max: f64,
}

impl Default for SstConfig {
    fn default() -> Self {
        Self {
            vehicle: Vehicle::default(),
            eom: EomMode::Verbatim,
            dt: 0.1,
            t_max: 240.0,
            control_interval: 0.5,
            initial_state: [0.0, 1000.0, 120.0, 0.0, 0.0, 0.0],
            de0_range: (-35.9, -15.9),
            de_bounds: (-50.0, 10.0),
            de_step: 1.0,
            mach_bounds: (0.1, 0.5),
            alpha_bounds: (-5.0, 21.0),
            wind_bounds: (-5.0, 5.0),
            std_mach_max: 0.2,
            std_alpha_max: 4.0,
        }
    }
}

impl SstConfig {
    /// Number of control intervals in the horizon.
    pub fn horizon(&self) -> usize {
        (self.t_max / self.control_interval).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: key.into(), reason: reason.into() });
        if !(self.control_interval > 0.0) {
            return bad("sst.control_interval", "must be positive");
        }
        if !(self.de0_range.0 <= self.de0_range.1) || !(self.de_bounds.0 <= self.de_bounds.1) {
            return bad("sst.de0_range", "ranges must be ordered");
        }
        if self.de0_range.0 < self.de_bounds.0 || self.de0_range.1 > self.de_bounds.1 {
            return bad("sst.de0_range", "must lie within de_bounds");
        }
        if !(self.de_step >= 0.0) {
            return bad("sst.de_step", "must be non-negative");
        }
        if !(self.vehicle.mass > 0.0 && self.vehicle.inertia > 0.0) {
            return bad("sst.vehicle", "mass and inertia must be positive");
        }
        if !(self.initial_state[Z] > 0.0) {
            return bad("sst.initial_state", "initial altitude must be positive");
        }
        Propagator::new(self.dt, self.t_max, TOUCHDOWN).map(|_| ())
    }
}

const TOUCHDOWN: Touchdown = Touchdown { altitude: Z, downrange: X };

/// Air-relative quantities; `alpha` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirData {
    pub mach: f64,
    pub alpha: f64,
    pub q_dyn: f64,
    pub v_air: f64,
}

/// Air data with a horizontal wind `wind` (positive along +x, so negative
/// values are headwinds). `alpha` is positive when the relative wind comes
/// from below the nose.
pub fn airdata(state: &[f64], wind: f64) -> AirData {
    let (s, c) = state[THETA].sin_cos();
    let ua = state[U] - wind;
    let w = state[W];
    let u_b = ua * c + w * s;
    let w_b = -ua * s + w * c;
    let v_air = u_b.hypot(w_b);
    let alpha = if v_air == 0.0 { 0.0 } else { (-w_b).atan2(u_b) };
    AirData { mach: v_air / SPEED_OF_SOUND, alpha, q_dyn: 0.5 * AIR_DENSITY * v_air * v_air, v_air }
}

/// Piecewise-constant elevator deflections, one per control interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevatorSchedule {
    pub interval: f64,
    pub values: Vec<f64>,
}

impl ElevatorSchedule {
    pub fn at(&self, t: f64) -> f64 {
        let k = (t / self.interval + 1e-9).floor().max(0.0) as usize;
        self.values[k.min(self.values.len() - 1)]
    }
}

pub struct SstModel {
    pub config: SstConfig,
    pub aero: Arc<dyn AeroSource>,
    propagator: Propagator,
}

impl SstModel {
    pub fn new(config: SstConfig, aero: Arc<dyn AeroSource>) -> Result<Self> {
        config.validate()?;
        let propagator = Propagator::new(config.dt, config.t_max, TOUCHDOWN)?;
        Ok(Self { config, aero, propagator })
    }

    pub fn n_genes(&self) -> usize {
        self.config.horizon() + 1
    }

    /// Gene 0 sets the initial deflection; each further gene sets the change
    /// over one interval, and the running value is clipped to its bounds.
    pub fn decode(&self, genes: &[f64]) -> ElevatorSchedule {
        let c = &self.config;
        let (lo, hi) = c.de_bounds;
        let mut values = Vec::with_capacity(genes.len());
        let g0 = genes.first().copied().unwrap_or(0.5).clamp(0.0, 1.0);
        let mut de = c.de0_range.0 * (1.0 - g0) + c.de0_range.1 * g0;
        values.push(de);
        for &g in genes.iter().skip(1) {
            let step = (2.0 * g.clamp(0.0, 1.0) - 1.0) * c.de_step;
            de = (de + step).clamp(lo, hi);
            values.push(de);
        }
        ElevatorSchedule { interval: c.control_interval, values }
    }

    /// Inverse of `decode` for schedules that respect the bounds and rate.
    pub fn encode(&self, schedule: &ElevatorSchedule) -> Vec<f64> {
        let c = &self.config;
        let mut genes = Vec::with_capacity(schedule.values.len());
        let span = c.de0_range.1 - c.de0_range.0;
        genes.push(if span > 0.0 { (schedule.values[0] - c.de0_range.0) / span } else { 0.5 });
        for w in schedule.values.windows(2) {
            let g = if c.de_step > 0.0 { 0.5 * ((w[1] - w[0]) / c.de_step + 1.0) } else { 0.5 };
            genes.push(g.clamp(0.0, 1.0));
        }
        genes
    }

    pub fn derivative(&self, s: &[f64; 6], de_deg: f64, wind: f64) -> [f64; 6] {
        let v = &self.config.vehicle;
        let ad = airdata(s, wind);
        let f = aero_forces(&*self.aero, &v.geometry, ad.mach, ad.alpha.to_degrees(), de_deg, ad.q_dyn);
        // coefficients are body z-down; the equations use the upward normal force
        let z_up = -f.z;
        let (sin_t, cos_t) = s[THETA].sin_cos();
        let g = v.gravity;
        let m = v.mass;
        match self.config.eom {
            EomMode::Verbatim => [
                s[U],
                s[W],
                f.x / m - g * sin_t - s[Q] * s[W],
                z_up / m - g * cos_t - s[Q] * s[U],
                s[Q],
                f.m / v.inertia - s[Q],
            ],
            EomMode::Textbook => [
                s[U],
                s[W],
                (f.x * cos_t - z_up * sin_t) / m,
                (f.x * sin_t + z_up * cos_t) / m - g,
                s[Q],
                f.m / v.inertia,
            ],
        }
    }

    fn guards(&self, wind: f64) -> Vec<Guard<'static, 6>> {
        let (m_lo, m_hi) = self.config.mach_bounds;
        let (a_lo, a_hi) = self.config.alpha_bounds;
        vec![Box::new(move |_, s: &[f64; 6], _| {
            let ad = airdata(s, wind);
            let alpha = ad.alpha.to_degrees();
            let mach_excess = range_excess(ad.mach, m_lo, m_hi);
            let alpha_excess = range_excess(alpha, a_lo, a_hi);
            if mach_excess > 0.0 || mach_excess.is_nan() {
                Some(GuardViolation { guard: "mach".into(), excess: mach_excess })
            } else if alpha_excess > 0.0 || alpha_excess.is_nan() {
                Some(GuardViolation { guard: "alpha".into(), excess: alpha_excess })
            } else {
                None
            }
        })]
    }

    pub fn simulate_schedule(&self, schedule: &ElevatorSchedule, wind: f64) -> Trajectory {
        let guards = self.guards(wind);
        self.propagator.propagate(
            |_, s, de| self.derivative(s, de, wind),
            self.config.initial_state,
            |t| schedule.at(t),
            &guards,
        )
    }

    /// Mach number and angle of attack (degrees) along a trajectory.
    pub fn path_series(&self, traj: &Trajectory, wind: f64) -> (Vec<f64>, Vec<f64>) {
        (0..traj.len())
            .map(|i| {
                let ad = airdata(traj.state(i), wind);
                (ad.mach, ad.alpha.to_degrees())
            })
            .unzip()
    }
}

/// Excess beyond `[lo, hi]`, normalized by the magnitude of the bound crossed.
fn range_excess(v: f64, lo: f64, hi: f64) -> f64 {
    let scale = |b: f64| if b == 0.0 { 1.0 } else { b.abs() };
    if v > hi {
        (v - hi) / scale(hi)
    } else if v < lo {
        (lo - v) / scale(lo)
    } else if v.is_nan() {
        f64::NAN
    } else {
        0.0
    }
}

fn wind_of(s: &Scenario) -> f64 {
    s.values.first().copied().unwrap_or(0.0)
}

impl TrajectoryModel for SstModel {
    fn n_genes(&self) -> usize {
        SstModel::n_genes(self)
    }

    fn simulate(&self, genes: &[f64], scenario: &Scenario) -> Trajectory {
        self.simulate_schedule(&self.decode(genes), wind_of(scenario))
    }

    fn observable_names(&self) -> Vec<String> {
        vec!["mach".into(), "alpha_deg".into()]
    }

    fn observables(&self, traj: &Trajectory, scenario: &Scenario) -> Vec<Vec<f64>> {
        let (m, a) = self.path_series(traj, wind_of(scenario));
        vec![m, a]
    }

    fn remaining_fraction(&self, traj: &Trajectory) -> f64 {
        (traj.last_state()[Z] / self.config.initial_state[Z]).max(0.0)
    }
}

fn objectives() -> Vec<Objective> {
    vec![
        Objective::new("t_f", Sense::Maximize, |t| t.terminal.map(|x| x.t_f)),
        Objective::new("x_f", Sense::Maximize, |t| t.terminal.map(|x| x.x_f)),
    ]
}

/// Single nominal trajectory with no wind and no statistical constraints.
pub fn deterministic_problem(model: Arc<SstModel>) -> Result<RobustProblem> {
    let scenarios = tensor_grid(&UncertaintySpec::uniform(vec![(0.0, 0.0)], 1, 0)?)?;
    Ok(RobustProblem {
        name: "deterministic".into(),
        model,
        scenarios,
        objectives: objectives(),
        stat_path: vec![],
        terminal_std: vec![],
    })
}

/// Ensemble problem over the wind distribution with terminal standard
/// deviation bounds `sigma1` (time) and `sigma2` (downrange).
pub fn robust_problem(model: Arc<SstModel>, sigma1: f64, sigma2: f64, uncertainty: &UncertaintySpec) -> Result<RobustProblem> {
    if !(sigma1 >= 0.0 && sigma2 >= 0.0) {
        return Err(Error::Config { key: "sigma".into(), reason: "bounds must be non-negative".into() });
    }
    let scenarios = tensor_grid(uncertainty)?;
    let c = &model.config;
    let stat_path = vec![
        StatPathConstraint { name: "std_mach".into(), observable: 0, mean_bounds: None, std_max: Some(c.std_mach_max) },
        StatPathConstraint { name: "std_alpha".into(), observable: 1, mean_bounds: None, std_max: Some(c.std_alpha_max) },
    ];
    Ok(RobustProblem {
        name: format!("robust_s1_{sigma1}_s2_{sigma2}"),
        model,
        scenarios,
        objectives: objectives(),
        stat_path,
        terminal_std: vec![
            TerminalStdConstraint { name: "std_t_f".into(), objective: 0, bound: sigma1 },
            TerminalStdConstraint { name: "std_x_f".into(), objective: 1, bound: sigma2 },
        ],
    })
}

/// The wind distribution with the default quadrature settings.
pub fn wind_uncertainty(config: &SstConfig, quad_points: usize, order: usize) -> Result<UncertaintySpec> {
    UncertaintySpec::uniform(vec![config.wind_bounds], quad_points, order)
}
