//! Monte Carlo validation of a fixed elevator schedule under random wind.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::{csv_row, sig9};
use crate::pce::Moments;
use crate::sst::{ElevatorSchedule, SstModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub index: usize,
    pub wind: f64,
    pub status: String,
    pub t_f: Option<f64>,
    pub x_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_samples: usize,
    pub seed: u64,
    pub wind_bounds: (f64, f64),
    pub landed: usize,
    pub not_landed: usize,
    pub success_rate: f64,
    /// Population moments over landed samples; absent if none landed.
    pub t_f: Option<Moments>,
    pub x_f: Option<Moments>,
    pub sigma_bounds: Option<(f64, f64)>,
    pub t_f_within_bound: Option<bool>,
    pub x_f_within_bound: Option<bool>,
    pub total_failure: bool,
    pub samples: Vec<McSample>,
}

/// Wind value of sample `index`, drawn from its own stream of the master
/// seed so that results do not depend on scheduling.
pub fn sample_wind(seed: u64, index: usize, bounds: (f64, f64)) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    bounds.0 + (bounds.1 - bounds.0) * rng.gen::<f64>()
}

/// Mean and population standard deviation (divide by `n`).
pub fn population_moments(values: &[f64]) -> Option<Moments> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    // shifted by the first value, so identical samples give exactly zero spread
    let shift = values[0];
    let offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / n;
    Some(Moments { mean: shift + offset, std: var.sqrt() })
}

pub fn run_mc(
    model: &SstModel,
    schedule: &ElevatorSchedule,
    n: usize,
    seed: u64,
    wind_bounds: (f64, f64),
    sigma_bounds: Option<(f64, f64)>,
) -> Result<McReport> {
    if n < 2 {
        return Err(Error::Config { key: "mc.samples".into(), reason: format!("need at least 2 samples, got {n}") });
    }
    if !(wind_bounds.0 <= wind_bounds.1) {
        return Err(Error::Config { key: "mc.wind_bounds".into(), reason: "bounds must be ordered".into() });
    }
    let samples: Vec<McSample> = (0..n)
        .into_par_iter()
        .map(|i| {
            let wind = sample_wind(seed, i, wind_bounds);
            let traj = model.simulate_schedule(schedule, wind);
            McSample {
                index: i,
                wind,
                status: traj.status.label().to_string(),
                t_f: traj.terminal.map(|t| t.t_f),
                x_f: traj.terminal.map(|t| t.x_f),
            }
        })
        .collect();

    let t_f: Vec<f64> = samples.iter().filter_map(|s| s.t_f).collect();
    let x_f: Vec<f64> = samples.iter().filter_map(|s| s.x_f).collect();
    let landed = t_f.len();
    if landed < n {
        log::warn!("monte carlo: {} of {n} samples did not land and are excluded from the moments", n - landed);
    }
    let t_m = population_moments(&t_f);
    let x_m = population_moments(&x_f);
    Ok(McReport {
        n_samples: n,
        seed,
        wind_bounds,
        landed,
        not_landed: n - landed,
        success_rate: landed as f64 / n as f64,
        t_f: t_m,
        x_f: x_m,
        sigma_bounds,
        t_f_within_bound: sigma_bounds.zip(t_m).map(|((s1, _), m)| m.std <= s1),
        x_f_within_bound: sigma_bounds.zip(x_m).map(|((_, s2), m)| m.std <= s2),
        total_failure: landed == 0,
        samples,
    })
}

impl McReport {
    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(csv_row(["index", "xi", "status", "t_f", "x_f"]).as_bytes())?;
        for s in &self.samples {
            let opt = |v: Option<f64>| v.map_or_else(String::new, sig9);
            out.write_all(
                csv_row([s.index.to_string(), sig9(s.wind), s.status.clone(), opt(s.t_f), opt(s.x_f)]).as_bytes(),
            )?;
        }
        Ok(())
    }
}
