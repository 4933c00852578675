//! Aerodynamic database: an analytic ground-truth model, a Kriging surrogate
//! fitted on a tensor sample grid, and the force/moment assembly.

pub mod kriging;
pub mod truth;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub use kriging::{KrigingModel, KrigingSettings};
pub use truth::DeltaWingModel;

/// Names of the six surrogate outputs, in `AeroCoefficients` field order.
pub const OUTPUT_NAMES: [&str; 6] = ["cx0", "cz0", "cm0", "cx_de", "cz_de", "cm_de"];

/// Dimensionless base coefficients and per-degree elevator sensitivities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AeroCoefficients {
    pub cx0: f64,
    pub cz0: f64,
    pub cm0: f64,
    pub cx_de: f64,
    pub cz_de: f64,
    pub cm_de: f64,
}

impl AeroCoefficients {
    pub fn to_array(self) -> [f64; 6] {
        [self.cx0, self.cz0, self.cm0, self.cx_de, self.cz_de, self.cm_de]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self { cx0: v[0], cz0: v[1], cm0: v[2], cx_de: v[3], cz_de: v[4], cm_de: v[5] }
    }
}

/// Valid input box of the aerodynamic database.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeroDomain {
    pub mach: (f64, f64),
    pub alpha_deg: (f64, f64),
    pub de_deg: (f64, f64),
}

impl Default for AeroDomain {
    fn default() -> Self {
        Self { mach: (0.1, 0.5), alpha_deg: (-5.0, 21.0), de_deg: (-50.0, 10.0) }
    }
}

impl AeroDomain {
    pub fn contains(&self, mach: f64, alpha_deg: f64, de_deg: f64) -> bool {
        (self.mach.0..=self.mach.1).contains(&mach)
            && (self.alpha_deg.0..=self.alpha_deg.1).contains(&alpha_deg)
            && (self.de_deg.0..=self.de_deg.1).contains(&de_deg)
    }

    pub fn clamp(&self, mach: f64, alpha_deg: f64, de_deg: f64) -> (f64, f64, f64) {
        (
            mach.clamp(self.mach.0, self.mach.1),
            alpha_deg.clamp(self.alpha_deg.0, self.alpha_deg.1),
            de_deg.clamp(self.de_deg.0, self.de_deg.1),
        )
    }
}

/// Anything that yields the six coefficients at an operating point.
pub trait AeroSource: Send + Sync {
    fn coefficients(&self, mach: f64, alpha_deg: f64, de_deg: f64) -> AeroCoefficients;
}

/// Reference geometry used to dimensionalize coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub area: f64,
    pub chord: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { area: 358.0, chord: 27.4 }
    }
}

/// Axial force, normal force (body z down) and pitching moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroForces {
    pub x: f64,
    pub z: f64,
    pub m: f64,
}

/// Assembles `X = X₀ + Q·S·δe·C_Xδe` and likewise for `Z` and `M` (the
/// moment also scaled by the chord), with `X₀ = Q·S·C_X0` and so on.
pub fn aero_forces(source: &dyn AeroSource, geom: &Geometry, mach: f64, alpha_deg: f64, de_deg: f64, q: f64) -> AeroForces {
    let domain = AeroDomain::default();
    if !domain.contains(mach, alpha_deg, de_deg) {
        log::trace!("aero input clamped: Ma={mach} alpha={alpha_deg} de={de_deg}");
    }
    let (mach, alpha_deg, de_deg) = domain.clamp(mach, alpha_deg, de_deg);
    let c = source.coefficients(mach, alpha_deg, de_deg);
    forces_from_coefficients(&c, geom, de_deg, q)
}

pub fn forces_from_coefficients(c: &AeroCoefficients, geom: &Geometry, de_deg: f64, q: f64) -> AeroForces {
    let qs = q * geom.area;
    AeroForces {
        x: qs * c.cx0 + qs * de_deg * c.cx_de,
        z: qs * c.cz0 + qs * de_deg * c.cz_de,
        m: qs * geom.chord * c.cm0 + qs * geom.chord * de_deg * c.cm_de,
    }
}

/// Levels of the aerodynamic sample grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub mach: Vec<f64>,
    pub alpha_deg: Vec<f64>,
    pub de_deg: Vec<f64>,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self {
            mach: vec![0.1, 0.3, 0.5],
            alpha_deg: (0..14).map(|k| -5.0 + 2.0 * k as f64).collect(),
            de_deg: (0..13).map(|k| -50.0 + 5.0 * k as f64).collect(),
        }
    }
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.mach.len() * self.alpha_deg.len() * self.de_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major order (δe fastest).
    pub fn points(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.len());
        for &m in &self.mach {
            for &a in &self.alpha_deg {
                for &d in &self.de_deg {
                    out.push([m, a, d]);
                }
            }
        }
        out
    }
}

/// One training record: inputs and the six outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeroSample {
    pub mach: f64,
    pub alpha_deg: f64,
    pub de_deg: f64,
    pub outputs: AeroCoefficients,
}

pub fn sample_truth(source: &dyn AeroSource, grid: &SampleGrid) -> Vec<AeroSample> {
    grid.points()
        .into_iter()
        .map(|[m, a, d]| AeroSample { mach: m, alpha_deg: a, de_deg: d, outputs: source.coefficients(m, a, d) })
        .collect()
}

/// Six Kriging models, one per coefficient, over a shared sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeroModelSet {
    pub samples: Vec<AeroSample>,
    pub settings: KrigingSettings,
    pub models: Vec<KrigingModel>,
}

impl AeroModelSet {
    pub fn fit(samples: Vec<AeroSample>, settings: &KrigingSettings) -> Result<Self> {
        let inputs: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.mach, s.alpha_deg, s.de_deg]).collect();
        let mut models = Vec::with_capacity(6);
        for (k, name) in OUTPUT_NAMES.iter().enumerate() {
            let y: Vec<f64> = samples.iter().map(|s| s.outputs.to_array()[k]).collect();
            let m = KrigingModel::fit(&inputs, &y, settings)?;
            log::debug!("kriging {name}: theta={:?} mean={:e} nugget={:e}", m.theta, m.mean, m.nugget);
            models.push(m);
        }
        Ok(Self { samples, settings: *settings, models })
    }

    /// Fits on the default grid sampled from `truth`.
    pub fn fit_default(truth: &dyn AeroSource) -> Result<Self> {
        Self::fit(sample_truth(truth, &SampleGrid::default()), &KrigingSettings::default())
    }

    /// Reference prediction through the dense predictor.
    pub fn coefficients_dense(&self, mach: f64, alpha_deg: f64, de_deg: f64) -> AeroCoefficients {
        let x = [mach, alpha_deg, de_deg];
        let mut out = [0.0; 6];
        for (o, m) in out.iter_mut().zip(&self.models) {
            *o = m.predict_dense(&x);
        }
        AeroCoefficients::from_array(out)
    }

    /// SHA-256 over the serialized samples, settings and models.
    pub fn content_hash(&self) -> Result<String> {
        let body = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&body)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CacheFile { hash: self.content_hash()?, model: self.clone() };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    /// Loads a cache file, rejecting it if its hash does not match the content.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let file: CacheFile = serde_json::from_slice(&bytes)?;
        let actual = file.model.content_hash()?;
        if actual != file.hash {
            return Err(Error::Artifact { path: path.to_path_buf(), reason: "content hash mismatch".into() });
        }
        if file.model.models.len() != OUTPUT_NAMES.len() {
            return Err(Error::Artifact { path: path.to_path_buf(), reason: "expected six models".into() });
        }
        Ok(file.model)
    }

    /// Loads `path` if it holds a valid cache for `samples`, otherwise refits
    /// and rewrites it.
    pub fn load_or_fit(path: &Path, truth: &dyn AeroSource) -> Result<Self> {
        let samples = sample_truth(truth, &SampleGrid::default());
        match Self::load(path) {
            Ok(m) if m.samples == samples && m.settings == KrigingSettings::default() => return Ok(m),
            Ok(_) => log::info!("aero cache {} is stale, refitting", path.display()),
            Err(e) => log::info!("aero cache {} unusable ({e}), refitting", path.display()),
        }
        let set = Self::fit(samples, &KrigingSettings::default())?;
        set.save(path)?;
        Ok(set)
    }
}

impl AeroSource for AeroModelSet {
    fn coefficients(&self, mach: f64, alpha_deg: f64, de_deg: f64) -> AeroCoefficients {
        let x = [mach, alpha_deg, de_deg];
        let mut out = [0.0; 6];
        for (o, m) in out.iter_mut().zip(&self.models) {
            *o = m.predict(&x);
        }
        AeroCoefficients::from_array(out)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    hash: String,
    model: AeroModelSet,
}
