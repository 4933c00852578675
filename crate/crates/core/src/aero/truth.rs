//! Analytic low-aspect-ratio delta-wing model used as ground truth for the
//! aerodynamic surrogate.
//!
//! Coefficients use stability-axis conventions with a body `z` axis pointing
//! down: a lifting wing has a negative `C_Z0`, and a negative (trailing edge
//! up) elevator produces a nose-up moment.

use serde::{Deserialize, Serialize};

use super::{AeroCoefficients, AeroDomain, AeroSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaWingModel {
    pub cl_alpha: f64,
    pub cl_alpha_mach2: f64,
    pub cd0: f64,
    pub induced_drag: f64,
    pub cm0: f64,
    pub cm_alpha: f64,
    pub cm_mach: f64,
    /// Per-degree normal-force sensitivity at zero Mach.
    pub cz_de: f64,
    pub cz_de_mach: f64,
    /// Per-degree axial-force sensitivity.
    pub cx_de: f64,
    /// Per-degree pitching-moment sensitivity at zero Mach and deflection.
    pub cm_de: f64,
    pub cm_de_mach: f64,
    /// Effectiveness loss per degree of deflection magnitude.
    pub cm_de_fade: f64,
}

impl Default for DeltaWingModel {
    fn default() -> Self {
        Self {
            cl_alpha: 2.0,
            cl_alpha_mach2: 0.8,
            cd0: 0.02,
            induced_drag: 0.35,
            cm0: 0.02,
            cm_alpha: -0.30,
            cm_mach: -0.05,
            cz_de: -0.0060,
            cz_de_mach: 0.5,
            cx_de: -0.0002,
            // sized so that trim at V = 120 m/s sits near 15 deg for the
            // mid-range initial elevator setting
            cm_de: -0.0030,
            cm_de_mach: 0.3,
            cm_de_fade: 0.004,
        }
    }
}

impl DeltaWingModel {
    pub fn lift(&self, mach: f64, alpha_rad: f64) -> f64 {
        self.cl_alpha * alpha_rad + self.cl_alpha_mach2 * alpha_rad * mach * mach
    }

    pub fn drag(&self, cl: f64) -> f64 {
        self.cd0 + self.induced_drag * cl * cl
    }

    /// The six coefficients at an operating point (inputs soft-clamped to the
    /// aerodynamic domain).
    pub fn coefficients(&self, mach: f64, alpha_deg: f64, de_deg: f64) -> AeroCoefficients {
        let (mach, alpha_deg, de_deg) = AeroDomain::default().clamp(mach, alpha_deg, de_deg);
        let alpha = alpha_deg.to_radians();
        let cl = self.lift(mach, alpha);
        let cd = self.drag(cl);
        let (sa, ca) = alpha.sin_cos();
        AeroCoefficients {
            cx0: cl * sa - cd * ca,
            cz0: -(cl * ca + cd * sa),
            cm0: self.cm0 + self.cm_alpha * alpha + self.cm_mach * mach,
            cx_de: self.cx_de,
            cz_de: self.cz_de * (1.0 + self.cz_de_mach * mach),
            cm_de: self.cm_de * (1.0 + self.cm_de_mach * mach) * (1.0 - self.cm_de_fade * de_deg.abs()),
        }
    }
}

impl AeroSource for DeltaWingModel {
    fn coefficients(&self, mach: f64, alpha_deg: f64, de_deg: f64) -> AeroCoefficients {
        DeltaWingModel::coefficients(self, mach, alpha_deg, de_deg)
    }
}
