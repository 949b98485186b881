//! Physical constants (CODATA 2018) and atomic species parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fundamental constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Bohr magneton, J/T.
    pub mu_b: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Planck constant, J s.
    pub h: f64,
}

/// Exact SI value of the Planck constant.
const PLANCK_H: f64 = 6.626_070_15e-34;

pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    hbar: PLANCK_H / (2.0 * std::f64::consts::PI),
    mu_b: 9.274_010_078_3e-24,
    k_b: 1.380_649e-23,
    h: PLANCK_H,
};

impl Default for PhysicalConstants {
    fn default() -> Self {
        CODATA_2018
    }
}

/// Mass of ⁸⁷Rb, kg.
pub const RB87_MASS: f64 = 1.443_160_648e-25;

/// A spin-½ atom: mass and signed Landé factor.
///
/// The two spin projections along the local field are always ±½; they live on
/// [`crate::system::TrackedState::projection`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub mass: f64,
    pub g_f: f64,
}

impl Species {
    pub fn new(mass: f64, g_f: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::invalid("mass_kg", format!("must be positive, got {mass}")));
        }
        if !g_f.is_finite() || g_f == 0.0 {
            return Err(Error::invalid("g_f", format!("must be finite and nonzero, got {g_f}")));
        }
        Ok(Self { mass, g_f })
    }

    /// ⁸⁷Rb treated as spin-½ with g_F twice the F=1 ground-state value (−½).
    pub fn rb87() -> Self {
        Self {
            mass: RB87_MASS,
            g_f: -1.0,
        }
    }

    /// Same atom with the sign of g_F chosen so that the locally spin-up state
    /// is the low-field seeker (trapped at a field minimum).
    pub fn rb87_up_trapped() -> Self {
        Self {
            mass: RB87_MASS,
            g_f: 1.0,
        }
    }
}

impl Default for Species {
    fn default() -> Self {
        Self::rb87()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_positive_and_consistent() {
        let c = CODATA_2018;
        for v in [c.hbar, c.mu_b, c.k_b, c.h] {
            assert!(v > 0.0);
        }
        let rel = (c.h - 2.0 * std::f64::consts::PI * c.hbar).abs() / c.h;
        assert!(rel < 1e-15, "h vs 2 pi hbar: {rel}");
        assert!((c.hbar - 1.054_571_817e-34).abs() / c.hbar < 1e-9);
    }

    #[test]
    fn species_validation() {
        assert!(Species::new(-1.0, 1.0).is_err());
        assert!(Species::new(1.0, 0.0).is_err());
        assert!(Species::new(RB87_MASS, -1.0).is_ok());
        assert_eq!(Species::default().g_f, -1.0);
    }
}
