//! One-dimensional field model B(z) = (Bx, 0, B′z).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transverse bias plus a linear gradient of the z component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldModel1D {
    /// Transverse bias field, T.
    pub bx: f64,
    /// Gradient of the z component, T/m.
    pub bz_prime: f64,
}

impl FieldModel1D {
    pub fn new(bx: f64, bz_prime: f64) -> Result<Self> {
        if !bx.is_finite() {
            return Err(Error::invalid("bx_tesla", "must be finite"));
        }
        if !bz_prime.is_finite() {
            return Err(Error::invalid("bz_gradient_tesla_per_m", "must be finite"));
        }
        if bx == 0.0 && bz_prime == 0.0 {
            return Err(Error::invalid(
                "bx_tesla",
                "bias and gradient cannot both vanish",
            ));
        }
        Ok(Self { bx, bz_prime })
    }

    pub fn vector(&self, z: f64) -> [f64; 3] {
        [self.bx, 0.0, self.bz_prime * z]
    }

    pub fn magnitude(&self, z: f64) -> f64 {
        self.bx.hypot(self.bz_prime * z)
    }

    /// d|B|/dz = B′²z/|B|, taken as 0 where the field vanishes.
    pub fn magnitude_gradient(&self, z: f64) -> f64 {
        let b = self.magnitude(z);
        if b == 0.0 {
            0.0
        } else {
            self.bz_prime * self.bz_prime * z / b
        }
    }

    /// Local quantization axis n = B/|B|.
    pub fn unit_direction(&self, z: f64) -> Result<[f64; 3]> {
        let b = self.magnitude(z);
        if b == 0.0 {
            return Err(Error::UndefinedDirection { z });
        }
        let [x, y, zc] = self.vector(z);
        Ok([x / b, y / b, zc / b])
    }

    /// Angular rate |dn/dz| at which the field direction turns along z, rad/m.
    pub fn direction_rate(&self, z: f64) -> f64 {
        let b2 = self.bx * self.bx + (self.bz_prime * z).powi(2);
        if b2 == 0.0 {
            f64::INFINITY
        } else {
            (self.bx * self.bz_prime).abs() / b2
        }
    }
}
