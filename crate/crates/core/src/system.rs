//! Species, constants and field bundled into one physical system.

use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, Species};
use crate::error::Result;
use crate::field::FieldModel1D;
use crate::spin::{zeeman_hamiltonian, SpinHamiltonian};

/// Local spin projection label: +½ (`Up`) or −½ (`Down`) along n = B/|B|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackedState {
    Up,
    Down,
}

impl TrackedState {
    pub fn projection(self) -> f64 {
        match self {
            TrackedState::Up => 0.5,
            TrackedState::Down => -0.5,
        }
    }

    pub fn other(self) -> Self {
        match self {
            TrackedState::Up => TrackedState::Down,
            TrackedState::Down => TrackedState::Up,
        }
    }

    /// 0 for up, 1 for down; indexes population pairs.
    pub fn index(self) -> usize {
        match self {
            TrackedState::Up => 0,
            TrackedState::Down => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrackedState::Up => "up",
            TrackedState::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub species: Species,
    pub consts: PhysicalConstants,
    pub field: FieldModel1D,
}

impl System {
    pub fn new(species: Species, consts: PhysicalConstants, field: FieldModel1D) -> Self {
        Self { species, consts, field }
    }

    /// V = g_F m_n μ_B |B(z)|.
    pub fn potential(&self, z: f64, label: TrackedState) -> f64 {
        self.species.g_f * label.projection() * self.consts.mu_b * self.field.magnitude(z)
    }

    pub fn hamiltonian(&self, z: f64) -> SpinHamiltonian {
        zeeman_hamiltonian(&self.species, &self.consts, self.field.vector(z))
    }

    pub fn direction(&self, z: f64) -> Result<[f64; 3]> {
        self.field.unit_direction(z)
    }

    /// Larmor angular frequency g_F μ_B |B| / ħ (magnitude).
    pub fn larmor(&self, z: f64) -> f64 {
        (self.species.g_f * self.consts.mu_b * self.field.magnitude(z) / self.consts.hbar).abs()
    }
}

/// F = −g_F m_n μ_B ∂z|B| for the tracked projection.
pub fn classical_force(sys: &System, z: f64, tracked: TrackedState) -> f64 {
    -sys.species.g_f * tracked.projection() * sys.consts.mu_b * sys.field.magnitude_gradient(z)
}

/// One velocity-Verlet step under a position-dependent acceleration.
pub fn velocity_verlet(
    z: f64,
    v: f64,
    dt: f64,
    mut accel: impl FnMut(f64) -> f64,
) -> (f64, f64) {
    let half = v + 0.5 * dt * accel(z);
    let z1 = z + dt * half;
    let v1 = half + 0.5 * dt * accel(z1);
    (z1, v1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::CODATA_2018;

    fn sg() -> System {
        System::new(Species::rb87(), CODATA_2018, FieldModel1D::new(0.0, 2.5).unwrap())
    }

    #[test]
    fn force_sign_and_antisymmetry() {
        let s = sg();
        let f = classical_force(&s, 1e-5, TrackedState::Up);
        assert!((f - 0.5 * s.consts.mu_b * 2.5).abs() < 1e-12 * f.abs());
        assert_eq!(f, -classical_force(&s, 1e-5, TrackedState::Down));
        let m = System::new(Species::rb87(), CODATA_2018, FieldModel1D::new(105e-9, 2.5).unwrap());
        for z in [-3e-6, 0.0, 2e-8, 4e-5] {
            assert_eq!(
                classical_force(&m, z, TrackedState::Up),
                -classical_force(&m, z, TrackedState::Down)
            );
        }
    }

    #[test]
    fn force_is_minus_potential_gradient() {
        let s = System::new(Species::rb87_up_trapped(), CODATA_2018, FieldModel1D::new(105e-9, 2.5).unwrap());
        for z in [-2e-6, 3e-8, 1e-5] {
            let h = 1e-12;
            let fd = -(s.potential(z + h, TrackedState::Up) - s.potential(z - h, TrackedState::Up)) / (2.0 * h);
            let f = classical_force(&s, z, TrackedState::Up);
            assert!((fd - f).abs() < 1e-6 * f.abs(), "{fd} {f}");
        }
    }

    #[test]
    fn verlet_exact_for_constant_acceleration() {
        let (z, v) = (0..100).fold((1.0, -2.0), |(z, v), _| velocity_verlet(z, v, 0.01, |_| 3.0));
        assert!((z - (1.0 - 2.0 + 1.5)).abs() < 1e-12);
        assert!((v - (-2.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn verlet_second_order_on_oscillator() {
        let run = |n: usize| {
            let dt = 1.0 / n as f64;
            (0..n).fold((1.0, 0.0), |(z, v), _| velocity_verlet(z, v, dt, |x| -x)).0
        };
        let e1 = (run(100) - 1f64.cos()).abs();
        let e2 = (run(200) - 1f64.cos()).abs();
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "{order}");
    }

    #[test]
    fn labels() {
        assert_eq!(TrackedState::Up.other(), TrackedState::Down);
        assert_eq!(TrackedState::Down.projection(), -0.5);
        assert_eq!(TrackedState::Down.index(), 1);
    }
}
