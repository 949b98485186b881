//! Mean-field baseline: the atom moves under the expectation value of the force.

use crate::error::Result;
use crate::mcwf::{split_spin_move, AtomState, StepConfig};
use crate::spin::{local_populations, Spinor};
use crate::system::{classical_force, velocity_verlet, System, TrackedState};

/// −g_F μ_B ∂z|B| (½ n↑ − ½ n↓), populations in the local basis at z.
pub fn ehrenfest_force(sys: &System, z: f64, chi: &Spinor) -> Result<f64> {
    let f_up = classical_force(sys, z, TrackedState::Up);
    if f_up == 0.0 {
        return Ok(0.0);
    }
    let [up, down] = local_populations(chi, sys.direction(z)?)?;
    Ok(f_up * (up - down))
}

/// Spin propagation and a velocity-Verlet move under the mean force.
/// The tracked label is carried unchanged.
pub fn ehrenfest_step(atom: &AtomState, sys: &System, cfg: &StepConfig) -> Result<AtomState> {
    let m = sys.species.mass;
    let mut err = None;
    let (z1, v1, chi1) = split_spin_move(sys, atom.z, &atom.chi, cfg.dt, cfg.spin_split, |chi| {
        velocity_verlet(atom.z, atom.v, cfg.dt, |z| match ehrenfest_force(sys, z, chi) {
            Ok(f) => f / m,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        })
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(AtomState { z: z1, v: v1, chi: chi1.normalized()?, tracked: atom.tracked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{Species, CODATA_2018};
    use crate::field::FieldModel1D;
    use crate::mcwf::{step, Diagnostics};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn sys(bx: f64) -> System {
        System::new(Species::rb87(), CODATA_2018, FieldModel1D::new(bx, 2.5).unwrap())
    }

    #[test]
    fn force_examples() {
        let s = sys(0.0);
        let z = 4e-6;
        let half = Spinor::new(c(0.5f64.sqrt()), c(0.5f64.sqrt()));
        assert!(ehrenfest_force(&s, z, &half).unwrap().abs() < 1e-15 * classical_force(&s, z, TrackedState::Up).abs());
        assert_eq!(ehrenfest_force(&s, z, &Spinor::z_up()).unwrap(), classical_force(&s, z, TrackedState::Up));
        let mixed = Spinor::new(c(0.7f64.sqrt()), c(0.3f64.sqrt()));
        let f = ehrenfest_force(&s, z, &mixed).unwrap();
        assert!((f - 0.4 * classical_force(&s, z, TrackedState::Up)).abs() < 1e-12 * f.abs());
    }

    #[test]
    fn force_bounded_by_single_state_force() {
        let s = sys(105e-9);
        for (z, th) in [(-3e-7, 0.3), (1e-8, 2.0), (5e-6, 1.1)] {
            let chi = Spinor::new(c((th / 2.0f64).cos()), c((th / 2.0f64).sin()));
            let f = ehrenfest_force(&s, z, &chi).unwrap().abs();
            assert!(f <= classical_force(&s, z, TrackedState::Up).abs() * (1.0 + 1e-14));
        }
    }

    #[test]
    fn eigenstate_matches_mcwf() {
        let s = sys(105e-9);
        let cfg = StepConfig::new(1e-6, 4.19e-8).unwrap();
        let n = s.direction(-2e-5).unwrap();
        let chi = Spinor::from_local(n, c(1.0), c(0.0)).unwrap();
        let start = AtomState { z: -2e-5, v: -0.01, chi, tracked: TrackedState::Up };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut diag = Diagnostics::default();
        let (mut a, mut b) = (start, start);
        for k in 0..50 {
            a = ehrenfest_step(&a, &s, &cfg).unwrap();
            let (next, ev) = step(&b, &s, &cfg, k as f64 * 1e-6, &mut rng, &mut diag).unwrap();
            assert!(ev.map(|e| !e.accepted).unwrap_or(true));
            b = next;
        }
        assert!((a.z - b.z).abs() < 1e-14);
        assert!((a.v - b.v).abs() < 1e-12);
    }

    #[test]
    fn superposition_stays_put_and_is_deterministic() {
        let s = sys(0.0);
        let cfg = StepConfig::new(1e-6, 4.19e-8).unwrap();
        let half = Spinor::new(c(0.5f64.sqrt()), c(0.5f64.sqrt()));
        let start = AtomState { z: 7.8e-6, v: 0.0, chi: half, tracked: TrackedState::Up };
        let run = || (0..380).fold(start, |a, _| ehrenfest_step(&a, &s, &cfg).unwrap());
        let a = run();
        assert!((a.z - 7.8e-6).abs() < 1e-15);
        assert!((a.chi.norm_sqr() - 1.0).abs() < 1e-12);
        assert_eq!(a, run());
    }
}
