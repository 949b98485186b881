//! Monte Carlo wavefunction step: exact spin evolution along a classical
//! trajectory, stochastic switching of the tracked state and decay of the
//! untracked component.
//!
//! Per step:
//! (i) local populations before the step; (ii) spin propagation in B(z);
//! (iii) velocity-Verlet move under the tracked force; (iv) p_flip from the
//! populations after the step; (v) draw u, flip candidate iff u < p_flip;
//! (vi) energy gate and speed rescale; (vii) decay of the untracked
//! component with τ from the local gradient; (viii) renormalize.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoherence::{decoherence_time, relative_acceleration, DecoherenceParams, TauMode};
use crate::error::{Error, Result};
use crate::spin::{local_populations, projector_down, projector_up, Projector, Spinor};
use crate::system::{classical_force, velocity_verlet, System, TrackedState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub z: f64,
    pub v: f64,
    pub chi: Spinor,
    pub tracked: TrackedState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayScheme {
    Euler,
    #[default]
    Exponential,
}

/// Where the local basis for the post-step populations is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    /// Before-populations at z, after-populations at z′.
    #[default]
    Instantaneous,
    /// Both at z.
    Frozen,
}

/// How the spin update is placed around the classical move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinSplit {
    /// Full spin step in B(z), then the move.
    Leading,
    /// Half step in B(z), move, half step in B(z′).
    #[default]
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub tau_mode: TauMode,
    pub decay_scheme: DecayScheme,
    /// Wavepacket size entering τ, m.
    pub sigma: f64,
    pub basis_mode: BasisMode,
    pub spin_split: SpinSplit,
}

impl StepConfig {
    pub fn new(dt: f64, sigma: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            tau_mode: TauMode::default(),
            decay_scheme: DecayScheme::default(),
            sigma,
            basis_mode: BasisMode::default(),
            spin_split: SpinSplit::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt_s", format!("must be positive, got {}", self.dt)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma_m", format!("must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    None,
    EnergyForbidden,
    NotDrawn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipEvent {
    pub time: f64,
    pub z: f64,
    /// As computed, before clamping.
    pub p_flip: f64,
    pub delta_e_pot: f64,
    pub accepted: bool,
    pub rejected_reason: RejectReason,
    /// Label tracked before the draw.
    pub from: TrackedState,
}

/// Counters for step-size health, merged across atoms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: u64,
    /// Steps with p_flip > 1.
    pub p_flip_clamps: u64,
    /// Steps with τ < 10·dt.
    pub zeno_steps: u64,
    pub max_dt_over_tau: f64,
    /// Largest Larmor phase ω·dt seen.
    pub max_larmor_phase: f64,
}

impl Diagnostics {
    pub fn merge(&mut self, o: &Diagnostics) {
        self.steps += o.steps;
        self.p_flip_clamps += o.p_flip_clamps;
        self.zeno_steps += o.zeno_steps;
        self.max_dt_over_tau = self.max_dt_over_tau.max(o.max_dt_over_tau);
        self.max_larmor_phase = self.max_larmor_phase.max(o.max_larmor_phase);
    }
}

/// Fraction of the tracked population that moved to the untracked state.
/// Negative values mean flow the other way. A vanishing denominator counts as total transfer.
pub fn flip_probability(
    _n_tracked_before: f64,
    n_untracked_before: f64,
    n_tracked_after: f64,
    n_untracked_after: f64,
) -> f64 {
    if n_tracked_after == 0.0 {
        return 1.0;
    }
    (n_untracked_after - n_untracked_before) / n_tracked_after
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateResult {
    pub allowed: bool,
    /// Rescaled velocity keeping the sign of v (positive when v = 0).
    pub v_new: f64,
    /// V_untracked − V_tracked at z, J.
    pub delta_e_pot: f64,
}

/// Energy bookkeeping for switching from `tracked` to the other label at z.
pub fn energy_gate(sys: &System, z: f64, v: f64, tracked: TrackedState) -> GateResult {
    let delta_e_pot = sys.potential(z, tracked.other()) - sys.potential(z, tracked);
    let m = sys.species.mass;
    let e_new = 0.5 * m * v * v - delta_e_pot;
    if e_new < 0.0 {
        return GateResult { allowed: false, v_new: v, delta_e_pot };
    }
    let speed = (2.0 * e_new / m).sqrt();
    let v_new = if v < 0.0 { -speed } else { speed };
    GateResult { allowed: true, v_new, delta_e_pot }
}

fn projectors(n: [f64; 3], tracked: TrackedState) -> Result<(Projector, Projector)> {
    let (up, down) = (projector_up(n)?, projector_down(n)?);
    Ok(match tracked {
        TrackedState::Up => (up, down),
        TrackedState::Down => (down, up),
    })
}

/// Damp the untracked component over dt. Result is not renormalized.
pub fn decay_untracked(
    chi: &Spinor,
    tracked: TrackedState,
    n: [f64; 3],
    dt: f64,
    tau: f64,
    scheme: DecayScheme,
) -> Result<Spinor> {
    if tau == f64::INFINITY {
        return Ok(*chi);
    }
    let ratio = dt / tau;
    let (p_t, p_u) = projectors(n, tracked)?;
    let keep = match scheme {
        DecayScheme::Euler => {
            if ratio >= 1.0 {
                return Err(Error::UnstableDecay { ratio });
            }
            1.0 - ratio
        }
        DecayScheme::Exponential => (-ratio).exp(),
    };
    let t = p_t.0.apply(chi);
    let u = p_u.0.apply(chi);
    Ok(Spinor::new(t.plus + u.plus * keep, t.minus + u.minus * keep))
}

/// τ at z for the configured mode and wavepacket size.
pub fn local_tau(sys: &System, z: f64, cfg: &StepConfig) -> Result<f64> {
    let a = relative_acceleration(&sys.species, &sys.consts, &sys.field, z);
    let p = DecoherenceParams::new(a, cfg.sigma, sys.species.mass, sys.consts.hbar)?;
    decoherence_time(&p, cfg.tau_mode)
}

/// Spin update split around a classical move to z1 = move(·).
pub(crate) fn split_spin_move(
    sys: &System,
    z: f64,
    chi: &Spinor,
    dt: f64,
    split: SpinSplit,
    mv: impl FnOnce(&Spinor) -> (f64, f64),
) -> (f64, f64, Spinor) {
    let hbar = sys.consts.hbar;
    match split {
        SpinSplit::Leading => {
            let chi1 = sys.hamiltonian(z).propagator(dt, hbar).apply(chi);
            let (z1, v1) = mv(&chi1);
            (z1, v1, chi1)
        }
        SpinSplit::Symmetric => {
            let half = sys.hamiltonian(z).propagator(0.5 * dt, hbar).apply(chi);
            let (z1, v1) = mv(&half);
            let chi1 = sys.hamiltonian(z1).propagator(0.5 * dt, hbar).apply(&half);
            (z1, v1, chi1)
        }
    }
}

/// Advance one atom by cfg.dt starting at time t. Returns the new state and,
/// when p_flip > 0, the draw outcome.
pub fn step<R: Rng + ?Sized>(
    atom: &AtomState,
    sys: &System,
    cfg: &StepConfig,
    t: f64,
    rng: &mut R,
    diag: &mut Diagnostics,
) -> Result<(AtomState, Option<FlipEvent>)> {
    let dt = cfg.dt;
    let tracked = atom.tracked;
    let m = sys.species.mass;
    diag.steps += 1;
    diag.max_larmor_phase = diag.max_larmor_phase.max(sys.larmor(atom.z) * dt);

    // (i)
    let n0 = sys.direction(atom.z)?;
    let before = local_populations(&atom.chi, n0)?;

    // (ii) + (iii)
    let accel = |z: f64| classical_force(sys, z, tracked) / m;
    let (z1, mut v1, chi1) = split_spin_move(sys, atom.z, &atom.chi, dt, cfg.spin_split, |_| {
        velocity_verlet(atom.z, atom.v, dt, accel)
    });

    // (iv)
    let n1 = sys.direction(z1)?;
    let after = match cfg.basis_mode {
        BasisMode::Instantaneous => local_populations(&chi1, n1)?,
        BasisMode::Frozen => local_populations(&chi1, n0)?,
    };
    let (ti, ui) = (tracked.index(), tracked.other().index());
    let p_flip = flip_probability(before[ti], before[ui], after[ti], after[ui]);

    // (v) + (vi)
    let mut new_label = tracked;
    let mut event = None;
    if p_flip > 0.0 {
        if p_flip > 1.0 {
            diag.p_flip_clamps += 1;
        }
        let u: f64 = rng.random();
        let gate = energy_gate(sys, z1, v1, tracked);
        let (accepted, reason) = if u >= p_flip.min(1.0) {
            (false, RejectReason::NotDrawn)
        } else if !gate.allowed {
            (false, RejectReason::EnergyForbidden)
        } else {
            (true, RejectReason::None)
        };
        if accepted {
            new_label = tracked.other();
            v1 = if v1 == 0.0 && rng.random::<bool>() { -gate.v_new } else { gate.v_new };
        }
        event = Some(FlipEvent {
            time: t + dt,
            z: z1,
            p_flip,
            delta_e_pot: gate.delta_e_pot,
            accepted,
            rejected_reason: reason,
            from: tracked,
        });
    }

    // (vii)
    let tau = local_tau(sys, z1, cfg)?;
    let ratio = dt / tau;
    diag.max_dt_over_tau = diag.max_dt_over_tau.max(ratio);
    if tau < 10.0 * dt {
        diag.zeno_steps += 1;
    }
    let decayed = decay_untracked(&chi1, new_label, n1, dt, tau, cfg.decay_scheme)?;

    // (viii)
    let chi = decayed.normalized()?;
    Ok((AtomState { z: z1, v: v1, chi, tracked: new_label }, event))
}
