//! Wavepacket overlap decay and the spin decoherence time τ.
//!
//! Two equal-width Gaussian wavepackets accelerating apart at `a_rel` lose
//! overlap as exp[−a²t⁴/(32σ²) − m²σ²a²t²/(2ħ²)]. τ is the mean of t under
//! that profile. The closed form is
//!
//! τ = √(2π) ħ e^{η²} erfc(√2 η) / (m σ a K_{1/4}(η²)),  η = m²σ³a/ħ².
//!
//! Written with erfcx(x) = e^{x²}erfc(x) and K̃(x) = eˣK(x):
//! e^{η²}erfc(√2η) = e^{η²}·e^{−2η²}·erfcx(√2η) = e^{−η²}erfcx(√2η) and
//! K_{1/4}(η²) = e^{−η²}K̃_{1/4}(η²), so the exponentials cancel exactly and
//! τ = √(2π) ħ erfcx(√2η) / (m σ a K̃_{1/4}(η²)) with every factor bounded.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::constants::{PhysicalConstants, Species};
use crate::error::{Error, Result};
use crate::field::FieldModel1D;
use crate::special::{bessel_k_scaled, erfcx};

/// Inputs to τ. `hbar` is carried so natural-unit checks need no special casing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceParams {
    /// Relative acceleration of the two wavepackets, m/s².
    pub a_rel: f64,
    /// Wavepacket size, m.
    pub sigma: f64,
    /// Atomic mass, kg.
    pub mass: f64,
    pub hbar: f64,
}

impl DecoherenceParams {
    pub fn new(a_rel: f64, sigma: f64, mass: f64, hbar: f64) -> Result<Self> {
        if !(a_rel >= 0.0 && a_rel.is_finite()) {
            return Err(Error::invalid("a_rel", format!("must be finite and >= 0, got {a_rel}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma_m", format!("must be positive, got {sigma}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid("mass_kg", format!("must be positive, got {mass}")));
        }
        if !(hbar > 0.0) {
            return Err(Error::invalid("hbar", "must be positive"));
        }
        Ok(Self { a_rel, sigma, mass, hbar })
    }

    /// η = m²σ³a/ħ².
    pub fn eta(&self) -> f64 {
        let r = self.mass * self.sigma / self.hbar;
        r * r * self.sigma * self.a_rel
    }
}

/// Which τ expression drives the decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    #[default]
    Approx,
    Exact,
}

/// |⟨ψᵢ(t)|ψⱼ(t)⟩|.
pub fn overlap_magnitude(p: &DecoherenceParams, t: f64) -> f64 {
    let at2 = p.a_rel * t * t;
    let k = p.mass * p.sigma / p.hbar;
    (-(at2 * at2) / (32.0 * p.sigma * p.sigma) - 0.5 * k * k * p.a_rel * p.a_rel * t * t).exp()
}

/// a = |F↑ − F↓|/m = |g_F| μ_B |∂z|B|| / m for Δm = 1.
pub fn relative_acceleration(
    species: &Species,
    consts: &PhysicalConstants,
    field: &FieldModel1D,
    z: f64,
) -> f64 {
    species.g_f.abs() * consts.mu_b * field.magnitude_gradient(z).abs() / species.mass
}

/// (2π²)^{1/4} / (2Γ(5/4)) ≈ 1.1627.
pub fn tau_pos_coefficient() -> f64 {
    (2.0 * PI * PI).powf(0.25) / (2.0 * gamma(1.25))
}

/// Position-separation limit, η ≪ 1.
pub fn tau_pos(p: &DecoherenceParams) -> f64 {
    if p.a_rel == 0.0 {
        return f64::INFINITY;
    }
    tau_pos_coefficient() * (p.sigma / p.a_rel).sqrt()
}

/// Velocity-separation limit, η ≫ 1.
pub fn tau_vel(p: &DecoherenceParams) -> f64 {
    if p.a_rel == 0.0 {
        return f64::INFINITY;
    }
    (2.0 / PI).sqrt() * p.hbar / (p.mass * p.sigma * p.a_rel)
}

/// [τ_pos⁻³ + τ_vel⁻³]^{−1/3}.
pub fn tau_approx(p: &DecoherenceParams) -> f64 {
    if p.a_rel == 0.0 {
        return f64::INFINITY;
    }
    let rp = 1.0 / tau_pos(p);
    let rv = 1.0 / tau_vel(p);
    // factor out the larger rate so the cubes cannot overflow
    let (big, small) = if rp >= rv { (rp, rv) } else { (rv, rp) };
    let ratio = small / big;
    1.0 / (big * (1.0 + ratio * ratio * ratio).cbrt())
}

/// Closed form via erfcx and scaled K_{1/4}; see the module docs.
pub fn tau_exact(p: &DecoherenceParams) -> Result<f64> {
    if p.a_rel == 0.0 {
        return Ok(f64::INFINITY);
    }
    let eta = p.eta();
    let eta2 = eta * eta;
    if !(eta2 > 0.0 && eta2.is_finite()) {
        return Err(Error::OutOfDomain {
            what: "tau_exact eta",
            value: eta,
            domain: "eta^2 must be a positive finite double",
        });
    }
    let k = bessel_k_scaled(0.25, eta2)?;
    let num = (2.0 * PI).sqrt() * p.hbar * erfcx(std::f64::consts::SQRT_2 * eta);
    Ok(num / (p.mass * p.sigma * p.a_rel * k))
}

pub fn decoherence_time(p: &DecoherenceParams, mode: TauMode) -> Result<f64> {
    match mode {
        TauMode::Approx => Ok(tau_approx(p)),
        TauMode::Exact => tau_exact(p),
    }
}

/// Quadrature oracles, independent of the closed forms above.
pub mod oracle {
    use super::DecoherenceParams;
    use crate::quadrature::{integrate, integrate_to_infinity};

    /// ∫t|⟨ψᵢ|ψⱼ⟩|dt / ∫|⟨ψᵢ|ψⱼ⟩|dt by adaptive quadrature.
    pub fn tau_quadrature(p: &DecoherenceParams) -> f64 {
        if p.a_rel == 0.0 {
            return f64::INFINITY;
        }
        let quartic = p.a_rel * p.a_rel / (32.0 * p.sigma * p.sigma);
        let k = p.mass * p.sigma * p.a_rel / p.hbar;
        let quadratic = 0.5 * k * k;
        let overlap = move |t: f64| {
            let t2 = t * t;
            (-quartic * t2 * t2 - quadratic * t2).exp()
        };
        let scale = 1.0 / (quartic.powf(0.25) + quadratic.sqrt());
        let rel = 1e-13;
        let num = integrate_to_infinity(|t| t * overlap(t), 0.0, scale, 0.0, rel);
        let den = integrate_to_infinity(overlap, 0.0, scale, 0.0, rel);
        num.value / den.value
    }

    /// |C ∫ e^{−x²/4σ²} e^{−(x−x_rel)²/4σ² + i k_rel x} dx| with
    /// x_rel = at²/2, k_rel = mat/ħ and C⁻¹ = ∫e^{−x²/2σ²}dx, by direct quadrature.
    pub fn overlap_quadrature(p: &DecoherenceParams, t: f64) -> f64 {
        // work in u = x/σ
        let x_rel = 0.5 * p.a_rel * t * t / p.sigma;
        let k_rel = p.mass * p.a_rel * t / p.hbar * p.sigma;
        let envelope = move |u: f64| (-0.25 * u * u - 0.25 * (u - x_rel) * (u - x_rel)).exp();
        let center = 0.5 * x_rel;
        let (lo, hi) = (center - 14.0, center + 14.0);
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let scale = (-x_rel * x_rel / 8.0).exp() * norm;
        let tol = 1e-16 * scale;
        let re = integrate(|u| envelope(u) * (k_rel * u).cos(), lo, hi, tol, 1e-14);
        let im = integrate(|u| envelope(u) * (k_rel * u).sin(), lo, hi, tol, 1e-14);
        re.value.hypot(im.value) / norm
    }
}
