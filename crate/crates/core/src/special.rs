//! Scaled special functions for overflow-free decoherence times.
//!
//! `erfcx(x) = exp(x²) erfc(x)` and `bessel_k_scaled(ν, x) = exp(x) K_ν(x)`.
//! K_ν follows Temme's series for x ≤ 2 and Steed's continued fraction for
//! x > 2 (the latter yields the scaled value directly).

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_ITER: usize = 100_000;
const EPS: f64 = 1e-16;
/// Below this, erfcx comes from the erf power series; above, from the continued fraction.
const ERFCX_CF_THRESHOLD: f64 = 2.0;

/// Scaled complementary error function exp(x²) erfc(x).
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < ERFCX_CF_THRESHOLD {
        // e^{x²} erf(x) = (2/√π) Σ 2ⁿ x^{2n+1} / (2n+1)!!, all terms positive
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for n in 1..MAX_ITER {
            term *= 2.0 * x2 / (2 * n + 1) as f64;
            sum += term;
            if term < EPS * sum {
                break;
            }
        }
        return x2.exp() - 2.0 / PI.sqrt() * sum;
    }
    if x.is_infinite() {
        return 0.0;
    }
    // erfc(x) e^{x²} √π = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))), modified Lentz.
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..MAX_ITER {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    1.0 / (f * PI.sqrt())
}

/// Temme's auxiliary Γ combinations for |μ| ≤ ½:
/// (gam1, gam2, 1/Γ(1+μ), 1/Γ(1−μ)).
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let gampl = 1.0 / gamma(1.0 + mu);
    let gammi = 1.0 / gamma(1.0 - mu);
    let gam2 = 0.5 * (gammi + gampl);
    let gam1 = if mu.abs() < 1e-3 {
        // −γ + c₃μ² with c₃ = γ³/6 − γπ²/12 + ζ(3)/3
        -EULER_GAMMA + 0.041_989_1 * mu * mu
    } else {
        (gammi - gampl) / (2.0 * mu)
    };
    (gam1, gam2, gampl, gammi)
}

/// (K_μ(x), K_{μ+1}(x)) scaled by eᕽ, for |μ| ≤ ½.
fn k_pair_scaled(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    if x <= 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let scale = x.exp();
        (sum * scale, sum1 * 2.0 / x * scale)
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * fi;
            c = -a * c / (fi + 1.0);
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        let kmu = (PI / (2.0 * x)).sqrt() / s;
        let k1 = kmu * (mu + x + 0.5 - h) / x;
        (kmu, k1)
    }
}

/// Exponentially scaled modified Bessel function of the second kind, eˣ K_ν(x).
pub fn bessel_k_scaled(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::OutOfDomain {
            what: "bessel_k_scaled",
            value: x,
            domain: "(0, inf)",
        });
    }
    if !nu.is_finite() {
        return Err(Error::OutOfDomain {
            what: "bessel_k_scaled order",
            value: nu,
            domain: "finite",
        });
    }
    let nu = nu.abs();
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let (mut k_lo, mut k_hi) = k_pair_scaled(mu, x);
    // upward recurrence K_{ν+1} = (2ν/x) K_ν + K_{ν−1}
    for i in 1..=(nl as usize) {
        (k_lo, k_hi) = (k_hi, 2.0 * (mu + i as f64) / x * k_hi + k_lo);
    }
    Ok(k_lo)
}
