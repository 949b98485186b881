//! Exact spin-½ algebra in the fixed z basis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, Species};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Tolerance on ‖n‖ for local-axis arguments.
const UNIT_TOL: f64 = 1e-10;
/// Populations outside [0, 1] by less than this are clamped.
const CLAMP_TOL: f64 = 1e-12;

/// Two amplitudes on |↑_z⟩ and |↓_z⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spinor {
    pub plus: Complex64,
    pub minus: Complex64,
}

impl Spinor {
    pub const fn new(plus: Complex64, minus: Complex64) -> Self {
        Self { plus, minus }
    }

    pub fn z_up() -> Self {
        Self::new(ONE, ZERO)
    }

    pub fn z_down() -> Self {
        Self::new(ZERO, ONE)
    }

    /// c_up |↑_n⟩ + c_down |↓_n⟩ expressed in the z basis.
    pub fn from_local(n: [f64; 3], c_up: Complex64, c_down: Complex64) -> Result<Self> {
        let (up, down) = local_eigenvectors(n)?;
        Ok(Self::new(
            c_up * up.plus + c_down * down.plus,
            c_up * up.minus + c_down * down.minus,
        ))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.plus.norm_sqr() + self.minus.norm_sqr()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("spinor", format!("cannot normalize, norm {n}")));
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.plus * s, self.minus * s)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Spinor) -> Complex64 {
        self.plus.conj() * other.plus + self.minus.conj() * other.minus
    }

    pub fn distance(&self, other: &Spinor) -> f64 {
        ((self.plus - other.plus).norm_sqr() + (self.minus - other.minus).norm_sqr()).sqrt()
    }

    /// Bloch vector (⟨σx⟩, ⟨σy⟩, ⟨σz⟩).
    pub fn bloch(&self) -> [f64; 3] {
        let c = self.plus.conj() * self.minus;
        [
            2.0 * c.re,
            2.0 * c.im,
            self.plus.norm_sqr() - self.minus.norm_sqr(),
        ]
    }
}

/// Dense 2×2 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);

    pub fn apply(&self, v: &Spinor) -> Spinor {
        let m = &self.0;
        Spinor::new(
            m[0][0] * v.plus + m[0][1] * v.minus,
            m[1][0] * v.plus + m[1][1] * v.minus,
        )
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        let mut out = self.0;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += o.0[i][j];
            }
        }
        Mat2(out)
    }

    pub fn scale(&self, s: Complex64) -> Mat2 {
        let mut out = self.0;
        for cell in out.iter_mut().flatten() {
            *cell *= s;
        }
        Mat2(out)
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn adjoint(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(o.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let m = &self.0;
        let mean = 0.5 * (m[0][0].re + m[1][1].re);
        let half = 0.5 * (m[0][0].re - m[1][1].re);
        let r = half.hypot(m[0][1].norm());
        [mean - r, mean + r]
    }
}

/// Projector onto a spin eigenstate along a local axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projector(pub Mat2);

fn check_unit(n: [f64; 3]) -> Result<()> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (norm - 1.0).abs() > UNIT_TOL || !norm.is_finite() {
        return Err(Error::NonUnitVector { norm });
    }
    Ok(())
}

/// P↑ = ½(1 + n·σ).
pub fn projector_up(n: [f64; 3]) -> Result<Projector> {
    check_unit(n)?;
    let [nx, ny, nz] = n;
    Ok(Projector(Mat2([
        [Complex64::new(0.5 * (1.0 + nz), 0.0), Complex64::new(0.5 * nx, -0.5 * ny)],
        [Complex64::new(0.5 * nx, 0.5 * ny), Complex64::new(0.5 * (1.0 - nz), 0.0)],
    ])))
}

/// P↓ = ½(1 − n·σ).
pub fn projector_down(n: [f64; 3]) -> Result<Projector> {
    check_unit(n)?;
    let [nx, ny, nz] = n;
    Ok(Projector(Mat2([
        [Complex64::new(0.5 * (1.0 - nz), 0.0), Complex64::new(-0.5 * nx, 0.5 * ny)],
        [Complex64::new(-0.5 * nx, -0.5 * ny), Complex64::new(0.5 * (1.0 + nz), 0.0)],
    ])))
}

/// Eigenvectors of n·σ in the gauge up = (cos θ/2, e^{iφ} sin θ/2),
/// down = (−e^{−iφ} sin θ/2, cos θ/2).
pub fn local_eigenvectors(n: [f64; 3]) -> Result<(Spinor, Spinor)> {
    check_unit(n)?;
    let [nx, ny, nz] = n;
    let cos_half = (0.5 * (1.0 + nz)).max(0.0).sqrt();
    let sin_half = (0.5 * (1.0 - nz)).max(0.0).sqrt();
    let phase = Complex64::from_polar(1.0, ny.atan2(nx));
    let up = Spinor::new(Complex64::new(cos_half, 0.0), phase * sin_half);
    let down = Spinor::new(-phase.conj() * sin_half, Complex64::new(cos_half, 0.0));
    Ok((up, down))
}

/// ⟨χ|P|χ⟩ clamped to [0, 1] within round-off.
pub fn population(chi: &Spinor, p: &Projector) -> Result<f64> {
    let v = chi.inner(&p.0.apply(chi)).re;
    if v < -CLAMP_TOL || v > 1.0 + CLAMP_TOL || !v.is_finite() {
        return Err(Error::PopulationOutOfRange { value: v });
    }
    Ok(v.clamp(0.0, 1.0))
}

/// (n↑, n↓) along the local axis n.
pub fn local_populations(chi: &Spinor, n: [f64; 3]) -> Result<[f64; 2]> {
    Ok([
        population(chi, &projector_up(n)?)?,
        population(chi, &projector_down(n)?)?,
    ])
}

/// Zeeman Hamiltonian, J.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinHamiltonian(pub Mat2);

/// H = (g_F μ_B / 2) B·σ.
pub fn zeeman_hamiltonian(species: &Species, consts: &PhysicalConstants, b: [f64; 3]) -> SpinHamiltonian {
    let k = 0.5 * species.g_f * consts.mu_b;
    let [bx, by, bz] = b;
    SpinHamiltonian(Mat2([
        [Complex64::new(k * bz, 0.0), Complex64::new(k * bx, -k * by)],
        [Complex64::new(k * bx, k * by), Complex64::new(-k * bz, 0.0)],
    ]))
}

impl SpinHamiltonian {
    /// exp(−iH dt/ħ) in closed Pauli form.
    pub fn propagator(&self, dt: f64, hbar: f64) -> Mat2 {
        let m = &self.0 .0;
        let h0 = 0.5 * (m[0][0].re + m[1][1].re);
        let hz = 0.5 * (m[0][0].re - m[1][1].re);
        let hx = m[0][1].re;
        let hy = -m[0][1].im;
        let h = (hx * hx + hy * hy + hz * hz).sqrt();
        let angle = h * dt / hbar;
        let global = Complex64::from_polar(1.0, -h0 * dt / hbar);
        let c = angle.cos();
        // only s·h enters, which vanishes with the field
        let s = if h == 0.0 { 0.0 } else { angle.sin() / h };
        let d00 = Complex64::new(c, -s * hz);
        let d11 = Complex64::new(c, s * hz);
        // −i s (hx σx + hy σy) off-diagonals
        let d01 = Complex64::new(-s * hy, -s * hx);
        let d10 = Complex64::new(s * hy, -s * hx);
        Mat2([[global * d00, global * d01], [global * d10, global * d11]])
    }
}

/// χ(t+dt) = exp(−iH dt/ħ) χ(t).
pub fn propagate_spin(chi: &Spinor, h: &SpinHamiltonian, dt: f64, hbar: f64) -> Spinor {
    h.propagator(dt, hbar).apply(chi)
}
