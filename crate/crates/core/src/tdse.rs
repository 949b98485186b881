//! Two-component split-step spectral solver for the spinor Schrödinger equation.
//!
//! Strang splitting: half kinetic step in k space, exact pointwise 2×2 Zeeman
//! unitary, half kinetic step. Consecutive kinetic halves are merged when
//! advancing several steps. An optional smooth absorbing layer removes norm
//! near the edges; what it removes is credited to the local label at the
//! point of absorption.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{Mat2, Spinor};
use crate::system::System;

/// Smallest σ/dz accepted by [`init_gaussian`].
pub const MIN_POINTS_PER_SIGMA: f64 = 3.0;
/// Populations below this make a centroid undefined.
pub const CENTROID_MIN_POPULATION: f64 = 1e-6;
/// Fraction of the grid at each edge watched for leaks when no absorber is set.
const EDGE_FRACTION: f64 = 0.05;
const LEAK_TOL: f64 = 1e-6;

/// Periodic uniform grid: points z_min + j·dz for j < n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
}

impl Grid1D {
    pub fn new(z_min: f64, z_max: f64, n_points: usize) -> Result<Self> {
        if !(z_max > z_min && z_min.is_finite() && z_max.is_finite()) {
            return Err(Error::invalid("tdse_z_max_m", "must exceed tdse_z_min_m"));
        }
        if n_points < 256 || !n_points.is_power_of_two() {
            return Err(Error::invalid(
                "tdse_points",
                format!("must be a power of two >= 256, got {n_points}"),
            ));
        }
        Ok(Self { z_min, z_max, n_points })
    }

    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / self.n_points as f64
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.dz()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|j| self.z(j))
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (self.z_max - self.z_min);
        (0..n)
            .map(|j| if j < n / 2 { j as f64 * dk } else { (j as f64 - n as f64) * dk })
            .collect()
    }
}

/// ψ₊(z), ψ₋(z) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TdseField {
    pub grid: Grid1D,
    pub psi_plus: Vec<Complex64>,
    pub psi_minus: Vec<Complex64>,
}

impl TdseField {
    pub fn norm(&self) -> f64 {
        let s: f64 = self
            .psi_plus
            .iter()
            .zip(&self.psi_minus)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .sum();
        s * self.grid.dz()
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi_plus.iter().zip(&self.psi_minus).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect()
    }

    /// max over points of |ψ − φ| for both components.
    pub fn max_abs_diff(&self, o: &TdseField) -> f64 {
        let d = |a: &[Complex64], b: &[Complex64]| {
            a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
        };
        d(&self.psi_plus, &o.psi_plus).max(d(&self.psi_minus, &o.psi_minus))
    }
}

/// Minimum-uncertainty packet χ₀ ⊗ (2πσ²)^{−1/4} exp[−(z−z0)²/4σ² + i m v0 z/ħ].
pub fn init_gaussian(
    grid: Grid1D,
    z0: f64,
    sigma: f64,
    v0: f64,
    chi0: &Spinor,
    mass: f64,
    hbar: f64,
) -> Result<TdseField> {
    let dz = grid.dz();
    if !(sigma >= MIN_POINTS_PER_SIGMA * dz) {
        return Err(Error::UnderResolved { sigma, dz });
    }
    if z0 - 8.0 * sigma < grid.z_min || z0 + 8.0 * sigma > grid.z_max {
        return Err(Error::invalid("z0_m", "wavepacket must start well inside the TDSE grid"));
    }
    let chi = chi0.normalized()?;
    let k0 = mass * v0 / hbar;
    let amp = (2.0 * PI * sigma * sigma).powf(-0.25);
    let env: Vec<Complex64> = grid
        .points()
        .map(|z| {
            let g = amp * (-(z - z0) * (z - z0) / (4.0 * sigma * sigma)).exp();
            Complex64::from_polar(g, k0 * (z - z0))
        })
        .collect();
    let mut f = TdseField {
        grid,
        psi_plus: env.iter().map(|e| e * chi.plus).collect(),
        psi_minus: env.iter().map(|e| e * chi.minus).collect(),
    };
    let norm = f.norm().sqrt();
    for x in f.psi_plus.iter_mut().chain(f.psi_minus.iter_mut()) {
        *x /= norm;
    }
    Ok(f)
}

/// Quadratic absorbing ramp of the given width at both edges; per-step
/// amplitude factor exp(−γ₀ (d/width)² dt) at penetration depth d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Absorber {
    pub width: f64,
    /// Peak damping rate γ₀ at the grid edge, 1/s.
    pub strength: f64,
}

/// Local field axis per grid point; zero-field points split density evenly.
fn axes(sys: &System, grid: &Grid1D) -> Vec<[f64; 3]> {
    grid.points().map(|z| sys.direction(z).unwrap_or([0.0; 3])).collect()
}

/// ⟨ψ|P↑|ψ⟩ at one point given the local axis n.
#[inline]
fn up_density(a: Complex64, b: Complex64, n: &[f64; 3]) -> f64 {
    let c = a.conj() * b;
    let total = a.norm_sqr() + b.norm_sqr();
    let ndots = n[0] * 2.0 * c.re + n[1] * 2.0 * c.im + n[2] * (a.norm_sqr() - b.norm_sqr());
    0.5 * (total + ndots)
}

/// Densities of the locally up and down components.
pub fn local_densities(field: &TdseField, sys: &System) -> [Vec<f64>; 2] {
    let n = axes(sys, &field.grid);
    let mut up = Vec::with_capacity(n.len());
    let mut down = Vec::with_capacity(n.len());
    for ((a, b), n) in field.psi_plus.iter().zip(&field.psi_minus).zip(&n) {
        let u = up_density(*a, *b, n).max(0.0);
        let t = a.norm_sqr() + b.norm_sqr();
        up.push(u);
        down.push((t - u).max(0.0));
    }
    [up, down]
}

/// Densities of the fixed z-basis components.
pub fn lab_densities(field: &TdseField) -> [Vec<f64>; 2] {
    [
        field.psi_plus.iter().map(|a| a.norm_sqr()).collect(),
        field.psi_minus.iter().map(|a| a.norm_sqr()).collect(),
    ]
}

fn integrate(d: &[f64], dz: f64) -> f64 {
    d.iter().sum::<f64>() * dz
}

fn centroid(grid: &Grid1D, d: &[f64]) -> Option<f64> {
    let w: f64 = d.iter().sum();
    if w * grid.dz() < CENTROID_MIN_POPULATION {
        return None;
    }
    Some(d.iter().enumerate().map(|(j, x)| x * grid.z(j)).sum::<f64>() / w)
}

fn spread(grid: &Grid1D, d: &[f64], mean: f64) -> f64 {
    let w: f64 = d.iter().sum();
    let var = d.iter().enumerate().map(|(j, x)| x * (grid.z(j) - mean).powi(2)).sum::<f64>() / w;
    var.sqrt()
}

/// (n↑, n↓) on the grid in the local field basis.
pub fn local_populations(field: &TdseField, sys: &System) -> [f64; 2] {
    let [u, d] = local_densities(field, sys);
    let dz = field.grid.dz();
    [integrate(&u, dz), integrate(&d, dz)]
}

/// Centroids of the locally projected densities; `None` below 1e-6 population.
pub fn local_centroids(field: &TdseField, sys: &System) -> [Option<f64>; 2] {
    let [u, d] = local_densities(field, sys);
    [centroid(&field.grid, &u), centroid(&field.grid, &d)]
}

/// One unmerged Strang step.
pub fn tdse_step(field: &TdseField, sys: &System, dt: f64) -> Result<TdseField> {
    let mut s = TdseSolver::new(*sys, field.clone(), dt, None)?;
    s.step();
    Ok(s.field)
}

/// Which basis resolves the two branches in reported statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchBasis {
    /// Local field eigenbasis.
    #[default]
    Local,
    /// Fixed z basis (meaningful for Bx = 0, where it is the local basis at z > 0).
    Lab,
}

/// Per-branch moments of the TDSE state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchMoments {
    /// Grid population plus absorbed norm.
    pub population: f64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

pub struct TdseSolver {
    pub sys: System,
    pub field: TdseField,
    pub dt: f64,
    pub t: f64,
    absorber: Option<Absorber>,
    /// Norm removed by the absorber, per local label.
    absorbed: [f64; 2],
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    /// e^{−iħk²dt/4m}/N and e^{−iħk²dt/2m}/N.
    kin_half: Vec<Complex64>,
    kin_full: Vec<Complex64>,
    pot: Vec<Mat2>,
    mask: Vec<f64>,
    axes: Vec<[f64; 3]>,
}

impl TdseSolver {
    pub fn new(sys: System, field: TdseField, dt: f64, absorber: Option<Absorber>) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::invalid("tdse_dt_s", "must be finite and nonzero"));
        }
        let grid = field.grid;
        let hbar = sys.consts.hbar;
        let m = sys.species.mass;
        let vmax = grid
            .points()
            .map(|z| 0.5 * (sys.species.g_f * sys.consts.mu_b * sys.field.magnitude(z)).abs())
            .fold(sys.consts.mu_b * 0.0, f64::max);
        let phase = vmax * dt.abs() / hbar;
        if phase >= 0.5 {
            return Err(Error::invalid(
                "tdse_dt_s",
                format!("max|V|dt/hbar = {phase:.3} must be < 0.5; reduce dt or the domain"),
            ));
        }
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len())];
        let inv_n = 1.0 / n as f64;
        let ks = grid.wavenumbers();
        let kin = |f: f64| -> Vec<Complex64> {
            ks.iter().map(|k| Complex64::from_polar(inv_n, -hbar * k * k * dt * f / (2.0 * m))).collect()
        };
        let pot = grid.points().map(|z| sys.hamiltonian(z).propagator(dt, hbar)).collect();
        let mask = match absorber {
            None => vec![1.0; n],
            Some(a) => {
                if !(a.width > 0.0 && a.strength >= 0.0) {
                    return Err(Error::invalid("tdse_absorber_width_m", "width must be positive"));
                }
                grid.points()
                    .map(|z| {
                        let depth = (grid.z_min + a.width - z).max(z - (grid.z_max - a.width)).max(0.0);
                        (-a.strength * (depth / a.width).powi(2) * dt.abs()).exp()
                    })
                    .collect()
            }
        };
        let axes = axes(&sys, &grid);
        Ok(Self {
            sys,
            field,
            dt,
            t: 0.0,
            absorber,
            absorbed: [0.0; 2],
            fft,
            ifft,
            scratch,
            kin_half: kin(0.5),
            kin_full: kin(1.0),
            pot,
            mask,
            axes,
        })
    }

    fn kinetic(&mut self, half: bool) {
        let phase = if half { &self.kin_half } else { &self.kin_full };
        for psi in [&mut self.field.psi_plus, &mut self.field.psi_minus] {
            self.fft.process_with_scratch(psi, &mut self.scratch);
            for (x, p) in psi.iter_mut().zip(phase) {
                *x *= p;
            }
            self.ifft.process_with_scratch(psi, &mut self.scratch);
        }
    }

    fn potential(&mut self) {
        let dz = self.field.grid.dz();
        let absorbing = self.absorber.is_some();
        let mut lost = [0.0; 2];
        for j in 0..self.pot.len() {
            let u = &self.pot[j].0;
            let (a, b) = (self.field.psi_plus[j], self.field.psi_minus[j]);
            let mut a1 = u[0][0] * a + u[0][1] * b;
            let mut b1 = u[1][0] * a + u[1][1] * b;
            if absorbing {
                let m = self.mask[j];
                if m < 1.0 {
                    let up = up_density(a1, b1, &self.axes[j]).max(0.0);
                    let tot = a1.norm_sqr() + b1.norm_sqr();
                    let f = 1.0 - m * m;
                    lost[0] += f * up;
                    lost[1] += f * (tot - up).max(0.0);
                    a1 *= m;
                    b1 *= m;
                }
            }
            self.field.psi_plus[j] = a1;
            self.field.psi_minus[j] = b1;
        }
        self.absorbed[0] += lost[0] * dz;
        self.absorbed[1] += lost[1] * dz;
    }

    /// One Strang step: K(dt/2) V(dt) K(dt/2).
    pub fn step(&mut self) {
        self.kinetic(true);
        self.potential();
        self.kinetic(true);
        self.t += self.dt;
    }

    /// `n` Strang steps with adjacent kinetic halves merged.
    pub fn advance(&mut self, n: usize) {
        if n == 0 {
            return;
        }
        self.kinetic(true);
        for i in 0..n {
            self.potential();
            if i + 1 < n {
                self.kinetic(false);
            }
        }
        self.kinetic(true);
        self.t += self.dt * n as f64;
    }

    pub fn absorbed(&self) -> [f64; 2] {
        self.absorbed
    }

    /// Grid norm plus absorbed norm.
    pub fn total_norm(&self) -> f64 {
        self.field.norm() + self.absorbed[0] + self.absorbed[1]
    }

    /// Errors when norm reaches the outer 5% of the grid without an absorber.
    pub fn check_boundary(&self) -> Result<()> {
        if self.absorber.is_some() {
            return Ok(());
        }
        let n = self.field.grid.n_points;
        let edge = ((n as f64 * EDGE_FRACTION) as usize).max(1);
        let d = self.field.density();
        let leaked = (d[..edge].iter().sum::<f64>() + d[n - edge..].iter().sum::<f64>()) * self.field.grid.dz();
        if leaked > LEAK_TOL {
            return Err(Error::BoundaryLeak { leaked, t: self.t });
        }
        Ok(())
    }

    pub fn branch_densities(&self, basis: BranchBasis) -> [Vec<f64>; 2] {
        match basis {
            BranchBasis::Local => {
                let mut up = Vec::with_capacity(self.axes.len());
                let mut down = Vec::with_capacity(self.axes.len());
                for ((a, b), n) in self.field.psi_plus.iter().zip(&self.field.psi_minus).zip(&self.axes) {
                    let u = up_density(*a, *b, n).max(0.0);
                    up.push(u);
                    down.push((a.norm_sqr() + b.norm_sqr() - u).max(0.0));
                }
                [up, down]
            }
            BranchBasis::Lab => lab_densities(&self.field),
        }
    }

    /// Populations (with absorbed norm in the local basis), centroids and widths per branch.
    pub fn branch_moments(&self, basis: BranchBasis) -> [BranchMoments; 2] {
        let grid = &self.field.grid;
        let dens = self.branch_densities(basis);
        let absorbed = match basis {
            BranchBasis::Local => self.absorbed,
            BranchBasis::Lab => [0.0; 2],
        };
        let mk = |d: &Vec<f64>, extra: f64| {
            let mean = centroid(grid, d);
            BranchMoments {
                population: integrate(d, grid.dz()) + extra,
                mean,
                std: mean.map(|m| spread(grid, d, m)),
            }
        };
        [mk(&dens[0], absorbed[0]), mk(&dens[1], absorbed[1])]
    }
}
