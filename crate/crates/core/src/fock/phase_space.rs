//! Position-basis wavefunctions and Wigner functions of single-mode states.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DensityMatrix, StateVector, C64};
use crate::error::{Result, SimError};

/// Uniform grid `[lo, hi]` with `points` samples (inclusive ends).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl UniformGrid {
    /// 2048 points over `[-8, 8]`.
    pub const POSITION: UniformGrid = UniformGrid { lo: -8.0, hi: 8.0, points: 2048 };

    pub fn step(&self) -> f64 {
        if self.points < 2 {
            return 0.0;
        }
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.value(i))
    }
}

fn single_mode(dim_modes: usize, what: &str) -> Result<()> {
    if dim_modes != 1 {
        return Err(SimError::Unsupported(format!("{what} needs a single-mode state, got {dim_modes} modes")));
    }
    Ok(())
}

/// Normalized Hermite functions `phi_0(x) .. phi_{dim-1}(x)`.
fn hermite_functions(x: f64, dim: usize, out: &mut Vec<f64>) {
    out.clear();
    let phi0 = PI.powf(-0.25) * (-x * x / 2.0).exp();
    out.push(phi0);
    if dim > 1 {
        out.push(2f64.sqrt() * x * phi0);
    }
    for n in 1..dim.saturating_sub(1) {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
}

/// Position-space wavefunction `psi(x)` sampled on `grid`.
pub fn position_amplitudes(state: &StateVector, grid: &UniformGrid) -> Result<Vec<C64>> {
    single_mode(state.layout().num_modes(), "position wavefunction")?;
    let dim = state.dim();
    let mut h = Vec::with_capacity(dim);
    Ok(grid
        .values()
        .map(|x| {
            hermite_functions(x, dim, &mut h);
            state.amplitudes().iter().zip(&h).map(|(c, &f)| c * f).sum()
        })
        .collect())
}

/// `|psi(x)|^2` on `grid`.
pub fn position_density(state: &StateVector, grid: &UniformGrid) -> Result<Vec<f64>> {
    Ok(position_amplitudes(state, grid)?.iter().map(|a| a.norm_sqr()).collect())
}

/// Grid positions of strict local maxima of a sampled density whose height is
/// at least `rel_height` times the global maximum.
pub fn density_peaks(density: &[f64], grid: &UniformGrid, rel_height: f64) -> Vec<f64> {
    let max = density.iter().cloned().fold(0.0, f64::max);
    (1..density.len().saturating_sub(1))
        .filter(|&i| {
            density[i] >= rel_height * max && density[i] > density[i - 1] && density[i] >= density[i + 1]
        })
        .map(|i| grid.value(i))
        .collect()
}

/// Wigner function on the `xs x ps` lattice, row `i` for `ps[i]`, column `j` for `xs[j]`.
///
/// Convention: `x = (a + a^dag)/sqrt2`, normalized to unit integral, so that
/// `W(0, 0) = <parity>/pi`.
pub fn wigner(rho: &DensityMatrix, xs: &UniformGrid, ps: &UniformGrid) -> Result<DMatrix<f64>> {
    single_mode(rho.layout().num_modes(), "Wigner function")?;
    let dim = rho.dim();
    let r = rho.entries();
    let mut out = DMatrix::zeros(ps.points, xs.points);
    let mut lag = vec![0.0; dim + 1];
    for (i, p) in ps.values().enumerate() {
        for (j, x) in xs.values().enumerate() {
            let alpha = C64::new(x, p) / 2f64.sqrt();
            let b = 4.0 * alpha.norm_sqr();
            let mut w = 0.0;
            for m in 0..dim {
                // diagonal and upper triangle: term for rho[m, n] with n >= m uses L_m^{n-m}(B)
                let mut pow = C64::new(1.0, 0.0); // (2 alpha)^(n-m)
                let mut fact_ratio = 1.0; // sqrt(m!/n!)
                for n in m..dim {
                    let k = n - m;
                    if k > 0 {
                        pow *= 2.0 * alpha;
                        fact_ratio /= (n as f64).sqrt();
                    }
                    let rmn = r[(m, n)];
                    if rmn.norm_sqr() == 0.0 {
                        continue;
                    }
                    let l = laguerre(m, k as f64, b, &mut lag);
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    let term = (rmn * pow).re * sign * fact_ratio * l;
                    w += if k == 0 { term } else { 2.0 * term };
                }
            }
            out[(i, j)] = w * (-b / 2.0).exp() / PI;
        }
    }
    Ok(out)
}

/// Generalized Laguerre `L_m^{k}(x)` by upward recurrence.
fn laguerre(m: usize, k: f64, x: f64, buf: &mut [f64]) -> f64 {
    buf[0] = 1.0;
    if m == 0 {
        return 1.0;
    }
    buf[1] = 1.0 + k - x;
    for j in 1..m {
        let jf = j as f64;
        buf[j + 1] = ((2.0 * jf + 1.0 + k - x) * buf[j] - (jf + k) * buf[j - 1]) / (jf + 1.0);
    }
    buf[m]
}

/// Mean parity `<(-1)^n>` of a single-mode density matrix.
pub fn parity_expectation(rho: &DensityMatrix) -> Result<f64> {
    single_mode(rho.layout().num_modes(), "parity")?;
    Ok((0..rho.dim())
        .map(|n| if n % 2 == 0 { rho.entries()[(n, n)].re } else { -rho.entries()[(n, n)].re })
        .sum())
}

/// Trapezoid-free Riemann integral of a Wigner lattice.
pub fn wigner_integral(w: &DMatrix<f64>, xs: &UniformGrid, ps: &UniformGrid) -> f64 {
    w.sum() * xs.step() * ps.step()
}
