//! Wiener integrals ∫ f db of deterministic R^m-valued integrands against a
//! scalar fBm, by step sums on fBm paths or through K* on Brownian paths.

use crate::error::{domain, Result};
use crate::fbm_core::{path_rng, FbmPathSet, Hurst};
use crate::fracops::{kstar_image, m_inner_simple, SampledFunction, SimpleFunction};
use crate::par;
use crate::quad::cell_rule;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Samples of ∫ f db together with the exact second moment E‖∫ f db‖².
#[derive(Debug, Clone)]
pub struct WienerIntegralResult {
    /// One row per path, one column per component.
    pub samples: DMatrix<f64>,
    pub exact_second_moment: f64,
    /// Standard error of the sample mean of ‖∫ f db‖².
    pub stderr: f64,
}

impl WienerIntegralResult {
    pub fn empirical_second_moment(&self) -> f64 {
        let n = self.samples.nrows() as f64;
        self.samples.row_iter().map(|r| r.norm_squared()).sum::<f64>() / n
    }
}

/// Σ x_i (b(t_{i+1}) − b(t_i)) on every path; breakpoints must be grid nodes.
pub fn integrate_simple(f: &SimpleFunction, paths: &FbmPathSet) -> Result<DMatrix<f64>> {
    let grid = paths.grid;
    if f.t_end() > grid.t_end() * (1.0 + 1e-12) {
        return domain("integrand extends beyond the path horizon");
    }
    let idx: Vec<usize> = f.breakpoints().iter().map(|&b| grid.index_of(b)).collect::<Result<_>>()?;
    let m = f.dim();
    let rows: Vec<Vec<f64>> = par::map_range(paths.n_paths(), |p| {
        let path = paths.path(p);
        let mut out = vec![0.0; m];
        for (i, x) in f.pieces().iter().enumerate() {
            let db = path[idx[i + 1]] - path[idx[i]];
            for c in 0..m {
                out[c] += x[c] * db;
            }
        }
        out
    });
    Ok(DMatrix::from_fn(rows.len(), m, |p, c| rows[p][c]))
}

/// ⟨f, f⟩_M, the exact value of E‖∫ f db‖².
pub fn second_moment_exact(f: &SimpleFunction, hurst: Hurst) -> Result<f64> {
    m_inner_simple(f, f, hurst)
}

/// Step-sum samples plus exact second moment and its Monte Carlo standard error.
pub fn wiener_integral(f: &SimpleFunction, paths: &FbmPathSet) -> Result<WienerIntegralResult> {
    let samples = integrate_simple(f, paths)?;
    let exact = second_moment_exact(f, paths.hurst)?;
    let sq: Vec<f64> = samples.row_iter().map(|r| r.norm_squared()).collect();
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(WienerIntegralResult { samples, exact_second_moment: exact, stderr: (var / n).sqrt() })
}

/// Samples of ∫_0^T (K* f)(t) dW(t) for a standard Brownian motion W.
///
/// The integral is discretised on the grid of `f` with one Brownian increment
/// per quadrature point of each cell, so the sample variance targets exactly
/// the quadrature value of ‖K* f‖²_{L²}. Draw d uses RNG stream d.
pub fn integrate_via_kstar(f: &SampledFunction, hurst: Hurst, n_draws: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n_draws == 0 {
        return domain("need at least one draw");
    }
    let image = kstar_image(f, hurst);
    let grid = f.grid();
    let rule = cell_rule();
    let q = rule.len();
    let m = f.dim();
    let h = grid.h();
    let sd: Vec<f64> = rule.w.iter().map(|w| (w * h).sqrt()).collect();
    let mut weights = vec![0.0; grid.n() * q * m];
    for i in 0..grid.n() {
        for k in 0..q {
            for c in 0..m {
                weights[(i * q + k) * m + c] = image.inner_value(i, k, c) * sd[k];
            }
        }
    }
    let rows: Vec<Vec<f64>> = par::map_range(n_draws, |d| {
        let mut rng = path_rng(seed, d as u64);
        let mut out = vec![0.0; m];
        for r in 0..grid.n() * q {
            let z: f64 = rng.sample(StandardNormal);
            for c in 0..m {
                out[c] += weights[r * m + c] * z;
            }
        }
        out
    });
    Ok(DMatrix::from_fn(n_draws, m, |d, c| rows[d][c]))
}
