//! Browser bindings for a few cylfbm operations. Each export has a plain Rust
//! twin so it can be tested natively.

use cylfbm::cauchy::{existence_criterion, SpectralModel};
use cylfbm::cylfbm::{TailRule, WeightRule};
use cylfbm::fbm_core::{sample_paths, Hurst, TimeGrid};
use cylfbm::fracops::{kstar, m_norm, Interp, SampledFunction};
use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

fn hurst(h: f64) -> Res<Hurst> {
    Hurst::new(h).map_err(|e| e.to_string())
}

/// Row-major `paths × (n + 1)` values of fBm on [0, 1].
pub fn fbm_paths(h: f64, n: usize, paths: usize, seed: u64) -> Res<Vec<f64>> {
    if paths == 0 || paths > 64 || n > 4096 {
        return Err("need 1..=64 paths and at most 4096 cells".into());
    }
    let grid = TimeGrid::new(1.0, n).map_err(|e| e.to_string())?;
    let set = sample_paths(grid, hurst(h)?, paths, seed).map_err(|e| e.to_string())?;
    Ok((0..paths).flat_map(|p| set.path(p).to_vec()).collect())
}

/// K* of the step function equal to `a` on [0, split) and `b` on [split, 1].
/// Returns the n + 1 node values followed by the M-norm.
pub fn kstar_step_curve(h: f64, n: usize, split: f64, a: f64, b: f64) -> Res<Vec<f64>> {
    if !(1..=4096).contains(&n) {
        return Err("cells must lie in 1..=4096".into());
    }
    let grid = TimeGrid::new(1.0, n).map_err(|e| e.to_string())?;
    let values = DMatrix::from_fn(n + 1, 1, |j, _| if grid.node(j) < split { a } else { b });
    let f = SampledFunction::new(grid, values, Interp::Step).map_err(|e| e.to_string())?;
    let h = hurst(h)?;
    let mut out: Vec<f64> = kstar(&f, h).values().iter().copied().collect();
    out.push(m_norm(&f, h));
    Ok(out)
}

/// Existence report for the Laplacian preset (λ_k = k^{2/dim}) with q_k = k^p,
/// as `verdict;exponent;sum_1;sum_2;...`.
pub fn heat_report(h: f64, dim: usize, weight_power: f64, modes: usize) -> Res<String> {
    if !(1..=3).contains(&dim) || !(2..=4096).contains(&modes) {
        return Err("dim must lie in 1..=3 and modes in 2..=4096".into());
    }
    let model = SpectralModel::laplacian(dim, &WeightRule::Power(weight_power), modes).map_err(|e| e.to_string())?;
    let r = existence_criterion(&model, hurst(h)?, TailRule::Auto).map_err(|e| e.to_string())?;
    let exponent = r.tail.exponent.map_or("none".to_string(), |p| format!("{p}"));
    let sums: Vec<String> = r.tail.partial_sums.iter().map(|s| format!("{s}")).collect();
    Ok(format!("{};{};{}", r.label(), exponent, sums.join(";")))
}

fn js<T>(r: Res<T>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sample_fbm(h: f64, n: usize, paths: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    js(fbm_paths(h, n, paths, u64::from(seed)))
}

#[wasm_bindgen]
pub fn kstar_step(h: f64, n: usize, split: f64, a: f64, b: f64) -> Result<Vec<f64>, JsError> {
    js(kstar_step_curve(h, n, split, a, b))
}

#[wasm_bindgen]
pub fn heat_existence(h: f64, dim: usize, weight_power: f64, modes: usize) -> Result<String, JsError> {
    js(heat_report(h, dim, weight_power, modes))
}
