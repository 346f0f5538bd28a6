//! Scalar fractional Brownian motion: covariance, Volterra kernel and exact
//! Gaussian path sampling.

use crate::error::{domain, Error, Result};
use crate::par;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// H < 1/2
    Low,
    /// H > 1/2
    High,
}

/// Hurst index in (0, 1) with 1/2 excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) || h == 0.5 {
            return domain(format!("Hurst index must lie in (0,1) without 1/2, got {h}"));
        }
        Ok(Hurst(h))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn regime(self) -> Regime {
        if self.0 < 0.5 {
            Regime::Low
        } else {
            Regime::High
        }
    }
}

impl TryFrom<f64> for Hurst {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Hurst::new(h)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

/// Uniform partition of [0, T] into n cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return domain(format!("horizon must be positive and finite, got {t_end}"));
        }
        if n == 0 {
            return domain("grid needs at least one cell");
        }
        Ok(TimeGrid { t_end, n })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.t_end / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n {
            self.t_end
        } else {
            j as f64 * self.t_end / self.n as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|j| self.node(j)).collect()
    }

    /// Index of the node equal to `t` (up to a relative tolerance of 1e-9).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.h();
        let j = x.round();
        if j < 0.0 || j > self.n as f64 || (x - j).abs() > 1e-9 * self.n.max(1) as f64 {
            return domain(format!("time {t} is not a node of the grid (T={}, n={})", self.t_end, self.n));
        }
        Ok(j as usize)
    }

    /// Grid with `factor` times as many cells on the same horizon.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return domain("refinement factor must be positive");
        }
        TimeGrid::new(self.t_end, self.n * factor)
    }
}

/// R(s, t) = ½(s^{2H} + t^{2H} − |s − t|^{2H}).
pub fn covariance(s: f64, t: f64, hurst: Hurst) -> Result<f64> {
    if s < 0.0 || t < 0.0 || !s.is_finite() || !t.is_finite() {
        return domain(format!("covariance needs nonnegative times, got ({s}, {t})"));
    }
    Ok(cov(s, t, hurst.value()))
}

pub(crate) fn cov(s: f64, t: f64, h: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (s.powf(e) + t.powf(e) - (s - t).abs().powf(e))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag k.
pub fn fgn_autocov(k: usize, hurst: Hurst) -> f64 {
    let e = 2.0 * hurst.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(e) + (k - 1.0).abs().powf(e) - 2.0 * k.powf(e))
}

/// Normalising constant b_H of the Volterra kernel.
pub fn b_h_constant(hurst: Hurst) -> f64 {
    let h = hurst.value();
    match hurst.regime() {
        Regime::High => (h * (2.0 * h - 1.0) / beta(2.0 - 2.0 * h, h - 0.5)).sqrt(),
        Regime::Low => (2.0 * h / ((1.0 - 2.0 * h) * beta(1.0 - 2.0 * h, h + 0.5))).sqrt(),
    }
}

/// ∫_u^t (r − u)^{a−1} r^b dr for 0 < u < t and a > 0.
///
/// On [u, 2u] the substitution w = (r − u)^a removes the endpoint power; the
/// rest uses r = e^z, which keeps the integrand smooth when u ≪ t.
fn power_integral(u: f64, t: f64, a: f64, b: f64, quad_n: usize) -> f64 {
    let split = (2.0 * u).min(t);
    let n1 = if split < t { quad_n.div_ceil(2) } else { quad_n };
    let n2 = quad_n - n1.min(quad_n);
    let w_max = (split - u).powf(a);
    let dw = w_max / n1 as f64;
    let mut near = 0.0;
    for i in 0..n1 {
        let w = (i as f64 + 0.5) * dw;
        let r = u + w.powf(1.0 / a);
        near += r.powf(b);
    }
    near *= dw / a;
    if split >= t || n2 == 0 {
        return near;
    }
    let (z0, z1) = (split.ln(), t.ln());
    let dz = (z1 - z0) / n2 as f64;
    let mut far = 0.0;
    for i in 0..n2 {
        let r = (z0 + (i as f64 + 0.5) * dz).exp();
        far += (r - u).powf(a - 1.0) * r.powf(b + 1.0);
    }
    near + far * dz
}

/// Volterra kernel κ(t, u) with R(s,t) = ∫_0^{s∧t} κ(s,u)κ(t,u) du.
pub fn kernel_kappa(t: f64, u: f64, hurst: Hurst, quad_n: usize) -> Result<f64> {
    if !(u > 0.0 && u < t) {
        return domain(format!("kernel needs 0 < u < t, got u={u}, t={t}"));
    }
    if quad_n < 2 {
        return domain("kernel quadrature needs at least two nodes");
    }
    Ok(kappa(t, u, hurst, quad_n))
}

pub(crate) fn kappa(t: f64, u: f64, hurst: Hurst, quad_n: usize) -> f64 {
    let h = hurst.value();
    let b = b_h_constant(hurst);
    match hurst.regime() {
        Regime::High => {
            let beta_ = h - 0.5;
            b * u.powf(-beta_) * power_integral(u, t, beta_, beta_, quad_n)
        }
        Regime::Low => {
            let alpha = 0.5 - h;
            let first = (u / t).powf(alpha) * (t - u).powf(-alpha);
            let corr = alpha * u.powf(alpha) * power_integral(u, t, 1.0 - alpha, -alpha - 1.0, quad_n);
            b * (first + corr)
        }
    }
}

/// ∂κ/∂s (s, t) for s > t.
pub fn kernel_dkappa_ds(s: f64, t: f64, hurst: Hurst) -> f64 {
    let h = hurst.value();
    let b = b_h_constant(hurst);
    match hurst.regime() {
        Regime::High => b * (s - t).powf(h - 1.5) * (s / t).powf(h - 0.5),
        Regime::Low => b * (h - 0.5) * (s / t).powf(h - 0.5) * (s - t).powf(h - 1.5),
    }
}

/// ∫_0^{s∧t} κ(s,u)κ(t,u) du with endpoint-graded midpoint sums.
pub fn kernel_reconstruction(s: f64, t: f64, hurst: Hurst, quad_n: usize) -> Result<f64> {
    if !(s > 0.0 && t > 0.0) {
        return domain("reconstruction needs positive times");
    }
    let m = s.min(t);
    let gamma = (hurst.value() - 0.5).abs();
    // exponent of the integrand at u → 0 and at u → m
    let e0 = -2.0 * gamma;
    let e1 = match (hurst.regime(), s == t) {
        (Regime::High, true) => 2.0 * gamma,
        (Regime::High, false) => gamma,
        (Regime::Low, true) => -2.0 * gamma,
        (Regime::Low, false) => -gamma,
    };
    let p = 1.0 / (1.0 + e0);
    let q = 1.0 / (1.0 + e1);
    let half = 0.5 * m;
    let nq = quad_n.max(2);
    let nh = nq / 2;
    let dx = 1.0 / nh as f64;
    let f = |u: f64| kappa(s, u, hurst, nq) * kappa(t, u, hurst, nq);
    let left: f64 = par::map_range(nh, |i| {
        let x = (i as f64 + 0.5) * dx;
        let u = half * x.powf(p);
        f(u) * half * p * x.powf(p - 1.0)
    })
    .iter()
    .sum();
    let right: f64 = par::map_range(nh, |i| {
        let y = (i as f64 + 0.5) * dx;
        let u = m - half * y.powf(q);
        f(u) * half * q * y.powf(q - 1.0)
    })
    .iter()
    .sum();
    Ok((left + right) * dx)
}

/// Cumulative sum starting from 0.
pub fn increments_to_path(increments: &[f64]) -> Vec<f64> {
    let mut path = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    path.push(0.0);
    for x in increments {
        acc += x;
        path.push(acc);
    }
    path
}

/// First differences.
pub fn path_to_increments(path: &[f64]) -> Vec<f64> {
    path.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Discrete fBm paths, one row per path; column j holds b(t_j).
#[derive(Debug, Clone)]
pub struct FbmPathSet {
    pub grid: TimeGrid,
    pub hurst: Hurst,
    pub seed: u64,
    n_paths: usize,
    data: Vec<f64>,
}

impl FbmPathSet {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let w = self.grid.n() + 1;
        &self.data[p * w..(p + 1) * w]
    }

    pub fn value(&self, p: usize, j: usize) -> f64 {
        self.data[p * (self.grid.n() + 1) + j]
    }

    /// Values b(t_j) across all paths.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, j)).collect()
    }

    /// Paths restricted to every `step`-th node.
    pub fn coarsen(&self, step: usize) -> Result<FbmPathSet> {
        if step == 0 || self.grid.n() % step != 0 {
            return domain("coarsening step must divide the number of cells");
        }
        let grid = TimeGrid::new(self.grid.t_end(), self.grid.n() / step)?;
        let mut data = Vec::with_capacity(self.n_paths * (grid.n() + 1));
        for p in 0..self.n_paths {
            let path = self.path(p);
            data.extend((0..=grid.n()).map(|j| path[j * step]));
        }
        Ok(FbmPathSet { grid, hurst: self.hurst, seed: self.seed, n_paths: self.n_paths, data })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for p in 0..self.n_paths {
            write!(w, ",path_{p}")?;
        }
        writeln!(w)?;
        for j in 0..=self.grid.n() {
            write!(w, "{:.16e}", self.grid.node(j))?;
            for p in 0..self.n_paths {
                write!(w, ",{:.16e}", self.value(p, j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// How the Gaussian increment vector is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMethod {
    /// Circulant embedding, falling back to Cholesky on a negative spectrum.
    Auto,
    Cholesky,
}

enum Factor {
    Circulant { sqrt_eig: Vec<f64> },
    Cholesky { l: DMatrix<f64> },
}

/// Precomputed factorisation of the fGn covariance on a grid.
pub struct FgnSampler {
    n: usize,
    factor: Factor,
}

impl FgnSampler {
    pub fn new(grid: TimeGrid, hurst: Hurst, method: SamplerMethod) -> Result<Self> {
        let n = grid.n();
        let scale = grid.h().powf(2.0 * hurst.value());
        let gam: Vec<f64> = (0..=n).map(|k| fgn_autocov(k, hurst) * scale).collect();
        if method == SamplerMethod::Auto {
            let m = 2 * n;
            let mut c: Vec<Complex<f64>> = (0..m)
                .map(|k| Complex::new(if k <= n { gam[k] } else { gam[m - k] }, 0.0))
                .collect();
            FftPlanner::new().plan_fft_forward(m).process(&mut c);
            let max = c.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
            let min = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            if min >= -1e-10 * max {
                let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
                return Ok(FgnSampler { n, factor: Factor::Circulant { sqrt_eig } });
            }
        }
        let cmat = DMatrix::from_fn(n, n, |i, j| gam[i.abs_diff(j)]);
        match cmat.cholesky() {
            Some(ch) => Ok(FgnSampler { n, factor: Factor::Cholesky { l: ch.unpack() } }),
            None => {
                let eig = DMatrix::from_fn(n, n, |i, j| gam[i.abs_diff(j)]).symmetric_eigenvalues();
                let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                Err(Error::Internal(format!(
                    "circulant embedding and Cholesky both failed (minimum eigenvalue {min:e})"
                )))
            }
        }
    }

    /// Fills `out[0..n]` with one increment vector drawn from `rng`.
    fn draw(&self, rng: &mut ChaCha8Rng, fft: &dyn rustfft::Fft<f64>, buf: &mut [Complex<f64>], out: &mut [f64]) {
        match &self.factor {
            Factor::Circulant { sqrt_eig } => {
                for (z, s) in buf.iter_mut().zip(sqrt_eig) {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    *z = Complex::new(s * a, s * b);
                }
                fft.process(buf);
                for (o, z) in out.iter_mut().zip(buf.iter()) {
                    *o = z.re;
                }
            }
            Factor::Cholesky { l } => {
                let z: Vec<f64> = (0..self.n).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..self.n {
                    let mut s = 0.0;
                    for k in 0..=i {
                        s += l[(i, k)] * z[k];
                    }
                    out[i] = s;
                }
            }
        }
    }
}

/// Random stream for path `p` of a stream family.
pub(crate) fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Independent fBm paths on `grid`; path p uses RNG stream p.
pub fn sample_paths(grid: TimeGrid, hurst: Hurst, n_paths: usize, seed: u64) -> Result<FbmPathSet> {
    sample_paths_with(grid, hurst, n_paths, seed, 0, SamplerMethod::Auto)
}

/// As [`sample_paths`], with path p drawn from stream `stream_base + p`.
pub fn sample_paths_with(
    grid: TimeGrid,
    hurst: Hurst,
    n_paths: usize,
    seed: u64,
    stream_base: u64,
    method: SamplerMethod,
) -> Result<FbmPathSet> {
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let sampler = FgnSampler::new(grid, hurst, method)?;
    let n = grid.n();
    let width = n + 1;
    let mut data = vec![0.0; n_paths * width];
    let fft = FftPlanner::new().plan_fft_forward(2 * n);
    par::chunks_mut(&mut data, width, |p, row| {
        let mut rng = path_rng(seed, stream_base + p as u64);
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];
        let mut inc = vec![0.0; n];
        sampler.draw(&mut rng, fft.as_ref(), &mut buf, &mut inc);
        row[0] = 0.0;
        let mut acc = 0.0;
        for j in 0..n {
            acc += inc[j];
            row[j + 1] = acc;
        }
    });
    Ok(FbmPathSet { grid, hurst, seed, n_paths, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    fn hh(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    #[test]
    fn hurst_validation() {
        assert!(Hurst::new(0.5).is_err());
        assert!(Hurst::new(0.0).is_err());
        assert!(Hurst::new(1.0).is_err());
        assert!(Hurst::new(f64::NAN).is_err());
        assert_eq!(hh(0.3).regime(), Regime::Low);
        assert_eq!(hh(0.7).regime(), Regime::High);
    }

    #[test]
    fn covariance_examples() {
        let h = hh(0.75);
        assert!((covariance(1.0, 2.0, h).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(covariance(0.0, 0.7, h).unwrap(), 0.0);
        assert!((covariance(0.3, 0.3, hh(0.2)).unwrap() - 0.3f64.powf(0.4)).abs() < 1e-15);
        assert!(covariance(-1.0, 1.0, h).is_err());
    }

    #[test]
    fn b_h_matches_gamma_oracle() {
        // β(a,b) = Γ(a)Γ(b)/Γ(a+b) with frozen values Γ(1/2) = √π, Γ(1/4), Γ(3/4)
        let g14 = 3.625_609_908_221_908_3;
        let g34 = 1.225_416_702_465_177_6;
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let beta_half_quarter = sqrt_pi * g14 / g34;
        let expect_high = (0.75f64 * 0.5).sqrt() / beta_half_quarter.sqrt();
        assert!((b_h_constant(hh(0.75)) - expect_high).abs() < 1e-12);
        let beta_half_3q = sqrt_pi * g34 / (0.25 * g14);
        let expect_low = (0.5 / (0.5 * beta_half_3q)).sqrt();
        assert!((b_h_constant(hh(0.25)) - expect_low).abs() < 1e-12);
        assert!((gamma(0.25) - g14).abs() < 1e-12);
    }

    #[test]
    fn kernel_domain_errors() {
        assert!(kernel_kappa(1.0, 1.0, hh(0.3), 64).is_err());
        assert!(kernel_kappa(1.0, 0.0, hh(0.7), 64).is_err());
    }

    #[test]
    fn dkappa_matches_finite_difference() {
        for h in [0.3, 0.75] {
            let hu = hh(h);
            let (s, t, d) = (0.8, 0.4, 1e-4);
            let fd = (kappa(s + d, t, hu, 20000) - kappa(s - d, t, hu, 20000)) / (2.0 * d);
            let an = kernel_dkappa_ds(s, t, hu);
            assert!(((fd - an) / an).abs() < 1e-3, "H={h}: {fd} vs {an}");
        }
    }

    #[test]
    fn path_increment_roundtrip() {
        assert_eq!(path_to_increments(&[0.0, 1.0, 3.0]), vec![1.0, 2.0]);
        assert_eq!(increments_to_path(&[0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let inc = vec![0.3, -1.2, 2.5, 0.0];
        let back = path_to_increments(&increments_to_path(&inc));
        for (a, b) in inc.iter().zip(&back) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = TimeGrid::new(1.0, 32).unwrap();
        let a = sample_paths(g, hh(0.3), 5, 42).unwrap();
        let b = sample_paths(g, hh(0.3), 5, 42).unwrap();
        assert_eq!(a.data, b.data);
        assert!(a.column(0).iter().all(|&x| x == 0.0));
        let c = sample_paths(g, hh(0.3), 5, 43).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn cholesky_fallback_variance() {
        let g = TimeGrid::new(2.0, 1).unwrap();
        let hu = hh(0.7);
        let ps = sample_paths_with(g, hu, 40000, 7, 0, SamplerMethod::Cholesky).unwrap();
        let v: f64 = ps.column(1).iter().map(|x| x * x).sum::<f64>() / 40000.0;
        let exact = 2f64.powf(1.4);
        assert!((v - exact).abs() < 4.0 * exact * (2.0 / 40000f64).sqrt());
    }

    #[test]
    fn grid_index_lookup() {
        let g = TimeGrid::new(2.0, 8).unwrap();
        assert_eq!(g.index_of(0.5).unwrap(), 2);
        assert_eq!(g.index_of(2.0).unwrap(), 8);
        assert!(g.index_of(0.3).is_err());
        assert_eq!(g.node(8), 2.0);
    }
}
