//! Cylindrical fBm B(t)u* = Σ_k ⟨i e_k, u*⟩ b_k(t) for finite-dimensional
//! embeddings, the covariance operator Q = ii*, and Hilbert–Schmidt tail tests.

use crate::error::{domain, Result};
use crate::fbm_core::{sample_paths_with, FbmPathSet, Hurst, SamplerMethod, TimeGrid};
use crate::par;
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Noise weights q_k, k ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// q_k = k^p
    Power(f64),
    /// q_1, q_2, …; zero beyond the list
    List(Vec<f64>),
}

impl WeightRule {
    pub fn q(&self, k: usize) -> f64 {
        match self {
            WeightRule::Power(p) => (k as f64).powf(*p),
            WeightRule::List(v) => v.get(k - 1).copied().unwrap_or(0.0),
        }
    }

    /// Decay exponent of q_k² when it is known from the rule.
    pub fn declared_square_exponent(&self) -> Option<f64> {
        match self {
            WeightRule::Power(p) => Some(-2.0 * p),
            WeightRule::List(_) => None,
        }
    }
}

/// How the basis e_k of X is carried into U.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmbeddingKind {
    /// X = U = R^N, i e_k = q_k e_k.
    Diagonal,
    /// X = U = L²(0,1) on m points, i e_k = τ_k e_k with τ_k(x) = q_k (1 + x).
    WeightedBasis,
    /// i e_k = q_k 1_{A_k} e_k, A_k the ((k−1) mod cells)-th cell of a uniform partition.
    Sheet { cells: usize },
}

/// A truncated embedding i : X → U stored through the coordinates of i e_k.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub kind: EmbeddingKind,
    pub weights: WeightRule,
    n_modes: usize,
    /// Column k−1 holds i e_k in U coordinates.
    ie: DMatrix<f64>,
    /// Quadrature weights of the U pairing.
    omega: Vec<f64>,
}

/// √2 sin(kπx), orthonormal in L²(0,1).
fn sine(k: usize, x: f64) -> f64 {
    2f64.sqrt() * (k as f64 * PI * x).sin()
}

fn spatial_grid(m: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..m).map(|l| l as f64 / (m - 1) as f64).collect();
    let dx = 1.0 / (m - 1) as f64;
    let omega = (0..m).map(|l| if l == 0 || l == m - 1 { 0.5 * dx } else { dx }).collect();
    (xs, omega)
}

fn sheet_cell(x: f64, cells: usize) -> usize {
    ((x * cells as f64).floor() as usize).min(cells - 1)
}

impl Embedding {
    pub fn diagonal(weights: WeightRule, n_modes: usize) -> Result<Embedding> {
        if n_modes == 0 {
            return domain("truncation must be positive");
        }
        let q: Vec<f64> = (1..=n_modes).map(|k| weights.q(k)).collect();
        if q.iter().any(|v| !v.is_finite()) {
            return domain("weights must be finite");
        }
        let ie = DMatrix::from_fn(n_modes, n_modes, |a, b| if a == b { q[a] } else { 0.0 });
        Ok(Embedding { kind: EmbeddingKind::Diagonal, weights, n_modes, ie, omega: vec![1.0; n_modes] })
    }

    /// Spatial embeddings on an m-point grid of [0,1]; the sine basis is
    /// discretely orthonormal when m ≥ N + 2.
    pub fn spatial(kind: EmbeddingKind, weights: WeightRule, n_modes: usize, m: usize) -> Result<Embedding> {
        if kind == EmbeddingKind::Diagonal {
            return Embedding::diagonal(weights, n_modes);
        }
        if n_modes == 0 || m < n_modes + 2 {
            return domain("spatial embeddings need N ≥ 1 and m ≥ N + 2 grid points");
        }
        if let EmbeddingKind::Sheet { cells } = kind {
            if cells == 0 {
                return domain("sheet partition needs at least one cell");
            }
        }
        let (xs, omega) = spatial_grid(m);
        let ie = DMatrix::from_fn(m, n_modes, |l, kk| {
            let k = kk + 1;
            let x = xs[l];
            let q = weights.q(k);
            match kind {
                EmbeddingKind::WeightedBasis => q * (1.0 + x) * sine(k, x),
                EmbeddingKind::Sheet { cells } => {
                    if sheet_cell(x, cells) == (k - 1) % cells {
                        q * sine(k, x)
                    } else {
                        0.0
                    }
                }
                EmbeddingKind::Diagonal => unreachable!(),
            }
        });
        Ok(Embedding { kind, weights, n_modes, ie, omega })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Dimension of the U coordinates.
    pub fn dim(&self) -> usize {
        self.ie.nrows()
    }

    /// i e_k for k = 1..N as columns.
    pub fn images(&self) -> &DMatrix<f64> {
        &self.ie
    }

    pub fn pairing_weights(&self) -> &[f64] {
        &self.omega
    }

    /// Basis vectors e_k (columns) in X coordinates.
    pub fn basis(&self) -> DMatrix<f64> {
        match self.kind {
            EmbeddingKind::Diagonal => DMatrix::identity(self.n_modes, self.n_modes),
            _ => {
                let (xs, _) = spatial_grid(self.dim());
                DMatrix::from_fn(self.dim(), self.n_modes, |l, kk| sine(kk + 1, xs[l]))
            }
        }
    }

    /// ⟨u, u*⟩ in the U pairing.
    pub fn pair(&self, u: &[f64], u_star: &[f64]) -> f64 {
        u.iter().zip(u_star).zip(&self.omega).map(|((a, b), w)| a * b * w).sum()
    }

    /// ⟨i e_k, u*⟩ for k = 1..N.
    pub fn coefficients(&self, u_star: &[f64]) -> Result<Vec<f64>> {
        if u_star.len() != self.dim() {
            return domain(format!("functional must have {} coordinates", self.dim()));
        }
        Ok((0..self.n_modes).map(|k| self.pair(self.ie.column(k).as_slice(), u_star)).collect())
    }

    /// The same operator i written in the rotated basis e'_k = Σ_j o_kj e_j.
    pub fn rotated(&self, o: &DMatrix<f64>) -> Result<Embedding> {
        if o.shape() != (self.n_modes, self.n_modes) {
            return domain("rotation must be N × N");
        }
        let mut e = self.clone();
        e.ie = &self.ie * o.transpose();
        Ok(e)
    }

    /// ‖i e_k‖²_U for the canonical basis, evaluated in closed form for any k ≥ 1.
    pub fn mode_norm_sq(&self, k: usize) -> f64 {
        let q2 = self.weights.q(k).powi(2);
        let kf = k as f64;
        match self.kind {
            EmbeddingKind::Diagonal => q2,
            // ∫_0^1 (1+x)² 2 sin²(kπx) dx = 7/3 − 1/(2k²π²)
            EmbeddingKind::WeightedBasis => q2 * (7.0 / 3.0 - 1.0 / (2.0 * kf * kf * PI * PI)),
            EmbeddingKind::Sheet { cells } => {
                let c = ((k - 1) % cells) as f64;
                let (a, b) = (c / cells as f64, (c + 1.0) / cells as f64);
                let w = 2.0 * kf * PI;
                q2 * ((b - a) - ((w * b).sin() - (w * a).sin()) / w)
            }
        }
    }
}

/// Truncated Q = ii* = Σ_{k ≤ N} (i e_k)(i e_k)^T in U coordinates.
pub fn covariance_operator(embedding: &Embedding) -> DMatrix<f64> {
    &embedding.ie * embedding.ie.transpose()
}

/// ⟨Q u*, v*⟩ = Σ_k ⟨i e_k, u*⟩⟨i e_k, v*⟩.
pub fn q_form(embedding: &Embedding, u_star: &[f64], v_star: &[f64]) -> Result<f64> {
    let a = embedding.coefficients(u_star)?;
    let b = embedding.coefficients(v_star)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum())
}

/// Cylindrical fBm with independent scalar components b_1..b_N.
#[derive(Debug, Clone)]
pub struct CylFbm {
    pub embedding: Embedding,
    pub hurst: Hurst,
    components: Vec<FbmPathSet>,
}

/// First RNG stream of component k (1-based); paths occupy the next 2^32 streams.
pub fn component_stream(k: usize) -> u64 {
    (k as u64) << 32
}

impl CylFbm {
    pub fn new(embedding: Embedding, hurst: Hurst, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<CylFbm> {
        let n = embedding.n_modes();
        let comps: Vec<Result<FbmPathSet>> = (1..=n)
            .map(|k| sample_paths_with(grid, hurst, n_paths, seed, component_stream(k), SamplerMethod::Auto))
            .collect();
        let components = comps.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(CylFbm { embedding, hurst, components })
    }

    pub fn grid(&self) -> TimeGrid {
        self.components[0].grid
    }

    pub fn n_paths(&self) -> usize {
        self.components[0].n_paths()
    }

    /// Paths of b_k, k = 1..N.
    pub fn component(&self, k: usize) -> &FbmPathSet {
        &self.components[k - 1]
    }
}

/// B(t)u* = Σ_{k ≤ N} ⟨i e_k, u*⟩ b_k(t) on every path; t must be a grid node.
pub fn apply(b: &CylFbm, t: f64, u_star: &[f64]) -> Result<Vec<f64>> {
    let j = b.grid().index_of(t)?;
    let coef = b.embedding.coefficients(u_star)?;
    Ok(par::map_range(b.n_paths(), |p| {
        coef.iter().enumerate().map(|(k, c)| if *c == 0.0 { 0.0 } else { c * b.components[k].value(p, j) }).sum()
    }))
}

/// How the tail of a positive series is judged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailRule {
    /// Use the exponent declared by the model when one exists, otherwise fit.
    Auto,
    /// Terms decay like k^{−p}; converges iff p > 1.
    Declared(f64),
    /// Fit p on the second half of the terms; p within [0.9, 1.1] is inconclusive.
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Genuine,
    CylindricalOnly,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Genuine => "genuine",
            Verdict::CylindricalOnly => "cylindrical-only",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Partial sums of a positive series and the tail verdict.
#[derive(Debug, Clone)]
pub struct TailReport {
    pub partial_sums: Vec<f64>,
    /// p in terms ~ k^{−p}, when declared or fitted.
    pub exponent: Option<f64>,
    pub verdict: Verdict,
    /// Integral-test estimate of Σ_{k > N} when the tail converges.
    pub tail_bound: Option<f64>,
}

impl TailReport {
    pub fn total(&self) -> f64 {
        *self.partial_sums.last().unwrap_or(&0.0)
    }
}

const BAND: (f64, f64) = (0.9, 1.1);

/// Least-squares decay exponent of the positive terms among the last half.
pub fn fit_decay_exponent(terms: &[f64]) -> Option<f64> {
    let n = terms.len();
    let pts: Vec<(f64, f64)> = (n / 2..n)
        .filter(|&i| terms[i] > 0.0)
        .map(|i| (((i + 1) as f64).ln(), terms[i].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

/// Tail verdict for Σ terms_k (terms indexed from k = 1).
pub fn tail_verdict(terms: &[f64], rule: TailRule, declared: Option<f64>) -> TailReport {
    let mut partial_sums = Vec::with_capacity(terms.len());
    let mut acc = 0.0;
    for t in terms {
        acc += t;
        partial_sums.push(acc);
    }
    let n = terms.len();
    let last = terms.last().copied().unwrap_or(0.0);
    let tail_zero = terms[n / 2..].iter().all(|&t| t == 0.0);
    let (exponent, verdict) = match rule {
        _ if tail_zero => (None, Verdict::Genuine),
        TailRule::Declared(p) => (Some(p), if p > 1.0 { Verdict::Genuine } else { Verdict::CylindricalOnly }),
        TailRule::Auto if declared.is_some() => {
            let p = declared.unwrap();
            (Some(p), if p > 1.0 { Verdict::Genuine } else { Verdict::CylindricalOnly })
        }
        _ => match fit_decay_exponent(terms) {
            None => (None, Verdict::Inconclusive),
            Some(p) if p > BAND.1 => (Some(p), Verdict::Genuine),
            Some(p) if p < BAND.0 => (Some(p), Verdict::CylindricalOnly),
            Some(p) => (Some(p), Verdict::Inconclusive),
        },
    };
    let tail_bound = match (verdict, exponent) {
        (Verdict::Genuine, Some(p)) => Some(last * n as f64 / (p - 1.0)),
        (Verdict::Genuine, None) => Some(0.0),
        _ => None,
    };
    TailReport { partial_sums, exponent, verdict, tail_bound }
}

/// Hilbert–Schmidt test Σ_k ‖i e_k‖² over the first `n` modes.
pub fn is_genuine(embedding: &Embedding, n: usize, rule: TailRule) -> TailReport {
    let terms: Vec<f64> = (1..=n).map(|k| embedding.mode_norm_sq(k)).collect();
    tail_verdict(&terms, rule, embedding.weights.declared_square_exponent())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_q_is_diag_of_squares() {
        let e = Embedding::diagonal(WeightRule::Power(-1.0), 4).unwrap();
        let q = covariance_operator(&e);
        for a in 0..4 {
            for b in 0..4 {
                let expect = if a == b { ((a + 1) as f64).powi(-2) } else { 0.0 };
                assert!((q[(a, b)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_q() {
        let e = Embedding::spatial(EmbeddingKind::Sheet { cells: 2 }, WeightRule::List(vec![]), 3, 9).unwrap();
        assert!(covariance_operator(&e).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_basis_discretely_orthonormal() {
        let e = Embedding::spatial(EmbeddingKind::WeightedBasis, WeightRule::Power(0.0), 5, 9).unwrap();
        let b = e.basis();
        for i in 0..5 {
            for j in 0..5 {
                let v = e.pair(b.column(i).as_slice(), b.column(j).as_slice());
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn verdict_examples() {
        let d = |w| Embedding::diagonal(w, 8).unwrap();
        assert_eq!(is_genuine(&d(WeightRule::Power(-1.0)), 512, TailRule::Auto).verdict, Verdict::Genuine);
        assert_eq!(is_genuine(&d(WeightRule::Power(0.0)), 512, TailRule::Auto).verdict, Verdict::CylindricalOnly);
        assert_eq!(is_genuine(&d(WeightRule::Power(-0.5)), 512, TailRule::Auto).verdict, Verdict::CylindricalOnly);
        assert_eq!(is_genuine(&d(WeightRule::Power(-0.5)), 512, TailRule::Fitted).verdict, Verdict::Inconclusive);
        assert_eq!(is_genuine(&d(WeightRule::Power(-1.0)), 512, TailRule::Fitted).verdict, Verdict::Genuine);
    }

    #[test]
    fn mode_norm_matches_grid_norm() {
        for kind in [EmbeddingKind::WeightedBasis, EmbeddingKind::Sheet { cells: 2 }] {
            let e = Embedding::spatial(kind, WeightRule::Power(-0.5), 4, 4001).unwrap();
            for k in 1..=4 {
                let col = e.images().column(k - 1);
                let g = e.pair(col.as_slice(), col.as_slice());
                assert!((g - e.mode_norm_sq(k)).abs() < 2e-3, "{kind:?} {k}: {g} vs {}", e.mode_norm_sq(k));
            }
        }
    }
}
