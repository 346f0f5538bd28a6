//! Integrals ∫ Ψ dB of deterministic operator-valued integrands against a
//! cylindrical fBm: the Γ_Ψ factorisation, Hilbert–Schmidt tests and sampling.

use crate::cylfbm::{tail_verdict, CylFbm, TailReport, TailRule};
use crate::error::{domain, Error, Result};
use crate::fbm_core::{Hurst, Regime, TimeGrid};
use crate::fracops::{kstar_image, restrict_interval, Image, SampledFunction};
use crate::par;
use crate::quad::gauss_legendre;
use nalgebra::DMatrix;

/// How A(t) = i*Ψ*(t) (an N × m_V matrix) is obtained.
#[derive(Debug, Clone)]
pub enum IntegrandRule {
    /// Values at the grid nodes, linear in between.
    Nodes(Vec<DMatrix<f64>>),
    /// A(t) = diag(q_k e^{−λ_k (c − t)}) with c = `anchor`, or diag(q_k e^{−λ_k t}) when `anchor` is None.
    Diagonal { lambda: Vec<f64>, q: Vec<f64>, anchor: Option<f64> },
}

/// Ψ on a time grid, optionally restricted to [t_a, t_b].
#[derive(Debug, Clone)]
pub struct OperatorIntegrand {
    grid: TimeGrid,
    rule: IntegrandRule,
    scale: f64,
    support: (usize, usize),
}

impl OperatorIntegrand {
    pub fn nodes(grid: TimeGrid, a: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.len() != grid.n() + 1 {
            return domain("need one matrix per grid node");
        }
        let shape = a[0].shape();
        if shape.0 == 0 || shape.1 == 0 || a.iter().any(|m| m.shape() != shape) {
            return domain("matrices must share a nonempty shape");
        }
        if a.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return domain("integrand must be finite on the grid");
        }
        Ok(OperatorIntegrand { grid, rule: IntegrandRule::Nodes(a), scale: 1.0, support: (0, grid.n()) })
    }

    /// Semigroup integrand S(c − t)C or S(t)C for a diagonal generator.
    pub fn diagonal(grid: TimeGrid, lambda: Vec<f64>, q: Vec<f64>, anchor: Option<f64>) -> Result<Self> {
        if lambda.is_empty() || lambda.len() != q.len() {
            return domain("λ and q must have the same positive length");
        }
        if lambda.iter().chain(&q).any(|v| !v.is_finite()) || lambda.iter().any(|&l| l < 0.0) {
            return domain("λ must be finite and nonnegative, q finite");
        }
        Ok(OperatorIntegrand {
            grid,
            rule: IntegrandRule::Diagonal { lambda, q, anchor },
            scale: 1.0,
            support: (0, grid.n()),
        })
    }

    pub fn zero(grid: TimeGrid, n_modes: usize, m_v: usize) -> Result<Self> {
        OperatorIntegrand::nodes(grid, vec![DMatrix::zeros(n_modes, m_v); grid.n() + 1])
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_modes(&self) -> usize {
        match &self.rule {
            IntegrandRule::Nodes(a) => a[0].nrows(),
            IntegrandRule::Diagonal { lambda, .. } => lambda.len(),
        }
    }

    pub fn m_v(&self) -> usize {
        match &self.rule {
            IntegrandRule::Nodes(a) => a[0].ncols(),
            IntegrandRule::Diagonal { lambda, .. } => lambda.len(),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.grid.node(self.support.0), self.grid.node(self.support.1))
    }

    /// c·Ψ
    pub fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.scale *= c;
        p
    }

    /// 1_{[a,b]}Ψ for grid nodes a < b (intersected with the current support).
    pub fn restricted(&self, a: f64, b: f64) -> Result<Self> {
        let (ia, ib) = (self.grid.index_of(a)?, self.grid.index_of(b)?);
        if ia >= ib {
            return domain("restriction interval must have a < b");
        }
        let mut p = self.clone();
        p.support = (ia.max(self.support.0), ib.min(self.support.1));
        if p.support.0 >= p.support.1 {
            return domain("restriction leaves an empty support");
        }
        Ok(p)
    }

    /// A(t) without the support indicator.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let a = match &self.rule {
            IntegrandRule::Nodes(a) => {
                let n = self.grid.n();
                let h = self.grid.h();
                let i = ((t / h).floor().max(0.0) as usize).min(n - 1);
                let x = ((t - self.grid.node(i)) / h).clamp(0.0, 1.0);
                &a[i] * (1.0 - x) + &a[i + 1] * x
            }
            IntegrandRule::Diagonal { lambda, q, anchor } => {
                let n = lambda.len();
                DMatrix::from_fn(n, n, |r, c| {
                    if r != c {
                        return 0.0;
                    }
                    let arg = match anchor {
                        Some(c0) => c0 - t,
                        None => t,
                    };
                    q[r] * (-lambda[r] * arg).exp()
                })
            }
        };
        a * self.scale
    }

    /// The R^N-valued function t ↦ 1_support(t) A(t) v*.
    pub fn applied(&self, v_star: &[f64]) -> Result<SampledFunction> {
        if v_star.len() != self.m_v() {
            return domain(format!("functional must have {} coordinates", self.m_v()));
        }
        let v = nalgebra::DVector::from_column_slice(v_star);
        let f = SampledFunction::from_fn(self.grid, self.n_modes(), |t| (self.eval(t) * &v).as_slice().to_vec())?;
        if self.support == (0, self.grid.n()) {
            Ok(f)
        } else {
            restrict_interval(&f, self.support.0, self.support.1)
        }
    }
}

const OVERFLOW_GUARD: f64 = 1e150;

fn guard(im: Image) -> Result<Image> {
    let v = im.l2_norm_sq();
    if !v.is_finite() || v > OVERFLOW_GUARD {
        return Err(Error::NotIntegrable(format!("K* quadrature diverged (squared norm {v:e})")));
    }
    Ok(im)
}

/// Γ*_Ψ v* = K*(i*Ψ*(·)v*) at nodes and rule points.
pub fn gamma_adjoint_image(psi: &OperatorIntegrand, v_star: &[f64], hurst: Hurst) -> Result<Image> {
    guard(kstar_image(&psi.applied(v_star)?, hurst))
}

/// Γ*_Ψ v* at the grid nodes.
pub fn gamma_adjoint(psi: &OperatorIntegrand, v_star: &[f64], hurst: Hurst) -> Result<SampledFunction> {
    Ok(gamma_adjoint_image(psi, v_star, hurst)?.to_function())
}

fn unit(m: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[j] = 1.0;
    v
}

/// Q_Ψ = Γ_Ψ Γ*_Ψ in the coordinate basis of V: entries ⟨Γ* f_i, Γ* f_j⟩_{L²}.
pub fn covariance_q_psi(psi: &OperatorIntegrand, hurst: Hurst) -> Result<DMatrix<f64>> {
    let m = psi.m_v();
    let images = (0..m).map(|j| gamma_adjoint_image(psi, &unit(m, j), hurst)).collect::<Result<Vec<_>>>()?;
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = images[i].l2_inner(&images[j])?;
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    Ok(q)
}

/// ∬_{[0,t]²} e^{−λ(t−s)−λ(t−r)} |s−r|^{2H−2} ds dr for H > 1/2.
///
/// With x = λ(t − s) this is λ^{−2H} ∫_0^L v^{2H−2} (e^{−v} − e^{−2L+v}) dv, L = λt.
pub fn exp_double_integral(lambda: f64, t: f64, hurst: Hurst) -> f64 {
    let h = hurst.value();
    assert!(h > 0.5, "defined for H > 1/2");
    if t <= 0.0 {
        return 0.0;
    }
    let e = 2.0 * h - 1.0;
    if lambda == 0.0 {
        return t.powf(2.0 * h) / (h * e);
    }
    let l = lambda * t;
    let g = |v: f64| (-v).exp() - (v - 2.0 * l).exp();
    let gl = gauss_legendre(16);
    // w = v^{2H−1} on [0, min(L,1)] absorbs the endpoint power
    let v1 = l.min(1.0);
    let panels = 64;
    let wmax = v1.powf(e);
    let mut s = 0.0;
    for p in 0..panels {
        let (a, b) = (wmax * p as f64 / panels as f64, wmax * (p + 1) as f64 / panels as f64);
        s += gl.integrate(a, b, |w| g(w.powf(1.0 / e))) / e;
    }
    // beyond v = 80 the integrand is below e^{−80}
    let top = l.min(80.0);
    let mut a = 1.0;
    while a < top {
        let b = (a * 1.25).min(top);
        s += gl.integrate(a, b, |v| v.powf(e - 1.0) * g(v));
        a = b;
    }
    s * lambda.powf(-2.0 * h)
}

const LOW_EXP_CUTOFF: f64 = 30.0;
const LOW_EXP_GRID: usize = 1024;

/// ‖1_{[0,len]} e^{−λ(len−·)}‖²_M.
///
/// HIGH: H(2H−1) times [`exp_double_integral`]. LOW: self-similarity gives
/// λ^{−2H} ‖1_{[0,τ]} e^{−(τ−·)}‖²_M with τ = λ·len, and the reflection
/// identity replaces the integrand by e^{−s} on [0, τ]; mass beyond τ = 30 is
/// below double precision and is dropped.
pub fn exp_m_norm_sq(lambda: f64, len: f64, hurst: Hurst) -> f64 {
    let h = hurst.value();
    if len <= 0.0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return len.powf(2.0 * h);
    }
    match hurst.regime() {
        Regime::High => h * (2.0 * h - 1.0) * exp_double_integral(lambda, len, hurst),
        Regime::Low => lambda.powf(-2.0 * h) * low_unit_exp_norm_sq((lambda * len).min(LOW_EXP_CUTOFF), hurst),
    }
}

/// ‖1_{[0,τ]} e^{−s}‖²_M for the rough regime.
fn low_unit_exp_norm_sq(tau: f64, hurst: Hurst) -> f64 {
    let grid = TimeGrid::new(tau, LOW_EXP_GRID).expect("positive horizon");
    let f = SampledFunction::scalar(grid, |s| (-s).exp()).expect("finite");
    kstar_image(&f, hurst).l2_norm_sq()
}

/// Terms ‖Γ* f_k‖²_{L²} for the first `n` basis functionals of V.
pub fn hs_terms(psi: &OperatorIntegrand, hurst: Hurst, n: usize) -> Result<Vec<f64>> {
    if n > psi.m_v() {
        return domain(format!("integrand has only {} basis functionals", psi.m_v()));
    }
    match &psi.rule {
        IntegrandRule::Diagonal { lambda, q, anchor } => {
            let (a, b) = psi.support();
            let len = b - a;
            // every mode past the cutoff shares one scaled norm
            let saturated = std::sync::OnceLock::new();
            let norm_sq = |lam: f64| {
                if hurst.regime() == Regime::Low && lam * len >= LOW_EXP_CUTOFF {
                    let c = *saturated.get_or_init(|| low_unit_exp_norm_sq(LOW_EXP_CUTOFF, hurst));
                    lam.powf(-2.0 * hurst.value()) * c
                } else {
                    exp_m_norm_sq(lam, len, hurst)
                }
            };
            Ok(crate::par::map_range(n, |k| {
                    let qk = q[k] * psi.scale;
                    // shift so the exponential peaks at the right end of the support
                    let pref = match anchor {
                        Some(c) => (-2.0 * lambda[k] * (c - b)).exp(),
                        None => (-2.0 * lambda[k] * a).exp(),
                    };
                    qk * qk * pref * norm_sq(lambda[k])
                }))
        }
        IntegrandRule::Nodes(_) => {
            let m = psi.m_v();
            (0..n).map(|k| Ok(gamma_adjoint_image(psi, &unit(m, k), hurst)?.l2_norm_sq())).collect()
        }
    }
}

/// Partial sums of Σ_k ‖Γ* f_k‖² with the tail verdict of [`tail_verdict`].
pub fn hs_test(psi: &OperatorIntegrand, hurst: Hurst, n: usize, rule: TailRule, declared: Option<f64>) -> Result<TailReport> {
    Ok(tail_verdict(&hs_terms(psi, hurst, n)?, rule, declared))
}

/// Z_Ψ f_j = Σ_k ∫_0^t ⟨Ψ(s) i e_k, f_j⟩ db_k(s) on every path of `b`.
///
/// The integrand is frozen at the midpoint of each cell of the grid of `b`
/// (typically a refinement of the integrand grid). Returns n_paths × m_V.
pub fn simulate(psi: &OperatorIntegrand, b: &CylFbm, upto_t: f64) -> Result<DMatrix<f64>> {
    let fine = b.grid();
    let n_modes = psi.n_modes();
    if b.embedding.n_modes() < n_modes {
        return domain("cylindrical fBm has fewer components than the integrand");
    }
    let (a, s_end) = psi.support();
    let stop = fine.index_of(upto_t.min(s_end))?;
    let start = fine.index_of(a)?;
    let m = psi.m_v();
    let cells: Vec<(usize, DMatrix<f64>)> =
        (start..stop.max(start)).map(|i| (i, psi.eval(0.5 * (fine.node(i) + fine.node(i + 1))))).collect();
    let rows: Vec<Vec<f64>> = par::map_range(b.n_paths(), |p| {
        let mut out = vec![0.0; m];
        for (i, amat) in &cells {
            for k in 0..n_modes {
                let comp = b.component(k + 1);
                let db = comp.value(p, i + 1) - comp.value(p, *i);
                for j in 0..m {
                    let v = amat[(k, j)];
                    if v != 0.0 {
                        out[j] += v * db;
                    }
                }
            }
        }
        out
    });
    Ok(DMatrix::from_fn(rows.len(), m, |p, j| rows[p][j]))
}

/// Outcome of comparing ‖Γ*_Φ v*‖ with ‖Γ*_Ψ v*‖ over a family of functionals.
#[derive(Debug, Clone)]
pub struct DominationReport {
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub hs_phi: Vec<f64>,
    pub hs_psi: Vec<f64>,
    /// Σ_{k≤N} ‖Γ*_Φ f_k‖² ≤ c² Σ_{k≤N} ‖Γ*_Ψ f_k‖² for every N.
    pub holds: bool,
}

/// Ratios of M-norms over `family` (the coordinate functionals are always added)
/// and the partial-sum comparison implied by the largest ratio.
pub fn domination_check(phi: &OperatorIntegrand, psi: &OperatorIntegrand, hurst: Hurst, family: &[Vec<f64>]) -> Result<DominationReport> {
    let m = psi.m_v();
    if phi.m_v() != m {
        return domain("Φ and Ψ must act on the same V");
    }
    let mut fam: Vec<Vec<f64>> = (0..m).map(|j| unit(m, j)).collect();
    fam.extend(family.iter().cloned());
    let mut ratios = Vec::with_capacity(fam.len());
    let (mut sq_phi, mut sq_psi) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for v in &fam {
        let a = gamma_adjoint_image(phi, v, hurst)?.l2_norm_sq();
        let b = gamma_adjoint_image(psi, v, hurst)?.l2_norm_sq();
        if sq_phi.len() < m {
            // the unit functionals come first; their norms are the HS terms
            sq_phi.push(a);
            sq_psi.push(b);
        }
        let (a, b) = (a.sqrt(), b.sqrt());
        ratios.push(if b > 0.0 { a / b } else if a == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let c = ratios.iter().cloned().fold(0.0, f64::max);
    let hs_phi = partial_sums(&sq_phi);
    let hs_psi = partial_sums(&sq_psi);
    let holds = hs_phi.iter().zip(&hs_psi).all(|(x, y)| *x <= c * c * y * (1.0 + 1e-9) + 1e-300);
    Ok(DominationReport { ratios, max_ratio: c, hs_phi, hs_psi, holds })
}

fn partial_sums(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// ‖1_{[t, t+dt]} i*Ψ*(·)v*‖²_M for each dt (grid multiples; dt = 0 gives 0).
pub fn mean_square_continuity(psi: &OperatorIntegrand, hurst: Hurst, t: f64, dts: &[f64], v_star: &[f64]) -> Result<Vec<f64>> {
    dts.iter()
        .map(|&dt| {
            if dt == 0.0 {
                return Ok(0.0);
            }
            let piece = psi.restricted(t, t + dt)?;
            Ok(gamma_adjoint_image(&piece, v_star, hurst)?.l2_norm_sq())
        })
        .collect()
}
