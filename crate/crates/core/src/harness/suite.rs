//! The batch validation suite run by `validate all`.
//!
//! Every group returns its checks; [`run_all`] orders them by name so that the
//! report text depends only on the seed and the scale.

use super::{jarque_bera, mc_compare, mc_compare_product, mc_compare_variance, Check, DEFAULT_Z, JB_CRITICAL_1PCT};
use crate::cauchy::{
    bound_check_high, bound_check_low, existence_criterion, mode_variance_exact, residual_convergence,
    semigroup_hs_test, simulate_mild_refined, SpectralModel,
};
use crate::cylfbm::{covariance_operator, q_form, CylFbm, Embedding, EmbeddingKind, TailRule, WeightRule};
use crate::error::Result;
use crate::fbm_core::{cov, kernel_reconstruction, path_rng, sample_paths, Hurst, TimeGrid};
use crate::fracops::{
    frac_derivative, frac_integral, g_f_form, kstar, kstar_direct_form, kstar_image, m_inner_simple, m_norm, restrict,
    SampledFunction, SimpleFunction,
};
use crate::harness::convergence_rate;
use crate::stochint::{covariance_q_psi, simulate, OperatorIntegrand};
use crate::wiener::{integrate_simple, second_moment_exact};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Problem sizes of a suite run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

struct Sizes {
    paths: usize,
    mode_paths: usize,
    kstar_n: usize,
    inversion_n: &'static [usize],
    reflect_n: usize,
}

impl Scale {
    fn sizes(self) -> Sizes {
        match self {
            Scale::Quick => Sizes {
                paths: 20_000,
                mode_paths: 4_000,
                kstar_n: 512,
                inversion_n: &[128, 256, 512, 1024],
                reflect_n: 256,
            },
            Scale::Full => Sizes {
                paths: 100_000,
                mode_paths: 10_000,
                kstar_n: 2048,
                inversion_n: &[512, 1024, 2048, 4096],
                reflect_n: 1024,
            },
        }
    }
}

fn hurst(h: f64) -> Hurst {
    Hurst::new(h).expect("valid Hurst literal")
}

fn tag(h: f64) -> String {
    format!("H{h:.2}")
}

/// Empirical Cov(b(s), b(t)) against R(s, t) on random node pairs.
pub fn covariance_law(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let sz = scale.sizes();
    let grid = TimeGrid::new(1.0, 64)?;
    let mut out = Vec::new();
    for h in [0.25, 0.75] {
        let paths = sample_paths(grid, hurst(h), sz.paths, seed)?;
        let mut rng = path_rng(seed, u64::MAX);
        for _ in 0..20 {
            let (i, j) = (rng.random_range(1..=64usize), rng.random_range(1..=64usize));
            let (s, t) = (grid.node(i), grid.node(j));
            let r = mc_compare_product(&paths.column(i), &paths.column(j), cov(s, t, h), DEFAULT_Z)?;
            out.push(Check::from_mc(format!("c01.cov.{}.s{s:.4}.t{t:.4}", tag(h)), &r));
        }
    }
    Ok(out)
}

/// ∫κ(s,u)κ(t,u)du against R(s,t).
pub fn kernel_reconstruction_check(_scale: Scale, _seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for h in [0.25, 0.75] {
        for (s, t) in [(0.5, 1.0), (0.25, 0.75), (1.0, 1.0), (0.3, 0.9)] {
            let v = kernel_reconstruction(s, t, hurst(h), 2048)?;
            out.push(Check::relative(format!("c02.kernel.{}.s{s}.t{t}", tag(h)), v, cov(s, t, h), 0.01));
        }
    }
    Ok(out)
}

fn random_simple(rng: &mut impl Rng, grid: TimeGrid, dim: usize) -> Result<SimpleFunction> {
    let mut idx: Vec<usize> = (1..grid.n()).filter(|_| rng.random_bool(0.3)).collect();
    idx.insert(0, 0);
    idx.push(grid.n());
    let bp: Vec<f64> = idx.iter().map(|&i| grid.node(i)).collect();
    let pieces = (0..bp.len() - 1).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect();
    SimpleFunction::new(bp, pieces)
}

/// E‖∫ f db‖² against ⟨f, f⟩_M for random step integrands.
pub fn wiener_isometry(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let sz = scale.sizes();
    let grid = TimeGrid::new(1.0, 16)?;
    let mut out = Vec::new();
    for h in [0.25, 0.75] {
        let paths = sample_paths(grid, hurst(h), sz.paths, seed ^ 0x5eed)?;
        let mut rng = path_rng(seed, u64::MAX - 1);
        for i in 0..5 {
            let f = random_simple(&mut rng, grid, 1 + i % 2)?;
            let s = integrate_simple(&f, &paths)?;
            let sq: Vec<f64> = s.row_iter().map(|r| r.norm_squared()).collect();
            let r = mc_compare(&sq, second_moment_exact(&f, hurst(h))?, DEFAULT_Z)?;
            out.push(Check::from_mc(format!("c03.wiener.{}.f{i}", tag(h)), &r));
        }
    }
    Ok(out)
}

fn rel_l2(a: &SampledFunction, b: &SampledFunction) -> Result<f64> {
    let d = a.add(&b.scaled(-1.0))?;
    Ok(d.l2_norm() / b.l2_norm())
}

/// ‖K*f‖² against ⟨f,f⟩_M, and agreement of the three K* forms.
pub fn kstar_checks(scale: Scale, _seed: u64) -> Result<Vec<Check>> {
    let n = scale.sizes().kstar_n;
    let grid = TimeGrid::new(1.0, n)?;
    let mut out = Vec::new();
    let step = SimpleFunction::scalar(vec![0.0, 0.25, 0.5, 1.0], vec![1.0, -2.0, 0.5])?;
    for h in [0.25, 0.75] {
        let hu = hurst(h);
        let f = step.to_sampled(grid)?;
        let lhs = kstar_image(&f, hu).l2_norm_sq();
        out.push(Check::relative(format!("c04.isometry.{}", tag(h)), lhs, m_inner_simple(&step, &step, hu)?, 0.01));
    }
    let cases: [(f64, &str, fn(f64) -> f64); 2] = [(0.75, "const", |_| 1.0), (0.25, "sin", |t: f64| t.sin())];
    for (h, name, f) in cases {
        let f = SampledFunction::scalar(grid, f)?;
        let a = kstar_direct_form(&f, hurst(h));
        let b = kstar(&f, hurst(h));
        out.push(Check::absolute(format!("c04.direct_form.{}.{name}", tag(h)), rel_l2(&a, &b)?, 0.0, 0.01));
    }
    let f = SampledFunction::scalar(grid, |t| (-t).exp())?;
    let g = g_f_form(&f, hurst(0.25))?;
    let k = kstar_image(&f, hurst(0.25));
    out.push(Check::absolute("c04.g_form.H0.25.exp", g.rel_l2_distance(&k)?, 0.0, 0.01));
    out.push(Check::relative("c04.g_form_norm.H0.25.exp", g.l2_norm_sq().sqrt(), k.l2_norm_sq().sqrt(), 0.01));
    Ok(out)
}

/// D^α I^α f = f with a fitted rate under grid doubling.
pub fn inversion(scale: Scale, _seed: u64) -> Result<Vec<Check>> {
    let ns = scale.sizes().inversion_n;
    let mut out = Vec::new();
    let fs: [(&str, fn(f64) -> f64); 3] =
        [("sin", |t: f64| t.sin()), ("exp", |t: f64| t.exp()), ("poly", |t: f64| 1.0 - 2.0 * t + 3.0 * t * t * t)];
    for alpha in [0.3, 0.7] {
        for (name, f) in fs {
            let mut errs = Vec::new();
            let mut hs = Vec::new();
            for &n in ns {
                let g = TimeGrid::new(1.0, n)?;
                let f = SampledFunction::scalar(g, f)?;
                let back = frac_derivative(&frac_integral(&f, alpha)?, alpha)?;
                errs.push(rel_l2(&back, &f)?.max(1e-300));
                hs.push(g.h());
            }
            let last = *errs.last().unwrap();
            out.push(Check::absolute(format!("c05.inversion.a{alpha}.{name}"), last, 0.0, 1e-3));
            let rate = convergence_rate(&errs, &hs)?;
            out.push(Check::flag(format!("c05.rate.a{alpha}.{name}"), rate, 0.8, rate > 0.8));
        }
    }
    Ok(out)
}

/// ‖1_{[0,t]} f(t−·)‖_M = ‖1_{[0,t]} f‖_M.
pub fn reflection(scale: Scale, _seed: u64) -> Result<Vec<Check>> {
    let grid = TimeGrid::new(1.0, scale.sizes().reflect_n)?;
    let f = SampledFunction::scalar(grid, |t| 1.0 + t + (3.0 * t).sin())?;
    let mut out = Vec::new();
    for h in [0.25, 0.75] {
        for t in [0.25, 0.5, 1.0] {
            let a = m_norm(&restrict(&f, t, true)?, hurst(h));
            let b = m_norm(&restrict(&f, t, false)?, hurst(h));
            out.push(Check::relative(format!("c06.reflection.{}.t{t}", tag(h)), a, b, 0.01));
        }
    }
    Ok(out)
}

fn random_vec(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_rotation(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    g.qr().q()
}

/// Cross-covariances of B(s)u*, B(t)v* against ⟨Qu*,v*⟩R(s,t), and rotation invariance of Q.
pub fn cylindrical(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let sz = scale.sizes();
    let grid = TimeGrid::new(1.0, 8)?;
    let h = 0.7;
    let embeddings = [
        ("diagonal", Embedding::diagonal(WeightRule::Power(-1.0), 4)?),
        ("sheet", Embedding::spatial(EmbeddingKind::Sheet { cells: 2 }, WeightRule::Power(0.0), 4, 9)?),
    ];
    let mut out = Vec::new();
    let mut rng = path_rng(seed, u64::MAX - 2);
    for (name, e) in embeddings {
        let b = CylFbm::new(e.clone(), hurst(h), grid, sz.paths, seed ^ 0xc11)?;
        let u = random_vec(&mut rng, e.dim());
        let v = random_vec(&mut rng, e.dim());
        let (s, t) = (0.5, 1.0);
        for (pair, x, y) in [("uu", &u, &u), ("uv", &u, &v), ("vv", &v, &v)] {
            let bs = crate::cylfbm::apply(&b, s, x)?;
            let bt = crate::cylfbm::apply(&b, t, y)?;
            let reference = q_form(&e, x, y)? * cov(s, t, h);
            let r = mc_compare_product(&bs, &bt, reference, DEFAULT_Z)?;
            out.push(Check::from_mc(format!("c07.cross_cov.{name}.{pair}"), &r));
        }
        let o = random_rotation(&mut rng, e.n_modes());
        let q0 = covariance_operator(&e);
        let q1 = covariance_operator(&e.rotated(&o)?);
        let diff = (&q0 - &q1).amax() / q0.amax();
        out.push(Check::absolute(format!("c07.rotation.{name}"), diff, 0.0, 1e-12));
    }
    Ok(out)
}

/// MC covariance of ∫ Ψ dB against Q_Ψ = ΓΓ* for a diagonal semigroup integrand.
pub fn integral_covariance(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let sz = scale.sizes();
    let grid = TimeGrid::new(1.0, 64)?;
    let lambda = vec![1.0, 4.0];
    let q = vec![1.0, 0.5];
    let psi = OperatorIntegrand::diagonal(grid, lambda.clone(), q, Some(1.0))?;
    let mut out = Vec::new();
    for h in [0.3, 0.75] {
        let qpsi = covariance_q_psi(&psi, hurst(h))?;
        let b = CylFbm::new(Embedding::diagonal(WeightRule::Power(0.0), 2)?, hurst(h), grid, sz.paths, seed ^ 0x1e7)?;
        let z = simulate(&psi, &b, 1.0)?;
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let xi: Vec<f64> = z.column(i).iter().cloned().collect();
            let xj: Vec<f64> = z.column(j).iter().cloned().collect();
            let r = mc_compare_product(&xi, &xj, qpsi[(i, j)], DEFAULT_Z)?;
            out.push(Check::from_mc(format!("c08.q_psi.{}.{i}{j}", tag(h)), &r));
        }
        let x0: Vec<f64> = z.column(0).iter().take(10_000).cloned().collect();
        let jb = jarque_bera(&x0);
        out.push(Check::at_most(format!("c08.normality.{}", tag(h)), jb, JB_CRITICAL_1PCT, jb <= JB_CRITICAL_1PCT));
    }
    Ok(out)
}

/// Exact mode variance: λ = 0 identity, brute-force double sum, Monte Carlo.
pub fn mode_variance(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let sz = scale.sizes();
    let mut out = Vec::new();
    for h in [0.3, 0.75] {
        let v = mode_variance_exact(0.0, 1.5, 0.5, hurst(h))?;
        out.push(Check::relative(format!("c09.lambda0.{}", tag(h)), v, 2.25 * 0.5f64.powf(2.0 * h), 1e-15));
    }
    let h = 0.75;
    let exact = mode_variance_exact(1.0, 1.0, 1.0, hurst(h))?;
    out.push(Check::relative("c09.brute_force.H0.75", exact, midpoint_double_sum(1.0, 1.0, h, 4096), 0.005));
    let model = SpectralModel::new(vec![1.0], vec![1.0], vec![0.0])?;
    let paths = simulate_mild_refined(&model, hurst(h), TimeGrid::new(1.0, 16)?, 8, sz.mode_paths, seed ^ 0x3ea7)?;
    let r = mc_compare_variance(&paths.column(0, 16), exact, DEFAULT_Z)?;
    out.push(Check::from_mc("c09.monte_carlo.H0.75", &r));
    Ok(out)
}

/// H(2H−1) Σ_{i≠j} w_i w_j |s_i − s_j|^{2H−2} dx² plus exact diagonal cells, w = e^{−λ(t−s)}.
pub fn midpoint_double_sum(lambda: f64, t: f64, h: f64, cells: usize) -> f64 {
    let dx = t / cells as f64;
    let w: Vec<f64> = (0..cells).map(|i| (-lambda * (t - (i as f64 + 0.5) * dx)).exp()).collect();
    let e = 2.0 * h - 2.0;
    let lag: Vec<f64> = (0..cells).map(|k| if k == 0 { 0.0 } else { (k as f64 * dx).powf(e) * dx * dx }).collect();
    let diag = dx.powf(2.0 * h) / (h * (2.0 * h - 1.0));
    let rows: Vec<f64> = crate::par::map_range(cells, |i| {
        let mut s = w[i] * diag;
        for (j, wj) in w.iter().enumerate() {
            s += wj * lag[i.abs_diff(j)];
        }
        w[i] * s
    });
    h * (2.0 * h - 1.0) * rows.iter().sum::<f64>()
}

/// Existence verdicts for the Laplacian presets, cross-checked with the HS test.
pub fn threshold(_scale: Scale, _seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (dim, h, expect) in [(1, 0.3, true), (1, 0.2, false), (2, 0.6, true), (2, 0.4, false)] {
        let m = SpectralModel::laplacian(dim, &WeightRule::Power(0.0), 512)?;
        let ex = existence_criterion(&m, hurst(h), TailRule::Auto)?;
        let hs = semigroup_hs_test(&m, hurst(h), 1.0, TailRule::Fitted)?;
        let agree = ex.tail.verdict == hs.verdict;
        out.push(Check::flag(
            format!("c10.threshold.n{dim}.{}", tag(h)),
            hs.exponent.unwrap_or(f64::NAN),
            ex.tail.exponent.unwrap_or(f64::NAN),
            agree && ex.exists() == expect,
        ));
    }
    Ok(out)
}

/// The explicit per-mode bounds for λ ∈ {1, 10, 100}.
pub fn bounds(_scale: Scale, _seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for lambda in [1.0, 10.0, 100.0] {
        let r = bound_check_high(lambda, hurst(0.75), 1.0)?;
        out.push(Check::at_most(format!("c11.bound.H0.75.{}.l{lambda}", r.name), r.value, r.bound, r.holds()));
        for r in bound_check_low(lambda, hurst(0.25), 1.0)? {
            out.push(Check::at_most(format!("c11.bound.H0.25.{}.l{lambda}", r.name), r.value, r.bound, r.holds()));
        }
    }
    Ok(out)
}

/// Weak-form residual of simulated modes and its decay under refinement.
pub fn weak_residual(_scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let model = SpectralModel::new(vec![1.0, 4.0, 9.0], vec![1.0, 1.0, 0.5], vec![0.5, 0.0, -1.0])?;
    let grid = TimeGrid::new(1.0, 16)?;
    let factors = [8usize, 16, 32, 64];
    let mut out = Vec::new();
    for h in [0.3, 0.75] {
        for p in 0..3 {
            let res = residual_convergence(&model, hurst(h), grid, &factors, p, seed)?;
            out.push(Check::absolute(format!("c12.residual.{}.p{p}", tag(h)), res[0], 0.0, 5e-3));
            let hs: Vec<f64> = factors.iter().map(|f| 1.0 / *f as f64).collect();
            let rate = convergence_rate(&res, &hs)?;
            out.push(Check::flag(format!("c12.rate.{}.p{p}", tag(h)), rate, 0.0, rate > 0.0));
        }
    }
    Ok(out)
}

type Group = fn(Scale, u64) -> Result<Vec<Check>>;

/// All groups in criterion order.
pub const GROUPS: [(&str, Group); 12] = [
    ("covariance_law", covariance_law),
    ("kernel_reconstruction", kernel_reconstruction_check),
    ("wiener_isometry", wiener_isometry),
    ("kstar", kstar_checks),
    ("inversion", inversion),
    ("reflection", reflection),
    ("cylindrical", cylindrical),
    ("integral_covariance", integral_covariance),
    ("mode_variance", mode_variance),
    ("threshold", threshold),
    ("bounds", bounds),
    ("weak_residual", weak_residual),
];

/// Runs every group; a group that errors contributes one failing check.
pub fn run_all(scale: Scale, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for (name, g) in GROUPS {
        match g(scale, seed) {
            Ok(v) => out.extend(v),
            Err(e) => out.push(Check::flag(format!("{name}.error: {e}"), f64::NAN, f64::NAN, false)),
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

/// The report text: one line per check.
pub fn render(checks: &[Check]) -> String {
    checks.iter().map(|c| c.line() + "\n").collect()
}
