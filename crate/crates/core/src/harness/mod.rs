//! Monte Carlo comparisons, convergence fits and the `CHECK` report lines.

pub mod suite;

use crate::error::{domain, Result};
use std::fmt;

/// Default |z| threshold for Monte Carlo checks.
pub const DEFAULT_Z: f64 = 4.0;

/// A Monte Carlo estimate compared with a reference value.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub estimate: f64,
    pub stderr: f64,
    pub reference: f64,
    pub z_score: f64,
    pub n_samples: usize,
    pub threshold: f64,
    pub pass: bool,
}

fn report(estimate: f64, stderr: f64, reference: f64, n: usize, threshold: f64) -> McReport {
    let diff = estimate - reference;
    let z_score = if diff == 0.0 {
        0.0
    } else if stderr > 0.0 {
        diff / stderr
    } else {
        f64::INFINITY.copysign(diff)
    };
    McReport { estimate, stderr, reference, z_score, n_samples: n, threshold, pass: z_score.abs() <= threshold }
}

/// Sample mean and variance (n − 1 denominator).
pub fn mean_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Sample mean against `reference`, standard error s/√n.
pub fn mc_compare(samples: &[f64], reference: f64, z_threshold: f64) -> Result<McReport> {
    if samples.len() < 2 {
        return domain("need at least two samples");
    }
    let (mean, var) = mean_var(samples);
    Ok(report(mean, (var / samples.len() as f64).sqrt(), reference, samples.len(), z_threshold))
}

/// Sample variance against `reference`, standard error Var·√(2/(n−1)) (Gaussian samples).
pub fn mc_compare_variance(samples: &[f64], reference: f64, z_threshold: f64) -> Result<McReport> {
    if samples.len() < 2 {
        return domain("need at least two samples");
    }
    let (_, var) = mean_var(samples);
    let se = var * (2.0 / (samples.len() as f64 - 1.0)).sqrt();
    Ok(report(var, se, reference, samples.len(), z_threshold))
}

/// E[XY] for centred X, Y estimated by the mean of products.
pub fn mc_compare_product(x: &[f64], y: &[f64], reference: f64, z_threshold: f64) -> Result<McReport> {
    if x.len() != y.len() {
        return domain("paired samples must have equal length");
    }
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    mc_compare(&prods, reference, z_threshold)
}

/// Least-squares slope of log(error) against log(h).
pub fn convergence_rate(errors: &[f64], h: &[f64]) -> Result<f64> {
    if errors.len() < 3 || errors.len() != h.len() {
        return domain("need at least three (h, error) pairs");
    }
    if errors.iter().chain(h).any(|&v| !(v > 0.0)) {
        return domain("errors and step sizes must be positive");
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Jarque–Bera statistic; approximately χ²(2) under normality.
pub fn jarque_bera(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    n / 6.0 * (skew * skew + kurt * kurt / 4.0)
}

/// χ²(2) upper 1% point.
pub const JB_CRITICAL_1PCT: f64 = 9.210_340_371_976_184;

/// One line of a validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub reference: f64,
    /// Monte Carlo z-score, or a normalised discrepancy for deterministic checks (pass iff ≤ 1).
    pub z: f64,
    pub pass: bool,
}

impl Check {
    pub fn from_mc(name: impl Into<String>, r: &McReport) -> Check {
        Check { name: name.into(), estimate: r.estimate, reference: r.reference, z: r.z_score, pass: r.pass }
    }

    /// |estimate − reference| ≤ rel_tol·|reference|; z is the error in units of the tolerance.
    pub fn relative(name: impl Into<String>, estimate: f64, reference: f64, rel_tol: f64) -> Check {
        let err = (estimate - reference).abs() / reference.abs().max(f64::MIN_POSITIVE);
        let z = if estimate == reference { 0.0 } else { err / rel_tol };
        Check { name: name.into(), estimate, reference, z, pass: z <= 1.0 }
    }

    /// |estimate − reference| ≤ tol.
    pub fn absolute(name: impl Into<String>, estimate: f64, reference: f64, tol: f64) -> Check {
        let z = (estimate - reference).abs() / tol;
        Check { name: name.into(), estimate, reference, z, pass: z <= 1.0 }
    }

    /// estimate ≤ bound (z = estimate / bound).
    pub fn at_most(name: impl Into<String>, estimate: f64, bound: f64, pass: bool) -> Check {
        let z = if bound != 0.0 { estimate / bound } else { 0.0 };
        Check { name: name.into(), estimate, reference: bound, z, pass }
    }

    /// A boolean property; estimate and reference carry whatever number explains it.
    pub fn flag(name: impl Into<String>, estimate: f64, reference: f64, pass: bool) -> Check {
        Check { name: name.into(), estimate, reference, z: if pass { 0.0 } else { 1.0 / 0.0 }, pass }
    }

    pub fn line(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CHECK {} estimate={:.9e} ref={:.9e} z={:.4} verdict={}",
            self.name,
            self.estimate,
            self.reference,
            self.z,
            if self.pass { "pass" } else { "fail" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_samples_match() {
        let r = mc_compare(&[2.0; 10], 2.0, DEFAULT_Z).unwrap();
        assert_eq!(r.z_score, 0.0);
        assert!(r.pass);
        assert!(mc_compare(&[1.0], 1.0, 4.0).is_err());
    }

    #[test]
    fn shifted_samples_fail() {
        let s: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let se = mc_compare(&s, 0.0, 4.0).unwrap().stderr;
        let shifted: Vec<f64> = s.iter().map(|x| x + 100.0 * se).collect();
        assert!(!mc_compare(&shifted, 0.0, 4.0).unwrap().pass);
    }

    #[test]
    fn rates() {
        let h = [1.0, 0.5, 0.25];
        assert!((convergence_rate(&[1.0, 0.5, 0.25], &h).unwrap() - 1.0).abs() < 1e-12);
        assert!((convergence_rate(&[1.0, 0.25, 0.0625], &h).unwrap() - 2.0).abs() < 1e-12);
        assert!(convergence_rate(&[1.0, 0.0, 0.1], &h).is_err());
    }

    #[test]
    fn line_format() {
        let c = Check::relative("x", 1.0, 1.0, 0.1);
        assert_eq!(c.line(), "CHECK x estimate=1.000000000e0 ref=1.000000000e0 z=0.0000 verdict=pass");
    }

    proptest! {
        #[test]
        fn z_is_scale_equivariant(xs in proptest::collection::vec(-10.0f64..10.0, 3..40), c in 0.01f64..100.0, r in -5.0f64..5.0) {
            let a = mc_compare(&xs, r, 4.0).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            let b = mc_compare(&scaled, c * r, 4.0).unwrap();
            if a.z_score.is_finite() {
                prop_assert!((a.z_score - b.z_score).abs() <= 1e-8 * (1.0 + a.z_score.abs()));
            }
        }

        #[test]
        fn noisy_geometric_rate(p in 0.5f64..3.0, noise in proptest::collection::vec(-0.05f64..0.05, 6)) {
            let h: Vec<f64> = (0..6).map(|i| 0.5f64.powi(i)).collect();
            let e: Vec<f64> = h.iter().zip(&noise).map(|(h, n)| h.powf(p) * n.exp()).collect();
            prop_assert!((convergence_rate(&e, &h).unwrap() - p).abs() < 0.2);
        }
    }
}
