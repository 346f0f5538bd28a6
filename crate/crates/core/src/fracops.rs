//! Right-sided fractional integrals and derivatives on [0, T], the K* transform
//! in both Hurst regimes, and the M / |M| inner products.
//!
//! Sampled functions are piecewise linear (or piecewise constant) between grid
//! nodes. All operators use product integration: the power-law weight is
//! integrated exactly against each linear piece, so the only discretisation
//! error comes from interpolating the input.

use crate::error::{domain, Error, Result};
use crate::fbm_core::{b_h_constant, cov, fgn_autocov, kappa, Hurst, Regime, TimeGrid};
use crate::par;
use crate::quad::{cell_rule, gauss_legendre};
use nalgebra::{DMatrix, Matrix4, Vector4};
use statrs::function::gamma::gamma;
use std::io::{BufRead, Write};

/// Interpolation between nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    /// Linear between one-sided node values.
    Linear,
    /// Right-continuous steps: row i is the value on [t_i, t_{i+1}).
    Step,
}

/// A function [0, T] → R^m sampled on a [`TimeGrid`].
///
/// In `Linear` mode an optional matrix of left limits allows jumps at nodes;
/// the value stored at a node is the right limit (at T it is the left limit).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: TimeGrid,
    values: DMatrix<f64>,
    interp: Interp,
    left: Option<DMatrix<f64>>,
}

impl SampledFunction {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>, interp: Interp) -> Result<Self> {
        if values.nrows() != grid.n() + 1 {
            return domain(format!("expected {} rows, got {}", grid.n() + 1, values.nrows()));
        }
        if values.ncols() == 0 {
            return domain("sampled function needs at least one component");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("sampled function has non-finite values");
        }
        Ok(SampledFunction { grid, values, interp, left: None })
    }

    /// Linear interpolant of `f` evaluated at the nodes.
    pub fn from_fn(grid: TimeGrid, m: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = DMatrix::zeros(grid.n() + 1, m);
        for j in 0..=grid.n() {
            let v = f(grid.node(j));
            if v.len() != m {
                return domain("component count mismatch");
            }
            for c in 0..m {
                values[(j, c)] = v[c];
            }
        }
        SampledFunction::new(grid, values, Interp::Linear)
    }

    /// Scalar linear interpolant of `f`.
    pub fn scalar(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = DMatrix::from_fn(grid.n() + 1, 1, |j, _| f(grid.node(j)));
        SampledFunction::new(grid, values, Interp::Linear)
    }

    pub fn zeros(grid: TimeGrid, m: usize) -> Self {
        SampledFunction { grid, values: DMatrix::zeros(grid.n() + 1, m.max(1)), interp: Interp::Linear, left: None }
    }

    /// Attaches left limits at nodes (Linear mode only).
    pub fn with_left_limits(mut self, left: DMatrix<f64>) -> Result<Self> {
        if self.interp != Interp::Linear {
            return domain("left limits only apply to linear interpolation");
        }
        if left.shape() != self.values.shape() || left.iter().any(|v| !v.is_finite()) {
            return domain("left-limit matrix has the wrong shape or non-finite entries");
        }
        self.left = Some(left);
        Ok(self)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    /// Component `c` as a scalar function.
    pub fn column(&self, c: usize) -> SampledFunction {
        SampledFunction {
            grid: self.grid,
            values: self.values.columns(c, 1).into_owned(),
            interp: self.interp,
            left: self.left.as_ref().map(|l| l.columns(c, 1).into_owned()),
        }
    }

    /// Value at the start of cell i (right limit at t_i).
    pub fn cell_start(&self, i: usize, c: usize) -> f64 {
        self.values[(i, c)]
    }

    /// Value at the end of cell i (left limit at t_{i+1}).
    pub fn cell_end(&self, i: usize, c: usize) -> f64 {
        match self.interp {
            Interp::Step => self.values[(i, c)],
            Interp::Linear => match &self.left {
                Some(l) => l[(i + 1, c)],
                None => self.values[(i + 1, c)],
            },
        }
    }

    /// Left limit at node j ≥ 1.
    pub fn left_limit(&self, j: usize, c: usize) -> f64 {
        self.cell_end(j - 1, c)
    }

    fn cells(&self, c: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.n();
        ((0..n).map(|i| self.cell_start(i, c)).collect(), (0..n).map(|i| self.cell_end(i, c)).collect())
    }

    fn continuous_at(&self, j: usize) -> bool {
        match self.interp {
            Interp::Step => false,
            Interp::Linear => match &self.left {
                None => true,
                Some(l) => (0..self.dim()).all(|c| l[(j, c)] == self.values[(j, c)]),
            },
        }
    }

    /// Right-continuous evaluation of component `c` (left limit at T).
    pub fn eval(&self, t: f64, c: usize) -> f64 {
        let n = self.grid.n();
        let h = self.grid.h();
        if t >= self.grid.t_end() {
            return self.cell_end(n - 1, c);
        }
        let i = ((t / h).floor().max(0.0) as usize).min(n - 1);
        let x = (t - self.grid.node(i)) / h;
        let (a, b) = (self.cell_start(i, c), self.cell_end(i, c));
        a + x * (b - a)
    }

    pub fn scaled(&self, a: f64) -> SampledFunction {
        SampledFunction {
            grid: self.grid,
            values: &self.values * a,
            interp: self.interp,
            left: self.left.as_ref().map(|l| l * a),
        }
    }

    /// Pointwise sum; both inputs must share grid, dimension and interpolation.
    pub fn add(&self, other: &SampledFunction) -> Result<SampledFunction> {
        if self.grid != other.grid || self.dim() != other.dim() || self.interp != other.interp {
            return domain("sum needs matching grid, dimension and interpolation");
        }
        let left = match (&self.left, &other.left) {
            (None, None) => None,
            _ => Some(self.left_matrix() + other.left_matrix()),
        };
        Ok(SampledFunction { grid: self.grid, values: &self.values + &other.values, interp: self.interp, left })
    }

    fn left_matrix(&self) -> DMatrix<f64> {
        self.left.clone().unwrap_or_else(|| self.values.clone())
    }

    /// ∫_0^T [f(t), g(t)] dt for the interpolants (exact).
    pub fn l2_inner(&self, other: &SampledFunction) -> Result<f64> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return domain("inner product needs matching grid and dimension");
        }
        let h = self.grid.h();
        let g2 = gauss_legendre(2);
        let mut s = 0.0;
        for c in 0..self.dim() {
            for i in 0..self.grid.n() {
                let (a0, a1) = (self.cell_start(i, c), self.cell_end(i, c));
                let (b0, b1) = (other.cell_start(i, c), other.cell_end(i, c));
                for (x, w) in g2.x.iter().zip(&g2.w) {
                    s += w * h * (a0 + x * (a1 - a0)) * (b0 + x * (b1 - b0));
                }
            }
        }
        Ok(s)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).expect("same shape").max(0.0).sqrt()
    }

    /// CSV with header `t,v_0,...,v_{m-1}`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for c in 0..self.dim() {
            write!(w, ",v_{c}")?;
        }
        writeln!(w)?;
        for j in 0..=self.grid.n() {
            write!(w, "{:.16e}", self.grid.node(j))?;
            for c in 0..self.dim() {
                write!(w, ",{:.16e}", self.values[(j, c)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the CSV layout of [`SampledFunction::write_csv`]; nodes must be uniform from 0.
    pub fn read_csv<R: BufRead>(r: R, interp: Interp) -> Result<SampledFunction> {
        let mut lines = r.lines();
        let header = match lines.next() {
            Some(Ok(h)) => h,
            _ => return domain("empty CSV input"),
        };
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols[0].trim() != "t" {
            return domain("CSV header must start with t and name at least one value column");
        }
        let m = cols.len() - 1;
        let mut ts = Vec::new();
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Domain(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Domain(format!("line {}: {e}", ln + 2)))?;
            if vals.len() != m + 1 {
                return domain(format!("line {}: expected {} fields", ln + 2, m + 1));
            }
            ts.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        if ts.len() < 2 || ts[0].abs() > 1e-12 {
            return domain("CSV must have at least two rows starting at t = 0");
        }
        let n = ts.len() - 1;
        let grid = TimeGrid::new(ts[n], n)?;
        for (j, t) in ts.iter().enumerate() {
            if (t - grid.node(j)).abs() > 1e-9 * grid.t_end() {
                return domain("CSV time column is not a uniform grid");
            }
        }
        let values = DMatrix::from_fn(n + 1, m, |j, c| rows[j][c]);
        SampledFunction::new(grid, values, interp)
    }
}

/// Step function Σ x_i 1_{[t_i, t_{i+1})} with R^m-valued pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleFunction {
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
}

impl SimpleFunction {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 || pieces.len() != breakpoints.len() - 1 {
            return domain("need k+1 breakpoints for k pieces, k ≥ 1");
        }
        if breakpoints[0] != 0.0 {
            return domain("first breakpoint must be 0");
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return domain("breakpoints must be finite and strictly increasing");
        }
        let m = pieces[0].len();
        if m == 0 || pieces.iter().any(|p| p.len() != m || p.iter().any(|v| !v.is_finite())) {
            return domain("pieces must share a positive dimension and be finite");
        }
        Ok(SimpleFunction { breakpoints, pieces })
    }

    pub fn scalar(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        SimpleFunction::new(breakpoints, values.into_iter().map(|v| vec![v]).collect())
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    pub fn t_end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        match self.breakpoints.windows(2).position(|w| t >= w[0] && t < w[1]) {
            Some(i) => self.pieces[i].clone(),
            None => vec![0.0; self.dim()],
        }
    }

    /// a·f + b·g on the union of breakpoints.
    pub fn lin_comb(a: f64, f: &SimpleFunction, b: f64, g: &SimpleFunction) -> Result<SimpleFunction> {
        if f.dim() != g.dim() {
            return domain("dimension mismatch");
        }
        let mut bp: Vec<f64> = f.breakpoints.iter().chain(&g.breakpoints).cloned().collect();
        bp.sort_by(|x, y| x.total_cmp(y));
        bp.dedup();
        let pieces = bp
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                f.eval(mid).iter().zip(g.eval(mid)).map(|(x, y)| a * x + b * y).collect()
            })
            .collect();
        SimpleFunction::new(bp, pieces)
    }

    /// Step-mode sampled function; breakpoints must be nodes of `grid`.
    pub fn to_sampled(&self, grid: TimeGrid) -> Result<SampledFunction> {
        if self.t_end() > grid.t_end() * (1.0 + 1e-12) {
            return domain("simple function extends beyond the grid horizon");
        }
        let idx: Vec<usize> = self.breakpoints.iter().map(|&b| grid.index_of(b)).collect::<Result<_>>()?;
        let m = self.dim();
        let mut values = DMatrix::zeros(grid.n() + 1, m);
        for (p, w) in idx.windows(2).enumerate() {
            for i in w[0]..w[1] {
                for c in 0..m {
                    values[(i, c)] = self.pieces[p][c];
                }
            }
        }
        for c in 0..m {
            values[(grid.n(), c)] = values[(grid.n() - 1, c)];
        }
        SampledFunction::new(grid, values, Interp::Step)
    }
}

/// Operator values at the nodes and at the points of [`cell_rule`] inside
/// every cell, which is what the L² pairings below integrate against.
#[derive(Debug, Clone)]
pub struct Image {
    grid: TimeGrid,
    nodes: DMatrix<f64>,
    inner: DMatrix<f64>,
}

impl Image {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.nodes.ncols()
    }

    pub fn nodes(&self) -> &DMatrix<f64> {
        &self.nodes
    }

    /// Value at offset `cell_rule().x[q]` inside cell i.
    pub fn inner_value(&self, i: usize, q: usize, c: usize) -> f64 {
        self.inner[(i * cell_rule().len() + q, c)]
    }

    pub fn to_function(&self) -> SampledFunction {
        SampledFunction { grid: self.grid, values: self.nodes.clone(), interp: Interp::Linear, left: None }
    }

    pub fn scaled(&self, a: f64) -> Image {
        Image { grid: self.grid, nodes: &self.nodes * a, inner: &self.inner * a }
    }

    fn column_inner(&self, a: usize, other: &Image, b: usize) -> f64 {
        let rule = cell_rule();
        let q = rule.len();
        let h = self.grid.h();
        let mut s = 0.0;
        for i in 0..self.grid.n() {
            let mut cs = 0.0;
            for k in 0..q {
                cs += rule.w[k] * self.inner[(i * q + k, a)] * other.inner[(i * q + k, b)];
            }
            s += cs;
        }
        s * h
    }

    /// ∫_0^T [u(t), v(t)] dt.
    pub fn l2_inner(&self, other: &Image) -> Result<f64> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return domain("images must share grid and dimension");
        }
        Ok((0..self.dim()).map(|c| self.column_inner(c, other, c)).sum())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        (0..self.dim()).map(|c| self.column_inner(c, self, c)).sum()
    }

    /// Matrix of component pairings ∫ u_a u_b dt.
    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut g = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v = self.column_inner(a, self, b);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// Relative L² distance ‖self − other‖ / ‖other‖.
    pub fn rel_l2_distance(&self, other: &Image) -> Result<f64> {
        let d = Image { grid: self.grid, nodes: &self.nodes - &other.nodes, inner: &self.inner - &other.inner };
        if self.grid != other.grid || self.dim() != other.dim() {
            return domain("images must share grid and dimension");
        }
        Ok((d.l2_norm_sq() / other.l2_norm_sq()).sqrt())
    }

    fn from_columns(grid: TimeGrid, cols: Vec<(Vec<f64>, Vec<f64>)>) -> Image {
        let n = grid.n();
        let q = cell_rule().len();
        let m = cols.len();
        let nodes = DMatrix::from_fn(n + 1, m, |j, c| cols[c].0[j]);
        let inner = DMatrix::from_fn(n * q, m, |r, c| cols[c].1[r]);
        Image { grid, nodes, inner }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kernel {
    /// u^{β−1}
    Power(f64),
    /// u^{−α−1} in the Marchaud difference form
    Marchaud(f64),
}

/// Toeplitz product-integration weights for every sub-cell offset θ.
struct Plan {
    kernel: Kernel,
    n: usize,
    h: f64,
    thetas: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

const CLOSED_FORM_CELLS: f64 = 32.0;

impl Plan {
    fn new(kernel: Kernel, grid: TimeGrid) -> Plan {
        let mut thetas = vec![0.0];
        thetas.extend(cell_rule().x.iter().cloned());
        let n = grid.n();
        let h = grid.h();
        let (a, b) = thetas.iter().map(|&th| far_weights(kernel, th, n, h)).unzip();
        Plan { kernel, n, h, thetas, a, b }
    }

    /// Unnormalised operator value at t_j + θ h.
    ///
    /// Power(β): ∫_t^T (s−t)^{β−1} f(s) ds.
    /// Marchaud(α): f(t)(T−t)^{−α} + α ∫_t^T (f(t) − f(s)) (s−t)^{−α−1} ds.
    fn raw(&self, qi: usize, j: usize, fs: &[f64], fe: &[f64]) -> f64 {
        let th = self.thetas[qi];
        let w = (1.0 - th) * self.h;
        let ft = fs[j] + th * (fe[j] - fs[j]);
        let d = fe[j] - ft;
        let (wa, wb) = (&self.a[qi], &self.b[qi]);
        let mut far = 0.0;
        for k in 1..(self.n - j) {
            far += wa[k - 1] * fs[j + k] + wb[k - 1] * fe[j + k];
        }
        match self.kernel {
            Kernel::Power(beta) => {
                let wb_ = w.powf(beta);
                ft * wb_ / beta + d * wb_ / (beta + 1.0) + far
            }
            Kernel::Marchaud(alpha) => {
                let wa_ = w.powf(-alpha);
                ft * wa_ - alpha * d * wa_ / (1.0 - alpha) - alpha * far
            }
        }
    }
}

fn far_weights(kernel: Kernel, theta: f64, n: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let gl = gauss_legendre(6);
    let mut va = Vec::with_capacity(n.saturating_sub(1));
    let mut vb = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let off = k as f64 - theta;
        let lo = off * h;
        let hi = lo + h;
        let (m0, m1) = if off < CLOSED_FORM_CELLS {
            match kernel {
                Kernel::Power(b) => {
                    let m0 = (hi.powf(b) - lo.powf(b)) / b;
                    let m1 = (hi.powf(b + 1.0) - lo.powf(b + 1.0)) / (b + 1.0) - lo * m0;
                    (m0, m1 / h)
                }
                Kernel::Marchaud(a) => {
                    let m0 = (lo.powf(-a) - hi.powf(-a)) / a;
                    let m1 = (hi.powf(1.0 - a) - lo.powf(1.0 - a)) / (1.0 - a) - lo * m0;
                    (m0, m1 / h)
                }
            }
        } else {
            let mut m0 = 0.0;
            let mut m1 = 0.0;
            for (x, w) in gl.x.iter().zip(&gl.w) {
                let u = lo + x * h;
                let kv = match kernel {
                    Kernel::Power(b) => u.powf(b - 1.0),
                    Kernel::Marchaud(a) => u.powf(-a - 1.0),
                };
                m0 += w * h * kv;
                m1 += w * h * kv * x;
            }
            (m0, m1)
        };
        va.push(m0 - m1);
        vb.push(m1);
    }
    (va, vb)
}

/// Evaluates `point(qi, j)` at every node j < n (qi = 0) and every rule point.
/// Node n is filled by `last`.
fn eval_points(n: usize, point: impl Fn(usize, usize) -> f64 + Sync + Send) -> (Vec<f64>, Vec<f64>) {
    let q = cell_rule().len();
    let per_cell: Vec<Vec<f64>> = par::map_range(n, |j| (0..=q).map(|qi| point(qi, j)).collect());
    let mut nodes = Vec::with_capacity(n + 1);
    let mut inner = Vec::with_capacity(n * q);
    for v in &per_cell {
        nodes.push(v[0]);
        inner.extend_from_slice(&v[1..]);
    }
    nodes.push(f64::NAN);
    (nodes, inner)
}

fn extrapolate_end(v: &mut [f64]) {
    let n = v.len() - 1;
    v[n] = if n >= 2 { 2.0 * v[n - 1] - v[n - 2] } else { v[n - 1] };
}

fn extrapolate_start(v: &mut [f64]) {
    v[0] = if v.len() >= 3 { 2.0 * v[1] - v[2] } else { v[1] };
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("order must lie in (0,1), got {alpha}"));
    }
    Ok(())
}

/// I^α_{T−} f at the nodes.
pub fn frac_integral(f: &SampledFunction, alpha: f64) -> Result<SampledFunction> {
    check_alpha(alpha)?;
    let grid = f.grid;
    let plan = Plan::new(Kernel::Power(alpha), grid);
    let g = gamma(alpha);
    let n = grid.n();
    let mut values = DMatrix::zeros(n + 1, f.dim());
    for c in 0..f.dim() {
        let (fs, fe) = f.cells(c);
        let col: Vec<f64> = par::map_range(n, |j| plan.raw(0, j, &fs, &fe) / g);
        for j in 0..n {
            values[(j, c)] = col[j];
        }
    }
    SampledFunction::new(grid, values, Interp::Linear)
}

/// Coefficients (c, d) of (T−t)^α and (T−t)^{α+1} fitted on the last four nodes,
/// together with a constant and a linear term.
fn endpoint_power_fit(f: &SampledFunction, c: usize, alpha: f64) -> Option<(f64, f64)> {
    let n = f.grid.n();
    if n < 8 || f.interp != Interp::Linear || !(n - 3..n).all(|j| f.continuous_at(j)) {
        return None;
    }
    let h = f.grid.h();
    let mut a = Matrix4::zeros();
    let mut y = Vector4::zeros();
    for k in 0..4 {
        let r = k as f64 * h;
        a[(k, 0)] = 1.0;
        a[(k, 1)] = r;
        a[(k, 2)] = r.powf(alpha);
        a[(k, 3)] = r.powf(alpha + 1.0);
        y[k] = if k == 0 { f.left_limit(n, c) } else { f.values[(n - k, c)] };
    }
    let sol = a.lu().solve(&y)?;
    Some((sol[2], sol[3]))
}

/// D^α_{T−} applied columnwise, returning node and rule-point values.
fn marchaud_columns(f: &SampledFunction, alpha: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let grid = f.grid;
    let n = grid.n();
    let h = grid.h();
    let t_end = grid.t_end();
    let plan = Plan::new(Kernel::Marchaud(alpha), grid);
    let g = gamma(1.0 - alpha);
    (0..f.dim())
        .map(|c| {
            let (mut fs, mut fe) = f.cells(c);
            let fit = endpoint_power_fit(f, c, alpha);
            if let Some((p, q)) = fit {
                let sing = |t: f64| {
                    let r = (t_end - t).max(0.0);
                    p * r.powf(alpha) + q * r.powf(alpha + 1.0)
                };
                for i in 0..n {
                    fs[i] -= sing(grid.node(i));
                    fe[i] -= sing(grid.node(i + 1));
                }
            }
            let (mut nodes, mut inner) = eval_points(n, |qi, j| plan.raw(qi, j, &fs, &fe) / g);
            extrapolate_end(&mut nodes);
            if let Some((p, q)) = fit {
                let add = |t: f64| p * gamma(alpha + 1.0) + q * gamma(alpha + 2.0) * (t_end - t);
                for (j, v) in nodes.iter_mut().enumerate() {
                    *v += add(grid.node(j));
                }
                let rule = cell_rule();
                for i in 0..n {
                    for (k, x) in rule.x.iter().enumerate() {
                        inner[i * rule.len() + k] += add(grid.node(i) + x * h);
                    }
                }
            }
            (nodes, inner)
        })
        .collect()
}

/// D^α_{T−} f at the nodes; the value at T is a continuous extension.
pub fn frac_derivative(f: &SampledFunction, alpha: f64) -> Result<SampledFunction> {
    Ok(frac_derivative_image(f, alpha)?.to_function())
}

/// D^α_{T−} f at nodes and rule points (for L² norms).
pub fn frac_derivative_image(f: &SampledFunction, alpha: f64) -> Result<Image> {
    check_alpha(alpha)?;
    Ok(Image::from_columns(f.grid, marchaud_columns(f, alpha)))
}

/// Cells with index below this use the decomposition that keeps the
/// p^{±|H−1/2|} weight out of the interpolant.
const NEAR_ZERO_CELLS: usize = 32;

#[derive(Clone, Copy)]
enum Weighted {
    /// ∫_t^T f(s)(1 − (t/s)^α)(s − t)^{−α−1} ds
    Low(f64),
    /// ∫_t^T f(s)(s^β − t^β)(s − t)^{β−1} ds
    High(f64),
}

/// Calls `piece(a, b, cell, first)` on a partition of [t, T] that is graded
/// geometrically away from t and never straddles a grid node.
fn for_each_piece(t: f64, j: usize, grid: TimeGrid, mut piece: impl FnMut(f64, f64, usize, bool)) {
    let n = grid.n();
    let h = grid.h();
    let w = grid.node(j + 1) - t;
    let d0 = if t > 0.0 { t.min(w) } else { w };
    piece(t, t + d0, j, true);
    let mut cur = t + d0;
    let mut next_geo = t + 2.0 * d0;
    let geo_limit = 16.0 * h;
    for i in j..n {
        let hi = grid.node(i + 1);
        if hi <= cur {
            continue;
        }
        while next_geo - t <= geo_limit && next_geo < hi {
            if next_geo > cur {
                piece(cur, next_geo, i, false);
                cur = next_geo;
            }
            next_geo = t + 2.0 * (next_geo - t);
        }
        piece(cur, hi, i, false);
        cur = hi;
    }
}

fn piece_points(a: f64, b: f64, t: f64) -> &'static crate::quad::Rule {
    if b - a <= 0.125 * (a - t) {
        gauss_legendre(3)
    } else {
        gauss_legendre(8)
    }
}

fn weighted_tail(t: f64, j: usize, grid: TimeGrid, fs: &[f64], fe: &[f64], kind: Weighted) -> f64 {
    let h = grid.h();
    let f_at = |s: f64, i: usize| {
        let x = (s - grid.node(i)) / h;
        fs[i] + x * (fe[i] - fs[i])
    };
    let mut total = 0.0;
    let g10 = gauss_legendre(10);
    for_each_piece(t, j, grid, |a, b, i, first| {
        match kind {
            Weighted::Low(al) => {
                let factor = |u: f64| -(-al * (u / t).ln_1p()).exp_m1();
                if first {
                    let ymax = (b - a).powf(1.0 - al);
                    total += g10.integrate(0.0, ymax, |y| {
                        let u = y.powf(1.0 / (1.0 - al));
                        f_at(t + u, i) * factor(u) / (u * (1.0 - al))
                    });
                } else {
                    total += piece_points(a, b, t).integrate(a, b, |s| {
                        let u = s - t;
                        f_at(s, i) * factor(u) * u.powf(-al - 1.0)
                    });
                }
            }
            Weighted::High(be) => {
                let tb = t.powf(be);
                let rule = if first { g10 } else { piece_points(a, b, t) };
                total += rule.integrate(a, b, |s| {
                    let u = s - t;
                    f_at(s, i) * tb * (be * (u / t).ln_1p()).exp_m1() * u.powf(be - 1.0)
                });
            }
        }
    });
    total
}

fn kstar_column(f: &SampledFunction, c: usize, hurst: Hurst, plan: &Plan) -> (Vec<f64>, Vec<f64>) {
    let grid = f.grid;
    let n = grid.n();
    let h = grid.h();
    let (fs, fe) = f.cells(c);
    if fs.iter().chain(&fe).all(|&v| v == 0.0) {
        return (vec![0.0; n + 1], vec![0.0; n * cell_rule().len()]);
    }
    let b = b_h_constant(hurst);
    let hv = hurst.value();
    let (nodes, inner) = match hurst.regime() {
        Regime::High => {
            let be = hv - 0.5;
            let gs: Vec<f64> = (0..n).map(|i| grid.node(i).powf(be) * fs[i]).collect();
            let ge: Vec<f64> = (0..n).map(|i| grid.node(i + 1).powf(be) * fe[i]).collect();
            let (mut nodes, inner) = eval_points(n, |qi, j| {
                let t = grid.node(j) + plan.thetas[qi] * h;
                if t <= 0.0 {
                    return f64::NAN;
                }
                if j < NEAR_ZERO_CELLS {
                    b * (plan.raw(qi, j, &fs, &fe) + t.powf(-be) * weighted_tail(t, j, grid, &fs, &fe, Weighted::High(be)))
                } else {
                    b * t.powf(-be) * plan.raw(qi, j, &gs, &ge)
                }
            });
            nodes[n] = 0.0;
            extrapolate_start(&mut nodes);
            (nodes, inner)
        }
        Regime::Low => {
            let al = 0.5 - hv;
            let gs: Vec<f64> =
                (0..n).map(|i| if i == 0 { 0.0 } else { grid.node(i).powf(-al) * fs[i] }).collect();
            let ge: Vec<f64> = (0..n).map(|i| grid.node(i + 1).powf(-al) * fe[i]).collect();
            let (mut nodes, inner) = eval_points(n, |qi, j| {
                let t = grid.node(j) + plan.thetas[qi] * h;
                if t <= 0.0 {
                    return f64::NAN;
                }
                if j < NEAR_ZERO_CELLS {
                    b * (plan.raw(qi, j, &fs, &fe) + al * weighted_tail(t, j, grid, &fs, &fe, Weighted::Low(al)))
                } else {
                    b * t.powf(al) * plan.raw(qi, j, &gs, &ge)
                }
            });
            extrapolate_end(&mut nodes);
            extrapolate_start(&mut nodes);
            (nodes, inner)
        }
    };
    (nodes, inner)
}

fn kstar_plan(hurst: Hurst, grid: TimeGrid) -> Plan {
    let hv = hurst.value();
    match hurst.regime() {
        Regime::High => Plan::new(Kernel::Power(hv - 0.5), grid),
        Regime::Low => Plan::new(Kernel::Marchaud(0.5 - hv), grid),
    }
}

/// K* f at nodes and rule points, applied independently to each component.
///
/// HIGH: b_H t^{1/2−H} ∫_t^T (s−t)^{H−3/2} s^{H−1/2} f(s) ds.
/// LOW: b_H Γ(H+1/2) t^{1/2−H} D^{1/2−H}_{T−}(p^{H−1/2} f)(t).
pub fn kstar_image(f: &SampledFunction, hurst: Hurst) -> Image {
    let plan = kstar_plan(hurst, f.grid);
    let cols = (0..f.dim()).map(|c| kstar_column(f, c, hurst, &plan)).collect();
    Image::from_columns(f.grid, cols)
}

/// K* f at the nodes (values at 0 and, for H < 1/2, at T are continuous extensions).
pub fn kstar(f: &SampledFunction, hurst: Hurst) -> SampledFunction {
    kstar_image(f, hurst).to_function()
}

/// ‖f‖_M computed as ‖K* f‖_{L²}.
pub fn m_norm(f: &SampledFunction, hurst: Hurst) -> f64 {
    kstar_image(f, hurst).l2_norm_sq().max(0.0).sqrt()
}

/// K* f from the kernel-derivative forms, at the nodes only.
///
/// HIGH: ∫_t^T f(s) ∂κ/∂s(s,t) ds; LOW: f(t)κ(T,t) + ∫_t^T (f(s) − f(t)) ∂κ/∂s(s,t) ds.
pub fn kstar_direct_form(f: &SampledFunction, hurst: Hurst) -> SampledFunction {
    let grid = f.grid;
    let n = grid.n();
    let h = grid.h();
    let t_end = grid.t_end();
    let b = b_h_constant(hurst);
    let hv = hurst.value();
    let g16 = gauss_legendre(16);
    let g6 = gauss_legendre(6);
    let mut values = DMatrix::zeros(n + 1, f.dim());
    for c in 0..f.dim() {
        let (fs, fe) = f.cells(c);
        let f_at = |s: f64, i: usize| fs[i] + (s - grid.node(i)) / h * (fe[i] - fs[i]);
        let mut col: Vec<f64> = vec![0.0; n + 1];
        let interior: Vec<f64> = par::map_range(n.saturating_sub(1), |jj| {
            let j = jj + 1;
            let t = grid.node(j);
            match hurst.regime() {
                Regime::High => {
                    let be = hv - 0.5;
                    let first = g16.integrate(0.0, h.powf(be), |v| {
                        let u = v.powf(1.0 / be);
                        f_at(t + u, j) * (1.0 + u / t).powf(be)
                    }) / be;
                    let mut rest = 0.0;
                    for i in j + 1..n {
                        let rule = if i - j < 8 { g16 } else { g6 };
                        rest += rule.integrate(grid.node(i), grid.node(i + 1), |s| {
                            f_at(s, i) * (s - t).powf(be - 1.0) * (s / t).powf(be)
                        });
                    }
                    b * (first + rest)
                }
                Regime::Low => {
                    let al = 0.5 - hv;
                    let ft = fs[j];
                    let slope = (fe[j] - fs[j]) / h;
                    let first = g16.integrate(0.0, h.powf(1.0 - al), |v| {
                        let u = v.powf(1.0 / (1.0 - al));
                        slope * (1.0 + u / t).powf(-al)
                    }) / (1.0 - al);
                    let mut rest = 0.0;
                    for i in j + 1..n {
                        let rule = if i - j < 8 { g16 } else { g6 };
                        rest += rule.integrate(grid.node(i), grid.node(i + 1), |s| {
                            (f_at(s, i) - ft) * (s - t).powf(-al - 1.0) * (s / t).powf(-al)
                        });
                    }
                    ft * kappa(t_end, t, hurst, 2048) - b * al * (first + rest)
                }
            }
        });
        col[1..n].copy_from_slice(&interior);
        match hurst.regime() {
            Regime::High => col[n] = 0.0,
            Regime::Low => extrapolate_end(&mut col),
        }
        extrapolate_start(&mut col);
        for j in 0..=n {
            values[(j, c)] = col[j];
        }
    }
    SampledFunction { grid, values, interp: Interp::Linear, left: None }
}

/// G_f(s) = b_H [ f(s)(T−s)^{H−1/2} + (1/2−H) s^{1/2−H} ∫_s^T (s^{H−1/2}f(s) − t^{H−1/2}f(t)) (t−s)^{H−3/2} dt ]
/// for H < 1/2, at nodes and rule points.
pub fn g_f_form(f: &SampledFunction, hurst: Hurst) -> Result<Image> {
    if hurst.regime() != Regime::Low {
        return domain("G_f is defined for H < 1/2 only");
    }
    let grid = f.grid;
    let n = grid.n();
    let h = grid.h();
    let t_end = grid.t_end();
    let al = 0.5 - hurst.value();
    let b = b_h_constant(hurst);
    let rule = cell_rule();
    let g10 = gauss_legendre(10);
    let cols = (0..f.dim())
        .map(|c| {
            let (fs, fe) = f.cells(c);
            let f_at = |s: f64, i: usize| fs[i] + (s - grid.node(i)) / h * (fe[i] - fs[i]);
            let (mut nodes, inner) = eval_points(n, |qi, j| {
                let th = if qi == 0 { 0.0 } else { rule.x[qi - 1] };
                let s = grid.node(j) + th * h;
                if s <= 0.0 {
                    return f64::NAN;
                }
                let fsv = f_at(s, j);
                let hs = s.powf(-al) * fsv;
                let mut integral = 0.0;
                for_each_piece(s, j, grid, |a, bb, i, first| {
                    if first {
                        let ymax = (bb - a).powf(1.0 - al);
                        integral += g10.integrate(0.0, ymax, |y| {
                            let u = y.powf(1.0 / (1.0 - al));
                            let t = s + u;
                            (hs - t.powf(-al) * f_at(t, i)) / (u * (1.0 - al))
                        });
                    } else {
                        integral += piece_points(a, bb, s).integrate(a, bb, |t| {
                            (hs - t.powf(-al) * f_at(t, i)) * (t - s).powf(-al - 1.0)
                        });
                    }
                });
                b * (fsv * (t_end - s).powf(-al) + al * s.powf(al) * integral)
            });
            extrapolate_end(&mut nodes);
            extrapolate_start(&mut nodes);
            (nodes, inner)
        })
        .collect();
    Ok(Image::from_columns(grid, cols))
}

/// ⟨f, g⟩_M for step functions: Σ_i Σ_j [x_i, y_j] (second difference of R).
pub fn m_inner_simple(f: &SimpleFunction, g: &SimpleFunction, hurst: Hurst) -> Result<f64> {
    if f.dim() != g.dim() {
        return domain("inner product needs equal dimensions");
    }
    let hv = hurst.value();
    let (a, c) = (f.breakpoints(), g.breakpoints());
    let mut s = 0.0;
    for (i, x) in f.pieces().iter().enumerate() {
        for (j, y) in g.pieces().iter().enumerate() {
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            if dot == 0.0 {
                continue;
            }
            let w = cov(a[i + 1], c[j + 1], hv) - cov(a[i + 1], c[j], hv) - cov(a[i], c[j + 1], hv) + cov(a[i], c[j], hv);
            s += dot * w;
        }
    }
    Ok(s)
}

/// Σ_i Σ_k u_i v_k γ(|i−k|) h^{2H}: the exact H(2H−1)∬|s−t|^{2H−2} weight of cell pairs.
fn cell_pair_form(u: &[f64], v: &[f64], hurst: Hurst, h: f64) -> f64 {
    let n = u.len();
    let scale = h.powf(2.0 * hurst.value());
    let gam: Vec<f64> = (0..n).map(|k| fgn_autocov(k, hurst)).collect();
    let rows: Vec<f64> = par::map_range(n, |i| {
        let mut s = 0.0;
        for k in 0..n {
            s += gam[i.abs_diff(k)] * v[k];
        }
        u[i] * s
    });
    rows.iter().sum::<f64>() * scale
}

fn check_high(hurst: Hurst) -> Result<()> {
    if hurst.regime() != Regime::High {
        return domain("this product is defined for H > 1/2 only");
    }
    Ok(())
}

/// H(2H−1) ∫∫ [f(s), g(t)] |s−t|^{2H−2} ds dt, with cell means paired by exact cell weights.
pub fn m_inner_high(f: &SampledFunction, g: &SampledFunction, hurst: Hurst) -> Result<f64> {
    check_high(hurst)?;
    if f.grid != g.grid || f.dim() != g.dim() {
        return domain("inner product needs matching grid and dimension");
    }
    let n = f.grid.n();
    let mut s = 0.0;
    for c in 0..f.dim() {
        let u: Vec<f64> = (0..n).map(|i| 0.5 * (f.cell_start(i, c) + f.cell_end(i, c))).collect();
        let v: Vec<f64> = (0..n).map(|i| 0.5 * (g.cell_start(i, c) + g.cell_end(i, c))).collect();
        s += cell_pair_form(&u, &v, hurst, f.grid.h());
    }
    Ok(s)
}

/// ‖f‖_{|M|} = (H(2H−1) ∫∫ ‖f(s)‖ ‖f(t)‖ |s−t|^{2H−2} ds dt)^{1/2}.
pub fn abs_m_norm(f: &SampledFunction, hurst: Hurst) -> Result<f64> {
    check_high(hurst)?;
    let n = f.grid.n();
    let norm = |vals: Vec<f64>| vals.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = (0..n)
        .map(|i| {
            let a = norm((0..f.dim()).map(|c| f.cell_start(i, c)).collect());
            let b = norm((0..f.dim()).map(|c| f.cell_end(i, c)).collect());
            0.5 * (a + b)
        })
        .collect();
    Ok(cell_pair_form(&u, &u, hurst, f.grid.h()).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

fn reflect_image(im: Image) -> Image {
    let n = im.grid.n();
    let q = cell_rule().len();
    let m = im.dim();
    let nodes = DMatrix::from_fn(n + 1, m, |j, c| im.nodes[(n - j, c)]);
    let inner = DMatrix::from_fn(n * q, m, |r, c| {
        let (i, k) = (r / q, r % q);
        im.inner[((n - 1 - i) * q + (q - 1 - k), c)]
    });
    Image { grid: im.grid, nodes, inner }
}

/// Weyl–Marchaud derivative D^α_± of f extended by zero outside [0, T].
pub fn weyl_marchaud_image(f: &SampledFunction, alpha: f64, side: Side) -> Result<Image> {
    check_alpha(alpha)?;
    match side {
        Side::Minus => Ok(Image::from_columns(f.grid, marchaud_columns(f, alpha))),
        Side::Plus => {
            let r = restrict(f, f.grid.t_end(), true)?;
            Ok(reflect_image(Image::from_columns(f.grid, marchaud_columns(&r, alpha))))
        }
    }
}

/// Node values of [`weyl_marchaud_image`].
pub fn weyl_marchaud(f: &SampledFunction, alpha: f64, side: Side) -> Result<SampledFunction> {
    Ok(weyl_marchaud_image(f, alpha, side)?.to_function())
}

/// 1_{[t_a, t_b]} f for node indices a < b, on the original grid.
pub fn restrict_interval(f: &SampledFunction, a: usize, b: usize) -> Result<SampledFunction> {
    let n = f.grid.n();
    if !(a < b && b <= n) {
        return domain("restriction needs node indices a < b ≤ n");
    }
    let m = f.dim();
    match f.interp {
        Interp::Step => {
            let mut values = DMatrix::zeros(n + 1, m);
            for i in a..b {
                for c in 0..m {
                    values[(i, c)] = f.values[(i, c)];
                }
            }
            for c in 0..m {
                values[(n, c)] = values[(n - 1, c)];
            }
            Ok(SampledFunction { grid: f.grid, values, interp: Interp::Step, left: None })
        }
        Interp::Linear => {
            let mut values = DMatrix::zeros(n + 1, m);
            let mut left = DMatrix::zeros(n + 1, m);
            for c in 0..m {
                for j in a..=b {
                    values[(j, c)] = f.values[(j, c)];
                    left[(j, c)] = if j == 0 { f.values[(0, c)] } else { f.left_limit(j, c) };
                }
                if a > 0 {
                    left[(a, c)] = 0.0;
                }
                if b < n {
                    values[(b, c)] = 0.0;
                }
            }
            SampledFunction::new(f.grid, values, Interp::Linear)?.with_left_limits(left)
        }
    }
}

/// 1_{[0,t]} f, or 1_{[0,t]} f(t − ·) when `reflect` is set; `t` must be a node in (0, T].
pub fn restrict(f: &SampledFunction, t: f64, reflect: bool) -> Result<SampledFunction> {
    let k = f.grid.index_of(t)?;
    if k == 0 {
        return domain("restriction point must be positive");
    }
    let n = f.grid.n();
    if !reflect {
        if k == n {
            return Ok(f.clone());
        }
        return restrict_interval(f, 0, k);
    }
    let m = f.dim();
    match f.interp {
        Interp::Step => {
            let mut values = DMatrix::zeros(n + 1, m);
            for j in 0..k {
                for c in 0..m {
                    values[(j, c)] = f.values[(k - 1 - j, c)];
                }
            }
            for c in 0..m {
                values[(n, c)] = values[(n - 1, c)];
            }
            Ok(SampledFunction { grid: f.grid, values, interp: Interp::Step, left: None })
        }
        Interp::Linear => {
            let mut values = DMatrix::zeros(n + 1, m);
            let mut left = DMatrix::zeros(n + 1, m);
            for c in 0..m {
                let right_at = |i: usize| f.values[(i, c)];
                let left_at = |i: usize| if i == 0 { f.values[(0, c)] } else { f.left_limit(i, c) };
                for j in 0..k {
                    values[(j, c)] = left_at(k - j);
                }
                for j in 1..=k {
                    left[(j, c)] = right_at(k - j);
                }
                left[(0, c)] = values[(0, c)];
                values[(k, c)] = if k == n { right_at(0) } else { 0.0 };
            }
            SampledFunction::new(f.grid, values, Interp::Linear)?.with_left_limits(left)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hh(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn integral_of_constant() {
        let g = grid(64);
        let f = SampledFunction::scalar(g, |_| 2.0).unwrap();
        for alpha in [0.2, 0.5, 0.8] {
            let r = frac_integral(&f, alpha).unwrap();
            for j in 0..=64 {
                let t = g.node(j);
                let exact = 2.0 * (1.0 - t).powf(alpha) / gamma(alpha + 1.0);
                assert!((r.values()[(j, 0)] - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_of_power_is_constant() {
        let g = grid(128);
        let alpha = 0.35;
        let f = SampledFunction::scalar(g, |t| (1.0 - t).powf(alpha) / gamma(alpha + 1.0)).unwrap();
        let d = frac_derivative(&f, alpha).unwrap();
        for j in 0..=128 {
            assert!((d.values()[(j, 0)] - 1.0).abs() < 1e-8, "{j}: {}", d.values()[(j, 0)]);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = grid(32);
        let z = SampledFunction::zeros(g, 2);
        assert!(frac_integral(&z, 0.3).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(frac_derivative(&z, 0.3).unwrap().values().iter().all(|&v| v == 0.0));
        for h in [0.3, 0.7] {
            assert!(kstar(&z, hh(h)).values().iter().all(|&v| v == 0.0));
            assert!(kstar_direct_form(&z, hh(h)).values().iter().all(|&v| v == 0.0));
        }
        assert!(g_f_form(&z, hh(0.3)).unwrap().l2_norm_sq() == 0.0);
        assert_eq!(abs_m_norm(&z, hh(0.7)).unwrap(), 0.0);
    }

    #[test]
    fn kstar_of_constant_matches_kernel() {
        // K*1(t) = κ(T, t)
        let g = grid(256);
        for h in [0.3, 0.75] {
            let k = kstar(&SampledFunction::scalar(g, |_| 1.0).unwrap(), hh(h));
            for j in [16, 64, 200] {
                let t = g.node(j);
                let exact = kappa(1.0, t, hh(h), 8192);
                let v = k.values()[(j, 0)];
                assert!(((v - exact) / exact).abs() < 2e-4, "H={h} t={t}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn kstar_isometry_constant() {
        for h in [0.25, 0.75] {
            let f = SampledFunction::scalar(grid(256), |_| 1.0).unwrap();
            let v = kstar_image(&f, hh(h)).l2_norm_sq();
            assert!((v - 1.0).abs() < 1e-3, "H={h}: {v}");
        }
    }

    #[test]
    fn m_inner_simple_examples() {
        let h = hh(0.75);
        let f = SimpleFunction::scalar(vec![0.0, 1.0], vec![1.0]).unwrap();
        let g = SimpleFunction::scalar(vec![0.0, 2.0], vec![1.0]).unwrap();
        assert!((m_inner_simple(&f, &f, h).unwrap() - 1.0).abs() < 1e-14);
        assert!((m_inner_simple(&f, &g, h).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let x = SimpleFunction::new(vec![0.0, 1.0], vec![vec![1.0, 0.0]]).unwrap();
        let y = SimpleFunction::new(vec![0.0, 1.0], vec![vec![0.0, 3.0]]).unwrap();
        assert_eq!(m_inner_simple(&x, &y, h).unwrap(), 0.0);
    }

    #[test]
    fn abs_m_norm_of_one() {
        for h in [0.6, 0.75, 0.9] {
            let f = SampledFunction::scalar(grid(128), |_| 1.0).unwrap();
            assert!((abs_m_norm(&f, hh(h)).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn restrict_identity_and_reflection() {
        let g = grid(16);
        let f = SampledFunction::scalar(g, |t| 1.0 + t * t).unwrap();
        assert_eq!(restrict(&f, 1.0, false).unwrap(), f);
        let r = restrict(&f, 0.5, true).unwrap();
        // f(0.5 − 0.125) at node 2
        assert!((r.eval(0.125, 0) - (1.0 + 0.375f64.powi(2))).abs() < 1e-14);
        assert_eq!(r.eval(0.75, 0), 0.0);
        assert!((r.left_limit(8, 0) - 1.0).abs() < 1e-14);
        assert!(restrict(&f, 0.3, false).is_err());
    }

    #[test]
    fn simple_to_sampled_step() {
        let g = grid(4);
        let s = SimpleFunction::scalar(vec![0.0, 0.5, 1.0], vec![2.0, -1.0]).unwrap();
        let f = s.to_sampled(g).unwrap();
        assert_eq!(f.interp(), Interp::Step);
        assert_eq!(f.eval(0.3, 0), 2.0);
        assert_eq!(f.eval(0.5, 0), -1.0);
        assert!(SimpleFunction::scalar(vec![0.0, 0.3], vec![1.0]).unwrap().to_sampled(g).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let g = grid(8);
        let f = SampledFunction::from_fn(g, 2, |t| vec![t.sin(), 1.0 / (1.0 + t)]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,v_0,v_1\n"));
        let back = SampledFunction::read_csv(std::io::Cursor::new(buf), Interp::Linear).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn pieces_cover_interval() {
        let g = grid(40);
        for (t, j) in [(1e-9, 0usize), (0.0125, 0), (0.3, 12), (0.97, 38)] {
            let mut cur = t;
            for_each_piece(t, j, g, |a, b, i, _| {
                assert!((a - cur).abs() < 1e-15 && b > a);
                assert!(a >= g.node(i) - 1e-15 && b <= g.node(i + 1) + 1e-15);
                cur = b;
            });
            assert!((cur - 1.0).abs() < 1e-15);
        }
    }
}
